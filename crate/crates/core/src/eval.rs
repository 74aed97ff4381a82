//! Evaluation protocol, binomial confidence intervals, success tables and
//! reward-curve plots.

use std::fmt::Write as _;

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::agents::{to_physical, ActMode, AgentError, Learner, Policy};
use crate::harness::TrainLog;
use crate::percept::{build_observation, ObsScaling};
use crate::rng;
use crate::simcore::{scan, EpisodeState, EpisodeStatus, SimConfig, SimError};
use crate::worldmap::{GridMap, ScenarioRoster};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation setup: {0}")]
    Config(String),
    #[error("roster pair {pair} is infeasible: {reason}")]
    Infeasible { pair: usize, reason: String },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub map_id: String,
    pub map: GridMap,
    pub roster: ScenarioRoster,
    /// Total trials; roster pairs are cycled in order.
    pub trials: usize,
    pub timeout: usize,
    /// Mean action instead of sampling the stochastic policy.
    pub deterministic_policy: bool,
    pub seed: u64,
    pub sim: SimConfig,
    pub scaling: ObsScaling,
}

impl EvalConfig {
    pub fn new(map_id: impl Into<String>, map: GridMap, roster: ScenarioRoster) -> Self {
        let sim = SimConfig::default();
        Self {
            map_id: map_id.into(),
            map,
            roster,
            trials: 500,
            timeout: sim.eval_timeout,
            deterministic_policy: true,
            seed: 0,
            scaling: ObsScaling::Raw,
            sim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub pair: usize,
    pub outcome: EpisodeStatus,
    pub steps: usize,
    /// Distance travelled, meters.
    pub path_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub map_id: String,
    pub records: Vec<TrialRecord>,
    pub successes: usize,
    pub collisions: usize,
    pub timeouts: usize,
    pub ci90: BinomialCi,
    pub ci99: BinomialCi,
}

impl EvalReport {
    fn from_records(map_id: String, mut records: Vec<TrialRecord>) -> Self {
        records.sort_by_key(|r| r.trial);
        let count = |s| records.iter().filter(|r| r.outcome == s).count();
        let (successes, collisions, timeouts) = (
            count(EpisodeStatus::Arrived),
            count(EpisodeStatus::Collided),
            count(EpisodeStatus::TimedOut),
        );
        let n = records.len();
        Self {
            ci90: binomial_ci(successes, n, 0.90).expect("at least one trial"),
            ci99: binomial_ci(successes, n, 0.99).expect("at least one trial"),
            map_id,
            records,
            successes,
            collisions,
            timeouts,
        }
    }

    pub fn trials(&self) -> usize {
        self.records.len()
    }

    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.trials() as f64
    }

    pub fn collision_rate(&self) -> f64 {
        self.collisions as f64 / self.trials() as f64
    }

    pub fn timeout_rate(&self) -> f64 {
        self.timeouts as f64 / self.trials() as f64
    }

    pub fn trials_csv(&self) -> String {
        let mut s = String::from("trial,pair,outcome,steps,path_length\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.trial, r.pair, r.outcome, r.steps, r.path_length
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let pct = |x: f64| format!("{:.1}%", 100.0 * x);
        let ci = |c: &BinomialCi| {
            format!(
                "normal [{}, {}], wilson [{}, {}]",
                pct(c.normal.0),
                pct(c.normal.1),
                pct(c.wilson.0),
                pct(c.wilson.1)
            )
        };
        format!(
            "map {}: {} trials, success {}, collision {}, timeout {}\n  90% CI {}\n  99% CI {}\n",
            self.map_id,
            self.trials(),
            pct(self.success_rate()),
            pct(self.collision_rate()),
            pct(self.timeout_rate()),
            ci(&self.ci90),
            ci(&self.ci99)
        )
    }
}

/// Every roster start must be collision-free and every goal inside free space.
pub fn check_roster(
    map: &GridMap,
    roster: &ScenarioRoster,
    robot_radius: f64,
) -> Result<(), EvalError> {
    if roster.pairs.is_empty() {
        return Err(EvalError::Config("roster is empty".into()));
    }
    for (i, p) in roster.pairs.iter().enumerate() {
        if map.disc_collides(p.start.position(), robot_radius) {
            return Err(EvalError::Infeasible {
                pair: i,
                reason: "start overlaps an obstacle".into(),
            });
        }
        let free = map
            .world_to_cell(p.goal)
            .is_some_and(|c| map.cell(c) == crate::worldmap::Cell::Free);
        if !free {
            return Err(EvalError::Infeasible {
                pair: i,
                reason: "goal lies in an occupied cell or off the map".into(),
            });
        }
    }
    Ok(())
}

fn run_trials<F>(cfg: &EvalConfig, mut act: F) -> Result<EvalReport, EvalError>
where
    F: FnMut(&[f64], usize) -> Result<[f64; 2], EvalError>,
{
    if cfg.trials == 0 {
        return Err(EvalError::Config("trials must be >= 1".into()));
    }
    cfg.sim.validate().map_err(EvalError::Config)?;
    check_roster(&cfg.map, &cfg.roster, cfg.sim.robot_radius)?;
    let n_pairs = cfg.roster.pairs.len();
    let mut records = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let pair = trial % n_pairs;
        let p = cfg.roster.pairs[pair];
        let mut ep = EpisodeState::new(p.start, p.goal, cfg.timeout);
        let mut obs = build_observation(&ep, &scan(&cfg.map, &ep.robot, cfg.sim.max_range)?)
            .to_vec(cfg.scaling);
        let mut path_length = 0.0;
        while !ep.status.is_terminal() {
            let a = act(&obs, trial)?;
            let before = ep.robot.pose.position();
            ep.step(to_physical(a), &cfg.sim, &cfg.map)?;
            path_length += before.distance(&ep.robot.pose.position());
            obs = build_observation(&ep, &scan(&cfg.map, &ep.robot, cfg.sim.max_range)?)
                .to_vec(cfg.scaling);
        }
        records.push(TrialRecord {
            trial,
            pair,
            outcome: ep.status,
            steps: ep.step_count,
            path_length,
        });
    }
    Ok(EvalReport::from_records(cfg.map_id.clone(), records))
}

/// Runs the frozen deterministic policy on every trial.
pub fn run_eval<P: Policy + ?Sized>(policy: &P, cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    run_trials(cfg, |obs, _| Ok(policy.action(obs)?))
}

/// Like [`run_eval`], but samples the learner's exploration policy from a
/// per-trial stream when `deterministic_policy` is off.
pub fn run_eval_learner(learner: &Learner, cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    if cfg.deterministic_policy {
        return run_eval(learner, cfg);
    }
    let mut current = usize::MAX;
    let mut r = rng::stream(cfg.seed, rng::Stream::Eval);
    run_trials(cfg, |obs, trial| {
        if trial != current {
            current = trial;
            r = rng::sub_stream(cfg.seed, (1u64 << 32) + trial as u64);
        }
        Ok(learner.act(obs, ActMode::Explore, &mut r)?)
    })
}

/// Two-sided binomial confidence interval in both common forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinomialCi {
    pub successes: usize,
    pub trials: usize,
    pub confidence: f64,
    /// `p +- z sqrt(p(1-p)/n)`, clipped to `[0, 1]`.
    pub normal: (f64, f64),
    pub wilson: (f64, f64),
}

/// Standard-normal quantile `z` with `P(|Z| <= z) = confidence`.
pub fn two_sided_z(confidence: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + confidence / 2.0)
}

pub fn binomial_ci(
    successes: usize,
    trials: usize,
    confidence: f64,
) -> Result<BinomialCi, EvalError> {
    if trials == 0 {
        return Err(EvalError::Config(
            "confidence interval needs at least one trial".into(),
        ));
    }
    if successes > trials {
        return Err(EvalError::Config(format!(
            "{successes} successes out of {trials} trials"
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(EvalError::Config(format!(
            "confidence {confidence} outside (0, 1)"
        )));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = two_sided_z(confidence);
    let half = z * (p * (1.0 - p) / n).sqrt();
    let normal = ((p - half).max(0.0), (p + half).min(1.0));
    let z2 = z * z;
    let centre = p + z2 / (2.0 * n);
    let spread = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let denom = 1.0 + z2 / n;
    let wilson = (
        ((centre - spread) / denom).max(0.0),
        ((centre + spread) / denom).min(1.0),
    );
    Ok(BinomialCi {
        successes,
        trials,
        confidence,
        normal,
        wilson,
    })
}

/// One cell of a success table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableCell {
    pub map: String,
    pub method: String,
    pub success_rate: f64,
}

/// Maps as rows, methods as columns, percentages at one decimal.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessTable {
    pub maps: Vec<String>,
    pub methods: Vec<String>,
    /// Rounded percentages, `None` where a method was not run on a map.
    pub cells: Vec<Vec<Option<f64>>>,
    pub best: Vec<Vec<bool>>,
}

fn round_pct(rate: f64) -> f64 {
    (rate * 1000.0).round() / 10.0
}

pub fn emit_success_table(cells: &[TableCell]) -> Result<SuccessTable, EvalError> {
    if cells.is_empty() {
        return Err(EvalError::Config(
            "success table needs at least one report".into(),
        ));
    }
    let mut maps: Vec<String> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    for c in cells {
        if !maps.contains(&c.map) {
            maps.push(c.map.clone());
        }
        if !methods.contains(&c.method) {
            methods.push(c.method.clone());
        }
    }
    let mut grid = vec![vec![None; methods.len()]; maps.len()];
    for c in cells {
        let r = maps.iter().position(|m| *m == c.map).expect("collected");
        let k = methods
            .iter()
            .position(|m| *m == c.method)
            .expect("collected");
        grid[r][k] = Some(round_pct(c.success_rate));
    }
    Ok(SuccessTable::from_grid(maps, methods, grid))
}

impl SuccessTable {
    fn from_grid(maps: Vec<String>, methods: Vec<String>, cells: Vec<Vec<Option<f64>>>) -> Self {
        let best = cells
            .iter()
            .map(|row| {
                let top = row
                    .iter()
                    .flatten()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                row.iter().map(|c| *c == Some(top)).collect()
            })
            .collect();
        Self {
            maps,
            methods,
            cells,
            best,
        }
    }

    /// `map,<method>...` with percentage values; empty where absent.
    pub fn to_csv(&self) -> String {
        let mut s = format!("map,{}\n", self.methods.join(","));
        for (m, row) in self.maps.iter().zip(&self.cells) {
            s.push_str(m);
            for c in row {
                s.push(',');
                if let Some(v) = c {
                    let _ = write!(s, "{v:.1}");
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or("empty table")?
            .split(',')
            .map(String::from)
            .collect();
        if header.first().map(String::as_str) != Some("map") {
            return Err("first column must be `map`".into());
        }
        let methods = header[1..].to_vec();
        let (mut maps, mut cells) = (Vec::new(), Vec::new());
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != header.len() {
                return Err(format!("row `{line}` has {} fields", f.len()));
            }
            maps.push(f[0].to_string());
            let row: Result<Vec<Option<f64>>, String> = f[1..]
                .iter()
                .map(|v| {
                    if v.is_empty() {
                        Ok(None)
                    } else {
                        v.parse().map(Some).map_err(|_| format!("bad value {v}"))
                    }
                })
                .collect();
            cells.push(row?);
        }
        Ok(Self::from_grid(maps, methods, cells))
    }

    /// Plain-text grid. With more than one method the best cell(s) of each
    /// row carry a trailing `*`.
    pub fn to_text(&self) -> String {
        let flag = self.methods.len() > 1;
        let fmt = |r: usize, k: usize| match self.cells[r][k] {
            Some(v) if flag && self.best[r][k] => format!("{v:.1}%*"),
            Some(v) => format!("{v:.1}%"),
            None => "-".into(),
        };
        if self.maps.len() == 1 && self.methods.len() == 1 {
            return format!("{}\n", fmt(0, 0));
        }
        let mut rows = vec![std::iter::once(String::new())
            .chain(self.methods.iter().cloned())
            .collect::<Vec<_>>()];
        for (r, m) in self.maps.iter().enumerate() {
            rows.push(
                std::iter::once(m.clone())
                    .chain((0..self.methods.len()).map(|k| fmt(r, k)))
                    .collect(),
            );
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|row| row[c].len()).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for row in rows {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect();
            s.push_str(cells.join("  ").trim_end());
            s.push('\n');
        }
        s
    }
}

/// SVG line plot plus a CSV sidecar carrying the exact plotted values.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardPlot {
    pub svg: String,
    pub csv: String,
}

const PALETTE: [&str; 6] = [
    "#1f5fbf", "#c62828", "#2e7d32", "#ef6c00", "#6a1b9a", "#00838f",
];

/// Moving-average return against episode, one line per labelled log.
pub fn emit_reward_plot(
    logs: &[(&str, &TrainLog)],
    window: usize,
) -> Result<RewardPlot, EvalError> {
    if logs.is_empty() || logs.iter().any(|(_, l)| l.is_empty()) {
        return Err(EvalError::Config("reward plot needs non-empty logs".into()));
    }
    if window == 0 {
        return Err(EvalError::Config("window must be >= 1".into()));
    }
    let series: Vec<(Vec<u64>, Vec<f64>)> = logs
        .iter()
        .map(|(_, l)| {
            (
                l.records.iter().map(|r| r.episode).collect(),
                l.moving_average(window),
            )
        })
        .collect();

    let longest = series.iter().map(|s| s.1.len()).max().unwrap_or(0);
    let mut csv = String::from("index");
    for (label, _) in logs {
        let _ = write!(csv, ",{label}_episode,{label}");
    }
    csv.push('\n');
    for i in 0..longest {
        csv.push_str(&i.to_string());
        for (eps, ma) in &series {
            match (eps.get(i), ma.get(i)) {
                (Some(e), Some(v)) => {
                    let _ = write!(csv, ",{e},{v}");
                }
                _ => csv.push_str(",,"),
            }
        }
        csv.push('\n');
    }

    let (w, h, ml, mr, mt, mb) = (800.0, 480.0, 70.0, 20.0, 20.0, 50.0);
    let x_max = series
        .iter()
        .flat_map(|s| s.0.iter())
        .copied()
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let x_min = series
        .iter()
        .flat_map(|s| s.0.iter())
        .copied()
        .min()
        .unwrap_or(0) as f64;
    let mut y_min = series
        .iter()
        .flat_map(|s| s.1.iter())
        .copied()
        .fold(f64::INFINITY, f64::min);
    let mut y_max = series
        .iter()
        .flat_map(|s| s.1.iter())
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if y_max - y_min < 1e-9 {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let x_span = (x_max - x_min).max(1.0);
    let px = |x: f64| ml + (x - x_min) / x_span * (w - ml - mr);
    let py = |y: f64| mt + (y_max - y) / (y_max - y_min) * (h - mt - mb);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(svg, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let (x0, x1, y0, y1) = (ml, w - mr, mt, h - mb);
    let _ = writeln!(
        svg,
        "<path d=\"M{x0} {y0} L{x0} {y1} L{x1} {y1}\" stroke=\"black\" fill=\"none\"/>"
    );
    for k in 0..=4 {
        let yv = y_min + (y_max - y_min) * k as f64 / 4.0;
        let xv = x_min + x_span * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{:.1}</text>",
            x0 - 6.0,
            py(yv) + 4.0,
            yv
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{:.0}</text>",
            px(xv),
            y1 + 18.0,
            xv
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">episode</text>",
        (x0 + x1) / 2.0,
        h - 8.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">moving-average return (window {window})</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    for (i, ((label, _), (eps, ma))) in logs.iter().zip(&series).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let stride = (ma.len() / 2000).max(1);
        let mut d = String::new();
        for (k, (e, v)) in eps.iter().zip(ma).enumerate() {
            if k % stride == 0 || k + 1 == ma.len() {
                let _ = write!(
                    d,
                    "{}{:.2} {:.2} ",
                    if d.is_empty() { "M" } else { "L" },
                    px(*e as f64),
                    py(*v)
                );
            }
        }
        let _ = writeln!(
            svg,
            "<path d=\"{}\" stroke=\"{color}\" stroke-width=\"1.5\" fill=\"none\"/>",
            d.trim_end()
        );
        let ly = y0 + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            "<g class=\"legend\"><line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{:.1}\" y=\"{:.1}\">{}</text></g>",
            x1 - 150.0,
            x1 - 125.0,
            x1 - 120.0,
            ly + 4.0,
            xml_escape(label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(RewardPlot { svg, csv })
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
