//! Training orchestration: episode loop, map rotation, replay feeding,
//! logging and resumable checkpoints.
//!
//! One master seed fans out to independent streams for map draws, episode
//! resets, action noise, replay sampling and network initialization, so a
//! run is a pure function of its configuration.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng as _;
use serde::Serialize;
use thiserror::Error;

use crate::agents::{
    loss_csv_row, random_action, to_physical, ActMode, AgentError, Learner, NStepQueue,
    ReplayBuffer, Transition, LOSS_CSV_HEADER,
};
use crate::config::Config;
use crate::nn::{Checkpoint, CheckpointError, Entry};
use crate::percept::{build_observation, ObsScaling, OccupancyTracker, OBS_DIM};
use crate::rewards::{RewardContext, RewardSpec};
use crate::rng::{self, Stream};
use crate::simcore::{scan, EpisodeState, EpisodeStatus, SimConfig, SimError};
use crate::worldmap::{
    load_map, sample_goal, FreeSpaceIndex, GridMap, MapError, ScenarioPair, ScenarioRoster,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training setup: {0}")]
    Config(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Agent(AgentError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("diverged in episode {episode}: {message}")]
    Divergence { episode: u64, message: String },
}

impl From<AgentError> for TrainError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Checkpoint(c) => TrainError::Checkpoint(c),
            other => TrainError::Agent(other),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// `out[i] = mean(series[max(0, i + 1 - window) ..= i])`.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "moving-average window must be >= 1");
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for i in 0..series.len() {
        sum += series[i];
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Episode indices at which the active map is redrawn.
pub fn map_draw_episodes(episodes: u64, period: u64) -> impl Iterator<Item = u64> {
    (0..episodes).step_by(period as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub ret: f64,
    pub length: usize,
    pub outcome: EpisodeStatus,
    pub map_id: String,
    /// Seconds since the run (or resume) started; unknown for restored records.
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub records: Vec<EpisodeRecord>,
}

pub const TRAIN_LOG_HEADER: &str = "episode,return,length,outcome,map_id,wall_time,moving_average";

impl TrainLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn returns(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.ret).collect()
    }

    pub fn moving_average(&self, window: usize) -> Vec<f64> {
        moving_average(&self.returns(), window)
    }

    /// Fraction of the last `n` episodes (or all, if fewer) that arrived.
    pub fn success_rate_last(&self, n: usize) -> f64 {
        let tail = &self.records[self.records.len().saturating_sub(n)..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter()
            .filter(|r| r.outcome == EpisodeStatus::Arrived)
            .count() as f64
            / tail.len() as f64
    }

    pub fn to_csv(&self, window: usize) -> String {
        self.csv(window, true)
    }

    /// The CSV without the wall-clock column; identical across reruns.
    pub fn deterministic_csv(&self, window: usize) -> String {
        self.csv(window, false)
    }

    fn csv(&self, window: usize, wall: bool) -> String {
        let ma = self.moving_average(window);
        let mut s = String::new();
        if wall {
            s.push_str(TRAIN_LOG_HEADER);
        } else {
            s.push_str("episode,return,length,outcome,map_id,moving_average");
        }
        s.push('\n');
        for (r, m) in self.records.iter().zip(ma) {
            s.push_str(&format!(
                "{},{},{},{},{}",
                r.episode, r.ret, r.length, r.outcome, r.map_id
            ));
            if wall {
                s.push(',');
                if let Some(w) = r.wall_time {
                    s.push_str(&format!("{w:.3}"));
                }
            }
            s.push_str(&format!(",{m}\n"));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or("empty log")?.split(',').collect();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| *h == name)
                .ok_or(format!("missing column {name}"))
        };
        let (ce, cr, cl, co, cm) = (
            col("episode")?,
            col("return")?,
            col("length")?,
            col("outcome")?,
            col("map_id")?,
        );
        let cw = col("wall_time").ok();
        let mut records = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let bad = |what: &str| format!("line {}: bad {what}", i + 2);
            let get = |c: usize| f.get(c).copied().ok_or_else(|| bad("field count"));
            records.push(EpisodeRecord {
                episode: get(ce)?.parse().map_err(|_| bad("episode"))?,
                ret: get(cr)?.parse().map_err(|_| bad("return"))?,
                length: get(cl)?.parse().map_err(|_| bad("length"))?,
                outcome: EpisodeStatus::parse(get(co)?).ok_or_else(|| bad("outcome"))?,
                map_id: get(cm)?.to_string(),
                wall_time: cw.and_then(|c| f.get(c)).and_then(|w| w.parse().ok()),
            });
        }
        Ok(Self { records })
    }
}

/// Resolves a bundled map id or a `.gridmap` path. Paths are identified by
/// their file stem.
pub fn resolve_map(id: &str) -> Result<(String, GridMap), TrainError> {
    if let Some(m) = crate::assets::map(id) {
        return Ok((id.to_string(), m?));
    }
    let path = Path::new(id);
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let name = path
        .file_stem()
        .map_or(id.to_string(), |s| s.to_string_lossy().into_owned());
    Ok((name, load_map(&text)?))
}

/// Resolves a bundled roster id or a roster file path.
pub fn resolve_roster(id: &str, map_id: &str) -> Result<ScenarioRoster, TrainError> {
    if let Some(r) = crate::assets::roster(id) {
        return Ok(r?);
    }
    let path = Path::new(id);
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(ScenarioRoster::parse(map_id, &text)?)
}

struct MapEntry {
    id: String,
    map: GridMap,
    free: FreeSpaceIndex,
    scaling: ObsScaling,
}

#[derive(Serialize)]
struct Manifest<'a> {
    crate_version: &'a str,
    config: &'a Config,
    /// Map id to SHA-256 of its canonical text form.
    maps: BTreeMap<String, String>,
}

/// Result of [`Trainer::run`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub episodes_run: u64,
    /// Wall-time budget ran out before the configured episode count.
    pub stopped_early: bool,
    pub final_checkpoint: Option<PathBuf>,
}

/// Resumable training state.
pub struct Trainer {
    cfg: Config,
    reward: RewardSpec,
    maps: Vec<MapEntry>,
    roster: Option<Vec<ScenarioPair>>,
    learner: Learner,
    buffer: ReplayBuffer,
    rng_map: rng::Rng,
    rng_reset: rng::Rng,
    rng_action: rng::Rng,
    rng_replay: rng::Rng,
    episode: u64,
    env_steps: u64,
    update_steps: u64,
    map_draws: u64,
    active_map: usize,
    log: TrainLog,
    started: Instant,
    loss_sink: Option<BufWriter<File>>,
}

impl Trainer {
    /// Fresh trainer over explicit maps. A roster, if given, replaces
    /// per-episode start/goal sampling and is cycled by episode index.
    pub fn new(
        cfg: Config,
        maps: Vec<(String, GridMap)>,
        roster: Option<Vec<ScenarioPair>>,
    ) -> Result<Self, TrainError> {
        cfg.validate()
            .map_err(|e| TrainError::Config(e.to_string()))?;
        if maps.is_empty() {
            return Err(TrainError::Config("no maps".into()));
        }
        if let Some(r) = &roster {
            if r.is_empty() || maps.len() != 1 {
                return Err(TrainError::Config(
                    "a training roster needs exactly one map and >= 1 pair".into(),
                ));
            }
        }
        let seed = cfg.train.seed;
        let maps: Vec<MapEntry> = maps
            .into_iter()
            .map(|(id, map)| {
                let free = FreeSpaceIndex::new(&map, cfg.train.spawn_clearance);
                let scaling = cfg.obs_scaling(&map);
                MapEntry {
                    id,
                    map,
                    free,
                    scaling,
                }
            })
            .collect();
        if roster.is_none() {
            if let Some(m) = maps.iter().find(|m| m.free.is_empty()) {
                return Err(TrainError::Config(format!(
                    "map {} has no spawnable cell",
                    m.id
                )));
            }
        }
        let learner = Learner::new(&cfg.agent, OBS_DIM, &mut rng::stream(seed, Stream::Init));
        Ok(Self {
            reward: cfg.reward.spec(),
            buffer: ReplayBuffer::new(cfg.agent.buffer_capacity, OBS_DIM),
            rng_map: rng::stream(seed, Stream::MapDraw),
            rng_reset: rng::stream(seed, Stream::Reset),
            rng_action: rng::stream(seed, Stream::Action),
            rng_replay: rng::stream(seed, Stream::Replay),
            learner,
            maps,
            roster,
            cfg,
            episode: 0,
            env_steps: 0,
            update_steps: 0,
            map_draws: 0,
            active_map: 0,
            log: TrainLog::default(),
            started: Instant::now(),
            loss_sink: None,
        })
    }

    /// Resolves maps and the optional roster named in the configuration.
    pub fn from_config(cfg: Config) -> Result<Self, TrainError> {
        let maps = cfg
            .train
            .maps
            .iter()
            .map(|id| resolve_map(id))
            .collect::<Result<Vec<_>, _>>()?;
        let roster = match &cfg.train.roster {
            Some(r) => {
                let map_id = maps.first().map_or("", |m| m.0.as_str());
                Some(resolve_roster(r, map_id)?.pairs)
            }
            None => None,
        };
        Self::new(cfg, maps, roster)
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn episode(&self) -> u64 {
        self.episode
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn update_steps(&self) -> u64 {
        self.update_steps
    }

    pub fn map_draws(&self) -> u64 {
        self.map_draws
    }

    fn reset_pair(&mut self) -> Result<ScenarioPair, TrainError> {
        if let Some(r) = &self.roster {
            return Ok(r[(self.episode % r.len() as u64) as usize]);
        }
        let m = &self.maps[self.active_map];
        let start = m.free.sample(&m.map, &mut self.rng_reset)?;
        let goal = sample_goal(
            &m.free,
            &m.map,
            &mut self.rng_reset,
            start.position(),
            self.cfg.train.min_start_goal,
        )?;
        Ok(ScenarioPair { start, goal })
    }

    fn push_transition(
        &mut self,
        queue: &mut Option<NStepQueue>,
        t: Transition,
        end: bool,
    ) -> Result<(), TrainError> {
        match queue {
            Some(q) => {
                for agg in q.push(t, end)? {
                    self.buffer.push(agg)?;
                }
            }
            None => self.buffer.push(t)?,
        }
        Ok(())
    }

    /// Runs one full episode and appends its record to the log.
    pub fn run_episode(&mut self) -> Result<EpisodeRecord, TrainError> {
        if self.episode % self.cfg.train.map_rotation_period == 0 {
            self.active_map = self.rng_map.gen_range(0..self.maps.len());
            self.map_draws += 1;
        }
        let pair = self.reset_pair()?;
        let sim: SimConfig = self.cfg.sim;
        let map_idx = self.active_map;
        let mut ep = EpisodeState::new(pair.start, pair.goal, self.cfg.train.episode_timeout);
        let mut tracker = OccupancyTracker::new(&self.maps[map_idx].map);
        let first = scan(&self.maps[map_idx].map, &ep.robot, sim.max_range)?;
        tracker
            .update(&self.maps[map_idx].map, &ep.robot, &first)
            .expect("tracker sized to map");
        let scaling = self.maps[map_idx].scaling;
        let mut obs = build_observation(&ep, &first).to_vec(scaling);

        let window = self.learner.config().nstep_window();
        let mut queue = (window > 1).then(|| NStepQueue::new(window, self.learner.config().gamma));
        let warmup = self.learner.config().warmup_steps;
        let (batch, every) = (
            self.learner.config().batch_size,
            self.learner.config().update_every,
        );
        let mut ret = 0.0;

        while !ep.status.is_terminal() {
            let a = if self.env_steps < warmup {
                random_action(&mut self.rng_action)
            } else {
                self.learner
                    .act(&obs, ActMode::Explore, &mut self.rng_action)
                    .map_err(|e| self.divergence(e))?
            };
            let map = &self.maps[map_idx].map;
            let info = ep.step(to_physical(a), &sim, map)?;
            let s = scan(map, &ep.robot, sim.max_range)?;
            let gain = tracker
                .update(map, &ep.robot, &s)
                .expect("tracker sized to map");
            let ctx = RewardContext {
                d: ep.distance_to_goal(),
                d_prev: info.prev_distance,
                arrived: info.status == EpisodeStatus::Arrived,
                collided: info.status == EpisodeStatus::Collided,
                timed_out: info.status == EpisodeStatus::TimedOut,
                raw_scan: s.ranges(),
                gain,
                v: info.applied.v,
                omega: info.applied.omega,
            };
            let r = self
                .reward
                .evaluate(&ctx)
                .map_err(|e| TrainError::Config(e.to_string()))?
                .total;
            ret += r;
            let next_obs = build_observation(&ep, &s).to_vec(scaling);
            let t = Transition {
                obs: std::mem::replace(&mut obs, next_obs.clone()),
                action: a,
                reward: r,
                next_obs,
                done: ctx.arrived || ctx.collided,
                horizon: 1,
            };
            self.push_transition(&mut queue, t, info.status.is_terminal())?;
            self.env_steps += 1;

            if self.env_steps > warmup && self.buffer.len() >= batch && self.env_steps % every == 0
            {
                let report = self
                    .learner
                    .update(&self.buffer, &mut self.rng_replay, self.update_steps)
                    .map_err(|e| self.divergence(e))?;
                if let Some(w) = &mut self.loss_sink {
                    writeln!(
                        w,
                        "{}",
                        loss_csv_row(self.update_steps, &report, self.buffer.len())
                    )
                    .map_err(|e| TrainError::Io {
                        path: "losses.csv".into(),
                        source: e,
                    })?;
                }
                self.update_steps += 1;
            }
        }

        let rec = EpisodeRecord {
            episode: self.episode,
            ret,
            length: ep.step_count,
            outcome: ep.status,
            map_id: self.maps[map_idx].id.clone(),
            wall_time: Some(self.started.elapsed().as_secs_f64()),
        };
        self.log.records.push(rec.clone());
        self.episode += 1;
        Ok(rec)
    }

    fn divergence(&self, e: AgentError) -> TrainError {
        match e {
            AgentError::Divergence(message) => TrainError::Divergence {
                episode: self.episode,
                message,
            },
            AgentError::NonFiniteOutput => TrainError::Divergence {
                episode: self.episode,
                message: "non-finite actor output".into(),
            },
            other => other.into(),
        }
    }

    /// Trains until `cfg.train.episodes` episodes have run in total. With an
    /// output directory, writes the log, loss stream, manifest and
    /// checkpoints there. On divergence the partial log and a checkpoint of
    /// the last completed episode are kept.
    pub fn run(&mut self, out: Option<&Path>) -> Result<TrainSummary, TrainError> {
        let start_episode = self.episode;
        if let Some(dir) = out {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
            self.write_manifest(dir)?;
            let lp = dir.join("losses.csv");
            let fresh = !lp.exists() || self.episode == 0;
            let f = OpenOptions::new()
                .create(true)
                .write(true)
                .append(!fresh)
                .truncate(fresh)
                .open(&lp)
                .map_err(io_err(&lp))?;
            let mut w = BufWriter::new(f);
            if fresh {
                writeln!(w, "{LOSS_CSV_HEADER}").map_err(io_err(&lp))?;
            }
            self.loss_sink = Some(w);
        }
        let mut last_good = self.checkpoint();
        let mut stopped_early = false;
        while self.episode < self.cfg.train.episodes {
            if let Some(h) = self.cfg.train.max_hours {
                if self.started.elapsed().as_secs_f64() > h * 3600.0 {
                    stopped_early = true;
                    break;
                }
            }
            match self.run_episode() {
                Ok(_) => {}
                Err(e @ TrainError::Divergence { .. }) => {
                    if let Some(dir) = out {
                        self.flush_outputs(dir)?;
                        write_checkpoint(&dir.join("diverged.navf"), &last_good)?;
                    }
                    return Err(e);
                }
                Err(e) => return Err(e),
            }
            if self.episode % self.cfg.train.checkpoint_period == 0 {
                last_good = self.checkpoint();
                if let Some(dir) = out {
                    write_checkpoint(
                        &dir.join(format!("checkpoint-{:06}.navf", self.episode)),
                        &last_good,
                    )?;
                    self.flush_outputs(dir)?;
                }
            }
        }
        let mut final_checkpoint = None;
        if let Some(dir) = out {
            let p = dir.join("final.navf");
            write_checkpoint(&p, &self.checkpoint())?;
            self.flush_outputs(dir)?;
            final_checkpoint = Some(p);
        }
        self.loss_sink = None;
        Ok(TrainSummary {
            episodes_run: self.episode - start_episode,
            stopped_early,
            final_checkpoint,
        })
    }

    fn flush_outputs(&mut self, dir: &Path) -> Result<(), TrainError> {
        let p = dir.join("train_log.csv");
        std::fs::write(&p, self.log.to_csv(self.cfg.train.log_window)).map_err(io_err(&p))?;
        if let Some(w) = &mut self.loss_sink {
            w.flush().map_err(io_err(&dir.join("losses.csv")))?;
        }
        Ok(())
    }

    fn write_manifest(&self, dir: &Path) -> Result<(), TrainError> {
        let m = Manifest {
            crate_version: env!("CARGO_PKG_VERSION"),
            config: &self.cfg,
            maps: self
                .maps
                .iter()
                .map(|m| (m.id.clone(), m.map.content_hash()))
                .collect(),
        };
        let p = dir.join("manifest.toml");
        std::fs::write(&p, toml::to_string(&m).expect("manifest serializes")).map_err(io_err(&p))
    }

    /// Complete resume state at the current episode boundary.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.push("config.toml", Entry::Bytes(self.cfg.to_toml().into_bytes()));
        self.learner.write_checkpoint(&mut ck);
        let (f, u) = self.buffer.to_arrays();
        ck.push("replay.f64", Entry::F64s(f));
        ck.push("replay.u64", Entry::U64s(u));
        ck.push("rng.map", Entry::U64s(rng::capture(&self.rng_map)));
        ck.push("rng.reset", Entry::U64s(rng::capture(&self.rng_reset)));
        ck.push("rng.action", Entry::U64s(rng::capture(&self.rng_action)));
        ck.push("rng.replay", Entry::U64s(rng::capture(&self.rng_replay)));
        ck.push(
            "train.counters",
            Entry::U64s(vec![
                self.episode,
                self.env_steps,
                self.update_steps,
                self.map_draws,
                self.active_map as u64,
            ]),
        );
        let r = &self.log.records;
        ck.push(
            "log.episodes",
            Entry::U64s(r.iter().map(|x| x.episode).collect()),
        );
        ck.push(
            "log.returns",
            Entry::F64s(r.iter().map(|x| x.ret).collect()),
        );
        ck.push(
            "log.lengths",
            Entry::U64s(r.iter().map(|x| x.length as u64).collect()),
        );
        let outcomes: Vec<&str> = r.iter().map(|x| x.outcome.as_str()).collect();
        ck.push(
            "log.outcomes",
            Entry::Bytes(outcomes.join("\n").into_bytes()),
        );
        let ids: Vec<&str> = r.iter().map(|x| x.map_id.as_str()).collect();
        ck.push("log.maps", Entry::Bytes(ids.join("\n").into_bytes()));
        ck
    }

    /// Rebuilds a trainer from [`Trainer::checkpoint`] output. `cfg` may
    /// raise the episode budget; everything else should match the original
    /// run.
    pub fn resume(
        cfg: Config,
        maps: Vec<(String, GridMap)>,
        roster: Option<Vec<ScenarioPair>>,
        ck: &Checkpoint,
    ) -> Result<Self, TrainError> {
        let mut t = Self::new(cfg, maps, roster)?;
        t.learner = Learner::from_checkpoint(&t.cfg.agent, OBS_DIM, ck)?;
        let malformed =
            |what: &str| TrainError::Checkpoint(CheckpointError::Malformed(what.into()));
        t.buffer = ReplayBuffer::from_arrays(ck.f64s("replay.f64")?, ck.u64s("replay.u64")?)
            .ok_or_else(|| malformed("replay buffer"))?;
        let restore = |name: &str| -> Result<rng::Rng, TrainError> {
            rng::restore(ck.u64s(name)?).ok_or_else(|| malformed(name))
        };
        t.rng_map = restore("rng.map")?;
        t.rng_reset = restore("rng.reset")?;
        t.rng_action = restore("rng.action")?;
        t.rng_replay = restore("rng.replay")?;
        let &[episode, env_steps, update_steps, map_draws, active_map] =
            ck.u64s("train.counters")?
        else {
            return Err(malformed("train.counters"));
        };
        if active_map as usize >= t.maps.len() {
            return Err(malformed("active map index"));
        }
        (
            t.episode,
            t.env_steps,
            t.update_steps,
            t.map_draws,
            t.active_map,
        ) = (
            episode,
            env_steps,
            update_steps,
            map_draws,
            active_map as usize,
        );

        let episodes = ck.u64s("log.episodes")?;
        let returns = ck.f64s("log.returns")?;
        let lengths = ck.u64s("log.lengths")?;
        let outcomes = String::from_utf8_lossy(ck.bytes("log.outcomes")?).into_owned();
        let ids = String::from_utf8_lossy(ck.bytes("log.maps")?).into_owned();
        let outcomes: Vec<&str> = if episodes.is_empty() {
            vec![]
        } else {
            outcomes.split('\n').collect()
        };
        let ids: Vec<&str> = if episodes.is_empty() {
            vec![]
        } else {
            ids.split('\n').collect()
        };
        let n = episodes.len();
        if returns.len() != n || lengths.len() != n || outcomes.len() != n || ids.len() != n {
            return Err(malformed("training log"));
        }
        for i in 0..n {
            t.log.records.push(EpisodeRecord {
                episode: episodes[i],
                ret: returns[i],
                length: lengths[i] as usize,
                outcome: EpisodeStatus::parse(outcomes[i]).ok_or_else(|| malformed("outcome"))?,
                map_id: ids[i].to_string(),
                wall_time: None,
            });
        }
        Ok(t)
    }
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), TrainError> {
    std::fs::write(path, ck.to_bytes()).map_err(io_err(path))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(Checkpoint::from_bytes(&bytes)?)
}

/// The configuration echoed into a checkpoint by the trainer.
pub fn checkpoint_config(ck: &Checkpoint) -> Result<Config, TrainError> {
    let text = String::from_utf8_lossy(ck.bytes("config.toml")?).into_owned();
    Config::from_toml_str(&text).map_err(|e| TrainError::Config(e.to_string()))
}

/// Configuration-driven training run.
pub fn run_training(
    cfg: Config,
    out: Option<&Path>,
) -> Result<(TrainLog, TrainSummary), TrainError> {
    let mut t = Trainer::from_config(cfg)?;
    let summary = t.run(out)?;
    Ok((t.log, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[0.0, 10.0], 2), vec![0.0, 5.0]);
        assert_eq!(moving_average(&[1.0, 2.0, 3.0], 1), vec![1.0, 2.0, 3.0]);
        assert_eq!(moving_average(&[4.0; 7], 3), vec![4.0; 7]);
        assert!(moving_average(&[], 5).is_empty());
        assert_eq!(
            moving_average(&[1.0, 2.0, 3.0, 4.0], 2),
            vec![1.0, 1.5, 2.5, 3.5]
        );
    }

    #[test]
    fn rotation_schedule() {
        assert_eq!(map_draw_episodes(20_000, 500).count(), 40);
        assert_eq!(map_draw_episodes(1, 500).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn log_csv_round_trip() {
        let log = TrainLog {
            records: vec![
                EpisodeRecord {
                    episode: 0,
                    ret: -12.25,
                    length: 40,
                    outcome: EpisodeStatus::Collided,
                    map_id: "m".into(),
                    wall_time: Some(0.5),
                },
                EpisodeRecord {
                    episode: 1,
                    ret: 100.0,
                    length: 3,
                    outcome: EpisodeStatus::Arrived,
                    map_id: "m".into(),
                    wall_time: None,
                },
            ],
        };
        let back = TrainLog::from_csv(&log.to_csv(10)).unwrap();
        assert_eq!(back, log);
        assert_eq!(log.success_rate_last(1), 1.0);
        assert_eq!(log.success_rate_last(10), 0.5);
    }
}
