use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use navforge::agents::Learner;
use navforge::config::{Config, ConfigError};
use navforge::diagnostics::raycast_agreement;
use navforge::eval::{emit_reward_plot, run_eval_learner, EvalConfig, EvalError};
use navforge::harness::{
    checkpoint_config, read_checkpoint, resolve_map, resolve_roster, TrainError, TrainLog, Trainer,
};
use navforge::worldmap::{generate_map, MapGenSpec, RoomStyle, ScenarioRoster};
use navforge::OBS_DIM;

#[derive(Parser)]
#[command(
    name = "navforge",
    version,
    about = "Grid-map LiDAR navigation training and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent from a TOML config.
    Train {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Override the episode budget.
        #[arg(long)]
        episodes: Option<u64>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a map's start/goal roster.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Bundled map id or .gridmap path.
        #[arg(long)]
        map: String,
        /// Bundled roster id or roster path; defaults to the map's bundled roster.
        #[arg(long)]
        roster: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Sample the stochastic policy instead of using its mean.
        #[arg(long)]
        stochastic: bool,
        /// Directory for trials.csv and summary.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a map (and optionally a roster).
    MapGen {
        #[arg(long)]
        seed: u64,
        /// Side length, meters.
        #[arg(long)]
        size: f64,
        #[arg(long)]
        density: f64,
        #[arg(long, value_enum, default_value = "open")]
        style: Style,
        #[arg(long, default_value_t = 0.1)]
        resolution: f64,
        /// Output file; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a 15-pair roster here.
        #[arg(long)]
        roster_out: Option<PathBuf>,
    },
    /// Compare grid-traversal ray casting with fine ray marching.
    RaycastTest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        maps: usize,
        #[arg(long, default_value_t = 1000)]
        rays: usize,
    },
    /// Plot moving-average returns of one or more training logs.
    Plot {
        /// `path` or `path=label`; repeat for overlays.
        #[arg(long, required = true)]
        log: Vec<String>,
        #[arg(long, default_value_t = 100)]
        window: usize,
        /// Output prefix; writes <prefix>.svg and <prefix>.csv.
        #[arg(long, default_value = "rewards")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Style {
    Open,
    Rooms,
}

enum Failure {
    Config(String),
    Divergence(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Divergence(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Divergence(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Io(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Divergence { .. } => Failure::Divergence(e.to_string()),
            TrainError::Io { .. } | TrainError::Checkpoint(_) => Failure::Io(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

fn train(
    config: &Path,
    seed: Option<u64>,
    out: &Path,
    episodes: Option<u64>,
    resume: Option<&Path>,
) -> Result<(), Failure> {
    let mut cfg = Config::load(config)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
        cfg.eval.seed = s;
    }
    if let Some(n) = episodes {
        cfg.train.episodes = n;
    }
    cfg.validate()?;
    let mut trainer = match resume {
        Some(p) => {
            let ck = read_checkpoint(p)?;
            let maps = cfg
                .train
                .maps
                .iter()
                .map(|m| resolve_map(m))
                .collect::<Result<Vec<_>, _>>()?;
            let roster = match &cfg.train.roster {
                Some(r) => Some(resolve_roster(r, &maps[0].0)?.pairs),
                None => None,
            };
            Trainer::resume(cfg, maps, roster, &ck)?
        }
        None => Trainer::from_config(cfg)?,
    };
    let summary = trainer.run(Some(out))?;
    let log = trainer.log();
    println!(
        "trained {} episodes ({} total); success over last {}: {:.1}%{}",
        summary.episodes_run,
        log.len(),
        trainer.config().train.log_window,
        100.0 * log.success_rate_last(trainer.config().train.log_window),
        if summary.stopped_early {
            " (stopped at wall-time budget)"
        } else {
            ""
        }
    );
    if let Some(p) = summary.final_checkpoint {
        println!("checkpoint: {}", p.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval(
    checkpoint: &Path,
    map_id: &str,
    roster: Option<&str>,
    trials: Option<usize>,
    seed: Option<u64>,
    stochastic: bool,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let ck = read_checkpoint(checkpoint)?;
    let cfg = checkpoint_config(&ck)?;
    let learner = Learner::from_checkpoint(&cfg.agent, OBS_DIM, &ck)
        .map_err(|e| Failure::Io(format!("cannot load agent: {e}")))?;
    let (id, map) = resolve_map(map_id)?;
    let roster = resolve_roster(roster.unwrap_or(map_id), &id)?;
    let mut ec = EvalConfig::new(id, map, roster);
    ec.trials = trials.unwrap_or(cfg.eval.trials);
    ec.timeout = cfg.sim.eval_timeout;
    ec.deterministic_policy = !stochastic && cfg.eval.deterministic_policy;
    ec.seed = seed.unwrap_or(cfg.eval.seed);
    ec.sim = cfg.sim;
    ec.scaling = cfg.obs_scaling(&ec.map);
    let report = run_eval_learner(&learner, &ec)?;
    print!("{}", report.summary());
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
        write(&dir.join("trials.csv"), &report.trials_csv())?;
        write(&dir.join("summary.txt"), &report.summary())?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn map_gen(
    seed: u64,
    size: f64,
    density: f64,
    style: Style,
    resolution: f64,
    out: Option<&Path>,
    roster_out: Option<&Path>,
) -> Result<(), Failure> {
    let style = match style {
        Style::Open => RoomStyle::Open,
        Style::Rooms => RoomStyle::Rooms,
    };
    let spec = MapGenSpec {
        resolution,
        ..MapGenSpec::new(size, density, style)
    };
    let map = generate_map(seed, &spec).map_err(|e| Failure::Config(e.to_string()))?;
    match out {
        Some(p) => write(p, &map.to_text())?,
        None => print!("{}", map.to_text()),
    }
    if let Some(p) = roster_out {
        let id = out
            .and_then(|o| o.file_stem())
            .map_or("generated".into(), |s| s.to_string_lossy().into_owned());
        let r = ScenarioRoster::generate(&id, &map, seed.wrapping_add(1000), 15, 0.4, 2.0)
            .map_err(|e| Failure::Config(e.to_string()))?;
        write(p, &r.to_text())?;
    }
    eprintln!(
        "{}x{} cells, interior density {:.4}, sha256 {}",
        map.width(),
        map.height(),
        map.interior_density(),
        map.content_hash()
    );
    Ok(())
}

fn plot(logs: &[String], window: usize, out: &Path) -> Result<(), Failure> {
    let mut loaded = Vec::new();
    for spec in logs {
        let (path, label) = match spec.split_once('=') {
            Some((p, l)) => (p.to_string(), l.to_string()),
            None => (
                spec.clone(),
                Path::new(spec)
                    .file_stem()
                    .map_or(spec.clone(), |s| s.to_string_lossy().into()),
            ),
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Failure::Io(format!("cannot read {path}: {e}")))?;
        let log = TrainLog::from_csv(&text).map_err(|e| Failure::Config(format!("{path}: {e}")))?;
        loaded.push((label, log));
    }
    let refs: Vec<(&str, &TrainLog)> = loaded.iter().map(|(l, g)| (l.as_str(), g)).collect();
    let p = emit_reward_plot(&refs, window)?;
    write(&out.with_extension("svg"), &p.svg)?;
    write(&out.with_extension("csv"), &p.csv)?;
    println!(
        "wrote {} and {}",
        out.with_extension("svg").display(),
        out.with_extension("csv").display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            episodes,
            resume,
        } => train(&config, seed, &out, episodes, resume.as_deref()),
        Command::Eval {
            checkpoint,
            map,
            roster,
            trials,
            seed,
            stochastic,
            out,
        } => eval(
            &checkpoint,
            &map,
            roster.as_deref(),
            trials,
            seed,
            stochastic,
            out.as_deref(),
        ),
        Command::MapGen {
            seed,
            size,
            density,
            style,
            resolution,
            out,
            roster_out,
        } => map_gen(
            seed,
            size,
            density,
            style,
            resolution,
            out.as_deref(),
            roster_out.as_deref(),
        ),
        Command::RaycastTest { seed, maps, rays } => {
            if maps == 0 {
                return Err(Failure::Config("--maps must be >= 1".into()));
            }
            let r = raycast_agreement(seed, maps, rays, 1e-4)
                .map_err(|e| Failure::Config(e.to_string()))?;
            println!(
                "rays {}  max error {:.3e} m  mean error {:.3e} m  elapsed {:.2} s",
                r.rays,
                r.max_abs_error,
                r.mean_abs_error,
                r.elapsed.as_secs_f64()
            );
            Ok(())
        }
        Command::Plot { log, window, out } => plot(&log, window, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
