//! Desk-scale mobile-robot navigation with deep reinforcement learning.
//!
//! The crate bundles a 2D grid-map simulator with a 684-beam ray-cast LiDAR,
//! an information-gain shaped reward plus three baseline rewards, SAC and TD3
//! learners built on a small dense-network substrate, and the training and
//! evaluation harnesses that produce success-rate tables and reward curves.
//!
//! Module map:
//!
//! - [`worldmap`]: grid maps, the `.gridmap` format, procedural generation
//! - [`simcore`]: kinematics, collisions, LiDAR, episode lifecycle
//! - [`percept`]: 61-value observations and the seen-cell tracker
//! - [`rewards`]: reward engines
//! - [`nn`]: dense networks, gradients, Adam, checkpoints
//! - [`agents`]: replay buffer, SAC, TD3, n-step assembly
//! - [`harness`]: training loop, logs, resume state
//! - [`eval`]: evaluation protocol, confidence intervals, tables and plots
//! - [`config`]: the sectioned configuration file
//! - [`assets`]: bundled maps and rosters
//! - [`diagnostics`]: slow reference computations

pub mod agents;
pub mod assets;
pub mod config;
pub mod diagnostics;
pub mod eval;
pub mod harness;
pub mod nn;
pub mod percept;
pub mod rewards;
pub mod rng;
pub mod simcore;
pub mod worldmap;

pub use percept::{Observation, OBS_DIM};
pub use simcore::{Action, EpisodeStatus, LidarScan, SimConfig};
pub use worldmap::{GridMap, Point2, Pose2};

// Book chapters are compiled as doc-tests so their snippets stay in sync.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../book/src/observations.md")]
    mod observations {}
    #[doc = include_str!("../../../book/src/rewards.md")]
    mod rewards {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/agents.md")]
    mod agents {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
}
