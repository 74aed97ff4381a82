//! Off-policy learners: SAC and TD3 over a shared replay buffer.
//!
//! Actions live in a normalized space `[0, 1] x [-1, 1]` (linear, angular).
//! The actor's linear output is squashed per dimension, sigmoid for the
//! linear velocity and tanh for the angular velocity, and
//! [`to_physical`] maps the result onto `v = 0.5 * a0`, `omega = a1`.

mod nstep;
mod replay;
mod sac;
mod td3;

pub use nstep::{assemble_nstep, NStepQueue};
pub use replay::{Batch, ReplayBuffer};
pub use sac::{sac_actor_loss_and_grad, sac_target, SacAgent, LOG_STD_MAX, LOG_STD_MIN};
pub use td3::{clip_noise, td3_target, Td3Agent};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{
    adam_step, Activation, Adam, AdamConfig, Checkpoint, CheckpointError, DenseNet, Gradients,
    Matrix, NnError,
};
use crate::simcore::{Action, OMEGA_MAX, V_MAX};

pub const ACTION_DIM: usize = 2;
/// Lower corner of the normalized action box.
pub const ACTION_LOW: [f64; 2] = [0.0, -1.0];
/// Upper corner of the normalized action box.
pub const ACTION_HIGH: [f64; 2] = [1.0, 1.0];

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("replay buffer holds {have} transitions, batch needs {need}")]
    InsufficientBuffer { have: usize, need: usize },
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("network produced a non-finite action output")]
    NonFiniteOutput,
    #[error("invalid transition: {0}")]
    BadTransition(String),
    #[error("checkpoint holds a {found} agent, expected {expected}")]
    KindMismatch {
        expected: &'static str,
        found: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Sac,
    Td3,
}

impl AgentKind {
    pub fn label(self) -> &'static str {
        match self {
            AgentKind::Sac => "SAC",
            AgentKind::Td3 => "TD3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Explore,
    Exploit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub kind: AgentKind,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    /// TD3 target-policy smoothing noise.
    pub policy_noise: f64,
    pub noise_clip: f64,
    pub policy_delay: u64,
    /// TD3 exploration noise in normalized action units.
    pub explore_noise: f64,
    /// n-step window; `None` picks 10 for TD3 and 1 for SAC.
    pub nstep: Option<usize>,
    pub buffer_capacity: usize,
    pub warmup_steps: u64,
    pub init_alpha: f64,
    pub auto_alpha: bool,
    pub target_entropy: f64,
    /// Environment steps between gradient updates after warmup.
    pub update_every: u64,
    /// Scale applied to the initial weights of the actor's output layer.
    pub actor_final_scale: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            kind: AgentKind::Sac,
            hidden: vec![512, 512, 512],
            lr: 3e-4,
            batch_size: 256,
            gamma: 0.99,
            tau: 0.005,
            policy_noise: 0.2,
            noise_clip: 0.5,
            policy_delay: 2,
            explore_noise: 0.1,
            nstep: None,
            buffer_capacity: 1_000_000,
            warmup_steps: 10_000,
            init_alpha: 0.2,
            auto_alpha: true,
            target_entropy: -(ACTION_DIM as f64),
            update_every: 1,
            actor_final_scale: 0.003,
        }
    }
}

impl AgentConfig {
    pub fn nstep_window(&self) -> usize {
        self.nstep.unwrap_or(match self.kind {
            AgentKind::Sac => 1,
            AgentKind::Td3 => 10,
        })
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err("agent: hidden layer sizes must be positive".into());
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err("agent: need 0 < batch_size <= buffer_capacity".into());
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err("agent: tau must lie in (0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err("agent: gamma must lie in [0, 1]".into());
        }
        if self.policy_delay == 0 || self.update_every == 0 {
            return Err("agent: policy_delay and update_every must be >= 1".into());
        }
        if self.policy_noise < 0.0 || self.noise_clip < 0.0 || self.explore_noise < 0.0 {
            return Err("agent: noise parameters must be non-negative".into());
        }
        if !(self.init_alpha > 0.0) {
            return Err("agent: init_alpha must be positive".into());
        }
        if self.nstep == Some(0) {
            return Err("agent: nstep must be >= 1".into());
        }
        Ok(())
    }
}

/// One replay record. `horizon` is the number of environment steps folded
/// into `reward` (1 unless n-step assembly is on); bootstrapping discounts
/// by `gamma^horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: [f64; 2],
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// True only for arrival or collision; timeouts keep bootstrapping.
    pub done: bool,
    pub horizon: u32,
}

/// Maps a normalized action onto velocity commands.
pub fn to_physical(a: [f64; 2]) -> Action {
    Action::new(V_MAX * a[0], OMEGA_MAX * a[1])
}

pub fn clamp_action(a: [f64; 2]) -> [f64; 2] {
    [
        a[0].clamp(ACTION_LOW[0], ACTION_HIGH[0]),
        a[1].clamp(ACTION_LOW[1], ACTION_HIGH[1]),
    ]
}

/// Uniform action over the normalized box (warmup exploration).
pub fn random_action<R: Rng + ?Sized>(rng: &mut R) -> [f64; 2] {
    [
        rng.gen_range(ACTION_LOW[0]..=ACTION_HIGH[0]),
        rng.gen_range(ACTION_LOW[1]..=ACTION_HIGH[1]),
    ]
}

/// Per-dimension head squash: sigmoid for linear, tanh for angular velocity.
#[inline]
pub(crate) fn squash(j: usize, u: f64) -> f64 {
    if j == 0 {
        crate::nn::sigmoid(u)
    } else {
        u.tanh()
    }
}

/// Derivative of [`squash`] from its output.
#[inline]
pub(crate) fn squash_derivative(j: usize, a: f64) -> f64 {
    if j == 0 {
        a * (1.0 - a)
    } else {
        1.0 - a * a
    }
}

pub(crate) fn standard_normal_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

pub(crate) fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = Vec::with_capacity(hidden.len() + 2);
    s.push(input);
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

/// `obs ++ action -> hidden ReLU -> 1 linear`.
pub(crate) fn new_critic<R: Rng + ?Sized>(
    cfg: &AgentConfig,
    obs_dim: usize,
    rng: &mut R,
) -> DenseNet {
    DenseNet::new(
        &layer_sizes(obs_dim + ACTION_DIM, &cfg.hidden, 1),
        Activation::ReLU,
        Activation::Linear,
        1.0,
        rng,
    )
}

pub(crate) fn adam_for(cfg: &AgentConfig, n: usize) -> Adam {
    Adam::new(
        n,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    )
}

/// Optimizer state from a checkpoint, checked against the parameter count.
pub(crate) fn restore_adam(ckpt: &Checkpoint, name: &str, n: usize) -> Result<Adam, AgentError> {
    let a = ckpt.adam(name)?;
    if a.len() != n {
        return Err(CheckpointError::Shape {
            name: name.into(),
            expected: n.to_string(),
            found: a.len().to_string(),
        }
        .into());
    }
    Ok(a.clone())
}

#[inline]
pub(crate) fn discount(gamma: f64, horizon: u32) -> f64 {
    gamma.powi(horizon as i32)
}

pub(crate) fn check_actor_output(m: &Matrix) -> Result<(), AgentError> {
    if m.data().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(AgentError::NonFiniteOutput)
    }
}

/// Losses from one gradient update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub critic1: f64,
    pub critic2: f64,
    /// `None` when the actor was not updated (TD3 policy delay).
    pub actor: Option<f64>,
    pub alpha: f64,
}

/// Header for the loss stream CSV.
pub const LOSS_CSV_HEADER: &str = "step,critic1,critic2,actor,alpha,buffer_size";

pub fn loss_csv_row(step: u64, r: &LossReport, buffer_size: usize) -> String {
    let actor = r.actor.map_or(String::new(), |a| a.to_string());
    format!(
        "{step},{},{},{actor},{},{buffer_size}",
        r.critic1, r.critic2, r.alpha
    )
}

/// Mean-squared critic loss against fixed targets and its parameter gradient.
pub fn critic_loss_and_grad(
    critic: &DenseNet,
    inputs: &Matrix,
    targets: &[f64],
) -> Result<(f64, Gradients), AgentError> {
    let (q, tape) = critic.forward(inputs)?;
    let b = targets.len() as f64;
    let mut grad = Matrix::zeros(q.rows(), 1);
    let mut loss = 0.0;
    for (i, y) in targets.iter().enumerate() {
        let e = q.get(i, 0) - y;
        loss += e * e / b;
        grad.set(i, 0, 2.0 * e / b);
    }
    let (g, _) = critic.backward(&tape, &grad, true)?;
    Ok((loss, g.expect("requested parameter gradients")))
}

pub(crate) fn apply(
    net: &mut DenseNet,
    grads: &Gradients,
    opt: &mut Adam,
    what: &str,
) -> Result<(), AgentError> {
    adam_step(net, grads, opt).map_err(|e| match e {
        NnError::NonFiniteGradient { index } => {
            AgentError::Divergence(format!("{what}: non-finite gradient at parameter {index}"))
        }
        other => AgentError::Nn(other),
    })
}

pub(crate) fn check_loss(loss: f64, what: &str) -> Result<f64, AgentError> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(AgentError::Divergence(format!("{what} loss is {loss}")))
    }
}

/// Deterministic action source used by evaluation.
pub trait Policy {
    fn action(&self, obs: &[f64]) -> Result<[f64; 2], AgentError>;
}

impl<F> Policy for F
where
    F: Fn(&[f64]) -> [f64; 2],
{
    fn action(&self, obs: &[f64]) -> Result<[f64; 2], AgentError> {
        Ok(self(obs))
    }
}

/// A SAC or TD3 learner behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Learner {
    Sac(SacAgent),
    Td3(Td3Agent),
}

impl Learner {
    pub fn new<R: Rng + ?Sized>(cfg: &AgentConfig, obs_dim: usize, rng: &mut R) -> Self {
        match cfg.kind {
            AgentKind::Sac => Learner::Sac(SacAgent::new(cfg.clone(), obs_dim, rng)),
            AgentKind::Td3 => Learner::Td3(Td3Agent::new(cfg.clone(), obs_dim, rng)),
        }
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            Learner::Sac(_) => AgentKind::Sac,
            Learner::Td3(_) => AgentKind::Td3,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        match self {
            Learner::Sac(a) => &a.cfg,
            Learner::Td3(a) => &a.cfg,
        }
    }

    pub fn act<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        mode: ActMode,
        rng: &mut R,
    ) -> Result<[f64; 2], AgentError> {
        match self {
            Learner::Sac(a) => a.act(obs, mode, rng),
            Learner::Td3(a) => a.act(obs, mode, rng),
        }
    }

    pub fn update<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        rng: &mut R,
        step_index: u64,
    ) -> Result<LossReport, AgentError> {
        match self {
            Learner::Sac(a) => a.update(buffer, rng),
            Learner::Td3(a) => a.update(buffer, rng, step_index),
        }
    }

    pub fn write_checkpoint(&self, ckpt: &mut crate::nn::Checkpoint) {
        match self {
            Learner::Sac(a) => a.write_checkpoint(ckpt),
            Learner::Td3(a) => a.write_checkpoint(ckpt),
        }
    }

    /// Restores a learner; architecture must match `cfg` and `obs_dim`.
    pub fn from_checkpoint(
        cfg: &AgentConfig,
        obs_dim: usize,
        ckpt: &crate::nn::Checkpoint,
    ) -> Result<Self, AgentError> {
        let found = String::from_utf8_lossy(ckpt.bytes("agent.kind")?).into_owned();
        let expected = cfg.kind.label();
        if found != expected {
            return Err(AgentError::KindMismatch { expected, found });
        }
        Ok(match cfg.kind {
            AgentKind::Sac => Learner::Sac(SacAgent::from_checkpoint(cfg.clone(), obs_dim, ckpt)?),
            AgentKind::Td3 => Learner::Td3(Td3Agent::from_checkpoint(cfg.clone(), obs_dim, ckpt)?),
        })
    }
}

impl Policy for Learner {
    fn action(&self, obs: &[f64]) -> Result<[f64; 2], AgentError> {
        match self {
            Learner::Sac(a) => a.mean_action(obs),
            Learner::Td3(a) => a.deterministic_action(obs),
        }
    }
}
