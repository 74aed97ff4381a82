use std::f64::consts::{LN_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    adam_for, apply, check_actor_output, check_loss, critic_loss_and_grad, discount, layer_sizes,
    new_critic, restore_adam, squash, squash_derivative, standard_normal_matrix, ActMode,
    AgentConfig, AgentError, Batch, LossReport, ReplayBuffer, ACTION_DIM,
};
use crate::nn::{
    sigmoid, soft_update, softplus, Activation, Adam, Checkpoint, DenseNet, Entry, Gradients,
    Matrix, Tape,
};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Smooth clamp of the raw log-std head into `[LOG_STD_MIN, LOG_STD_MAX]`.
/// Returns the clamped value and its derivative with respect to `raw`.
pub(crate) fn soft_clamp_log_std(raw: f64) -> (f64, f64) {
    let upper = LOG_STD_MAX - softplus(LOG_STD_MAX - raw);
    let ls = LOG_STD_MIN + softplus(upper - LOG_STD_MIN);
    let d = sigmoid(LOG_STD_MAX - raw) * sigmoid(upper - LOG_STD_MIN);
    (ls.clamp(LOG_STD_MIN, LOG_STD_MAX), d)
}

/// `ln g'(u)` for the squash of dimension `j`, computed from `u` to stay
/// finite when the squash saturates.
fn log_squash_derivative(j: usize, u: f64) -> f64 {
    if j == 0 {
        -softplus(-u) - softplus(u)
    } else {
        2.0 * (LN_2 - u - softplus(-2.0 * u))
    }
}

/// `d/du ln g'(u)` from the squashed value `a`.
fn dlog_squash_derivative(j: usize, a: f64) -> f64 {
    if j == 0 {
        1.0 - 2.0 * a
    } else {
        -2.0 * a
    }
}

/// `r + gamma^h * (1 - done) * (min(q1, q2) - alpha * log_pi)`.
pub fn sac_target(
    reward: f64,
    gamma: f64,
    horizon: u32,
    done: bool,
    q1: f64,
    q2: f64,
    alpha_log_pi: f64,
) -> f64 {
    if done {
        reward
    } else {
        reward + discount(gamma, horizon) * (q1.min(q2) - alpha_log_pi)
    }
}

struct PolicySample {
    tape: Tape,
    a: Matrix,
    log_std: Matrix,
    dlog_std: Matrix,
    log_pi: Vec<f64>,
}

/// Reparameterized samples `a = g(mu + sigma * eps)` with their log-density.
fn sample_policy(actor: &DenseNet, obs: &Matrix, eps: &Matrix) -> Result<PolicySample, AgentError> {
    let (out, tape) = actor.forward(obs)?;
    check_actor_output(&out)?;
    let b = obs.rows();
    let mut a = Matrix::zeros(b, ACTION_DIM);
    let mut log_std = Matrix::zeros(b, ACTION_DIM);
    let mut dlog_std = Matrix::zeros(b, ACTION_DIM);
    let mut log_pi = vec![0.0; b];
    let half_ln_2pi = 0.5 * (2.0 * PI).ln();
    for i in 0..b {
        for j in 0..ACTION_DIM {
            let (ls, d) = soft_clamp_log_std(out.get(i, ACTION_DIM + j));
            let e = eps.get(i, j);
            let uj = out.get(i, j) + ls.exp() * e;
            a.set(i, j, squash(j, uj));
            log_std.set(i, j, ls);
            dlog_std.set(i, j, d);
            log_pi[i] += -0.5 * e * e - ls - half_ln_2pi - log_squash_derivative(j, uj);
        }
    }
    Ok(PolicySample {
        tape,
        a,
        log_std,
        dlog_std,
        log_pi,
    })
}

/// Actor objective `mean(alpha * log_pi - min(Q1, Q2))` at fixed noise
/// `eps`, its gradient with respect to the actor parameters, and the
/// per-sample log-densities.
pub fn sac_actor_loss_and_grad(
    actor: &DenseNet,
    critic1: &DenseNet,
    critic2: &DenseNet,
    obs: &Matrix,
    eps: &Matrix,
    alpha: f64,
) -> Result<(f64, Gradients, Vec<f64>), AgentError> {
    let ps = sample_policy(actor, obs, eps)?;
    let b = obs.rows();
    let bf = b as f64;
    let input = obs.hcat(&ps.a);
    let (q1, t1) = critic1.forward(&input)?;
    let (q2, t2) = critic2.forward(&input)?;
    let mut g1 = Matrix::zeros(b, 1);
    let mut g2 = Matrix::zeros(b, 1);
    let mut loss = 0.0;
    for i in 0..b {
        let (a, c) = (q1.get(i, 0), q2.get(i, 0));
        loss += (alpha * ps.log_pi[i] - a.min(c)) / bf;
        if a <= c {
            g1.set(i, 0, -1.0 / bf);
        } else {
            g2.set(i, 0, -1.0 / bf);
        }
    }
    let (_, gi1) = critic1.backward(&t1, &g1, false)?;
    let (_, gi2) = critic2.backward(&t2, &g2, false)?;
    let d = obs.cols();
    let mut grad_out = Matrix::zeros(b, 2 * ACTION_DIM);
    for i in 0..b {
        for j in 0..ACTION_DIM {
            let da = gi1.get(i, d + j) + gi2.get(i, d + j);
            let a = ps.a.get(i, j);
            let du = da * squash_derivative(j, a) - alpha / bf * dlog_squash_derivative(j, a);
            let sigma = ps.log_std.get(i, j).exp();
            let dls = du * sigma * eps.get(i, j) - alpha / bf;
            grad_out.set(i, j, du);
            grad_out.set(i, ACTION_DIM + j, dls * ps.dlog_std.get(i, j));
        }
    }
    let (g, _) = actor.backward(&ps.tape, &grad_out, true)?;
    Ok((loss, g.expect("requested parameter gradients"), ps.log_pi))
}

/// Soft actor-critic with twin critics and optional temperature tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct SacAgent {
    pub cfg: AgentConfig,
    /// `obs -> hidden ReLU -> [mean(2), raw log-std(2)]`.
    pub actor: DenseNet,
    pub critic1: DenseNet,
    pub critic2: DenseNet,
    pub target1: DenseNet,
    pub target2: DenseNet,
    pub log_alpha: f64,
    actor_opt: Adam,
    critic1_opt: Adam,
    critic2_opt: Adam,
    alpha_opt: Adam,
    updates: u64,
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(cfg: AgentConfig, obs_dim: usize, rng: &mut R) -> Self {
        let actor = DenseNet::new(
            &layer_sizes(obs_dim, &cfg.hidden, 2 * ACTION_DIM),
            Activation::ReLU,
            Activation::Linear,
            cfg.actor_final_scale,
            rng,
        );
        let critic1 = new_critic(&cfg, obs_dim, rng);
        let critic2 = new_critic(&cfg, obs_dim, rng);
        Self {
            actor_opt: adam_for(&cfg, actor.param_count()),
            critic1_opt: adam_for(&cfg, critic1.param_count()),
            critic2_opt: adam_for(&cfg, critic2.param_count()),
            alpha_opt: adam_for(&cfg, 1),
            target1: critic1.clone(),
            target2: critic2.clone(),
            log_alpha: cfg.init_alpha.ln(),
            actor,
            critic1,
            critic2,
            cfg,
            updates: 0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Mean and clamped log-std heads for one observation.
    pub fn policy_head(&self, obs: &[f64]) -> Result<([f64; 2], [f64; 2]), AgentError> {
        let out = self.actor.predict(&Matrix::row_vector(obs))?;
        check_actor_output(&out)?;
        let mean = [out.get(0, 0), out.get(0, 1)];
        let ls = [
            soft_clamp_log_std(out.get(0, 2)).0,
            soft_clamp_log_std(out.get(0, 3)).0,
        ];
        Ok((mean, ls))
    }

    /// One Gaussian draw before squashing.
    pub fn sample_pre_squash<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        rng: &mut R,
    ) -> Result<[f64; 2], AgentError> {
        let (mean, ls) = self.policy_head(obs)?;
        let eps = standard_normal_matrix(1, ACTION_DIM, rng);
        Ok([
            mean[0] + ls[0].exp() * eps.get(0, 0),
            mean[1] + ls[1].exp() * eps.get(0, 1),
        ])
    }

    pub fn mean_action(&self, obs: &[f64]) -> Result<[f64; 2], AgentError> {
        let (mean, _) = self.policy_head(obs)?;
        Ok([squash(0, mean[0]), squash(1, mean[1])])
    }

    pub fn act<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        mode: ActMode,
        rng: &mut R,
    ) -> Result<[f64; 2], AgentError> {
        match mode {
            ActMode::Exploit => self.mean_action(obs),
            ActMode::Explore => {
                let u = self.sample_pre_squash(obs, rng)?;
                Ok([squash(0, u[0]), squash(1, u[1])])
            }
        }
    }

    /// Bootstrapped critic targets with next-action noise `eps` (B x 2).
    pub fn critic_targets(&self, batch: &Batch, eps: &Matrix) -> Result<Vec<f64>, AgentError> {
        let ps = sample_policy(&self.actor, &batch.next_obs, eps)?;
        let input = batch.next_obs.hcat(&ps.a);
        let q1 = self.target1.predict(&input)?;
        let q2 = self.target2.predict(&input)?;
        let alpha = self.alpha();
        Ok((0..batch.len())
            .map(|i| {
                sac_target(
                    batch.rewards[i],
                    self.cfg.gamma,
                    batch.horizons[i],
                    batch.dones[i],
                    q1.get(i, 0),
                    q2.get(i, 0),
                    alpha * ps.log_pi[i],
                )
            })
            .collect())
    }

    pub fn update<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        rng: &mut R,
    ) -> Result<LossReport, AgentError> {
        let batch = buffer.sample(self.cfg.batch_size, rng)?;
        let b = batch.len();
        let eps_next = standard_normal_matrix(b, ACTION_DIM, rng);
        let y = self.critic_targets(&batch, &eps_next)?;

        let input = batch.obs.hcat(&batch.actions);
        let (l1, g1) = critic_loss_and_grad(&self.critic1, &input, &y)?;
        let (l2, g2) = critic_loss_and_grad(&self.critic2, &input, &y)?;
        check_loss(l1, "critic1")?;
        check_loss(l2, "critic2")?;
        apply(&mut self.critic1, &g1, &mut self.critic1_opt, "critic1")?;
        apply(&mut self.critic2, &g2, &mut self.critic2_opt, "critic2")?;

        let eps = standard_normal_matrix(b, ACTION_DIM, rng);
        let (la, ga, log_pi) = sac_actor_loss_and_grad(
            &self.actor,
            &self.critic1,
            &self.critic2,
            &batch.obs,
            &eps,
            self.alpha(),
        )?;
        check_loss(la, "actor")?;
        apply(&mut self.actor, &ga, &mut self.actor_opt, "actor")?;

        if self.cfg.auto_alpha {
            let g = -log_pi
                .iter()
                .map(|lp| lp + self.cfg.target_entropy)
                .sum::<f64>()
                / b as f64;
            let mut p = [self.log_alpha];
            self.alpha_opt
                .step(&mut p, &[g])
                .map_err(|_| AgentError::Divergence(format!("temperature gradient is {g}")))?;
            self.log_alpha = p[0];
        }

        soft_update(&mut self.target1, &self.critic1, self.cfg.tau)?;
        soft_update(&mut self.target2, &self.critic2, self.cfg.tau)?;
        self.updates += 1;
        Ok(LossReport {
            critic1: l1,
            critic2: l2,
            actor: Some(la),
            alpha: self.alpha(),
        })
    }

    pub fn write_checkpoint(&self, ckpt: &mut Checkpoint) {
        ckpt.push("agent.kind", Entry::Bytes(b"SAC".to_vec()));
        ckpt.push("sac.actor", Entry::Net(self.actor.clone()));
        ckpt.push("sac.critic1", Entry::Net(self.critic1.clone()));
        ckpt.push("sac.critic2", Entry::Net(self.critic2.clone()));
        ckpt.push("sac.target1", Entry::Net(self.target1.clone()));
        ckpt.push("sac.target2", Entry::Net(self.target2.clone()));
        ckpt.push("sac.actor_opt", Entry::Adam(self.actor_opt.clone()));
        ckpt.push("sac.critic1_opt", Entry::Adam(self.critic1_opt.clone()));
        ckpt.push("sac.critic2_opt", Entry::Adam(self.critic2_opt.clone()));
        ckpt.push("sac.alpha_opt", Entry::Adam(self.alpha_opt.clone()));
        ckpt.push("sac.log_alpha", Entry::F64s(vec![self.log_alpha]));
        ckpt.push("sac.updates", Entry::U64s(vec![self.updates]));
    }

    pub fn from_checkpoint(
        cfg: AgentConfig,
        obs_dim: usize,
        ckpt: &Checkpoint,
    ) -> Result<Self, AgentError> {
        let t = SacAgent::new(cfg, obs_dim, &mut ChaCha8Rng::seed_from_u64(0));
        let log_alpha = match ckpt.f64s("sac.log_alpha")? {
            [v] => *v,
            other => return Err(shape("sac.log_alpha", 1, other.len())),
        };
        let updates = match ckpt.u64s("sac.updates")? {
            [v] => *v,
            other => return Err(shape("sac.updates", 1, other.len())),
        };
        Ok(Self {
            actor: ckpt.net_like("sac.actor", &t.actor)?,
            critic1: ckpt.net_like("sac.critic1", &t.critic1)?,
            critic2: ckpt.net_like("sac.critic2", &t.critic2)?,
            target1: ckpt.net_like("sac.target1", &t.target1)?,
            target2: ckpt.net_like("sac.target2", &t.target2)?,
            actor_opt: restore_adam(ckpt, "sac.actor_opt", t.actor.param_count())?,
            critic1_opt: restore_adam(ckpt, "sac.critic1_opt", t.critic1.param_count())?,
            critic2_opt: restore_adam(ckpt, "sac.critic2_opt", t.critic2.param_count())?,
            alpha_opt: restore_adam(ckpt, "sac.alpha_opt", 1)?,
            log_alpha,
            updates,
            cfg: t.cfg,
        })
    }
}

pub(crate) fn shape(name: &str, expected: usize, found: usize) -> AgentError {
    crate::nn::CheckpointError::Shape {
        name: name.into(),
        expected: expected.to_string(),
        found: found.to_string(),
    }
    .into()
}
