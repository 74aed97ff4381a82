use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sac::shape;
use super::{
    adam_for, apply, check_actor_output, check_loss, clamp_action, critic_loss_and_grad, discount,
    layer_sizes, new_critic, restore_adam, squash, squash_derivative, standard_normal_matrix,
    ActMode, AgentConfig, AgentError, Batch, LossReport, ReplayBuffer, ACTION_DIM,
};
use crate::nn::{soft_update, Activation, Adam, Checkpoint, DenseNet, Entry, Gradients, Matrix};

/// Target-policy smoothing noise clip.
pub fn clip_noise(noise: f64, clip: f64) -> f64 {
    noise.clamp(-clip, clip)
}

/// `r + gamma^h * (1 - done) * min(q1, q2)`.
pub fn td3_target(reward: f64, gamma: f64, horizon: u32, done: bool, q1: f64, q2: f64) -> f64 {
    if done {
        reward
    } else {
        reward + discount(gamma, horizon) * q1.min(q2)
    }
}

/// Twin-delayed deterministic policy gradient learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Td3Agent {
    pub cfg: AgentConfig,
    /// `obs -> hidden ReLU -> 2 linear`, squashed per dimension.
    pub actor: DenseNet,
    pub actor_target: DenseNet,
    pub critic1: DenseNet,
    pub critic2: DenseNet,
    pub target1: DenseNet,
    pub target2: DenseNet,
    actor_opt: Adam,
    critic1_opt: Adam,
    critic2_opt: Adam,
    updates: u64,
}

fn squash_matrix(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for i in 0..m.rows() {
        for j in 0..ACTION_DIM {
            out.set(i, j, squash(j, m.get(i, j)));
        }
    }
    out
}

impl Td3Agent {
    pub fn new<R: Rng + ?Sized>(cfg: AgentConfig, obs_dim: usize, rng: &mut R) -> Self {
        let actor = DenseNet::new(
            &layer_sizes(obs_dim, &cfg.hidden, ACTION_DIM),
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
            actor_target: actor.clone(),
            target1: critic1.clone(),
            target2: critic2.clone(),
            actor,
            critic1,
            critic2,
            cfg,
            updates: 0,
        }
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn deterministic_action(&self, obs: &[f64]) -> Result<[f64; 2], AgentError> {
        let out = self.actor.predict(&Matrix::row_vector(obs))?;
        check_actor_output(&out)?;
        Ok([squash(0, out.get(0, 0)), squash(1, out.get(0, 1))])
    }

    pub fn act<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        mode: ActMode,
        rng: &mut R,
    ) -> Result<[f64; 2], AgentError> {
        let a = self.deterministic_action(obs)?;
        match mode {
            ActMode::Exploit => Ok(a),
            ActMode::Explore => {
                let n = standard_normal_matrix(1, ACTION_DIM, rng);
                let s = self.cfg.explore_noise;
                Ok(clamp_action([
                    a[0] + s * n.get(0, 0),
                    a[1] + s * n.get(0, 1),
                ]))
            }
        }
    }

    /// Bootstrapped critic targets given raw (unscaled, unclipped) standard
    /// normal smoothing noise (B x 2).
    pub fn critic_targets(&self, batch: &Batch, noise: &Matrix) -> Result<Vec<f64>, AgentError> {
        let out = self.actor_target.predict(&batch.next_obs)?;
        check_actor_output(&out)?;
        let mut a = squash_matrix(&out);
        for i in 0..a.rows() {
            let mut row = [0.0; 2];
            for (j, r) in row.iter_mut().enumerate() {
                *r = a.get(i, j)
                    + clip_noise(self.cfg.policy_noise * noise.get(i, j), self.cfg.noise_clip);
            }
            a.row_mut(i).copy_from_slice(&clamp_action(row));
        }
        let input = batch.next_obs.hcat(&a);
        let q1 = self.target1.predict(&input)?;
        let q2 = self.target2.predict(&input)?;
        Ok((0..batch.len())
            .map(|i| {
                td3_target(
                    batch.rewards[i],
                    self.cfg.gamma,
                    batch.horizons[i],
                    batch.dones[i],
                    q1.get(i, 0),
                    q2.get(i, 0),
                )
            })
            .collect())
    }

    /// Deterministic policy objective `-mean Q1(s, pi(s))` and its gradient.
    pub fn actor_loss_and_grad(&self, obs: &Matrix) -> Result<(f64, Gradients), AgentError> {
        let (out, tape) = self.actor.forward(obs)?;
        check_actor_output(&out)?;
        let a = squash_matrix(&out);
        let b = obs.rows();
        let (q, qt) = self.critic1.forward(&obs.hcat(&a))?;
        let loss = -q.data().iter().sum::<f64>() / b as f64;
        let gq = Matrix::from_vec(b, 1, vec![-1.0 / b as f64; b]);
        let (_, gin) = self.critic1.backward(&qt, &gq, false)?;
        let d = obs.cols();
        let mut grad_out = Matrix::zeros(b, ACTION_DIM);
        for i in 0..b {
            for j in 0..ACTION_DIM {
                grad_out.set(i, j, gin.get(i, d + j) * squash_derivative(j, a.get(i, j)));
            }
        }
        let (g, _) = self.actor.backward(&tape, &grad_out, true)?;
        Ok((loss, g.expect("requested parameter gradients")))
    }

    /// Critic step every call; actor and all targets only when
    /// `step_index % policy_delay == 0`.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        rng: &mut R,
        step_index: u64,
    ) -> Result<LossReport, AgentError> {
        let batch = buffer.sample(self.cfg.batch_size, rng)?;
        let noise = standard_normal_matrix(batch.len(), ACTION_DIM, rng);
        let y = self.critic_targets(&batch, &noise)?;

        let input = batch.obs.hcat(&batch.actions);
        let (l1, g1) = critic_loss_and_grad(&self.critic1, &input, &y)?;
        let (l2, g2) = critic_loss_and_grad(&self.critic2, &input, &y)?;
        check_loss(l1, "critic1")?;
        check_loss(l2, "critic2")?;
        apply(&mut self.critic1, &g1, &mut self.critic1_opt, "critic1")?;
        apply(&mut self.critic2, &g2, &mut self.critic2_opt, "critic2")?;

        let mut actor_loss = None;
        if step_index % self.cfg.policy_delay == 0 {
            let (la, ga) = self.actor_loss_and_grad(&batch.obs)?;
            check_loss(la, "actor")?;
            apply(&mut self.actor, &ga, &mut self.actor_opt, "actor")?;
            soft_update(&mut self.actor_target, &self.actor, self.cfg.tau)?;
            soft_update(&mut self.target1, &self.critic1, self.cfg.tau)?;
            soft_update(&mut self.target2, &self.critic2, self.cfg.tau)?;
            actor_loss = Some(la);
        }
        self.updates += 1;
        Ok(LossReport {
            critic1: l1,
            critic2: l2,
            actor: actor_loss,
            alpha: 0.0,
        })
    }

    pub fn write_checkpoint(&self, ckpt: &mut Checkpoint) {
        ckpt.push("agent.kind", Entry::Bytes(b"TD3".to_vec()));
        ckpt.push("td3.actor", Entry::Net(self.actor.clone()));
        ckpt.push("td3.actor_target", Entry::Net(self.actor_target.clone()));
        ckpt.push("td3.critic1", Entry::Net(self.critic1.clone()));
        ckpt.push("td3.critic2", Entry::Net(self.critic2.clone()));
        ckpt.push("td3.target1", Entry::Net(self.target1.clone()));
        ckpt.push("td3.target2", Entry::Net(self.target2.clone()));
        ckpt.push("td3.actor_opt", Entry::Adam(self.actor_opt.clone()));
        ckpt.push("td3.critic1_opt", Entry::Adam(self.critic1_opt.clone()));
        ckpt.push("td3.critic2_opt", Entry::Adam(self.critic2_opt.clone()));
        ckpt.push("td3.updates", Entry::U64s(vec![self.updates]));
    }

    pub fn from_checkpoint(
        cfg: AgentConfig,
        obs_dim: usize,
        ckpt: &Checkpoint,
    ) -> Result<Self, AgentError> {
        let t = Td3Agent::new(cfg, obs_dim, &mut ChaCha8Rng::seed_from_u64(0));
        let updates = match ckpt.u64s("td3.updates")? {
            [v] => *v,
            other => return Err(shape("td3.updates", 1, other.len())),
        };
        Ok(Self {
            actor: ckpt.net_like("td3.actor", &t.actor)?,
            actor_target: ckpt.net_like("td3.actor_target", &t.actor_target)?,
            critic1: ckpt.net_like("td3.critic1", &t.critic1)?,
            critic2: ckpt.net_like("td3.critic2", &t.critic2)?,
            target1: ckpt.net_like("td3.target1", &t.target1)?,
            target2: ckpt.net_like("td3.target2", &t.target2)?,
            actor_opt: restore_adam(ckpt, "td3.actor_opt", t.actor.param_count())?,
            critic1_opt: restore_adam(ckpt, "td3.critic1_opt", t.critic1.param_count())?,
            critic2_opt: restore_adam(ckpt, "td3.critic2_opt", t.critic2.param_count())?,
            updates,
            cfg: t.cfg,
        })
    }
}
