use rand::Rng;

use super::{AgentError, Transition, ACTION_HIGH, ACTION_LOW};
use crate::nn::Matrix;

/// FIFO ring of transitions with uniform sampling (with replacement).
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    obs: Vec<f64>,
    next_obs: Vec<f64>,
    actions: Vec<[f64; 2]>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    horizons: Vec<u32>,
    /// Next slot to overwrite once full.
    head: usize,
}

/// Sampled minibatch laid out for network input.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_obs: Matrix,
    pub dones: Vec<bool>,
    pub horizons: Vec<u32>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_transitions(ts: &[Transition]) -> Batch {
        let obs_dim = ts.first().map_or(0, |t| t.obs.len());
        let mut buf = ReplayBuffer::new(ts.len().max(1), obs_dim);
        for t in ts {
            buf.push(t.clone()).expect("valid transition");
        }
        buf.gather(&(0..ts.len()).collect::<Vec<_>>())
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            obs_dim,
            obs: Vec::new(),
            next_obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            dones: Vec::new(),
            horizons: Vec::new(),
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn push(&mut self, t: Transition) -> Result<(), AgentError> {
        if t.obs.len() != self.obs_dim || t.next_obs.len() != self.obs_dim {
            return Err(AgentError::BadTransition(format!(
                "observation length {} / {}, buffer expects {}",
                t.obs.len(),
                t.next_obs.len(),
                self.obs_dim
            )));
        }
        let finite = t.reward.is_finite()
            && t.obs
                .iter()
                .chain(&t.next_obs)
                .chain(&t.action)
                .all(|v| v.is_finite());
        if !finite {
            return Err(AgentError::BadTransition("non-finite field".into()));
        }
        for j in 0..2 {
            if t.action[j] < ACTION_LOW[j] || t.action[j] > ACTION_HIGH[j] {
                return Err(AgentError::BadTransition(format!(
                    "action {:?} out of bounds",
                    t.action
                )));
            }
        }
        if t.horizon == 0 {
            return Err(AgentError::BadTransition("horizon must be >= 1".into()));
        }
        if self.len() < self.capacity {
            self.obs.extend_from_slice(&t.obs);
            self.next_obs.extend_from_slice(&t.next_obs);
            self.actions.push(t.action);
            self.rewards.push(t.reward);
            self.dones.push(t.done);
            self.horizons.push(t.horizon);
        } else {
            let i = self.head;
            let d = self.obs_dim;
            self.obs[i * d..(i + 1) * d].copy_from_slice(&t.obs);
            self.next_obs[i * d..(i + 1) * d].copy_from_slice(&t.next_obs);
            self.actions[i] = t.action;
            self.rewards[i] = t.reward;
            self.dones[i] = t.done;
            self.horizons[i] = t.horizon;
            self.head = (self.head + 1) % self.capacity;
        }
        Ok(())
    }

    /// Transition at storage slot `i`.
    pub fn get(&self, i: usize) -> Transition {
        let d = self.obs_dim;
        Transition {
            obs: self.obs[i * d..(i + 1) * d].to_vec(),
            action: self.actions[i],
            reward: self.rewards[i],
            next_obs: self.next_obs[i * d..(i + 1) * d].to_vec(),
            done: self.dones[i],
            horizon: self.horizons[i],
        }
    }

    /// Transitions from oldest to newest.
    pub fn iter_fifo(&self) -> impl Iterator<Item = Transition> + '_ {
        let n = self.len();
        let start = if n < self.capacity { 0 } else { self.head };
        (0..n).map(move |k| self.get((start + k) % n))
    }

    pub fn sample_indices<R: Rng + ?Sized>(
        &self,
        batch: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>, AgentError> {
        if batch > self.len() || batch == 0 {
            return Err(AgentError::InsufficientBuffer {
                have: self.len(),
                need: batch.max(1),
            });
        }
        Ok((0..batch).map(|_| rng.gen_range(0..self.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Batch, AgentError> {
        let idx = self.sample_indices(batch, rng)?;
        Ok(self.gather(&idx))
    }

    pub fn gather(&self, idx: &[usize]) -> Batch {
        let d = self.obs_dim;
        let mut obs = Vec::with_capacity(idx.len() * d);
        let mut next_obs = Vec::with_capacity(idx.len() * d);
        let mut actions = Vec::with_capacity(idx.len() * 2);
        for &i in idx {
            obs.extend_from_slice(&self.obs[i * d..(i + 1) * d]);
            next_obs.extend_from_slice(&self.next_obs[i * d..(i + 1) * d]);
            actions.extend_from_slice(&self.actions[i]);
        }
        Batch {
            obs: Matrix::from_vec(idx.len(), d, obs),
            actions: Matrix::from_vec(idx.len(), 2, actions),
            rewards: idx.iter().map(|&i| self.rewards[i]).collect(),
            next_obs: Matrix::from_vec(idx.len(), d, next_obs),
            dones: idx.iter().map(|&i| self.dones[i]).collect(),
            horizons: idx.iter().map(|&i| self.horizons[i]).collect(),
        }
    }

    /// Flat arrays for checkpointing: `(f64 payload, u64 payload)`.
    pub(crate) fn to_arrays(&self) -> (Vec<f64>, Vec<u64>) {
        let mut f = Vec::with_capacity(self.obs.len() * 2 + self.len() * 3);
        f.extend_from_slice(&self.obs);
        f.extend_from_slice(&self.next_obs);
        for a in &self.actions {
            f.extend_from_slice(a);
        }
        f.extend_from_slice(&self.rewards);
        let mut u = vec![
            self.capacity as u64,
            self.obs_dim as u64,
            self.head as u64,
            self.len() as u64,
        ];
        u.extend(self.dones.iter().map(|d| *d as u64));
        u.extend(self.horizons.iter().map(|h| *h as u64));
        (f, u)
    }

    pub(crate) fn from_arrays(f: &[f64], u: &[u64]) -> Option<Self> {
        let (&[cap, dim, head, n], rest) = u.split_first_chunk::<4>()?;
        let (cap, d, head, n) = (cap as usize, dim as usize, head as usize, n as usize);
        if rest.len() != 2 * n || f.len() != 2 * n * d + 3 * n || cap == 0 || n > cap {
            return None;
        }
        let (obs, f) = f.split_at(n * d);
        let (next_obs, f) = f.split_at(n * d);
        let (acts, rewards) = f.split_at(2 * n);
        Some(Self {
            capacity: cap,
            obs_dim: d,
            obs: obs.to_vec(),
            next_obs: next_obs.to_vec(),
            actions: acts.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
            rewards: rewards.to_vec(),
            dones: rest[..n].iter().map(|v| *v != 0).collect(),
            horizons: rest[n..].iter().map(|v| *v as u32).collect(),
            head,
        })
    }
}
