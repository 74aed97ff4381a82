use std::collections::VecDeque;

use super::{AgentError, Transition};

/// Folds consecutive single-step transitions into one: discounted reward
/// sum, first observation and action, last next-observation and done flag.
pub fn assemble_nstep(window: &[Transition], gamma: f64) -> Result<Transition, AgentError> {
    let (first, last) = match (window.first(), window.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(AgentError::BadTransition("empty n-step window".into())),
    };
    for pair in window.windows(2) {
        if pair[0].next_obs != pair[1].obs {
            return Err(AgentError::BadTransition(
                "n-step window is not consecutive".into(),
            ));
        }
        if pair[0].done {
            return Err(AgentError::BadTransition(
                "terminal transition inside n-step window".into(),
            ));
        }
    }
    let mut reward = 0.0;
    let mut discount = 1.0;
    let mut horizon = 0;
    for t in window {
        reward += discount * t.reward;
        discount *= gamma;
        horizon += t.horizon;
    }
    Ok(Transition {
        obs: first.obs.clone(),
        action: first.action,
        reward,
        next_obs: last.next_obs.clone(),
        done: last.done,
        horizon,
    })
}

/// Streaming n-step assembler: every pushed step eventually yields exactly
/// one aggregated transition.
#[derive(Debug, Clone, PartialEq)]
pub struct NStepQueue {
    n: usize,
    gamma: f64,
    window: VecDeque<Transition>,
}

impl NStepQueue {
    pub fn new(n: usize, gamma: f64) -> Self {
        assert!(n >= 1, "n-step window must be >= 1");
        Self {
            n,
            gamma,
            window: VecDeque::with_capacity(n),
        }
    }

    pub fn pending(&self) -> usize {
        self.window.len()
    }

    /// Adds a step. `episode_end` flushes every remaining suffix window
    /// (the windows shrink at the episode boundary).
    pub fn push(
        &mut self,
        t: Transition,
        episode_end: bool,
    ) -> Result<Vec<Transition>, AgentError> {
        self.window.push_back(t);
        let mut out = Vec::new();
        if self.window.len() == self.n {
            out.push(assemble_nstep(self.window.make_contiguous(), self.gamma)?);
            self.window.pop_front();
        }
        if episode_end {
            while !self.window.is_empty() {
                out.push(assemble_nstep(self.window.make_contiguous(), self.gamma)?);
                self.window.pop_front();
            }
        }
        Ok(out)
    }

    pub fn clear(&mut self) {
        self.window.clear();
    }
}
