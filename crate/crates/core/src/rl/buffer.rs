//! n-step transitions and the uniform replay ring.

use rand::Rng;
use std::collections::VecDeque;
use std::sync::Arc;

pub type Obs = Arc<[f32]>;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Obs,
    pub action: usize,
    /// Discounted sum of up to `n` rewards.
    pub reward: f64,
    pub next_obs: Obs,
    /// No bootstrap from `next_obs`.
    pub done: bool,
    /// `gamma^k` for the `k` rewards summed.
    pub discount: f64,
}

/// Turns a stream of one-step experience into n-step transitions.
#[derive(Debug, Clone)]
pub struct NStepBuilder {
    n: usize,
    gamma: f64,
    pending: VecDeque<(Obs, usize, f64)>,
}

impl NStepBuilder {
    pub fn new(n: usize, gamma: f64) -> Self {
        assert!(n >= 1, "n-step horizon must be at least 1");
        NStepBuilder {
            n,
            gamma,
            pending: VecDeque::with_capacity(n),
        }
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    fn emit_front(&mut self, next_obs: &Obs, done: bool) -> Transition {
        let mut reward = 0.0;
        let mut discount = 1.0;
        for (_, _, r) in &self.pending {
            reward += discount * r;
            discount *= self.gamma;
        }
        let (obs, action, _) = self.pending.pop_front().expect("pending transition");
        Transition {
            obs,
            action,
            reward,
            next_obs: next_obs.clone(),
            done,
            discount,
        }
    }

    /// Records `(obs, action, reward, next_obs)`. `terminal` ends the
    /// episode with no bootstrap; `truncated` ends it with one.
    pub fn push(
        &mut self,
        obs: Obs,
        action: usize,
        reward: f64,
        next_obs: &Obs,
        terminal: bool,
        truncated: bool,
    ) -> Vec<Transition> {
        self.pending.push_back((obs, action, reward));
        let mut out = Vec::new();
        if terminal || truncated {
            while !self.pending.is_empty() {
                out.push(self.emit_front(next_obs, terminal));
            }
        } else if self.pending.len() == self.n {
            out.push(self.emit_front(next_obs, false));
        }
        out
    }

    pub fn clear(&mut self) {
        self.pending.clear();
    }
}

/// Fixed-capacity ring with uniform sampling (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    next: usize,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            data: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            next: 0,
            pushed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Transitions ever written.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        self.pushed += 1;
    }

    pub fn extend(&mut self, ts: impl IntoIterator<Item = Transition>) {
        for t in ts {
            self.push(t);
        }
    }

    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        assert!(!self.data.is_empty(), "sampling from an empty buffer");
        (0..batch)
            .map(|_| rng.random_range(0..self.data.len()))
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<&Transition> {
        self.sample_indices(batch, rng)
            .into_iter()
            .map(|i| &self.data[i])
            .collect()
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.data.get(i)
    }
}
