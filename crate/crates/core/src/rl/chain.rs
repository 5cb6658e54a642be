//! A small deterministic chain MDP with a value-iteration solution.

use super::apex::{EnvStep, RlEnv};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// States `0..len`. Action 0 moves left, action 1 moves right. Leaving on
/// the left pays `left_reward`, on the right `right_reward`; both end the
/// episode. Episodes start in a uniformly drawn state and are truncated
/// after `max_steps`.
#[derive(Debug, Clone)]
pub struct ChainMdp {
    pub len: usize,
    pub left_reward: f64,
    pub right_reward: f64,
    pub max_steps: usize,
    state: usize,
    steps: usize,
    rng: ChaCha8Rng,
}

impl ChainMdp {
    pub fn new(len: usize, seed: u64) -> Self {
        assert!(len >= 2);
        ChainMdp {
            len,
            left_reward: 0.2,
            right_reward: 1.0,
            max_steps: 50,
            state: 0,
            steps: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn one_hot(&self, s: usize) -> Vec<f32> {
        let mut v = vec![0.0; self.len];
        v[s] = 1.0;
        v
    }

    /// `(next state, reward, terminal)`.
    pub fn transition(&self, s: usize, action: usize) -> (usize, f64, bool) {
        match action {
            0 if s == 0 => (s, self.left_reward, true),
            0 => (s - 1, 0.0, false),
            _ if s + 1 == self.len => (s, self.right_reward, true),
            _ => (s + 1, 0.0, false),
        }
    }

    /// Optimal action values by value iteration.
    pub fn optimal_q(&self, gamma: f64) -> Vec<[f64; 2]> {
        let mut v = vec![0.0; self.len];
        let mut q = vec![[0.0; 2]; self.len];
        for _ in 0..10_000 {
            for s in 0..self.len {
                for a in 0..2 {
                    let (n, r, done) = self.transition(s, a);
                    q[s][a] = r + if done { 0.0 } else { gamma * v[n] };
                }
            }
            let next: Vec<f64> = q.iter().map(|r| r[0].max(r[1])).collect();
            let delta = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            v = next;
            if delta < 1e-14 {
                break;
            }
        }
        q
    }
}

impl RlEnv for ChainMdp {
    fn observation_dim(&self) -> usize {
        self.len
    }

    fn actions(&self) -> usize {
        2
    }

    fn reset(&mut self) -> Result<Vec<f32>, String> {
        self.state = self.rng.random_range(0..self.len);
        self.steps = 0;
        Ok(self.one_hot(self.state))
    }

    fn step(&mut self, action: usize) -> Result<EnvStep, String> {
        if action >= 2 {
            return Err(format!("action {action} out of range"));
        }
        let (next, reward, terminal) = self.transition(self.state, action);
        self.state = next;
        self.steps += 1;
        Ok(EnvStep {
            obs: self.one_hot(next),
            reward,
            terminal,
            truncated: !terminal && self.steps >= self.max_steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        let m = ChainMdp::new(5, 0);
        let q = m.optimal_q(0.9);
        for (s, row) in q.iter().enumerate() {
            assert!((row[1] - 0.9f64.powi(4 - s as i32)).abs() < 1e-12);
        }
        assert!((q[0][0] - 0.2).abs() < 1e-12);
        assert!((q[3][0] - 0.9f64.powi(3)).abs() < 1e-12);
    }
}
