//! Trainer configuration, double-Q targets and the learner update.

use super::buffer::{ReplayBuffer, Transition};
use super::network::{
    argmax, huber_loss_and_grad, Aggregation, NetError, NetworkShape, Optimizer, OptimizerKind,
    QNetwork,
};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid trainer config: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: String, msg: String },
    #[error("environment: {0}")]
    Env(String),
    #[error("training aborted: {0}")]
    Aborted(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub n_step: usize,
    /// `(learner step, lr)` breakpoints, linearly interpolated.
    pub lr_schedule: Vec<(f64, f64)>,
    pub train_batch: usize,
    pub rollout_fragment: usize,
    pub target_update: u64,
    pub learning_starts: usize,
    pub buffer_capacity: usize,
    pub workers: usize,
    pub total_timesteps: u64,
    /// Optional cap on gradient steps.
    pub max_learner_steps: Option<u64>,
    pub epsilon_base: f64,
    pub epsilon_alpha: f64,
    pub hidden: Vec<usize>,
    pub aggregation: Aggregation,
    pub optimizer: OptimizerKind,
    pub grad_clip: Option<f64>,
    /// Sampled transitions per collected transition. New fragments are
    /// taken in only once the learner has caught up, so slow learning
    /// throttles the actors through the bounded queue.
    pub replay_ratio: f64,
    /// Learner steps between weight broadcasts.
    pub publish_every: u64,
    /// Learner steps between training-curve rows.
    pub log_every: u64,
    /// Learner steps between checkpoints (0 disables periodic saves).
    pub checkpoint_every: u64,
    /// Bound of the fragment queue.
    pub queue_capacity: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            gamma: 0.99,
            n_step: 3,
            lr_schedule: vec![(0.0, 2e-5), (1e6, 5e-6)],
            train_batch: 50,
            rollout_fragment: 50,
            target_update: 5_000,
            learning_starts: 5_000,
            buffer_capacity: 200_000,
            workers: 4,
            total_timesteps: 2_000_000,
            max_learner_steps: None,
            epsilon_base: 0.4,
            epsilon_alpha: 7.0,
            hidden: vec![64, 64, 64],
            aggregation: Aggregation::Mean,
            optimizer: OptimizerKind::Adam,
            grad_clip: Some(40.0),
            replay_ratio: 4.0,
            publish_every: 100,
            log_every: 500,
            checkpoint_every: 0,
            queue_capacity: 64,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if self.n_step == 0
            || self.train_batch == 0
            || self.rollout_fragment == 0
            || self.workers == 0
        {
            return bad("n_step, train_batch, rollout_fragment and workers must be positive");
        }
        if self.target_update == 0
            || self.buffer_capacity == 0
            || self.publish_every == 0
            || self.log_every == 0
        {
            return bad(
                "target_update, buffer_capacity, publish_every and log_every must be positive",
            );
        }
        if self.queue_capacity == 0 || self.total_timesteps == 0 {
            return bad("queue_capacity and total_timesteps must be positive");
        }
        if self.learning_starts < self.train_batch {
            return bad("learning_starts must be at least one batch");
        }
        if self.buffer_capacity < self.learning_starts {
            return bad("buffer_capacity must hold learning_starts transitions");
        }
        LrSchedule::new(self.lr_schedule.clone())?;
        if !(self.epsilon_base >= 0.0 && self.epsilon_base <= 1.0) || !(self.epsilon_alpha >= 0.0) {
            return bad("epsilon_base must lie in [0, 1] and epsilon_alpha be non-negative");
        }
        if self.hidden.len() != 3 || self.hidden.contains(&0) {
            return bad("the trunk has exactly three non-empty layers");
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return bad("grad_clip must be positive");
        }
        if !(self.replay_ratio > 0.0) {
            return bad("replay_ratio must be positive");
        }
        Ok(())
    }

    /// Stable digest of the serialized config.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn network_shape(&self, inputs: usize, actions: usize) -> NetworkShape {
        NetworkShape {
            inputs,
            hidden: self.hidden.clone(),
            actions,
        }
    }
}

/// Piecewise-linear learning-rate schedule, flat beyond the end points.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    points: Vec<(f64, f64)>,
}

impl LrSchedule {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, TrainError> {
        if points.is_empty() {
            return Err(TrainError::Config("empty lr schedule".into()));
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(TrainError::Config(
                "lr schedule breakpoints must increase".into(),
            ));
        }
        if points.iter().any(|&(_, lr)| !(lr > 0.0)) {
            return Err(TrainError::Config("learning rates must be positive".into()));
        }
        Ok(LrSchedule { points })
    }

    pub fn value(&self, step: u64) -> f64 {
        let t = step as f64;
        let first = self.points[0];
        if t <= first.0 {
            return first.1;
        }
        for w in self.points.windows(2) {
            let ((t0, v0), (t1, v1)) = (w[0], w[1]);
            if t < t1 {
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
            }
        }
        self.points.last().unwrap().1
    }
}

/// Per-actor exploration rates `base^(1 + alpha i / (N - 1))`.
pub fn epsilon_ladder(base: f64, alpha: f64, actors: usize) -> Vec<f64> {
    if actors == 1 {
        return vec![base];
    }
    (0..actors)
        .map(|i| base.powf(1.0 + alpha * i as f64 / (actors - 1) as f64))
        .collect()
}

pub(crate) fn stack(
    rows: impl ExactSizeIterator<Item = impl AsRef<[f32]>>,
    width: usize,
) -> Array2<f64> {
    let n = rows.len();
    let mut x = Array2::zeros((n, width));
    for (i, r) in rows.enumerate() {
        for (dst, &src) in x.row_mut(i).iter_mut().zip(r.as_ref()) {
            *dst = src as f64;
        }
    }
    x
}

/// `y = R + gamma^k Q_target(s', argmax_a Q_main(s', a))`, with no
/// bootstrap on terminal transitions.
pub fn td_target(
    batch: &[&Transition],
    main: &QNetwork,
    target: &QNetwork,
) -> Result<Vec<f64>, NetError> {
    let next = stack(batch.iter().map(|t| t.next_obs.clone()), main.inputs());
    let q_main = main.q_batch(next.clone())?;
    let q_target = target.q_batch(next)?;
    Ok(batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if t.done {
                t.reward
            } else {
                let best = argmax(q_main.row(i).as_slice().expect("row-major"));
                t.reward + t.discount * q_target[[i, best]]
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerStats {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

/// Owns the main and target networks and the optimizer state.
#[derive(Debug, Clone)]
pub struct Learner {
    pub main: QNetwork,
    pub target: QNetwork,
    optimizer: Optimizer,
    schedule: LrSchedule,
    config: TrainerConfig,
    steps: u64,
    dir_weight: f64,
    dir_decay: f64,
    rng: ChaCha8Rng,
}

impl Learner {
    pub fn new(
        config: TrainerConfig,
        inputs: usize,
        actions: usize,
        dir_weight: f64,
        dir_decay: f64,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        let main = QNetwork::new(
            config.network_shape(inputs, actions),
            config.aggregation,
            config.seed,
        );
        Self::from_network(config, main, dir_weight, dir_decay)
    }

    pub fn from_network(
        config: TrainerConfig,
        main: QNetwork,
        dir_weight: f64,
        dir_decay: f64,
    ) -> Result<Self, TrainError> {
        let schedule = LrSchedule::new(config.lr_schedule.clone())?;
        Ok(Learner {
            target: main.clone(),
            optimizer: Optimizer::new(config.optimizer, &main),
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_1ea7),
            main,
            schedule,
            config,
            steps: 0,
            dir_weight,
            dir_decay,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn dir_weight(&self) -> f64 {
        self.dir_weight
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn lr(&self) -> f64 {
        self.schedule.value(self.steps)
    }

    /// Gradient step on an explicit batch.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<LearnerStats, TrainError> {
        let targets = td_target(batch, &self.main, &self.target)?;
        let x = stack(batch.iter().map(|t| t.obs.clone()), self.main.inputs());
        let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
        let (loss, mut grads) = huber_loss_and_grad(&self.main, x, &actions, &targets);
        if !loss.is_finite() {
            return Err(NetError::NonFinite("loss").into());
        }
        let grad_norm = grads.norm();
        if let Some(clip) = self.config.grad_clip {
            if grad_norm > clip {
                grads.scale(clip / grad_norm);
            }
        }
        let lr = self.lr();
        self.optimizer.step(&mut self.main, &grads, lr);
        self.steps += 1;
        if self.steps.is_multiple_of(self.config.target_update) {
            self.target = self.main.clone();
        }
        self.dir_weight *= self.dir_decay;
        Ok(LearnerStats {
            step: self.steps,
            loss,
            lr,
            grad_norm,
        })
    }

    /// Samples a batch and updates; `None` while the buffer holds fewer
    /// than `learning_starts` transitions.
    pub fn learner_step(
        &mut self,
        buffer: &ReplayBuffer,
    ) -> Result<Option<LearnerStats>, TrainError> {
        if buffer.len() < self.config.learning_starts {
            return Ok(None);
        }
        let idx = buffer.sample_indices(self.config.train_batch, &mut self.rng);
        let batch: Vec<&Transition> = idx.iter().map(|&i| buffer.get(i).unwrap()).collect();
        self.update(&batch).map(Some)
    }

    pub fn checkpoint(&self, env_steps: u64, extra_hash: &str) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config_hash: combined_hash(&self.config, extra_hash),
            learner_steps: self.steps,
            env_steps,
            dir_weight: self.dir_weight,
            trainer: self.config.clone(),
            network: self.main.clone(),
        }
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

pub fn combined_hash(config: &TrainerConfig, extra: &str) -> String {
    let mut h = Sha256::new();
    h.update(config.hash().as_bytes());
    h.update(extra.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub learner_steps: u64,
    pub env_steps: u64,
    pub dir_weight: f64,
    pub trainer: TrainerConfig,
    pub network: QNetwork,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let err = |msg: String| TrainError::Checkpoint {
            path: path.display().to_string(),
            msg,
        };
        let text = serde_json::to_string(self).map_err(|e| err(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text).map_err(|e| err(e.to_string()))?;
        std::fs::rename(&tmp, path).map_err(|e| err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let err = |msg: String| TrainError::Checkpoint {
            path: path.display().to_string(),
            msg,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(err(format!("unsupported version {}", ck.version)));
        }
        Ok(ck)
    }
}
