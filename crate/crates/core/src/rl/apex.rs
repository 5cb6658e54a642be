//! Asynchronous actors feeding a single learner through a bounded queue.

use super::buffer::{NStepBuilder, Obs, ReplayBuffer, Transition};
use super::learner::{epsilon_ladder, Checkpoint, Learner, TrainError, TrainerConfig};
use super::network::{argmax, QNetwork};
use crossbeam_channel::{bounded, RecvTimeoutError, SendTimeoutError, Sender};
use log::{info, warn};
use parking_lot::{Mutex, RwLock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub obs: Vec<f32>,
    pub reward: f64,
    /// Episode over, no bootstrap.
    pub terminal: bool,
    /// Episode cut short, bootstrap from `obs`.
    pub truncated: bool,
}

/// Minimal episodic interface the trainer drives.
pub trait RlEnv {
    fn observation_dim(&self) -> usize;
    fn actions(&self) -> usize;
    fn reset(&mut self) -> Result<Vec<f32>, String>;
    fn step(&mut self, action: usize) -> Result<EnvStep, String>;
    fn set_dir_weight(&mut self, _w: f64) {}
}

/// Immutable weights broadcast to actors.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub version: u64,
    pub network: Arc<QNetwork>,
    pub dir_weight: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Fragment {
    pub actor: usize,
    pub transitions: Vec<Transition>,
    pub steps: u64,
    pub episode_returns: Vec<f64>,
    pub incidents: u64,
}

/// Epsilon-greedy choice; ties in Q go to the lowest index.
pub fn select_action<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..q.len())
    } else {
        argmax(q)
    }
}

pub struct Actor<E: RlEnv> {
    pub id: usize,
    pub epsilon: f64,
    env: E,
    rng: ChaCha8Rng,
    nstep: NStepBuilder,
    obs: Option<Obs>,
    episode_return: f64,
}

impl<E: RlEnv> Actor<E> {
    pub fn new(id: usize, env: E, epsilon: f64, n_step: usize, gamma: f64, seed: u64) -> Self {
        Actor {
            id,
            epsilon,
            env,
            rng: ChaCha8Rng::seed_from_u64(
                seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(id as u64 + 1)),
            ),
            nstep: NStepBuilder::new(n_step, gamma),
            obs: None,
            episode_return: 0.0,
        }
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    fn restart(&mut self) -> Result<Obs, String> {
        self.nstep.clear();
        self.episode_return = 0.0;
        let o: Obs = Arc::from(self.env.reset()?);
        self.obs = Some(o.clone());
        Ok(o)
    }

    /// Runs `len` environment steps under `net`.
    pub fn collect(&mut self, net: &QNetwork, dir_weight: f64, len: usize) -> Fragment {
        self.env.set_dir_weight(dir_weight);
        let mut frag = Fragment {
            actor: self.id,
            ..Fragment::default()
        };
        let mut failures = 0;
        while frag.steps < len as u64 {
            let obs = match self.obs.clone() {
                Some(o) => o,
                None => match self.restart() {
                    Ok(o) => o,
                    Err(e) => {
                        warn!("actor {}: reset failed: {e}", self.id);
                        frag.incidents += 1;
                        failures += 1;
                        if failures > 10 {
                            break;
                        }
                        continue;
                    }
                },
            };
            let action = match net.q_values(&obs) {
                Ok(q) => select_action(&q, self.epsilon, &mut self.rng),
                Err(e) => {
                    warn!("actor {}: {e}; acting uniformly", self.id);
                    frag.incidents += 1;
                    self.rng.random_range(0..self.env.actions())
                }
            };
            match self.env.step(action) {
                Ok(step) => {
                    frag.steps += 1;
                    self.episode_return += step.reward;
                    let next: Obs = Arc::from(step.obs);
                    frag.transitions.extend(self.nstep.push(
                        obs,
                        action,
                        step.reward,
                        &next,
                        step.terminal,
                        step.truncated,
                    ));
                    if step.terminal || step.truncated {
                        frag.episode_returns.push(self.episode_return);
                        self.obs = None;
                        self.episode_return = 0.0;
                    } else {
                        self.obs = Some(next);
                    }
                }
                Err(e) => {
                    warn!("actor {}: episode abandoned: {e}", self.id);
                    frag.incidents += 1;
                    self.obs = None;
                    self.nstep.clear();
                }
            }
        }
        frag
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub learner_step: u64,
    pub env_steps: u64,
    pub loss: Option<f64>,
    pub mean_return: Option<f64>,
    pub epsilon: f64,
    pub dir_weight: f64,
    pub lr: f64,
}

pub fn write_curve_csv(path: &std::path::Path, rows: &[CurveRow]) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| TrainError::Io(e.into()))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    w.write_record([
        "learner_step",
        "env_steps",
        "loss",
        "mean_episode_return",
        "epsilon",
        "dir_weight",
        "lr",
    ])
    .map_err(|e| TrainError::Io(e.into()))?;
    for r in rows {
        w.write_record([
            r.learner_step.to_string(),
            r.env_steps.to_string(),
            opt(r.loss),
            opt(r.mean_return),
            r.epsilon.to_string(),
            r.dir_weight.to_string(),
            r.lr.to_string(),
        ])
        .map_err(|e| TrainError::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Written periodically and at shutdown.
    pub checkpoint_path: Option<PathBuf>,
    /// Mixed into the checkpoint's config hash.
    pub config_tag: String,
    pub initial: Option<QNetwork>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub curve: Vec<CurveRow>,
    pub env_steps: u64,
    pub episode_returns: Vec<f64>,
    pub incidents: u64,
    /// Set when a component panicked or failed.
    pub aborted: Option<String>,
}

fn send_fragment(tx: &Sender<Fragment>, mut frag: Fragment, stop: &AtomicBool) -> bool {
    loop {
        match tx.send_timeout(frag, Duration::from_millis(50)) {
            Ok(()) => return true,
            Err(SendTimeoutError::Timeout(f)) => {
                if stop.load(Ordering::Relaxed) {
                    return false;
                }
                frag = f;
            }
            Err(SendTimeoutError::Disconnected(_)) => return false,
        }
    }
}

fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Trains with `config.workers` actor threads, each owning the environment
/// returned by `make_env(actor_index)`.
pub fn train<E, F>(
    config: &TrainerConfig,
    make_env: F,
    dir_weight: f64,
    dir_decay: f64,
    options: &TrainOptions,
) -> Result<TrainOutcome, TrainError>
where
    E: RlEnv + Send,
    F: Fn(usize) -> Result<E, String> + Sync,
{
    config.validate()?;
    let probe = make_env(0).map_err(TrainError::Env)?;
    let (inputs, actions) = (probe.observation_dim(), probe.actions());
    let mut learner = match &options.initial {
        Some(net) => Learner::from_network(config.clone(), net.clone(), dir_weight, dir_decay)?,
        None => Learner::new(config.clone(), inputs, actions, dir_weight, dir_decay)?,
    };
    let mut probe = Some(probe);
    let ladder = epsilon_ladder(config.epsilon_base, config.epsilon_alpha, config.workers);
    let mean_eps = ladder.iter().sum::<f64>() / ladder.len() as f64;

    let snapshot = RwLock::new(Arc::new(Snapshot {
        version: 0,
        network: Arc::new(learner.main.clone()),
        dir_weight: learner.dir_weight(),
    }));
    let stop = AtomicBool::new(false);
    let failure: Mutex<Option<String>> = Mutex::new(None);
    let (tx, rx) = bounded::<Fragment>(config.queue_capacity);

    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut curve = Vec::new();
    let mut env_steps = 0u64;
    let mut incidents = 0u64;
    let mut episode_returns = Vec::new();

    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (i, &eps) in ladder.iter().enumerate() {
            let tx = tx.clone();
            let env = if i == 0 { probe.take() } else { None };
            let (snapshot, stop, failure, make_env) = (&snapshot, &stop, &failure, &make_env);
            handles.push(scope.spawn(move || {
                let body = AssertUnwindSafe(|| -> Result<(), String> {
                    let env = match env {
                        Some(e) => e,
                        None => make_env(i)?,
                    };
                    let mut actor =
                        Actor::new(i, env, eps, config.n_step, config.gamma, config.seed);
                    let mut local = snapshot.read().clone();
                    while !stop.load(Ordering::Relaxed) {
                        let latest = snapshot.read().clone();
                        if latest.version != local.version {
                            local = latest;
                        }
                        let frag = actor.collect(
                            &local.network,
                            local.dir_weight,
                            config.rollout_fragment,
                        );
                        if !send_fragment(&tx, frag, stop) {
                            break;
                        }
                    }
                    Ok(())
                });
                let reason = match catch_unwind(body) {
                    Ok(Ok(())) => None,
                    Ok(Err(e)) => Some(format!("actor {i}: {e}")),
                    Err(p) => Some(format!("actor {i} panicked: {}", panic_message(&*p))),
                };
                if let Some(r) = reason {
                    failure.lock().get_or_insert(r);
                    stop.store(true, Ordering::Relaxed);
                }
            }));
        }
        drop(tx);

        let learner_loop = AssertUnwindSafe(|| -> Result<(), TrainError> {
            let mut losses = Vec::new();
            let mut returns = Vec::new();
            let mut absorb = |frag: Fragment,
                              buffer: &mut ReplayBuffer,
                              env_steps: &mut u64,
                              returns: &mut Vec<f64>| {
                *env_steps += frag.steps;
                incidents += frag.incidents;
                returns.extend_from_slice(&frag.episode_returns);
                episode_returns.extend_from_slice(&frag.episode_returns);
                buffer.extend(frag.transitions);
            };
            loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                if env_steps >= config.total_timesteps
                    || config
                        .max_learner_steps
                        .is_some_and(|m| learner.steps() >= m)
                {
                    break;
                }
                let allowed = (config.replay_ratio * buffer.pushed() as f64
                    / config.train_batch as f64) as u64;
                let can_learn = buffer.len() >= config.learning_starts && learner.steps() < allowed;
                if !can_learn {
                    match rx.recv_timeout(Duration::from_millis(100)) {
                        Ok(frag) => absorb(frag, &mut buffer, &mut env_steps, &mut returns),
                        Err(RecvTimeoutError::Timeout) => {}
                        Err(RecvTimeoutError::Disconnected) => {
                            return Err(TrainError::Aborted("all actors stopped".into()));
                        }
                    }
                    continue;
                }
                let stats = learner
                    .learner_step(&buffer)?
                    .expect("buffer holds learning_starts transitions");
                losses.push(stats.loss);
                let step = learner.steps();
                if step % config.publish_every == 0 {
                    *snapshot.write() = Arc::new(Snapshot {
                        version: step,
                        network: Arc::new(learner.main.clone()),
                        dir_weight: learner.dir_weight(),
                    });
                }
                if step % config.log_every == 0 {
                    let mean =
                        |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
                    let row = CurveRow {
                        learner_step: step,
                        env_steps,
                        loss: mean(&losses),
                        mean_return: mean(&returns),
                        epsilon: mean_eps,
                        dir_weight: learner.dir_weight(),
                        lr: learner.lr(),
                    };
                    info!(
                        "step {} env {} loss {:?} return {:?} w {:.4}",
                        row.learner_step, row.env_steps, row.loss, row.mean_return, row.dir_weight
                    );
                    curve.push(row);
                    losses.clear();
                    returns.clear();
                }
                if config.checkpoint_every > 0 && step % config.checkpoint_every == 0 {
                    if let Some(path) = &options.checkpoint_path {
                        learner
                            .checkpoint(env_steps, &options.config_tag)
                            .save(path)?;
                    }
                }
            }
            Ok(())
        });
        match catch_unwind(learner_loop) {
            Ok(Ok(())) => {}
            Ok(Err(e)) => {
                failure.lock().get_or_insert(format!("learner: {e}"));
            }
            Err(p) => {
                failure
                    .lock()
                    .get_or_insert(format!("learner panicked: {}", panic_message(&*p)));
            }
        }
        stop.store(true, Ordering::Relaxed);
        while rx.recv_timeout(Duration::from_millis(10)).is_ok() {}
        for h in handles {
            if h.join().is_err() {
                failure.lock().get_or_insert("actor thread panicked".into());
            }
        }
    });

    let checkpoint = learner.checkpoint(env_steps, &options.config_tag);
    if let Some(path) = &options.checkpoint_path {
        checkpoint.save(path)?;
    }
    let aborted = failure.into_inner();
    if let Some(reason) = &aborted {
        warn!("training stopped early: {reason}");
    }
    Ok(TrainOutcome {
        checkpoint,
        curve,
        env_steps,
        episode_returns,
        incidents,
        aborted,
    })
}
