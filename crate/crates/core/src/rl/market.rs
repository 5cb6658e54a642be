//! Adapter from the trading environment to the trainer interface, cycling
//! through a set of replay days.

use super::apex::{EnvStep, RlEnv};
use crate::env::{AgentAction, EnvConfig, EnvError, Observation, TradingEnv};
use crate::replay::{DayData, ReplaySession};
use crate::signal::{SignalParams, SignalTrack};
use std::sync::Arc;

/// A replay day with its mid-price grid precomputed.
#[derive(Debug, Clone)]
pub struct PreparedDay {
    pub name: String,
    pub data: DayData,
    pub grid: Vec<Option<i64>>,
}

impl PreparedDay {
    pub fn new(name: impl Into<String>, data: DayData, env: &EnvConfig) -> Self {
        let grid = data.mid_grid(env.start(), env.step_nanos(), env.total_steps() + 1);
        PreparedDay {
            name: name.into(),
            data,
            grid,
        }
    }

    /// Signal track for one episode; `episode` perturbs the Dirichlet seed.
    pub fn signal(
        &self,
        env: &EnvConfig,
        params: &SignalParams,
        episode: u64,
    ) -> Result<SignalTrack, EnvError> {
        let mut p = params.clone();
        p.seed = episode_seed(params.seed, &self.name, episode);
        Ok(SignalTrack::from_mid_grid(
            &self.grid,
            env.steps_per_second(),
            &p,
        )?)
    }
}

/// Seed for the signal noise of one (day, episode) pair.
pub fn episode_seed(base: u64, day: &str, episode: u64) -> u64 {
    let mut h = base ^ 0xcbf2_9ce4_8422_2325;
    for b in day.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    h ^ episode.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Starts a fresh episode of `env` on `day`.
pub fn start_episode(
    env: &mut TradingEnv,
    day: &PreparedDay,
    params: &SignalParams,
    tick: i64,
    episode: u64,
) -> Result<Observation, EnvError> {
    let track = day.signal(env.config(), params, episode)?;
    env.reset(ReplaySession::with_tick(day.data.clone(), tick), track)
}

pub struct MarketEnv {
    env: TradingEnv,
    days: Arc<[PreparedDay]>,
    signal: SignalParams,
    tick: i64,
    next_day: usize,
    stride: usize,
    episodes: u64,
}

impl MarketEnv {
    /// Actor `offset` of `stride` visits days `offset, offset + stride, ...`
    /// cyclically.
    pub fn new(
        config: EnvConfig,
        days: Arc<[PreparedDay]>,
        signal: SignalParams,
        tick: i64,
        offset: usize,
        stride: usize,
    ) -> Result<Self, EnvError> {
        if days.is_empty() {
            return Err(EnvError::InsufficientData("no training days".into()));
        }
        Ok(MarketEnv {
            env: TradingEnv::new(config)?,
            next_day: offset % days.len(),
            days,
            signal,
            tick,
            stride: stride.max(1),
            episodes: 0,
        })
    }

    pub fn inner(&self) -> &TradingEnv {
        &self.env
    }
}

impl RlEnv for MarketEnv {
    fn observation_dim(&self) -> usize {
        self.env.config().observation_dim()
    }

    fn actions(&self) -> usize {
        AgentAction::COUNT
    }

    fn reset(&mut self) -> Result<Vec<f32>, String> {
        let day = &self.days[self.next_day];
        self.next_day = (self.next_day + self.stride) % self.days.len();
        self.episodes += 1;
        let obs = start_episode(&mut self.env, day, &self.signal, self.tick, self.episodes)
            .map_err(|e| format!("{}: {e}", day.name))?;
        Ok(obs.normalized())
    }

    fn step(&mut self, action: usize) -> Result<EnvStep, String> {
        let out = self
            .env
            .step(AgentAction::from_index(action))
            .map_err(|e| e.to_string())?;
        Ok(EnvStep {
            obs: out.observation.normalized(),
            reward: out.reward,
            terminal: out.done,
            truncated: false,
        })
    }

    fn set_dir_weight(&mut self, w: f64) {
        self.env.set_dir_weight(w);
    }
}
