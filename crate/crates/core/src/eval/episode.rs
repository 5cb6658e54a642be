//! Running strategies through replay episodes.

use crate::book::NANOS_PER_SECOND;
use crate::env::{AgentAction, EnvConfig, EnvError, TradingEnv};
use crate::policies::{buy_and_hold_curve, BuyHoldError, Policy};
use crate::replay::{QuoteLevel, ReplayError, ReplaySession};
use crate::rl::market::{start_episode, PreparedDay};
use crate::signal::SignalParams;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    /// Seconds after midnight.
    pub time: f64,
    /// `ln(M_t / M_0)`.
    pub log_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeResult {
    pub strategy: String,
    pub episode: String,
    pub log_return: f64,
    pub curve: Vec<CurvePoint>,
    /// Executed agent shares, both sides.
    pub turnover: u64,
    /// Executed agent notional in dollars.
    pub turnover_notional: f64,
    /// Chosen actions by index (see `AgentAction::from_index`).
    pub action_counts: [u64; AgentAction::COUNT],
    pub fills: u64,
    pub cancels: u64,
    pub forced_orders: u64,
    pub disallowed: u64,
}

impl EpisodeResult {
    fn empty(strategy: &str, episode: &str) -> Self {
        EpisodeResult {
            strategy: strategy.into(),
            episode: episode.into(),
            log_return: 0.0,
            curve: Vec::new(),
            turnover: 0,
            turnover_notional: 0.0,
            action_counts: [0; AgentAction::COUNT],
            fills: 0,
            cancels: 0,
            forced_orders: 0,
            disallowed: 0,
        }
    }
}

fn log_value(v2: i128, m0_2: i128) -> f64 {
    ((v2 - m0_2) as f64 / m0_2 as f64).ln_1p()
}

fn seconds(t: u64) -> f64 {
    t as f64 / NANOS_PER_SECOND as f64
}

/// Plays one episode of `policy` on `day`.
pub fn run_episode(
    config: &EnvConfig,
    day: &PreparedDay,
    signal: &SignalParams,
    tick: i64,
    episode_seed: u64,
    policy: &mut dyn Policy,
) -> Result<EpisodeResult, EnvError> {
    let mut env = TradingEnv::new(config.clone())?;
    let mut obs = start_episode(&mut env, day, signal, tick, episode_seed)?;
    policy.reset();
    let m0_2 = 2 * config.initial_cash as i128;
    let mut out = EpisodeResult::empty(policy.name(), &day.name);
    let start = env.portfolio().expect("episode running");
    out.curve.push(CurvePoint {
        time: seconds(env.time().unwrap_or(0)),
        log_value: log_value(start.value2(), m0_2),
    });
    loop {
        let decision = policy.act(&obs);
        for id in &decision.cancel {
            match env.cancel_agent_order(*id) {
                Ok(()) => out.cancels += 1,
                Err(EnvError::Replay(
                    ReplayError::AgentOrderGone(_) | ReplayError::NotAgentOrder(_),
                )) => {}
                Err(e) => return Err(e),
            }
        }
        out.action_counts[decision.action.index()] += 1;
        let step = env.step(decision.action)?;
        policy.observe(&step.info);
        let info = &step.info;
        out.disallowed += info.disallowed as u64;
        if let Some(f) = &info.forced {
            out.forced_orders += 1;
            out.cancels += f.cancelled.len() as u64;
        }
        for fill in &info.fills {
            out.fills += 1;
            out.turnover += fill.size;
            out.turnover_notional += fill.size as f64 * fill.price.dollars();
        }
        let lv = log_value(info.portfolio.value2(), m0_2);
        out.curve.push(CurvePoint {
            time: seconds(info.time),
            log_value: lv,
        });
        out.log_return = lv;
        obs = step.observation;
        if step.done {
            break;
        }
    }
    Ok(out)
}

/// Buys `config.pos_max` shares at the ask when decisions start and holds
/// them to the end of the episode.
pub fn run_buy_and_hold(
    config: &EnvConfig,
    day: &PreparedDay,
    tick: i64,
) -> Result<EpisodeResult, EnvError> {
    let start = config.history;
    let mut session = ReplaySession::with_tick(day.data.clone(), tick);
    session.advance_until(config.grid_time(start))?;
    let ask = session
        .reference_price(crate::book::Side::Buy, QuoteLevel::Ask)
        .ok();
    let mids = &day.grid[start..];
    let curve = buy_and_hold_curve(ask, mids, config.pos_max, config.initial_cash).map_err(
        |e| match e {
            BuyHoldError::Empty => EnvError::InsufficientData("empty episode".into()),
            other => EnvError::InsufficientData(other.to_string()),
        },
    )?;
    let mut out = EpisodeResult::empty("buy_and_hold", &day.name);
    out.curve = curve
        .iter()
        .enumerate()
        .map(|(i, &v)| CurvePoint {
            time: seconds(config.grid_time(start + i)),
            log_value: v,
        })
        .collect();
    out.log_return = *curve.last().unwrap();
    out.turnover = config.pos_max as u64;
    out.turnover_notional = config.pos_max as f64 * ask.map_or(0.0, |p| p.dollars());
    out.fills = 1;
    out.action_counts[AgentAction::buy(QuoteLevel::Ask).index()] = 1;
    out.action_counts[AgentAction::Skip.index()] = (curve.len() - 2) as u64;
    Ok(out)
}

/// Runs `make_policy(i)` on every day in order, spreading days over
/// `threads` scoped threads. Results keep the day order.
pub fn run_days<F>(
    config: &EnvConfig,
    days: &[PreparedDay],
    signal: &SignalParams,
    tick: i64,
    episode_seed: u64,
    threads: usize,
    make_policy: F,
) -> Result<Vec<EpisodeResult>, EnvError>
where
    F: Fn(usize) -> Box<dyn Policy> + Sync,
{
    let threads = threads.clamp(1, days.len().max(1));
    let run = |i: usize| {
        let mut policy = make_policy(i);
        run_episode(
            config,
            &days[i],
            signal,
            tick,
            episode_seed,
            policy.as_mut(),
        )
    };
    if threads == 1 {
        return (0..days.len()).map(run).collect();
    }
    let mut slots: Vec<Option<Result<EpisodeResult, EnvError>>> =
        (0..days.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunks: Vec<_> = slots
            .chunks_mut(days.len().div_ceil(threads))
            .enumerate()
            .collect();
        let size = days.len().div_ceil(threads);
        for (c, chunk) in chunks {
            let run = &run;
            s.spawn(move || {
                for (j, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(run(c * size + j));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("episode ran")).collect()
}
