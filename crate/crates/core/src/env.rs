//! The trading MDP: seven single-share actions, inventory constraints and a
//! reward mixing mark-to-market log returns with a directional term.

use crate::book::{OrderId, Price, Side, Timestamp, NANOS_PER_SECOND};
use crate::replay::{AgentFill, DayData, QuoteLevel, ReplayError, ReplaySession};
use crate::signal::{SignalError, SignalParams, SignalTrack};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::io::Write;
use thiserror::Error;

/// Raw features per history slot.
pub const FEATURES: usize = 12;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("episode is done; call reset")]
    EpisodeDone,
    #[error("environment has not been reset")]
    NotReset,
    #[error("insufficient data for an episode: {0}")]
    InsufficientData(String),
    #[error("mark-to-market value must stay positive (got {0})")]
    NonPositiveValue(f64),
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Session open, seconds after midnight.
    pub start_seconds: f64,
    pub episode_seconds: f64,
    pub decision_seconds: f64,
    pub pos_min: i64,
    pub pos_max: i64,
    /// Past observations kept in addition to the current one.
    pub history: usize,
    pub kappa: f64,
    /// Initial weight of the directional reward.
    pub dir_weight: f64,
    /// Per-learner-step decay of the directional weight.
    pub dir_decay: f64,
    /// Starting cash in 1e-4 dollars.
    pub initial_cash: i64,
    /// Record history rows on every level-1 change instead of every step.
    pub event_history: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            start_seconds: 34_200.0,
            episode_seconds: 3_600.0,
            decision_seconds: 0.1,
            pos_min: -10,
            pos_max: 10,
            history: 100,
            kappa: 0.1,
            dir_weight: 0.5,
            dir_decay: 0.9999,
            initial_cash: 10_000_000 * 10_000,
            event_history: false,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::Config(m.into()));
        if !(self.pos_min < 0 && self.pos_max > 0) {
            return bad("need pos_min < 0 < pos_max");
        }
        if self.history == 0 {
            return bad("history must be at least 1");
        }
        if !(self.decision_seconds > 0.0) || !(self.episode_seconds > 0.0) {
            return bad("decision interval and episode length must be positive");
        }
        if self.total_steps() <= self.history {
            return bad("episode too short for the history window");
        }
        if !(self.kappa > 0.0) {
            return bad("kappa must be positive");
        }
        if !(0.0..1.0).contains(&self.dir_weight) || !(self.dir_decay > 0.0 && self.dir_decay < 1.0)
        {
            return bad("need dir_weight in [0, 1) and dir_decay in (0, 1)");
        }
        if self.initial_cash <= 0 {
            return bad("initial cash must be positive");
        }
        Ok(())
    }

    pub fn start(&self) -> Timestamp {
        (self.start_seconds * NANOS_PER_SECOND as f64).round() as Timestamp
    }

    pub fn step_nanos(&self) -> Timestamp {
        (self.decision_seconds * NANOS_PER_SECOND as f64).round() as Timestamp
    }

    /// Grid intervals in one episode; the grid has `total_steps() + 1` points.
    pub fn total_steps(&self) -> usize {
        (self.episode_seconds / self.decision_seconds).round() as usize
    }

    pub fn steps_per_second(&self) -> usize {
        (1.0 / self.decision_seconds).round() as usize
    }

    /// Decisions per episode after the history warm-up.
    pub fn decisions(&self) -> usize {
        self.total_steps() - self.history
    }

    pub fn grid_time(&self, index: usize) -> Timestamp {
        self.start() + index as u64 * self.step_nanos()
    }

    /// Twice-scaled historical mids on the decision grid and the signal
    /// track derived from them.
    pub fn signal_track(
        &self,
        day: &DayData,
        params: &SignalParams,
    ) -> Result<(Vec<Option<i64>>, SignalTrack), EnvError> {
        let grid = day.mid_grid(self.start(), self.step_nanos(), self.total_steps() + 1);
        let track = SignalTrack::from_mid_grid(&grid, self.steps_per_second(), params)?;
        Ok((grid, track))
    }

    /// Observation dimension after flattening.
    pub fn observation_dim(&self) -> usize {
        (self.history + 1) * FEATURES
    }
}

/// One of seven discrete actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentAction {
    Skip,
    Order { side: Side, level: QuoteLevel },
}

impl AgentAction {
    pub const COUNT: usize = 7;

    /// Index order: sell@bid, sell@mid, sell@ask, buy@bid, buy@mid, buy@ask, skip.
    pub fn from_index(i: usize) -> AgentAction {
        let level = |j: usize| [QuoteLevel::Bid, QuoteLevel::Mid, QuoteLevel::Ask][j];
        match i {
            0..=2 => AgentAction::Order {
                side: Side::Sell,
                level: level(i),
            },
            3..=5 => AgentAction::Order {
                side: Side::Buy,
                level: level(i - 3),
            },
            6 => AgentAction::Skip,
            _ => panic!("action index {i} out of range"),
        }
    }

    pub fn index(self) -> usize {
        match self {
            AgentAction::Skip => 6,
            AgentAction::Order { side, level } => {
                let base = if side == Side::Sell { 0 } else { 3 };
                base + match level {
                    QuoteLevel::Bid => 0,
                    QuoteLevel::Mid => 1,
                    QuoteLevel::Ask => 2,
                }
            }
        }
    }

    pub fn buy(level: QuoteLevel) -> Self {
        AgentAction::Order {
            side: Side::Buy,
            level,
        }
    }

    pub fn sell(level: QuoteLevel) -> Self {
        AgentAction::Order {
            side: Side::Sell,
            level,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortfolioState {
    /// 1e-4 dollars.
    pub cash: i64,
    pub inventory: i64,
    /// Twice the mid-quote used for marking.
    pub mark2: i64,
}

impl PortfolioState {
    /// Twice the mark-to-market value, exact.
    pub fn value2(&self) -> i128 {
        2 * self.cash as i128 + self.inventory as i128 * self.mark2 as i128
    }

    pub fn value(&self) -> f64 {
        self.value2() as f64 / 2.0
    }

    fn apply(&mut self, fill: &AgentFill) {
        self.cash += fill.cash();
        self.inventory += fill.shares();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParts {
    pub total: f64,
    pub pnl: f64,
    pub dir: f64,
}

/// Log return of the mark-to-market value blended with the directional
/// term `kappa * (d_up - d_down) * inventory`.
pub fn compute_reward(
    prev: &PortfolioState,
    cur: &PortfolioState,
    d: &[f64; 3],
    inventory: i64,
    kappa: f64,
    dir_weight: f64,
) -> Result<RewardParts, EnvError> {
    let (p, c) = (prev.value2(), cur.value2());
    if p <= 0 {
        return Err(EnvError::NonPositiveValue(prev.value()));
    }
    if c <= 0 {
        return Err(EnvError::NonPositiveValue(cur.value()));
    }
    let pnl = ((c - p) as f64 / p as f64).ln_1p();
    let dir = kappa * (d[2] - d[0]) * inventory as f64;
    Ok(RewardParts {
        total: dir_weight * dir + (1.0 - dir_weight) * pnl,
        pnl,
        dir,
    })
}

pub fn decay_dir_weight(w: f64, psi: f64) -> f64 {
    psi * w
}

/// Constants needed to normalize raw observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObsScale {
    pub open_mid: f64,
    pub tick: f64,
    pub initial_cash: f64,
    pub pos_max: f64,
    pub episode_seconds: f64,
}

/// `(history + 1) x 12` raw rows, oldest first. Columns: time left (s),
/// cash, inventory, d1, d2, d3, ask price, ask size, own ask size, bid
/// price, bid size, own bid size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub rows: Vec<[f64; FEATURES]>,
    pub scale: ObsScale,
}

impl Observation {
    pub fn current(&self) -> &[f64; FEATURES] {
        self.rows.last().expect("observation has at least one row")
    }

    pub fn inventory(&self) -> i64 {
        self.current()[2] as i64
    }

    pub fn signal(&self) -> [f64; 3] {
        let r = self.current();
        [r[3], r[4], r[5]]
    }

    pub fn best_ask(&self) -> Price {
        Price(self.current()[6] as i64)
    }

    pub fn best_bid(&self) -> Price {
        Price(self.current()[9] as i64)
    }

    /// Flattened network input.
    pub fn normalized(&self) -> Vec<f32> {
        let s = &self.scale;
        let price = |p: f64| ((p - s.open_mid) / s.tick / 100.0) as f32;
        let vol = |v: f64| v.ln_1p() as f32;
        let mut out = Vec::with_capacity(self.rows.len() * FEATURES);
        for r in &self.rows {
            out.extend_from_slice(&[
                (r[0] / s.episode_seconds) as f32,
                ((r[1] - s.initial_cash) / s.initial_cash) as f32,
                (r[2] / s.pos_max) as f32,
                r[3] as f32,
                r[4] as f32,
                r[5] as f32,
                price(r[6]),
                vol(r[7]),
                vol(r[8]),
                price(r[9]),
                vol(r[10]),
                vol(r[11]),
            ]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcedOrder {
    pub side: Side,
    pub size: u64,
    pub filled: u64,
    /// Same-direction agent orders cancelled before the market order.
    pub cancelled: Vec<OrderId>,
    /// Inventory that triggered the order.
    pub breach_inventory: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub step: usize,
    pub time: Timestamp,
    pub action: AgentAction,
    /// Order placed by the action, with its resolved limit price.
    pub placed: Option<(OrderId, Price)>,
    /// Action rejected by the inventory constraint.
    pub disallowed: bool,
    /// Action refused because the reference quote was missing.
    pub refused: bool,
    pub fills: Vec<AgentFill>,
    pub forced: Option<ForcedOrder>,
    pub reward: RewardParts,
    pub portfolio: PortfolioState,
    pub prev_portfolio: PortfolioState,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug)]
struct Episode {
    session: ReplaySession,
    signal: SignalTrack,
    portfolio: PortfolioState,
    history: VecDeque<[f64; FEATURES]>,
    index: usize,
    done: bool,
    scale: ObsScale,
    last_ask: f64,
    last_bid: f64,
}

/// One environment instance; not shared between threads.
#[derive(Debug)]
pub struct TradingEnv {
    config: EnvConfig,
    dir_weight: f64,
    episode: Option<Episode>,
}

impl TradingEnv {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let dir_weight = config.dir_weight;
        Ok(TradingEnv {
            config,
            dir_weight,
            episode: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn dir_weight(&self) -> f64 {
        self.dir_weight
    }

    pub fn set_dir_weight(&mut self, w: f64) {
        self.dir_weight = w;
    }

    pub fn portfolio(&self) -> Option<PortfolioState> {
        self.episode.as_ref().map(|e| e.portfolio)
    }

    pub fn session(&self) -> Option<&ReplaySession> {
        self.episode.as_ref().map(|e| &e.session)
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_none_or(|e| e.done)
    }

    /// Current grid time.
    pub fn time(&self) -> Option<Timestamp> {
        self.episode
            .as_ref()
            .map(|e| self.config.grid_time(e.index))
    }

    /// Starts an episode on a fresh session. The first `history` grid
    /// steps are replayed to fill the observation window.
    pub fn reset(
        &mut self,
        mut session: ReplaySession,
        signal: SignalTrack,
    ) -> Result<Observation, EnvError> {
        let cfg = &self.config;
        if signal.len() < cfg.total_steps() + 1 {
            return Err(EnvError::InsufficientData(format!(
                "signal has {} points, episode needs {}",
                signal.len(),
                cfg.total_steps() + 1
            )));
        }
        if session.cursor() != 0 {
            return Err(EnvError::InsufficientData(
                "session is not at the start of the day".into(),
            ));
        }
        if session
            .day()
            .messages
            .last()
            .is_none_or(|m| m.time < cfg.start())
        {
            return Err(EnvError::InsufficientData(
                "no messages in the episode window".into(),
            ));
        }
        session.advance_until(cfg.start())?;
        let mark2 = session
            .book()
            .mid2()
            .ok_or_else(|| EnvError::InsufficientData("mid undefined at episode start".into()))?;
        let scale = ObsScale {
            open_mid: mark2 as f64 / 2.0,
            tick: session.book().tick() as f64,
            initial_cash: cfg.initial_cash as f64,
            pos_max: cfg.pos_max as f64,
            episode_seconds: cfg.episode_seconds,
        };
        let mut ep = Episode {
            session,
            signal,
            portfolio: PortfolioState {
                cash: cfg.initial_cash,
                inventory: 0,
                mark2,
            },
            history: VecDeque::with_capacity(cfg.history + 1),
            index: 0,
            done: false,
            scale,
            last_ask: scale.open_mid,
            last_bid: scale.open_mid,
        };
        push_row(cfg, &mut ep);
        for _ in 0..cfg.history {
            ep.index += 1;
            let t = cfg.grid_time(ep.index);
            advance(cfg, &mut ep, t)?;
            if let Some(m) = ep.session.book().mid2() {
                ep.portfolio.mark2 = m;
            }
            push_row(cfg, &mut ep);
        }
        let obs = observation(&ep);
        self.episode = Some(ep);
        Ok(obs)
    }

    /// Cancels a live agent order; a missing order is reported as
    /// [`ReplayError::AgentOrderGone`].
    pub fn cancel_agent_order(&mut self, id: OrderId) -> Result<(), EnvError> {
        let ep = self.episode.as_mut().ok_or(EnvError::NotReset)?;
        ep.session.cancel_agent_order(id)?;
        Ok(())
    }

    pub fn step(&mut self, action: AgentAction) -> Result<StepOutcome, EnvError> {
        let cfg = &self.config;
        let ep = self.episode.as_mut().ok_or(EnvError::NotReset)?;
        if ep.done {
            return Err(EnvError::EpisodeDone);
        }
        let prev = ep.portfolio;
        let d_t = ep.signal.scores[ep.index];
        let mut fills = Vec::new();
        let mut placed = None;
        let mut disallowed = false;
        let mut refused = false;

        if let AgentAction::Order { side, level } = action {
            let next = ep.portfolio.inventory + side.sign();
            if next > cfg.pos_max || next < cfg.pos_min {
                disallowed = true;
            } else {
                match ep.session.inject_agent_order(side, level, 1) {
                    Ok(inj) => {
                        placed = Some((inj.order_id, inj.price));
                        fills.extend(inj.fills);
                    }
                    Err(ReplayError::NoReference(_)) => refused = true,
                    Err(e) => return Err(e.into()),
                }
            }
        }
        for f in &fills {
            ep.portfolio.apply(f);
        }

        ep.index += 1;
        let t = cfg.grid_time(ep.index);
        fills.extend(advance(cfg, ep, t)?);
        let forced = match enforce_bounds(cfg, ep)? {
            Some((order, market_fills)) => {
                fills.extend(market_fills);
                Some(order)
            }
            None => None,
        };

        if let Some(m) = ep.session.book().mid2() {
            ep.portfolio.mark2 = m;
        }
        let cur = ep.portfolio;
        let reward = compute_reward(&prev, &cur, &d_t, cur.inventory, cfg.kappa, self.dir_weight)?;
        push_row(cfg, ep);
        ep.done = ep.index >= cfg.total_steps();
        Ok(StepOutcome {
            observation: observation(ep),
            reward: reward.total,
            done: ep.done,
            info: StepInfo {
                step: ep.index - cfg.history - 1,
                time: t,
                action,
                placed,
                disallowed,
                refused,
                fills,
                forced,
                reward,
                portfolio: cur,
                prev_portfolio: prev,
            },
        })
    }
}

/// Brings inventory back inside the bounds with one opposing market order.
/// Live agent orders on the breaching side are cancelled first so the
/// market order cannot trade against them.
fn enforce_bounds(
    cfg: &EnvConfig,
    ep: &mut Episode,
) -> Result<Option<(ForcedOrder, Vec<AgentFill>)>, EnvError> {
    let x = ep.portfolio.inventory;
    let (side, excess) = if x > cfg.pos_max {
        (Side::Sell, x - cfg.pos_max)
    } else if x < cfg.pos_min {
        (Side::Buy, cfg.pos_min - x)
    } else {
        return Ok(None);
    };
    let stale: Vec<OrderId> = ep
        .session
        .live_agent_orders()
        .filter(|&(_, s)| s == side.opposite())
        .map(|(id, _)| id)
        .collect();
    for &id in &stale {
        ep.session.cancel_agent_order(id)?;
    }
    let (_, market_fills, _) = ep.session.submit_agent_market(side, excess as u64)?;
    let filled: u64 = market_fills.iter().map(|f| f.size).sum();
    for f in &market_fills {
        ep.portfolio.apply(f);
    }
    let order = ForcedOrder {
        side,
        size: excess as u64,
        filled,
        cancelled: stale,
        breach_inventory: x,
    };
    Ok(Some((order, market_fills)))
}

/// Replays up to `t`, applying agent fills to the portfolio.
fn advance(cfg: &EnvConfig, ep: &mut Episode, t: Timestamp) -> Result<Vec<AgentFill>, EnvError> {
    if !cfg.event_history {
        let fills = ep.session.advance_until(t)?;
        for f in &fills {
            ep.portfolio.apply(f);
        }
        return Ok(fills);
    }
    let mut fills = Vec::new();
    let mut last = level1(&ep.session);
    while ep
        .session
        .day()
        .messages
        .get(ep.session.cursor())
        .is_some_and(|m| m.time <= t)
    {
        let f = ep.session.step_message().expect("message available");
        for fill in &f {
            ep.portfolio.apply(fill);
        }
        fills.extend(f);
        let now = level1(&ep.session);
        if now != last {
            last = now;
            // event rows carry the signal of the current decision interval
            push_row(cfg, ep);
        }
    }
    ep.session.advance_until(t)?;
    Ok(fills)
}

fn level1(s: &ReplaySession) -> (Option<(Price, u64)>, Option<(Price, u64)>) {
    let b = s.book();
    (
        b.best_ask().map(|q| (q.price, q.size)),
        b.best_bid().map(|q| (q.price, q.size)),
    )
}

fn push_row(cfg: &EnvConfig, ep: &mut Episode) {
    let book = ep.session.book();
    let (ask, ask_size) = match book.best_ask() {
        Some(q) => {
            ep.last_ask = q.price.0 as f64;
            (ep.last_ask, q.size as f64)
        }
        None => (ep.last_ask, 0.0),
    };
    let (bid, bid_size) = match book.best_bid() {
        Some(q) => {
            ep.last_bid = q.price.0 as f64;
            (ep.last_bid, q.size as f64)
        }
        None => (ep.last_bid, 0.0),
    };
    let (own_ask, own_bid) = ep.session.agent_volume_at_touch();
    let d = ep.signal.scores[ep.index.min(ep.signal.len() - 1)];
    let time_left = cfg.episode_seconds - ep.index as f64 * cfg.decision_seconds;
    if ep.history.len() == cfg.history + 1 {
        ep.history.pop_front();
    }
    ep.history.push_back([
        time_left,
        ep.portfolio.cash as f64,
        ep.portfolio.inventory as f64,
        d[0],
        d[1],
        d[2],
        ask,
        ask_size,
        own_ask as f64,
        bid,
        bid_size,
        own_bid as f64,
    ]);
}

fn observation(ep: &Episode) -> Observation {
    Observation {
        rows: ep.history.iter().copied().collect(),
        scale: ep.scale,
    }
}

/// Writes one JSON object per step.
pub fn write_info_jsonl<W: Write>(w: &mut W, info: &StepInfo) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, info)?;
    w.write_all(b"\n")
}
