//! Historical replay with agent order injection.
//!
//! Visible executions in the message stream are replayed as marketable
//! orders whenever agent liquidity sits at or ahead of the executed price,
//! so agent orders with better price or time priority fill first. Without
//! agent liquidity in the way the referenced order is executed directly,
//! which reproduces the recorded book exactly.

pub mod lobster;

pub use lobster::{MarketMessage, MessageKind, Sentinels};

use crate::book::{
    BookError, Execution, Order, OrderBook, OrderId, Owner, Price, Side, Timestamp, AGENT_ID_BASE,
    UNKNOWN_TAKER,
};
use lobster::FormatError;
use log::debug;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("orderbook file has {rows} rows but message file has {messages}")]
    RowCount { rows: usize, messages: usize },
    #[error("cannot advance to {target}: clock is already at {clock}")]
    TimeReversal { target: Timestamp, clock: Timestamp },
    #[error("no {0:?} reference price: book side is empty")]
    NoReference(QuoteLevel),
    #[error("order {0} is not an agent order")]
    NotAgentOrder(OrderId),
    #[error("agent order {0} is no longer live")]
    AgentOrderGone(OrderId),
    #[error(transparent)]
    Book(#[from] BookError),
}

/// Where an agent order is priced relative to the current quotes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuoteLevel {
    Bid,
    Mid,
    Ask,
}

/// One message day, shareable between sessions.
#[derive(Debug, Clone)]
pub struct DayData {
    pub messages: Arc<[MarketMessage]>,
    /// Companion orderbook rows, one per message, when loaded from disk.
    pub book_rows: Option<Arc<[Vec<i64>]>>,
    pub depth: usize,
}

impl DayData {
    pub fn new(messages: Vec<MarketMessage>) -> Self {
        DayData {
            messages: messages.into(),
            book_rows: None,
            depth: 0,
        }
    }

    pub fn load(message_path: &Path, orderbook_path: &Path) -> Result<Self, ReplayError> {
        let messages = lobster::read_messages(message_path)?;
        let (depth, rows) = lobster::read_orderbook(orderbook_path)?;
        if rows.len() != messages.len() {
            return Err(ReplayError::RowCount {
                rows: rows.len(),
                messages: messages.len(),
            });
        }
        Ok(DayData {
            messages: messages.into(),
            book_rows: Some(rows.into()),
            depth,
        })
    }

    pub fn first_time(&self) -> Option<Timestamp> {
        self.messages.first().map(|m| m.time)
    }

    /// Twice the historical mid at each grid point `start + i * step`,
    /// sampled after all messages up to that time. `None` where the book is
    /// one-sided.
    pub fn mid_grid(&self, start: Timestamp, step: Timestamp, points: usize) -> Vec<Option<i64>> {
        let mut session = ReplaySession::new(self.clone());
        let mut out = Vec::with_capacity(points);
        for i in 0..points {
            let t = start + i as u64 * step;
            session.advance_until(t).expect("grid is increasing");
            out.push(session.book().mid2());
        }
        out
    }
}

/// Agent share traded in one execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentFill {
    pub order_id: OrderId,
    pub side: Side,
    pub price: Price,
    pub size: u64,
    pub time: Timestamp,
    /// True when the agent order was the aggressor.
    pub aggressive: bool,
}

impl AgentFill {
    /// Signed share change.
    pub fn shares(&self) -> i64 {
        self.side.sign() * self.size as i64
    }

    /// Signed cash change in price units.
    pub fn cash(&self) -> i64 {
        -self.side.sign() * self.size as i64 * self.price.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayStats {
    pub applied: usize,
    pub adds: usize,
    pub cancels: usize,
    pub deletes: usize,
    pub visible_executions: usize,
    pub synthetic_marketable: usize,
    pub hidden_or_ignored: usize,
    /// Messages that could not be applied as recorded because agent
    /// activity changed the referenced order.
    pub anomalies: usize,
}

#[derive(Debug, Clone)]
pub struct Injection {
    pub order_id: OrderId,
    pub price: Price,
    pub fills: Vec<AgentFill>,
    /// Whether any part of the order rests in the book.
    pub resting: bool,
}

#[derive(Debug, Clone)]
pub struct ReplaySession {
    book: OrderBook,
    day: DayData,
    cursor: usize,
    clock: Timestamp,
    next_agent_id: OrderId,
    agent_live: BTreeMap<OrderId, Side>,
    fill_log: Vec<AgentFill>,
    stats: ReplayStats,
}

impl ReplaySession {
    pub fn new(day: DayData) -> Self {
        Self::with_tick(day, Price::CENT)
    }

    pub fn with_tick(day: DayData, tick: i64) -> Self {
        ReplaySession {
            book: OrderBook::new(tick),
            day,
            cursor: 0,
            clock: 0,
            next_agent_id: AGENT_ID_BASE,
            agent_live: BTreeMap::new(),
            fill_log: Vec::new(),
            stats: ReplayStats::default(),
        }
    }

    pub fn load_day(message_path: &Path, orderbook_path: &Path) -> Result<Self, ReplayError> {
        Ok(Self::new(DayData::load(message_path, orderbook_path)?))
    }

    pub fn book(&self) -> &OrderBook {
        &self.book
    }

    pub fn day(&self) -> &DayData {
        &self.day
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn clock(&self) -> Timestamp {
        self.clock
    }

    pub fn stats(&self) -> ReplayStats {
        self.stats
    }

    pub fn fill_log(&self) -> &[AgentFill] {
        &self.fill_log
    }

    pub fn is_exhausted(&self) -> bool {
        self.cursor >= self.day.messages.len()
    }

    pub fn live_agent_orders(&self) -> impl Iterator<Item = (OrderId, Side)> + '_ {
        self.agent_live.iter().map(|(&id, &s)| (id, s))
    }

    /// Live agent volume at the best (ask, bid).
    pub fn agent_volume_at_touch(&self) -> (u64, u64) {
        let a = self
            .book
            .best_ask()
            .map_or(0, |q| self.book.agent_volume_at(Side::Sell, q.price));
        let b = self
            .book
            .best_bid()
            .map_or(0, |q| self.book.agent_volume_at(Side::Buy, q.price));
        (a, b)
    }

    /// Applies the next message and returns any agent fills it caused.
    pub fn step_message(&mut self) -> Option<Vec<AgentFill>> {
        let msg = *self.day.messages.get(self.cursor)?;
        self.cursor += 1;
        self.clock = self.clock.max(msg.time);
        let mut fills = Vec::new();
        self.apply(&msg, &mut fills);
        self.stats.applied += 1;
        Some(fills)
    }

    /// Applies every message stamped at or before `t`; the clock ends at `t`.
    pub fn advance_until(&mut self, t: Timestamp) -> Result<Vec<AgentFill>, ReplayError> {
        if t < self.clock {
            return Err(ReplayError::TimeReversal {
                target: t,
                clock: self.clock,
            });
        }
        let mut fills = Vec::new();
        while let Some(msg) = self.day.messages.get(self.cursor).copied() {
            if msg.time > t {
                break;
            }
            self.cursor += 1;
            self.apply(&msg, &mut fills);
            self.stats.applied += 1;
        }
        self.clock = t;
        Ok(fills)
    }

    fn anomaly(&mut self, msg: &MarketMessage, what: &str) {
        self.stats.anomalies += 1;
        debug!(
            "reconciliation: {what} for order {} at {}",
            msg.order_id, msg.time
        );
    }

    fn apply(&mut self, msg: &MarketMessage, fills: &mut Vec<AgentFill>) {
        match msg.kind {
            MessageKind::Add => {
                self.stats.adds += 1;
                let order = Order::new(msg.order_id, msg.direction, msg.price, msg.size);
                match self.book.submit_limit(order, msg.time) {
                    Ok(out) => self.record(&out.executions, fills),
                    Err(_) => self.anomaly(msg, "rejected add"),
                }
            }
            MessageKind::PartialCancel => {
                self.stats.cancels += 1;
                match self.book.order(msg.order_id) {
                    None => self.anomaly(msg, "cancel of missing order"),
                    Some(o) => {
                        if msg.size > o.size {
                            self.anomaly(msg, "cancel clipped");
                        }
                        if msg.size > 0 {
                            self.book
                                .cancel(msg.order_id, msg.size)
                                .expect("order is live");
                        }
                    }
                }
            }
            MessageKind::Delete => {
                self.stats.deletes += 1;
                if self.book.delete(msg.order_id).is_err() {
                    self.anomaly(msg, "delete of missing order");
                }
            }
            MessageKind::ExecuteVisible => {
                self.stats.visible_executions += 1;
                if msg.size == 0 {
                    return;
                }
                let Some(resting) = self.book.order(msg.order_id) else {
                    self.anomaly(msg, "execution of missing order");
                    return;
                };
                if self.book.agent_volume_through(resting.side, msg.price) == 0 {
                    let (exec, clipped) = self
                        .book
                        .execute_order(msg.order_id, msg.size, msg.time)
                        .expect("order is live");
                    if clipped > 0 {
                        self.anomaly(msg, "execution clipped");
                    }
                    self.record(std::slice::from_ref(&exec), fills);
                } else {
                    self.stats.synthetic_marketable += 1;
                    let out = self
                        .book
                        .submit_ioc(
                            UNKNOWN_TAKER,
                            resting.side.opposite(),
                            msg.price,
                            msg.size,
                            msg.time,
                        )
                        .expect("size checked");
                    if out.unfilled > 0 {
                        self.anomaly(msg, "synthetic order not fully filled");
                    }
                    self.record(&out.executions, fills);
                }
            }
            MessageKind::ExecuteHidden | MessageKind::Cross | MessageKind::Halt => {
                self.stats.hidden_or_ignored += 1;
            }
        }
    }

    fn record(&mut self, executions: &[Execution], fills: &mut Vec<AgentFill>) {
        for e in executions {
            if Owner::of(e.maker_id) == Owner::Agent {
                let fill = AgentFill {
                    order_id: e.maker_id,
                    side: e.maker_side(),
                    price: e.price,
                    size: e.size,
                    time: e.timestamp,
                    aggressive: false,
                };
                if !self.book.contains(e.maker_id) {
                    self.agent_live.remove(&e.maker_id);
                }
                fills.push(fill);
                self.fill_log.push(fill);
            }
            if Owner::of(e.taker_id) == Owner::Agent {
                let fill = AgentFill {
                    order_id: e.taker_id,
                    side: e.aggressor_side,
                    price: e.price,
                    size: e.size,
                    time: e.timestamp,
                    aggressive: true,
                };
                fills.push(fill);
                self.fill_log.push(fill);
            }
        }
    }

    fn next_id(&mut self) -> OrderId {
        let id = self.next_agent_id;
        self.next_agent_id += 1;
        id
    }

    /// Resolves the limit price for an agent order. Mid prices are rounded
    /// to the tick grid toward the passive side.
    pub fn reference_price(&self, side: Side, level: QuoteLevel) -> Result<Price, ReplayError> {
        let tick = self.book.tick();
        match level {
            QuoteLevel::Bid => self.book.best_bid().map(|q| q.price),
            QuoteLevel::Ask => self.book.best_ask().map(|q| q.price),
            QuoteLevel::Mid => self.book.mid2().map(|m2| {
                let ticks2 = 2 * tick;
                let ticks = match side {
                    Side::Buy => m2.div_euclid(ticks2),
                    Side::Sell => (m2 + ticks2 - 1).div_euclid(ticks2),
                };
                Price(ticks * tick)
            }),
        }
        .ok_or(ReplayError::NoReference(level))
    }

    /// Places an agent limit order at the current quotes.
    pub fn inject_agent_order(
        &mut self,
        side: Side,
        level: QuoteLevel,
        size: u64,
    ) -> Result<Injection, ReplayError> {
        let price = self.reference_price(side, level)?;
        let id = self.next_id();
        let out = self
            .book
            .submit_limit(Order::new(id, side, price, size), self.clock)?;
        let mut fills = Vec::new();
        self.record(&out.executions, &mut fills);
        let resting = out.resting.is_some();
        if resting {
            self.agent_live.insert(id, side);
        }
        Ok(Injection {
            order_id: id,
            price,
            fills,
            resting,
        })
    }

    /// Agent market order; unfilled shares are dropped.
    pub fn submit_agent_market(
        &mut self,
        side: Side,
        size: u64,
    ) -> Result<(OrderId, Vec<AgentFill>, u64), ReplayError> {
        let id = self.next_id();
        let out = self.book.submit_market(id, side, size, self.clock)?;
        let mut fills = Vec::new();
        self.record(&out.executions, &mut fills);
        Ok((id, fills, out.unfilled))
    }

    pub fn cancel_agent_order(&mut self, id: OrderId) -> Result<Order, ReplayError> {
        if Owner::of(id) != Owner::Agent {
            return Err(ReplayError::NotAgentOrder(id));
        }
        self.agent_live.remove(&id);
        self.book
            .delete(id)
            .map_err(|_| ReplayError::AgentOrderGone(id))
    }
}

/// Outcome of comparing engine snapshots with a recorded orderbook file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub rows: usize,
    pub matched: usize,
    pub first_mismatch: Option<usize>,
    pub anomalies: usize,
}

impl FidelityReport {
    pub fn is_perfect(&self) -> bool {
        self.rows > 0 && self.matched == self.rows && self.anomalies == 0
    }
}

/// Replays `day` with no agent orders, checking every recorded row.
pub fn check_fidelity(day: &DayData, sentinels: &Sentinels) -> FidelityReport {
    let Some(rows) = day.book_rows.as_ref() else {
        return FidelityReport::default();
    };
    let mut session = ReplaySession::new(day.clone());
    let mut report = FidelityReport {
        rows: rows.len(),
        ..Default::default()
    };
    for (i, row) in rows.iter().enumerate() {
        session.step_message();
        let got = lobster::snapshot_row(&session.book().snapshot(day.depth), day.depth, sentinels);
        if &got == row {
            report.matched += 1;
        } else if report.first_mismatch.is_none() {
            report.first_mismatch = Some(i + 1);
        }
    }
    report.anomalies = session.stats().anomalies;
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn add(t: u64, id: OrderId, side: Side, price: i64, size: u64) -> MarketMessage {
        MarketMessage {
            time: t,
            kind: MessageKind::Add,
            order_id: id,
            size,
            price: Price(price),
            direction: side,
        }
    }

    fn msg(
        t: u64,
        kind: MessageKind,
        id: OrderId,
        side: Side,
        price: i64,
        size: u64,
    ) -> MarketMessage {
        MarketMessage {
            time: t,
            kind,
            order_id: id,
            size,
            price: Price(price),
            direction: side,
        }
    }

    fn figure_day(extra: Vec<MarketMessage>) -> DayData {
        let mut m = vec![
            add(10, 1, Side::Buy, 4_572_100, 100),
            add(10, 2, Side::Sell, 4_572_900, 1000),
            add(10, 3, Side::Buy, 4_571_500, 300),
            add(10, 4, Side::Sell, 4_573_500, 200),
        ];
        m.extend(extra);
        DayData::new(m)
    }

    #[test]
    fn buy_at_ask_executes() {
        let mut s = ReplaySession::new(figure_day(vec![]));
        s.advance_until(10).unwrap();
        let inj = s.inject_agent_order(Side::Buy, QuoteLevel::Ask, 1).unwrap();
        assert_eq!(inj.price, Price(4_572_900));
        assert!(!inj.resting);
        assert_eq!(inj.fills.len(), 1);
        assert!(inj.fills[0].aggressive);
        assert_eq!(s.book().best_ask().unwrap().size, 999);
    }

    #[test]
    fn buy_at_mid_rests() {
        let mut s = ReplaySession::new(figure_day(vec![]));
        s.advance_until(10).unwrap();
        let inj = s.inject_agent_order(Side::Buy, QuoteLevel::Mid, 1).unwrap();
        assert_eq!(inj.price, Price(4_572_500));
        assert!(inj.resting && inj.fills.is_empty());
        assert_eq!(s.agent_volume_at_touch(), (0, 1));
    }

    #[test]
    fn mid_rounds_toward_passive_side() {
        let day = DayData::new(vec![
            add(1, 1, Side::Buy, 10_000, 5),
            add(1, 2, Side::Sell, 10_100, 5),
        ]);
        let mut s = ReplaySession::new(day);
        s.advance_until(1).unwrap();
        assert_eq!(
            s.reference_price(Side::Buy, QuoteLevel::Mid).unwrap(),
            Price(10_000)
        );
        assert_eq!(
            s.reference_price(Side::Sell, QuoteLevel::Mid).unwrap(),
            Price(10_100)
        );
        let inj = s.inject_agent_order(Side::Buy, QuoteLevel::Mid, 1).unwrap();
        assert!(inj.resting);
        assert_eq!(s.book().best_bid().unwrap().size, 6);
    }

    #[test]
    fn one_sided_book_refuses_mid() {
        let mut s = ReplaySession::new(DayData::new(vec![add(1, 1, Side::Buy, 10_000, 5)]));
        s.advance_until(1).unwrap();
        assert!(matches!(
            s.inject_agent_order(Side::Buy, QuoteLevel::Mid, 1),
            Err(ReplayError::NoReference(QuoteLevel::Mid))
        ));
        assert!(s.inject_agent_order(Side::Sell, QuoteLevel::Bid, 1).is_ok());
    }

    #[test]
    fn agent_bid_ahead_fills_before_historical_execution() {
        // historical sell execution hitting order 1 at the old best bid
        let day = figure_day(vec![msg(
            20,
            MessageKind::ExecuteVisible,
            1,
            Side::Buy,
            4_572_100,
            100,
        )]);
        let mut s = ReplaySession::new(day);
        s.advance_until(10).unwrap();
        // one tick above the historical best bid
        let id = s.next_id();
        s.book
            .submit_limit(Order::new(id, Side::Buy, Price(4_572_200), 1), 10)
            .unwrap();
        s.agent_live.insert(id, Side::Buy);
        let fills = s.advance_until(20).unwrap();
        assert_eq!(fills.len(), 1);
        assert_eq!(
            (fills[0].order_id, fills[0].price, fills[0].aggressive),
            (id, Price(4_572_200), false)
        );
        assert_eq!(s.stats().synthetic_marketable, 1);
        // the remaining 99 shares came out of order 1
        assert_eq!(s.book().order(1).unwrap().size, 1);
        assert_eq!(s.live_agent_orders().count(), 0);
    }

    #[test]
    fn delete_of_consumed_order_is_an_anomaly() {
        let day = DayData::new(vec![
            add(1, 1, Side::Buy, 10_000, 5),
            add(1, 2, Side::Sell, 10_100, 1),
            add(1, 3, Side::Sell, 10_200, 1),
            msg(5, MessageKind::Delete, 2, Side::Sell, 10_100, 1),
        ]);
        let mut s = ReplaySession::new(day);
        s.advance_until(1).unwrap();
        let inj = s.inject_agent_order(Side::Buy, QuoteLevel::Ask, 1).unwrap();
        assert_eq!(inj.fills[0].size, 1);
        s.advance_until(5).unwrap();
        assert_eq!(s.stats().anomalies, 1);
        assert_eq!(s.book().best_ask().unwrap().price, Price(10_200));
    }

    #[test]
    fn no_agents_means_identity_and_no_anomalies() {
        let day = figure_day(vec![
            msg(
                11,
                MessageKind::PartialCancel,
                2,
                Side::Sell,
                4_572_900,
                400,
            ),
            msg(
                12,
                MessageKind::ExecuteVisible,
                2,
                Side::Sell,
                4_572_900,
                100,
            ),
            msg(13, MessageKind::ExecuteHidden, 0, Side::Sell, 4_572_900, 50),
            msg(14, MessageKind::Delete, 3, Side::Buy, 4_571_500, 300),
        ]);
        let mut s = ReplaySession::new(day);
        assert!(s.advance_until(100).unwrap().is_empty());
        assert_eq!(s.stats().anomalies, 0);
        assert_eq!(s.book().best_ask().unwrap().size, 500);
        assert!(s.book().order(3).is_none());
        assert_eq!(s.stats().hidden_or_ignored, 1);
    }

    #[test]
    fn cancel_rules() {
        let mut s = ReplaySession::new(figure_day(vec![]));
        s.advance_until(10).unwrap();
        let inj = s.inject_agent_order(Side::Buy, QuoteLevel::Mid, 1).unwrap();
        assert!(s.cancel_agent_order(inj.order_id).is_ok());
        assert!(matches!(
            s.cancel_agent_order(inj.order_id),
            Err(ReplayError::AgentOrderGone(_))
        ));
        assert!(matches!(
            s.cancel_agent_order(1),
            Err(ReplayError::NotAgentOrder(1))
        ));
        assert!(s.book().contains(1));
    }

    #[test]
    fn clock_cannot_go_back() {
        let mut s = ReplaySession::new(figure_day(vec![]));
        s.advance_until(50).unwrap();
        assert!(matches!(
            s.advance_until(40),
            Err(ReplayError::TimeReversal { .. })
        ));
    }
}
