//! Synthetic LOBSTER days.
//!
//! A latent reference bid `f` (in ticks) follows a bounded random walk. The
//! book keeps every bid at or below `f` and every ask at or above `f + 1`:
//! when `f` moves up the asks at the new reference bid are swept by
//! executions and a new bid joins at `f`, and symmetrically when it moves
//! down. Between moves, orders arrive, are partially cancelled, deleted or
//! executed at the touch as Poisson streams. Every message is applied to a
//! matching engine as it is generated, so the orderbook file is the engine's
//! own reconstruction and the pair is consistent by construction.

use crate::book::{Order, OrderBook, OrderId, Price, Side, Timestamp, NANOS_PER_SECOND};
use crate::replay::lobster::{self, FormatError, MarketMessage, MessageKind, Sentinels};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowModel {
    pub seed: u64,
    /// Session start, seconds after midnight.
    pub start_seconds: f64,
    pub end_seconds: f64,
    /// Opening mid-quote in 1e-4 dollars.
    pub initial_mid: i64,
    pub tick: i64,
    /// Limit order arrivals per second.
    pub add_rate: f64,
    /// Partial executions at the touch per second.
    pub execute_rate: f64,
    /// Partial cancels per second.
    pub cancel_rate: f64,
    /// Deletion hazard per live order per second.
    pub delete_hazard: f64,
    /// Reference price moves per second (walk volatility).
    pub walk_rate: f64,
    /// Maximum distance of the walk from the opening price, in ticks.
    pub walk_bound_ticks: i64,
    /// Hidden executions per second; no-ops for the visible book.
    pub hidden_rate: f64,
    /// Mean distance of new orders behind the touch, in ticks.
    pub mean_offset_ticks: f64,
    pub max_offset_ticks: i64,
    pub lot: u64,
    pub max_lots: u64,
    pub odd_lot_prob: f64,
    pub initial_levels: usize,
    pub initial_orders_per_level: usize,
    /// Levels written to the orderbook file.
    pub depth: usize,
}

impl Default for FlowModel {
    fn default() -> Self {
        FlowModel {
            seed: 0,
            start_seconds: 34_200.0,
            end_seconds: 37_800.0,
            initial_mid: 1_000_050,
            tick: Price::CENT,
            add_rate: 8.0,
            execute_rate: 1.5,
            cancel_rate: 1.0,
            delete_hazard: 0.05,
            walk_rate: 1.0,
            walk_bound_ticks: 400,
            hidden_rate: 0.2,
            mean_offset_ticks: 2.0,
            max_offset_ticks: 20,
            lot: 100,
            max_lots: 5,
            odd_lot_prob: 0.1,
            initial_levels: 10,
            initial_orders_per_level: 3,
            depth: 5,
        }
    }
}

impl FlowModel {
    pub fn start(&self) -> Timestamp {
        (self.start_seconds * NANOS_PER_SECOND as f64).round() as Timestamp
    }

    pub fn end(&self) -> Timestamp {
        (self.end_seconds * NANOS_PER_SECOND as f64).round() as Timestamp
    }

    /// Multiplies every event rate by `factor`.
    pub fn scale_rates(&self, factor: f64) -> FlowModel {
        FlowModel {
            add_rate: self.add_rate * factor,
            execute_rate: self.execute_rate * factor,
            cancel_rate: self.cancel_rate * factor,
            delete_hazard: self.delete_hazard * factor,
            walk_rate: self.walk_rate * factor,
            hidden_rate: self.hidden_rate * factor,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let rates = [
            ("add_rate", self.add_rate),
            ("execute_rate", self.execute_rate),
            ("cancel_rate", self.cancel_rate),
            ("delete_hazard", self.delete_hazard),
            ("walk_rate", self.walk_rate),
            ("hidden_rate", self.hidden_rate),
        ];
        for (name, r) in rates {
            if !(r > 0.0 && r.is_finite()) {
                return Err(format!("{name} must be positive, got {r}"));
            }
        }
        if self.end_seconds <= self.start_seconds {
            return Err("session end must follow start".into());
        }
        if self.tick <= 0
            || self.initial_mid
                <= self.tick
                    * (self.walk_bound_ticks
                        + self.max_offset_ticks
                        + self.initial_levels as i64
                        + 2)
        {
            return Err("initial_mid too small for the walk bound and book depth".into());
        }
        if self.lot == 0 || self.max_lots == 0 || self.depth == 0 || self.initial_levels == 0 {
            return Err("lot, max_lots, depth and initial_levels must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.odd_lot_prob) || self.mean_offset_ticks < 0.0 {
            return Err("odd_lot_prob must be in [0, 1] and mean_offset_ticks non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DaySummary {
    pub messages: usize,
    pub adds: usize,
    pub partial_cancels: usize,
    pub deletes: usize,
    pub executions: usize,
    pub hidden: usize,
    pub walk_moves: usize,
    pub first_time: Timestamp,
    pub last_time: Timestamp,
    pub opening_mid2: Option<i64>,
    pub closing_mid2: Option<i64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticDay {
    pub messages: Vec<MarketMessage>,
    pub rows: Vec<Vec<i64>>,
    pub summary: DaySummary,
}

struct Generator<'a> {
    model: &'a FlowModel,
    rng: ChaCha8Rng,
    book: OrderBook,
    live: Vec<OrderId>,
    slot: HashMap<OrderId, usize>,
    next_id: OrderId,
    reference: i64,
    out: SyntheticDay,
    sentinels: Sentinels,
}

impl Generator<'_> {
    fn size(&mut self) -> u64 {
        let m = self.model;
        if self.rng.random_bool(m.odd_lot_prob) {
            self.rng.random_range(1..m.lot.max(2))
        } else {
            m.lot * self.rng.random_range(1..=m.max_lots)
        }
    }

    fn offset(&mut self) -> i64 {
        let p = 1.0 / (1.0 + self.model.mean_offset_ticks);
        let g = Geometric::new(p)
            .expect("valid probability")
            .sample(&mut self.rng);
        (g as i64).min(self.model.max_offset_ticks)
    }

    fn track(&mut self, id: OrderId) {
        self.slot.insert(id, self.live.len());
        self.live.push(id);
    }

    fn untrack(&mut self, id: OrderId) {
        if let Some(i) = self.slot.remove(&id) {
            self.live.swap_remove(i);
            if let Some(&moved) = self.live.get(i) {
                self.slot.insert(moved, i);
            }
        }
    }

    fn emit(&mut self, msg: MarketMessage) {
        match msg.kind {
            MessageKind::Add => {
                let out = self
                    .book
                    .submit_limit(
                        Order::new(msg.order_id, msg.direction, msg.price, msg.size),
                        msg.time,
                    )
                    .expect("generated adds are valid");
                debug_assert!(out.executions.is_empty(), "generated adds never cross");
                self.track(msg.order_id);
                self.out.summary.adds += 1;
            }
            MessageKind::PartialCancel => {
                self.book
                    .cancel(msg.order_id, msg.size)
                    .expect("live order");
                self.out.summary.partial_cancels += 1;
            }
            MessageKind::Delete => {
                self.book.delete(msg.order_id).expect("live order");
                self.untrack(msg.order_id);
                self.out.summary.deletes += 1;
            }
            MessageKind::ExecuteVisible => {
                self.book
                    .execute_order(msg.order_id, msg.size, msg.time)
                    .expect("live order");
                if !self.book.contains(msg.order_id) {
                    self.untrack(msg.order_id);
                }
                self.out.summary.executions += 1;
            }
            _ => self.out.summary.hidden += 1,
        }
        let snap = self.book.snapshot(self.model.depth);
        self.out.rows.push(lobster::snapshot_row(
            &snap,
            self.model.depth,
            &self.sentinels,
        ));
        self.out.messages.push(msg);
    }

    fn add(&mut self, t: Timestamp, side: Side, tick_price: i64) {
        let size = self.size();
        let id = self.next_id;
        self.next_id += 1;
        self.emit(MarketMessage {
            time: t,
            kind: MessageKind::Add,
            order_id: id,
            size,
            price: Price(tick_price * self.model.tick),
            direction: side,
        });
    }

    fn random_add(&mut self, t: Timestamp) {
        let side = if self.rng.random_bool(0.5) {
            Side::Buy
        } else {
            Side::Sell
        };
        let off = self.offset();
        let ticks = match side {
            Side::Buy => self.reference - off,
            Side::Sell => self.reference + 1 + off,
        };
        self.add(t, side, ticks);
    }

    fn front(&self, side: Side) -> Option<Order> {
        let best = match side {
            Side::Buy => self.book.best_bid()?,
            Side::Sell => self.book.best_ask()?,
        };
        self.book.level_orders(side, best.price).into_iter().next()
    }

    fn execute(&mut self, t: Timestamp, order: &Order, size: u64) {
        self.emit(MarketMessage {
            time: t,
            kind: MessageKind::ExecuteVisible,
            order_id: order.id,
            size,
            price: order.price,
            direction: order.side,
        });
    }

    fn touch_execution(&mut self, t: Timestamp) {
        let side = if self.rng.random_bool(0.5) {
            Side::Buy
        } else {
            Side::Sell
        };
        if let Some(front) = self.front(side) {
            let size = if self.rng.random_bool(0.5) {
                front.size
            } else {
                self.rng.random_range(1..=front.size)
            };
            self.execute(t, &front, size);
        }
    }

    fn random_live(&mut self) -> Option<Order> {
        if self.live.is_empty() {
            return None;
        }
        let id = self.live[self.rng.random_range(0..self.live.len())];
        self.book.order(id)
    }

    fn partial_cancel(&mut self, t: Timestamp) {
        if let Some(o) = self.random_live().filter(|o| o.size > 1) {
            let qty = self.rng.random_range(1..o.size);
            self.emit(MarketMessage {
                time: t,
                kind: MessageKind::PartialCancel,
                order_id: o.id,
                size: qty,
                price: o.price,
                direction: o.side,
            });
        }
    }

    fn delete(&mut self, t: Timestamp) {
        if let Some(o) = self.random_live() {
            self.emit(MarketMessage {
                time: t,
                kind: MessageKind::Delete,
                order_id: o.id,
                size: o.size,
                price: o.price,
                direction: o.side,
            });
        }
    }

    fn walk(&mut self, t: Timestamp, opening: i64) {
        let bound = self.model.walk_bound_ticks;
        let mut up = self.rng.random_bool(0.5);
        if self.reference >= opening + bound {
            up = false;
        } else if self.reference <= opening - bound {
            up = true;
        }
        self.out.summary.walk_moves += 1;
        let tick = self.model.tick;
        if up {
            self.reference += 1;
            while let Some(front) = self
                .front(Side::Sell)
                .filter(|o| o.price.0 <= self.reference * tick)
            {
                self.execute(t, &front, front.size);
            }
            self.add(t, Side::Buy, self.reference);
        } else {
            self.reference -= 1;
            while let Some(front) = self
                .front(Side::Buy)
                .filter(|o| o.price.0 > self.reference * tick)
            {
                self.execute(t, &front, front.size);
            }
            self.add(t, Side::Sell, self.reference + 1);
        }
    }

    fn hidden(&mut self, t: Timestamp) {
        let size = self.size();
        let side = if self.rng.random_bool(0.5) {
            Side::Buy
        } else {
            Side::Sell
        };
        let price = Price(self.reference * self.model.tick);
        self.emit(MarketMessage {
            time: t,
            kind: MessageKind::ExecuteHidden,
            order_id: 0,
            size,
            price,
            direction: side,
        });
    }
}

/// Generates one session in memory.
pub fn simulate_day(model: &FlowModel) -> Result<SyntheticDay, String> {
    model.validate()?;
    let opening = (model.initial_mid - model.tick / 2).div_euclid(model.tick);
    let mut g = Generator {
        model,
        rng: ChaCha8Rng::seed_from_u64(model.seed),
        book: OrderBook::new(model.tick),
        live: Vec::new(),
        slot: HashMap::new(),
        next_id: 1,
        reference: opening,
        out: SyntheticDay {
            messages: Vec::new(),
            rows: Vec::new(),
            summary: DaySummary::default(),
        },
        sentinels: Sentinels::default(),
    };
    let start = model.start();
    let end = model.end();
    for level in 0..model.initial_levels as i64 {
        for _ in 0..model.initial_orders_per_level {
            g.add(start, Side::Buy, opening - level);
            g.add(start, Side::Sell, opening + 1 + level);
        }
    }
    g.out.summary.opening_mid2 = g.book.mid2();

    let weights = |g: &Generator<'_>| {
        [
            model.add_rate,
            model.execute_rate,
            model.cancel_rate,
            model.delete_hazard * g.live.len() as f64,
            model.walk_rate,
            model.hidden_rate,
        ]
    };
    let mut t_seconds = model.start_seconds;
    loop {
        let w = weights(&g);
        let total: f64 = w.iter().sum();
        t_seconds += Exp::new(total)
            .expect("positive total rate")
            .sample(&mut g.rng);
        let t = ((t_seconds * NANOS_PER_SECOND as f64).round() as Timestamp)
            .max(g.out.summary.last_time);
        if t >= end {
            break;
        }
        let mut u = g.rng.random_range(0.0..total);
        let mut event = w.len() - 1;
        for (i, wi) in w.iter().enumerate() {
            if u < *wi {
                event = i;
                break;
            }
            u -= wi;
        }
        match event {
            0 => g.random_add(t),
            1 => g.touch_execution(t),
            2 => g.partial_cancel(t),
            3 => g.delete(t),
            4 => g.walk(t, opening),
            _ => g.hidden(t),
        }
        g.out.summary.last_time = g.out.messages.last().map_or(t, |m| m.time);
    }
    let s = &mut g.out.summary;
    s.messages = g.out.messages.len();
    s.first_time = g.out.messages.first().map_or(start, |m| m.time);
    s.last_time = g.out.messages.last().map_or(start, |m| m.time);
    s.closing_mid2 = g.book.mid2();
    Ok(g.out)
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid flow model: {0}")]
    Model(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Writes a LOBSTER message/orderbook file pair.
pub fn generate_day(
    model: &FlowModel,
    message_path: &Path,
    orderbook_path: &Path,
) -> Result<DaySummary, SynthError> {
    let day = simulate_day(model).map_err(SynthError::Model)?;
    lobster::write_messages(message_path, &day.messages)?;
    lobster::write_orderbook(orderbook_path, &day.rows)?;
    Ok(day.summary)
}
