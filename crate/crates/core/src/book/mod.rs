//! Price-time priority limit order book.
//!
//! Each side is a `BTreeMap` from price to a FIFO level. Cancelled orders are
//! removed from the id index immediately and their queue slots are skipped
//! lazily, so cancels never shift the queue positions of other orders.

mod types;

pub use types::*;

use std::collections::{BTreeMap, HashMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BookError {
    #[error("order id {0} is already resting in the book")]
    DuplicateId(OrderId),
    #[error("order {0} has zero size")]
    ZeroSize(OrderId),
    #[error("order {id} price {price} is not positive")]
    NonPositivePrice { id: OrderId, price: i64 },
    #[error("order {id} price {price} is not a multiple of the tick size {tick}")]
    OffTick { id: OrderId, price: i64, tick: i64 },
    #[error("order {0} not found")]
    NotFound(OrderId),
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    id: OrderId,
    seq: u64,
}

#[derive(Debug, Clone, Default)]
struct Level {
    queue: VecDeque<Slot>,
    total: u64,
    agent: u64,
    live: usize,
}

impl Level {
    fn compact(&mut self, orders: &HashMap<OrderId, Resting>) {
        if self.queue.len() > 2 * self.live + 16 {
            self.queue
                .retain(|s| orders.get(&s.id).is_some_and(|r| r.seq == s.seq));
        }
    }
}

#[derive(Debug, Clone)]
struct Resting {
    side: Side,
    price: i64,
    size: u64,
    seq: u64,
    owner: Owner,
}

impl Resting {
    fn to_order(&self, id: OrderId) -> Order {
        Order {
            id,
            side: self.side,
            price: Price(self.price),
            size: self.size,
            entry_seq: self.seq,
            owner: self.owner,
        }
    }
}

/// Running share totals, used to check conservation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BookStats {
    pub added: u64,
    pub executed: u64,
    pub cancelled: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LimitOutcome {
    pub executions: Vec<Execution>,
    pub resting: Option<Order>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarketOutcome {
    pub executions: Vec<Execution>,
    /// Shares that found no liquidity.
    pub unfilled: u64,
}

impl MarketOutcome {
    pub fn filled(&self) -> u64 {
        self.executions.iter().map(|e| e.size).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CancelOutcome {
    Reduced { remaining: u64 },
    Deleted(Order),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelQuote {
    pub price: Price,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BookSnapshot {
    /// Best first.
    pub asks: Vec<LevelQuote>,
    /// Best first.
    pub bids: Vec<LevelQuote>,
    /// Twice the mid-quote, `None` when either side is empty.
    pub mid2: Option<i64>,
}

impl BookSnapshot {
    pub fn mid(&self) -> Option<f64> {
        self.mid2.map(|m| m as f64 / 2.0)
    }

    pub fn best_ask(&self) -> Option<LevelQuote> {
        self.asks.first().copied()
    }

    pub fn best_bid(&self) -> Option<LevelQuote> {
        self.bids.first().copied()
    }
}

#[derive(Debug, Clone)]
pub struct OrderBook {
    bids: BTreeMap<i64, Level>,
    asks: BTreeMap<i64, Level>,
    orders: HashMap<OrderId, Resting>,
    next_seq: u64,
    tick: i64,
    stats: BookStats,
}

impl Default for OrderBook {
    fn default() -> Self {
        Self::new(Price::CENT)
    }
}

impl OrderBook {
    pub fn new(tick: i64) -> Self {
        assert!(tick > 0, "tick size must be positive");
        OrderBook {
            bids: BTreeMap::new(),
            asks: BTreeMap::new(),
            orders: HashMap::new(),
            next_seq: 1,
            tick,
            stats: BookStats::default(),
        }
    }

    pub fn tick(&self) -> i64 {
        self.tick
    }

    pub fn stats(&self) -> BookStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.orders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    pub fn best_bid(&self) -> Option<LevelQuote> {
        self.bids.iter().next_back().map(|(&p, l)| LevelQuote {
            price: Price(p),
            size: l.total,
        })
    }

    pub fn best_ask(&self) -> Option<LevelQuote> {
        self.asks.iter().next().map(|(&p, l)| LevelQuote {
            price: Price(p),
            size: l.total,
        })
    }

    pub fn mid2(&self) -> Option<i64> {
        Some(self.best_bid()?.price.0 + self.best_ask()?.price.0)
    }

    pub fn order(&self, id: OrderId) -> Option<Order> {
        self.orders.get(&id).map(|r| r.to_order(id))
    }

    pub fn contains(&self, id: OrderId) -> bool {
        self.orders.contains_key(&id)
    }

    /// Live orders at one price in queue order.
    pub fn level_orders(&self, side: Side, price: Price) -> Vec<Order> {
        let ladder = match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        };
        ladder
            .get(&price.0)
            .map(|level| {
                level
                    .queue
                    .iter()
                    .filter_map(|s| {
                        self.orders
                            .get(&s.id)
                            .filter(|r| r.seq == s.seq)
                            .map(|r| r.to_order(s.id))
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Agent volume resting at exactly `price` on `side`.
    pub fn agent_volume_at(&self, side: Side, price: Price) -> u64 {
        let ladder = match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        };
        ladder.get(&price.0).map_or(0, |l| l.agent)
    }

    /// Agent volume on `side` at prices at least as aggressive as `limit`.
    pub fn agent_volume_through(&self, side: Side, limit: Price) -> u64 {
        match side {
            Side::Buy => self.bids.range(limit.0..).map(|(_, l)| l.agent).sum(),
            Side::Sell => self.asks.range(..=limit.0).map(|(_, l)| l.agent).sum(),
        }
    }

    pub fn snapshot(&self, depth: usize) -> BookSnapshot {
        let quote = |(&p, l): (&i64, &Level)| LevelQuote {
            price: Price(p),
            size: l.total,
        };
        BookSnapshot {
            asks: self.asks.iter().take(depth).map(quote).collect(),
            bids: self.bids.iter().rev().take(depth).map(quote).collect(),
            mid2: self.mid2(),
        }
    }

    fn validate(&self, order: &Order) -> Result<(), BookError> {
        if order.size == 0 {
            return Err(BookError::ZeroSize(order.id));
        }
        if order.price.0 <= 0 {
            return Err(BookError::NonPositivePrice {
                id: order.id,
                price: order.price.0,
            });
        }
        if order.price.0 % self.tick != 0 {
            return Err(BookError::OffTick {
                id: order.id,
                price: order.price.0,
                tick: self.tick,
            });
        }
        if self.orders.contains_key(&order.id) {
            return Err(BookError::DuplicateId(order.id));
        }
        Ok(())
    }

    /// Matches the marketable part of a limit order and rests the remainder.
    pub fn submit_limit(
        &mut self,
        order: Order,
        now: Timestamp,
    ) -> Result<LimitOutcome, BookError> {
        self.validate(&order)?;
        self.stats.added += order.size;
        let mut executions = Vec::new();
        let remaining = self.match_incoming(
            order.id,
            order.side,
            Some(order.price.0),
            order.size,
            now,
            &mut executions,
        );
        let resting = (remaining > 0)
            .then(|| self.rest(order.id, order.side, order.price.0, remaining, order.owner));
        Ok(LimitOutcome {
            executions,
            resting,
        })
    }

    /// Immediate-or-cancel: matches up to `limit` and discards the rest.
    pub fn submit_ioc(
        &mut self,
        taker_id: OrderId,
        side: Side,
        limit: Price,
        size: u64,
        now: Timestamp,
    ) -> Result<MarketOutcome, BookError> {
        if size == 0 {
            return Err(BookError::ZeroSize(taker_id));
        }
        self.stats.added += size;
        let mut executions = Vec::new();
        let unfilled =
            self.match_incoming(taker_id, side, Some(limit.0), size, now, &mut executions);
        self.stats.cancelled += unfilled;
        Ok(MarketOutcome {
            executions,
            unfilled,
        })
    }

    /// Walks the opposite side until filled or exhausted; never rests.
    pub fn submit_market(
        &mut self,
        taker_id: OrderId,
        side: Side,
        size: u64,
        now: Timestamp,
    ) -> Result<MarketOutcome, BookError> {
        if size == 0 {
            return Err(BookError::ZeroSize(taker_id));
        }
        self.stats.added += size;
        let mut executions = Vec::new();
        let unfilled = self.match_incoming(taker_id, side, None, size, now, &mut executions);
        self.stats.cancelled += unfilled;
        Ok(MarketOutcome {
            executions,
            unfilled,
        })
    }

    fn rest(&mut self, id: OrderId, side: Side, price: i64, size: u64, owner: Owner) -> Order {
        let seq = self.next_seq;
        self.next_seq += 1;
        let ladder = match side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        };
        let level = ladder.entry(price).or_default();
        level.queue.push_back(Slot { id, seq });
        level.total += size;
        level.live += 1;
        if owner == Owner::Agent {
            level.agent += size;
        }
        let resting = Resting {
            side,
            price,
            size,
            seq,
            owner,
        };
        let order = resting.to_order(id);
        self.orders.insert(id, resting);
        order
    }

    fn match_incoming(
        &mut self,
        taker_id: OrderId,
        side: Side,
        limit: Option<i64>,
        mut remaining: u64,
        now: Timestamp,
        out: &mut Vec<Execution>,
    ) -> u64 {
        let OrderBook {
            bids,
            asks,
            orders,
            stats,
            ..
        } = self;
        let ladder = match side {
            Side::Buy => asks,
            Side::Sell => bids,
        };
        while remaining > 0 {
            let best = match side {
                Side::Buy => ladder.keys().next().copied(),
                Side::Sell => ladder.keys().next_back().copied(),
            };
            let Some(price) = best else { break };
            let crosses = match (side, limit) {
                (_, None) => true,
                (Side::Buy, Some(l)) => price <= l,
                (Side::Sell, Some(l)) => price >= l,
            };
            if !crosses {
                break;
            }
            let level = ladder.get_mut(&price).expect("best level exists");
            while remaining > 0 {
                let Some(&slot) = level.queue.front() else {
                    break;
                };
                let maker = match orders.get_mut(&slot.id) {
                    Some(r) if r.seq == slot.seq => r,
                    _ => {
                        level.queue.pop_front();
                        continue;
                    }
                };
                let fill = maker.size.min(remaining);
                maker.size -= fill;
                remaining -= fill;
                level.total -= fill;
                if maker.owner == Owner::Agent {
                    level.agent -= fill;
                }
                stats.executed += fill;
                out.push(Execution {
                    maker_id: slot.id,
                    taker_id,
                    price: Price(price),
                    size: fill,
                    aggressor_side: side,
                    timestamp: now,
                });
                if maker.size == 0 {
                    orders.remove(&slot.id);
                    level.queue.pop_front();
                    level.live -= 1;
                }
            }
            if level.live == 0 {
                ladder.remove(&price);
            }
        }
        remaining
    }

    /// Reduces a resting order by `qty` keeping its queue position; a
    /// quantity at or above the remaining size deletes it.
    pub fn cancel(&mut self, id: OrderId, qty: u64) -> Result<CancelOutcome, BookError> {
        let resting = self.orders.get(&id).ok_or(BookError::NotFound(id))?;
        if qty >= resting.size {
            return self.delete(id).map(CancelOutcome::Deleted);
        }
        let (side, price, owner) = (resting.side, resting.price, resting.owner);
        let resting = self.orders.get_mut(&id).expect("checked above");
        resting.size -= qty;
        let remaining = resting.size;
        let level = self
            .ladder_mut(side)
            .get_mut(&price)
            .expect("indexed order has a level");
        level.total -= qty;
        if owner == Owner::Agent {
            level.agent -= qty;
        }
        self.stats.cancelled += qty;
        Ok(CancelOutcome::Reduced { remaining })
    }

    pub fn delete(&mut self, id: OrderId) -> Result<Order, BookError> {
        let resting = self.orders.remove(&id).ok_or(BookError::NotFound(id))?;
        self.stats.cancelled += resting.size;
        self.unlink(&resting);
        Ok(resting.to_order(id))
    }

    /// Executes a specific resting order, as a message file does. Sizes
    /// beyond the remaining quantity are clipped; the second value reports
    /// how many shares were clipped.
    pub fn execute_order(
        &mut self,
        id: OrderId,
        size: u64,
        now: Timestamp,
    ) -> Result<(Execution, u64), BookError> {
        let resting = self.orders.get_mut(&id).ok_or(BookError::NotFound(id))?;
        if size == 0 {
            return Err(BookError::ZeroSize(id));
        }
        let fill = size.min(resting.size);
        let clipped = size - fill;
        resting.size -= fill;
        let (side, price, owner, left) = (resting.side, resting.price, resting.owner, resting.size);
        self.stats.executed += fill;
        let exec = Execution {
            maker_id: id,
            taker_id: UNKNOWN_TAKER,
            price: Price(price),
            size: fill,
            aggressor_side: side.opposite(),
            timestamp: now,
        };
        if left == 0 {
            let resting = self.orders.remove(&id).expect("present");
            // size already drained; unlink only fixes the level counters
            let mut r = resting;
            r.size = fill;
            self.unlink(&r);
        } else {
            let level = self
                .ladder_mut(side)
                .get_mut(&price)
                .expect("indexed order has a level");
            level.total -= fill;
            if owner == Owner::Agent {
                level.agent -= fill;
            }
        }
        Ok((exec, clipped))
    }

    fn ladder_mut(&mut self, side: Side) -> &mut BTreeMap<i64, Level> {
        match side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        }
    }

    /// Removes a resting order (already dropped from the index) from its level.
    fn unlink(&mut self, resting: &Resting) {
        let OrderBook {
            bids, asks, orders, ..
        } = self;
        let ladder = match resting.side {
            Side::Buy => bids,
            Side::Sell => asks,
        };
        let level = ladder
            .get_mut(&resting.price)
            .expect("indexed order has a level");
        level.total -= resting.size;
        if resting.owner == Owner::Agent {
            level.agent -= resting.size;
        }
        level.live -= 1;
        if level.live == 0 {
            ladder.remove(&resting.price);
        } else {
            if level.queue.front().is_some_and(|s| s.seq == resting.seq) {
                level.queue.pop_front();
            }
            level.compact(orders);
        }
    }

    /// Full structural check; O(n). Returns a description of the first
    /// violated invariant.
    pub fn check_invariants(&self) -> Result<(), String> {
        if let (Some(b), Some(a)) = (self.best_bid(), self.best_ask()) {
            if b.price >= a.price {
                return Err(format!(
                    "crossed book: bid {} >= ask {}",
                    b.price.0, a.price.0
                ));
            }
        }
        let mut seen = 0usize;
        for (side, ladder) in [(Side::Buy, &self.bids), (Side::Sell, &self.asks)] {
            for (&price, level) in ladder {
                let live: Vec<_> = self.level_orders(side, Price(price));
                if live.is_empty() {
                    return Err(format!("empty level {price} not pruned"));
                }
                if live.len() != level.live {
                    return Err(format!(
                        "level {price}: live count {} vs {}",
                        level.live,
                        live.len()
                    ));
                }
                let total: u64 = live.iter().map(|o| o.size).sum();
                let agent: u64 = live
                    .iter()
                    .filter(|o| o.owner == Owner::Agent)
                    .map(|o| o.size)
                    .sum();
                if total != level.total || agent != level.agent {
                    return Err(format!("level {price}: size totals out of sync"));
                }
                if live.windows(2).any(|w| w[0].entry_seq >= w[1].entry_seq) {
                    return Err(format!("level {price}: queue not in entry order"));
                }
                if live.iter().any(|o| o.side != side || o.size == 0) {
                    return Err(format!("level {price}: bad order"));
                }
                seen += live.len();
            }
        }
        if seen != self.orders.len() {
            return Err(format!(
                "index has {} orders, ladders {}",
                self.orders.len(),
                seen
            ));
        }
        Ok(())
    }
}
