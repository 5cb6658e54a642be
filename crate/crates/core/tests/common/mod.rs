//! Shared test helpers: a brute-force reference matcher, random order flow
//! and short synthetic sessions.
#![allow(dead_code)]

use lobrl::book::{
    BookSnapshot, Execution, LevelQuote, Order, OrderBook, OrderId, Price, Side, Timestamp,
    UNKNOWN_TAKER,
};
use lobrl::env::EnvConfig;
use lobrl::replay::DayData;
use lobrl::rl::market::PreparedDay;
use lobrl::synth::{simulate_day, FlowModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TICK: i64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Limit {
        id: OrderId,
        side: Side,
        price: i64,
        size: u64,
    },
    Market {
        id: OrderId,
        side: Side,
        size: u64,
    },
    Cancel {
        id: OrderId,
        qty: u64,
    },
    Delete {
        id: OrderId,
    },
    Execute {
        id: OrderId,
        size: u64,
    },
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    id: OrderId,
    side: Side,
    price: i64,
    size: u64,
    seq: u64,
}

/// Linear-scan order book. Every query walks all resting orders.
#[derive(Debug, Default)]
pub struct ReferenceBook {
    orders: Vec<Slot>,
    seq: u64,
}

impl ReferenceBook {
    fn best_maker(&self, taker: Side, limit: Option<i64>) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, o) in self.orders.iter().enumerate() {
            if o.side == taker {
                continue;
            }
            let crosses = match (taker, limit) {
                (_, None) => true,
                (Side::Buy, Some(l)) => o.price <= l,
                (Side::Sell, Some(l)) => o.price >= l,
            };
            if !crosses {
                continue;
            }
            let better = match best {
                None => true,
                Some(j) => {
                    let b = &self.orders[j];
                    let price_better = match taker {
                        Side::Buy => o.price < b.price,
                        Side::Sell => o.price > b.price,
                    };
                    price_better || (o.price == b.price && o.seq < b.seq)
                }
            };
            if better {
                best = Some(i);
            }
        }
        best
    }

    fn take(
        &mut self,
        taker: OrderId,
        side: Side,
        limit: Option<i64>,
        mut size: u64,
        now: Timestamp,
        out: &mut Vec<Execution>,
    ) -> u64 {
        while size > 0 {
            let Some(i) = self.best_maker(side, limit) else {
                break;
            };
            let fill = size.min(self.orders[i].size);
            out.push(Execution {
                maker_id: self.orders[i].id,
                taker_id: taker,
                price: Price(self.orders[i].price),
                size: fill,
                aggressor_side: side,
                timestamp: now,
            });
            size -= fill;
            self.orders[i].size -= fill;
            if self.orders[i].size == 0 {
                self.orders.remove(i);
            }
        }
        size
    }

    fn find(&self, id: OrderId) -> Option<usize> {
        self.orders.iter().position(|o| o.id == id)
    }

    pub fn contains(&self, id: OrderId) -> bool {
        self.find(id).is_some()
    }

    /// Applies `op`; `None` when the op is rejected (unknown id).
    pub fn apply(&mut self, op: Op, now: Timestamp) -> Option<Vec<Execution>> {
        let mut out = Vec::new();
        match op {
            Op::Limit {
                id,
                side,
                price,
                size,
            } => {
                let left = self.take(id, side, Some(price), size, now, &mut out);
                if left > 0 {
                    self.seq += 1;
                    self.orders.push(Slot {
                        id,
                        side,
                        price,
                        size: left,
                        seq: self.seq,
                    });
                }
            }
            Op::Market { id, side, size } => {
                self.take(id, side, None, size, now, &mut out);
            }
            Op::Cancel { id, qty } => {
                let i = self.find(id)?;
                if qty >= self.orders[i].size {
                    self.orders.remove(i);
                } else {
                    self.orders[i].size -= qty;
                }
            }
            Op::Delete { id } => {
                let i = self.find(id)?;
                self.orders.remove(i);
            }
            Op::Execute { id, size } => {
                let i = self.find(id)?;
                let o = self.orders[i];
                let fill = size.min(o.size);
                out.push(Execution {
                    maker_id: id,
                    taker_id: UNKNOWN_TAKER,
                    price: Price(o.price),
                    size: fill,
                    aggressor_side: o.side.opposite(),
                    timestamp: now,
                });
                self.orders[i].size -= fill;
                if self.orders[i].size == 0 {
                    self.orders.remove(i);
                }
            }
        }
        Some(out)
    }

    fn side_levels(&self, side: Side, depth: usize) -> Vec<LevelQuote> {
        let mut prices: Vec<i64> = self
            .orders
            .iter()
            .filter(|o| o.side == side)
            .map(|o| o.price)
            .collect();
        prices.sort_unstable();
        prices.dedup();
        if side == Side::Buy {
            prices.reverse();
        }
        prices
            .into_iter()
            .take(depth)
            .map(|p| LevelQuote {
                price: Price(p),
                size: self
                    .orders
                    .iter()
                    .filter(|o| o.side == side && o.price == p)
                    .map(|o| o.size)
                    .sum(),
            })
            .collect()
    }

    pub fn snapshot(&self, depth: usize) -> BookSnapshot {
        let asks = self.side_levels(Side::Sell, depth);
        let bids = self.side_levels(Side::Buy, depth);
        let mid2 = match (bids.first(), asks.first()) {
            (Some(b), Some(a)) => Some(b.price.0 + a.price.0),
            _ => None,
        };
        BookSnapshot { asks, bids, mid2 }
    }

    pub fn total_size(&self) -> u64 {
        self.orders.iter().map(|o| o.size).sum()
    }

    pub fn len(&self) -> usize {
        self.orders.len()
    }
}

/// Applies `op` to the engine, mirroring [`ReferenceBook::apply`].
pub fn apply_engine(book: &mut OrderBook, op: Op, now: Timestamp) -> Option<Vec<Execution>> {
    match op {
        Op::Limit {
            id,
            side,
            price,
            size,
        } => book
            .submit_limit(Order::new(id, side, Price(price), size), now)
            .ok()
            .map(|o| o.executions),
        Op::Market { id, side, size } => book
            .submit_market(id, side, size, now)
            .ok()
            .map(|o| o.executions),
        Op::Cancel { id, qty } => book.cancel(id, qty).ok().map(|_| Vec::new()),
        Op::Delete { id } => book.delete(id).ok().map(|_| Vec::new()),
        Op::Execute { id, size } => book.execute_order(id, size, now).ok().map(|(e, _)| vec![e]),
    }
}

/// Random order flow around a fixed centre price. Cancels, deletes and
/// executions mostly target ids issued earlier, some of them gone.
pub fn random_ops(rng: &mut impl Rng, n: usize) -> Vec<Op> {
    let centre = 1_000_000;
    let mut next: OrderId = 1;
    let mut issued: Vec<OrderId> = Vec::new();
    let mut ops = Vec::with_capacity(n);
    for _ in 0..n {
        let side = if rng.random_bool(0.5) {
            Side::Buy
        } else {
            Side::Sell
        };
        let size = rng.random_range(1..=300);
        let pick = |rng: &mut dyn rand::RngCore, issued: &[OrderId], next: OrderId| {
            if issued.is_empty() || rng.random_bool(0.05) {
                next + 7
            } else {
                issued[rng.random_range(0..issued.len())]
            }
        };
        let op = match rng.random_range(0..100) {
            0..=54 => {
                // buys mostly below the centre, sells above, with overlap
                let offset = rng.random_range(-3..=8) * TICK;
                let price = centre - side.sign() * offset;
                let id = next;
                next += 1;
                issued.push(id);
                Op::Limit {
                    id,
                    side,
                    price,
                    size,
                }
            }
            55..=64 => {
                let id = next;
                next += 1;
                Op::Market { id, side, size }
            }
            65..=79 => Op::Cancel {
                id: pick(rng, &issued, next),
                qty: rng.random_range(1..=200),
            },
            80..=91 => Op::Delete {
                id: pick(rng, &issued, next),
            },
            _ => Op::Execute {
                id: pick(rng, &issued, next),
                size: rng.random_range(1..=200),
            },
        };
        ops.push(op);
    }
    ops
}

/// Runs `ops` through the engine and the reference; returns the index of
/// the first divergence. Executions are compared after every op, books
/// every `snapshot_every` ops and at the end.
pub fn first_divergence(ops: &[Op], depth: usize, snapshot_every: usize) -> Option<usize> {
    let mut book = OrderBook::new(TICK);
    let mut reference = ReferenceBook::default();
    for (i, &op) in ops.iter().enumerate() {
        let now = i as Timestamp;
        let a = apply_engine(&mut book, op, now);
        let b = reference.apply(op, now);
        let check_books = (i + 1) % snapshot_every == 0 || i + 1 == ops.len();
        if a != b || (check_books && book.snapshot(depth) != reference.snapshot(depth)) {
            return Some(i);
        }
    }
    None
}

/// A short synthetic session starting at 09:30.
pub fn short_model(seed: u64, seconds: f64) -> FlowModel {
    FlowModel {
        seed,
        end_seconds: 34_200.0 + seconds,
        ..FlowModel::default()
    }
}

pub fn env_for(seconds: f64, history: usize) -> EnvConfig {
    EnvConfig {
        episode_seconds: seconds,
        history,
        ..EnvConfig::default()
    }
}

/// In-memory synthetic day prepared for `env`.
pub fn prepared_day(seed: u64, env: &EnvConfig) -> PreparedDay {
    let model = short_model(seed, env.episode_seconds + 5.0);
    let day = simulate_day(&model).expect("valid model");
    PreparedDay::new(format!("day{seed}"), DayData::new(day.messages), env)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// What [`audit_random_episode`] saw.
#[derive(Debug, Default, Clone)]
pub struct Audit {
    pub steps: u64,
    pub breaches: u64,
    pub forced_orders: u64,
    pub out_of_bounds: u64,
    /// Largest |sum of pnl rewards - ln(M_T / M_0)| over episodes.
    pub pnl_sum_error: f64,
    /// Largest deviation of the step value change from its decomposition,
    /// in price units.
    pub delta_m_error: f64,
    /// Steps whose cash or inventory change disagrees with their fills.
    pub fill_mismatches: u64,
    /// Forced orders on the wrong side, of the wrong size, or without a
    /// breach.
    pub bad_forced: u64,
}

/// Plays uniformly random actions for one episode, checking accounting and
/// the inventory constraint after every step.
pub fn audit_random_episode(cfg: &EnvConfig, day: &PreparedDay, seed: u64, audit: &mut Audit) {
    use lobrl::env::{AgentAction, TradingEnv};
    use lobrl::rl::market::start_episode;
    use lobrl::signal::SignalParams;

    let mut env = TradingEnv::new(cfg.clone()).unwrap();
    start_episode(&mut env, day, &SignalParams::default(), TICK, seed).unwrap();
    let m0 = env.portfolio().unwrap().value();
    let mut rng = seeded(seed);
    let mut pnl_sum = 0.0;
    loop {
        let action = AgentAction::from_index(rng.random_range(0..AgentAction::COUNT));
        let out = env.step(action).unwrap();
        let info = &out.info;
        let (prev, cur) = (info.prev_portfolio, info.portfolio);
        audit.steps += 1;
        pnl_sum += info.reward.pnl;

        let d_cash: i64 = info.fills.iter().map(|f| f.cash()).sum();
        let d_shares: i64 = info.fills.iter().map(|f| f.shares()).sum();
        if cur.cash - prev.cash != d_cash || cur.inventory - prev.inventory != d_shares {
            audit.fill_mismatches += 1;
        }
        // M_t - M_{t-1} = dC + X_{t-1} dp + dX p_t, in doubled units
        let lhs = cur.value2() - prev.value2();
        let rhs = 2 * (cur.cash - prev.cash) as i128
            + prev.inventory as i128 * (cur.mark2 - prev.mark2) as i128
            + (cur.inventory - prev.inventory) as i128 * cur.mark2 as i128;
        audit.delta_m_error = audit.delta_m_error.max((lhs - rhs).abs() as f64 / 2.0);

        let forced_shares = info
            .forced
            .as_ref()
            .map_or(0, |f| f.side.sign() * f.filled as i64);
        let before_enforcement = cur.inventory - forced_shares;
        let breached = before_enforcement > cfg.pos_max || before_enforcement < cfg.pos_min;
        audit.breaches += breached as u64;
        match &info.forced {
            Some(f) => {
                audit.forced_orders += 1;
                let opposing = if before_enforcement > cfg.pos_max {
                    lobrl::book::Side::Sell
                } else {
                    lobrl::book::Side::Buy
                };
                let excess = (before_enforcement
                    - before_enforcement.clamp(cfg.pos_min, cfg.pos_max))
                .unsigned_abs();
                if !breached
                    || f.side != opposing
                    || f.size != excess
                    || f.breach_inventory != before_enforcement
                {
                    audit.bad_forced += 1;
                }
            }
            None if breached => audit.bad_forced += 1,
            None => {}
        }
        if cur.inventory > cfg.pos_max || cur.inventory < cfg.pos_min {
            audit.out_of_bounds += 1;
        }
        if out.done {
            break;
        }
    }
    let mt = env.portfolio().unwrap().value();
    audit.pnl_sum_error = audit.pnl_sum_error.max((pnl_sum - (mt / m0).ln()).abs());
}

/// Relative L2 error between the analytic Huber-loss gradient of a tiny
/// network and central finite differences.
pub fn gradient_relative_error(agg: lobrl::rl::network::Aggregation, seed: u64) -> f64 {
    use lobrl::rl::network::{huber_loss, huber_loss_and_grad, NetworkShape, QNetwork};
    use ndarray::Array2;

    let mut rng = seeded(seed);
    let net = QNetwork::new(
        NetworkShape {
            inputs: 6,
            hidden: vec![7, 5, 4],
            actions: 7,
        },
        agg,
        seed,
    );
    let x = Array2::from_shape_simple_fn((8, 6), || rng.random_range(-1.0..1.0));
    let actions: Vec<usize> = (0..8).map(|_| rng.random_range(0..7)).collect();
    // mixes the quadratic and linear parts of the Huber loss
    let targets: Vec<f64> = (0..8)
        .map(|i| {
            if i % 2 == 0 {
                rng.random_range(-0.3..0.3)
            } else {
                rng.random_range(-4.0..4.0)
            }
        })
        .collect();
    let (_, grads) = huber_loss_and_grad(&net, x.clone(), &actions, &targets);
    let analytic = grads.flatten();

    let h = 1e-6;
    let theta = net.flatten();
    let mut probe = net.clone();
    let numeric: Vec<f64> = (0..theta.len())
        .map(|i| {
            let mut p = theta.clone();
            p[i] += h;
            probe.set_flat(&p);
            let up = huber_loss(&probe, x.clone(), &actions, &targets);
            p[i] -= 2.0 * h;
            probe.set_flat(&p);
            let down = huber_loss(&probe, x.clone(), &actions, &targets);
            (up - down) / (2.0 * h)
        })
        .collect();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / (norm(&analytic) + norm(&numeric))
}

pub fn chain_config(seed: u64) -> lobrl::rl::TrainerConfig {
    lobrl::rl::TrainerConfig {
        gamma: 0.9,
        n_step: 1,
        lr_schedule: vec![(0.0, 1e-3), (2e4, 2e-4)],
        train_batch: 50,
        rollout_fragment: 10,
        target_update: 250,
        learning_starts: 500,
        buffer_capacity: 20_000,
        workers: 2,
        total_timesteps: u64::MAX / 2,
        max_learner_steps: Some(20_000),
        epsilon_base: 1.0,
        epsilon_alpha: 1.0,
        hidden: vec![32, 32, 32],
        replay_ratio: 8.0,
        publish_every: 50,
        log_every: 1_000,
        seed,
        ..lobrl::rl::TrainerConfig::default()
    }
}

#[derive(Debug)]
pub struct ChainResult {
    pub learner_steps: u64,
    pub greedy_matches: bool,
    /// Max-norm Q error over the max-norm of the optimal Q.
    pub relative_error: f64,
}

/// Trains on the five-state chain and compares with value iteration.
pub fn train_chain(seed: u64) -> ChainResult {
    use lobrl::rl::chain::ChainMdp;
    use lobrl::rl::{train, TrainOptions};

    let cfg = chain_config(seed);
    let outcome = train(
        &cfg,
        |i| Ok(ChainMdp::new(5, 100 + i as u64)),
        0.0,
        1.0,
        &TrainOptions::default(),
    )
    .unwrap();
    assert!(outcome.aborted.is_none(), "{:?}", outcome.aborted);
    let mdp = ChainMdp::new(5, 0);
    let q_star = mdp.optimal_q(cfg.gamma);
    let scale = q_star.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let net = &outcome.checkpoint.network;
    let mut worst = 0.0f64;
    let mut greedy_matches = true;
    for (s, row) in q_star.iter().enumerate() {
        let q = net.q_values(&mdp.one_hot(s)).unwrap();
        greedy_matches &= (q[1] > q[0]) == (row[1] > row[0]);
        for a in 0..2 {
            worst = worst.max((q[a] - row[a]).abs());
        }
    }
    ChainResult {
        learner_steps: outcome.checkpoint.learner_steps,
        greedy_matches,
        relative_error: worst / scale,
    }
}
