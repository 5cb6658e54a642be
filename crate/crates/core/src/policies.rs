//! Benchmark strategies over the same seven-action space as the agent.

use crate::book::{OrderId, Price, Side};
use crate::env::{AgentAction, Observation, StepInfo};
use crate::replay::QuoteLevel;
use crate::signal::Direction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// What a policy wants done before the next step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub action: AgentAction,
    /// Agent orders to cancel before the action is applied.
    pub cancel: Vec<OrderId>,
}

impl From<AgentAction> for Decision {
    fn from(action: AgentAction) -> Self {
        Decision {
            action,
            cancel: Vec::new(),
        }
    }
}

pub trait Policy {
    fn name(&self) -> &str;

    fn reset(&mut self) {}

    fn act(&mut self, obs: &Observation) -> Decision;

    /// Called with the outcome of every step.
    fn observe(&mut self, _info: &StepInfo) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReductionOrder {
    pub id: OrderId,
    pub side: Side,
    pub price: Price,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BaselineState {
    pub last_class: Option<Direction>,
    pub reduction: Option<ReductionOrder>,
    /// Side of a reduction order submitted but not yet acknowledged.
    pending: Option<Side>,
}

/// Crosses the spread in the signal direction; on a neutral signal works
/// the position down with one passive order at the near touch.
#[derive(Debug, Clone)]
pub struct BaselinePolicy {
    pos_min: i64,
    pos_max: i64,
    state: BaselineState,
}

impl BaselinePolicy {
    pub fn new(pos_min: i64, pos_max: i64) -> Self {
        BaselinePolicy {
            pos_min,
            pos_max,
            state: BaselineState::default(),
        }
    }

    pub fn state(&self) -> &BaselineState {
        &self.state
    }

    fn drop_reduction(&mut self, cancel: &mut Vec<OrderId>) {
        if let Some(r) = self.state.reduction.take() {
            cancel.push(r.id);
        }
    }

    pub fn baseline_act(&mut self, obs: &Observation) -> Decision {
        let class = Direction::argmax(&obs.signal());
        self.state.last_class = Some(class);
        self.state.pending = None;
        let x = obs.inventory();
        let mut cancel = Vec::new();
        let action = match class {
            Direction::Up => {
                self.drop_reduction(&mut cancel);
                if x < self.pos_max {
                    AgentAction::buy(QuoteLevel::Ask)
                } else {
                    AgentAction::Skip
                }
            }
            Direction::Down => {
                self.drop_reduction(&mut cancel);
                if x > self.pos_min {
                    AgentAction::sell(QuoteLevel::Bid)
                } else {
                    AgentAction::Skip
                }
            }
            Direction::Stable if x == 0 => {
                self.drop_reduction(&mut cancel);
                AgentAction::Skip
            }
            Direction::Stable => {
                let (side, touch, level) = if x > 0 {
                    (Side::Sell, obs.best_ask(), QuoteLevel::Ask)
                } else {
                    (Side::Buy, obs.best_bid(), QuoteLevel::Bid)
                };
                match self.state.reduction {
                    Some(r) if r.side == side && r.price == touch => AgentAction::Skip,
                    _ => {
                        self.drop_reduction(&mut cancel);
                        self.state.pending = Some(side);
                        AgentAction::Order { side, level }
                    }
                }
            }
        };
        Decision { action, cancel }
    }
}

impl Policy for BaselinePolicy {
    fn name(&self) -> &str {
        "baseline"
    }

    fn reset(&mut self) {
        self.state = BaselineState::default();
    }

    fn act(&mut self, obs: &Observation) -> Decision {
        self.baseline_act(obs)
    }

    fn observe(&mut self, info: &StepInfo) {
        if let (Some(side), Some((id, price))) = (self.state.pending.take(), info.placed) {
            self.state.reduction = Some(ReductionOrder { id, side, price });
        }
        if let Some(r) = self.state.reduction {
            let filled = info.fills.iter().any(|f| f.order_id == r.id);
            let cancelled = info
                .forced
                .as_ref()
                .is_some_and(|f| f.cancelled.contains(&r.id));
            if filled || cancelled {
                self.state.reduction = None;
            }
        }
    }
}

/// Uniform over the seven actions.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn random_act(&mut self) -> AgentAction {
        AgentAction::from_index(self.rng.random_range(0..AgentAction::COUNT))
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn act(&mut self, _obs: &Observation) -> Decision {
        self.random_act().into()
    }
}

/// Always skips.
#[derive(Debug, Clone, Default)]
pub struct IdlePolicy;

impl Policy for IdlePolicy {
    fn name(&self) -> &str {
        "idle"
    }

    fn act(&mut self, _obs: &Observation) -> Decision {
        AgentAction::Skip.into()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BuyHoldError {
    #[error("empty episode")]
    Empty,
    #[error("no ask at the open")]
    NoOpeningAsk,
    #[error("mid undefined at the open")]
    NoOpeningMid,
}

/// Log value curve `ln(M_t / M_0)` of buying `shares` at the opening ask and
/// marking to the mid at every grid point (undefined mids carry forward).
pub fn buy_and_hold_curve(
    opening_ask: Option<Price>,
    mids2: &[Option<i64>],
    shares: i64,
    initial_cash: i64,
) -> Result<Vec<f64>, BuyHoldError> {
    if mids2.is_empty() {
        return Err(BuyHoldError::Empty);
    }
    let ask = opening_ask.ok_or(BuyHoldError::NoOpeningAsk)?;
    let mut mark = mids2[0].ok_or(BuyHoldError::NoOpeningMid)?;
    let cash2 = 2 * (initial_cash as i128 - shares as i128 * ask.0 as i128);
    let m0 = 2 * initial_cash as i128;
    Ok(mids2
        .iter()
        .map(|m| {
            if let Some(m) = m {
                mark = *m;
            }
            let v = cash2 + shares as i128 * mark as i128;
            ((v - m0) as f64 / m0 as f64).ln_1p()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ObsScale, FEATURES};

    fn obs(d: [f64; 3], x: i64) -> Observation {
        let mut row = [0.0; FEATURES];
        row[2] = x as f64;
        row[3..6].copy_from_slice(&d);
        row[6] = 10_100.0;
        row[9] = 10_000.0;
        Observation {
            rows: vec![row],
            scale: ObsScale {
                open_mid: 10_050.0,
                tick: 100.0,
                initial_cash: 1e9,
                pos_max: 10.0,
                episode_seconds: 60.0,
            },
        }
    }

    #[test]
    fn baseline_rules() {
        let mut p = BaselinePolicy::new(-10, 10);
        assert_eq!(
            p.baseline_act(&obs([0.1, 0.2, 0.7], 0)).action,
            AgentAction::buy(QuoteLevel::Ask)
        );
        assert_eq!(
            p.baseline_act(&obs([0.2, 0.6, 0.2], 3)).action,
            AgentAction::sell(QuoteLevel::Ask)
        );
        assert_eq!(
            p.baseline_act(&obs([0.2, 0.6, 0.2], 0)).action,
            AgentAction::Skip
        );
        assert_eq!(
            p.baseline_act(&obs([0.2, 0.6, 0.2], -2)).action,
            AgentAction::buy(QuoteLevel::Bid)
        );
        assert_eq!(
            p.baseline_act(&obs([0.7, 0.2, 0.1], 0)).action,
            AgentAction::sell(QuoteLevel::Bid)
        );
        // bounds
        assert_eq!(
            p.baseline_act(&obs([0.1, 0.2, 0.7], 10)).action,
            AgentAction::Skip
        );
        assert_eq!(
            p.baseline_act(&obs([0.7, 0.2, 0.1], -10)).action,
            AgentAction::Skip
        );
    }

    #[test]
    fn one_reduction_order_and_cancel_on_flip() {
        let mut p = BaselinePolicy::new(-10, 10);
        let neutral = obs([0.2, 0.6, 0.2], 3);
        let d = p.baseline_act(&neutral);
        assert_eq!(d.action, AgentAction::sell(QuoteLevel::Ask));
        // acknowledge the resting order
        p.state.pending = Some(Side::Sell);
        p.state.reduction = None;
        let placed_id = 1 << 62;
        let info_reduction = ReductionOrder {
            id: placed_id,
            side: Side::Sell,
            price: Price(10_100),
        };
        p.state.reduction = Some(info_reduction);
        p.state.pending = None;
        // same touch: keep the live order
        assert_eq!(p.baseline_act(&neutral).action, AgentAction::Skip);
        // signal flips up: cancel it first
        let d = p.baseline_act(&obs([0.1, 0.2, 0.7], 3));
        assert_eq!(d.cancel, vec![placed_id]);
        assert_eq!(d.action, AgentAction::buy(QuoteLevel::Ask));
        assert!(p.state().reduction.is_none());
    }

    #[test]
    fn random_is_reproducible() {
        let a: Vec<_> = {
            let mut p = RandomPolicy::new(5);
            (0..100).map(|_| p.random_act()).collect()
        };
        let mut p = RandomPolicy::new(5);
        let b: Vec<_> = (0..100).map(|_| p.random_act()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn random_frequencies_pass_chi_square() {
        let mut p = RandomPolicy::new(11);
        let n = 100_000;
        let mut counts = [0usize; AgentAction::COUNT];
        for _ in 0..n {
            counts[p.random_act().index()] += 1;
        }
        let expected = n as f64 / 7.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 6 degrees of freedom, 99.9% quantile
        assert!(chi2 < 22.46, "chi2 = {chi2}");
    }

    #[test]
    fn buy_and_hold() {
        let flat =
            buy_and_hold_curve(Some(Price(10_000)), &[Some(20_000); 5], 10, 1_000_000).unwrap();
        assert!(flat.iter().all(|&v| v == 0.0));

        // buy 10 at 1.0000 (mid 1.0000), mid rises 1%
        let up = buy_and_hold_curve(
            Some(Price(10_000)),
            &[Some(20_000), None, Some(20_200)],
            10,
            1_000_000,
        )
        .unwrap();
        let expected = (1.0_f64 + 0.01 * (10.0 * 10_000.0 / 1_000_000.0)).ln();
        assert!((up[2] - expected).abs() < 1e-15);
        assert_eq!(up[1], 0.0);

        assert_eq!(
            buy_and_hold_curve(None, &[Some(1)], 10, 100),
            Err(BuyHoldError::NoOpeningAsk)
        );
        assert_eq!(
            buy_and_hold_curve(Some(Price(1)), &[], 10, 100),
            Err(BuyHoldError::Empty)
        );
    }
}
