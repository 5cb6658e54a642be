mod common;

use common::{audit_random_episode, env_for, prepared_day, Audit, TICK};
use lobrl::env::{compute_reward, AgentAction, EnvConfig, PortfolioState, TradingEnv};
use lobrl::replay::QuoteLevel;
use lobrl::rl::market::start_episode;
use lobrl::signal::SignalParams;
use proptest::prelude::*;

#[test]
fn random_episodes_keep_the_books() {
    let cfg = env_for(300.0, 10);
    let mut audit = Audit::default();
    for seed in 0..4 {
        audit_random_episode(&cfg, &prepared_day(seed, &cfg), seed, &mut audit);
    }
    assert_eq!(audit.steps, 4 * (cfg.decisions() as u64));
    assert!(audit.pnl_sum_error < 1e-9, "{audit:?}");
    assert!(audit.delta_m_error <= 1.0, "{audit:?}");
    assert_eq!(audit.fill_mismatches, 0);
    assert_eq!(audit.out_of_bounds, 0);
    assert_eq!(audit.bad_forced, 0);
    assert_eq!(audit.breaches, audit.forced_orders);
    assert!(
        audit.forced_orders > 0,
        "random play should breach at least once"
    );
}

#[test]
fn tight_bounds_force_more_orders() {
    let cfg = EnvConfig {
        pos_min: -1,
        pos_max: 1,
        ..env_for(120.0, 5)
    };
    let mut audit = Audit::default();
    audit_random_episode(&cfg, &prepared_day(7, &cfg), 7, &mut audit);
    assert_eq!((audit.out_of_bounds, audit.bad_forced), (0, 0));
    assert!(audit.forced_orders > 10);
}

#[test]
fn aggressive_buy_moves_cash_by_the_ask() {
    let cfg = env_for(60.0, 5);
    let day = prepared_day(3, &cfg);
    let mut env = TradingEnv::new(cfg.clone()).unwrap();
    let obs = start_episode(&mut env, &day, &SignalParams::default(), TICK, 0).unwrap();
    assert_eq!((obs.inventory(), obs.rows.len()), (0, cfg.history + 1));
    let ask = obs.best_ask();
    let out = env.step(AgentAction::buy(QuoteLevel::Ask)).unwrap();
    let p = out.info.portfolio;
    assert_eq!(p.inventory, 1);
    assert_eq!(p.cash, cfg.initial_cash - ask.0);
    assert_eq!(out.observation.inventory(), 1);
}

#[test]
fn disallowed_orders_are_no_ops() {
    let cfg = EnvConfig {
        pos_min: -1,
        pos_max: 1,
        ..env_for(60.0, 5)
    };
    let day = prepared_day(3, &cfg);
    let mut env = TradingEnv::new(cfg).unwrap();
    start_episode(&mut env, &day, &SignalParams::default(), TICK, 0).unwrap();
    assert_eq!(
        env.step(AgentAction::buy(QuoteLevel::Ask))
            .unwrap()
            .info
            .portfolio
            .inventory,
        1
    );
    let out = env.step(AgentAction::buy(QuoteLevel::Ask)).unwrap();
    assert!(out.info.disallowed && out.info.placed.is_none() && out.info.fills.is_empty());
}

proptest! {
    #[test]
    fn reward_blends_linearly(
        cash in 100_000_000i64..1_000_000_000,
        x0 in -10i64..=10, x1 in -10i64..=10,
        m0 in 900_000i64..1_100_000, m1 in 900_000i64..1_100_000,
        d in (0.0f64..1.0, 0.0f64..1.0),
        w in 0.0f64..1.0,
    ) {
        let prev = PortfolioState { cash, inventory: x0, mark2: 2 * m0 };
        let cur = PortfolioState { cash: cash + 5, inventory: x1, mark2: 2 * m1 };
        let dv = [d.0 * (1.0 - d.1), d.1, (1.0 - d.0) * (1.0 - d.1)];
        let r = compute_reward(&prev, &cur, &dv, x1, 0.1, w).unwrap();
        let oracle_pnl = (cur.value() / prev.value()).ln();
        prop_assert!((r.pnl - oracle_pnl).abs() < 1e-12);
        prop_assert!((r.dir - 0.1 * (dv[2] - dv[0]) * x1 as f64).abs() < 1e-12);
        prop_assert!((r.total - (w * r.dir + (1.0 - w) * r.pnl)).abs() < 1e-12);
    }
}
