mod common;

use common::{env_for, prepared_day, seeded, TICK};
use lobrl::env::TradingEnv;
use lobrl::eval::stats::quantile_sorted;
use lobrl::eval::{
    action_stats, bootstrap_ci, compare, episodic_metrics, paired_t_test, run_buy_and_hold,
    run_episode, BootstrapSettings,
};
use lobrl::policies::{BaselinePolicy, Policy, RandomPolicy};
use lobrl::replay::ReplaySession;
use lobrl::signal::{Direction, SignalParams, SignalTrack};
use rand::Rng;

/// Two-sided p-value of Student's t with 4 degrees of freedom, closed form.
fn p_two_sided_df4(t: f64) -> f64 {
    let x = t.abs() / (4.0 + t * t).sqrt();
    2.0 * (0.5 - 0.75 * x * (1.0 - x * x / 3.0))
}

/// Same for 2 degrees of freedom.
fn p_two_sided_df2(t: f64) -> f64 {
    1.0 - t.abs() / (2.0 + t * t).sqrt()
}

#[test]
fn paired_t_test_matches_hand_computation() {
    // differences 1..5: mean 3, sd sqrt(2.5), t = 3 sqrt 2
    let a = [3.0, 5.0, 7.0, 9.0, 11.0];
    let b = [2.0, 3.0, 4.0, 5.0, 6.0];
    let t = paired_t_test(&a, &b).unwrap();
    assert_eq!((t.n, t.df, t.mean_diff), (5, 4.0, 3.0));
    assert!((t.t - 3.0 * 2f64.sqrt()).abs() < 1e-12);
    assert!(
        (t.p - p_two_sided_df4(t.t)).abs() < 1e-10,
        "{} vs {}",
        t.p,
        p_two_sided_df4(t.t)
    );
    let r = paired_t_test(&b, &a).unwrap();
    assert_eq!((r.t, r.p), (-t.t, t.p));

    // differences 1, 2, 6: mean 3, sd sqrt 7
    let t = paired_t_test(&[1.0, 2.0, 6.0], &[0.0, 0.0, 0.0]).unwrap();
    let expected = 3.0 / (7f64.sqrt() / 3f64.sqrt());
    assert!((t.t - expected).abs() < 1e-12);
    assert!((t.p - p_two_sided_df2(expected)).abs() < 1e-10);
}

#[test]
fn quantiles_interpolate_linearly() {
    let v = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(quantile_sorted(&v, 0.0), 1.0);
    assert_eq!(quantile_sorted(&v, 0.25), 1.75);
    assert_eq!(quantile_sorted(&v, 0.5), 2.5);
    assert_eq!(quantile_sorted(&v, 1.0), 4.0);
    assert_eq!(quantile_sorted(&[10.0, 20.0, 40.0], 0.75), 30.0);
}

#[test]
fn bootstrap_of_two_points_spans_them() {
    // resampled means are 0, 1/2 or 1 with chances 1/4, 1/2, 1/4
    assert_eq!(
        bootstrap_ci(&[0.0, 1.0], 0.95, 10_000, 5).unwrap(),
        (0.0, 1.0)
    );
    assert_eq!(
        bootstrap_ci(&[0.0, 1.0], 0.4, 10_000, 5).unwrap(),
        (0.5, 0.5)
    );
    assert_eq!(bootstrap_ci(&[2.5; 7], 0.9, 1_000, 1).unwrap(), (2.5, 2.5));
}

#[test]
fn bootstrap_width_follows_the_clt() {
    let mut rng = seeded(8);
    let x: Vec<f64> = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (lo, hi) = bootstrap_ci(&x, 0.95, 20_000, 3).unwrap();
    let m = episodic_metrics(&x).unwrap();
    let clt = 2.0 * 1.959_964 * m.std / 20.0;
    assert!(lo < m.mean && m.mean < hi);
    assert!(
        ((hi - lo) / clt - 1.0).abs() < 0.1,
        "width {} vs {clt}",
        hi - lo
    );
}

#[test]
fn sharpe_is_mean_over_sample_std() {
    let m = episodic_metrics(&[0.01, 0.03]).unwrap();
    assert!((m.mean - 0.02).abs() < 1e-15);
    assert!((m.std - 0.02f64.sqrt() / 10.0).abs() < 1e-15);
    assert!((m.sharpe.unwrap() - 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn random_policy_spreads_actions_evenly() {
    let cfg = env_for(600.0, 5);
    let day = prepared_day(1, &cfg);
    let mut policy = RandomPolicy::new(4);
    let r = run_episode(&cfg, &day, &SignalParams::default(), TICK, 0, &mut policy).unwrap();
    let s = action_stats(&[r]);
    assert_eq!(s.decisions, cfg.decisions() as u64);
    assert!((s.skipped - 100.0 / 7.0).abs() < 1.5, "{s:?}");
    for share in s
        .sell_levels
        .unwrap()
        .into_iter()
        .chain(s.buy_levels.unwrap())
    {
        assert!((share - 100.0 / 3.0).abs() < 3.0, "{s:?}");
    }
}

#[test]
fn curves_end_at_the_episode_return() {
    let cfg = env_for(300.0, 5);
    let day = prepared_day(2, &cfg);
    let mut policy = BaselinePolicy::new(cfg.pos_min, cfg.pos_max);
    let r = run_episode(
        &cfg,
        &day,
        &SignalParams {
            a_high: 10.0,
            ..SignalParams::default()
        },
        TICK,
        0,
        &mut policy,
    )
    .unwrap();
    assert_eq!(r.curve.len(), cfg.decisions() + 1);
    assert_eq!(r.curve[0].log_value, 0.0);
    assert_eq!(r.curve.last().unwrap().log_value, r.log_return);
    assert!(r.curve.windows(2).all(|w| w[1].time > w[0].time));
}

#[test]
fn buy_and_hold_marks_ten_shares_to_the_last_mid() {
    let cfg = env_for(300.0, 5);
    let day = prepared_day(3, &cfg);
    let r = run_buy_and_hold(&cfg, &day, TICK).unwrap();
    let mut session = ReplaySession::with_tick(day.data.clone(), TICK);
    session.advance_until(cfg.grid_time(cfg.history)).unwrap();
    let ask = session.book().best_ask().unwrap().price.0 as f64;
    let last_mid = *day.grid.last().unwrap().as_ref().unwrap() as f64 / 2.0;
    let c0 = cfg.initial_cash as f64;
    let expected = ((c0 - 10.0 * ask + 10.0 * last_mid) / c0).ln();
    assert!((r.log_return - expected).abs() < 1e-12);
    assert_eq!(r.turnover, 10);
}

/// Plays the baseline against a hand-made signal track.
fn baseline_turnover(scores: impl Fn(usize) -> [f64; 3]) -> u64 {
    let cfg = env_for(300.0, 5);
    let day = prepared_day(6, &cfg);
    let n = cfg.total_steps() + 1;
    let track = SignalTrack {
        scores: (0..n).map(&scores).collect(),
        realized: vec![Some(Direction::Stable); n],
    };
    let mut env = TradingEnv::new(cfg.clone()).unwrap();
    let mut obs = env
        .reset(ReplaySession::with_tick(day.data.clone(), TICK), track)
        .unwrap();
    let mut policy = BaselinePolicy::new(cfg.pos_min, cfg.pos_max);
    let mut shares = 0;
    loop {
        let decision = policy.act(&obs);
        for id in &decision.cancel {
            let _ = env.cancel_agent_order(*id);
        }
        let out = env.step(decision.action).unwrap();
        policy.observe(&out.info);
        shares += out.info.fills.iter().map(|f| f.size).sum::<u64>();
        obs = out.observation;
        if out.done {
            return shares;
        }
    }
}

#[test]
fn flipping_signal_trades_more_than_a_constant_one() {
    let up = [0.1, 0.1, 0.8];
    let down = [0.8, 0.1, 0.1];
    let constant = baseline_turnover(|_| up);
    assert_eq!(constant, 10);
    let flipping = baseline_turnover(|i| if (i / 200) % 2 == 0 { up } else { down });
    // fifteen flips of twenty shares each
    assert!(flipping >= 200, "{flipping}");
}

#[test]
fn comparison_pairs_episodes() {
    let cfg = env_for(300.0, 5);
    let days: Vec<_> = (10..13).map(|s| prepared_day(s, &cfg)).collect();
    let params = SignalParams {
        a_high: 10.0,
        ..SignalParams::default()
    };
    let mut results = Vec::new();
    for day in &days {
        results.push(
            run_episode(
                &cfg,
                day,
                &params,
                TICK,
                0,
                &mut BaselinePolicy::new(-10, 10),
            )
            .unwrap(),
        );
        results.push(run_episode(&cfg, day, &params, TICK, 0, &mut RandomPolicy::new(1)).unwrap());
    }
    let c = compare(&results, "baseline", "random", BootstrapSettings::default()).unwrap();
    let diffs: Vec<f64> = results
        .chunks(2)
        .map(|p| p[0].log_return - p[1].log_return)
        .collect();
    let direct = paired_t_test(&diffs, &[0.0; 3]).unwrap();
    assert_eq!(c.test.n, 3);
    assert!((c.test.t - direct.t).abs() < 1e-9 * direct.t.abs());
}
