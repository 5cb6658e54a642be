//! Baseline, random and buy-and-hold on one synthetic session.

use lobrl::env::EnvConfig;
use lobrl::eval::{action_stats, run_buy_and_hold, run_episode};
use lobrl::policies::{BaselinePolicy, RandomPolicy};
use lobrl::replay::DayData;
use lobrl::rl::market::PreparedDay;
use lobrl::signal::SignalParams;
use lobrl::synth::{simulate_day, FlowModel};

fn main() {
    let env = EnvConfig {
        episode_seconds: 900.0,
        ..EnvConfig::default()
    };
    let model = FlowModel {
        seed: 5,
        end_seconds: 34_200.0 + 905.0,
        ..FlowModel::default()
    };
    let day = PreparedDay::new(
        "example",
        DayData::new(simulate_day(&model).unwrap().messages),
        &env,
    );
    let signal = SignalParams {
        a_high: 10.0,
        ..SignalParams::default()
    };

    let baseline = run_episode(
        &env,
        &day,
        &signal,
        model.tick,
        0,
        &mut BaselinePolicy::new(env.pos_min, env.pos_max),
    )
    .unwrap();
    let random = run_episode(
        &env,
        &day,
        &signal,
        model.tick,
        0,
        &mut RandomPolicy::new(1),
    )
    .unwrap();
    let hold = run_buy_and_hold(&env, &day, model.tick).unwrap();
    for r in [&baseline, &random, &hold] {
        println!(
            "{:<13} log return {:+.3e}  turnover {:>6}  fills {:>6}  forced {:>4}",
            r.strategy, r.log_return, r.turnover, r.fills, r.forced_orders
        );
    }
    let s = action_stats(&[baseline]);
    println!("baseline skipped {:.1}% of decisions", s.skipped);
    if let Some([bid, mid, ask]) = s.sell_levels {
        println!("sells placed at bid/mid/ask: {bid:.1}% / {mid:.1}% / {ask:.1}%");
    }
}
