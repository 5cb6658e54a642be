//! Oracle signal quality for several concentration levels on one session.

use lobrl::env::EnvConfig;
use lobrl::replay::DayData;
use lobrl::rl::market::PreparedDay;
use lobrl::signal::{mean_diagonal, SignalParams};
use lobrl::synth::{simulate_day, FlowModel};

fn main() {
    let env = EnvConfig {
        episode_seconds: 1800.0,
        ..EnvConfig::default()
    };
    let model = FlowModel {
        seed: 11,
        end_seconds: 34_200.0 + 1810.0,
        ..FlowModel::default()
    };
    let day = PreparedDay::new(
        "example",
        DayData::new(simulate_day(&model).unwrap().messages),
        &env,
    );
    for a in [1.1, 1.3, 1.6, 10.0] {
        let params = SignalParams {
            a_high: a,
            ..SignalParams::default()
        };
        let track = day.signal(&env, &params, 0).unwrap();
        let cm = track.confusion_matrix().unwrap();
        let shares = track.class_shares();
        println!(
            "a={a:<4} classes down/stable/up {:.2}/{:.2}/{:.2}  diagonal {:.3}  rows {:?}",
            shares[0],
            shares[1],
            shares[2],
            mean_diagonal(&cm),
            cm.map(|r| r.map(|v| (v * 100.0).round() / 100.0))
        );
    }
}
