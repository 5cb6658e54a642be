//! Generates a LOBSTER message/orderbook pair and replays it row by row.

use lobrl::replay::lobster::Sentinels;
use lobrl::replay::{check_fidelity, DayData};
use lobrl::synth::{generate_day, FlowModel};

fn main() {
    let dir = std::env::temp_dir().join("lobrl-synthetic-example");
    std::fs::create_dir_all(&dir).unwrap();
    let (m, o) = (dir.join("message.csv"), dir.join("orderbook.csv"));
    let model = FlowModel {
        seed: 7,
        end_seconds: 34_200.0 + 600.0,
        ..FlowModel::default()
    };
    let summary = generate_day(&model, &m, &o).unwrap();
    println!(
        "{} messages: {} adds, {} partial cancels, {} deletes, {} executions, {} hidden",
        summary.messages,
        summary.adds,
        summary.partial_cancels,
        summary.deletes,
        summary.executions,
        summary.hidden
    );
    let report = check_fidelity(&DayData::load(&m, &o).unwrap(), &Sentinels::default());
    println!(
        "{} of {} orderbook rows reproduced, {} anomalies",
        report.matched, report.rows, report.anomalies
    );
    println!("files in {}", dir.display());
}
