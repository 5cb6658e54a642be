//! Replays a synthetic session while an agent rests a bid and later lifts
//! the ask.

use lobrl::book::{Side, NANOS_PER_SECOND};
use lobrl::replay::{DayData, QuoteLevel, ReplaySession};
use lobrl::synth::{simulate_day, FlowModel};

fn main() {
    let model = FlowModel {
        seed: 3,
        end_seconds: 34_200.0 + 300.0,
        ..FlowModel::default()
    };
    let day = DayData::new(simulate_day(&model).unwrap().messages);
    let mut session = ReplaySession::with_tick(day, model.tick);
    let open = model.start();

    session.advance_until(open + 5 * NANOS_PER_SECOND).unwrap();
    let bid = session
        .inject_agent_order(Side::Buy, QuoteLevel::Bid, 1)
        .unwrap();
    println!("agent bid {} rests at {}", bid.order_id, bid.price);

    let fills = session
        .advance_until(open + 120 * NANOS_PER_SECOND)
        .unwrap();
    match fills.first() {
        Some(f) => println!(
            "passive fill at {} after {:.1} s",
            f.price,
            (f.time - open) as f64 / 1e9
        ),
        None => {
            println!("bid still resting; cancelling");
            session.cancel_agent_order(bid.order_id).unwrap();
        }
    }

    let lift = session
        .inject_agent_order(Side::Buy, QuoteLevel::Ask, 1)
        .unwrap();
    println!(
        "aggressive buy filled {} share(s) at {}",
        lift.fills.len(),
        lift.price
    );
    println!("replay stats: {:?}", session.stats());
}
