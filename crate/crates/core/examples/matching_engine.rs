//! Price-time priority matching on a hand-built book.

use lobrl::book::{Order, OrderBook, Price, Side};

fn main() {
    let mut book = OrderBook::new(Price::CENT);
    let px = |d: f64| Price((d * 10_000.0).round() as i64);
    for (id, side, price, size) in [
        (1, Side::Sell, 100.02, 300),
        (2, Side::Sell, 100.01, 200),
        (3, Side::Sell, 100.01, 100),
        (4, Side::Buy, 99.99, 500),
        (5, Side::Buy, 99.98, 400),
    ] {
        book.submit_limit(Order::new(id, side, px(price), size), 0)
            .unwrap();
    }
    println!(
        "mid before: {:.4}",
        book.snapshot(1).mid().unwrap() / 10_000.0
    );

    // sweeps order 2, then order 3 at the same price, then part of order 1
    let out = book.submit_market(6, Side::Buy, 450, 1).unwrap();
    for e in &out.executions {
        println!("maker {} filled {} @ {}", e.maker_id, e.size, e.price);
    }

    book.cancel(4, 200).unwrap();
    let snap = book.snapshot(3);
    println!(
        "asks: {:?}",
        snap.asks
            .iter()
            .map(|l| (l.price.to_string(), l.size))
            .collect::<Vec<_>>()
    );
    println!(
        "bids: {:?}",
        snap.bids
            .iter()
            .map(|l| (l.price.to_string(), l.size))
            .collect::<Vec<_>>()
    );
}
