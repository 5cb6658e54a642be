use serde::{Deserialize, Serialize};
use std::fmt;

/// Order identifier. Historical ids come straight from the message file,
/// agent ids live above [`AGENT_ID_BASE`].
pub type OrderId = u64;

/// Nanoseconds since midnight.
pub type Timestamp = u64;

/// First id of the agent namespace; historical ids must stay below it.
pub const AGENT_ID_BASE: OrderId = 1 << 62;

/// Taker id recorded for executions replayed directly from a message file,
/// where the aggressor is not identified.
pub const UNKNOWN_TAKER: OrderId = 0;

pub const NANOS_PER_SECOND: u64 = 1_000_000_000;

/// A price in units of 1e-4 dollars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Price(pub i64);

impl Price {
    /// One cent.
    pub const CENT: i64 = 100;

    pub fn ticks(self, tick: i64) -> i64 {
        self.0 / tick
    }

    pub fn dollars(self) -> f64 {
        self.0 as f64 / 1e4
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.dollars())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }

    /// +1 for buys, -1 for sells.
    pub fn sign(self) -> i64 {
        match self {
            Side::Buy => 1,
            Side::Sell => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Owner {
    Historical,
    Agent,
}

impl Owner {
    pub fn of(id: OrderId) -> Owner {
        if id >= AGENT_ID_BASE {
            Owner::Agent
        } else {
            Owner::Historical
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub id: OrderId,
    pub side: Side,
    pub price: Price,
    pub size: u64,
    /// Assigned by the book on acceptance; ignored on submission.
    pub entry_seq: u64,
    pub owner: Owner,
}

impl Order {
    pub fn new(id: OrderId, side: Side, price: Price, size: u64) -> Self {
        Order {
            id,
            side,
            price,
            size,
            entry_seq: 0,
            owner: Owner::of(id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Execution {
    pub maker_id: OrderId,
    pub taker_id: OrderId,
    /// Always the resting order's limit price.
    pub price: Price,
    pub size: u64,
    pub aggressor_side: Side,
    pub timestamp: Timestamp,
}

impl Execution {
    pub fn maker_side(&self) -> Side {
        self.aggressor_side.opposite()
    }
}
