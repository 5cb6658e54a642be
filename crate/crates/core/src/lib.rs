//! Limit order book market replay and reinforcement learning for
//! single-share execution agents.
//!
//! The crate is organised bottom-up:
//!
//! - [`book`]: price-time priority matching engine.
//! - [`replay`]: LOBSTER message/orderbook files and agent order injection.
//! - [`synth`]: synthetic, self-consistent LOBSTER day generator.
//! - [`signal`]: noisy directional oracle signal on the 3-simplex.
//! - [`env`]: the trading MDP with inventory constraints.
//! - [`policies`]: baseline heuristic, buy-and-hold and random benchmarks.
//! - [`rl`]: duelling double Q-learning with an actor/learner trainer.
//! - [`eval`]: episode metrics, bootstrap intervals and significance tests.
//! - [`config`] and [`run`]: structured run configuration and the command
//!   implementations behind the `lobrl` binary.

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod book;
pub mod config;
pub mod env;
pub mod eval;
pub mod policies;
pub mod replay;
pub mod rl;
pub mod run;
pub mod signal;
pub mod synth;
