//! Duelling double Q-learning with n-step returns, uniform replay and
//! asynchronous actors.

pub mod apex;
pub mod buffer;
pub mod chain;
pub mod learner;
pub mod market;
pub mod network;

pub use apex::{
    select_action, train, Actor, CurveRow, EnvStep, RlEnv, Snapshot, TrainOptions, TrainOutcome,
};
pub use buffer::{NStepBuilder, ReplayBuffer, Transition};
pub use learner::{
    epsilon_ladder, td_target, Checkpoint, Learner, LearnerStats, LrSchedule, TrainError,
    TrainerConfig,
};
pub use network::{Aggregation, NetError, NetworkShape, QNetwork};

use crate::env::Observation;
use crate::policies::{Decision, Policy};

/// Acts greedily on a trained network.
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    pub network: QNetwork,
}

impl GreedyPolicy {
    pub fn new(network: QNetwork) -> Self {
        GreedyPolicy { network }
    }
}

impl Policy for GreedyPolicy {
    fn name(&self) -> &str {
        "rl"
    }

    fn act(&mut self, obs: &Observation) -> Decision {
        let q = self
            .network
            .q_values(&obs.normalized())
            .expect("finite Q values");
        crate::env::AgentAction::from_index(network::argmax(&q)).into()
    }
}
