//! Trains the duelling double Q-learner on a five-state chain and compares
//! its Q-values with value iteration.

use lobrl::rl::chain::ChainMdp;
use lobrl::rl::{train, TrainOptions, TrainerConfig};

fn main() {
    let cfg = TrainerConfig {
        gamma: 0.9,
        n_step: 1,
        lr_schedule: vec![(0.0, 1e-3), (2e4, 2e-4)],
        rollout_fragment: 10,
        target_update: 250,
        learning_starts: 500,
        buffer_capacity: 20_000,
        workers: 2,
        max_learner_steps: Some(10_000),
        epsilon_base: 1.0,
        epsilon_alpha: 1.0,
        hidden: vec![32, 32, 32],
        replay_ratio: 8.0,
        log_every: 2_000,
        ..TrainerConfig::default()
    };
    let outcome = train(
        &cfg,
        |i| Ok(ChainMdp::new(5, i as u64)),
        0.0,
        1.0,
        &TrainOptions::default(),
    )
    .unwrap();
    let mdp = ChainMdp::new(5, 0);
    let q_star = mdp.optimal_q(cfg.gamma);
    println!("state  learned (left, right)   optimal (left, right)");
    for (s, row) in q_star.iter().enumerate() {
        let q = outcome
            .checkpoint
            .network
            .q_values(&mdp.one_hot(s))
            .unwrap();
        println!(
            "{s:>5}  ({:>6.3}, {:>6.3})        ({:>6.3}, {:>6.3})",
            q[0], q[1], row[0], row[1]
        );
    }
    println!(
        "{} learner steps, {} env steps",
        outcome.checkpoint.learner_steps, outcome.env_steps
    );
}
