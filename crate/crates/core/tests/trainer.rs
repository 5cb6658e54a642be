mod common;

use common::{gradient_relative_error, train_chain};
use lobrl::rl::buffer::Transition;
use lobrl::rl::network::{Aggregation, NetworkShape, QNetwork};
use lobrl::rl::td_target;
use ndarray::Array2;
use std::sync::Arc;
use std::time::Instant;

#[test]
fn analytic_gradient_matches_finite_differences() {
    for agg in [Aggregation::Mean, Aggregation::Max] {
        let err = gradient_relative_error(agg, 17);
        assert!(err < 1e-4, "{agg:?}: relative error {err}");
    }
}

/// One-hot network: the first trunk layer is the identity so each head can
/// be set by hand.
fn hand_network(q_rows: &[[f64; 2]]) -> QNetwork {
    let n = q_rows.len();
    let mut net = QNetwork::new(
        NetworkShape {
            inputs: n,
            hidden: vec![n, n, n],
            actions: 2,
        },
        Aggregation::Mean,
        0,
    );
    for layer in &mut net.trunk {
        layer.w = Array2::eye(n);
        layer.b.fill(0.0);
    }
    // value = mean of the row, advantage = row minus its mean
    for (s, row) in q_rows.iter().enumerate() {
        let mean = (row[0] + row[1]) / 2.0;
        net.value.w[[s, 0]] = mean;
        net.advantage.w[[s, 0]] = row[0] - mean;
        net.advantage.w[[s, 1]] = row[1] - mean;
    }
    net.value.b.fill(0.0);
    net.advantage.b.fill(0.0);
    net
}

fn one_hot(n: usize, s: usize) -> Arc<[f32]> {
    let mut v = vec![0.0; n];
    v[s] = 1.0;
    Arc::from(v)
}

#[test]
fn double_q_selects_with_main_and_values_with_target() {
    // main prefers action 0 in state 1, target prefers action 1
    let main = hand_network(&[[0.0, 0.0], [5.0, 1.0]]);
    let target = hand_network(&[[0.0, 0.0], [2.0, 9.0]]);
    assert_eq!(main.q_values(&one_hot(2, 1)).unwrap(), vec![5.0, 1.0]);
    let t = Transition {
        obs: one_hot(2, 0),
        action: 1,
        reward: 0.5,
        next_obs: one_hot(2, 1),
        done: false,
        discount: 0.9,
    };
    let y = td_target(&[&t], &main, &target).unwrap();
    assert!((y[0] - (0.5 + 0.9 * 2.0)).abs() < 1e-12);
    // with main = target this is the plain n-step Q-learning target
    let y = td_target(&[&t], &target, &target).unwrap();
    assert!((y[0] - (0.5 + 0.9 * 9.0)).abs() < 1e-12);
}

#[test]
fn two_state_bellman_backup() {
    // state 0 --a--> state 1 (reward 1), state 1 terminal with rewards (2, 3)
    let gamma: f64 = 0.9;
    let q = hand_network(&[[1.0 + gamma * 3.0, 0.0], [2.0, 3.0]]);
    let step = Transition {
        obs: one_hot(2, 0),
        action: 0,
        reward: 1.0,
        next_obs: one_hot(2, 1),
        done: false,
        discount: gamma,
    };
    let end = Transition {
        obs: one_hot(2, 1),
        action: 1,
        reward: 3.0,
        next_obs: one_hot(2, 1),
        done: true,
        discount: gamma,
    };
    let y = td_target(&[&step, &end], &q, &q).unwrap();
    assert!((y[0] - (1.0 + gamma * 3.0)).abs() < 1e-12);
    assert_eq!(y[1], 3.0);
}

#[test]
fn chain_mdp_matches_value_iteration() {
    let started = Instant::now();
    let r = train_chain(5);
    assert_eq!(r.learner_steps, 20_000);
    assert!(r.greedy_matches, "{r:?}");
    assert!(r.relative_error < 0.05, "{r:?}");
    assert!(started.elapsed().as_secs() < 300);
}
