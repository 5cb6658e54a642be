mod common;

use common::{env_for, prepared_day, seeded};
use lobrl::signal::{
    concentration, mean_diagonal, sample_dirichlet, Direction, OracleSignal, SignalParams,
};

#[test]
fn dirichlet_means_within_three_sigma() {
    let mut rng = seeded(11);
    let n = 20_000;
    for a in [1.1, 1.3, 1.6, 10.0] {
        for class in [Direction::Down, Direction::Stable, Direction::Up] {
            let alpha = concentration(class, a, 1.0);
            let a0: f64 = alpha.iter().sum();
            let mut sums = [0.0; 3];
            for _ in 0..n {
                let x = sample_dirichlet(&alpha, &mut rng);
                assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for i in 0..3 {
                    sums[i] += x[i];
                }
            }
            for i in 0..3 {
                let m = alpha[i] / a0;
                let sd = (m * (1.0 - m) / (a0 + 1.0) / n as f64).sqrt();
                let got = sums[i] / n as f64;
                assert!(
                    (got - m).abs() < 3.0 * sd,
                    "a={a} {class:?} component {i}: {got} vs {m}"
                );
            }
        }
    }
}

fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let var: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
    let cov: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    cov / var
}

#[test]
fn smoothed_scores_have_lag_one_autocorrelation_phi() {
    for phi in [0.5, 0.9] {
        let params = SignalParams {
            phi,
            a_high: 1.6,
            seed: 3,
            ..SignalParams::default()
        };
        let mut signal = OracleSignal::new(params).unwrap();
        // a constant realized return keeps the Dirichlet draws iid
        let d: Vec<f64> = (0..100_000)
            .map(|_| signal.step(Some(1.0)).d[2])
            .skip(100)
            .collect();
        let rho = lag1_autocorrelation(&d);
        assert!((rho - phi).abs() < 0.05, "phi {phi}: rho {rho}");
    }
}

#[test]
fn confusion_diagonal_grows_with_concentration() {
    let env = env_for(1800.0, 10);
    let day = prepared_day(21, &env);
    let diag: Vec<f64> = [1.1, 1.3, 1.6]
        .iter()
        .map(|&a| {
            let params = SignalParams {
                a_high: a,
                ..SignalParams::default()
            };
            mean_diagonal(
                &day.signal(&env, &params, 0)
                    .unwrap()
                    .confusion_matrix()
                    .unwrap(),
            )
        })
        .collect();
    assert!(diag[0] < diag[1] && diag[1] < diag[2], "{diag:?}");
}

#[test]
fn scores_stay_on_the_simplex() {
    let env = env_for(300.0, 10);
    let day = prepared_day(2, &env);
    let track = day.signal(&env, &SignalParams::default(), 4).unwrap();
    assert_eq!(track.len(), env.total_steps() + 1);
    for d in &track.scores {
        assert!(d.iter().all(|&x| x >= 0.0) && (d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
