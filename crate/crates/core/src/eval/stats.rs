//! Episodic return statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("confidence level must lie in (0, 1)")]
    Level,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpisodicMetrics {
    pub episodes: usize,
    pub mean: f64,
    pub std: f64,
    /// `mean / std`, undefined when the returns do not vary.
    pub sharpe: Option<f64>,
}

pub fn episodic_metrics(returns: &[f64]) -> Result<EpisodicMetrics, StatsError> {
    if returns.len() < 2 {
        return Err(StatsError::TooFew {
            need: 2,
            got: returns.len(),
        });
    }
    let m = mean(returns);
    let s = sample_std(returns);
    Ok(EpisodicMetrics {
        episodes: returns.len(),
        mean: m,
        std: s,
        sharpe: (s > 0.0).then(|| m / s),
    })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_ci(
    values: &[f64],
    level: f64,
    resamples: usize,
    seed: u64,
) -> Result<(f64, f64), StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFew {
            need: 2,
            got: values.len(),
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::Level);
    }
    let n = values.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples.max(1))
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok((
        quantile_sorted(&means, alpha),
        quantile_sorted(&means, 1.0 - alpha),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTest {
    pub n: usize,
    pub mean_diff: f64,
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
    /// The differences have zero variance.
    pub degenerate: bool,
}

/// Two-sided paired t-test of `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(StatsError::TooFew {
            need: 2,
            got: a.len(),
        });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let m = mean(&d);
    let s = sample_std(&d);
    let df = (n - 1) as f64;
    if s == 0.0 {
        let (t, p) = if m == 0.0 {
            (0.0, 1.0)
        } else {
            (m.signum() * f64::INFINITY, 0.0)
        };
        return Ok(TTest {
            n,
            mean_diff: m,
            t,
            df,
            p,
            degenerate: true,
        });
    }
    let t = m / (s / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest {
        n,
        mean_diff: m,
        t,
        df,
        p,
        degenerate: false,
    })
}
