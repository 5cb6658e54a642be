//! Noisy directional oracle signal.
//!
//! The realized smoothed forward return of the mid-quote picks a Dirichlet
//! concentration vector that favours the true class; the signal is an
//! exponentially smoothed stream of draws from it, so it always lives on
//! the probability simplex over (down, stable, up).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("invalid signal parameters: {0}")]
    Params(String),
    #[error("empty signal stream")]
    Empty,
    #[error("predicted and realized streams differ in length ({0} vs {1})")]
    Misaligned(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalParams {
    /// Forecast horizon in seconds.
    pub horizon_seconds: usize,
    /// Persistence of the smoothing.
    pub phi: f64,
    /// Return threshold separating stable from directional moves.
    pub k: f64,
    /// Concentration on the realized class.
    pub a_high: f64,
    /// Concentration on the other two classes.
    pub a_low: f64,
    pub seed: u64,
}

impl Default for SignalParams {
    fn default() -> Self {
        SignalParams {
            horizon_seconds: 10,
            phi: 0.9,
            k: 4e-5,
            a_high: 1.6,
            a_low: 1.0,
            seed: 0,
        }
    }
}

impl SignalParams {
    pub fn validate(&self) -> Result<(), SignalError> {
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return Err(SignalError::Params(format!(
                "phi must be in (0, 1), got {}",
                self.phi
            )));
        }
        if !(self.a_low > 0.0 && self.a_high >= self.a_low) {
            return Err(SignalError::Params("need a_high >= a_low > 0".into()));
        }
        if !(self.k > 0.0) || self.horizon_seconds == 0 {
            return Err(SignalError::Params(
                "k and the horizon must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Down,
    Stable,
    Up,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::Down, Direction::Stable, Direction::Up];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Class with the highest score; ties resolve to the lower index.
    pub fn argmax(d: &[f64; 3]) -> Direction {
        let mut best = 0;
        for i in 1..3 {
            if d[i] > d[best] {
                best = i;
            }
        }
        Direction::ALL[best]
    }
}

/// `(mean(future) - current) / current`; `None` when there are no future
/// samples or any sample is undefined.
pub fn smoothed_forward_return(current: Option<f64>, future: &[Option<f64>]) -> Option<f64> {
    let p = current?;
    if future.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for f in future {
        sum += (*f)?;
    }
    let mean = sum / future.len() as f64;
    Some((mean - p) / p)
}

pub fn classify(r: f64, k: f64) -> Direction {
    if r < -k {
        Direction::Down
    } else if r < k {
        Direction::Stable
    } else {
        Direction::Up
    }
}

pub fn concentration(class: Direction, a_high: f64, a_low: f64) -> [f64; 3] {
    let mut a = [a_low; 3];
    a[class.index()] = a_high;
    a
}

/// Dirichlet draw from normalized independent Gamma(alpha_i, 1) variates.
pub fn sample_dirichlet<R: rand::Rng + ?Sized>(alpha: &[f64; 3], rng: &mut R) -> [f64; 3] {
    let mut g = [0.0; 3];
    loop {
        for (gi, &a) in g.iter_mut().zip(alpha) {
            *gi = Gamma::new(a, 1.0)
                .expect("positive concentration")
                .sample(rng);
        }
        let s: f64 = g.iter().sum();
        if s > 0.0 {
            return g.map(|x| x / s);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalState {
    /// Scores for (down, stable, up).
    pub d: [f64; 3],
}

impl Default for SignalState {
    fn default() -> Self {
        SignalState { d: [1.0 / 3.0; 3] }
    }
}

impl SignalState {
    pub fn is_on_simplex(&self, tol: f64) -> bool {
        self.d.iter().all(|&x| x >= 0.0) && (self.d.iter().sum::<f64>() - 1.0).abs() <= tol
    }

    /// Exponential smoothing toward `eps`.
    pub fn smooth(&self, eps: &[f64; 3], phi: f64) -> SignalState {
        let mut d = [0.0; 3];
        for i in 0..3 {
            d[i] = phi * self.d[i] + (1.0 - phi) * eps[i];
        }
        let s: f64 = d.iter().sum();
        SignalState {
            d: d.map(|x| x / s),
        }
    }

    /// Up score minus down score.
    pub fn tilt(&self) -> f64 {
        self.d[2] - self.d[0]
    }
}

/// Signal process with its own random stream.
#[derive(Debug, Clone)]
pub struct OracleSignal {
    params: SignalParams,
    state: SignalState,
    rng: ChaCha8Rng,
}

impl OracleSignal {
    pub fn new(params: SignalParams) -> Result<Self, SignalError> {
        params.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(params.seed);
        Ok(OracleSignal {
            params,
            state: SignalState::default(),
            rng,
        })
    }

    pub fn state(&self) -> SignalState {
        self.state
    }

    /// Advances one update; an undefined return holds the previous signal.
    pub fn step(&mut self, r: Option<f64>) -> SignalState {
        if let Some(r) = r {
            let class = classify(r, self.params.k);
            let alpha = concentration(class, self.params.a_high, self.params.a_low);
            let eps = sample_dirichlet(&alpha, &mut self.rng);
            self.state = self.state.smooth(&eps, self.params.phi);
        }
        self.state
    }
}

/// Precomputed signal for one session on the decision grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalTrack {
    pub scores: Vec<[f64; 3]>,
    /// Class of the realized smoothed forward return at each grid point.
    pub realized: Vec<Option<Direction>>,
}

impl SignalTrack {
    /// Builds the track from twice-scaled mids sampled every
    /// `1 / steps_per_second` seconds. The forecast at grid point `j` looks
    /// at the mids one, two, ... `h` seconds later, truncated at the end of
    /// the session.
    pub fn from_mid_grid(
        mid2: &[Option<i64>],
        steps_per_second: usize,
        params: &SignalParams,
    ) -> Result<SignalTrack, SignalError> {
        let mut signal = OracleSignal::new(params.clone())?;
        let mids: Vec<Option<f64>> = mid2.iter().map(|m| m.map(|v| v as f64 / 2.0)).collect();
        let mut scores = Vec::with_capacity(mids.len());
        let mut realized = Vec::with_capacity(mids.len());
        let mut future = Vec::with_capacity(params.horizon_seconds);
        for j in 0..mids.len() {
            future.clear();
            future.extend(
                (1..=params.horizon_seconds)
                    .map(|i| j + i * steps_per_second)
                    .take_while(|&idx| idx < mids.len())
                    .map(|idx| mids[idx]),
            );
            let r = smoothed_forward_return(mids[j], &future);
            realized.push(r.map(|r| classify(r, params.k)));
            scores.push(signal.step(r).d);
        }
        Ok(SignalTrack { scores, realized })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Share of defined points in each realized class.
    pub fn class_shares(&self) -> [f64; 3] {
        let mut counts = [0usize; 3];
        for c in self.realized.iter().flatten() {
            counts[c.index()] += 1;
        }
        let n: usize = counts.iter().sum();
        counts.map(|c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
    }

    /// Writes `time,d1,d2,d3,realized` with times in seconds.
    pub fn write_csv(
        &self,
        path: &Path,
        start_seconds: f64,
        step_seconds: f64,
    ) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "time,d1,d2,d3,realized")?;
        for (j, (d, c)) in self.scores.iter().zip(&self.realized).enumerate() {
            let class = c.map_or("", |c| match c {
                Direction::Down => "down",
                Direction::Stable => "stable",
                Direction::Up => "up",
            });
            writeln!(
                w,
                "{:.3},{:.9},{:.9},{:.9},{}",
                start_seconds + j as f64 * step_seconds,
                d[0],
                d[1],
                d[2],
                class
            )?;
        }
        w.flush()
    }

    /// Confusion matrix over the grid points with a defined realized class.
    pub fn confusion_matrix(&self) -> Result<[[f64; 3]; 3], SignalError> {
        let (pred, real): (Vec<[f64; 3]>, Vec<Direction>) = self
            .scores
            .iter()
            .zip(&self.realized)
            .filter_map(|(d, c)| c.map(|c| (*d, c)))
            .unzip();
        confusion_matrix(&pred, &real)
    }
}

/// Row-normalized 3x3 matrix; rows are realized classes, columns the
/// argmax prediction. Rows without observations are all zero.
pub fn confusion_matrix(
    predicted: &[[f64; 3]],
    realized: &[Direction],
) -> Result<[[f64; 3]; 3], SignalError> {
    if predicted.len() != realized.len() {
        return Err(SignalError::Misaligned(predicted.len(), realized.len()));
    }
    if predicted.is_empty() {
        return Err(SignalError::Empty);
    }
    let mut m = [[0.0; 3]; 3];
    for (d, c) in predicted.iter().zip(realized) {
        m[c.index()][Direction::argmax(d).index()] += 1.0;
    }
    for row in &mut m {
        let n: f64 = row.iter().sum();
        if n > 0.0 {
            row.iter_mut().for_each(|x| *x /= n);
        }
    }
    Ok(m)
}

/// Mean of the diagonal.
pub fn mean_diagonal(m: &[[f64; 3]; 3]) -> f64 {
    (m[0][0] + m[1][1] + m[2][2]) / 3.0
}
