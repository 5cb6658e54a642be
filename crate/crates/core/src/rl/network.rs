//! Duelling Q-network: a ReLU trunk feeding separate value and advantage
//! heads, with hand-written backpropagation.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("non-finite activation in {0}")]
    NonFinite(&'static str),
    #[error("input has {got} features, network expects {expected}")]
    InputDim { got: usize, expected: usize },
}

/// How advantages are centred before being added to the state value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `inputs x outputs`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn init(inputs: usize, outputs: usize, gain: f64, rng: &mut impl Rng) -> Self {
        let bound = gain * (6.0 / inputs as f64).sqrt();
        let w = Array2::from_shape_simple_fn((inputs, outputs), || rng.random_range(-bound..bound));
        Dense {
            w,
            b: Array1::zeros(outputs),
        }
    }

    fn forward(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    pub fn zeros_like(&self) -> Dense {
        Dense {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    pub fn len(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub inputs: usize,
    pub hidden: Vec<usize>,
    pub actions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    pub shape: NetworkShape,
    pub aggregation: Aggregation,
    pub trunk: Vec<Dense>,
    pub value: Dense,
    pub advantage: Dense,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    /// Post-ReLU outputs of each trunk layer.
    hidden: Vec<Array2<f64>>,
    pub value: Array1<f64>,
    pub advantage: Array2<f64>,
    pub q: Array2<f64>,
}

/// Gradients laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.w.iter().chain(l.b.iter()).map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, f: f64) {
        for l in &mut self.layers {
            l.w *= f;
            l.b *= f;
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
            .collect()
    }
}

fn relu(mut a: Array2<f64>) -> Array2<f64> {
    a.mapv_inplace(|v| v.max(0.0));
    a
}

impl QNetwork {
    pub fn new(shape: NetworkShape, aggregation: Aggregation, seed: u64) -> Self {
        assert!(shape.inputs > 0 && shape.actions > 0, "empty network");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trunk = Vec::with_capacity(shape.hidden.len());
        let mut width = shape.inputs;
        for &h in &shape.hidden {
            trunk.push(Dense::init(width, h, 1.0, &mut rng));
            width = h;
        }
        let value = Dense::init(width, 1, 0.1, &mut rng);
        let advantage = Dense::init(width, shape.actions, 0.1, &mut rng);
        QNetwork {
            shape,
            aggregation,
            trunk,
            value,
            advantage,
        }
    }

    pub fn actions(&self) -> usize {
        self.shape.actions
    }

    pub fn inputs(&self) -> usize {
        self.shape.inputs
    }

    /// Layers in a fixed order: trunk, value head, advantage head.
    pub fn layers(&self) -> Vec<&Dense> {
        self.trunk
            .iter()
            .chain([&self.value, &self.advantage])
            .collect()
    }

    pub fn layers_mut(&mut self) -> Vec<&mut Dense> {
        self.trunk
            .iter_mut()
            .chain([&mut self.value, &mut self.advantage])
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().iter().map(|l| l.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers()
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.parameter_count());
        let mut it = values.iter();
        for l in self.layers_mut() {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = *it.next().unwrap();
            }
        }
    }

    /// Combines value and advantage heads into Q.
    pub fn aggregate(&self, value: &Array1<f64>, advantage: &Array2<f64>) -> Array2<f64> {
        let mut q = advantage.clone();
        for (mut row, &v) in q.axis_iter_mut(Axis(0)).zip(value.iter()) {
            let centre = match self.aggregation {
                Aggregation::Mean => row.mean().unwrap_or(0.0),
                Aggregation::Max => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            };
            row.mapv_inplace(|a| v + a - centre);
        }
        q
    }

    pub fn forward(&self, input: Array2<f64>) -> ForwardCache {
        let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(self.trunk.len());
        for (i, layer) in self.trunk.iter().enumerate() {
            let x = if i == 0 {
                input.view()
            } else {
                hidden[i - 1usize].view()
            };
            let h = relu(layer.forward(&x));
            hidden.push(h);
        }
        let top = hidden.last().map_or(input.view(), |h| h.view());
        let value = self.value.forward(&top).column(0).to_owned();
        let advantage = self.advantage.forward(&top);
        let q = self.aggregate(&value, &advantage);
        ForwardCache {
            input,
            hidden,
            value,
            advantage,
            q,
        }
    }

    /// Q values for a batch of inputs, one row per sample.
    pub fn q_batch(&self, input: Array2<f64>) -> Result<Array2<f64>, NetError> {
        if input.ncols() != self.inputs() {
            return Err(NetError::InputDim {
                got: input.ncols(),
                expected: self.inputs(),
            });
        }
        let q = self.forward(input).q;
        if q.iter().all(|v| v.is_finite()) {
            Ok(q)
        } else {
            Err(NetError::NonFinite("q"))
        }
    }

    pub fn q_values(&self, obs: &[f32]) -> Result<Vec<f64>, NetError> {
        let x = Array2::from_shape_fn((1, obs.len()), |(_, j)| obs[j] as f64);
        Ok(self.q_batch(x)?.row(0).to_vec())
    }

    /// Gradients of `sum(dq * Q)` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, dq: &Array2<f64>) -> Gradients {
        let k = self.actions() as f64;
        let dv: Array1<f64> = dq.sum_axis(Axis(1));
        let mut da = dq.clone();
        match self.aggregation {
            Aggregation::Mean => {
                for (mut row, &s) in da.axis_iter_mut(Axis(0)).zip(dv.iter()) {
                    row.mapv_inplace(|g| g - s / k);
                }
            }
            Aggregation::Max => {
                for ((mut row, adv), &s) in da
                    .axis_iter_mut(Axis(0))
                    .zip(cache.advantage.axis_iter(Axis(0)))
                    .zip(dv.iter())
                {
                    let mut best = 0;
                    for j in 1..adv.len() {
                        if adv[j] > adv[best] {
                            best = j;
                        }
                    }
                    row[best] -= s;
                }
            }
        }
        let top = cache.hidden.last().unwrap_or(&cache.input);
        let dv2 = dv.insert_axis(Axis(1));
        let value_grad = Dense {
            w: top.t().dot(&dv2),
            b: dv2.sum_axis(Axis(0)),
        };
        let adv_grad = Dense {
            w: top.t().dot(&da),
            b: da.sum_axis(Axis(0)),
        };
        let mut dh = dv2.dot(&self.value.w.t()) + da.dot(&self.advantage.w.t());
        let mut trunk_grads = Vec::with_capacity(self.trunk.len());
        for i in (0..self.trunk.len()).rev() {
            let out = &cache.hidden[i];
            dh.zip_mut_with(out, |g, &h| {
                if h <= 0.0 {
                    *g = 0.0
                }
            });
            let x = if i == 0 {
                &cache.input
            } else {
                &cache.hidden[i - 1]
            };
            trunk_grads.push(Dense {
                w: x.t().dot(&dh),
                b: dh.sum_axis(Axis(0)),
            });
            if i > 0 {
                dh = dh.dot(&self.trunk[i].w.t());
            }
        }
        trunk_grads.reverse();
        trunk_grads.push(value_grad);
        trunk_grads.push(adv_grad);
        Gradients {
            layers: trunk_grads,
        }
    }

    pub fn apply_sgd(&mut self, grads: &Gradients, lr: f64) {
        for (p, g) in self.layers_mut().into_iter().zip(&grads.layers) {
            p.w.scaled_add(-lr, &g.w);
            p.b.scaled_add(-lr, &g.b);
        }
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Adam with bias correction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Dense>,
    v: Vec<Dense>,
}

impl Adam {
    pub fn new(net: &QNetwork) -> Self {
        let zeros: Vec<Dense> = net.layers().iter().map(|l| l.zeros_like()).collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, net: &mut QNetwork, grads: &Gradients, lr: f64) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - b2.powi(self.t.min(i32::MAX as u64) as i32);
        let layers = net.layers_mut();
        for (((p, g), m), v) in layers
            .into_iter()
            .zip(&grads.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            };
            ndarray::Zip::from(&mut p.w)
                .and(&g.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut p.b)
                .and(&g.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam(Adam),
    Sgd,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, net: &QNetwork) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(net)),
            OptimizerKind::Sgd => Optimizer::Sgd,
        }
    }

    pub fn step(&mut self, net: &mut QNetwork, grads: &Gradients, lr: f64) {
        match self {
            Optimizer::Adam(a) => a.step(net, grads, lr),
            Optimizer::Sgd => net.apply_sgd(grads, lr),
        }
    }
}

pub fn huber(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

pub fn huber_grad(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Mean Huber loss of `Q(s_i, a_i) - y_i` and its gradient with respect to
/// every parameter.
pub fn huber_loss_and_grad(
    net: &QNetwork,
    input: Array2<f64>,
    actions: &[usize],
    targets: &[f64],
) -> (f64, Gradients) {
    let n = actions.len();
    assert_eq!(n, targets.len());
    assert_eq!(n, input.nrows());
    let cache = net.forward(input);
    let mut dq = Array2::zeros(cache.q.raw_dim());
    let mut loss = 0.0;
    for i in 0..n {
        let td = cache.q[[i, actions[i]]] - targets[i];
        loss += huber(td);
        dq[[i, actions[i]]] = huber_grad(td) / n as f64;
    }
    let grads = net.backward(&cache, &dq);
    (loss / n as f64, grads)
}

/// Mean Huber loss only.
pub fn huber_loss(net: &QNetwork, input: Array2<f64>, actions: &[usize], targets: &[f64]) -> f64 {
    let q = net.forward(input).q;
    actions
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(i, (&a, &y))| huber(q[[i, a]] - y))
        .sum::<f64>()
        / actions.len() as f64
}
