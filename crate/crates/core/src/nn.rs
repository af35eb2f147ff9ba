//! Dense layers with hand-written gradients, softmax cross-entropy and Adam.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `x · σ(x)`.
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

/// `σ(x) (1 + x (1 - σ(x)))`.
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Silu,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => silu(x),
            Activation::Relu => x.max(0.0),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Silu => silu_grad(x),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Affine map `x W + b` with `W` of shape `(in, out)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLayer {
    #[serde(with = "matrix_json")]
    pub weight: Array2<f64>,
    #[serde(with = "vector_json")]
    pub bias: Array1<f64>,
}

impl LinearLayer {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..=limit));
        LinearLayer { weight, bias: Array1::zeros(fan_out) }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.in_dim() {
            return Err(Error::shape(format!("layer expects {} inputs, got {}", self.in_dim(), x.ncols())));
        }
        Ok(x.dot(&self.weight) + &self.bias)
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Inverted dropout mask: kept entries scale by `1/(1-p)`, dropped ones are 0.
pub fn dropout_mask<R: Rng + ?Sized>(shape: (usize, usize), rate: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < rate { 0.0 } else { keep })
}

/// Feature transformation: linear layers with SiLU in between and dropout on
/// every layer input during training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<LinearLayer>,
    #[serde(skip)]
    generation: u64,
}

// Equality ignores the cache generation.
impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    mask: Option<Array2<f64>>,
    pre: Array2<f64>,
}

/// Intermediates recorded by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    generation: u64,
    layers: Vec<LayerCache>,
}

impl Mlp {
    pub fn new(layers: Vec<LinearLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::param("an MLP needs at least one layer"));
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::shape(format!(
                    "consecutive layers {}→{} and {}→{} do not compose",
                    w[0].in_dim(),
                    w[0].out_dim(),
                    w[1].in_dim(),
                    w[1].out_dim()
                )));
            }
        }
        Ok(Mlp { layers, generation: 0 })
    }

    /// `dims = [in, hidden.., out]`, Glorot-initialized.
    pub fn glorot<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::param("an MLP needs input and output dimensions"));
        }
        Self::new(dims.windows(2).map(|w| LinearLayer::glorot(w[0], w[1], rng)).collect())
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Marks the parameters as modified, invalidating earlier caches.
    pub fn touch(&mut self) {
        self.generation += 1;
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: &ArrayView2<f64>,
        dropout_rate: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<(Array2<f64>, MlpCache)> {
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::param(format!("dropout rate must be in [0, 1), got {dropout_rate}")));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            if h.ncols() != layer.in_dim() {
                return Err(Error::shape(format!("layer {i} expects {} inputs, got {}", layer.in_dim(), h.ncols())));
            }
            let mask = (training && dropout_rate > 0.0).then(|| dropout_mask(h.dim(), dropout_rate, rng));
            if let Some(m) = &mask {
                h *= m;
            }
            let pre = layer.forward(&h.view())?;
            let last = i + 1 == self.layers.len();
            let out = if last { pre.clone() } else { pre.mapv(silu) };
            caches.push(LayerCache { input: h, mask, pre });
            h = out;
        }
        Ok((h, MlpCache { generation: self.generation, layers: caches }))
    }

    /// Gradients of all layers and of the input, given `∂L/∂output`.
    pub fn backward(&self, cache: &MlpCache, upstream: &ArrayView2<f64>) -> Result<(Vec<LinearGrads>, Array2<f64>)> {
        if cache.generation != self.generation || cache.layers.len() != self.layers.len() {
            return Err(Error::StaleCache);
        }
        let last = cache.layers.last().expect("non-empty");
        if upstream.dim() != last.pre.dim() {
            return Err(Error::shape(format!("upstream {:?}, output {:?}", upstream.dim(), last.pre.dim())));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = upstream.to_owned();
        for i in (0..self.layers.len()).rev() {
            let lc = &cache.layers[i];
            let weight = lc.input.t().dot(&g);
            let bias = g.sum_axis(Axis(0));
            let mut d_in = g.dot(&self.layers[i].weight.t());
            if let Some(m) = &lc.mask {
                d_in *= m;
            }
            grads.push(LinearGrads { weight, bias });
            if i > 0 {
                Zip::from(&mut d_in).and(&cache.layers[i - 1].pre).for_each(|d, &p| *d *= silu_grad(p));
            }
            g = d_in;
        }
        grads.reverse();
        Ok((grads, g))
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean negative log-likelihood over the masked rows and its gradient with
/// respect to the logits (zero outside the mask).
pub fn softmax_cross_entropy(logits: &ArrayView2<f64>, labels: &[usize], mask: &[usize]) -> Result<(f64, Array2<f64>)> {
    if mask.is_empty() {
        return Err(Error::EmptyMask("cross-entropy"));
    }
    if labels.len() != logits.nrows() {
        return Err(Error::shape(format!("{} labels for {} rows", labels.len(), logits.nrows())));
    }
    let classes = logits.ncols();
    let scale = 1.0 / mask.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for &i in mask {
        let y = labels[i];
        if y >= classes {
            return Err(Error::param(format!("label {y} at node {i} outside {classes} classes")));
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        let mut g = grad.row_mut(i);
        for c in 0..classes {
            g[c] += scale * ((row[c] - lse).exp() - if c == y { 1.0 } else { 0.0 });
        }
    }
    Ok((loss * scale, grad))
}

/// Index of the largest entry per row; ties go to the lowest index.
pub fn argmax_rows(m: &ArrayView2<f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// One parameter tensor handed to the optimizer.
pub struct ParamTensor<'a> {
    pub values: &'a mut [f64],
    pub grad: &'a [f64],
    /// Whether L2 regularization applies to this tensor.
    pub decay: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }
}

/// Adam with bias correction. L2 decay is added to the gradient before the
/// moment updates.
pub fn adam_step(state: &mut AdamState, params: &mut [ParamTensor<'_>], weight_decay: f64) -> Result<()> {
    for (i, p) in params.iter().enumerate() {
        if p.values.len() != p.grad.len() {
            return Err(Error::shape(format!(
                "tensor {i}: {} values but {} gradients",
                p.values.len(),
                p.grad.len()
            )));
        }
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.values.len()]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() || state.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.values.len()) {
        return Err(Error::shape("parameter layout changed between optimizer steps"));
    }
    state.t += 1;
    let c1 = 1.0 - state.beta1.powi(state.t as i32);
    let c2 = 1.0 - state.beta2.powi(state.t as i32);
    for (p, (m, v)) in params.iter_mut().zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for j in 0..p.values.len() {
            let g = p.grad[j] + if p.decay { weight_decay * p.values[j] } else { 0.0 };
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
            let mhat = m[j] / c1;
            let vhat = v[j] / c2;
            p.values[j] -= state.lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Matrices serialize as `{"shape": [rows, cols], "data": [row-major...]}`.
pub mod matrix_json {
    use ndarray::Array2;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Record {
        shape: [usize; 2],
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
        Record { shape: [m.nrows(), m.ncols()], data: m.iter().copied().collect() }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
        let r = Record::deserialize(d)?;
        Array2::from_shape_vec((r.shape[0], r.shape[1]), r.data).map_err(D::Error::custom)
    }
}

/// Vectors serialize as `{"shape": [len], "data": [...]}`.
pub mod vector_json {
    use ndarray::Array1;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Record {
        shape: [usize; 1],
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(v: &Array1<f64>, s: S) -> Result<S::Ok, S::Error> {
        Record { shape: [v.len()], data: v.to_vec() }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array1<f64>, D::Error> {
        let r = Record::deserialize(d)?;
        if r.data.len() != r.shape[0] {
            return Err(D::Error::custom(format!("shape {} but {} values", r.shape[0], r.data.len())));
        }
        Ok(Array1::from(r.data))
    }
}
