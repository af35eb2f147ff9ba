//! ChebGibbsNet and the damped ChebNet layer used for ablations.
//!
//! ChebGibbsNet transforms features first with an MLP, `Z = f_Θ(X)`, then
//! propagates `Σ_k w_k g_k T_k(S) Z` with learnable `w` and fixed Gibbs
//! damping `g`, and finishes with a row-wise softmax. The shift operator is
//! the renormalized adjacency, negated for heterophilous graphs.
//!
//! The ablation network stacks coupled layers `σ(Σ_k g_k T_k(L̃) Z W + b)`
//! on the scaled Laplacian, with no per-order coefficients.

use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{planetoid_split, random_split, Dataset, Splits};
use crate::error::{Error, Result};
use crate::filters::{damping_vector, for_each_cheb_term, term_norms, Basis, Damping, FilterSpec};
use crate::graph::{
    lambda_max_for, node_homophily, renormalized_adjacency, scaled_laplacian, sym_norm_laplacian, LambdaMaxMode,
    TieBreak, DEFAULT_HOMOPHILY_THRESHOLD,
};
use crate::nn::{
    adam_step, argmax_rows, dropout_mask, softmax, softmax_cross_entropy, Activation, AdamState, LinearGrads,
    LinearLayer, Mlp, MlpCache, ParamTensor,
};
use crate::sparse::SparseOperator;

/// How the learnable coefficients start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CoeffInit {
    /// `w_k = 1` for every order.
    #[default]
    Ones,
    /// `w = (1, 0, …, 0)`: the filter starts as the identity.
    Identity,
}

impl CoeffInit {
    pub fn coefficients(self, order: usize) -> Vec<f64> {
        match self {
            CoeffInit::Ones => vec![1.0; order + 1],
            CoeffInit::Identity => (0..=order).map(|k| if k == 0 { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Output of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<C> {
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
    pub cache: C,
}

/// What the training loop needs from a network.
pub trait NodeClassifier: Clone {
    type Cache;
    type Grads;

    fn forward<R: Rng + ?Sized>(
        &self,
        s: &SparseOperator,
        x: &ArrayView2<f64>,
        dropout: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<ForwardPass<Self::Cache>>;

    /// Parameter gradients given `∂L/∂logits`. `s` must be the operator used
    /// in the forward pass.
    fn backward_logits(&self, s: &SparseOperator, cache: &Self::Cache, dlogits: &ArrayView2<f64>)
        -> Result<Self::Grads>;

    /// One Adam update. Outstanding caches become stale.
    fn adam_update(&mut self, state: &mut AdamState, grads: &Self::Grads, weight_decay: f64) -> Result<()>;

    /// Masked cross-entropy and the gradients of every parameter.
    fn backward(
        &self,
        s: &SparseOperator,
        pass: &ForwardPass<Self::Cache>,
        labels: &[usize],
        mask: &[usize],
    ) -> Result<(f64, Self::Grads)> {
        let (loss, g) = softmax_cross_entropy(&pass.logits.view(), labels, mask)?;
        Ok((loss, self.backward_logits(s, &pass.cache, &g.view())?))
    }

    /// Class probabilities in evaluation mode.
    fn predict(&self, s: &SparseOperator, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(s, x, 0.0, &mut rng, false)?.probs)
    }
}

fn push_linear<'a>(out: &mut Vec<ParamTensor<'a>>, layer: &'a mut LinearLayer, grads: &'a LinearGrads) {
    out.push(ParamTensor {
        values: layer.weight.as_slice_mut().expect("standard layout"),
        grad: grads.weight.as_slice().expect("standard layout"),
        decay: true,
    });
    out.push(ParamTensor {
        values: layer.bias.as_slice_mut().expect("standard layout"),
        grad: grads.bias.as_slice().expect("standard layout"),
        decay: false,
    });
}

fn frobenius_dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut acc = 0.0;
    Zip::from(a).and(b).for_each(|&x, &y| acc += x * y);
    acc
}

/// Decoupled MLP transform followed by a damped Chebyshev propagation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChebGibbsNet {
    pub mlp: Mlp,
    /// Chebyshev filter whose coefficients are the learnable `w`.
    pub spec: FilterSpec,
    /// `+1` when propagating with `Ã`, `-1` with `-Ã`.
    pub gso_sign: f64,
    #[serde(skip)]
    generation: u64,
}

impl PartialEq for ChebGibbsNet {
    fn eq(&self, other: &Self) -> bool {
        self.mlp == other.mlp && self.spec == other.spec && self.gso_sign == other.gso_sign
    }
}

#[derive(Debug, Clone)]
pub struct ChebGibbsCache {
    generation: u64,
    mlp: MlpCache,
    z: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChebGibbsGrads {
    pub mlp: Vec<LinearGrads>,
    pub coeffs: Vec<f64>,
}

impl ChebGibbsNet {
    /// Two-layer MLP `in → hidden → classes` followed by an order-`K` filter.
    #[allow(clippy::too_many_arguments)]
    pub fn init<R: Rng + ?Sized>(
        in_dim: usize,
        hidden: usize,
        classes: usize,
        order: usize,
        damping: Damping,
        coeff_init: CoeffInit,
        gso_sign: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mlp = Mlp::glorot(&[in_dim, hidden, classes], rng)?;
        let spec = FilterSpec::chebyshev(damping, coeff_init.coefficients(order))?;
        Self::new(mlp, spec, gso_sign)
    }

    pub fn new(mlp: Mlp, spec: FilterSpec, gso_sign: f64) -> Result<Self> {
        if spec.basis != Basis::Chebyshev {
            return Err(Error::InvalidFilter("ChebGibbsNet propagates with the Chebyshev basis".into()));
        }
        spec.validate()?;
        if gso_sign != 1.0 && gso_sign != -1.0 {
            return Err(Error::param(format!("gso_sign must be +1 or -1, got {gso_sign}")));
        }
        Ok(ChebGibbsNet { mlp, spec, gso_sign, generation: 0 })
    }

    pub fn order(&self) -> usize {
        self.spec.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.spec.coefficients
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        self.generation += 1;
        &mut self.spec.coefficients
    }

    /// `‖w_k g_k T_k(S) Z‖_F` for every order, in evaluation mode.
    pub fn term_norms(&self, s: &SparseOperator, x: &ArrayView2<f64>) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (z, _) = self.mlp.forward(x, 0.0, &mut rng, false)?;
        term_norms(s, &z.view(), &self.spec.effective_coefficients())
    }
}

impl NodeClassifier for ChebGibbsNet {
    type Cache = ChebGibbsCache;
    type Grads = ChebGibbsGrads;

    fn forward<R: Rng + ?Sized>(
        &self,
        s: &SparseOperator,
        x: &ArrayView2<f64>,
        dropout: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<ForwardPass<ChebGibbsCache>> {
        if x.nrows() != s.dim() {
            return Err(Error::shape(format!("operator is {0}x{0}, features have {1} rows", s.dim(), x.nrows())));
        }
        let (z, mlp_cache) = self.mlp.forward(x, dropout, rng, training)?;
        let eff = self.spec.effective_coefficients();
        let mut logits = Array2::zeros(z.raw_dim());
        for_each_cheb_term(s, &z.view(), self.order(), |k, t| logits.scaled_add(eff[k], t))?;
        let probs = softmax(&logits.view());
        Ok(ForwardPass { logits, probs, cache: ChebGibbsCache { generation: self.generation, mlp: mlp_cache, z } })
    }

    fn backward_logits(
        &self,
        s: &SparseOperator,
        cache: &ChebGibbsCache,
        dlogits: &ArrayView2<f64>,
    ) -> Result<ChebGibbsGrads> {
        if cache.generation != self.generation {
            return Err(Error::StaleCache);
        }
        if dlogits.dim() != cache.z.dim() {
            return Err(Error::shape(format!("logit gradient {:?}, logits {:?}", dlogits.dim(), cache.z.dim())));
        }
        // S is symmetric, so T_k(S)ᵀ G = T_k(S) G: one recurrence over G
        // yields both g_k <Z, T_k(S) G> and Σ w_k g_k T_k(S) G.
        let damping = self.spec.damping_factors();
        let eff = self.spec.effective_coefficients();
        let mut coeffs = vec![0.0; self.order() + 1];
        let mut dz = Array2::zeros(cache.z.raw_dim());
        for_each_cheb_term(s, dlogits, self.order(), |k, t| {
            coeffs[k] = damping[k] * frobenius_dot(&cache.z, t);
            dz.scaled_add(eff[k], t);
        })?;
        let (mlp, _) = self.mlp.backward(&cache.mlp, &dz.view())?;
        Ok(ChebGibbsGrads { mlp, coeffs })
    }

    fn adam_update(&mut self, state: &mut AdamState, grads: &ChebGibbsGrads, weight_decay: f64) -> Result<()> {
        if grads.mlp.len() != self.mlp.layers.len() || grads.coeffs.len() != self.spec.coefficients.len() {
            return Err(Error::shape("gradient layout does not match the model"));
        }
        let mut tensors = Vec::new();
        for (layer, g) in self.mlp.layers.iter_mut().zip(&grads.mlp) {
            push_linear(&mut tensors, layer, g);
        }
        tensors.push(ParamTensor { values: &mut self.spec.coefficients, grad: &grads.coeffs, decay: true });
        adam_step(state, &mut tensors, weight_decay)?;
        self.mlp.touch();
        self.generation += 1;
        Ok(())
    }
}

/// Pre-activation of the coupled damped layer: `Σ_k g_k T_k(S) (Z W) + b`.
///
/// The weight is applied before propagation; both orders give the same
/// result because the polynomial acts on rows and `W` on columns.
pub fn chebnet_gibbs_preactivation(
    s: &SparseOperator,
    z: &ArrayView2<f64>,
    w: &LinearLayer,
    damping: Damping,
    order: usize,
) -> Result<Array2<f64>> {
    if z.ncols() != w.in_dim() {
        return Err(Error::shape(format!("layer expects {} inputs, got {}", w.in_dim(), z.ncols())));
    }
    if z.nrows() != s.dim() {
        return Err(Error::shape(format!("operator is {0}x{0}, features have {1} rows", s.dim(), z.nrows())));
    }
    if let Damping::Lanczos { m: 0 } = damping {
        return Err(Error::InvalidFilter("Lanczos exponent m must be >= 1".into()));
    }
    let zw = z.dot(&w.weight);
    let g = damping_vector(damping, order);
    let mut acc = Array2::zeros(zw.raw_dim());
    for_each_cheb_term(s, &zw.view(), order, |k, t| acc.scaled_add(g[k], t))?;
    acc += &w.bias;
    Ok(acc)
}

/// `σ(Σ_k g_k T_k(S) Z W + b)`.
pub fn chebnet_gibbs_layer(
    s: &SparseOperator,
    z: &ArrayView2<f64>,
    w: &LinearLayer,
    damping: Damping,
    order: usize,
    activation: Activation,
) -> Result<Array2<f64>> {
    Ok(chebnet_gibbs_preactivation(s, z, w, damping, order)?.mapv(|v| activation.apply(v)))
}

/// Stack of coupled damped ChebNet layers; the last layer emits logits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChebNet {
    pub layers: Vec<LinearLayer>,
    #[serde(rename = "K")]
    pub order: usize,
    pub damping: Damping,
    pub activation: Activation,
    #[serde(skip)]
    generation: u64,
}

impl PartialEq for ChebNet {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
            && self.order == other.order
            && self.damping == other.damping
            && self.activation == other.activation
    }
}

#[derive(Debug, Clone)]
struct ChebNetLayerCache {
    input: Array2<f64>,
    mask: Option<Array2<f64>>,
    pre: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct ChebNetCache {
    generation: u64,
    layers: Vec<ChebNetLayerCache>,
}

impl ChebNet {
    pub fn init<R: Rng + ?Sized>(
        dims: &[usize],
        order: usize,
        damping: Damping,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mlp = Mlp::glorot(dims, rng)?;
        Self::new(mlp.layers, order, damping, activation)
    }

    pub fn new(layers: Vec<LinearLayer>, order: usize, damping: Damping, activation: Activation) -> Result<Self> {
        // Reuse the composition checks.
        let layers = Mlp::new(layers)?.layers;
        if let Damping::Lanczos { m: 0 } = damping {
            return Err(Error::InvalidFilter("Lanczos exponent m must be >= 1".into()));
        }
        Ok(ChebNet { layers, order, damping, activation, generation: 0 })
    }
}

impl NodeClassifier for ChebNet {
    type Cache = ChebNetCache;
    type Grads = Vec<LinearGrads>;

    fn forward<R: Rng + ?Sized>(
        &self,
        s: &SparseOperator,
        x: &ArrayView2<f64>,
        dropout: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<ForwardPass<ChebNetCache>> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::param(format!("dropout rate must be in [0, 1), got {dropout}")));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mask = (training && dropout > 0.0).then(|| dropout_mask(h.dim(), dropout, rng));
            if let Some(m) = &mask {
                h *= m;
            }
            let pre = chebnet_gibbs_preactivation(s, &h.view(), layer, self.damping, self.order)?;
            let last = i + 1 == self.layers.len();
            let out = if last { pre.clone() } else { pre.mapv(|v| self.activation.apply(v)) };
            caches.push(ChebNetLayerCache { input: h, mask, pre });
            h = out;
        }
        let probs = softmax(&h.view());
        Ok(ForwardPass { logits: h, probs, cache: ChebNetCache { generation: self.generation, layers: caches } })
    }

    fn backward_logits(
        &self,
        s: &SparseOperator,
        cache: &ChebNetCache,
        dlogits: &ArrayView2<f64>,
    ) -> Result<Vec<LinearGrads>> {
        if cache.generation != self.generation || cache.layers.len() != self.layers.len() {
            return Err(Error::StaleCache);
        }
        let out_dim = cache.layers.last().expect("non-empty").pre.dim();
        if dlogits.dim() != out_dim {
            return Err(Error::shape(format!("logit gradient {:?}, logits {:?}", dlogits.dim(), out_dim)));
        }
        let g = damping_vector(self.damping, self.order);
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut d_pre = dlogits.to_owned();
        for i in (0..self.layers.len()).rev() {
            let lc = &cache.layers[i];
            let bias = d_pre.sum_axis(Axis(0));
            let mut d_zw = Array2::zeros(d_pre.raw_dim());
            for_each_cheb_term(s, &d_pre.view(), self.order, |k, t| d_zw.scaled_add(g[k], t))?;
            let weight = lc.input.t().dot(&d_zw);
            let mut d_in = d_zw.dot(&self.layers[i].weight.t());
            if let Some(m) = &lc.mask {
                d_in *= m;
            }
            grads.push(LinearGrads { weight, bias });
            if i > 0 {
                let act = self.activation;
                Zip::from(&mut d_in).and(&cache.layers[i - 1].pre).for_each(|d, &p| *d *= act.derivative(p));
            }
            d_pre = d_in;
        }
        grads.reverse();
        Ok(grads)
    }

    fn adam_update(&mut self, state: &mut AdamState, grads: &Vec<LinearGrads>, weight_decay: f64) -> Result<()> {
        if grads.len() != self.layers.len() {
            return Err(Error::shape("gradient layout does not match the model"));
        }
        let mut tensors = Vec::new();
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            push_linear(&mut tensors, layer, g);
        }
        adam_step(state, &mut tensors, weight_decay)?;
        self.generation += 1;
        Ok(())
    }
}

/// Sign of the shift operator for ChebGibbsNet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GsoMode {
    /// `+Ã` when the node homophily reaches the threshold, `-Ã` otherwise.
    #[default]
    Auto,
    Pos,
    Neg,
}

/// Which labels feed the homophily estimate used by [`GsoMode::Auto`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HomophilySource {
    /// Every label, like the dataset statistics tables.
    #[default]
    All,
    /// Only training labels.
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    ChebGibbsNet,
    /// The coupled ablation network on the scaled Laplacian.
    ChebNet { activation: Activation },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub lr: f64,
    pub l2_rate: f64,
    pub dropout_rate: f64,
    pub hidden_dim: usize,
    #[serde(rename = "K")]
    pub order: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub damping: Damping,
    pub lambda_max: LambdaMaxMode,
    pub gso: GsoMode,
    pub homophily_threshold: f64,
    pub tie_break: TieBreak,
    pub homophily_source: HomophilySource,
    pub coeff_init: CoeffInit,
    /// Self-loop weight of the renormalized adjacency.
    pub eta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::ChebGibbsNet,
            lr: 1e-2,
            l2_rate: 5e-4,
            dropout_rate: 0.6,
            hidden_dim: 64,
            order: 10,
            max_epochs: 1000,
            patience: 30,
            seed: 0,
            damping: Damping::Jackson,
            lambda_max: LambdaMaxMode::Power,
            gso: GsoMode::Auto,
            homophily_threshold: DEFAULT_HOMOPHILY_THRESHOLD,
            tie_break: TieBreak::Homophilous,
            homophily_source: HomophilySource::All,
            coeff_init: CoeffInit::Ones,
            eta: 1.0,
        }
    }
}

impl TrainConfig {
    /// The ablation network with ReLU and the same optimizer settings.
    pub fn chebnet() -> Self {
        TrainConfig { model: ModelKind::ChebNet { activation: Activation::Relu }, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patience < 1 {
            return Err(Error::param("patience must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::param(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.l2_rate >= 0.0 && self.l2_rate.is_finite()) {
            return Err(Error::param(format!("l2 rate must be non-negative, got {}", self.l2_rate)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::param(format!("dropout rate must be in [0, 1), got {}", self.dropout_rate)));
        }
        if self.hidden_dim == 0 {
            return Err(Error::param("hidden dimension must be >= 1"));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::param(format!("eta must be non-negative, got {}", self.eta)));
        }
        if let Damping::Lanczos { m: 0 } = self.damping {
            return Err(Error::param("Lanczos exponent m must be >= 1"));
        }
        Ok(())
    }
}

/// The propagation operator chosen for a dataset and configuration.
#[derive(Debug, Clone)]
pub struct OperatorChoice {
    pub operator: SparseOperator,
    /// Shift sign for ChebGibbsNet; `+1` for the ablation network.
    pub gso_sign: f64,
    /// Homophily estimate, when one was computed.
    pub homophily: Option<f64>,
    /// λ_max used to scale the Laplacian (ablation network only).
    pub lambda_max: Option<f64>,
}

/// `±Ã` for ChebGibbsNet, `L̃` for the ablation network.
pub fn build_operator(ds: &Dataset, cfg: &TrainConfig) -> Result<OperatorChoice> {
    match cfg.model {
        ModelKind::ChebGibbsNet => {
            let adj = renormalized_adjacency(&ds.graph, cfg.eta)?;
            let (sign, homophily) = match cfg.gso {
                GsoMode::Pos => (1.0, None),
                GsoMode::Neg => (-1.0, None),
                GsoMode::Auto => {
                    let mask = match cfg.homophily_source {
                        HomophilySource::All => None,
                        HomophilySource::Train => Some(ds.splits()?.train.as_slice()),
                    };
                    let h = node_homophily(&ds.graph, &ds.labels, mask)?.h;
                    (crate::graph::gso_sign(h, cfg.homophily_threshold, cfg.tie_break), Some(h))
                }
            };
            let operator = if sign < 0.0 { adj.neg() } else { adj };
            Ok(OperatorChoice { operator, gso_sign: sign, homophily, lambda_max: None })
        }
        ModelKind::ChebNet { .. } => {
            let lap = sym_norm_laplacian(&ds.graph);
            let lmax = lambda_max_for(&lap, cfg.lambda_max);
            let operator = scaled_laplacian(&lap, lmax)?;
            Ok(OperatorChoice { operator, gso_sign: 1.0, homophily: None, lambda_max: Some(lmax) })
        }
    }
}

/// A trained network of either kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum TrainedModel {
    ChebGibbsNet(ChebGibbsNet),
    ChebNet(ChebNet),
}

impl TrainedModel {
    pub fn predict(&self, s: &SparseOperator, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            TrainedModel::ChebGibbsNet(m) => m.predict(s, x),
            TrainedModel::ChebNet(m) => m.predict(s, x),
        }
    }
}

/// One row of the training history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub train_acc: f64,
}

/// Comma-separated history with a header row.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,val_acc\n");
    for r in history {
        out.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.val_loss, r.val_acc));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were restored; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub operator: OperatorChoice,
}

impl TrainOutcome {
    pub fn evaluate(&self, ds: &Dataset, mask: &[usize]) -> Result<f64> {
        evaluate(&self.model, &self.operator.operator, ds, mask)
    }

    pub fn checkpoint(&self, config: &TrainConfig) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            config: config.clone(),
            gso_sign: self.operator.gso_sign,
            homophily: self.operator.homophily,
            lambda_max: self.operator.lambda_max,
            best_epoch: self.best_epoch,
        }
    }
}

/// Everything needed to reload a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: TrainedModel,
    pub config: TrainConfig,
    pub gso_sign: f64,
    pub homophily: Option<f64>,
    pub lambda_max: Option<f64>,
    pub best_epoch: Option<usize>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Fraction of `mask` whose argmax prediction equals the label. Ties go to
/// the lowest class index.
pub fn accuracy(probs: &ArrayView2<f64>, labels: &[usize], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::EmptyMask("evaluation"));
    }
    if labels.len() != probs.nrows() {
        return Err(Error::shape(format!("{} labels for {} rows", labels.len(), probs.nrows())));
    }
    let pred = argmax_rows(probs);
    let mut hits = 0usize;
    for &i in mask {
        if i >= labels.len() {
            return Err(Error::IndexOutOfRange { u: i, v: i, n: labels.len() });
        }
        hits += usize::from(pred[i] == labels[i]);
    }
    Ok(hits as f64 / mask.len() as f64)
}

pub fn evaluate(model: &TrainedModel, s: &SparseOperator, ds: &Dataset, mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::EmptyMask("evaluation"));
    }
    let probs = model.predict(s, &ds.features.view())?;
    accuracy(&probs.view(), &ds.labels, mask)
}

/// Trains on the dataset's own splits.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let splits = ds.splits()?;
    if splits.train.is_empty() {
        return Err(Error::EmptyMask("train"));
    }
    if splits.val.is_empty() {
        return Err(Error::EmptyMask("validation"));
    }
    let choice = build_operator(ds, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let classes = ds.num_classes();
    let (model, history, best_epoch) = match cfg.model {
        ModelKind::ChebGibbsNet => {
            let net = ChebGibbsNet::init(
                ds.num_features(),
                cfg.hidden_dim,
                classes,
                cfg.order,
                cfg.damping,
                cfg.coeff_init,
                choice.gso_sign,
                &mut rng,
            )?;
            let (net, h, b) = fit(net, &choice.operator, ds, splits, cfg, &mut rng)?;
            (TrainedModel::ChebGibbsNet(net), h, b)
        }
        ModelKind::ChebNet { activation } => {
            let dims = [ds.num_features(), cfg.hidden_dim, classes];
            let net = ChebNet::init(&dims, cfg.order, cfg.damping, activation, &mut rng)?;
            let (net, h, b) = fit(net, &choice.operator, ds, splits, cfg, &mut rng)?;
            (TrainedModel::ChebNet(net), h, b)
        }
    };
    Ok(TrainOutcome { model, history, best_epoch, operator: choice })
}

/// Full-batch Adam with early stopping on validation loss; returns the
/// parameters of the best epoch.
fn fit<M: NodeClassifier>(
    mut model: M,
    s: &SparseOperator,
    ds: &Dataset,
    splits: &Splits,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(M, Vec<EpochRecord>, Option<usize>)> {
    let x = ds.features.view();
    let mut adam = AdamState::new(cfg.lr);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, M)> = None;
    for epoch in 0..cfg.max_epochs {
        let pass = model.forward(s, &x, cfg.dropout_rate, rng, true)?;
        let (train_loss, grads) = model.backward(s, &pass, &ds.labels, &splits.train)?;
        model.adam_update(&mut adam, &grads, cfg.l2_rate)?;

        let eval = model.forward(s, &x, 0.0, rng, false)?;
        let (val_loss, _) = softmax_cross_entropy(&eval.logits.view(), &ds.labels, &splits.val)?;
        let val_acc = accuracy(&eval.probs.view(), &ds.labels, &splits.val)?;
        let train_acc = accuracy(&eval.probs.view(), &ds.labels, &splits.train)?;
        history.push(EpochRecord { epoch, train_loss, val_loss, val_acc, train_acc });
        if !val_loss.is_finite() {
            log::warn!("validation loss diverged at epoch {epoch}");
            break;
        }

        match &best {
            Some((b, _, _)) if val_loss >= *b => {}
            _ => best = Some((val_loss, epoch, model.clone())),
        }
        let best_epoch = best.as_ref().map_or(0, |b| b.1);
        if epoch - best_epoch >= cfg.patience {
            log::debug!("early stop at epoch {epoch}, best {best_epoch}");
            break;
        }
    }
    Ok(match best {
        Some((_, epoch, m)) => (m, history, Some(epoch)),
        None => (model, history, None),
    })
}

/// How each protocol run obtains its splits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SplitPolicy {
    /// Use the dataset's stored splits for every run.
    Fixed,
    /// Stratified random split re-drawn from each run's seed.
    Random { train: f64, val: f64, test: f64 },
    /// `per_class` training nodes per class plus fixed-size val/test sets.
    Planetoid { per_class: usize, val: usize, test: usize },
}

impl Default for SplitPolicy {
    fn default() -> Self {
        SplitPolicy::Random { train: 0.6, val: 0.2, test: 0.2 }
    }
}

impl SplitPolicy {
    pub fn apply(&self, ds: &Dataset, seed: u64) -> Result<Dataset> {
        match *self {
            SplitPolicy::Fixed => {
                ds.splits()?;
                Ok(ds.clone())
            }
            SplitPolicy::Random { train, val, test } => random_split(ds, (train, val, test), seed),
            SplitPolicy::Planetoid { per_class, val, test } => planetoid_split(ds, per_class, val, test, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub test_acc: f64,
    pub val_acc: f64,
    pub best_epoch: Option<usize>,
    pub epochs: usize,
    pub gso_sign: f64,
    pub homophily: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub runs: Vec<RunResult>,
    pub mean_test_acc: f64,
    /// Population standard deviation over runs.
    pub std_test_acc: f64,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Splits, trains and evaluates one run of the protocol.
pub fn run_seed(ds: &Dataset, cfg: &TrainConfig, seed: u64, policy: SplitPolicy) -> Result<(RunResult, TrainOutcome)> {
    let split = policy.apply(ds, seed)?;
    let run_cfg = TrainConfig { seed, ..cfg.clone() };
    let out = train(&split, &run_cfg)?;
    let splits = split.splits()?;
    if splits.test.is_empty() {
        return Err(Error::EmptyMask("test"));
    }
    let result = RunResult {
        seed,
        test_acc: out.evaluate(&split, &splits.test)?,
        val_acc: out.evaluate(&split, &splits.val)?,
        best_epoch: out.best_epoch,
        epochs: out.history.len(),
        gso_sign: out.operator.gso_sign,
        homophily: out.operator.homophily,
    };
    Ok((result, out))
}

/// Summary over runs, in the order given.
pub fn summarize(runs: Vec<RunResult>) -> ProtocolReport {
    let accs: Vec<f64> = runs.iter().map(|r| r.test_acc).collect();
    let (mean_test_acc, std_test_acc) = mean_std(&accs);
    ProtocolReport { runs, mean_test_acc, std_test_acc }
}

/// Trains one model per seed (in parallel) and reports test accuracy.
/// Each run seeds both its split and its initialization with its own seed.
pub fn run_protocol(ds: &Dataset, cfg: &TrainConfig, seeds: &[u64], policy: SplitPolicy) -> Result<ProtocolReport> {
    if seeds.is_empty() {
        return Err(Error::param("at least one seed is required"));
    }
    cfg.validate()?;
    let runs = seeds
        .par_iter()
        .map(|&seed| run_seed(ds, cfg, seed, policy).map(|(r, _)| r))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(runs))
}
