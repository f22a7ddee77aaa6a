//! The Stage-1 scorer: a two-hidden-layer ReLU network with hand-written
//! backpropagation, an Adam optimizer and a minibatch training loop.

use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{ensure_same_len, CairoError, Result};
use crate::losses::LossSpec;
use crate::matrix::Matrix;
use crate::ranks::mid_distribution;
use crate::rng::SeededRng;

pub const MLP_VERSION: &str = "cairo-mlp-v1";
pub const DEFAULT_HIDDEN: [usize; 2] = [32, 16];

/// `score(x) = w3 . relu(W2 relu(W1 x + b1) + b2) + b3`.
///
/// Also used as the gradient container, since gradients have the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRepr", into = "MlpRepr")]
pub struct MlpParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpRepr {
    version: String,
    dims: [usize; 3],
    #[serde(rename = "W1")]
    w1: Matrix,
    b1: Vec<f64>,
    #[serde(rename = "W2")]
    w2: Matrix,
    b2: Vec<f64>,
    w3: Vec<f64>,
    b3: f64,
}

impl From<MlpParams> for MlpRepr {
    fn from(p: MlpParams) -> Self {
        Self {
            version: MLP_VERSION.to_owned(),
            dims: p.dims(),
            w1: p.w1,
            b1: p.b1,
            w2: p.w2,
            b2: p.b2,
            w3: p.w3,
            b3: p.b3,
        }
    }
}

impl TryFrom<MlpRepr> for MlpParams {
    type Error = String;

    fn try_from(r: MlpRepr) -> std::result::Result<Self, String> {
        if r.version != MLP_VERSION {
            return Err(format!("unsupported model version {:?}", r.version));
        }
        let p = MlpParams {
            w1: r.w1,
            b1: r.b1,
            w2: r.w2,
            b2: r.b2,
            w3: r.w3,
            b3: r.b3,
        };
        p.check_shapes().map_err(|e| e.to_string())?;
        if p.dims() != r.dims {
            return Err(format!(
                "dims {:?} disagree with weights {:?}",
                r.dims,
                p.dims()
            ));
        }
        Ok(p)
    }
}

impl MlpParams {
    pub fn zeros(d: usize, hidden: [usize; 2]) -> Self {
        let [h1, h2] = hidden;
        Self {
            w1: Matrix::zeros(h1, d),
            b1: vec![0.0; h1],
            w2: Matrix::zeros(h2, h1),
            b2: vec![0.0; h2],
            w3: vec![0.0; h2],
            b3: 0.0,
        }
    }

    /// Glorot-uniform weights, zero biases, default 32x16 hidden layers.
    pub fn init(d: usize, seed: u64) -> Result<Self> {
        Self::init_with(d, DEFAULT_HIDDEN, &mut SeededRng::new(seed))
    }

    pub fn init_with(d: usize, hidden: [usize; 2], rng: &mut SeededRng) -> Result<Self> {
        if d < 1 || hidden.contains(&0) {
            return Err(CairoError::InvalidParameter(format!(
                "network dims must be positive, got input {d}, hidden {hidden:?}"
            )));
        }
        let mut p = Self::zeros(d, hidden);
        let [h1, h2] = hidden;
        let glorot = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
        let a = glorot(d, h1);
        p.w1.as_mut_slice()
            .iter_mut()
            .for_each(|w| *w = rng.uniform_range(-a, a));
        let a = glorot(h1, h2);
        p.w2.as_mut_slice()
            .iter_mut()
            .for_each(|w| *w = rng.uniform_range(-a, a));
        let a = glorot(h2, 1);
        p.w3.iter_mut().for_each(|w| *w = rng.uniform_range(-a, a));
        Ok(p)
    }

    /// `[input, hidden1, hidden2]`
    pub fn dims(&self) -> [usize; 3] {
        [self.w1.cols(), self.w1.rows(), self.w2.rows()]
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    fn check_shapes(&self) -> Result<()> {
        let [_, h1, h2] = self.dims();
        let ok = self.b1.len() == h1
            && self.w2.cols() == h1
            && self.b2.len() == h2
            && self.w3.len() == h2;
        if !ok {
            return Err(CairoError::ShapeMismatch(
                "inconsistent network layer sizes".into(),
            ));
        }
        Ok(())
    }

    pub fn slices(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice(),
            &self.b1,
            self.w2.as_slice(),
            &self.b2,
            &self.w3,
            std::slice::from_ref(&self.b3),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
            &mut self.w3,
            std::slice::from_mut(&mut self.b3),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// All parameters in a fixed order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        ensure_same_len(self.num_params(), flat.len())?;
        let mut offset = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
        Ok(())
    }

    fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for s in self.slices() {
            for v in s {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Vec<f64>, ForwardCache)> {
        if x.cols() != self.input_dim() {
            return Err(CairoError::ShapeMismatch(format!(
                "network expects {} features, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        let [_, h1, h2] = self.dims();
        let n = x.rows();
        let mut a1 = Matrix::zeros(n, h1);
        let mut a2 = Matrix::zeros(n, h2);
        let mut scores = Vec::with_capacity(n);
        for r in 0..n {
            let xr = x.row(r);
            let a1r = a1.row_mut(r);
            for (k, out) in a1r.iter_mut().enumerate() {
                let z = self.b1[k] + dot(self.w1.row(k), xr);
                *out = z.max(0.0);
            }
            let a1r = a1.row(r);
            let a2r = a2.row_mut(r);
            for (k, out) in a2r.iter_mut().enumerate() {
                let z = self.b2[k] + dot(self.w2.row(k), a1r);
                *out = z.max(0.0);
            }
            scores.push(self.b3 + dot(&self.w3, a2.row(r)));
        }
        let cache = ForwardCache {
            input: x.clone(),
            hidden1: a1,
            hidden2: a2,
            fingerprint: self.fingerprint(),
        };
        Ok((scores, cache))
    }

    pub fn scores(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.0)
    }

    /// Gradient of `sum_i grad_scores[i] * score_i` with respect to every
    /// parameter. ReLU has derivative 0 at 0.
    pub fn backward(&self, cache: &ForwardCache, grad_scores: &[f64]) -> Result<MlpParams> {
        if cache.fingerprint != self.fingerprint() || cache.input.cols() != self.input_dim() {
            return Err(CairoError::StaleCache);
        }
        ensure_same_len(cache.input.rows(), grad_scores.len())?;
        let [d, h1, h2] = self.dims();
        let mut g = MlpParams::zeros(d, [h1, h2]);
        let mut dz2 = vec![0.0; h2];
        let mut dz1 = vec![0.0; h1];
        for (r, &gs) in grad_scores.iter().enumerate() {
            if gs == 0.0 {
                continue;
            }
            let xr = cache.input.row(r);
            let a1r = cache.hidden1.row(r);
            let a2r = cache.hidden2.row(r);
            g.b3 += gs;
            for k in 0..h2 {
                g.w3[k] += gs * a2r[k];
                dz2[k] = if a2r[k] > 0.0 { gs * self.w3[k] } else { 0.0 };
            }
            dz1.iter_mut().for_each(|v| *v = 0.0);
            for (k, &d2) in dz2.iter().enumerate() {
                if d2 == 0.0 {
                    continue;
                }
                g.b2[k] += d2;
                let w2k = self.w2.row(k);
                let gw2k = g.w2.row_mut(k);
                for j in 0..h1 {
                    gw2k[j] += d2 * a1r[j];
                    dz1[j] += d2 * w2k[j];
                }
            }
            for j in 0..h1 {
                if a1r[j] <= 0.0 || dz1[j] == 0.0 {
                    continue;
                }
                g.b1[j] += dz1[j];
                let gw1j = g.w1.row_mut(j);
                for (gw, xv) in gw1j.iter_mut().zip(xr) {
                    *gw += dz1[j] * xv;
                }
            }
        }
        Ok(g)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Activations saved by [`MlpParams::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Matrix,
    hidden1: Matrix,
    hidden2: Matrix,
    fingerprint: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(CairoError::InvalidParameter(format!(
                "invalid Adam settings {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: MlpParams,
    pub second_moment: MlpParams,
    pub step: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(like: &MlpParams, config: AdamConfig) -> Self {
        let [d, h1, h2] = like.dims();
        Self {
            first_moment: MlpParams::zeros(d, [h1, h2]),
            second_moment: MlpParams::zeros(d, [h1, h2]),
            step: 0,
            config,
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpParams) -> Result<()> {
        if params.dims() != grads.dims() || params.dims() != self.first_moment.dims() {
            return Err(CairoError::ShapeMismatch(
                "parameters, gradients and optimizer state differ in shape".into(),
            ));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        let layers = params
            .slices_mut()
            .into_iter()
            .zip(grads.slices())
            .zip(self.first_moment.slices_mut())
            .zip(self.second_moment.slices_mut());
        for (((p, g), m), v) in layers {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

pub fn adam_step(params: &mut MlpParams, grads: &MlpParams, state: &mut AdamState) -> Result<()> {
    state.step(params, grads)
}

/// Which targets the rank-gap weights' mid-distribution is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankGapScope {
    #[default]
    Batch,
    FullTrainingSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossSpec,
    pub shuffle: bool,
    pub hidden: [usize; 2],
    pub adam: AdamConfig,
    pub rank_gap_scope: RankGapScope,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 256,
            seed: 0,
            loss: LossSpec::ranknet(),
            shuffle: true,
            hidden: DEFAULT_HIDDEN,
            adam: AdamConfig::default(),
            rank_gap_scope: RankGapScope::Batch,
        }
    }
}

impl TrainConfig {
    pub fn with_loss(self, loss: LossSpec) -> Self {
        Self { loss, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(CairoError::InvalidParameter(
                "batch size must be positive".into(),
            ));
        }
        if self.loss.is_ranking() && self.batch_size < 2 {
            return Err(CairoError::InvalidParameter(
                "ranking losses need batches of at least 2 rows".into(),
            ));
        }
        Ok(())
    }
}

/// Minibatch Adam on `cfg.loss`. Returns the trained parameters and the
/// mean in-batch loss of every epoch.
///
/// Initialization uses stream 0 of `cfg.seed`; the shuffle of epoch `e`
/// uses stream `e + 1`, so the run is a pure function of its inputs.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<(MlpParams, Vec<f64>)> {
    train_rows(ds.features(), ds.targets(), cfg)
}

pub(crate) fn train_rows(
    features: &Matrix,
    targets: &[f64],
    cfg: &TrainConfig,
) -> Result<(MlpParams, Vec<f64>)> {
    cfg.validate()?;
    ensure_same_len(features.rows(), targets.len())?;
    let n = targets.len();
    let min_batch = if cfg.loss.is_ranking() { 2 } else { 1 };
    if n < min_batch {
        return Err(CairoError::TooFewRows(n));
    }
    let root = SeededRng::new(cfg.seed);
    let mut params = MlpParams::init_with(features.cols(), cfg.hidden, &mut root.fork(0))?;
    let mut adam = AdamState::new(&params, cfg.adam);
    let full_cdf = match cfg.rank_gap_scope {
        RankGapScope::FullTrainingSet if cfg.loss.uses_rank_gap() => {
            Some(mid_distribution(targets)?)
        }
        _ => None,
    };

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.sort_unstable();
            root.fork(epoch as u64 + 1).shuffle(&mut order);
        }
        let mut total = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            if batch.len() < min_batch {
                continue;
            }
            let x = features.select_rows(batch);
            let y: Vec<f64> = batch.iter().map(|&i| targets[i]).collect();
            let cdf: Option<Vec<f64>> = full_cdf
                .as_ref()
                .map(|c| batch.iter().map(|&i| c[i]).collect());
            let (scores, cache) = params.forward(&x)?;
            let loss = cfg.loss.evaluate(&y, &scores, cdf.as_deref())?;
            let grads = params.backward(&cache, &loss.grad_scores)?;
            adam.step(&mut params, &grads)?;
            total += loss.value;
            batches += 1;
        }
        history.push(total / batches.max(1) as f64);
    }
    Ok((params, history))
}
