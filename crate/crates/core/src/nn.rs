//! From-scratch dense network engine: forward pass, cross-entropy loss,
//! analytic backpropagation, SGD, and weighted parameter combination.
//!
//! The network is `[BatchNorm(input)] -> Linear -> ReLU -> ... -> Linear`,
//! with batch normalization applied to the input features when enabled.
//! Parameters live in one flat vector so models can be exchanged, combined,
//! and diffed as plain value types:
//!
//! ```text
//! [gamma (input_dim), beta (input_dim)]        when use_batchnorm
//! [W_0 (out x in, row-major), b_0 (out)]       first linear
//! ...
//! [W_k, b_k]                                   output linear
//! ```
//!
//! Batch-norm running statistics are model state but not trainable, so they
//! are carried next to the flat vector rather than inside it.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    ReLU,
}

/// Network shape shared by every client in an experiment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub use_batchnorm: bool,
    pub activation: Activation,
}

impl Architecture {
    pub fn new(
        input_dim: usize,
        hidden_dims: Vec<usize>,
        output_dim: usize,
        use_batchnorm: bool,
    ) -> Result<Self> {
        if input_dim < 1 || hidden_dims.iter().any(|&d| d < 1) {
            return Err(Error::InvalidArchitecture(
                "all layer dimensions must be >= 1".into(),
            ));
        }
        if output_dim < 2 {
            return Err(Error::InvalidArchitecture(
                "output_dim must be >= 2".into(),
            ));
        }
        Ok(Self {
            input_dim,
            hidden_dims,
            output_dim,
            use_batchnorm,
            activation: Activation::ReLU,
        })
    }

    /// Linear layer dimensions as `(in, out)` pairs, input to output.
    fn linear_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    /// Number of trainable parameters.
    pub fn param_count(&self) -> usize {
        let bn = if self.use_batchnorm {
            2 * self.input_dim
        } else {
            0
        };
        bn + self
            .linear_dims()
            .iter()
            .map(|&(i, o)| i * o + o)
            .sum::<usize>()
    }
}

/// Running batch-norm statistics (not trainable, not counted in param_count).
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats<S> {
    pub running_mean: Vec<S>,
    pub running_var: Vec<S>,
}

/// Flat trainable parameters of one client's model plus its architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<S> {
    arch: Architecture,
    values: Vec<S>,
    bn_stats: Option<BnStats<S>>,
}

impl<S: Scalar> ParamVector<S> {
    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn param_count(&self) -> usize {
        self.values.len()
    }

    pub fn bn_stats(&self) -> Option<&BnStats<S>> {
        self.bn_stats.as_ref()
    }

    /// Builds a model from raw parts. Intended for tests and serialization.
    pub fn from_parts(
        arch: Architecture,
        values: Vec<S>,
        bn_stats: Option<BnStats<S>>,
    ) -> Result<Self> {
        if values.len() != arch.param_count() {
            return Err(Error::DimMismatch(format!(
                "expected {} parameters for architecture, got {}",
                arch.param_count(),
                values.len()
            )));
        }
        if arch.use_batchnorm != bn_stats.is_some() {
            return Err(Error::InvalidInput(
                "bn_stats must be present exactly when use_batchnorm is set".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                stage: "parameter construction".into(),
            });
        }
        Ok(Self {
            arch,
            values,
            bn_stats,
        })
    }
}

/// Training samples packed as a feature matrix plus integer labels.
#[derive(Debug, Clone)]
pub struct Batch<S> {
    pub features: Matrix<S>,
    pub labels: Vec<usize>,
}

impl<S: Scalar> Batch<S> {
    pub fn new(features: Matrix<S>, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimMismatch(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Row-stochastic matrix of post-softmax outputs, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix<S> {
    rows: Matrix<S>,
}

impl<S: Scalar> ProbMatrix<S> {
    /// Validates that every row is a probability vector.
    pub fn new(rows: Matrix<S>) -> Result<Self> {
        let tol = S::prob_row_tol();
        for i in 0..rows.rows() {
            let mut sum = S::zero();
            for &v in rows.row(i) {
                if v < S::zero() || v > S::one() {
                    return Err(Error::InvalidInput(format!(
                        "probability entry out of [0,1] in row {}",
                        i
                    )));
                }
                sum += v;
            }
            if (sum - S::one()).abs() > tol {
                return Err(Error::InvalidInput(format!(
                    "row {} sums to {}, not 1",
                    i, sum
                )));
            }
        }
        Ok(Self { rows })
    }

    /// Row-wise stable softmax of raw logits.
    pub fn from_logits(logits: &Matrix<S>) -> Self {
        let mut out = Matrix::zeros(logits.rows(), logits.cols());
        for i in 0..logits.rows() {
            let row = logits.row(i);
            let max = row.iter().cloned().fold(S::neg_infinity(), S::max);
            let mut sum = S::zero();
            for (j, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                out.set(i, j, e);
                sum += e;
            }
            for v in out.row_mut(i) {
                *v /= sum;
            }
        }
        Self { rows: out }
    }

    pub fn rows(&self) -> &Matrix<S> {
        &self.rows
    }
}

/// Offsets of each parameter group inside the flat vector.
struct Layout {
    bn_gamma: Option<std::ops::Range<usize>>,
    bn_beta: Option<std::ops::Range<usize>>,
    /// `(weight_range, bias_range, in_dim, out_dim)` per linear layer.
    linear: Vec<(std::ops::Range<usize>, std::ops::Range<usize>, usize, usize)>,
}

fn layout(arch: &Architecture) -> Layout {
    let mut offset = 0;
    let (bn_gamma, bn_beta) = if arch.use_batchnorm {
        let g = offset..offset + arch.input_dim;
        offset += arch.input_dim;
        let b = offset..offset + arch.input_dim;
        offset += arch.input_dim;
        (Some(g), Some(b))
    } else {
        (None, None)
    };
    let mut linear = Vec::new();
    for (i, o) in arch.linear_dims() {
        let w = offset..offset + i * o;
        offset += i * o;
        let b = offset..offset + o;
        offset += o;
        linear.push((w, b, i, o));
    }
    Layout {
        bn_gamma,
        bn_beta,
        linear,
    }
}

/// Deterministic scaled-uniform initialization.
///
/// Linear weights and biases are drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`;
/// batch-norm starts at scale 1, shift 0 with running statistics (0, 1).
pub fn init_model<S: Scalar>(arch: &Architecture, seed: u64) -> Result<ParamVector<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![S::zero(); arch.param_count()];
    let lay = layout(arch);
    if let Some(g) = &lay.bn_gamma {
        for v in &mut values[g.clone()] {
            *v = S::one();
        }
    }
    for (w_range, b_range, in_dim, _) in &lay.linear {
        let bound = 1.0 / (*in_dim as f64).sqrt();
        for v in &mut values[w_range.clone()] {
            *v = S::from_f64_lossy(rng.gen_range(-bound..bound));
        }
        for v in &mut values[b_range.clone()] {
            *v = S::from_f64_lossy(rng.gen_range(-bound..bound));
        }
    }
    let bn_stats = arch.use_batchnorm.then(|| BnStats {
        running_mean: vec![S::zero(); arch.input_dim],
        running_var: vec![S::one(); arch.input_dim],
    });
    ParamVector::from_parts(arch.clone(), values, bn_stats)
}

/// Everything the backward pass needs from one forward evaluation.
struct ForwardCache<S> {
    /// Normalized input when batch norm is enabled.
    x_hat: Option<Matrix<S>>,
    batch_mean: Option<Vec<S>>,
    batch_var: Option<Vec<S>>,
    /// Input to each linear layer (post-BN / post-activation).
    layer_inputs: Vec<Matrix<S>>,
    /// Pre-activation output of each linear layer.
    pre_activations: Vec<Matrix<S>>,
    logits: Matrix<S>,
    loss: S,
    probs: Matrix<S>,
}

fn check_batch<S: Scalar>(model: &ParamVector<S>, batch: &Batch<S>) -> Result<()> {
    if batch.features.cols() != model.arch.input_dim {
        return Err(Error::DimMismatch(format!(
            "batch has {} features, model expects {}",
            batch.features.cols(),
            model.arch.input_dim
        )));
    }
    for &l in &batch.labels {
        if l >= model.arch.output_dim {
            return Err(Error::LabelOutOfRange {
                label: l,
                n_classes: model.arch.output_dim,
            });
        }
    }
    Ok(())
}

fn forward_cached<S: Scalar>(
    model: &ParamVector<S>,
    batch: &Batch<S>,
    train_mode: bool,
) -> Result<ForwardCache<S>> {
    check_batch(model, batch)?;
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let n = batch.len();
    let n_s = S::from_f64_lossy(n as f64);
    let lay = layout(&model.arch);
    let eps = S::from_f64_lossy(BN_EPS);

    let (mut current, x_hat, batch_mean, batch_var) = if model.arch.use_batchnorm {
        let d = model.arch.input_dim;
        let gamma = &model.values[lay.bn_gamma.clone().unwrap()];
        let beta = &model.values[lay.bn_beta.clone().unwrap()];
        let stats = model.bn_stats.as_ref().expect("bn stats present");

        let (mean, var) = if train_mode {
            let mut mean = vec![S::zero(); d];
            for row in batch.features.iter_rows() {
                for (m, &x) in mean.iter_mut().zip(row) {
                    *m += x;
                }
            }
            for m in &mut mean {
                *m /= n_s;
            }
            let mut var = vec![S::zero(); d];
            for row in batch.features.iter_rows() {
                for ((v, &m), &x) in var.iter_mut().zip(&mean).zip(row) {
                    let c = x - m;
                    *v += c * c;
                }
            }
            for v in &mut var {
                *v /= n_s;
            }
            (mean, var)
        } else {
            (stats.running_mean.clone(), stats.running_var.clone())
        };

        let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();
        let mut x_hat = Matrix::zeros(n, d);
        let mut out = Matrix::zeros(n, d);
        for i in 0..n {
            let row = batch.features.row(i);
            for j in 0..d {
                let xh = (row[j] - mean[j]) * inv_std[j];
                x_hat.set(i, j, xh);
                out.set(i, j, gamma[j] * xh + beta[j]);
            }
        }
        (out, Some(x_hat), Some(mean), Some(var))
    } else {
        (batch.features.clone(), None, None, None)
    };

    let n_layers = lay.linear.len();
    let mut layer_inputs = Vec::with_capacity(n_layers);
    let mut pre_activations = Vec::with_capacity(n_layers);

    for (idx, (w_range, b_range, in_dim, out_dim)) in lay.linear.iter().enumerate() {
        let w = &model.values[w_range.clone()];
        let b = &model.values[b_range.clone()];
        let mut z = Matrix::zeros(n, *out_dim);
        for r in 0..n {
            let x = current.row(r);
            let zr = z.row_mut(r);
            for o in 0..*out_dim {
                let wrow = &w[o * in_dim..(o + 1) * in_dim];
                let mut acc = b[o];
                for (wi, xi) in wrow.iter().zip(x) {
                    acc += *wi * *xi;
                }
                zr[o] = acc;
            }
        }
        layer_inputs.push(current);
        let last = idx == n_layers - 1;
        if last {
            pre_activations.push(z.clone());
            current = z;
        } else {
            let mut act = z.clone();
            for r in 0..n {
                for v in act.row_mut(r) {
                    if *v < S::zero() {
                        *v = S::zero();
                    }
                }
            }
            pre_activations.push(z);
            current = act;
        }
    }

    let logits = current;
    let probs = ProbMatrix::from_logits(&logits);
    let mut loss = S::zero();
    for (i, &label) in batch.labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(S::neg_infinity(), S::max);
        let mut sum = S::zero();
        for &v in row {
            sum += (v - max).exp();
        }
        loss += max + sum.ln() - row[label];
    }
    loss /= n_s;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            stage: "forward loss".into(),
        });
    }

    Ok(ForwardCache {
        x_hat,
        batch_mean,
        batch_var,
        layer_inputs,
        pre_activations,
        logits,
        loss,
        probs: probs.rows.clone(),
    })
}

/// Forward pass returning pre-softmax logits and mean cross-entropy loss.
///
/// `train_mode` selects batch statistics for batch norm; eval mode uses the
/// model's running statistics.
pub fn forward<S: Scalar>(
    model: &ParamVector<S>,
    batch: &Batch<S>,
    train_mode: bool,
) -> Result<(Matrix<S>, S)> {
    let cache = forward_cached(model, batch, train_mode)?;
    Ok((cache.logits, cache.loss))
}

/// Eval-mode logits for unlabeled features.
pub fn logits_eval<S: Scalar>(model: &ParamVector<S>, features: &Matrix<S>) -> Result<Matrix<S>> {
    let labels = vec![0usize; features.rows()];
    let batch = Batch::new(features.clone(), labels)?;
    let cache = forward_cached(model, &batch, false)?;
    Ok(cache.logits)
}

/// Mean cross-entropy loss and its analytic gradient (train mode).
pub fn loss_and_grad<S: Scalar>(model: &ParamVector<S>, batch: &Batch<S>) -> Result<(S, Vec<S>)> {
    let cache = forward_cached(model, batch, true)?;
    let grad = backward(model, batch, &cache)?;
    Ok((cache.loss, grad))
}

fn backward<S: Scalar>(
    model: &ParamVector<S>,
    batch: &Batch<S>,
    cache: &ForwardCache<S>,
) -> Result<Vec<S>> {
    let n = batch.len();
    let n_s = S::from_f64_lossy(n as f64);
    let lay = layout(&model.arch);
    let mut grad = vec![S::zero(); model.values.len()];

    // d(loss)/d(logits) = (softmax - onehot) / n
    let mut delta = cache.probs.clone();
    for (i, &label) in batch.labels.iter().enumerate() {
        let row = delta.row_mut(i);
        row[label] -= S::one();
        for v in row.iter_mut() {
            *v /= n_s;
        }
    }

    for (idx, (w_range, b_range, in_dim, out_dim)) in lay.linear.iter().enumerate().rev() {
        let input = &cache.layer_inputs[idx];
        let w = &model.values[w_range.clone()];
        {
            let gw = &mut grad[w_range.clone()];
            for r in 0..n {
                let d = delta.row(r);
                let x = input.row(r);
                for o in 0..*out_dim {
                    let gw_row = &mut gw[o * in_dim..(o + 1) * in_dim];
                    let dv = d[o];
                    for (g, &xi) in gw_row.iter_mut().zip(x) {
                        *g += dv * xi;
                    }
                }
            }
        }
        {
            let gb = &mut grad[b_range.clone()];
            for r in 0..n {
                for (g, &dv) in gb.iter_mut().zip(delta.row(r)) {
                    *g += dv;
                }
            }
        }
        // propagate to layer input; apply the ReLU mask of the previous layer
        let mut d_in = Matrix::zeros(n, *in_dim);
        for r in 0..n {
            let d = delta.row(r);
            let dst = d_in.row_mut(r);
            for o in 0..*out_dim {
                let wrow = &w[o * in_dim..(o + 1) * in_dim];
                let dv = d[o];
                for (t, &wi) in dst.iter_mut().zip(wrow) {
                    *t += dv * wi;
                }
            }
        }
        if idx > 0 {
            let pre = &cache.pre_activations[idx - 1];
            for r in 0..n {
                let mask = pre.row(r);
                for (v, &z) in d_in.row_mut(r).iter_mut().zip(mask) {
                    if z <= S::zero() {
                        *v = S::zero();
                    }
                }
            }
        }
        delta = d_in;
    }

    // batch norm is the first layer, so only gamma/beta gradients are needed
    if model.arch.use_batchnorm {
        let x_hat = cache.x_hat.as_ref().expect("bn cache");
        let g_range = lay.bn_gamma.unwrap();
        let b_range = lay.bn_beta.unwrap();
        for r in 0..n {
            let d = delta.row(r);
            let xh = x_hat.row(r);
            for j in 0..model.arch.input_dim {
                grad[g_range.start + j] += d[j] * xh[j];
                grad[b_range.start + j] += d[j];
            }
        }
    }

    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            stage: "backward".into(),
        });
    }
    Ok(grad)
}

/// One plain SGD step: `values - lr * grad`.
pub fn sgd_step<S: Scalar>(model: &ParamVector<S>, grad: &[S], lr: S) -> Result<ParamVector<S>> {
    if grad.len() != model.values.len() {
        return Err(Error::DimMismatch(format!(
            "gradient length {} does not match {} parameters",
            grad.len(),
            model.values.len()
        )));
    }
    let mut out = model.clone();
    for (v, &g) in out.values.iter_mut().zip(grad) {
        *v -= lr * g;
    }
    Ok(out)
}

/// One local training step: gradient, SGD update, and running-statistics
/// update (momentum 0.1, unbiased batch variance).
pub fn train_step<S: Scalar>(
    model: &ParamVector<S>,
    batch: &Batch<S>,
    lr: S,
) -> Result<(ParamVector<S>, S)> {
    let cache = forward_cached(model, batch, true)?;
    let grad = backward(model, batch, &cache)?;
    let mut updated = sgd_step(model, &grad, lr)?;
    if let (Some(stats), Some(mean), Some(var)) = (
        updated.bn_stats.as_mut(),
        cache.batch_mean.as_ref(),
        cache.batch_var.as_ref(),
    ) {
        let n = batch.len();
        let momentum = S::from_f64_lossy(BN_MOMENTUM);
        let keep = S::one() - momentum;
        let correction = if n > 1 {
            S::from_f64_lossy(n as f64 / (n as f64 - 1.0))
        } else {
            S::one()
        };
        for (r, &m) in stats.running_mean.iter_mut().zip(mean) {
            *r = keep * *r + momentum * m;
        }
        for (r, &v) in stats.running_var.iter_mut().zip(var) {
            *r = keep * *r + momentum * (v * correction);
        }
    }
    Ok((updated, cache.loss))
}

/// Elementwise weighted sum of models sharing one architecture.
///
/// Running batch-norm statistics are combined with the same weights.
pub fn combine<S: Scalar>(terms: &[(S, &ParamVector<S>)]) -> Result<ParamVector<S>> {
    let (_, first) = terms
        .first()
        .ok_or_else(|| Error::InvalidInput("combine requires at least one term".into()))?;
    for (_, m) in terms {
        if m.arch != first.arch {
            return Err(Error::DimMismatch(
                "combine requires identical architectures".into(),
            ));
        }
    }
    let mut values = vec![S::zero(); first.values.len()];
    for (w, m) in terms {
        for (acc, &v) in values.iter_mut().zip(&m.values) {
            *acc += *w * v;
        }
    }
    let bn_stats = first.bn_stats.as_ref().map(|s| {
        let d = s.running_mean.len();
        let mut mean = vec![S::zero(); d];
        let mut var = vec![S::zero(); d];
        for (w, m) in terms {
            let stats = m.bn_stats.as_ref().expect("bn stats present");
            for (acc, &v) in mean.iter_mut().zip(&stats.running_mean) {
                *acc += *w * v;
            }
            for (acc, &v) in var.iter_mut().zip(&stats.running_var) {
                *acc += *w * v;
            }
        }
        BnStats {
            running_mean: mean,
            running_var: var,
        }
    });
    ParamVector::from_parts(first.arch.clone(), values, bn_stats)
}
