//! The model family used by the filter and the evaluation probes: an
//! L2-regularized multinomial logistic classifier (the filtering adversary)
//! and an RBF-kernel classifier trained as kernel logistic regression (the
//! strong non-linear probe for the synthetic experiments).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Gradient-descent settings for both trainers.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub l2_penalty: f64,
    /// Stop once an accepted step improves the loss by less than this.
    pub convergence_tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 500,
            learning_rate: 0.1,
            l2_penalty: 1e-3,
            convergence_tolerance: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.l2_penalty >= 0.0) || !self.l2_penalty.is_finite() {
            return Err(Error::InvalidConfig("l2_penalty must be >= 0".into()));
        }
        if !(self.convergence_tolerance > 0.0) {
            return Err(Error::InvalidConfig(
                "convergence_tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Anything that maps a feature vector to a class index.
pub trait Classifier {
    fn predict(&self, x: &[f64]) -> Result<usize>;
    /// Expected feature dimensionality.
    fn dim(&self) -> usize;
}

/// Multinomial logistic classifier: class = argmax_c (weights_c . x + bias_c),
/// ties broken toward the lowest class index.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    weights: Matrix, // C x d
    bias: Vec<f64>,  // C
}

impl LinearModel {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(Error::InvalidDataset(format!(
                "{} weight rows but {} bias entries",
                weights.rows(),
                bias.len()
            )));
        }
        if let Some((row, col)) = weights.first_non_finite() {
            return Err(Error::NonFiniteFeature { row, col });
        }
        if bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite bias".into()));
        }
        Ok(LinearModel { weights, bias })
    }

    /// Constant predictor of a single class, expressed in the linear family
    /// (zero weights, one-hot bias).
    pub fn constant(class: usize, n_classes: usize, dim: usize) -> Self {
        let mut bias = vec![0.0; n_classes];
        bias[class] = 1.0;
        LinearModel {
            weights: Matrix::zeros(n_classes, dim),
            bias,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Per-class decision scores weights . x + bias.
    pub fn decision_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.weights.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.cols(),
                actual: x.len(),
            });
        }
        Ok((0..self.n_classes())
            .map(|c| {
                self.bias[c]
                    + self
                        .weights
                        .row(c)
                        .iter()
                        .zip(x)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
            })
            .collect())
    }
}

impl Classifier for LinearModel {
    fn predict(&self, x: &[f64]) -> Result<usize> {
        let scores = self.decision_scores(x)?;
        Ok(argmax(&scores))
    }

    fn dim(&self) -> usize {
        self.weights.cols()
    }
}

/// Index of the strictly largest value; the lowest index wins ties.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Binary RBF-kernel classifier with decision value
/// f(x) = sum_j alpha_j exp(-gamma ||x - s_j||^2) + intercept;
/// predicts class 1 iff f(x) > 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfModel {
    support_points: Matrix, // s x d
    dual_coefficients: Vec<f64>,
    intercept: f64,
    gamma: f64,
}

impl RbfModel {
    pub fn new(
        support_points: Matrix,
        dual_coefficients: Vec<f64>,
        intercept: f64,
        gamma: f64,
    ) -> Result<Self> {
        if support_points.rows() != dual_coefficients.len() {
            return Err(Error::InvalidDataset(format!(
                "{} support points but {} dual coefficients",
                support_points.rows(),
                dual_coefficients.len()
            )));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidConfig("gamma must be positive".into()));
        }
        if !intercept.is_finite() || dual_coefficients.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite model parameters".into()));
        }
        Ok(RbfModel {
            support_points,
            dual_coefficients,
            intercept,
            gamma,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn support_count(&self) -> usize {
        self.support_points.rows()
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if self.support_points.rows() > 0 && x.len() != self.support_points.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.support_points.cols(),
                actual: x.len(),
            });
        }
        let mut f = self.intercept;
        for (j, alpha) in self.dual_coefficients.iter().enumerate() {
            f += alpha * rbf_kernel(self.gamma, self.support_points.row(j), x);
        }
        Ok(f)
    }
}

impl Classifier for RbfModel {
    fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(if self.decision_value(x)? > 0.0 { 1 } else { 0 })
    }

    fn dim(&self) -> usize {
        self.support_points.cols()
    }
}

pub fn rbf_kernel(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * sq).exp()
}

/// 1 / (d * variance of all feature entries); the usual scale heuristic for
/// the kernel width when nothing better is known.
pub fn rbf_gamma_heuristic(features: &Matrix) -> f64 {
    let n = features.data().len();
    if n == 0 {
        return 1.0;
    }
    let mean = features.data().iter().sum::<f64>() / n as f64;
    let var = features
        .data()
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n as f64;
    if var > 0.0 && var.is_finite() {
        1.0 / (features.cols() as f64 * var)
    } else {
        1.0
    }
}

/// Mean 0/1 correctness of a classifier over an evaluation set.
pub fn accuracy<C: Classifier>(model: &C, features: &Matrix, labels: &[usize]) -> Result<f64> {
    if features.rows() == 0 || labels.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    if features.rows() != labels.len() {
        return Err(Error::Contract(format!(
            "{} feature rows but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let mut correct = 0usize;
    for (i, &y) in labels.iter().enumerate() {
        if model.predict(features.row(i))? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

/// L2-regularized multinomial logistic loss and its gradient.
///
/// Loss is mean cross-entropy plus `0.5 * l2 * ||W||^2` (bias unpenalized).
/// Exposed so tests can check the analytic gradient against central finite
/// differences.
pub fn logistic_loss_grad(
    weights: &Matrix,
    bias: &[f64],
    features: &Matrix,
    labels: &[usize],
    l2: f64,
) -> (f64, Matrix, Vec<f64>) {
    let c = bias.len();
    let d = weights.cols();
    let mut gw = vec![0.0; c * d];
    let mut gb = vec![0.0; c];
    let loss = loss_grad_flat(
        weights.data(),
        bias,
        c,
        d,
        features,
        labels,
        l2,
        &mut gw,
        &mut gb,
    );
    (loss, Matrix::from_flat(c, d, gw).unwrap(), gb)
}

/// Hot-path loss/gradient on flat parameter buffers. Scratch buffers are
/// caller-owned so the descent loop does not allocate.
#[allow(clippy::too_many_arguments)]
fn loss_grad_flat(
    w: &[f64],
    b: &[f64],
    c: usize,
    d: usize,
    features: &Matrix,
    labels: &[usize],
    l2: f64,
    gw: &mut [f64],
    gb: &mut [f64],
) -> f64 {
    let n = features.rows();
    gw.fill(0.0);
    gb.fill(0.0);
    let mut z = vec![0.0; c];
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let x = features.row(i);
        for k in 0..c {
            let wr = &w[k * d..(k + 1) * d];
            let mut s = b[k];
            for j in 0..d {
                s += wr[j] * x[j];
            }
            z[k] = s;
        }
        let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for v in z.iter_mut() {
            *v = (*v - zmax).exp();
            denom += *v;
        }
        loss -= (z[y] / denom).ln();
        for k in 0..c {
            let p = z[k] / denom;
            let g = p - if k == y { 1.0 } else { 0.0 };
            gb[k] += g;
            let gr = &mut gw[k * d..(k + 1) * d];
            for j in 0..d {
                gr[j] += g * x[j];
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    loss *= inv_n;
    for v in gb.iter_mut() {
        *v *= inv_n;
    }
    for (gi, wi) in gw.iter_mut().zip(w) {
        *gi = *gi * inv_n + l2 * wi;
    }
    loss + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
}

fn check_training_inputs(features: &Matrix, labels: &[usize]) -> Result<()> {
    if features.rows() == 0 {
        return Err(Error::InvalidDataset("no training instances".into()));
    }
    if features.rows() != labels.len() {
        return Err(Error::Contract(format!(
            "{} feature rows but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    if let Some((row, col)) = features.first_non_finite() {
        return Err(Error::NonFiniteFeature { row, col });
    }
    Ok(())
}

const MIN_STEP: f64 = 1e-20;
const STEP_GROWTH: f64 = 1.25;

/// Full-batch gradient descent with backtracking: a step is accepted only if
/// it does not increase the loss, so the loss is non-increasing across
/// accepted steps. Returns the final loss.
fn descend(
    params: &mut [f64],
    loss_grad: &mut dyn FnMut(&[f64], &mut [f64]) -> f64,
    config: &TrainConfig,
) -> f64 {
    let n = params.len();
    let mut grad = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial_grad = vec![0.0; n];
    let mut loss = loss_grad(params, &mut grad);
    let mut step = config.learning_rate;
    let max_step = config.learning_rate * 1e3;
    for _ in 0..config.max_epochs {
        let mut accepted = false;
        while step > MIN_STEP {
            for i in 0..n {
                trial[i] = params[i] - step * grad[i];
            }
            let trial_loss = loss_grad(&trial, &mut trial_grad);
            if trial_loss.is_finite() && trial_loss <= loss {
                let improvement = loss - trial_loss;
                params.copy_from_slice(&trial);
                grad.copy_from_slice(&trial_grad);
                loss = trial_loss;
                step = (step * STEP_GROWTH).min(max_step);
                accepted = true;
                if improvement < config.convergence_tolerance {
                    return loss;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    loss
}

/// Trains the multinomial logistic classifier by full-batch gradient descent
/// until the loss improvement falls under the configured tolerance.
pub fn train_linear(
    features: &Matrix,
    labels: &[usize],
    config: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<LinearModel> {
    config.validate()?;
    check_training_inputs(features, labels)?;
    let first = labels[0];
    if labels.iter().all(|&y| y == first) {
        return Err(Error::DegenerateTraining);
    }
    let c = labels.iter().copied().max().unwrap() + 1;
    let d = features.cols();

    // Small random init; the problem is convex, so this only breaks exact
    // ties while keeping runs reproducible per seed.
    let mut params = vec![0.0; c * d + c];
    for v in params.iter_mut().take(c * d) {
        let g: f64 = rng.sample(StandardNormal);
        *v = 0.01 * g;
    }

    let mut loss_grad = |p: &[f64], g: &mut [f64]| {
        let (w, b) = p.split_at(c * d);
        let (gw, gb) = g.split_at_mut(c * d);
        loss_grad_flat(w, b, c, d, features, labels, config.l2_penalty, gw, gb)
    };
    descend(&mut params, &mut loss_grad, config);

    let (w, b) = params.split_at(c * d);
    LinearModel::new(Matrix::from_flat(c, d, w.to_vec())?, b.to_vec())
}

/// Trains a binary RBF classifier as kernel logistic regression: minimizes
/// mean logistic loss plus `0.5 * reg * alpha' K alpha` over the dual
/// coefficients and intercept. If only one class is present the result is
/// the trivial constant predictor of that class.
pub fn train_rbf(
    features: &Matrix,
    labels: &[usize],
    gamma: f64,
    regularization: f64,
    rng: &mut impl Rng,
) -> Result<RbfModel> {
    check_training_inputs(features, labels)?;
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidConfig("gamma must be positive".into()));
    }
    if !(regularization > 0.0) || !regularization.is_finite() {
        return Err(Error::InvalidConfig("regularization must be positive".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::InvalidDataset(format!(
            "rbf classifier is binary, found label {bad}"
        )));
    }
    let n = features.rows();
    let first = labels[0];
    if labels.iter().all(|&y| y == first) {
        let intercept = if first == 1 { 1.0 } else { -1.0 };
        return RbfModel::new(Matrix::zeros(0, features.cols()), vec![], intercept, gamma);
    }

    // Symmetric Gram matrix.
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        gram[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let k = rbf_kernel(gamma, features.row(i), features.row(j));
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }

    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let inv_n = 1.0 / n as f64;
    let config = TrainConfig::default();

    let mut params = vec![0.0; n + 1];
    for v in params.iter_mut().take(n) {
        let g: f64 = rng.sample(StandardNormal);
        *v = 0.01 * g * inv_n;
    }

    let mut ka = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut loss_grad = |p: &[f64], g: &mut [f64]| {
        let (alpha, b) = (&p[..n], p[n]);
        // ka = K alpha
        for i in 0..n {
            let row = &gram[i * n..(i + 1) * n];
            let mut s = 0.0;
            for j in 0..n {
                s += row[j] * alpha[j];
            }
            ka[i] = s;
        }
        let mut loss = 0.0;
        let mut gb = 0.0;
        for i in 0..n {
            let f = ka[i] + b;
            // log(1 + exp(-s f)) with s = +-1, stable in both tails
            let sf = if y[i] > 0.5 { f } else { -f };
            loss += if sf < -35.0 { -sf } else { (-sf).exp().ln_1p() };
            let p1 = if f >= 0.0 {
                1.0 / (1.0 + (-f).exp())
            } else {
                let e = f.exp();
                e / (1.0 + e)
            };
            let resid = p1 - y[i];
            gb += resid;
            u[i] = resid * inv_n + regularization * alpha[i];
        }
        loss *= inv_n;
        loss += 0.5 * regularization * alpha.iter().zip(&ka).map(|(a, k)| a * k).sum::<f64>();
        // grad_alpha = K u
        for i in 0..n {
            let row = &gram[i * n..(i + 1) * n];
            let mut s = 0.0;
            for j in 0..n {
                s += row[j] * u[j];
            }
            g[i] = s;
        }
        g[n] = gb * inv_n;
        loss
    };
    descend(&mut params, &mut loss_grad, &config);

    let intercept = params[n];
    params.truncate(n);
    RbfModel::new(features.clone(), params, intercept, gamma)
}
