//! Linear SVM trained by Pegasos-style subgradient descent on standardized
//! features, with Platt sigmoid calibration of the margin.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ssmd::ModelFile;
use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SvmError {
    #[error("need at least two training points, got {0}")]
    TooFewPoints(usize),
    #[error("training labels contain only one class")]
    SingleClass,
    #[error("feature dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("labels must be +1 or -1, got {0}")]
    BadLabel(i8),
    #[error("non-finite feature value")]
    NonFinite,
    #[error("invalid SVM configuration: {0}")]
    BadConfig(&'static str),
    #[error("calibration needs both classes and matching lengths")]
    DegenerateCalibration,
    #[error("model file is missing or has a malformed `{0}` record")]
    BadRecord(&'static str),
}

pub type Result<T, E = SvmError> = std::result::Result<T, E>;

const MIN_SCALE: f64 = 1e-12;
const PROB_FLOOR: f64 = 1e-12;
const MAX_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmTrainConfig {
    pub lambda: f64,
    pub iterations: usize,
    pub seed: u64,
    pub nonnegative_weights: bool,
}

impl Default for SvmTrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            iterations: 10_000,
            seed: 0,
            nonnegative_weights: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_means: Vec<f64>,
    pub feature_scales: Vec<f64>,
    pub platt_a: f64,
    pub platt_b: f64,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn standardize(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(x.iter()
            .zip(&self.feature_means)
            .zip(&self.feature_scales)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(SvmError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Signed margin `w · standardize(x) + b`.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        let z = self.standardize(x)?;
        Ok(dot(&self.weights, &z) + self.bias)
    }

    /// Per-coordinate terms `w_i · standardize(x)_i` of the margin.
    pub fn contributions(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.standardize(x)?;
        Ok(z.iter().zip(&self.weights).map(|(z, w)| z * w).collect())
    }

    /// Calibrated probability of the positive class, strictly inside (0, 1).
    pub fn probability(&self, x: &[f64]) -> Result<f64> {
        Ok(self.probability_of_margin(self.decision(x)?))
    }

    pub fn probability_of_margin(&self, margin: f64) -> f64 {
        platt_probability(self.platt_a, self.platt_b, margin)
    }

    /// Fits the Platt sigmoid on (margin, label) pairs and stores it.
    pub fn calibrate(&mut self, margins: &[f64], labels: &[i8]) -> Result<()> {
        let (a, b) = fit_platt(margins, labels)?;
        self.platt_a = a;
        self.platt_b = b;
        Ok(())
    }

    pub fn to_file(&self) -> ModelFile {
        let mut f = ModelFile::default();
        f.push("w", Tensor::vector(self.weights.clone()));
        f.push("b", Tensor::vector(vec![self.bias]));
        f.push("means", Tensor::vector(self.feature_means.clone()));
        f.push("scales", Tensor::vector(self.feature_scales.clone()));
        f.push("platt_a", Tensor::vector(vec![self.platt_a]));
        f.push("platt_b", Tensor::vector(vec![self.platt_b]));
        f
    }

    pub fn from_file(f: &ModelFile) -> Result<Self> {
        let vec = |name: &'static str| f.get(name).map(|t| t.data().to_vec()).ok_or(SvmError::BadRecord(name));
        let scalar = |name: &'static str| match vec(name)?.as_slice() {
            [v] => Ok(*v),
            _ => Err(SvmError::BadRecord(name)),
        };
        let model = Self {
            weights: vec("w")?,
            bias: scalar("b")?,
            feature_means: vec("means")?,
            feature_scales: vec("scales")?,
            platt_a: scalar("platt_a")?,
            platt_b: scalar("platt_b")?,
        };
        if model.feature_means.len() != model.dim() {
            return Err(SvmError::BadRecord("means"));
        }
        if model.feature_scales.len() != model.dim() || model.feature_scales.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err(SvmError::BadRecord("scales"));
        }
        Ok(model)
    }
}

pub fn platt_probability(a: f64, b: f64, margin: f64) -> f64 {
    let z = a * margin + b;
    let p = if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    };
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// `λ/2 ‖w‖² + mean hinge` over already-standardized points.
pub fn hinge_objective(weights: &[f64], bias: f64, lambda: f64, z: &[Vec<f64>], y: &[f64]) -> f64 {
    let hinge: f64 = z
        .iter()
        .zip(y)
        .map(|(zi, yi)| (1.0 - yi * (dot(weights, zi) + bias)).max(0.0))
        .sum();
    0.5 * lambda * dot(weights, weights) + hinge / z.len() as f64
}

/// Population mean and standard deviation per coordinate; zero spread maps to scale 1.
pub fn standardization(points: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let dim = points[0].len();
    let n = points.len() as f64;
    let mut means = vec![0.0; dim];
    for p in points {
        for (m, v) in means.iter_mut().zip(p) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut scales = vec![0.0; dim];
    for p in points {
        for ((s, v), m) in scales.iter_mut().zip(p).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    for s in scales.iter_mut() {
        let sd = (*s / n).sqrt();
        *s = if sd > MIN_SCALE { sd } else { 1.0 };
    }
    (means, scales)
}

fn validate(points: &[(Vec<f64>, i8)]) -> Result<usize> {
    if points.len() < 2 {
        return Err(SvmError::TooFewPoints(points.len()));
    }
    let dim = points[0].0.len();
    let (mut pos, mut neg) = (false, false);
    for (x, y) in points {
        if x.len() != dim {
            return Err(SvmError::DimensionMismatch {
                expected: dim,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::NonFinite);
        }
        match y {
            1 => pos = true,
            -1 => neg = true,
            other => return Err(SvmError::BadLabel(*other)),
        }
    }
    if !(pos && neg) {
        return Err(SvmError::SingleClass);
    }
    Ok(dim)
}

/// Trains on (features, ±1) pairs. The returned model carries the default
/// sigmoid `a = −1, b = 0` until [`SvmModel::calibrate`] is called.
///
/// Steps follow η_t = 1/(λ t) on mini-batches of at most 64 points (the full
/// set when smaller), with the unregularized bias stepped alongside `w`. The
/// iterate with the lowest full objective is returned, so the result never
/// scores worse than the all-zero start.
pub fn svm_train(points: &[(Vec<f64>, i8)], cfg: &SvmTrainConfig) -> Result<SvmModel> {
    if !(cfg.lambda > 0.0 && cfg.lambda.is_finite()) {
        return Err(SvmError::BadConfig("lambda must be positive"));
    }
    if cfg.iterations == 0 {
        return Err(SvmError::BadConfig("iterations must be at least 1"));
    }
    let dim = validate(points)?;
    let raw: Vec<Vec<f64>> = points.iter().map(|(x, _)| x.clone()).collect();
    let (feature_means, feature_scales) = standardization(&raw);
    let z: Vec<Vec<f64>> = raw
        .iter()
        .map(|x| {
            x.iter()
                .zip(&feature_means)
                .zip(&feature_scales)
                .map(|((v, m), s)| (v - m) / s)
                .collect()
        })
        .collect();
    let y: Vec<f64> = points.iter().map(|(_, l)| f64::from(*l)).collect();

    let n = z.len();
    let batch = n.min(MAX_BATCH);
    let radius = 1.0 / cfg.lambda.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut best = (hinge_objective(&w, b, cfg.lambda, &z, &y), w.clone(), b);
    let mut step_w = vec![0.0; dim];
    let all: Vec<usize> = (0..n).collect();

    for t in 1..=cfg.iterations {
        let eta = 1.0 / (cfg.lambda * t as f64);
        let picked: Vec<usize> = if batch == n {
            all.clone()
        } else {
            sample(&mut rng, n, batch).into_vec()
        };
        step_w.iter_mut().for_each(|v| *v = 0.0);
        let mut step_b = 0.0;
        for &i in &picked {
            if y[i] * (dot(&w, &z[i]) + b) < 1.0 {
                for (s, zi) in step_w.iter_mut().zip(&z[i]) {
                    *s += y[i] * zi;
                }
                step_b += y[i];
            }
        }
        let k = picked.len() as f64;
        let shrink = 1.0 - eta * cfg.lambda;
        for (wv, s) in w.iter_mut().zip(&step_w) {
            *wv = shrink * *wv + eta / k * s;
        }
        b += eta / k * step_b;
        if cfg.nonnegative_weights {
            w.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        let norm = dot(&w, &w).sqrt();
        if norm > radius {
            w.iter_mut().for_each(|v| *v *= radius / norm);
        }
        let obj = hinge_objective(&w, b, cfg.lambda, &z, &y);
        if obj < best.0 {
            best = (obj, w.clone(), b);
        }
    }

    Ok(SvmModel {
        weights: best.1,
        bias: best.2,
        feature_means,
        feature_scales,
        platt_a: -1.0,
        platt_b: 0.0,
    })
}

/// Trains, then fits the Platt sigmoid on the training margins.
pub fn svm_train_calibrated(points: &[(Vec<f64>, i8)], cfg: &SvmTrainConfig) -> Result<SvmModel> {
    let mut model = svm_train(points, cfg)?;
    let margins = points
        .iter()
        .map(|(x, _)| model.decision(x))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<i8> = points.iter().map(|(_, y)| *y).collect();
    model.calibrate(&margins, &labels)?;
    Ok(model)
}

fn platt_targets(labels: &[i8]) -> Result<Vec<f64>> {
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.iter().filter(|&&l| l == -1).count() as f64;
    if pos == 0.0 || neg == 0.0 || pos + neg != labels.len() as f64 {
        return Err(SvmError::DegenerateCalibration);
    }
    let hi = (pos + 1.0) / (pos + 2.0);
    let lo = 1.0 / (neg + 2.0);
    Ok(labels.iter().map(|&l| if l == 1 { hi } else { lo }).collect())
}

/// Mean cross-entropy of the sigmoid against Platt's smoothed targets.
pub fn platt_loss(a: f64, b: f64, margins: &[f64], labels: &[i8]) -> Result<f64> {
    if margins.len() != labels.len() {
        return Err(SvmError::DegenerateCalibration);
    }
    let targets = platt_targets(labels)?;
    Ok(loss_with_targets(a, b, margins, &targets))
}

fn loss_with_targets(a: f64, b: f64, margins: &[f64], targets: &[f64]) -> f64 {
    // With z = a·m + b and p = 1/(1+e^z): −t ln p − (1−t) ln(1−p) = ln(1+e^z) − (1−t) z.
    let total: f64 = margins
        .iter()
        .zip(targets)
        .map(|(m, t)| {
            let z = a * m + b;
            let softplus = if z > 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            };
            softplus - (1.0 - t) * z
        })
        .sum();
    total / margins.len() as f64
}

/// Fits `p = 1/(1 + exp(a·m + b))` by projected gradient descent with
/// backtracking. `a` is kept ≤ 0 so probability never decreases with margin.
pub fn fit_platt(margins: &[f64], labels: &[i8]) -> Result<(f64, f64)> {
    if margins.len() != labels.len() || margins.iter().any(|m| !m.is_finite()) {
        return Err(SvmError::DegenerateCalibration);
    }
    let targets = platt_targets(labels)?;
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    let n = margins.len() as f64;

    let mut a = 0.0;
    let mut b = ((neg + 1.0) / (pos + 1.0)).ln();
    let mut loss = loss_with_targets(a, b, margins, &targets);
    let mut step: f64 = 1.0;
    for _ in 0..5_000 {
        let (mut ga, mut gb) = (0.0, 0.0);
        for (m, t) in margins.iter().zip(&targets) {
            // d/dz [ln(1+e^z) − (1−t) z] = (1 − p) − (1 − t) = t − p
            let p = 1.0 / (1.0 + (a * m + b).exp());
            let d = t - p;
            ga += d * m;
            gb += d;
        }
        ga /= n;
        gb /= n;
        if ga.hypot(gb) < 1e-12 {
            break;
        }
        step = (step * 2.0).min(1e6);
        loop {
            let na = (a - step * ga).min(0.0);
            let nb = b - step * gb;
            let nl = loss_with_targets(na, nb, margins, &targets);
            let moved = (a - na) * ga + (b - nb) * gb;
            if nl <= loss - 1e-4 * moved {
                a = na;
                b = nb;
                loss = nl;
                break;
            }
            step *= 0.5;
            if step < 1e-14 {
                return Ok((a, b));
            }
        }
    }
    Ok((a, b))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
