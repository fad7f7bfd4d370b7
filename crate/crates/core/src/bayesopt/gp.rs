//! Gaussian-process surrogate with a Matérn 5/2 ARD kernel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal jitter added on top of the noise variance.
pub const JITTER: f64 = 1e-6;

const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypers {
    pub signal_var: f64,
    pub length_scales: Vec<f64>,
    pub noise_var: f64,
}

impl Hypers {
    pub fn isotropic(dim: usize, signal_var: f64, length_scale: f64, noise_var: f64) -> Self {
        Self { signal_var, length_scales: vec![length_scale; dim], noise_var }
    }
}

/// Box bounds of the likelihood search, in natural units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub signal_var: (f64, f64),
    pub length_scale: (f64, f64),
    pub noise_var: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        Self { signal_var: (1e-2, 1e2), length_scale: (1e-2, 10.0), noise_var: (1e-6, 1.0) }
    }
}

fn scaled_sq_dist(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).powi(2)).sum()
}

pub fn matern52(a: &[f64], b: &[f64], h: &Hypers) -> f64 {
    let r = scaled_sq_dist(a, b, &h.length_scales).sqrt();
    h.signal_var * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * (-SQRT5 * r).exp()
}

fn kernel_matrix(x: &[Vec<f64>], h: &Hypers) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = matern52(&x[i], &x[j], h);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += h.noise_var + JITTER;
    }
    k
}

/// Log marginal likelihood of standardized targets and its gradient with
/// respect to `(log sf2, log l_1..l_d, log sn2)`.
pub fn log_marginal_likelihood(x: &[Vec<f64>], y: &[f64], h: &Hypers) -> Option<(f64, Vec<f64>)> {
    let n = x.len();
    let d = h.length_scales.len();
    let k = kernel_matrix(x, h);
    let chol = Cholesky::new(k)?;
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let log_det: f64 = chol.l_dirty().diagonal().iter().take(n).map(|v| v.ln()).sum::<f64>() * 2.0;
    let lml = -0.5 * yv.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * std::f64::consts::TAU.ln();

    // W = alpha alpha^T - K^{-1}; dL/dtheta = 0.5 tr(W dK/dtheta).
    let kinv = chol.inverse();
    let w = &alpha * alpha.transpose() - kinv;
    let mut grad = vec![0.0; d + 2];
    for i in 0..n {
        for j in 0..n {
            let wij = w[(i, j)];
            let r2 = scaled_sq_dist(&x[i], &x[j], &h.length_scales);
            let r = r2.sqrt();
            let e = (-SQRT5 * r).exp();
            let kf = h.signal_var * (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * e;
            grad[0] += 0.5 * wij * kf;
            let common = h.signal_var * 5.0 / 3.0 * (1.0 + SQRT5 * r) * e;
            for (dd, l) in h.length_scales.iter().enumerate() {
                let s = (x[i][dd] - x[j][dd]) / l;
                grad[1 + dd] += 0.5 * wij * common * s * s;
            }
        }
        grad[d + 1] += 0.5 * w[(i, i)] * h.noise_var;
    }
    Some((lml, grad))
}

fn to_log(h: &Hypers) -> Vec<f64> {
    let mut t = vec![h.signal_var.ln()];
    t.extend(h.length_scales.iter().map(|l| l.ln()));
    t.push(h.noise_var.ln());
    t
}

fn from_log(t: &[f64]) -> Hypers {
    let d = t.len() - 2;
    Hypers {
        signal_var: t[0].exp(),
        length_scales: t[1..=d].iter().map(|v| v.exp()).collect(),
        noise_var: t[d + 1].exp(),
    }
}

fn log_bounds(b: &HyperBounds, d: usize) -> Vec<(f64, f64)> {
    let mut out = vec![(b.signal_var.0.ln(), b.signal_var.1.ln())];
    out.extend(std::iter::repeat_n((b.length_scale.0.ln(), b.length_scale.1.ln()), d));
    out.push((b.noise_var.0.ln(), b.noise_var.1.ln()));
    out
}

/// Projected gradient ascent with backtracking, in log space.
fn ascend(x: &[Vec<f64>], y: &[f64], start: Vec<f64>, bounds: &[(f64, f64)], iters: usize) -> Option<(f64, Vec<f64>)> {
    let clamp = |t: &mut Vec<f64>| {
        for (v, (lo, hi)) in t.iter_mut().zip(bounds) {
            *v = v.clamp(*lo, *hi);
        }
    };
    let mut t = start;
    clamp(&mut t);
    let (mut f, mut g) = log_marginal_likelihood(x, y, &from_log(&t))?;
    let mut step = 0.1;
    for _ in 0..iters {
        let mut improved = false;
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-8 {
            break;
        }
        while step > 1e-10 {
            let mut trial: Vec<f64> = t.iter().zip(&g).map(|(v, gi)| v + step * gi / gnorm.max(1.0)).collect();
            clamp(&mut trial);
            if let Some((ft, gt)) = log_marginal_likelihood(x, y, &from_log(&trial)) {
                if ft > f + 1e-12 {
                    let moved: f64 = trial.iter().zip(&t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    t = trial;
                    f = ft;
                    g = gt;
                    step = (step * 2.0).min(2.0);
                    improved = moved > 1e-9;
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Some((f, t))
}

/// Fitted GP in unit-cube inputs and standardized outputs; predictions are
/// reported back in the original output units.
#[derive(Debug, Clone)]
pub struct GpModel {
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y_std: f64,
    y: Vec<f64>,
    hypers: Hypers,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    lml: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSettings {
    pub restarts: usize,
    pub max_iterations: usize,
    pub bounds: HyperBounds,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self { restarts: 8, max_iterations: 200, bounds: HyperBounds::default() }
    }
}

fn standardize(y: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        (mean, 1.0, vec![0.0; y.len()])
    } else {
        (mean, std, y.iter().map(|v| (v - mean) / std).collect())
    }
}

impl GpModel {
    fn check_inputs(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
        if x.len() < 2 || x.len() != y.len() {
            return Err(Error::InvalidConfig(format!("GP needs at least 2 matching points, got {} inputs and {} targets", x.len(), y.len())));
        }
        let d = x[0].len();
        if d == 0 || x.iter().any(|p| p.len() != d) {
            return Err(Error::InvalidConfig("GP inputs must share a non-zero dimension".into()));
        }
        if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("GP data must be finite".into()));
        }
        Ok(d)
    }

    /// Conditions on the data with fixed hyperparameters.
    pub fn with_hypers(x: Vec<Vec<f64>>, y: &[f64], hypers: Hypers) -> Result<Self> {
        let d = Self::check_inputs(&x, y)?;
        if hypers.length_scales.len() != d {
            return Err(Error::InvalidConfig("length-scale count does not match input dimension".into()));
        }
        let (y_mean, y_std, ys) = standardize(y);
        let chol = Cholesky::new(kernel_matrix(&x, &hypers))
            .ok_or_else(|| Error::InvalidConfig("kernel matrix is not positive definite".into()))?;
        let alpha = chol.solve(&DVector::from_column_slice(&ys));
        let lml = log_marginal_likelihood(&x, &ys, &hypers).map_or(f64::NEG_INFINITY, |v| v.0);
        Ok(Self { x, y_mean, y_std, y: ys, hypers, chol, alpha, lml })
    }

    /// Maximum-likelihood fit from several seeded starts. Constant targets
    /// get fixed hyperparameters with a tiny signal and noise.
    pub fn fit(x: Vec<Vec<f64>>, y: &[f64], settings: &FitSettings, seed: u64) -> Result<Self> {
        let d = Self::check_inputs(&x, y)?;
        let (_, _, ys) = standardize(y);
        if ys.iter().all(|v| *v == 0.0) {
            return Self::with_hypers(x, y, Hypers::isotropic(d, 1e-6, 1.0, 1e-6));
        }
        let bounds = log_bounds(&settings.bounds, d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best: Option<(f64, Vec<f64>)> = None;
        for s in 0..settings.restarts.max(1) {
            let start = if s == 0 {
                to_log(&Hypers::isotropic(d, 1.0, 0.3, 1e-3))
            } else {
                bounds.iter().map(|(lo, hi)| rng.random_range(*lo..=*hi)).collect()
            };
            if let Some((f, t)) = ascend(&x, &ys, start, &bounds, settings.max_iterations) {
                if best.as_ref().is_none_or(|b| f > b.0) {
                    best = Some((f, t));
                }
            }
        }
        let (_, t) = best.ok_or_else(|| Error::InvalidConfig("no hyperparameter start gave a valid factorization".into()))?;
        Self::with_hypers(x, y, from_log(&t))
    }

    pub fn hypers(&self) -> &Hypers {
        &self.hypers
    }

    pub fn log_likelihood(&self) -> f64 {
        self.lml
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.x
    }

    /// Standardized training targets.
    pub fn standardized_targets(&self) -> &[f64] {
        &self.y
    }

    pub fn standardize(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_std
    }

    /// Posterior mean and latent variance in standardized units.
    pub fn predict_standardized(&self, x: &[f64]) -> (f64, f64) {
        let ks = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| matern52(xi, x, &self.hypers)));
        let mean = ks.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&ks).expect("triangular factor is invertible");
        let var = (self.hypers.signal_var - v.dot(&v)).max(0.0);
        (mean, var)
    }

    /// Posterior mean and latent (noise-free) variance in output units.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let (m, v) = self.predict_standardized(x);
        (self.y_mean + self.y_std * m, self.y_std * self.y_std * v)
    }
}
