use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gp::GpModel;
use super::space::{ParamKind, ParamSpace};

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement below `y_best` of a Gaussian with mean `mu` and
/// standard deviation `sigma`.
pub fn expected_improvement(mu: f64, sigma: f64, y_best: f64) -> f64 {
    if sigma < 1e-12 {
        return (y_best - mu).max(0.0);
    }
    let z = (y_best - mu) / sigma;
    ((y_best - mu) * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}

/// EI of the model at a unit-cube point, in standardized units.
pub fn ei_at(model: &GpModel, u: &[f64], y_best: f64) -> f64 {
    let (m, v) = model.predict_standardized(u);
    expected_improvement(m, v.sqrt(), y_best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionSettings {
    pub candidates: usize,
    pub refine: usize,
    /// Grid points per coordinate sweep for continuous dimensions.
    pub sweep_points: usize,
    pub sweeps: usize,
}

impl Default for AcquisitionSettings {
    fn default() -> Self {
        Self { candidates: 512, refine: 8, sweep_points: 21, sweeps: 3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    /// Chosen point in unit coordinates (already projected).
    pub unit: Vec<f64>,
    /// Chosen point in parameter units.
    pub point: Vec<f64>,
    pub ei: f64,
    /// Projected random candidates and their EI.
    pub candidates: Vec<Vec<f64>>,
    pub candidate_ei: Vec<f64>,
}

/// Coordinate-wise improvement of `u` over projected points.
fn coordinate_descent(model: &GpModel, space: &ParamSpace, mut u: Vec<f64>, mut best: f64, y_best: f64, s: &AcquisitionSettings) -> (Vec<f64>, f64) {
    for _ in 0..s.sweeps {
        let before = best;
        for (d, dim) in space.dims().iter().enumerate() {
            let values: Vec<f64> = match dim.kind {
                ParamKind::Integer => {
                    let lo = dim.lower.ceil() as i64;
                    let hi = dim.upper.floor() as i64;
                    (lo..=hi).map(|v| (v as f64 - dim.lower) / dim.range()).collect()
                }
                ParamKind::Continuous => {
                    let n = s.sweep_points.max(2);
                    let mut v: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
                    // Local refinement around the current value.
                    let h = 0.5 / (n - 1) as f64;
                    for k in 1..=4 {
                        let step = h * 0.5f64.powi(k - 1);
                        v.push((u[d] - step).clamp(0.0, 1.0));
                        v.push((u[d] + step).clamp(0.0, 1.0));
                    }
                    v
                }
            };
            for val in values {
                let mut trial = u.clone();
                trial[d] = val;
                let trial = space.project_unit(&trial);
                let e = ei_at(model, &trial, y_best);
                if e > best {
                    best = e;
                    u = trial;
                }
            }
        }
        if best <= before {
            break;
        }
    }
    (u, best)
}

/// Maximizes EI over the projected search space: random candidates, then
/// coordinate-wise refinement of the best few.
pub fn propose_next<R: Rng>(model: &GpModel, space: &ParamSpace, y_best: f64, settings: &AcquisitionSettings, rng: &mut R) -> Proposal {
    let d = space.len();
    let candidates: Vec<Vec<f64>> = (0..settings.candidates.max(1))
        .map(|_| space.project_unit(&(0..d).map(|_| rng.random::<f64>()).collect::<Vec<_>>()))
        .collect();
    let candidate_ei: Vec<f64> = candidates.iter().map(|u| ei_at(model, u, y_best)).collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidate_ei[b].total_cmp(&candidate_ei[a]).then(a.cmp(&b)));

    let mut best_u = candidates[order[0]].clone();
    let mut best_ei = candidate_ei[order[0]];
    for &i in order.iter().take(settings.refine) {
        let (u, e) = coordinate_descent(model, space, candidates[i].clone(), candidate_ei[i], y_best, settings);
        if e > best_ei {
            best_ei = e;
            best_u = u;
        }
    }
    let point = space.project(&space.denormalize(&best_u));
    Proposal { unit: best_u, point, ei: best_ei, candidates, candidate_ei }
}
