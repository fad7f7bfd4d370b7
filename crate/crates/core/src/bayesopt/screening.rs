//! Morris elementary-effects screening.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::space::ParamSpace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MorrisConfig {
    /// Number of one-at-a-time trajectories.
    pub trajectories: usize,
    /// Grid levels per dimension.
    pub levels: usize,
    pub seed: u64,
}

impl Default for MorrisConfig {
    fn default() -> Self {
        Self { trajectories: 10, levels: 4, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub name: String,
    /// Mean absolute effect.
    pub mu_star: f64,
    pub mu: f64,
    /// Sample standard deviation of the effects.
    pub sigma: f64,
    pub effects: Vec<f64>,
}

/// Elementary effects per dimension. Each effect is the raw change of `f`
/// when one coordinate moves up by `delta = p / (2 (p - 1))` of its range.
pub fn elementary_effects<F>(space: &ParamSpace, cfg: &MorrisConfig, mut f: F) -> Result<Vec<EffectSummary>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if cfg.trajectories < 2 || cfg.levels < 2 {
        return Err(Error::InvalidConfig("screening needs at least 2 trajectories and 2 levels".into()));
    }
    let p = cfg.levels;
    let delta = p as f64 / (2.0 * (p - 1) as f64);
    let base_levels: Vec<f64> =
        (0..p).map(|l| l as f64 / (p - 1) as f64).filter(|v| v + delta <= 1.0 + 1e-12).collect();
    let d = space.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut effects = vec![Vec::with_capacity(cfg.trajectories); d];
    for _ in 0..cfg.trajectories {
        let mut u: Vec<f64> = (0..d).map(|_| base_levels[rng.random_range(0..base_levels.len())]).collect();
        let mut order: Vec<usize> = (0..d).collect();
        for i in (1..d).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut prev = f(&space.denormalize(&u))?;
        for &j in &order {
            u[j] = (u[j] + delta).min(1.0);
            let next = f(&space.denormalize(&u))?;
            effects[j].push(next - prev);
            prev = next;
        }
    }
    Ok(space
        .dims()
        .iter()
        .zip(effects)
        .map(|(dim, e)| {
            let n = e.len() as f64;
            let mu = e.iter().sum::<f64>() / n;
            let mu_star = e.iter().map(|v| v.abs()).sum::<f64>() / n;
            let sigma = (e.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            EffectSummary { name: dim.name.clone(), mu_star, mu, sigma, effects: e }
        })
        .collect())
}

/// Dimension names ordered by decreasing `mu_star`.
pub fn ranking(effects: &[EffectSummary]) -> Vec<String> {
    let mut v: Vec<&EffectSummary> = effects.iter().collect();
    v.sort_by(|a, b| b.mu_star.total_cmp(&a.mu_star));
    v.into_iter().map(|e| e.name.clone()).collect()
}
