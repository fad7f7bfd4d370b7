use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::acquisition::{propose_next, AcquisitionSettings};
use super::gp::{FitSettings, GpModel, Hypers};
use super::space::ParamSpace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoConfig {
    pub n_init: usize,
    pub n_max: usize,
    pub seed: u64,
    pub acquisition: AcquisitionSettings,
    pub fit: FitSettings,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self { n_init: 8, n_max: 40, seed: 1, acquisition: AcquisitionSettings::default(), fit: FitSettings::default() }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_init < 2 {
            return Err(Error::InvalidConfig("n_init must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSource {
    /// Caller-supplied starting point (the hand-tuned parameters).
    Seeded,
    LatinHypercube,
    Acquisition,
}

/// What an evaluator reports for one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub objective: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Evaluation index, starting at 0 with the initial design.
    pub index: usize,
    pub source: PointSource,
    pub point: Vec<f64>,
    pub objective: f64,
    pub feasible: bool,
    /// Best objective so far, this evaluation included.
    pub incumbent: f64,
    /// Surrogate that proposed the point.
    pub hypers: Option<Hypers>,
    pub ei: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub history: Vec<IterationRecord>,
    pub best_point: Vec<f64>,
    pub best_objective: f64,
}

impl OptResult {
    pub fn incumbents(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.incumbent).collect()
    }
}

/// The loop stopped because the evaluator failed; `history` holds every
/// completed evaluation.
#[derive(Debug)]
pub struct Aborted {
    pub error: Error,
    pub history: Vec<IterationRecord>,
}

impl std::fmt::Display for Aborted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "optimization aborted after {} evaluations: {}", self.history.len(), self.error)
    }
}

impl std::error::Error for Aborted {}

impl From<Aborted> for Error {
    fn from(a: Aborted) -> Self {
        Error::Evaluator(a.to_string())
    }
}

/// Latin hypercube sample of `n` points in the unit cube.
pub fn latin_hypercube<R: Rng>(n: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; d]; n];
    for j in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            strata.swap(i, rng.random_range(0..=i));
        }
        for (i, s) in strata.into_iter().enumerate() {
            pts[i][j] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs the initial design (`seeded` points, then a Latin hypercube of
/// `n_init` points) and `n_max` acquisition iterations. Records in `resume`
/// whose index and point match the planned evaluation are reused instead of
/// calling `evaluate`. `on_record` sees every record as it is produced.
pub fn optimize<E, C>(
    cfg: &BoConfig,
    space: &ParamSpace,
    seeded: &[Vec<f64>],
    resume: &[IterationRecord],
    mut evaluate: E,
    mut on_record: C,
) -> std::result::Result<OptResult, Aborted>
where
    E: FnMut(&[f64]) -> Result<Observation>,
    C: FnMut(&IterationRecord),
{
    let mut history: Vec<IterationRecord> = Vec::new();
    if let Err(error) = cfg.validate() {
        return Err(Aborted { error, history });
    }
    let mut run = |point: Vec<f64>,
                   source: PointSource,
                   hypers: Option<Hypers>,
                   ei: Option<f64>,
                   history: &mut Vec<IterationRecord>|
     -> Result<()> {
        let index = history.len();
        let obs = match resume.get(index) {
            Some(r) if r.index == index && r.point == point => Observation { objective: r.objective, feasible: r.feasible },
            _ => evaluate(&point)?,
        };
        if !obs.objective.is_finite() {
            return Err(Error::Evaluator(format!("objective at evaluation {index} is not finite")));
        }
        let incumbent = history.last().map_or(obs.objective, |r| r.incumbent.min(obs.objective));
        let record = IterationRecord { index, source, point, objective: obs.objective, feasible: obs.feasible, incumbent, hypers, ei };
        on_record(&record);
        history.push(record);
        Ok(())
    };

    let mut init: Vec<(Vec<f64>, PointSource)> = seeded.iter().map(|p| (space.project(p), PointSource::Seeded)).collect();
    let mut rng = stream_rng(cfg.seed, 0);
    for u in latin_hypercube(cfg.n_init, space.len(), &mut rng) {
        init.push((space.project(&space.denormalize(&u)), PointSource::LatinHypercube));
    }
    for (p, source) in init {
        if let Err(error) = run(p, source, None, None, &mut history) {
            return Err(Aborted { error, history });
        }
    }

    for i in 0..cfg.n_max {
        let x: Vec<Vec<f64>> = history.iter().map(|r| space.normalize(&r.point)).collect();
        let y: Vec<f64> = history.iter().map(|r| r.objective).collect();
        let model = match GpModel::fit(x, &y, &cfg.fit, cfg.seed.wrapping_add(i as u64)) {
            Ok(m) => m,
            Err(error) => return Err(Aborted { error, history }),
        };
        let y_best = model.standardize(y.iter().copied().fold(f64::INFINITY, f64::min));
        let mut rng = stream_rng(cfg.seed, i as u64 + 1);
        let proposal = propose_next(&model, space, y_best, &cfg.acquisition, &mut rng);
        let hypers = Some(model.hypers().clone());
        if let Err(error) = run(proposal.point, PointSource::Acquisition, hypers, Some(proposal.ei), &mut history) {
            return Err(Aborted { error, history });
        }
    }

    let best = history
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective).then(a.index.cmp(&b.index)))
        .expect("initial design is non-empty");
    Ok(OptResult { best_point: best.point.clone(), best_objective: best.objective, history })
}
