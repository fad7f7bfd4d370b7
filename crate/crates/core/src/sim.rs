//! Closed-loop execution of scripted movements and aggregation of their
//! metrics into the tuning objective.

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{ControlResult, ControllerConfig, MpcParams, SharedController};
use crate::error::{Error, Result};
use crate::metrics::{
    curvature_change, evaluate_metrics, normalized_objective, MetricSettings, MetricVector, MetricWeights,
    NormalizationSpec, Sample, Trajectory,
};
use crate::robot::{sphere_centers, step_kinematics, JointConfig, RobotGeometry, RobotState, N_SPHERES};
use crate::scenarios::{Movement, MovementSet};
use crate::world::{EnvironmentSpec, Esdf};

/// Environment, its distance field and the robot geometry, shared read-only
/// by every controller instance.
#[derive(Debug, Clone)]
pub struct Scene {
    pub environment: EnvironmentSpec,
    pub esdf: Arc<Esdf>,
    pub geometry: Arc<RobotGeometry>,
}

impl Scene {
    pub fn new(environment: EnvironmentSpec, geometry: RobotGeometry) -> Result<Self> {
        geometry.validate()?;
        let esdf = Esdf::build(&environment.rasterize()?)?;
        Ok(Self { environment, esdf: Arc::new(esdf), geometry: Arc::new(geometry) })
    }

    pub fn builtin(name: &str) -> Result<Self> {
        Self::new(EnvironmentSpec::builtin(name)?, RobotGeometry::default())
    }

    pub fn sphere_distances(&self, q: &JointConfig) -> [f64; N_SPHERES] {
        let centers = sphere_centers(q, &self.geometry);
        std::array::from_fn(|m| self.esdf.signed_distance(centers[m]))
    }
}

/// Source of the per-solve computation times that enter the metrics.
pub trait SolveClock: Send + Sync {
    /// Seconds charged for a solve that took `wall` seconds of real time.
    fn solve_time(&self, wall: f64, result: &ControlResult, params: &MpcParams) -> f64;
}

/// Real elapsed time.
#[derive(Debug, Clone, Copy, Default)]
pub struct WallClock;

impl SolveClock for WallClock {
    fn solve_time(&self, wall: f64, _: &ControlResult, _: &MpcParams) -> f64 {
        wall
    }
}

/// Deterministic cost model: a fixed price per sphere distance query, so
/// computation time scales with solver work and horizon length.
#[derive(Debug, Clone, Copy)]
pub struct WorkModelClock {
    pub seconds_per_query: f64,
}

impl SolveClock for WorkModelClock {
    fn solve_time(&self, _: f64, result: &ControlResult, params: &MpcParams) -> f64 {
        (result.evaluations * params.np * N_SPHERES) as f64 * self.seconds_per_query
    }
}

/// Serializable clock choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClockSpec {
    Wall,
    WorkModel { seconds_per_query: f64 },
}

impl Default for ClockSpec {
    fn default() -> Self {
        ClockSpec::WorkModel { seconds_per_query: 1e-7 }
    }
}

impl ClockSpec {
    pub fn build(&self) -> Box<dyn SolveClock> {
        match *self {
            ClockSpec::Wall => Box::new(WallClock),
            ClockSpec::WorkModel { seconds_per_query } => Box::new(WorkModelClock { seconds_per_query }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub controller: ControllerConfig,
    pub metrics: MetricSettings,
    pub weights: MetricWeights,
    pub normalization: NormalizationSpec,
    pub clock: ClockSpec,
    /// Objective assigned to a parameter set with any failed movement.
    pub failure_penalty: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            controller: ControllerConfig::default(),
            metrics: MetricSettings::default(),
            weights: MetricWeights::default(),
            normalization: NormalizationSpec::default(),
            clock: ClockSpec::default(),
            failure_penalty: 1.0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.controller.validate()?;
        self.weights.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub final_state: RobotState,
    pub success: bool,
    pub infeasible_count: usize,
    pub infeasible_fraction: f64,
    /// Smallest sphere distance over every visited state, the final one included.
    pub min_sd: f64,
    /// Solves whose roll-out left the map.
    pub out_of_map_count: usize,
}

/// Runs a movement with a fresh controller.
pub fn run_movement(
    mv: &Movement,
    params: &MpcParams,
    cfg: &EvalConfig,
    scene: &Scene,
    clock: &dyn SolveClock,
) -> Result<RunOutcome> {
    let mut ctl = SharedController::new(*params, cfg.controller.clone(), scene.geometry.clone(), scene.esdf.clone())?;
    let state = RobotState::from_joints(mv.initial, &scene.geometry);
    Ok(run_with_controller(mv, &mut ctl, state, cfg, scene, clock))
}

pub(crate) fn run_with_controller(
    mv: &Movement,
    ctl: &mut SharedController,
    mut state: RobotState,
    cfg: &EvalConfig,
    scene: &Scene,
    clock: &dyn SolveClock,
) -> RunOutcome {
    let ts = cfg.controller.ts;
    let n = mv.ticks(ts);
    let params = *ctl.params();
    let mut samples = Vec::with_capacity(n);
    let mut infeasible = 0;
    let mut out_of_map = 0;
    let mut min_sd = f64::INFINITY;
    for k in 0..n {
        let t = k as f64 * ts;
        let xd = mv.twist_at(t);
        let distances = scene.sphere_distances(&state.joints);
        let start = Instant::now();
        let r = ctl.step(&state, xd);
        let wall = start.elapsed().as_secs_f64();
        if !r.feasible {
            infeasible += 1;
        }
        if r.out_of_map {
            out_of_map += 1;
        }
        min_sd = distances.iter().copied().fold(min_sd, f64::min);
        samples.push(Sample {
            t,
            state,
            u: r.u0,
            distances,
            solve_time: clock.solve_time(wall, &r, &params),
            feasible: r.feasible,
        });
        state = step_kinematics(&state, r.u0, ts, &scene.geometry);
    }
    min_sd = scene.sphere_distances(&state.joints).iter().copied().fold(min_sd, f64::min);
    let success = infeasible == 0 && min_sd >= scene.geometry.sphere_radius;
    RunOutcome {
        trajectory: Trajectory { samples, duration: n as f64 * ts },
        final_state: state,
        success,
        infeasible_count: infeasible,
        infeasible_fraction: if n == 0 { 0.0 } else { infeasible as f64 / n as f64 },
        min_sd,
        out_of_map_count: out_of_map,
    }
}

/// Per-movement record of an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementResult {
    pub movement: usize,
    pub metrics: MetricVector,
    pub objective: f64,
    pub success: bool,
    pub infeasible_fraction: f64,
    pub min_sd: f64,
    /// Too few fast samples to define curvature change.
    pub curvature_degenerate: bool,
    pub out_of_map_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub params: MpcParams,
    pub movements: Vec<MovementResult>,
    /// Mean per-movement objective, or the failure penalty.
    pub objective: f64,
    /// Mean per-movement objective regardless of failures.
    pub raw_objective: f64,
    pub n_succ: usize,
    pub feasible: bool,
    pub wall_time: f64,
}

impl EvalResult {
    pub fn metric_matrix(&self) -> Vec<MetricVector> {
        self.movements.iter().map(|m| m.metrics).collect()
    }

    pub fn mean_metrics(&self) -> MetricVector {
        let n = self.movements.len().max(1) as f64;
        let mut acc = [0.0; 6];
        for m in &self.movements {
            for (a, v) in acc.iter_mut().zip(m.metrics.to_array()) {
                *a += v / n;
            }
        }
        MetricVector::from_array(acc)
    }

    pub fn max_infeasible_fraction(&self) -> f64 {
        self.movements.iter().map(|m| m.infeasible_fraction).fold(0.0, f64::max)
    }

    pub fn min_sd(&self) -> f64 {
        self.movements.iter().map(|m| m.min_sd).fold(f64::INFINITY, f64::min)
    }
}

/// Evaluates a movement outcome into its per-movement record.
pub fn score_outcome(id: usize, outcome: &RunOutcome, cfg: &EvalConfig) -> Result<MovementResult> {
    let metrics = evaluate_metrics(&outcome.trajectory, &cfg.metrics)?;
    let objective = normalized_objective(&metrics, &cfg.weights, &cfg.normalization)?;
    Ok(MovementResult {
        movement: id,
        metrics,
        objective,
        success: outcome.success,
        infeasible_fraction: outcome.infeasible_fraction,
        min_sd: outcome.min_sd,
        curvature_degenerate: curvature_change(&outcome.trajectory, cfg.metrics.min_speed).degenerate,
        out_of_map_count: outcome.out_of_map_count,
    })
}

/// Combines per-movement records; the order of `movements` is kept.
pub fn aggregate(params: MpcParams, movements: Vec<MovementResult>, cfg: &EvalConfig, wall_time: f64) -> Result<EvalResult> {
    if movements.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let n_succ = movements.iter().filter(|m| m.success).count();
    let raw = movements.iter().map(|m| m.objective).sum::<f64>() / movements.len() as f64;
    let feasible = n_succ == movements.len();
    let objective = if feasible { raw } else { cfg.failure_penalty };
    Ok(EvalResult { params, movements, objective, raw_objective: raw, n_succ, feasible, wall_time })
}

/// Runs every movement of `set` (in parallel) and aggregates the objective.
pub fn evaluate_params(params: &MpcParams, set: &MovementSet, scene: &Scene, cfg: &EvalConfig) -> Result<EvalResult> {
    if set.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    params.validate()?;
    cfg.validate()?;
    let start = Instant::now();
    let clock = cfg.clock.build();
    let results: Result<Vec<MovementResult>> = set
        .movements
        .par_iter()
        .map(|mv| {
            let outcome = run_movement(mv, params, cfg, scene, clock.as_ref())?;
            score_outcome(mv.id, &outcome, cfg)
        })
        .collect();
    aggregate(*params, results?, cfg, start.elapsed().as_secs_f64())
}

#[derive(Serialize)]
struct LogRecord<'a> {
    params: &'a MpcParams,
    #[serde(flatten)]
    movement: &'a MovementResult,
}

/// Appends one JSON line per movement.
pub fn append_eval_log(path: &Path, result: &EvalResult) -> Result<()> {
    let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut buf = String::new();
    for m in &result.movements {
        buf.push_str(&serde_json::to_string(&LogRecord { params: &result.params, movement: m })?);
        buf.push('\n');
    }
    file.write_all(buf.as_bytes())?;
    Ok(())
}
