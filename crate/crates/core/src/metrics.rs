//! Safety, smoothness and efficiency metrics of a closed-loop trajectory, and
//! the weighted objective built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::robot::{RobotState, N_SPHERES};

/// One control cycle of a closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Simulation time at the start of the cycle (s).
    pub t: f64,
    /// State the controller saw.
    pub state: RobotState,
    /// Joint velocities applied during the cycle.
    pub u: [f64; 3],
    /// Signed distance of every collision-sphere center (m).
    pub distances: [f64; N_SPHERES],
    /// Time spent solving the MPC problem (s).
    pub solve_time: f64,
    pub feasible: bool,
}

impl Sample {
    pub fn min_distance(&self) -> f64 {
        self.distances.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// Total duration t_F (s); the run ends at `samples[0].t + duration`.
    pub duration: f64,
}

impl Trajectory {
    pub fn positions(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.samples.iter().map(|s| [s.state.ee.x, s.state.ee.y])
    }

    /// Total travelled end-effector path length.
    pub fn path_length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (w[1].state.ee.x - w[0].state.ee.x).hypot(w[1].state.ee.y - w[0].state.ee.y))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    /// Obstacle proximity (m).
    pub d_ob: f64,
    /// Time near obstacles (%).
    pub t_ob: f64,
    /// Path smoothness (m).
    pub f_ps: f64,
    /// Curvature change (rad/m).
    pub f_cc: f64,
    /// Velocity smoothness (zero-crossing rate).
    pub f_vs: f64,
    /// Average computation time (ms).
    #[serde(rename = "t_C")]
    pub t_c: f64,
}

impl MetricVector {
    pub const NAMES: [&'static str; 6] = ["d_ob", "t_ob", "f_ps", "f_cc", "f_vs", "t_C"];

    pub fn to_array(&self) -> [f64; 6] {
        [self.d_ob, self.t_ob, self.f_ps, self.f_cc, self.f_vs, self.t_c]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { d_ob: a[0], t_ob: a[1], f_ps: a[2], f_cc: a[3], f_vs: a[4], t_c: a[5] }
    }

    /// Whether a larger value of metric `h` is better (only obstacle proximity).
    pub fn higher_is_better(h: usize) -> bool {
        h == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights(pub [f64; 6]);

impl Default for MetricWeights {
    fn default() -> Self {
        Self([0.15, 0.30, 0.15, 0.25, 0.10, 0.05])
    }
}

impl MetricWeights {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidConfig("metric weights must be non-negative".into()));
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("metric weights must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

/// Reference scales mapping each metric onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationSpec {
    /// Clearance at or beyond which obstacle proximity costs nothing (m).
    pub d_ref: f64,
    pub t_ob_ref: f64,
    pub f_ps_ref: f64,
    pub f_cc_ref: f64,
    pub f_vs_ref: f64,
    /// ms
    pub t_c_ref: f64,
}

impl Default for NormalizationSpec {
    fn default() -> Self {
        Self { d_ref: 1.0, t_ob_ref: 100.0, f_ps_ref: 1e-4, f_cc_ref: 200.0, f_vs_ref: 2.0, t_c_ref: 200.0 }
    }
}

/// Settings shared by the metric computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricSettings {
    /// Clearance threshold for time-near-obstacles (m); the sphere radius.
    pub d_safe: f64,
    /// Below this linear speed (m/s) curvature is undefined and skipped.
    pub min_speed: f64,
    /// Accelerations with magnitude at or below this count as zero when
    /// taking signs for velocity smoothness.
    pub accel_zero_band: f64,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self { d_safe: 0.4, min_speed: 0.01, accel_zero_band: 1e-6 }
    }
}

fn require_samples(traj: &Trajectory, n: usize, metric: &str) -> Result<()> {
    if traj.samples.len() < n {
        return Err(Error::Metric(format!(
            "{metric} needs at least {n} samples, trajectory has {}",
            traj.samples.len()
        )));
    }
    Ok(())
}

pub fn obstacle_proximity(traj: &Trajectory) -> Result<f64> {
    require_samples(traj, 1, "obstacle proximity")?;
    Ok(traj.samples.iter().map(Sample::min_distance).fold(f64::INFINITY, f64::min))
}

/// Percentage of the run spent with any sphere within `d_safe` of an obstacle.
/// Each sample stands for the interval up to the next sample (or the end).
pub fn time_near_obstacles(traj: &Trajectory, d_safe: f64) -> Result<f64> {
    require_samples(traj, 1, "time near obstacles")?;
    if !(traj.duration > 0.0) {
        return Err(Error::Metric(format!("trajectory duration must be positive, got {}", traj.duration)));
    }
    let end = traj.samples[0].t + traj.duration;
    let mut near = 0.0;
    for (g, s) in traj.samples.iter().enumerate() {
        if s.min_distance() <= d_safe {
            let next = traj.samples.get(g + 1).map_or(end, |n| n.t);
            near += next - s.t;
        }
    }
    Ok((near / traj.duration * 100.0).clamp(0.0, 100.0))
}

/// Sum of squared changes between consecutive end-effector displacements,
/// divided by the travelled path length. Zero for a stationary run.
pub fn path_smoothness(traj: &Trajectory) -> Result<f64> {
    require_samples(traj, 3, "path smoothness")?;
    let p: Vec<[f64; 2]> = traj.positions().collect();
    let d: Vec<[f64; 2]> = p.windows(2).map(|w| [w[1][0] - w[0][0], w[1][1] - w[0][1]]).collect();
    let path: f64 = d.iter().map(|v| v[0].hypot(v[1])).sum();
    if path < 1e-9 {
        return Ok(0.0);
    }
    let sum: f64 = d.windows(2).map(|w| (w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sum();
    Ok(sum / path)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureChange {
    pub value: f64,
    /// Fewer than three samples were fast enough to define curvature.
    pub degenerate: bool,
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r > std::f64::consts::PI {
        r -= two_pi;
    } else if r < -std::f64::consts::PI {
        r += two_pi;
    }
    r
}

/// Integrated absolute change of `kappa = |omega / v|` per unit path length.
/// Velocities come from forward differences; samples slower than `min_speed`
/// are skipped and no change is accumulated across them.
pub fn curvature_change(traj: &Trajectory, min_speed: f64) -> CurvatureChange {
    let n = traj.samples.len();
    if n < 2 {
        return CurvatureChange { value: 0.0, degenerate: true };
    }
    let kappa: Vec<Option<f64>> = traj
        .samples
        .windows(2)
        .map(|w| {
            let dt = w[1].t - w[0].t;
            let (a, b) = (&w[0].state.ee, &w[1].state.ee);
            let v = (b.x - a.x).hypot(b.y - a.y) / dt;
            let omega = wrap_angle(b.theta - a.theta) / dt;
            (v >= min_speed).then(|| (omega / v).abs())
        })
        .collect();
    let usable = kappa.iter().filter(|k| k.is_some()).count();
    if usable < 3 {
        return CurvatureChange { value: 0.0, degenerate: true };
    }
    let path = traj.path_length();
    if path < 1e-9 {
        return CurvatureChange { value: 0.0, degenerate: true };
    }
    let total: f64 = kappa
        .windows(2)
        .filter_map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => Some((b - a).abs()),
            _ => None,
        })
        .sum();
    CurvatureChange { value: total / path, degenerate: false }
}

#[inline]
fn sign_with_band(a: f64, band: f64) -> f64 {
    if a > band {
        1.0
    } else if a < -band {
        -1.0
    } else {
        0.0
    }
}

/// Zero-crossing rate of joint accelerations, averaged over the three joints.
/// Each joint's rate is the mean of `|sign(a_g) - sign(a_{g-1})|` over the
/// available consecutive acceleration pairs.
pub fn velocity_smoothness(traj: &Trajectory, zero_band: f64) -> Result<f64> {
    require_samples(traj, 3, "velocity smoothness")?;
    let s = &traj.samples;
    let mut total = 0.0;
    for j in 0..3 {
        let signs: Vec<f64> = s
            .windows(2)
            .map(|w| sign_with_band((w[1].u[j] - w[0].u[j]) / (w[1].t - w[0].t), zero_band))
            .collect();
        let crossings: f64 = signs.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        total += crossings / (signs.len() - 1) as f64;
    }
    Ok(total / 3.0)
}

/// Mean solve time in milliseconds.
pub fn avg_computation_time(traj: &Trajectory) -> Result<f64> {
    require_samples(traj, 1, "computation time")?;
    let sum: f64 = traj.samples.iter().map(|s| s.solve_time).sum();
    Ok(sum / traj.samples.len() as f64 * 1000.0)
}

pub fn evaluate_metrics(traj: &Trajectory, settings: &MetricSettings) -> Result<MetricVector> {
    Ok(MetricVector {
        d_ob: obstacle_proximity(traj)?,
        t_ob: time_near_obstacles(traj, settings.d_safe)?,
        f_ps: path_smoothness(traj)?,
        f_cc: curvature_change(traj, settings.min_speed).value,
        f_vs: velocity_smoothness(traj, settings.accel_zero_band)?,
        t_c: avg_computation_time(traj)?,
    })
}

/// Per-metric costs in [0, 1]; obstacle proximity is flipped so that larger
/// clearance costs less.
pub fn normalized_costs(m: &MetricVector, norms: &NormalizationSpec) -> Result<[f64; 6]> {
    let values = m.to_array();
    if let Some(h) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Metric(format!("metric {} is not finite", MetricVector::NAMES[h])));
    }
    let clamp = |v: f64| v.clamp(0.0, 1.0);
    Ok([
        clamp((norms.d_ref - m.d_ob.min(norms.d_ref)) / norms.d_ref),
        clamp(m.t_ob / norms.t_ob_ref),
        clamp(m.f_ps / norms.f_ps_ref),
        clamp(m.f_cc / norms.f_cc_ref),
        clamp(m.f_vs / norms.f_vs_ref),
        clamp(m.t_c / norms.t_c_ref),
    ])
}

pub fn normalized_objective(m: &MetricVector, weights: &MetricWeights, norms: &NormalizationSpec) -> Result<f64> {
    let costs = normalized_costs(m, norms)?;
    Ok(costs.iter().zip(weights.0.iter()).map(|(c, w)| c * w).sum())
}
