//! Nonlinear MPC shared controller.
//!
//! Each control cycle minimizes, over joint-velocity sequences `U` of length
//! `Nc` (held at `U[Nc-1]` for the rest of the `Np`-step horizon),
//!
//! ```text
//! alpha * sum_{k<Nc} |J(q_k) u_k - xd|_Q^2  +  (1 - alpha) * sum_{k=1..Np} sum_m B(sd_m(q_k))
//! ```
//!
//! with `B(sd) = c1 / (1 + exp(c2 (sd - c3)))`, subject to joint position,
//! velocity, acceleration and jerk limits and an end-effector speed bound.
//! Velocity bounds are handled by projection; the remaining constraints by an
//! augmented-Lagrangian penalty schedule around a projected-gradient inner
//! solver with an analytic (adjoint) gradient.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::robot::{Frames, JointConfig, JointLimits, RobotGeometry, RobotState};
use crate::world::Esdf;

/// Reference twist `(vx, vy, omega)` for the end effector.
pub type Twist = [f64; 3];
/// Joint velocities `(q1', q2', q3')`.
pub type JointVelocity = [f64; 3];

/// The tunable controller parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcParams {
    /// Prediction horizon (steps).
    pub np: usize,
    /// Control horizon (steps).
    pub nc: usize,
    pub qx: f64,
    pub qy: f64,
    pub qtheta: f64,
    /// Obstacle penalty scale.
    pub c1: f64,
    /// Obstacle penalty steepness (1/m).
    pub c2: f64,
}

impl MpcParams {
    /// Hand-tuned reference set.
    pub const fn baseline() -> Self {
        Self { np: 25, nc: 13, qx: 1.0, qy: 1.0, qtheta: 1.0, c1: 5.0, c2: 20.0 }
    }

    pub fn weights(&self) -> [f64; 3] {
        [self.qx, self.qy, self.qtheta]
    }

    pub fn validate(&self) -> Result<()> {
        if self.nc < 1 || self.np < self.nc {
            return Err(Error::InvalidParams(format!(
                "horizons must satisfy Np >= Nc >= 1, got Np = {}, Nc = {}",
                self.np, self.nc
            )));
        }
        for (name, v) in [("qx", self.qx), ("qy", self.qy), ("qtheta", self.qtheta), ("c1", self.c1), ("c2", self.c2)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    /// Tolerance on the projected velocity bounds.
    pub bound_tolerance: f64,
    /// Tolerance on the normalized residual of the penalized constraints.
    pub residual_tolerance: f64,
    /// Inner loop stops once the projected-gradient step falls below this.
    pub stationarity_tolerance: f64,
    /// Relative back-off applied to the penalized limits inside the solver so
    /// that near-converged iterates satisfy the true limits.
    pub constraint_margin: f64,
    /// Extra outer iterations allowed while no feasible sequence has been found.
    pub recovery_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_outer_iterations: 8,
            max_inner_iterations: 30,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e6,
            bound_tolerance: 1e-6,
            residual_tolerance: 1e-4,
            stationarity_tolerance: 1e-7,
            constraint_margin: 0.02,
            recovery_iterations: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Blending between reference tracking (1) and obstacle avoidance (0).
    pub alpha: f64,
    /// Sample time (s).
    pub ts: f64,
    /// Penalty midpoint (m); equal to the collision sphere radius.
    pub c3: f64,
    pub limits: JointLimits,
    pub solver: SolverSettings,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self { alpha: 0.5, ts: 0.05, c3: 0.4, limits: JointLimits::default(), solver: SolverSettings::default() }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.ts > 0.0) {
            return Err(Error::InvalidConfig("sample time must be positive".into()));
        }
        if !(self.c3 > 0.0) {
            return Err(Error::InvalidConfig("c3 must be positive".into()));
        }
        self.limits.validate()
    }
}

/// The two most recently applied inputs; anchors the acceleration and jerk
/// constraints at the start of the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InputHistory {
    pub last: JointVelocity,
    pub before_last: JointVelocity,
}

impl InputHistory {
    pub fn push(&mut self, u: JointVelocity) {
        self.before_last = self.last;
        self.last = u;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlResult {
    /// Input to apply now.
    pub u0: JointVelocity,
    /// Optimized (or fallback) input sequence, `Nc` entries.
    pub inputs: Vec<JointVelocity>,
    pub feasible: bool,
    pub solve_iterations: usize,
    /// Number of cost/gradient evaluations, a proxy for computational work.
    pub evaluations: usize,
    pub cost: f64,
    /// Largest normalized constraint residual of the returned sequence.
    pub max_residual: f64,
    /// Some rolled-out sphere left the map and used a clamped distance query.
    pub out_of_map: bool,
}

/// `|J(q) u - xd|_Q^2`.
pub fn tracking_cost(joints: &JointConfig, u: JointVelocity, xd: Twist, weights: [f64; 3], geom: &RobotGeometry) -> f64 {
    let j = Frames::new(&joints.to_array(), geom).jacobian(geom);
    let v = crate::robot::mat_vec(&j, u);
    (0..3).map(|i| weights[i] * (v[i] - xd[i]).powi(2)).sum()
}

/// Sigmoid obstacle penalty `c1 / (1 + exp(c2 (sd - c3)))`.
#[inline]
pub fn obstacle_penalty(sd: f64, c1: f64, c2: f64, c3: f64) -> f64 {
    let z = (c2 * (sd - c3)).clamp(-500.0, 500.0);
    c1 / (1.0 + z.exp())
}

/// Penalty value and its derivative with respect to `sd`.
#[inline]
fn obstacle_penalty_with_slope(sd: f64, c1: f64, c2: f64, c3: f64) -> (f64, f64) {
    let z = (c2 * (sd - c3)).clamp(-500.0, 500.0);
    let s = 1.0 / (1.0 + z.exp());
    (c1 * s, -c1 * c2 * s * (1.0 - s))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonCost {
    pub value: f64,
    pub out_of_map: bool,
}

/// Effective input at horizon step `k` (move blocking after `Nc`); negative
/// steps come from the applied-input history.
#[inline]
fn effective_input(inputs: &[JointVelocity], hist: &InputHistory, k: isize) -> JointVelocity {
    match k {
        -1 => hist.last,
        k if k < -1 => hist.before_last,
        k => inputs[(k as usize).min(inputs.len() - 1)],
    }
}

/// Joint configurations `q_0..=q_Np` of the roll-out.
pub fn rollout(q0: &JointConfig, inputs: &[JointVelocity], np: usize, ts: f64) -> Vec<JointConfig> {
    let mut q = q0.to_array();
    let mut out = Vec::with_capacity(np + 1);
    out.push(*q0);
    for k in 0..np {
        let u = inputs[k.min(inputs.len() - 1)];
        for j in 0..3 {
            q[j] += ts * u[j];
        }
        out.push(JointConfig::from_array(q));
    }
    out
}

/// Blended horizon cost of an input sequence with `Nc` entries.
pub fn horizon_cost(
    x0: &RobotState,
    inputs: &[JointVelocity],
    xd: Twist,
    params: &MpcParams,
    cfg: &ControllerConfig,
    geom: &RobotGeometry,
    esdf: &Esdf,
) -> HorizonCost {
    let problem = Problem::new(x0.joints, xd, params, cfg, geom, esdf, InputHistory::default());
    let mut ws = Workspace::new(params.np, params.nc);
    let e = problem.evaluate(inputs, None, &mut ws, false);
    HorizonCost { value: e.cost, out_of_map: e.out_of_map }
}

/// Horizon cost together with its analytic gradient with respect to each input.
pub fn horizon_cost_gradient(
    x0: &RobotState,
    inputs: &[JointVelocity],
    xd: Twist,
    params: &MpcParams,
    cfg: &ControllerConfig,
    geom: &RobotGeometry,
    esdf: &Esdf,
) -> (f64, Vec<JointVelocity>) {
    let problem = Problem::new(x0.joints, xd, params, cfg, geom, esdf, InputHistory::default());
    let mut ws = Workspace::new(params.np, params.nc);
    let e = problem.evaluate(inputs, None, &mut ws, true);
    (e.cost, ws.grad_u.clone())
}

/// Constraint residuals of an input sequence, recomputed from scratch.
/// Physical excesses are in the limit's own units; `normalized` divides each
/// soft excess by its limit (positions by 1 m or 1 rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub velocity: f64,
    pub acceleration: f64,
    pub jerk: f64,
    pub position: f64,
    pub ee_speed: f64,
    pub normalized: f64,
}

impl ConstraintReport {
    pub fn satisfied(&self, settings: &SolverSettings) -> bool {
        self.velocity <= settings.bound_tolerance && self.normalized <= settings.residual_tolerance
    }
}

pub fn check_constraints(
    q0: &JointConfig,
    inputs: &[JointVelocity],
    hist: &InputHistory,
    np: usize,
    cfg: &ControllerConfig,
    geom: &RobotGeometry,
) -> ConstraintReport {
    let lim = &cfg.limits;
    let ts = cfg.ts;
    let nc = inputs.len();
    let mut r = ConstraintReport::default();
    let mut normalized: f64 = 0.0;
    for u in inputs {
        for j in 0..3 {
            r.velocity = r.velocity.max(u[j].abs() - lim.velocity_max[j]);
        }
    }
    for k in 0..nc as isize {
        let u = effective_input(inputs, hist, k);
        let u1 = effective_input(inputs, hist, k - 1);
        for j in 0..3 {
            let excess = ((u[j] - u1[j]) / ts).abs() - lim.acceleration_max[j];
            r.acceleration = r.acceleration.max(excess);
            normalized = normalized.max(excess / lim.acceleration_max[j]);
        }
    }
    for k in 0..=nc as isize {
        let u = effective_input(inputs, hist, k);
        let u1 = effective_input(inputs, hist, k - 1);
        let u2 = effective_input(inputs, hist, k - 2);
        for j in 0..3 {
            let excess = ((u[j] - 2.0 * u1[j] + u2[j]) / (ts * ts)).abs() - lim.jerk_max[j];
            r.jerk = r.jerk.max(excess);
            normalized = normalized.max(excess / lim.jerk_max[j]);
        }
    }
    let states = rollout(q0, inputs, np, ts);
    for (k, q) in states.iter().enumerate() {
        let qa = q.to_array();
        if k > 0 {
            for j in 0..3 {
                let excess = (qa[j] - lim.position_max[j]).max(lim.position_min[j] - qa[j]);
                r.position = r.position.max(excess);
                normalized = normalized.max(excess);
            }
        }
        if k < np {
            let u = inputs[k.min(nc - 1)];
            let jac = Frames::new(&qa, geom).jacobian(geom);
            let v = crate::robot::mat_vec(&jac, u);
            let excess = v[0].hypot(v[1]) - lim.ee_speed_max;
            r.ee_speed = r.ee_speed.max(excess);
            normalized = normalized.max(excess / lim.ee_speed_max);
        }
    }
    r.normalized = normalized.max(0.0);
    r.velocity = r.velocity.max(0.0);
    r.acceleration = r.acceleration.max(0.0);
    r.jerk = r.jerk.max(0.0);
    r.position = r.position.max(0.0);
    r.ee_speed = r.ee_speed.max(0.0);
    r
}

/// Scratch buffers reused across evaluations.
struct Workspace {
    q: Vec<[f64; 3]>,
    dq: Vec<[f64; 3]>,
    grad_ueff: Vec<[f64; 3]>,
    grad_u: Vec<[f64; 3]>,
    /// Constraint values (normalized, `<= 0` when satisfied).
    g: Vec<f64>,
}

impl Workspace {
    fn new(np: usize, nc: usize) -> Self {
        Self {
            q: vec![[0.0; 3]; np + 1],
            dq: vec![[0.0; 3]; np + 1],
            grad_ueff: vec![[0.0; 3]; np.max(nc + 1)],
            grad_u: vec![[0.0; 3]; nc],
            g: Vec::new(),
        }
    }
}

/// Augmented-Lagrangian state: one multiplier per scalar constraint.
struct Multipliers {
    lambda: Vec<f64>,
    rho: f64,
}

#[derive(Debug, Clone, Copy)]
struct Evaluation {
    /// Blended horizon cost.
    cost: f64,
    /// Cost plus augmented-Lagrangian terms (equal to `cost` without multipliers).
    merit: f64,
    out_of_map: bool,
}

struct Problem<'a> {
    q0: [f64; 3],
    /// Limits tightened by the solver margin.
    limits: JointLimits,
    xd: Twist,
    params: &'a MpcParams,
    cfg: &'a ControllerConfig,
    geom: &'a RobotGeometry,
    esdf: &'a Esdf,
    hist: InputHistory,
}

#[inline]
fn al_term(g: f64, lambda: f64, rho: f64) -> (f64, f64) {
    let t = lambda + rho * g;
    if t > 0.0 {
        (lambda * g + 0.5 * rho * g * g, t)
    } else {
        (-0.5 * lambda * lambda / rho, 0.0)
    }
}

impl<'a> Problem<'a> {
    fn new(
        q0: JointConfig,
        xd: Twist,
        params: &'a MpcParams,
        cfg: &'a ControllerConfig,
        geom: &'a RobotGeometry,
        esdf: &'a Esdf,
        hist: InputHistory,
    ) -> Self {
        let m = cfg.solver.constraint_margin;
        let mut limits = cfg.limits;
        limits.ee_speed_max *= 1.0 - m;
        for j in 0..3 {
            limits.acceleration_max[j] *= 1.0 - m;
            limits.jerk_max[j] *= 1.0 - m;
            limits.position_min[j] += m;
            limits.position_max[j] -= m;
        }
        Self { q0: q0.to_array(), limits, xd, params, cfg, geom, esdf, hist }
    }

    fn n_constraints(&self) -> usize {
        let (np, nc) = (self.params.np, self.params.nc);
        6 * nc + 6 * (nc + 1) + 6 * np + np
    }

    /// Evaluates cost (and merit when `mult` is given). With `with_grad`, the
    /// merit gradient is left in `ws.grad_u`; constraint values in `ws.g` are
    /// filled whenever `mult` is given.
    fn evaluate(&self, inputs: &[JointVelocity], mult: Option<&Multipliers>, ws: &mut Workspace, with_grad: bool) -> Evaluation {
        let np = self.params.np;
        let nc = self.params.nc;
        let ts = self.cfg.ts;
        let alpha = self.cfg.alpha;
        let weights = self.params.weights();
        let (c1, c2, c3) = (self.params.c1, self.params.c2, self.cfg.c3);
        let lim = &self.limits;
        let geom = self.geom;

        ws.q[0] = self.q0;
        for k in 0..np {
            let u = inputs[k.min(nc - 1)];
            for j in 0..3 {
                ws.q[k + 1][j] = ws.q[k][j] + ts * u[j];
            }
        }
        if with_grad {
            ws.dq.iter_mut().for_each(|d| *d = [0.0; 3]);
            ws.grad_ueff.iter_mut().for_each(|d| *d = [0.0; 3]);
        }
        if mult.is_some() {
            ws.g.clear();
        }

        let mut cost = 0.0;
        let mut al = 0.0;
        let mut out_of_map = false;
        let mut ci = 0usize;
        let vee2 = lim.ee_speed_max * lim.ee_speed_max;

        for k in 0..=np {
            let frames = Frames::new(&ws.q[k], geom);
            let need_jac = k < np;
            let jac = if need_jac { Some(frames.jacobian(geom)) } else { None };
            let djac = if need_jac && with_grad { Some(frames.jacobian_derivatives(geom)) } else { None };

            // Reference tracking.
            if k < nc {
                let u = inputs[k];
                let jac = jac.as_ref().unwrap();
                let v = crate::robot::mat_vec(jac, u);
                let r = [v[0] - self.xd[0], v[1] - self.xd[1], v[2] - self.xd[2]];
                cost += alpha * (0..3).map(|i| weights[i] * r[i] * r[i]).sum::<f64>();
                if with_grad {
                    let wr = [2.0 * alpha * weights[0] * r[0], 2.0 * alpha * weights[1] * r[1], 2.0 * alpha * weights[2] * r[2]];
                    for j in 0..3 {
                        ws.grad_ueff[k][j] += jac[0][j] * wr[0] + jac[1][j] * wr[1] + jac[2][j] * wr[2];
                    }
                    let dj = djac.as_ref().unwrap();
                    for (d, dq_idx) in [(0usize, 1usize), (1, 2)] {
                        let dv = crate::robot::mat_vec(&dj[d], u);
                        ws.dq[k][dq_idx] += dv[0] * wr[0] + dv[1] * wr[1] + dv[2] * wr[2];
                    }
                }
            }

            // Obstacle penalty on predicted states.
            if k >= 1 && alpha < 1.0 {
                let scale = 1.0 - alpha;
                for mount in &geom.spheres {
                    let c = frames.sphere_center(mount);
                    let query = self.esdf.query(c);
                    out_of_map |= query.out_of_map;
                    let (b, slope) = obstacle_penalty_with_slope(query.distance, c1, c2, c3);
                    cost += scale * b;
                    if with_grad && slope != 0.0 {
                        let sj = frames.sphere_jacobian(mount, geom);
                        let gs = [scale * slope * query.gradient[0], scale * slope * query.gradient[1]];
                        for j in 0..3 {
                            ws.dq[k][j] += gs[0] * sj[j][0] + gs[1] * sj[j][1];
                        }
                    }
                }
            }

            let Some(mult) = mult else { continue };

            // Joint position limits on predicted states.
            if k >= 1 {
                for j in 0..3 {
                    for (g, sign) in [(ws.q[k][j] - lim.position_max[j], 1.0), (lim.position_min[j] - ws.q[k][j], -1.0)] {
                        let (val, dval) = al_term(g, mult.lambda[ci], mult.rho);
                        ws.g.push(g);
                        al += val;
                        if with_grad {
                            ws.dq[k][j] += dval * sign;
                        }
                        ci += 1;
                    }
                }
            }

            // End-effector speed.
            if k < np {
                let u = inputs[k.min(nc - 1)];
                let jac = jac.as_ref().unwrap();
                let vx = jac[0][0] * u[0] + jac[0][1] * u[1] + jac[0][2] * u[2];
                let vy = jac[1][0] * u[0] + jac[1][1] * u[1] + jac[1][2] * u[2];
                let g = (vx * vx + vy * vy - vee2) / vee2;
                let (val, dval) = al_term(g, mult.lambda[ci], mult.rho);
                ws.g.push(g);
                al += val;
                if with_grad && dval != 0.0 {
                    let s = 2.0 * dval / vee2;
                    for j in 0..3 {
                        ws.grad_ueff[k][j] += s * (vx * jac[0][j] + vy * jac[1][j]);
                    }
                    let dj = djac.as_ref().unwrap();
                    for (d, dq_idx) in [(0usize, 1usize), (1, 2)] {
                        let dv = crate::robot::mat_vec(&dj[d], u);
                        ws.dq[k][dq_idx] += s * (vx * dv[0] + vy * dv[1]);
                    }
                }
                ci += 1;
            }
        }

        if let Some(mult) = mult {
            // Acceleration on successive inputs, anchored at the last applied input.
            for k in 0..nc {
                let u = inputs[k];
                let u1 = effective_input(inputs, &self.hist, k as isize - 1);
                for j in 0..3 {
                    let scale = 1.0 / (lim.acceleration_max[j] * ts);
                    let d = (u[j] - u1[j]) * scale;
                    for sign in [1.0, -1.0] {
                        let g = sign * d - 1.0;
                        let (val, dval) = al_term(g, mult.lambda[ci], mult.rho);
                        ws.g.push(g);
                        al += val;
                        if with_grad && dval != 0.0 {
                            ws.grad_ueff[k][j] += dval * sign * scale;
                            if k >= 1 {
                                ws.grad_ueff[k - 1][j] -= dval * sign * scale;
                            }
                        }
                        ci += 1;
                    }
                }
            }
            // Jerk on second differences, including the switch to the held input.
            for k in 0..=nc {
                let u = effective_input(inputs, &self.hist, k as isize);
                let u1 = effective_input(inputs, &self.hist, k as isize - 1);
                let u2 = effective_input(inputs, &self.hist, k as isize - 2);
                for j in 0..3 {
                    let scale = 1.0 / (lim.jerk_max[j] * ts * ts);
                    let d = (u[j] - 2.0 * u1[j] + u2[j]) * scale;
                    for sign in [1.0, -1.0] {
                        let g = sign * d - 1.0;
                        let (val, dval) = al_term(g, mult.lambda[ci], mult.rho);
                        ws.g.push(g);
                        al += val;
                        if with_grad && dval != 0.0 {
                            let s = dval * sign * scale;
                            ws.grad_ueff[k][j] += s;
                            if k >= 1 {
                                ws.grad_ueff[k - 1][j] -= 2.0 * s;
                            }
                            if k >= 2 {
                                ws.grad_ueff[k - 2][j] += s;
                            }
                        }
                        ci += 1;
                    }
                }
            }
            debug_assert_eq!(ci, self.n_constraints());
        }

        if with_grad {
            // Adjoint sweep: q_{k+1} = q_k + Ts u_k.
            let mut lam = ws.dq[np];
            for k in (0..np).rev() {
                for j in 0..3 {
                    ws.grad_ueff[k][j] += ts * lam[j];
                    lam[j] += ws.dq[k][j];
                }
            }
            ws.grad_u.iter_mut().for_each(|d| *d = [0.0; 3]);
            for (k, g) in ws.grad_ueff.iter().enumerate() {
                let idx = k.min(nc - 1);
                for j in 0..3 {
                    ws.grad_u[idx][j] += g[j];
                }
            }
        }

        Evaluation { cost, merit: cost + al, out_of_map }
    }
}

fn project(inputs: &mut [JointVelocity], vmax: &[f64; 3]) {
    for u in inputs.iter_mut() {
        for j in 0..3 {
            u[j] = u[j].clamp(-vmax[j], vmax[j]);
        }
    }
}

struct Candidate {
    inputs: Vec<JointVelocity>,
    cost: f64,
    residual: f64,
    out_of_map: bool,
}

/// Solves one MPC cycle. Never fails: an unsolved problem is reported through
/// `feasible = false` with a fallback input.
#[allow(clippy::too_many_arguments)]
pub fn solve_mpc(
    x0: &RobotState,
    xd: Twist,
    params: &MpcParams,
    cfg: &ControllerConfig,
    geom: &RobotGeometry,
    esdf: &Esdf,
    warm_start: Option<&[JointVelocity]>,
    hist: &InputHistory,
) -> ControlResult {
    let nc = params.nc;
    let np = params.np;
    let settings = &cfg.solver;
    let vmax = cfg.limits.velocity_max;
    let problem = Problem::new(x0.joints, xd, params, cfg, geom, esdf, *hist);
    let mut ws = Workspace::new(np, nc);

    let warm: Option<Vec<JointVelocity>> = warm_start.filter(|w| w.len() == nc).map(|w| w.to_vec());
    let mut u: Vec<JointVelocity> = warm.clone().unwrap_or_else(|| vec![hist.last; nc]);
    project(&mut u, &vmax);

    let mut evaluations = 0usize;
    let mut iterations = 0usize;
    let mut best: Option<Candidate> = None;
    let consider = |inputs: &[JointVelocity], best: &mut Option<Candidate>, ws: &mut Workspace, evaluations: &mut usize| {
        let report = check_constraints(&x0.joints, inputs, hist, np, cfg, geom);
        if !report.satisfied(settings) {
            return false;
        }
        let e = problem.evaluate(inputs, None, ws, false);
        *evaluations += 1;
        if best.as_ref().is_none_or(|b| e.cost < b.cost) {
            *best = Some(Candidate { inputs: inputs.to_vec(), cost: e.cost, residual: report.normalized, out_of_map: e.out_of_map });
        }
        true
    };
    consider(&u, &mut best, &mut ws, &mut evaluations);

    let mut mult = Multipliers { lambda: vec![0.0; problem.n_constraints()], rho: settings.initial_penalty };
    let mut prev_violation = f64::INFINITY;
    let mut step = 1e-2;
    let mut trial = u.clone();
    let mut grad = vec![[0.0; 3]; nc];

    for outer in 0..settings.max_outer_iterations + settings.recovery_iterations {
        if outer >= settings.max_outer_iterations && best.is_some() {
            break;
        }
        let mut e = problem.evaluate(&u, Some(&mult), &mut ws, true);
        evaluations += 1;
        grad.copy_from_slice(&ws.grad_u);
        let mut stalls = 0;
        for _inner in 0..settings.max_inner_iterations {
            iterations += 1;
            // Projected-gradient stationarity measure.
            let mut pg: f64 = 0.0;
            for k in 0..nc {
                for j in 0..3 {
                    let p = (u[k][j] - grad[k][j]).clamp(-vmax[j], vmax[j]);
                    pg = pg.max((p - u[k][j]).abs());
                }
            }
            if pg < settings.stationarity_tolerance {
                break;
            }
            let mut accepted = false;
            let mut t = step;
            for _ in 0..40 {
                for k in 0..nc {
                    for j in 0..3 {
                        trial[k][j] = (u[k][j] - t * grad[k][j]).clamp(-vmax[j], vmax[j]);
                    }
                }
                let decrease: f64 = (0..nc)
                    .map(|k| (0..3).map(|j| grad[k][j] * (trial[k][j] - u[k][j])).sum::<f64>())
                    .sum();
                let et = problem.evaluate(&trial, Some(&mult), &mut ws, true);
                evaluations += 1;
                if et.merit <= e.merit + 1e-4 * decrease {
                    // Barzilai-Borwein step for the next iteration.
                    let mut sy = 0.0;
                    let mut ss = 0.0;
                    for k in 0..nc {
                        for j in 0..3 {
                            let s = trial[k][j] - u[k][j];
                            let y = ws.grad_u[k][j] - grad[k][j];
                            sy += s * y;
                            ss += s * s;
                        }
                    }
                    step = if sy > 1e-300 { (ss / sy).clamp(1e-8, 1e2) } else { (t * 2.0).min(1e2) };
                    let improvement = e.merit - et.merit;
                    u.copy_from_slice(&trial);
                    grad.copy_from_slice(&ws.grad_u);
                    if improvement <= 1e-13 * (1.0 + e.merit.abs()) {
                        stalls += 1;
                    } else {
                        stalls = 0;
                    }
                    e = et;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted || stalls >= 3 {
                break;
            }
        }

        let violation = ws_violation(&problem, &u, &mult, &mut ws);
        evaluations += 1;
        let feasible = consider(&u, &mut best, &mut ws, &mut evaluations);
        if feasible || violation <= 0.5 * settings.residual_tolerance {
            break;
        }
        for (l, g) in mult.lambda.iter_mut().zip(ws.g.iter()) {
            *l = (*l + mult.rho * g).max(0.0);
        }
        if violation > 0.25 * prev_violation {
            mult.rho = (mult.rho * settings.penalty_growth).min(settings.max_penalty);
        }
        prev_violation = violation;
    }

    match best {
        Some(c) => ControlResult {
            u0: c.inputs[0],
            inputs: c.inputs,
            feasible: true,
            solve_iterations: iterations,
            evaluations,
            cost: c.cost,
            max_residual: c.residual,
            out_of_map: c.out_of_map,
        },
        None => {
            let report = check_constraints(&x0.joints, &u, hist, np, cfg, geom);
            let e = problem.evaluate(&u, None, &mut ws, false);
            // Continue the previous plan; without one, hold the last input.
            let u0 = warm.as_ref().map_or(hist.last, |w| w[0]);
            ControlResult {
                u0,
                inputs: u,
                feasible: false,
                solve_iterations: iterations,
                evaluations: evaluations + 1,
                cost: e.cost,
                max_residual: report.normalized,
                out_of_map: e.out_of_map,
            }
        }
    }
}

/// Refreshes constraint values at `u` and returns the largest violation.
fn ws_violation(problem: &Problem<'_>, u: &[JointVelocity], mult: &Multipliers, ws: &mut Workspace) -> f64 {
    problem.evaluate(u, Some(mult), ws, false);
    ws.g.iter().fold(0.0f64, |m, &g| m.max(g))
}

/// Stateful controller instance: carries the warm start and input history
/// between control cycles. One instance per simulated movement or session.
#[derive(Debug, Clone)]
pub struct SharedController {
    params: MpcParams,
    cfg: ControllerConfig,
    geom: Arc<RobotGeometry>,
    esdf: Arc<Esdf>,
    plan: Option<Vec<JointVelocity>>,
    history: InputHistory,
}

impl SharedController {
    pub fn new(params: MpcParams, cfg: ControllerConfig, geom: Arc<RobotGeometry>, esdf: Arc<Esdf>) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        Ok(Self { params, cfg, geom, esdf, plan: None, history: InputHistory::default() })
    }

    pub fn params(&self) -> &MpcParams {
        &self.params
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn geometry(&self) -> &RobotGeometry {
        &self.geom
    }

    pub fn esdf(&self) -> &Esdf {
        &self.esdf
    }

    pub fn history(&self) -> &InputHistory {
        &self.history
    }

    /// Forget the warm start and input history (robot at rest).
    pub fn reset(&mut self) {
        self.plan = None;
        self.history = InputHistory::default();
    }

    pub fn set_params(&mut self, params: MpcParams) -> Result<()> {
        params.validate()?;
        self.params = params;
        self.reset();
        Ok(())
    }

    fn shifted_plan(&self) -> Option<Vec<JointVelocity>> {
        self.plan.as_ref().map(|p| {
            let mut s: Vec<JointVelocity> = p.iter().skip(1).copied().collect();
            s.push(*p.last().unwrap());
            s
        })
    }

    /// Solves one cycle and records the applied input. Infeasible solves apply
    /// the continuation of the last feasible plan.
    pub fn step(&mut self, state: &RobotState, xd: Twist) -> ControlResult {
        let warm = self.shifted_plan();
        let result = solve_mpc(state, xd, &self.params, &self.cfg, &self.geom, &self.esdf, warm.as_deref(), &self.history);
        if result.feasible {
            self.plan = Some(result.inputs.clone());
        } else {
            self.plan = warm;
        }
        self.history.push(result.u0);
        result
    }
}
