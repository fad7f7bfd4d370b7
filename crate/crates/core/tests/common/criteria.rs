//! One check per acceptance criterion. Each returns whether it passed and a
//! short measurement summary; the acceptance binary prints them and the
//! ordinary integration tests assert on the cheap ones.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use sctune::bayesopt::gp::JITTER;
use sctune::bayesopt::{expected_improvement, optimize, BoConfig, GpModel, Hypers, Observation, ParamDim, ParamKind, ParamSpace};
use sctune::config::Config;
use sctune::controller::{obstacle_penalty, MpcParams};
use sctune::metrics::{self, MetricSettings, Trajectory};
use sctune::report::compare;
use sctune::robot::{jacobian, JointConfig, RobotGeometry};
use sctune::scenarios::MovementSet;
use sctune::sim::{evaluate_params, run_movement};
use sctune::stats::{welch_t_test, Tail};
use sctune::teleop::{spawn, ClientMessage, Condition, EpisodeAction, ServerMessage, TeleopContext};
use sctune::world::Esdf;
use tungstenite::{Message, WebSocket};

use super::*;

pub struct Outcome {
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: String) -> Self {
        Self { passed, detail }
    }
}

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

pub fn esdf_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(11);
    let mut worst = 0.0f64;
    let mut diag = 0.0;
    for k in 0..10 {
        let res = 0.05;
        diag = res * 2f64.sqrt();
        let density = [0.02, 0.05, 0.1, 0.2, 0.4][k % 5];
        let g = random_grid(&mut r, 64, 64, res, density);
        let esdf = Esdf::build(&g).unwrap();
        let oracle = brute_force_esdf(&g);
        for (a, b) in esdf.distances().iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(worst <= diag && secs < 10.0, format!("max deviation {worst:.3e} m (limit {diag:.4} m), {secs:.2} s"))
}

pub fn jacobian_check() -> Outcome {
    let mut r = rng(12);
    let geom = RobotGeometry::default();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let q = [r.random_range(0.0..3.0), r.random_range(-3.2..3.2), r.random_range(-3.2..3.2)];
        let analytic = jacobian(&JointConfig::from_array(q), &geom);
        let fd = fd_jacobian(q, &geom, 1e-6);
        for i in 0..3 {
            for j in 0..3 {
                worst = worst.max((analytic[i][j] - fd[i][j]).abs());
            }
        }
    }
    Outcome::new(worst <= 1e-6, format!("max |analytic - FD| {worst:.2e} over 100 configurations"))
}

pub fn sigmoid_check() -> Outcome {
    let mut r = rng(13);
    let mut midpoint_exact = true;
    let mut monotone = true;
    for _ in 0..1000 {
        let c1 = r.random_range(0.1..50.0);
        let c2 = r.random_range(0.5..60.0);
        let c3 = r.random_range(0.1..1.0);
        midpoint_exact &= obstacle_penalty(c3, c1, c2, c3) == c1 / 2.0;
        // Pairs close enough that the penalty has not saturated.
        let a = c3 + r.random_range(-5.0..5.0) / c2;
        let b = a + r.random_range(1e-3..1.0) / c2;
        monotone &= obstacle_penalty(a, c1, c2, c3) > obstacle_penalty(b, c1, c2, c3);
    }
    Outcome::new(
        midpoint_exact && monotone,
        format!("B(c3) == c1/2 exactly: {midpoint_exact}; strictly decreasing on 1000 pairs: {monotone}"),
    )
}

pub fn metrics_oracle() -> Outcome {
    let mut r = rng(14);
    let s = MetricSettings::default();
    let mut worst = 0.0f64;
    let mut all = true;
    for k in 0..100 {
        let t = random_trajectory(&mut r, 20 + k * 3, 0.05);
        let m = metrics::evaluate_metrics(&t, &s).unwrap();
        let oracle = [
            naive_d_ob(&t),
            naive_t_ob(&t, s.d_safe),
            naive_f_ps(&t),
            naive_f_cc(&t, s.min_speed),
            naive_f_vs(&t, s.accel_zero_band),
            naive_t_c(&t),
        ];
        for (a, b) in m.to_array().iter().zip(oracle) {
            let err = (a - b).abs() / b.abs().max(1.0);
            worst = worst.max(err);
            all &= err <= 1e-9;
        }
    }
    let line = straight_line();
    let f_ps = metrics::path_smoothness(&line).unwrap();
    let f_cc = metrics::curvature_change(&line, s.min_speed);
    let f_vs = metrics::velocity_smoothness(&constant_acceleration(), s.accel_zero_band).unwrap();
    let analytic = f_ps == 0.0 && f_cc.value == 0.0 && !f_cc.degenerate && f_vs == 0.0;
    Outcome::new(
        all && analytic,
        format!("max relative error {worst:.2e} on 100 trajectories; line f_ps {f_ps}, f_cc {}; constant accel f_vs {f_vs}", f_cc.value),
    )
}

/// End effector moving along a line at a constant, exactly representable step.
pub fn straight_line() -> Trajectory {
    let samples = (0..40).map(|k| sample_at(k as f64 * 0.05, [k as f64 * 0.125, 0.5, 0.25], [0.0; 3], [1.0; 12], 1e-3)).collect();
    Trajectory { samples, duration: 2.0 }
}

pub fn constant_acceleration() -> Trajectory {
    let samples = (0..40)
        .map(|k| {
            let t = k as f64 * 0.05;
            let u = [0.3 * t, -0.2 * t, 0.7 * t];
            sample_at(t, [0.5 * t * t, 0.0, 0.0], u, [1.0; 12], 1e-3)
        })
        .collect();
    Trajectory { samples, duration: 2.0 }
}

pub fn gp_oracle() -> Outcome {
    let mut r = rng(15);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = r.random_range(2..=10);
        let d = r.random_range(1..=4);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random::<f64>()).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let h = Hypers {
            signal_var: r.random_range(0.2..3.0),
            length_scales: (0..d).map(|_| r.random_range(0.1..1.5)).collect(),
            noise_var: r.random_range(1e-3..0.1),
        };
        let model = GpModel::with_hypers(x.clone(), &y, h.clone()).unwrap();
        for _ in 0..5 {
            let xs: Vec<f64> = (0..d).map(|_| r.random::<f64>()).collect();
            let (m, v) = model.predict(&xs);
            let (mo, vo) = gp_direct(&x, &y, h.signal_var, &h.length_scales, h.noise_var + JITTER, &xs);
            worst = worst.max((m - mo).abs() / mo.abs().max(1.0)).max((v - vo).abs() / vo.abs().max(1.0));
        }
    }
    Outcome::new(worst <= 1e-8, format!("max deviation from direct inverse {worst:.2e} over 100 instances"))
}

pub fn ei_monte_carlo() -> Outcome {
    let mut r = rng(16);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let mu = r.random_range(-2.0..2.0);
        let sigma = r.random_range(0.05..2.0);
        let y_best = mu + sigma * r.random_range(-2.5..2.5);
        let ei = expected_improvement(mu, sigma, y_best);
        let mc = mc_expected_improvement(mu, sigma, y_best, 1_000_000, &mut r);
        worst = worst.max((ei - mc).abs() / mc);
    }
    Outcome::new(worst <= 1e-3, format!("max relative gap to 1e6-sample stratified MC {worst:.2e} over 50 cases"))
}

pub fn t_test_oracle() -> Outcome {
    let mut r = rng(17);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let na = r.random_range(2..30);
        let nb = r.random_range(2..30);
        let scale_a = r.random_range(0.01..5.0);
        let scale_b = r.random_range(0.01..5.0);
        let shift = r.random_range(-2.0..2.0);
        let a: Vec<f64> = (0..na).map(|_| r.random_range(-1.0..1.0) * scale_a).collect();
        let b: Vec<f64> = (0..nb).map(|_| shift + r.random_range(-1.0..1.0) * scale_b).collect();
        let tail = if r.random::<bool>() { Tail::Less } else { Tail::Greater };
        let got = welch_t_test(&a, &b, tail).unwrap().p;
        let (t, df) = welch_oracle(&a, &b);
        let expect = match tail {
            Tail::Less => quadrature_t_cdf(t, df),
            Tail::Greater => quadrature_t_cdf(-t, df),
        };
        worst = worst.max((got - expect).abs());
    }
    let same = [0.3, 0.9, 0.1, 0.5, 0.7];
    let p_same = welch_t_test(&same, &same, Tail::Less).unwrap().p;
    Outcome::new(worst <= 1e-6 && p_same == 0.5, format!("max |p - quadrature| {worst:.2e} on 50 datasets; identical samples p = {p_same}"))
}

/// Bowl over two continuous dimensions shaped like (Qx, Qy).
pub fn bo_sanity() -> Outcome {
    let start = Instant::now();
    let minimizer = [3.7, 6.2];
    let space = ParamSpace::new(vec![
        ParamDim::new("qx", 0.1, 10.0, ParamKind::Continuous),
        ParamDim::new("qy", 0.1, 10.0, ParamKind::Continuous),
    ])
    .unwrap();
    let mut distances = Vec::new();
    let mut evaluations = 0;
    for seed in 1..=10 {
        let cfg = BoConfig { n_init: 8, n_max: 25, seed, ..Default::default() };
        let res = optimize(
            &cfg,
            &space,
            &[],
            &[],
            |x| Ok(Observation { objective: (x[0] - minimizer[0]).powi(2) + (x[1] - minimizer[1]).powi(2), feasible: true }),
            |_| {},
        )
        .unwrap();
        evaluations = evaluations.max(res.history.len());
        distances.push((res.best_point[0] - minimizer[0]).hypot(res.best_point[1] - minimizer[1]));
    }
    distances.sort_by(f64::total_cmp);
    let median = 0.5 * (distances[4] + distances[5]);
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        median <= 0.1 && evaluations <= 50 && secs < 120.0,
        format!("median distance to minimizer {median:.4} after {evaluations} evaluations (worst {:.4}), {secs:.1} s", distances[9]),
    )
}

pub fn safety() -> Outcome {
    let start = Instant::now();
    let cfg = Config::default();
    let scene = cfg.scene().unwrap();
    let set = MovementSet::load(&data_path("corpus_seed1.json")).unwrap();
    let r = evaluate_params(&MpcParams::baseline(), &set, &scene, &cfg.eval).unwrap();
    let min_sd = r.movements.iter().map(|m| m.min_sd).fold(f64::INFINITY, f64::min);
    let max_t_ob = r.movements.iter().map(|m| m.metrics.t_ob).fold(0.0, f64::max);
    let infeasible = r.max_infeasible_fraction();
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        set.len() == 40 && min_sd >= 0.4 && max_t_ob == 0.0 && infeasible == 0.0 && secs < 600.0,
        format!("{} movements: min sd {min_sd:.4} m, max t_ob {max_t_ob} %, max infeasible fraction {infeasible}, {secs:.0} s", set.len()),
    )
}

pub fn end_to_end() -> Outcome {
    let start = Instant::now();
    let cfg = Config::default();
    let scene = cfg.scene().unwrap();
    let tuning = MovementSet::load(&data_path("corpus_seed1.json")).unwrap().truncated(8);
    let holdout = MovementSet::load(&data_path("holdout_seed2.json")).unwrap();
    let bo = BoConfig { n_max: 30, seed: 1, ..cfg.bo.clone() };
    let space = &cfg.space;
    let seeded = vec![space.from_params(&MpcParams::baseline()).unwrap()];
    let res = optimize(
        &bo,
        space,
        &seeded,
        &[],
        |x| {
            let r = evaluate_params(&space.to_params(x)?, &tuning, &scene, &cfg.eval)?;
            Ok(Observation { objective: r.objective, feasible: r.feasible })
        },
        |_| {},
    )
    .unwrap();
    let j_baseline_tuning = res.history[0].objective;
    let best = space.to_params(&res.best_point).unwrap();
    let (report, [base, opt]) = compare(["baseline", "optimized"], [&MpcParams::baseline(), &best], &holdout, &scene, &cfg.eval).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let no_regression = opt.n_succ >= base.n_succ
        && report.infeasible_fraction[1] <= report.infeasible_fraction[0]
        && opt.max_infeasible_fraction() <= base.max_infeasible_fraction()
        && opt.min_sd() >= scene.geometry.sphere_radius;
    let improvement = report.improvement();
    Outcome::new(
        res.best_objective <= j_baseline_tuning && report.objective[1] <= report.objective[0] && no_regression && improvement >= 0.05 && secs < 1800.0,
        format!(
            "tuning J {:.4} -> {:.4}; holdout J {:.4} -> {:.4} ({:.1}% better), succeeded {}/{} vs {}/{}, {secs:.0} s",
            j_baseline_tuning,
            res.best_objective,
            report.objective[0],
            report.objective[1],
            improvement * 100.0,
            base.n_succ,
            holdout.len(),
            opt.n_succ,
            holdout.len()
        ),
    )
}

fn read_frame<S: Read + Write>(ws: &mut WebSocket<S>) -> ServerMessage {
    loop {
        match ws.read().unwrap() {
            Message::Text(t) => return serde_json::from_str(&t).unwrap(),
            Message::Close(_) => panic!("server closed the connection"),
            _ => continue,
        }
    }
}

fn send<S: Read + Write>(ws: &mut WebSocket<S>, msg: &ClientMessage) {
    ws.send(Message::text(serde_json::to_string(msg).unwrap())).unwrap();
}

/// Drives a lockstep server with a corpus movement's operator twists and
/// compares every reported state with an offline simulation of the same
/// movement started at the teleop home pose.
pub fn teleop_replay() -> Outcome {
    let cfg = Config::default();
    let scene = cfg.scene().unwrap();
    let mut teleop = cfg.teleop.clone();
    teleop.lockstep = true;
    let ctx = Arc::new(TeleopContext {
        scene: scene.clone(),
        eval: cfg.eval.clone(),
        baseline: MpcParams::baseline(),
        optimized: MpcParams::baseline(),
        teleop: teleop.clone(),
    });
    let (addr, _server) = spawn("127.0.0.1:0", ctx).unwrap();

    let mut mv = MovementSet::load(&data_path("corpus_seed1.json")).unwrap().movements[0].clone();
    mv.initial = teleop.home;
    let clock = cfg.eval.clock.build();
    let sim = run_movement(&mv, &MpcParams::baseline(), &cfg.eval, &scene, clock.as_ref()).unwrap();
    let ts = cfg.eval.controller.ts;
    let n = mv.ticks(ts);

    let (mut ws, _) = tungstenite::connect(format!("ws://{addr}")).unwrap();
    send(&mut ws, &ClientMessage::Episode { action: EpisodeAction::Start, condition: Condition::Baseline });
    let mut worst = 0.0f64;
    for k in 0..n {
        let xd = mv.twist_at(k as f64 * ts);
        send(&mut ws, &ClientMessage::Cmd { vx: xd[0], vy: xd[1], omega: xd[2] });
        let ee = loop {
            match read_frame(&mut ws) {
                ServerMessage::State { ee, .. } => break ee,
                ServerMessage::Ack { .. } => continue,
                other => panic!("unexpected frame {other:?}"),
            }
        };
        let expect = if k + 1 < n { sim.trajectory.samples[k + 1].state.ee } else { sim.final_state.ee };
        worst = worst.max((ee[0] - expect.x).hypot(ee[1] - expect.y));
    }
    send(&mut ws, &ClientMessage::Episode { action: EpisodeAction::End, condition: Condition::Baseline });
    let objective = match read_frame(&mut ws) {
        ServerMessage::Metrics { objective, .. } => objective,
        other => panic!("expected metrics, got {other:?}"),
    };
    let _ = ws.close(None);
    let m = metrics::evaluate_metrics(&sim.trajectory, &cfg.eval.metrics).unwrap();
    let sim_objective = metrics::normalized_objective(&m, &cfg.eval.weights, &cfg.eval.normalization).unwrap();
    Outcome::new(
        worst <= 1e-6 && close(objective, sim_objective, 1e-12),
        format!("{n} ticks: max position deviation {worst:.2e} m; episode J {objective:.6} vs sim {sim_objective:.6}"),
    )
}
