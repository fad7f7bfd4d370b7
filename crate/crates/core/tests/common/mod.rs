//! Independent reference implementations used by the integration and
//! acceptance tests. Written for clarity, not speed, and sharing no code with
//! the library beyond its public data types.
#![allow(dead_code)]

pub mod criteria;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sctune::metrics::{Sample, Trajectory};
use sctune::robot::{forward_kinematics, JointConfig, Pose, RobotGeometry, RobotState, N_SPHERES};
use sctune::world::OccupancyGrid;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- world

/// Random grid with roughly `density` occupied cells, at least one of each kind.
pub fn random_grid(r: &mut ChaCha8Rng, w: usize, h: usize, res: f64, density: f64) -> OccupancyGrid {
    let mut g = OccupancyGrid::new(w, h, res, [-1.0, 0.5]).unwrap();
    for j in 0..h {
        for i in 0..w {
            g.set_occupied(i, j, r.random::<f64>() < density);
        }
    }
    g.set_occupied(0, 0, true);
    g.set_occupied(w - 1, h - 1, false);
    g
}

/// Signed distance at each cell centre by scanning every cell: positive in
/// free cells (to the nearest occupied centre), negative in occupied cells
/// (to the nearest free centre).
pub fn brute_force_esdf(g: &OccupancyGrid) -> Vec<f64> {
    let (w, h, res) = (g.width(), g.height(), g.resolution());
    let mut out = vec![0.0; w * h];
    for j in 0..h {
        for i in 0..w {
            let occ = g.is_occupied(i, j);
            let mut best = f64::INFINITY;
            for jj in 0..h {
                for ii in 0..w {
                    if g.is_occupied(ii, jj) != occ {
                        let dx = ii as f64 - i as f64;
                        let dy = jj as f64 - j as f64;
                        best = best.min((dx * dx + dy * dy).sqrt());
                    }
                }
            }
            out[j * w + i] = if occ { -best * res } else { best * res };
        }
    }
    out
}

// ---------------------------------------------------------------- robot

/// Central-difference Jacobian of the end-effector pose (x, y, theta).
pub fn fd_jacobian(q: [f64; 3], geom: &RobotGeometry, h: f64) -> [[f64; 3]; 3] {
    let mut jac = [[0.0; 3]; 3];
    for c in 0..3 {
        let mut qp = q;
        let mut qm = q;
        qp[c] += h;
        qm[c] -= h;
        let p = forward_kinematics(&JointConfig::from_array(qp), geom).to_array();
        let m = forward_kinematics(&JointConfig::from_array(qm), geom).to_array();
        for r in 0..3 {
            jac[r][c] = (p[r] - m[r]) / (2.0 * h);
        }
    }
    jac
}

// ---------------------------------------------------------------- metrics

pub fn sample_at(t: f64, ee: [f64; 3], u: [f64; 3], distances: [f64; N_SPHERES], solve_time: f64) -> Sample {
    Sample {
        t,
        state: RobotState { ee: Pose { x: ee[0], y: ee[1], theta: ee[2] }, joints: JointConfig::default() },
        u,
        distances,
        solve_time,
        feasible: true,
    }
}

/// A random, reasonably smooth closed-loop-like trajectory on a uniform clock.
pub fn random_trajectory(r: &mut ChaCha8Rng, n: usize, ts: f64) -> Trajectory {
    let mut ee = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-3.0..3.0)];
    let mut v = [0.0f64; 3];
    let mut u = [0.0f64; 3];
    let base: f64 = r.random_range(0.2..1.5);
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let distances = std::array::from_fn(|_| base + r.random_range(-0.5..0.5));
        for uc in &mut u {
            // Held inputs give exactly zero acceleration now and then.
            if r.random::<f64>() >= 0.1 {
                *uc += r.random_range(-0.05..0.05);
            }
        }
        samples.push(sample_at(k as f64 * ts, ee, u, distances, r.random_range(1e-4..2e-2)));
        for vc in &mut v {
            *vc = 0.8 * *vc + r.random_range(-0.05..0.05);
        }
        if r.random::<f64>() < 0.05 {
            v = [0.0; 3];
        }
        ee = [ee[0] + ts * v[0], ee[1] + ts * v[1], ee[2] + ts * 3.0 * v[2]];
    }
    Trajectory { samples, duration: n as f64 * ts }
}

pub fn naive_d_ob(t: &Trajectory) -> f64 {
    let mut m = f64::INFINITY;
    for s in &t.samples {
        for d in s.distances {
            if d < m {
                m = d;
            }
        }
    }
    m
}

pub fn naive_t_ob(t: &Trajectory, d_safe: f64) -> f64 {
    let n = t.samples.len();
    let mut near = 0.0;
    for g in 0..n {
        let close = t.samples[g].distances.iter().any(|&d| d <= d_safe);
        if close {
            let end = if g + 1 < n { t.samples[g + 1].t } else { t.samples[0].t + t.duration };
            near += end - t.samples[g].t;
        }
    }
    100.0 * near / t.duration
}

pub fn naive_f_ps(t: &Trajectory) -> f64 {
    let p: Vec<(f64, f64)> = t.samples.iter().map(|s| (s.state.ee.x, s.state.ee.y)).collect();
    let mut len = 0.0;
    for g in 1..p.len() {
        len += ((p[g].0 - p[g - 1].0).powi(2) + (p[g].1 - p[g - 1].1).powi(2)).sqrt();
    }
    if len < 1e-9 {
        return 0.0;
    }
    let mut acc = 0.0;
    for g in 1..p.len() - 1 {
        // Second difference of the position sequence.
        let ax = p[g + 1].0 - 2.0 * p[g].0 + p[g - 1].0;
        let ay = p[g + 1].1 - 2.0 * p[g].1 + p[g - 1].1;
        acc += ax * ax + ay * ay;
    }
    acc / len
}

pub fn naive_f_cc(t: &Trajectory, min_speed: f64) -> f64 {
    let s = &t.samples;
    let mut kappa = Vec::new();
    for g in 0..s.len() - 1 {
        let dt = s[g + 1].t - s[g].t;
        let dx = s[g + 1].state.ee.x - s[g].state.ee.x;
        let dy = s[g + 1].state.ee.y - s[g].state.ee.y;
        let mut dth = s[g + 1].state.ee.theta - s[g].state.ee.theta;
        dth = dth.sin().atan2(dth.cos());
        let speed = (dx * dx + dy * dy).sqrt() / dt;
        kappa.push(if speed >= min_speed { Some((dth / dt / speed).abs()) } else { None });
    }
    if kappa.iter().flatten().count() < 3 {
        return 0.0;
    }
    let mut len = 0.0;
    for g in 1..s.len() {
        len += (s[g].state.ee.x - s[g - 1].state.ee.x).hypot(s[g].state.ee.y - s[g - 1].state.ee.y);
    }
    let mut change = 0.0;
    for g in 1..kappa.len() {
        if let (Some(a), Some(b)) = (kappa[g - 1], kappa[g]) {
            change += (b - a).abs();
        }
    }
    change / len
}

pub fn naive_f_vs(t: &Trajectory, band: f64) -> f64 {
    let s = &t.samples;
    let mut rates = 0.0;
    for j in 0..3 {
        let mut signs = Vec::new();
        for g in 1..s.len() {
            let a = (s[g].u[j] - s[g - 1].u[j]) / (s[g].t - s[g - 1].t);
            signs.push(if a > band {
                1i32
            } else if a < -band {
                -1
            } else {
                0
            });
        }
        let mut flips = 0;
        for g in 1..signs.len() {
            flips += (signs[g] - signs[g - 1]).abs();
        }
        rates += flips as f64 / (signs.len() - 1) as f64;
    }
    rates / 3.0
}

pub fn naive_t_c(t: &Trajectory) -> f64 {
    let mut sum = 0.0;
    for s in &t.samples {
        sum += s.solve_time * 1000.0;
    }
    sum / t.samples.len() as f64
}

// ---------------------------------------------------------------- GP

pub fn oracle_matern52(a: &[f64], b: &[f64], sf2: f64, ls: &[f64]) -> f64 {
    let mut r2 = 0.0;
    for k in 0..a.len() {
        r2 += ((a[k] - b[k]) / ls[k]).powi(2);
    }
    let r = r2.sqrt();
    let s5 = 5f64.sqrt() * r;
    sf2 * (1.0 + s5 + s5 * s5 / 3.0) * (-s5).exp()
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn invert(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
        a.swap(c, p);
        inv.swap(c, p);
        let d = a[c][c];
        for k in 0..n {
            a[c][k] /= d;
            inv[c][k] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                for k in 0..n {
                    a[r][k] -= f * a[c][k];
                    inv[r][k] -= f * inv[c][k];
                }
            }
        }
    }
    inv
}

/// Posterior mean and latent variance in output units, by explicit inversion
/// of the kernel matrix. `diag` is the total added to the kernel diagonal.
pub fn gp_direct(x: &[Vec<f64>], y: &[f64], sf2: f64, ls: &[f64], diag: f64, xs: &[f64]) -> (f64, f64) {
    let n = y.len();
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let std_y = (y.iter().map(|v| (v - mean_y).powi(2)).sum::<f64>() / n as f64).sqrt();
    let z: Vec<f64> = y.iter().map(|v| (v - mean_y) / std_y).collect();
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| oracle_matern52(&x[i], &x[j], sf2, ls) + if i == j { diag } else { 0.0 }).collect())
        .collect();
    let kinv = invert(k);
    let ks: Vec<f64> = x.iter().map(|xi| oracle_matern52(xi, xs, sf2, ls)).collect();
    let mut mean = 0.0;
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            mean += ks[i] * kinv[i][j] * z[j];
            quad += ks[i] * kinv[i][j] * ks[j];
        }
    }
    (mean_y + std_y * mean, std_y * std_y * (sf2 - quad).max(0.0))
}

/// Stratified Monte Carlo estimate of E[max(y_best - Y, 0)], Y ~ N(mu, sigma^2).
pub fn mc_expected_improvement(mu: f64, sigma: f64, y_best: f64, n: usize, r: &mut ChaCha8Rng) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let mut sum = 0.0;
    for i in 0..n {
        let u = (i as f64 + r.random::<f64>()) / n as f64;
        let z = std_normal.inverse_cdf(u.clamp(1e-300, 1.0 - 1e-16));
        sum += (y_best - (mu + sigma * z)).max(0.0);
    }
    sum / n as f64
}

// ---------------------------------------------------------------- statistics

fn t_pdf(x: f64, df: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let ln_norm = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    (ln_norm - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp()
}

/// Student-t CDF by composite Simpson quadrature of the density on [0, |t|].
pub fn quadrature_t_cdf(t: f64, df: f64) -> f64 {
    let a = t.abs();
    if a == 0.0 {
        return 0.5;
    }
    let n = 20_000;
    let h = a / n as f64;
    let mut s = t_pdf(0.0, df) + t_pdf(a, df);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * t_pdf(k as f64 * h, df);
    }
    let half = s * h / 3.0;
    if t > 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

/// Welch statistic and degrees of freedom, straight from the definitions.
pub fn welch_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
        (n, m, v)
    };
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let (sa, sb) = (va / na, vb / nb);
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    (t, df)
}
