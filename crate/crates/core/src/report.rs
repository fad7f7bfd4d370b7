//! Side-by-side comparison of two parameter sets on one corpus.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::controller::MpcParams;
use crate::error::{Error, Result};
use crate::metrics::MetricVector;
use crate::scenarios::MovementSet;
use crate::sim::{evaluate_params, EvalConfig, EvalResult, Scene};
use crate::stats::{mean_ci95, welch_t_test, Tail};

const UNITS: [&str; 6] = ["m", "%", "m", "rad/m", "-", "ms"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub name: String,
    pub unit: String,
    pub mean: [f64; 2],
    /// 95% confidence half-widths.
    pub half_width: [f64; 2],
    /// One-tailed p-value for "condition B is better than condition A".
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub labels: [String; 2],
    pub params: [MpcParams; 2],
    pub n_movements: usize,
    pub rows: Vec<MetricRow>,
    pub objective: [f64; 2],
    pub n_succ: [usize; 2],
    /// Mean per-movement fraction of infeasible solves.
    pub infeasible_fraction: [f64; 2],
    pub min_sd: [f64; 2],
}

impl ComparisonReport {
    pub fn improvement(&self) -> f64 {
        if self.objective[0] == 0.0 {
            0.0
        } else {
            (self.objective[0] - self.objective[1]) / self.objective[0]
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Performance over {} movements (95% confidence half-width in brackets)", self.n_movements);
        let _ = writeln!(s, "{:<14}{:>26}{:>26}{:>12}", "metric", self.labels[0], self.labels[1], "p");
        for r in &self.rows {
            let cell = |i: usize| format!("{} [{}]", fmt_num(r.mean[i]), fmt_num(r.half_width[i]));
            let _ = writeln!(s, "{:<14}{:>26}{:>26}{:>12}", format!("{} [{}]", r.name, r.unit), cell(0), cell(1), fmt_num(r.p_value));
        }
        let _ = writeln!(s, "{:<14}{:>26}{:>26}", "J", fmt_num(self.objective[0]), fmt_num(self.objective[1]));
        let succ = |i: usize| format!("{}/{}", self.n_succ[i], self.n_movements);
        let _ = writeln!(s, "{:<14}{:>26}{:>26}", "succeeded", succ(0), succ(1));
        let inf = |i: usize| format!("{:.2}%", self.infeasible_fraction[i] * 100.0);
        let _ = writeln!(s, "{:<14}{:>26}{:>26}", "infeasible", inf(0), inf(1));
        let _ = writeln!(s, "{:<14}{:>26}{:>26}", "min sd [m]", fmt_num(self.min_sd[0]), fmt_num(self.min_sd[1]));
        let _ = writeln!(s, "improvement of J: {:.1}%", self.improvement() * 100.0);
        s
    }
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e-2 && v.abs() < 1e4 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

/// Builds the report from two evaluations of the same corpus.
pub fn compare_results(labels: [&str; 2], a: &EvalResult, b: &EvalResult) -> Result<ComparisonReport> {
    if a.movements.is_empty() || b.movements.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let ids = |r: &EvalResult| r.movements.iter().map(|m| m.movement).collect::<Vec<_>>();
    if ids(a) != ids(b) {
        return Err(Error::InvalidConfig("conditions were evaluated on different movements".into()));
    }
    let n = a.movements.len();
    let column = |r: &EvalResult, h: usize| r.movements.iter().map(|m| m.metrics.to_array()[h]).collect::<Vec<_>>();
    let mut rows = Vec::with_capacity(6);
    for h in 0..6 {
        let (xa, xb) = (column(a, h), column(b, h));
        let (ma, ha) = ci_or_point(&xa)?;
        let (mb, hb) = ci_or_point(&xb)?;
        let tail = if MetricVector::higher_is_better(h) { Tail::Less } else { Tail::Greater };
        let p_value = if n >= 2 { welch_t_test(&xa, &xb, tail)?.p } else { 0.5 };
        rows.push(MetricRow {
            name: MetricVector::NAMES[h].to_string(),
            unit: UNITS[h].to_string(),
            mean: [ma, mb],
            half_width: [ha, hb],
            p_value,
        });
    }
    let inf = |r: &EvalResult| r.movements.iter().map(|m| m.infeasible_fraction).sum::<f64>() / n as f64;
    Ok(ComparisonReport {
        labels: [labels[0].to_string(), labels[1].to_string()],
        params: [a.params, b.params],
        n_movements: n,
        rows,
        objective: [a.objective, b.objective],
        n_succ: [a.n_succ, b.n_succ],
        infeasible_fraction: [inf(a), inf(b)],
        min_sd: [a.min_sd(), b.min_sd()],
    })
}

fn ci_or_point(x: &[f64]) -> Result<(f64, f64)> {
    if x.len() >= 2 {
        mean_ci95(x)
    } else {
        Ok((x[0], 0.0))
    }
}

/// Evaluates both parameter sets on `set` and compares them.
pub fn compare(
    labels: [&str; 2],
    params: [&MpcParams; 2],
    set: &MovementSet,
    scene: &Scene,
    cfg: &EvalConfig,
) -> Result<(ComparisonReport, [EvalResult; 2])> {
    let a = evaluate_params(params[0], set, scene, cfg)?;
    let b = evaluate_params(params[1], set, scene, cfg)?;
    let report = compare_results(labels, &a, &b)?;
    Ok((report, [a, b]))
}
