//! Student-t distribution and Welch's one-tailed test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Natural log of the gamma function (Lanczos, g = 7, n = 9), x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// CDF of Student's t with `df` degrees of freedom.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * inc_beta(0.5 * df, 0.5, df / (df + t * t));
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Quantile of Student's t by bisection on the CDF.
pub fn t_quantile(p: f64, df: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    let (mut lo, mut hi) = (-1e3, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Alternative hypothesis of a one-tailed test on `mean(a) - mean(b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// mean(a) < mean(b)
    Less,
    /// mean(a) > mean(b)
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Welch's unequal-variance t-test, one-tailed.
pub fn welch_t_test(a: &[f64], b: &[f64], tail: Tail) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Stats("each sample needs at least 2 values".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Stats("samples must be finite".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        let p = if ma == mb {
            0.5
        } else {
            match (tail, ma < mb) {
                (Tail::Less, true) | (Tail::Greater, false) => 0.0,
                _ => 1.0,
            }
        };
        let t = if ma == mb { 0.0 } else { (ma - mb).signum() * f64::INFINITY };
        return Ok(TTest { t, df: na + nb - 2.0, p });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let p = match tail {
        Tail::Less => t_cdf(t, df),
        Tail::Greater => t_cdf(-t, df),
    };
    Ok(TTest { t, df, p })
}

/// Sample mean and t-based 95% confidence half-width.
pub fn mean_ci95(x: &[f64]) -> Result<(f64, f64)> {
    if x.len() < 2 {
        return Err(Error::Stats("confidence interval needs at least 2 values".into()));
    }
    let (m, v) = mean_var(x);
    let n = x.len() as f64;
    Ok((m, t_quantile(0.975, n - 1.0) * (v / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
    }

    #[test]
    fn t_distribution_values() {
        // df = 1 is Cauchy, df = 2 has a closed form.
        for t in [-3.0, -0.4, 0.7, 2.5] {
            let cauchy = 0.5 + f64::atan(t) / std::f64::consts::PI;
            assert!((t_cdf(t, 1.0) - cauchy).abs() < 1e-13);
            let two = 0.5 + t / (2.0 * (2.0 + t * t).sqrt());
            assert!((t_cdf(t, 2.0) - two).abs() < 1e-13);
        }
        assert!((t_quantile(0.975, 9.0) - 2.262_157_162_740_991).abs() < 1e-9);
    }

    #[test]
    fn identical_and_separated_samples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(welch_t_test(&a, &a, Tail::Less).unwrap().p, 0.5);
        assert_eq!(welch_t_test(&[2.0; 3], &[2.0; 4], Tail::Greater).unwrap().p, 0.5);
        let b = [1.0, 1.0001, 0.9999, 1.00005];
        let r = welch_t_test(&[0.0; 4], &b, Tail::Less).unwrap();
        assert!(r.p < 1e-3);
        assert_eq!(welch_t_test(&[0.0; 3], &[1.0; 3], Tail::Less).unwrap().p, 0.0);
        assert_eq!(welch_t_test(&[0.0; 3], &[1.0; 3], Tail::Greater).unwrap().p, 1.0);
        assert!(welch_t_test(&[1.0], &b, Tail::Less).is_err());
    }

    #[test]
    fn tails_are_complementary() {
        let a = [0.3, 0.5, 0.2, 0.9, 0.4];
        let b = [0.6, 0.7, 0.55, 0.8];
        let l = welch_t_test(&a, &b, Tail::Less).unwrap().p;
        let g = welch_t_test(&a, &b, Tail::Greater).unwrap().p;
        assert!((l + g - 1.0).abs() < 1e-14);
    }

    #[test]
    fn confidence_interval() {
        let (m, h) = mean_ci95(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        // t_{0.975, 2} = 4.302652729911275, s = 1.
        assert!((h - 4.302_652_729_911_275 / 3f64.sqrt()).abs() < 1e-9);
    }
}
