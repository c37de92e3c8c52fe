//! Pearson correlation with a two-tailed t-test, OLS threshold fits and
//! positive-rate buckets.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} points, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("x has {x} values but y has {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("no trend: slope {0:e} is indistinguishable from zero")]
    NoTrend(f64),
    #[error("empty point set")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub p: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub slope: f64,
    pub intercept: f64,
    pub zero_crossing: f64,
    pub r: f64,
    pub p: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketCount {
    pub label: String,
    pub positive: usize,
    pub total: usize,
}

const LANCZOS: [f64; 9] = [
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

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + 7.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
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
    for m in 1..=500 {
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
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "beta parameters must be positive");
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

/// Two-tailed p-value of Student's t with `df` degrees of freedom.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    assert!(df > 0.0, "degrees of freedom must be positive");
    let t = t.abs();
    if t.is_infinite() {
        return 0.0;
    }
    let p = if df == 1.0 {
        // 1 − (2/π)·atan|t|, written without cancellation
        2.0 / PI * (1.0 / t).atan()
    } else if df == 2.0 {
        // 1 − |t|/sqrt(2 + t²) = 2 / (s·(s + |t|)) with s = sqrt(2 + t²)
        let s = (2.0 + t * t).sqrt();
        2.0 / (s * (s + t))
    } else {
        inc_beta(df / 2.0, 0.5, df / (df + t * t))
    };
    p.clamp(0.0, 1.0)
}

fn check_finite(xs: &[f64], what: &'static str) -> Result<(), StatsError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite(what))
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Centered sums `(Sxx, Syy, Sxy)`.
fn moments(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let (mx, my) = (mean(x), mean(y));
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    (sxx, syy, sxy)
}

fn validate_xy(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch { x: x.len(), y: y.len() });
    }
    if x.len() < 3 {
        return Err(StatsError::TooFew { need: 3, got: x.len() });
    }
    check_finite(x, "x")?;
    check_finite(y, "y")
}

/// Sample Pearson r and its two-tailed p-value from
/// `t = r·sqrt((n−2)/(1−r²))` with `n−2` degrees of freedom.
pub fn pearson_r_p(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    validate_xy(x, y)?;
    let (sxx, syy, sxy) = moments(x, y);
    if sxx == 0.0 {
        return Err(StatsError::ZeroVariance("x"));
    }
    if syy == 0.0 {
        return Err(StatsError::ZeroVariance("y"));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let n = x.len();
    let df = (n - 2) as f64;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (df / ((1.0 - r) * (1.0 + r))).sqrt();
        student_t_two_tailed(t, df)
    };
    Ok(CorrelationResult { r, p, n })
}

/// OLS fit `delta = slope·cw + intercept` and the `cw` where the fitted
/// line crosses zero.
pub fn fit_cw_threshold(points: &[(f64, f64)]) -> Result<ThresholdFit, StatsError> {
    let (x, y): (Vec<f64>, Vec<f64>) = points.iter().cloned().unzip();
    validate_xy(&x, &y)?;
    let (sxx, _, sxy) = moments(&x, &y);
    if sxx == 0.0 {
        return Err(StatsError::ZeroVariance("cw"));
    }
    let slope = sxy / sxx;
    if slope.abs() < 1e-12 {
        return Err(StatsError::NoTrend(slope));
    }
    let intercept = mean(&y) - slope * mean(&x);
    let corr = pearson_r_p(&x, &y)?;
    Ok(ThresholdFit {
        slope,
        intercept,
        zero_crossing: -intercept / slope,
        r: corr.r,
        p: corr.p,
        n: points.len(),
    })
}

fn fmt_bound(b: f64) -> String {
    format!("{b}")
}

/// Counts of `delta > 0` in the buckets `cw < lo`, `lo ≤ cw ≤ hi` and
/// `cw > hi`.
pub fn positive_rate_buckets(points: &[(f64, f64)], boundaries: [f64; 2]) -> Result<Vec<BucketCount>, StatsError> {
    if points.is_empty() {
        return Err(StatsError::Empty);
    }
    let [lo, hi] = boundaries;
    assert!(lo <= hi, "bucket boundaries must be ordered");
    let (l, h) = (fmt_bound(lo), fmt_bound(hi));
    let mut buckets = vec![
        BucketCount {
            label: format!("cw<{l}"),
            positive: 0,
            total: 0,
        },
        BucketCount {
            label: format!("{l}<=cw<={h}"),
            positive: 0,
            total: 0,
        },
        BucketCount {
            label: format!("cw>{h}"),
            positive: 0,
            total: 0,
        },
    ];
    for &(cw, delta) in points {
        let i = if cw < lo {
            0
        } else if cw <= hi {
            1
        } else {
            2
        };
        buckets[i].total += 1;
        if delta > 0.0 {
            buckets[i].positive += 1;
        }
    }
    Ok(buckets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};
    use statrs::function::beta::beta_reg;
    use statrs::function::gamma::ln_gamma as sr_ln_gamma;

    fn oracle_p(t: f64, df: f64) -> f64 {
        let d = StudentsT::new(0.0, 1.0, df).unwrap();
        2.0 * d.sf(t.abs())
    }

    #[test]
    fn ln_gamma_matches_reference() {
        for &x in &[0.1, 0.5, 1.0, 1.5, 2.0, 3.7, 10.0, 55.5] {
            assert_abs_diff_eq!(ln_gamma(x), sr_ln_gamma(x), epsilon = 1e-12);
        }
    }

    #[test]
    fn inc_beta_matches_reference() {
        for &(a, b) in &[(0.5, 0.5), (1.5, 0.5), (5.0, 0.5), (27.0, 0.5), (2.0, 3.0)] {
            for i in 1..20 {
                let x = i as f64 / 20.0;
                assert_abs_diff_eq!(inc_beta(a, b, x), beta_reg(a, b, x), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn t_test_matches_reference_across_df() {
        for df in [1.0, 2.0, 3.0, 4.0, 7.0, 54.0] {
            for &t in &[0.0, 0.3, 1.0, 2.5, 4.3, 12.0] {
                assert_abs_diff_eq!(student_t_two_tailed(t, df), oracle_p(t, df), epsilon = 1e-10);
                assert_eq!(student_t_two_tailed(-t, df), student_t_two_tailed(t, df));
            }
        }
    }

    #[test]
    fn exact_line_has_unit_r() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let c = pearson_r_p(&x, &y).unwrap();
        assert_abs_diff_eq!(c.r, 1.0, epsilon = 1e-12);
        assert!(c.p < 1e-6);
    }

    #[test]
    fn single_row_example() {
        let c = pearson_r_p(&[11.64, 8.60, 8.64, 6.34], &[9.9, 4.0, 0.5, -3.1]).unwrap();
        assert_abs_diff_eq!(c.r, 0.96, epsilon = 0.01);
        assert_abs_diff_eq!(c.p, 0.035, epsilon = 0.01);
        let t = c.r * (2.0 / (1.0 - c.r * c.r)).sqrt();
        assert_abs_diff_eq!(c.p, oracle_p(t, 2.0), epsilon = 1e-12);
    }

    #[test]
    fn near_degenerate_against_closed_form() {
        // x = [1,2,3], y = [1,2,3+ε]: Sxx = 2, Sxy = 2+ε, Syy = 2+2ε+2ε²/3,
        // so 1−r² = (ε²/3)/(4+4ε+4ε²/3) without cancellation.
        let eps = 1e-7;
        let c = pearson_r_p(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0 + eps]).unwrap();
        let one_minus_r2 = (eps * eps / 3.0) / (4.0 + 4.0 * eps + 4.0 * eps * eps / 3.0);
        let r = (1.0 - one_minus_r2).sqrt();
        let t = r / one_minus_r2.sqrt();
        let p_ref = 2.0 / PI * (1.0 / t).atan();
        assert!(c.r > 1.0 - 1e-12);
        assert!(c.p < 0.01);
        assert_abs_diff_eq!(c.p, p_ref, epsilon = 1e-6);
    }

    #[test]
    fn error_cases() {
        assert_eq!(
            pearson_r_p(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err().to_string(),
            "zero variance in x"
        );
        assert!(matches!(
            pearson_r_p(&[1.0, 2.0], &[1.0, 2.0]),
            Err(StatsError::TooFew { .. })
        ));
        assert!(matches!(
            pearson_r_p(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(StatsError::LengthMismatch { .. })
        ));
        assert!(matches!(
            fit_cw_threshold(&[(1.0, 2.0), (2.0, 2.0), (3.0, 2.0)]),
            Err(StatsError::NoTrend(_))
        ));
        assert!(positive_rate_buckets(&[], [7.0, 10.0]).is_err());
    }

    #[test]
    fn threshold_on_exact_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (4.0 + i as f64, i as f64 - 4.0)).collect();
        let fit = fit_cw_threshold(&pts).unwrap();
        assert_abs_diff_eq!(fit.zero_crossing, 8.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.slope, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn buckets_use_strict_positivity() {
        let pts = [(5.0, 0.0), (7.0, 0.0), (10.0, 0.0), (12.0, 0.0)];
        let b = positive_rate_buckets(&pts, [7.0, 10.0]).unwrap();
        assert!(b.iter().all(|x| x.positive == 0));
        assert_eq!(b.iter().map(|x| x.total).collect::<Vec<_>>(), vec![1, 2, 1]);
        assert_eq!(b[1].label, "7<=cw<=10");
        let neg_zero = positive_rate_buckets(&[(5.0, -0.0)], [7.0, 10.0]).unwrap();
        assert_eq!(neg_zero[0].positive, 0);
    }

    fn data() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (3usize..30).prop_flat_map(|n| {
            (
                prop::collection::vec(-100.0f64..100.0, n),
                prop::collection::vec(-100.0f64..100.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn affine_invariance((x, y) in data(), a in 0.1f64..10.0, b in -50.0f64..50.0, c in 0.1f64..10.0) {
            let Ok(base) = pearson_r_p(&x, &y) else { return Ok(()); };
            let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let ys: Vec<f64> = y.iter().map(|v| c * v - b).collect();
            let moved = pearson_r_p(&xs, &ys).unwrap();
            prop_assert!((base.r - moved.r).abs() < 1e-12);
            let flipped: Vec<f64> = y.iter().map(|v| -c * v).collect();
            let f = pearson_r_p(&x, &flipped).unwrap();
            prop_assert!((base.r + f.r).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&base.p));
        }

        #[test]
        fn zero_crossing_rescale_and_shift((x, y) in data(), s in 0.1f64..10.0, shift in -5.0f64..5.0) {
            let pts: Vec<(f64, f64)> = x.iter().cloned().zip(y.iter().cloned()).collect();
            let Ok(fit) = fit_cw_threshold(&pts) else { return Ok(()); };
            prop_assume!(fit.slope.abs() > 1e-3);
            let scaled: Vec<(f64, f64)> = pts.iter().map(|&(c, d)| (c, s * d)).collect();
            let fs = fit_cw_threshold(&scaled).unwrap();
            prop_assert!((fs.zero_crossing - fit.zero_crossing).abs() <= 1e-6 * (1.0 + fit.zero_crossing.abs()));
            let shifted: Vec<(f64, f64)> = pts.iter().map(|&(c, d)| (c, d + shift)).collect();
            let fsh = fit_cw_threshold(&shifted).unwrap();
            let expected = fit.zero_crossing - shift / fit.slope;
            prop_assert!((fsh.zero_crossing - expected).abs() <= 1e-6 * (1.0 + expected.abs()));
        }
    }
}
