//! Summary statistics for sweep results: quantiles, Welch's t-test,
//! percentile bootstrap and significance annotation.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 10_000;
pub const DEFAULT_LEVEL: f64 = 0.95;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Empirical quantile by linear interpolation between order statistics
/// (`h = (n−1)p`). `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, p)
}

/// Indices of values at or above the `(1−q)` quantile; ties at the threshold
/// are kept.
pub fn top_percentile_indices(values: &[f64], q: f64) -> Vec<usize> {
    if values.is_empty() {
        return Vec::new();
    }
    let threshold = quantile(values, 1.0 - q);
    (0..values.len()).filter(|&i| values[i] >= threshold).collect()
}

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
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
    let t = x + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=1000 {
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

/// Regularised incomplete beta `I_x(a, b)`.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    // The fraction converges fast on the side below the mean of the beta law.
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail probability of Student's t with `dof` degrees of freedom.
pub fn student_t_two_sided(t: f64, dof: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    reg_inc_beta(dof / 2.0, 0.5, dof / (dof + t * t))
}

/// Upper tail of the F distribution.
pub fn f_upper_tail(f: f64, d1: f64, d2: f64) -> f64 {
    if !(f > 0.0) {
        return 1.0;
    }
    reg_inc_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub dof: f64,
    pub p: f64,
}

/// Welch's unequal-variance t-test, two-sided.
///
/// Two constant samples with equal means give `t = 0, p = 1`; with different
/// means `t = ±∞, p = 0`. The degrees of freedom are then undefined (NaN).
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::DegenerateSample(format!("need at least 2 values per sample, got {} and {}", a.len(), b.len())));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput("welch sample"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (variance(a) / na, variance(b) / nb);
    let diff = mean(a) - mean(b);
    let se2 = sa + sb;
    if se2 == 0.0 {
        return Ok(if diff == 0.0 {
            WelchResult { t: 0.0, dof: f64::NAN, p: 1.0 }
        } else {
            WelchResult { t: diff.signum() * f64::INFINITY, dof: f64::NAN, p: 0.0 }
        });
    }
    let t = diff / se2.sqrt();
    let dof = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(WelchResult { t, dof, p: student_t_two_sided(t, dof) })
}

/// Significance buckets: `ns`, `*` (≤ 0.05), `**` (≤ 0.01), `***` (≤ 0.001),
/// `****` (≤ 0.0001).
pub fn annotate_p(p: f64) -> &'static str {
    if p <= 1e-4 {
        "****"
    } else if p <= 1e-3 {
        "***"
    } else if p <= 1e-2 {
        "**"
    } else if p <= 0.05 {
        "*"
    } else {
        "ns"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub point: f64,
}

impl Interval {
    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Percentile-bootstrap interval for the mean from `b` resamples.
pub fn bootstrap_ci(sample: &[f64], b: usize, level: f64, seed: u64) -> Result<Interval> {
    if sample.len() < 2 {
        return Err(Error::DegenerateSample(format!("bootstrap needs at least 2 values, got {}", sample.len())));
    }
    if b == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArg(format!("bad bootstrap settings: {b} resamples at level {level}")));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput("bootstrap sample"));
    }
    let n = sample.len();
    let mut r = rng::seeded(seed);
    let mut means: Vec<f64> = (0..b)
        .map(|_| (0..n).map(|_| sample[r.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(|a, b| a.total_cmp(b));
    let tail = (1.0 - level) / 2.0;
    Ok(Interval { lo: quantile_sorted(&means, tail), hi: quantile_sorted(&means, 1.0 - tail), point: mean(sample) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    #[test]
    fn quantile_fixtures() {
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0], 0.75), 3.25);
        assert_eq!(quantile(&[5.0], 0.3), 5.0);
        assert_eq!(top_percentile_indices(&[1.0, 2.0, 3.0, 4.0], 0.25), vec![3]);
        assert_eq!(top_percentile_indices(&[1.0, 2.0, 3.0, 4.0], 1.0), vec![0, 1, 2, 3]);
        assert_eq!(top_percentile_indices(&[2.0; 5], 0.25), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn ln_gamma_fixtures() {
        assert_relative_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-14);
        assert_relative_eq!(ln_gamma(5.0), 24f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(ln_gamma(0.5), std::f64::consts::PI.sqrt().ln(), max_relative = 1e-13);
        assert_relative_eq!(ln_gamma(0.1), 2.252_712_651_734_206, max_relative = 1e-13);
    }

    #[test]
    fn incomplete_beta_fixtures() {
        assert_relative_eq!(reg_inc_beta(1.0, 1.0, 0.3), 0.3, max_relative = 1e-13);
        // I_x(a, 1) = x^a.
        assert_relative_eq!(reg_inc_beta(2.5, 1.0, 0.4), 0.4f64.powf(2.5), max_relative = 1e-12);
        assert_relative_eq!(reg_inc_beta(3.0, 4.0, 0.2) + reg_inc_beta(4.0, 3.0, 0.8), 1.0, max_relative = 1e-13);
    }

    #[test]
    fn welch_fixture() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 3.0, 4.0, 5.0, 6.0];
        let r = welch_t_test(&a, &b).unwrap();
        assert_relative_eq!(r.t, -1.0, max_relative = 1e-14);
        assert_relative_eq!(r.dof, 8.0, max_relative = 1e-14);
        assert!((r.p - 0.3466).abs() < 5e-5, "{}", r.p);
        let oracle = 2.0 * StudentsT::new(0.0, 1.0, 8.0).unwrap().cdf(-1.0);
        assert!((r.p - oracle).abs() < 1e-10);
    }

    #[test]
    fn welch_degenerate_cases() {
        let r = welch_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
        let r = welch_t_test(&[2.0, 2.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
        let r = welch_t_test(&[2.0, 2.0], &[3.0, 3.0]).unwrap();
        assert_eq!(r.p, 0.0);
        assert!(matches!(welch_t_test(&[1.0], &[1.0, 2.0]), Err(Error::DegenerateSample(_))));
    }

    #[test]
    fn annotation_buckets() {
        assert_eq!(annotate_p(0.03), "*");
        assert_eq!(annotate_p(0.05), "*");
        assert_eq!(annotate_p(0.050001), "ns");
        assert_eq!(annotate_p(1.0), "ns");
        assert_eq!(annotate_p(0.01), "**");
        assert_eq!(annotate_p(0.001), "***");
        assert_eq!(annotate_p(0.0001), "****");
        assert_eq!(annotate_p(0.0), "****");
    }

    #[test]
    fn bootstrap_fixtures() {
        let c = bootstrap_ci(&[0.7; 6], 2000, 0.95, 1).unwrap();
        assert_eq!((c.lo, c.hi), (c.point, c.point));
        assert!((c.point - 0.7).abs() < 1e-15);
        let c = bootstrap_ci(&[0.0, 1.0], 10_000, 0.95, 3).unwrap();
        assert_eq!(c.point, 0.5);
        assert_eq!((c.lo, c.hi), (0.0, 1.0));
        assert_eq!(bootstrap_ci(&[0.0, 1.0], 10_000, 0.95, 3).unwrap(), c);
        assert!(bootstrap_ci(&[1.0], 10, 0.95, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn welch_matches_oracle_and_is_symmetric(
            a in prop::collection::vec(-10.0f64..10.0, 2..30),
            b in prop::collection::vec(-10.0f64..10.0, 2..30),
        ) {
            let r = welch_t_test(&a, &b).unwrap();
            let s = welch_t_test(&b, &a).unwrap();
            prop_assert!((r.t + s.t).abs() <= 1e-12 * (1.0 + r.t.abs()));
            prop_assert!((r.p - s.p).abs() <= 1e-12);
            if r.dof.is_finite() {
                let oracle = 2.0 * StudentsT::new(0.0, 1.0, r.dof).unwrap().cdf(-r.t.abs());
                prop_assert!((r.p - oracle).abs() <= 1e-9, "{} vs {}", r.p, oracle);
            }
        }

        #[test]
        fn bootstrap_nested_levels(xs in prop::collection::vec(-5.0f64..5.0, 2..20), seed in any::<u64>()) {
            let narrow = bootstrap_ci(&xs, 500, 0.95, seed).unwrap();
            let wide = bootstrap_ci(&xs, 500, 0.99, seed).unwrap();
            prop_assert!(wide.lo <= narrow.lo && narrow.hi <= wide.hi);
            prop_assert!(narrow.lo <= narrow.hi);
        }
    }
}
