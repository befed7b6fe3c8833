//! Inequality and tail statistics over wealth or income vectors.

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

/// Tail size used on a population of 10,000.
pub const DEFAULT_TAIL: usize = 400;

/// Fewer tail points than this and the Hill estimate is not reported.
pub const MIN_HILL_TAIL: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("need at least 10 agents for a decile ratio, got {0}")]
    TooFewAgents(usize),
    #[error("all values are zero")]
    AllZero,
    #[error("value {0} is negative or not finite")]
    InvalidValue(f64),
    #[error("tail size must be at least 2, got {0}")]
    InvalidTail(usize),
    #[error("tail of {needed} needs that many positive values, only {available} available")]
    InsufficientTail { needed: usize, available: usize },
    #[error("all tail values are equal")]
    DegenerateTail,
}

fn check_values(values: &[f64], needed: usize) -> Result<(), MetricsError> {
    if values.len() < needed {
        return Err(MetricsError::TooFewValues {
            needed,
            got: values.len(),
        });
    }
    if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(MetricsError::InvalidValue(*bad));
    }
    Ok(())
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Gini coefficient: mean absolute pairwise difference over twice the mean.
///
/// Uses the sorted-order identity `G = Σ (2i − n − 1)·x_(i) / (n·Σx)`.
pub fn gini(values: &[f64]) -> Result<f64, MetricsError> {
    check_values(values, 2)?;
    let v = sorted(values);
    let n = v.len() as f64;
    let total: f64 = v.iter().sum();
    if total == 0.0 {
        return Err(MetricsError::AllZero);
    }
    let weighted: f64 = v
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i as f64 + 1.0) - n - 1.0) * x)
        .sum();
    Ok((weighted / (n * total)).clamp(0.0, 1.0))
}

/// Mean of the top tenth over the mean of the bottom tenth.
/// Infinite when the bottom tenth holds nothing.
pub fn decile_ratio(values: &[f64]) -> Result<f64, MetricsError> {
    if values.len() < 10 {
        return Err(MetricsError::TooFewAgents(values.len()));
    }
    check_values(values, 10)?;
    let v = sorted(values);
    let k = v.len() / 10;
    let bottom: f64 = v[..k].iter().sum::<f64>() / k as f64;
    let top: f64 = v[v.len() - k..].iter().sum::<f64>() / k as f64;
    if bottom == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(top / bottom)
}

/// Fraction of entries strictly below half the mean.
pub fn poverty_ratio(values: &[f64]) -> Result<f64, MetricsError> {
    check_values(values, 1)?;
    let n = values.len() as f64;
    let half_mean = values.iter().sum::<f64>() / n / 2.0;
    Ok(values.iter().filter(|v| **v < half_mean).count() as f64 / n)
}

/// Largest over smallest entry.
pub fn max_min_ratio(values: &[f64]) -> Result<f64, MetricsError> {
    check_values(values, 1)?;
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    Ok(if lo == 0.0 { f64::INFINITY } else { hi / lo })
}

/// Share of the total held by the largest entry.
pub fn top_share(values: &[f64]) -> Result<f64, MetricsError> {
    check_values(values, 1)?;
    let total: f64 = values.iter().sum();
    if total == 0.0 {
        return Err(MetricsError::AllZero);
    }
    Ok(values.iter().copied().fold(0.0, f64::max) / total)
}

/// Tail size for a population of `n`: 4% of the agents (400 of 10,000).
pub fn default_tail_size(n: usize) -> usize {
    (0.04 * n as f64).round() as usize
}

/// The `n_tail` largest values, ascending.
pub fn upper_tail(values: &[f64], n_tail: usize) -> Result<Vec<f64>, MetricsError> {
    if n_tail < 2 {
        return Err(MetricsError::InvalidTail(n_tail));
    }
    let positive = values.iter().filter(|v| **v > 0.0 && v.is_finite()).count();
    if positive < n_tail {
        return Err(MetricsError::InsufficientTail {
            needed: n_tail,
            available: positive,
        });
    }
    let v = sorted(values);
    Ok(v[v.len() - n_tail..].to_vec())
}

/// Hill estimate of the density's power-law exponent over the `n_tail`
/// largest values: `α = 1 + n / Σ ln(x_i / x_min)`, with `x_min` the smallest
/// of them. For a density `p(x) ∝ x^(−α)` this recovers `α`; the magnitude
/// of the log-log CCDF slope is `α − 1`.
pub fn hill_alpha(values: &[f64], n_tail: usize) -> Result<f64, MetricsError> {
    let tail = upper_tail(values, n_tail)?;
    hill_from_tail(&tail)
}

fn hill_from_tail(tail: &[f64]) -> Result<f64, MetricsError> {
    let x_min = tail[0];
    let log_sum: f64 = tail.iter().map(|x| (x / x_min).ln()).sum();
    if log_sum <= 0.0 {
        return Err(MetricsError::DegenerateTail);
    }
    Ok(1.0 + tail.len() as f64 / log_sum)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

fn serialize_extended<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_str("NaN")
    } else if *x > 0.0 {
        s.serialize_str("Infinity")
    } else {
        s.serialize_str("-Infinity")
    }
}

fn serialize_extended_opt<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => serialize_extended(v, s),
        None => s.serialize_none(),
    }
}

/// Summary statistics of one vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub mean: f64,
    pub gini: f64,
    /// Absent below 10 values.
    #[serde(serialize_with = "serialize_extended_opt")]
    pub decile_ratio: Option<f64>,
    pub poverty_ratio: f64,
    #[serde(serialize_with = "serialize_extended")]
    pub max_min_ratio: f64,
    /// Absent when the tail is too short or degenerate.
    pub hill_alpha: Option<f64>,
    pub n_tail: usize,
}

impl MetricsReport {
    /// `n_tail` defaults to [`default_tail_size`].
    pub fn compute(values: &[f64], n_tail: Option<usize>) -> Result<Self, MetricsError> {
        let n_tail = n_tail.unwrap_or_else(|| default_tail_size(values.len()));
        let gini = gini(values)?;
        let decile_ratio = if values.len() >= 10 {
            Some(decile_ratio(values)?)
        } else {
            None
        };
        let hill = if n_tail >= MIN_HILL_TAIL {
            hill_alpha(values, n_tail).ok()
        } else {
            None
        };
        Ok(MetricsReport {
            n: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            gini,
            decile_ratio,
            poverty_ratio: poverty_ratio(values)?,
            max_min_ratio: max_min_ratio(values)?,
            hill_alpha: hill,
            n_tail,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_gini(v: &[f64]) -> f64 {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let mut s = 0.0;
        for a in v {
            for b in v {
                s += (a - b).abs();
            }
        }
        s / (2.0 * n * n * mean)
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[5.0, 5.0, 5.0, 5.0]).unwrap(), 0.0);
        assert_eq!(brute_gini(&[0.0, 0.0, 0.0, 10.0]), 0.75);
        assert!((gini(&[0.0, 0.0, 0.0, 10.0]).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn gini_errors() {
        assert_eq!(gini(&[0.0, 0.0]), Err(MetricsError::AllZero));
        assert!(matches!(gini(&[1.0]), Err(MetricsError::TooFewValues { .. })));
        assert_eq!(gini(&[1.0, -1.0]), Err(MetricsError::InvalidValue(-1.0)));
    }

    #[test]
    fn gini_condensation_limit() {
        for n in [2usize, 10, 1000] {
            let mut v = vec![0.0; n];
            v[n - 1] = 1.0;
            let expected = (n as f64 - 1.0) / n as f64;
            assert!((gini(&v).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn decile_examples() {
        assert_eq!(decile_ratio(&[7.0; 20]).unwrap(), 1.0);
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((decile_ratio(&v).unwrap() - 95.5 / 5.5).abs() < 1e-12);
        let mut z = vec![0.0; 20];
        z[19] = 1.0;
        assert_eq!(decile_ratio(&z).unwrap(), f64::INFINITY);
        assert_eq!(decile_ratio(&[1.0; 9]), Err(MetricsError::TooFewAgents(9)));
    }

    #[test]
    fn poverty_examples() {
        assert_eq!(poverty_ratio(&[3.0; 8]).unwrap(), 0.0);
        assert_eq!(poverty_ratio(&[1.0, 1.0, 1.0, 9.0]).unwrap(), 0.75);
    }

    #[test]
    fn hill_closed_form() {
        let m = 3.5;
        let a = hill_alpha(&[m * std::f64::consts::E, m, 0.1], 2).unwrap();
        assert!((a - 3.0).abs() < 1e-12);
    }

    #[test]
    fn hill_errors() {
        assert_eq!(hill_alpha(&[1.0, 2.0], 1), Err(MetricsError::InvalidTail(1)));
        assert_eq!(
            hill_alpha(&[1.0, 0.0, 0.0], 2),
            Err(MetricsError::InsufficientTail {
                needed: 2,
                available: 1
            })
        );
        assert_eq!(hill_alpha(&[4.0; 5], 3), Err(MetricsError::DegenerateTail));
    }

    #[test]
    fn default_tail_matches_reference_population() {
        assert_eq!(default_tail_size(10_000), 400);
        assert_eq!(default_tail_size(1000), 40);
        assert_eq!(default_tail_size(50), 2);
    }

    #[test]
    fn ks_basics() {
        let a: Vec<f64> = (0..100).map(f64::from).collect();
        assert_eq!(ks_statistic(&a, &a), 0.0);
        let b: Vec<f64> = (100..200).map(f64::from).collect();
        assert_eq!(ks_statistic(&a, &b), 1.0);
        let c: Vec<f64> = (50..150).map(f64::from).collect();
        assert!((ks_statistic(&a, &c) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn report_skips_short_tails() {
        let v: Vec<f64> = (1..=50).map(f64::from).collect();
        let r = MetricsReport::compute(&v, None).unwrap();
        assert_eq!(r.n_tail, 2);
        assert!(r.hill_alpha.is_none());
        assert!(r.decile_ratio.is_some());
    }

    proptest! {
        #[test]
        fn gini_matches_brute_force(v in prop::collection::vec(0.0f64..1e3, 2..60)) {
            prop_assume!(v.iter().sum::<f64>() > 0.0);
            prop_assert!((gini(&v).unwrap() - brute_gini(&v)).abs() < 1e-12);
        }

        #[test]
        fn gini_scale_invariant(v in prop::collection::vec(0.01f64..1e4, 2..200), c in 1e-6f64..1e6) {
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            prop_assert!((gini(&v).unwrap() - gini(&scaled).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn decile_and_poverty_permutation_and_scale_invariant(
            v in prop::collection::vec(0.01f64..1e4, 10..200), c in 1e-3f64..1e3, rot in 0usize..200,
        ) {
            let mut p = v.clone();
            let k = rot % p.len();
            p.rotate_left(k);
            p.reverse();
            let scaled: Vec<f64> = p.iter().map(|x| x * c).collect();
            let d = decile_ratio(&v).unwrap();
            prop_assert!((d - decile_ratio(&scaled).unwrap()).abs() <= 1e-12 * d);
            prop_assert_eq!(poverty_ratio(&v).unwrap(), poverty_ratio(&p).unwrap());
            prop_assert_eq!(poverty_ratio(&v).unwrap(), poverty_ratio(&scaled).unwrap());
        }

        #[test]
        fn hill_scale_invariant(v in prop::collection::vec(1.0f64..1e4, 20..200), c in 1e-3f64..1e3) {
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            match (hill_alpha(&v, 10), hill_alpha(&scaled, 10)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() <= 1e-9 * a),
                (Err(e1), Err(e2)) => prop_assert_eq!(e1, e2),
                _ => prop_assert!(false),
            }
        }

        #[test]
        fn bounds(v in prop::collection::vec(0.0f64..1e4, 10..100)) {
            prop_assume!(v.iter().sum::<f64>() > 0.0);
            let g = gini(&v).unwrap();
            prop_assert!((0.0..=1.0).contains(&g));
            let p = poverty_ratio(&v).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            let d = decile_ratio(&v).unwrap();
            prop_assert!(d >= 1.0);
        }
    }
}
