//! Goodness-of-fit statistics used by the validation suites.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

/// `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} e^{-2k²λ²}`, the Kolmogorov survival function.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against the exponential law of rate
/// `rate`, with Stephens' small-sample correction.
pub fn ks_exponential(samples: &[f64], rate: f64) -> Result<TestOutcome> {
    if samples.is_empty() {
        return Err(Error::param("samples", "must not be empty"));
    }
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::InvalidRate(rate));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (k, x) in xs.iter().enumerate() {
        let f = -(-rate * x.max(0.0)).exp_m1();
        d = d.max((k as f64 + 1.0) / n - f).max(f - k as f64 / n);
    }
    let sn = n.sqrt();
    Ok(TestOutcome {
        statistic: d,
        p_value: kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d),
    })
}

/// Pearson chi-square test of observed counts against expected counts.
/// Cells with expectation below `min_expected` are pooled into their
/// neighbor.
pub fn chi_square(observed: &[f64], expected: &[f64], min_expected: f64) -> Result<TestOutcome> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(Error::param("observed", "must match expected and be non-empty"));
    }
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (a, b) in observed.iter().zip(expected) {
        o += a;
        e += b;
        if e >= min_expected {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    if cells.len() < 2 {
        return Err(Error::param("expected", "fewer than two cells after pooling"));
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dist = ChiSquared::new((cells.len() - 1) as f64).expect("positive degrees of freedom");
    Ok(TestOutcome {
        statistic: stat,
        p_value: dist.sf(stat),
    })
}

/// Empirical law of integer-valued samples.
pub fn histogram(samples: impl IntoIterator<Item = usize>) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for s in samples {
        *h.entry(s).or_insert(0) += 1;
    }
    h
}

/// `½ Σ_k |p_k − q_k|` between two empirical laws.
pub fn total_variation(a: &BTreeMap<usize, usize>, b: &BTreeMap<usize, usize>) -> f64 {
    let na: usize = a.values().sum();
    let nb: usize = b.values().sum();
    if na == 0 || nb == 0 {
        return if na == nb { 0.0 } else { 1.0 };
    }
    let keys: std::collections::BTreeSet<usize> = a.keys().chain(b.keys()).copied().collect();
    0.5 * keys
        .into_iter()
        .map(|k| {
            let p = *a.get(&k).unwrap_or(&0) as f64 / na as f64;
            let q = *b.get(&k).unwrap_or(&0) as f64 / nb as f64;
            (p - q).abs()
        })
        .sum::<f64>()
}

/// Mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{sample_exponential, RandomStream};

    #[test]
    fn kolmogorov_known_values() {
        // Q(1.36) ≈ 0.049 and Q(1.63) ≈ 0.010
        assert!((kolmogorov_survival(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_survival(1.628) - 0.01).abs() < 5e-4);
    }

    #[test]
    fn ks_accepts_exponential_and_rejects_uniform() {
        let mut rng = RandomStream::new(3);
        let xs: Vec<f64> = (0..5000).map(|_| sample_exponential(&mut rng, 2.0).unwrap()).collect();
        assert!(ks_exponential(&xs, 2.0).unwrap().p_value > 0.01);
        let us: Vec<f64> = (0..5000).map(|_| rng.uniform()).collect();
        assert!(ks_exponential(&us, 2.0).unwrap().p_value < 1e-6);
    }

    #[test]
    fn chi_square_pools_small_cells() {
        let r = chi_square(&[10.0, 12.0, 1.0, 0.0], &[11.0, 11.0, 0.6, 0.4], 5.0).unwrap();
        assert!(r.p_value > 0.5);
    }

    #[test]
    fn total_variation_bounds() {
        let a = histogram([0, 1, 1, 2]);
        assert_eq!(total_variation(&a, &a), 0.0);
        let b = histogram([5, 6]);
        assert_eq!(total_variation(&a, &b), 1.0);
    }
}
