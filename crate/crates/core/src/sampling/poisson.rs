//! Exponential and Poisson draws.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::error::{Error, Result};
use crate::space::Interval;

use super::RandomStream;

/// Exponential variable with mean `1/rate`.
pub fn sample_exponential(rng: &mut RandomStream, rate: f64) -> Result<f64> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidRate(rate));
    }
    let exp = Exp::new(rate).map_err(|_| Error::InvalidRate(rate))?;
    Ok(exp.sample(rng))
}

/// Poisson variable with the given mean; zero mean gives zero.
pub fn sample_poisson_count(rng: &mut RandomStream, mean: f64) -> Result<u64> {
    if mean == 0.0 {
        return Ok(0);
    }
    let p = Poisson::new(mean).map_err(|_| Error::InvalidRate(mean))?;
    Ok(p.sample(rng) as u64)
}

/// Homogeneous Poisson points of intensity `rate` on a union of disjoint intervals.
///
/// Returns the points sorted. A zero rate yields no points.
pub fn sample_poisson_region(
    rng: &mut RandomStream,
    rate: f64,
    region: &[Interval],
) -> Result<Vec<f64>> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::InvalidRate(rate));
    }
    let mut sorted = region.to_vec();
    sorted.sort_by(|a, b| a.start.total_cmp(&b.start));
    for w in sorted.windows(2) {
        if w[1].start < w[0].end {
            return Err(Error::InvalidConfiguration(format!(
                "region intervals {} and {} overlap",
                w[0], w[1]
            )));
        }
    }
    if sorted.iter().any(|iv| !iv.len().is_finite()) {
        return Err(Error::InfiniteRegion);
    }
    let mut out = Vec::new();
    if rate == 0.0 {
        return Ok(out);
    }
    for iv in &sorted {
        let n = sample_poisson_count(rng, rate * iv.len())?;
        let first = out.len();
        for _ in 0..n {
            let u: f64 = rng.random();
            let t = iv.start + u * iv.len();
            // guard against rounding onto the open end
            out.push(if t < iv.end { t } else { iv.end.next_down() });
        }
        out[first..].sort_by(f64::total_cmp);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_rejects_bad_rate() {
        let mut s = RandomStream::new(0);
        assert!(sample_exponential(&mut s, 0.0).is_err());
        assert!(sample_exponential(&mut s, -1.0).is_err());
        assert!(sample_exponential(&mut s, f64::NAN).is_err());
    }

    #[test]
    fn exponential_moments() {
        let mut s = RandomStream::new(11);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_exponential(&mut s, 2.0).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 0.5).abs() < 3.0 * 0.5 / (n as f64).sqrt(), "mean {mean}");
        // Var of the sample variance: (μ4 - σ^4)/n with μ4 = 9/λ^4
        let sd_var = ((9.0 / 16.0 - 1.0 / 16.0) / n as f64).sqrt();
        assert!((var - 0.25).abs() < 3.0 * sd_var, "var {var}");
    }

    #[test]
    fn exponential_is_reproducible() {
        let a = sample_exponential(&mut RandomStream::new(5).child(2), 1.0).unwrap();
        let b = sample_exponential(&mut RandomStream::new(5).child(2), 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_region_is_empty() {
        let mut s = RandomStream::new(0);
        assert!(sample_poisson_region(&mut s, 3.0, &[]).unwrap().is_empty());
    }

    #[test]
    fn infinite_region_is_rejected() {
        let mut s = RandomStream::new(0);
        let iv = Interval::new(0.0, f64::INFINITY).unwrap();
        assert_eq!(
            sample_poisson_region(&mut s, 1.0, &[iv]),
            Err(Error::InfiniteRegion)
        );
    }

    #[test]
    fn points_sorted_and_inside() {
        let mut s = RandomStream::new(3);
        let region = [
            Interval::new(5.0, 6.0).unwrap(),
            Interval::new(0.0, 1.0).unwrap(),
        ];
        let pts = sample_poisson_region(&mut s, 30.0, &region).unwrap();
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
        assert!(pts.iter().all(|t| region.iter().any(|iv| iv.contains(*t))));
    }
}
