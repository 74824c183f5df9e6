//! Zeta-type series with explicit truncation bounds.
//!
//! The Hurwitz zeta function is evaluated by Euler–Maclaurin summation. For
//! `s > 1` and `a > 0` the remainder after the last correction term is bounded
//! in absolute value by the first omitted term, which is returned alongside.

/// B_2, B_4, ..., B_24.
const BERNOULLI: [f64; 12] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
];

const DIRECT_TERMS: usize = 32;
const CORRECTIONS: usize = 10;

/// Value of a truncated series together with a bound on the truncation error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounded {
    pub value: f64,
    pub error: f64,
}

/// `ζ(s, a) = Σ_{k≥0} (a+k)^{-s}` for `s > 1`, `a > 0`.
pub fn hurwitz_zeta_bounded(s: f64, a: f64) -> Option<Bounded> {
    if !(s > 1.0) || !(a > 0.0) || !s.is_finite() || !a.is_finite() {
        return None;
    }
    let n = DIRECT_TERMS as f64;
    let mut head = 0.0;
    // smallest terms first
    for k in (0..DIRECT_TERMS).rev() {
        head += (a + k as f64).powf(-s);
    }
    let x = a + n;
    let mut tail = x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    // rising factorial s(s+1)...(s+2j-2) / (2j)!, times x^{-s-2j+1}
    let mut coef = s / 2.0;
    let mut pow = x.powf(-s - 1.0);
    let mut last = 0.0;
    for (j, b) in BERNOULLI.iter().enumerate() {
        let term = b * coef * pow;
        if j == CORRECTIONS {
            last = term.abs();
            break;
        }
        tail += term;
        let m = 2.0 * (j as f64 + 1.0);
        coef *= (s + m - 1.0) * (s + m) / ((m + 1.0) * (m + 2.0));
        pow /= x * x;
    }
    Some(Bounded {
        value: head + tail,
        error: last + 4.0 * f64::EPSILON * (head + tail).abs(),
    })
}

/// `ζ(s, a)`; `None` outside `s > 1`, `a > 0`.
pub fn hurwitz_zeta(s: f64, a: f64) -> Option<f64> {
    hurwitz_zeta_bounded(s, a).map(|b| b.value)
}

/// Riemann zeta `ζ(s)` for `s > 1`.
pub fn zeta(s: f64) -> Option<f64> {
    hurwitz_zeta(s, 1.0)
}

/// `Σ_{k>n} k^{-s}` for integer `n ≥ 0`.
pub fn power_tail(s: f64, n: u64) -> Option<f64> {
    hurwitz_zeta(s, n as f64 + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn known_values() {
        assert_relative_eq!(zeta(2.0).unwrap(), PI * PI / 6.0, max_relative = 1e-14);
        assert_relative_eq!(zeta(4.0).unwrap(), PI.powi(4) / 90.0, max_relative = 1e-14);
        assert_relative_eq!(zeta(3.0).unwrap(), 1.202_056_903_159_594_2, max_relative = 1e-14);
        assert_relative_eq!(zeta(1.5).unwrap(), 2.612_375_348_685_488, max_relative = 1e-13);
    }

    #[test]
    fn tail_matches_direct_difference() {
        let direct: f64 = (1..=10).map(|k| (k as f64).powf(-3.5)).sum();
        let total = zeta(3.5).unwrap();
        assert_relative_eq!(power_tail(3.5, 10).unwrap(), total - direct, max_relative = 1e-11);
    }

    #[test]
    fn error_bound_is_tiny() {
        let b = hurwitz_zeta_bounded(1.2, 1.0).unwrap();
        assert!(b.error < 1e-12, "{b:?}");
    }

    #[test]
    fn rejects_divergent_arguments() {
        assert!(zeta(1.0).is_none());
        assert!(hurwitz_zeta(2.0, 0.0).is_none());
    }
}
