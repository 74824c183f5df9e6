//! Parametric interaction kernels and rate functions.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Nonnegative nonincreasing kernel `h(t)`, `t ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Kernel {
    /// `scale · e^{-rate·t}`.
    Exponential { scale: f64, rate: f64 },
    /// `values[m]` on `[m·width, (m+1)·width)`, zero afterwards.
    Step { width: f64, values: Vec<f64> },
}

impl Kernel {
    pub fn exponential(scale: f64, rate: f64) -> Result<Self> {
        let k = Kernel::Exponential { scale, rate };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::Exponential { scale, rate } => {
                if !(scale.is_finite() && *scale >= 0.0) {
                    return Err(Error::param("kernel.scale", "must be finite and >= 0"));
                }
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(Error::param("kernel.rate", "must be finite and > 0"));
                }
            }
            Kernel::Step { width, values } => {
                if !(width.is_finite() && *width > 0.0) {
                    return Err(Error::param("kernel.width", "must be finite and > 0"));
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::param("kernel.values", "must be finite and >= 0"));
                }
                if values.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::param("kernel.values", "must be nonincreasing"));
                }
            }
        }
        Ok(())
    }

    /// `h(t)`; zero for negative `t`.
    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match self {
            Kernel::Exponential { scale, rate } => scale * (-rate * t).exp(),
            Kernel::Step { width, values } => {
                let m = (t / width).floor();
                if m < values.len() as f64 {
                    values[m as usize]
                } else {
                    0.0
                }
            }
        }
    }

    pub fn at_zero(&self) -> f64 {
        self.eval(0.0)
    }

    /// `‖h‖₁`.
    pub fn l1_norm(&self) -> f64 {
        match self {
            Kernel::Exponential { scale, rate } => scale / rate,
            Kernel::Step { width, values } => width * values.iter().sum::<f64>(),
        }
    }

    /// `∫_a^b h(t) dt` for `0 ≤ a ≤ b`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let a = a.max(0.0);
        if b <= a {
            return 0.0;
        }
        match self {
            Kernel::Exponential { scale, rate } => {
                scale / rate * ((-rate * a).exp() - (-rate * b).exp())
            }
            Kernel::Step { width, values } => values
                .iter()
                .enumerate()
                .map(|(m, v)| {
                    let lo = (m as f64 * width).max(a);
                    let hi = ((m + 1) as f64 * width).min(b);
                    if hi > lo {
                        v * (hi - lo)
                    } else {
                        0.0
                    }
                })
                .sum(),
        }
    }

    /// Length of the support, infinite for exponential kernels.
    pub fn support(&self) -> f64 {
        match self {
            Kernel::Exponential { scale, .. } if *scale == 0.0 => 0.0,
            Kernel::Exponential { .. } => f64::INFINITY,
            Kernel::Step { width, values } => {
                let last = values.iter().rposition(|v| *v > 0.0);
                last.map_or(0.0, |m| (m + 1) as f64 * width)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.support() == 0.0
    }

    /// `sup_{m ≥ m0} h(m·step) / r^m`, or `None` when unbounded.
    pub fn sup_geometric_ratio(&self, m0: u64, step: f64, r: f64) -> Option<f64> {
        match self {
            Kernel::Exponential { scale, .. } if *scale == 0.0 => Some(0.0),
            Kernel::Exponential { scale, rate } => {
                let q = (-rate * step).exp();
                if q > r {
                    return None;
                }
                // decreasing in m: attained at m0
                let v = scale * (-rate * step * m0 as f64).exp() / r.powf(m0 as f64);
                v.is_finite().then_some(v)
            }
            Kernel::Step { .. } => {
                let support = self.support();
                let mut best: f64 = 0.0;
                let mut m = m0;
                while (m as f64) * step < support {
                    best = best.max(self.eval(m as f64 * step) / r.powf(m as f64));
                    m += 1;
                }
                best.is_finite().then_some(best)
            }
        }
    }
}

/// Nondecreasing Lipschitz rate function `ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateFunction {
    /// `offset + slope·u`.
    Affine { offset: f64, slope: f64 },
    /// `min(offset + slope·u, cap)`.
    Saturating { offset: f64, slope: f64, cap: f64 },
}

impl RateFunction {
    pub fn identity() -> Self {
        RateFunction::Affine {
            offset: 0.0,
            slope: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (offset, slope) = match *self {
            RateFunction::Affine { offset, slope } => (offset, slope),
            RateFunction::Saturating { offset, slope, cap } => {
                if !(cap.is_finite() && cap >= offset) {
                    return Err(Error::param("psi.cap", "must be finite and >= offset"));
                }
                (offset, slope)
            }
        };
        if !(offset.is_finite() && offset >= 0.0) {
            return Err(Error::param("psi.offset", "must be finite and >= 0"));
        }
        if !(slope.is_finite() && slope >= 0.0) {
            return Err(Error::param("psi.slope", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            RateFunction::Affine { offset, slope } => offset + slope * u,
            RateFunction::Saturating { offset, slope, cap } => (offset + slope * u).min(cap),
        }
    }

    pub fn at_zero(&self) -> f64 {
        self.eval(0.0)
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            RateFunction::Affine { slope, .. } | RateFunction::Saturating { slope, .. } => slope,
        }
    }
}

/// Rate function analytic at 0 with nonnegative Taylor coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnalyticRate {
    /// `scale·e^u`.
    Exponential { scale: f64 },
    /// `scale·cosh(u)`.
    Cosh { scale: f64 },
    /// `Σ c_k u^k` with finitely many coefficients.
    Polynomial { coefficients: Vec<f64> },
    /// `scale / (1 - u/radius)`.
    Geometric { scale: f64, radius: f64 },
}

impl AnalyticRate {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            AnalyticRate::Exponential { scale } | AnalyticRate::Cosh { scale } => {
                scale.is_finite() && *scale >= 0.0
            }
            AnalyticRate::Polynomial { coefficients } => {
                coefficients.iter().all(|c| c.is_finite() && *c >= 0.0)
            }
            AnalyticRate::Geometric { scale, radius } => {
                scale.is_finite() && *scale >= 0.0 && radius.is_finite() && *radius > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(
                "psi",
                "coefficients must be finite and nonnegative, radius positive",
            ))
        }
    }

    /// `ψ^{(k)}(0) / k!`.
    pub fn coefficient(&self, k: u32) -> f64 {
        match self {
            AnalyticRate::Exponential { scale } => scale / factorial(k),
            AnalyticRate::Cosh { scale } => {
                if k % 2 == 0 {
                    scale / factorial(k)
                } else {
                    0.0
                }
            }
            AnalyticRate::Polynomial { coefficients } => {
                coefficients.get(k as usize).copied().unwrap_or(0.0)
            }
            AnalyticRate::Geometric { scale, radius } => scale * radius.powi(-(k as i32)),
        }
    }

    /// Radius of convergence `K`.
    pub fn radius(&self) -> f64 {
        match self {
            AnalyticRate::Geometric { radius, .. } => *radius,
            _ => f64::INFINITY,
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            AnalyticRate::Exponential { scale } => scale * u.exp(),
            AnalyticRate::Cosh { scale } => scale * u.cosh(),
            AnalyticRate::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, c| acc * u + c)
            }
            AnalyticRate::Geometric { scale, radius } => {
                if u.abs() < *radius {
                    scale / (1.0 - u / radius)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `sup_{k ≥ 0} c_k z^k` for `z ≥ 0`, or `None` when infinite.
    pub fn sup_weighted(&self, z: f64) -> Option<f64> {
        if z == 0.0 {
            return Some(self.coefficient(0));
        }
        let best = match self {
            AnalyticRate::Polynomial { coefficients } => coefficients
                .iter()
                .enumerate()
                .map(|(k, c)| c * z.powi(k as i32))
                .fold(0.0, f64::max),
            AnalyticRate::Geometric { scale, radius } => {
                if z > *radius {
                    return None;
                }
                *scale
            }
            AnalyticRate::Exponential { .. } | AnalyticRate::Cosh { .. } => {
                // z^k/k! peaks at k = floor(z); work in logs to dodge overflow
                let k0 = z.floor() as u32;
                let mut best = f64::NEG_INFINITY;
                let scale = match self {
                    AnalyticRate::Exponential { scale } | AnalyticRate::Cosh { scale } => *scale,
                    _ => unreachable!(),
                };
                if scale == 0.0 {
                    return Some(0.0);
                }
                for k in k0.saturating_sub(2)..=k0 + 2 {
                    if matches!(self, AnalyticRate::Cosh { .. }) && k % 2 == 1 {
                        continue;
                    }
                    let ln_c = scale.ln() - ln_gamma(k as f64 + 1.0);
                    best = best.max(ln_c + k as f64 * z.ln());
                }
                if best > 700.0 {
                    return None;
                }
                best.exp()
            }
        };
        best.is_finite().then_some(best)
    }
}

fn factorial(k: u32) -> f64 {
    (1..=k).fold(1.0, |acc, m| acc * m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_functionals() {
        let h = Kernel::exponential(2.0, 4.0).unwrap();
        assert_eq!(h.at_zero(), 2.0);
        assert_eq!(h.l1_norm(), 0.5);
        assert_relative_eq!(h.integral(0.0, f64::INFINITY), 0.5);
        assert_relative_eq!(h.eval(0.25), 2.0 * (-1.0f64).exp());
    }

    #[test]
    fn step_functionals() {
        let h = Kernel::Step {
            width: 0.5,
            values: vec![3.0, 2.0, 0.0],
        };
        h.validate().unwrap();
        assert_eq!(h.eval(0.49), 3.0);
        assert_eq!(h.eval(0.5), 2.0);
        assert_eq!(h.eval(1.2), 0.0);
        assert_eq!(h.l1_norm(), 2.5);
        assert_eq!(h.support(), 1.0);
        assert_relative_eq!(h.integral(0.25, 0.75), 0.75 + 0.5);
    }

    #[test]
    fn step_must_be_monotone() {
        let h = Kernel::Step {
            width: 1.0,
            values: vec![1.0, 2.0],
        };
        assert!(h.validate().is_err());
    }

    #[test]
    fn geometric_ratio() {
        let h = Kernel::exponential(1.0, 1.0).unwrap();
        // e^{-0.5} ≈ 0.607 <= 0.7
        let v = h.sup_geometric_ratio(2, 0.5, 0.7).unwrap();
        assert_relative_eq!(v, (-1.0f64).exp() / 0.49);
        assert!(h.sup_geometric_ratio(0, 0.5, 0.5).is_none());
    }

    #[test]
    fn analytic_coefficients() {
        let e = AnalyticRate::Exponential { scale: 1.0 };
        assert_eq!(e.coefficient(0), 1.0);
        assert_eq!(e.coefficient(3), 1.0 / 6.0);
        let c = AnalyticRate::Cosh { scale: 1.0 };
        assert_eq!(c.coefficient(1), 0.0);
        let g = AnalyticRate::Geometric {
            scale: 1.0,
            radius: 2.0,
        };
        assert_eq!(g.coefficient(2), 0.25);
        assert_relative_eq!(g.eval(1.0), 2.0);
    }

    #[test]
    fn sup_weighted_exponential() {
        let e = AnalyticRate::Exponential { scale: 1.0 };
        // z = 3: 3^3/6 = 4.5 = 3^2/2
        assert_relative_eq!(e.sup_weighted(3.0).unwrap(), 4.5, max_relative = 1e-12);
        assert!(e.sup_weighted(2000.0).is_none());
    }
}
