//! Direct Ogata-thinning simulators of one-node processes.
//!
//! These share no code with the core simulators and serve as references.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp};

/// A one-node intensity given on the full history.
pub trait SingleNodeIntensity {
    /// `λ(t)` given the points `history` strictly before `t`.
    fn intensity(&self, history: &[f64], t: f64) -> f64;

    /// An upper bound of `λ` on `[t, next point)`.
    fn upper_bound(&self, history: &[f64], t: f64) -> f64;
}

/// Points on `[start, end]`, simulated from an empty past at `start`.
pub fn ogata(model: &impl SingleNodeIntensity, start: f64, end: f64, seed: u64) -> Vec<f64> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut points = Vec::new();
    let mut t = start;
    loop {
        let m = model.upper_bound(&points, t);
        if m <= 0.0 {
            return points;
        }
        t += Exp::new(m).expect("positive bound").sample(&mut rng);
        if t > end {
            return points;
        }
        let lambda = model.intensity(&points, t);
        assert!(lambda <= m * (1.0 + 1e-12), "oracle bound {m} below intensity {lambda}");
        if rng.random::<f64>() * m < lambda {
            points.push(t);
        }
    }
}

/// Number of points on `[0, window]` after a burn-in of length `burn_in`.
pub fn ogata_count(model: &impl SingleNodeIntensity, burn_in: f64, window: f64, seed: u64) -> usize {
    ogata(model, -burn_in, window, seed)
        .into_iter()
        .filter(|&t| t >= 0.0)
        .count()
}

/// `μ + Σ_s a e^{-b(t-s)}`.
#[derive(Debug, Clone, Copy)]
pub struct ExpHawkes {
    pub mu: f64,
    pub a: f64,
    pub b: f64,
}

impl SingleNodeIntensity for ExpHawkes {
    fn intensity(&self, history: &[f64], t: f64) -> f64 {
        self.mu + history.iter().map(|s| self.a * (-self.b * (t - s)).exp()).sum::<f64>()
    }

    fn upper_bound(&self, history: &[f64], t: f64) -> f64 {
        // nonincreasing until the next point
        self.intensity(history, t)
    }
}

/// `1{age > δ} (c + s Σ_{u < t} a e^{-b(t-u)})`, the age being the time
/// since the most recent point.
#[derive(Debug, Clone, Copy)]
pub struct RefractoryHawkes {
    pub delta: f64,
    pub offset: f64,
    pub slope: f64,
    pub a: f64,
    pub b: f64,
}

impl RefractoryHawkes {
    fn drive(&self, history: &[f64], t: f64) -> f64 {
        history.iter().map(|u| self.a * (-self.b * (t - u)).exp()).sum()
    }
}

impl SingleNodeIntensity for RefractoryHawkes {
    fn intensity(&self, history: &[f64], t: f64) -> f64 {
        match history.last() {
            Some(&last) if t - last <= self.delta => 0.0,
            _ => self.offset + self.slope * self.drive(history, t),
        }
    }

    fn upper_bound(&self, history: &[f64], t: f64) -> f64 {
        self.offset + self.slope * self.drive(history, t)
    }
}
