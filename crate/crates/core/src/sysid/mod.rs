//! Step-test identification: battery generation, normalization of recorded
//! responses and least-squares fitting of
//!
//! ```text
//!   G(s) = k0 (tz s + 1) / ((tau1 s + 1)(tau2 s + 1)) e^(-td s)
//! ```
//!
//! to normalized step data.

mod battery;
mod fit;
mod lm;

pub use battery::{
    fit_battery, raw_column, run_step_battery, sample_times, PairFits, Refinement, StepBattery,
    StepExperiment, StepFit, StepRecord, MAX_REFINED_SAMPLES,
};
pub use fit::{fit_sopdt, FitResult, MAX_ITERATIONS};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::lti::TransferFunction;
use crate::{Error, Result};

/// Detection threshold for the first response sample.
pub const RESPONSE_EPSILON: f64 = 1e-10;

/// Relative steps of the reference protocol: -1 %, -0.5 %, +1 %, +0.5 % of
/// the steady-state MV value.
pub const REFERENCE_STEP_SIZES: [f64; 4] = [-0.01, -0.005, 0.01, 0.005];

/// 100 samples per hour, i.e. one sample every 36 s.
pub const REFERENCE_SAMPLES_PER_HOUR: f64 = 100.0;

/// Fraction of the window averaged for the stationary gain estimate.
const TAIL_FRACTION: f64 = 0.05;

/// Response per unit input change, with `t` measured from the step instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedStep {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
}

impl NormalizedStep {
    pub fn new(t: Vec<f64>, s: Vec<f64>) -> Result<Self> {
        if t.len() != s.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} times but {} values",
                t.len(),
                s.len()
            )));
        }
        if t.is_empty() {
            return Err(Error::validation("t", "no samples"));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation(
                "t",
                "sample times must increase strictly",
            ));
        }
        Ok(NormalizedStep { t, s })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Synthetic response of a model on the given grid.
    pub fn from_model(g: &TransferFunction, t: Vec<f64>) -> Result<Self> {
        let s = t
            .iter()
            .map(|&ti| crate::lti::step_response_analytic(g, ti))
            .collect::<Result<Vec<_>>>()?;
        Self::new(t, s)
    }

    /// Adds Gaussian noise with standard deviation `rel * max|s|`.
    pub fn with_noise<R: Rng + ?Sized>(&self, rel: f64, rng: &mut R) -> Self {
        let amp = self.s.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let sigma = rel * amp;
        if !(sigma > 0.0) {
            return self.clone();
        }
        let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
        let s = self.s.iter().map(|v| v + normal.sample(rng)).collect();
        NormalizedStep {
            t: self.t.clone(),
            s,
        }
    }

    /// Time between consecutive samples at or after `t`.
    pub(crate) fn spacing_near(&self, t: f64) -> f64 {
        let i = self
            .t
            .partition_point(|&ti| ti < t)
            .min(self.t.len().saturating_sub(1));
        let next = if i + 1 < self.t.len() {
            self.t[i + 1] - self.t[i]
        } else {
            f64::INFINITY
        };
        let prev = if i > 0 {
            self.t[i] - self.t[i - 1]
        } else {
            f64::INFINITY
        };
        next.min(prev)
    }
}

/// `s(t) = (z(t) - z(t0)) / (u(t) - u(t0))`.
///
/// The step is taken to occur immediately after the last sample, at or after
/// `t0`, at which `u` still equals `u(t0)`; the returned times are measured
/// from that instant and `s` is zero up to it.
pub fn normalize_step(t: &[f64], z: &[f64], u: &[f64], t0: f64) -> Result<NormalizedStep> {
    if t.len() != z.len() || t.len() != u.len() {
        return Err(Error::DimensionMismatch(format!(
            "t, z and u have {}, {} and {} samples",
            t.len(),
            z.len(),
            u.len()
        )));
    }
    let i0 = t.partition_point(|&ti| ti < t0);
    if i0 >= t.len() {
        return Err(Error::validation(
            "t0",
            format!("{t0} is past the last sample"),
        ));
    }
    let (z0, u0) = (z[i0], u[i0]);
    let tol = 1e-15 * u0.abs().max(f64::MIN_POSITIVE);
    let changed = |v: f64| (v - u0).abs() > tol;
    let ic = (i0..t.len())
        .find(|&i| changed(u[i]))
        .ok_or(Error::ZeroStep)?;
    let t_step = t[ic - 1];

    let mut ts = Vec::with_capacity(t.len() - i0);
    let mut s = Vec::with_capacity(t.len() - i0);
    for i in i0..t.len() {
        ts.push(t[i] - t_step);
        if i < ic {
            s.push(0.0);
        } else {
            if !changed(u[i]) {
                return Err(Error::ZeroStep);
            }
            s.push((z[i] - z0) / (u[i] - u0));
        }
    }
    NormalizedStep::new(ts, s)
}

/// Starting point for the fit: `k0` from the settled tail, `td` from the first
/// sample whose magnitude exceeds [`RESPONSE_EPSILON`], both poles at half the
/// 63 % rise time past `td`, and `tz = 0`.
pub fn initial_guess(step: &NormalizedStep) -> Result<TransferFunction> {
    let n = step.len();
    let tail = ((n as f64 * TAIL_FRACTION).ceil() as usize).clamp(1, n);
    let k0 = step.s[n - tail..].iter().sum::<f64>() / tail as f64;

    let first = (0..n)
        .find(|&i| step.t[i] >= 0.0 && step.s[i].abs() > RESPONSE_EPSILON)
        .ok_or(Error::NeverResponds)?;
    let delay = step.t[first].max(0.0);

    let target = 0.632 * k0.abs();
    let t63 = (first..n)
        .find(|&i| step.s[i] * k0.signum() >= target)
        .map(|i| step.t[i])
        .unwrap_or(delay);
    let floor = 0.5
        * step
            .spacing_near(delay)
            .min(step.t[n - 1] - step.t[0])
            .max(1e-6);
    let pole = (0.5 * (t63 - delay)).max(floor);
    TransferFunction::sopdt(k0, pole, pole, 0.0, delay)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * dt).collect()
    }

    #[test]
    fn constant_ratio() {
        let t = grid(10, 1.0);
        let u: Vec<f64> = t.iter().map(|&t| if t > 0.0 { 3.0 } else { 1.0 }).collect();
        let z: Vec<f64> = u.iter().map(|u| 5.0 + 2.0 * (u - 1.0)).collect();
        let ns = normalize_step(&t, &z, &u, 0.0).unwrap();
        assert_eq!(ns.s[0], 0.0);
        assert!(ns.s[1..].iter().all(|s| *s == 2.0));
    }

    #[test]
    fn percent_step_arithmetic() {
        let t = grid(6, 36.0);
        let u = vec![100.0, 101.0, 101.0, 101.0, 101.0, 101.0];
        let z = vec![0.0, 1.0, 2.5, 4.0, 5.0, 5.0];
        let ns = normalize_step(&t, &z, &u, 0.0).unwrap();
        assert_eq!(ns.s, vec![0.0, 1.0, 2.5, 4.0, 5.0, 5.0]);
        assert_eq!(ns.t[0], 0.0);
    }

    #[test]
    fn step_instant_after_idle_period() {
        let t = grid(6, 1.0);
        let u = vec![2.0, 2.0, 2.0, 2.5, 2.5, 2.5];
        let z = vec![1.0, 1.0, 1.0, 1.0, 1.5, 2.0];
        let ns = normalize_step(&t, &z, &u, 0.0).unwrap();
        assert_eq!(ns.t, vec![-2.0, -1.0, 0.0, 1.0, 2.0, 3.0]);
        assert_eq!(ns.s, vec![0.0, 0.0, 0.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn unchanged_input_is_zero_step() {
        let t = grid(5, 1.0);
        assert!(matches!(
            normalize_step(&t, &[1.0; 5], &[4.0; 5], 0.0),
            Err(Error::ZeroStep)
        ));
    }

    #[test]
    fn guess_for_pure_gain() {
        let ns = NormalizedStep::new(grid(50, 1.0), vec![1.0; 50]).unwrap();
        let g = initial_guess(&ns).unwrap();
        assert_eq!(g.k0(), 1.0);
        assert_eq!(g.delay(), 0.0);
    }

    #[test]
    fn guess_for_silent_response() {
        let ns = NormalizedStep::new(grid(50, 1.0), vec![0.0; 50]).unwrap();
        assert!(matches!(initial_guess(&ns), Err(Error::NeverResponds)));
    }

    #[test]
    fn guess_recovers_gain_and_delay() {
        // F_f,Ca -> X_CaO, sampled every 36 s over 10 slow time constants.
        let g = TransferFunction::sopdt(0.29, 18103.3, 9.23, 3663.1, 0.04).unwrap();
        let ns = NormalizedStep::from_model(&g, grid(5030, 36.0)).unwrap();
        let guess = initial_guess(&ns).unwrap();
        assert!(
            (guess.k0() - 0.29).abs() < 0.01 * 0.29,
            "k0 = {}",
            guess.k0()
        );
        assert!((guess.delay() - 0.04).abs() <= 36.0);
        assert_eq!(guess.poles()[0], guess.poles()[1]);
    }

    #[test]
    fn noise_is_seeded() {
        let ns = NormalizedStep::new(grid(20, 1.0), vec![1.0; 20]).unwrap();
        let a = ns.with_noise(0.01, &mut rand_chacha::ChaCha8Rng::seed_from_u64(3));
        let b = ns.with_noise(0.01, &mut rand_chacha::ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert_ne!(a, ns);
    }
}
