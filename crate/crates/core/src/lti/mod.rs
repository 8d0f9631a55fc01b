//! Transfer functions in time-constant form with dead time,
//!
//! ```text
//!   G(s) = k0 * prod(tz_i s + 1) / prod(tp_i s + 1) * exp(-td s)
//! ```
//!
//! their closed-form and numeric step responses, and the sampled-signal
//! container used throughout the crate.

mod analytic;
mod realize;
mod series;
mod sim;

pub use analytic::{
    equal_pole_dispatch, sopdt_step, step_response_analytic, PoleBranch, EQUAL_POLE_RTOL,
};
pub use realize::{to_state_space, CANCELLATION_RTOL};
pub use series::TimeSeries;
pub use sim::{step_response_numeric, DelayedRealization};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Gain, zero and pole time constants (seconds) and dead time (seconds).
///
/// Poles are strictly positive and kept sorted in descending order, as are
/// the zeros. A zero time constant of exactly 0 is the neutral factor
/// `(0 s + 1) = 1`, so the fitted second-order form can always carry one zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransferFunctionDoc", into = "TransferFunctionDoc")]
pub struct TransferFunction {
    k0: f64,
    zeros: Vec<f64>,
    poles: Vec<f64>,
    delay: f64,
}

#[derive(Serialize, Deserialize)]
struct TransferFunctionDoc {
    k0: f64,
    #[serde(default)]
    zeros: Vec<f64>,
    #[serde(default)]
    poles: Vec<f64>,
    #[serde(default)]
    delay: f64,
}

impl TryFrom<TransferFunctionDoc> for TransferFunction {
    type Error = Error;

    fn try_from(doc: TransferFunctionDoc) -> Result<Self> {
        TransferFunction::new(doc.k0, doc.zeros, doc.poles, doc.delay)
    }
}

impl From<TransferFunction> for TransferFunctionDoc {
    fn from(g: TransferFunction) -> Self {
        TransferFunctionDoc {
            k0: g.k0,
            zeros: g.zeros,
            poles: g.poles,
            delay: g.delay,
        }
    }
}

fn sort_descending(v: &mut [f64]) {
    v.sort_by(|a, b| b.total_cmp(a));
}

impl TransferFunction {
    pub fn new(k0: f64, mut zeros: Vec<f64>, mut poles: Vec<f64>, delay: f64) -> Result<Self> {
        if !k0.is_finite() {
            return Err(Error::InvalidModel(format!("gain {k0} is not finite")));
        }
        if let Some(z) = zeros.iter().find(|z| !z.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "zero time constant {z} is not finite"
            )));
        }
        if let Some(p) = poles.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::InvalidModel(format!(
                "pole time constant {p} must be finite and positive"
            )));
        }
        if !(delay.is_finite() && delay >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "delay {delay} must be finite and non-negative"
            )));
        }
        sort_descending(&mut zeros);
        sort_descending(&mut poles);
        Ok(TransferFunction {
            k0,
            zeros,
            poles,
            delay,
        })
    }

    /// `k0 (tz s + 1) / ((tau1 s + 1)(tau2 s + 1)) e^(-td s)`.
    pub fn sopdt(k0: f64, tau1: f64, tau2: f64, tau_z: f64, delay: f64) -> Result<Self> {
        Self::new(k0, vec![tau_z], vec![tau1, tau2], delay)
    }

    /// `k / (tau s + 1) e^(-td s)`.
    pub fn fopdt(k: f64, tau: f64, delay: f64) -> Result<Self> {
        Self::new(k, vec![], vec![tau], delay)
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    pub fn zeros(&self) -> &[f64] {
        &self.zeros
    }

    pub fn poles(&self) -> &[f64] {
        &self.poles
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    /// Zeros other than the neutral `tz = 0`.
    pub fn effective_zeros(&self) -> impl Iterator<Item = f64> + '_ {
        self.zeros.iter().copied().filter(|z| *z != 0.0)
    }

    pub fn with_gain(&self, k0: f64) -> Result<Self> {
        Self::new(k0, self.zeros.clone(), self.poles.clone(), self.delay)
    }

    pub fn with_delay(&self, delay: f64) -> Result<Self> {
        Self::new(self.k0, self.zeros.clone(), self.poles.clone(), delay)
    }

    /// `G(s)` at a complex frequency (1/s), dead time included.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        let one = Complex64::new(1.0, 0.0);
        let num = self.zeros.iter().fold(one, |acc, z| acc * (s * *z + one));
        let den = self.poles.iter().fold(one, |acc, p| acc * (s * *p + one));
        num / den * (-s * self.delay).exp() * self.k0
    }

    /// Frequency response `G(i w)`.
    pub fn frequency_response(&self, omega: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, omega))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poles_sorted_descending() {
        let g = TransferFunction::sopdt(0.29, 9.23, 18103.3, 3663.1, 0.04).unwrap();
        assert_eq!(g.poles(), &[18103.3, 9.23]);
    }

    #[test]
    fn rejects_invalid_fields() {
        assert!(TransferFunction::new(1.0, vec![], vec![0.0], 0.0).is_err());
        assert!(TransferFunction::new(1.0, vec![], vec![-2.0], 0.0).is_err());
        assert!(TransferFunction::new(1.0, vec![], vec![1.0], -0.1).is_err());
        assert!(TransferFunction::new(f64::NAN, vec![], vec![1.0], 0.0).is_err());
        assert!(TransferFunction::new(1.0, vec![f64::INFINITY], vec![1.0], 0.0).is_err());
    }

    #[test]
    fn json_shape_and_validation() {
        let g: TransferFunction =
            serde_json::from_str(r#"{"k0": 2.0, "zeros": [], "poles": [5.0], "delay": 1.5}"#)
                .unwrap();
        assert_eq!(g.k0(), 2.0);
        let text = serde_json::to_string(&g).unwrap();
        assert_eq!(text, r#"{"k0":2.0,"zeros":[],"poles":[5.0],"delay":1.5}"#);
        assert!(
            serde_json::from_str::<TransferFunction>(r#"{"k0": 1.0, "poles": [-1.0]}"#).is_err()
        );
    }

    #[test]
    fn static_gain_and_phase_of_delay() {
        let g = TransferFunction::new(3.0, vec![], vec![], 2.0).unwrap();
        let w = 0.25;
        let v = g.frequency_response(w);
        assert!((v.norm() - 3.0).abs() < 1e-14);
        assert!((v.arg() + w * 2.0).abs() < 1e-14);
    }
}
