//! Closed-form unit-step responses of the two-pole, one-zero model with dead
//! time.

use super::TransferFunction;
use crate::{Error, Result};

/// Relative pole gap below which the repeated-pole form is used.
pub const EQUAL_POLE_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoleBranch {
    Distinct,
    Equal,
}

pub fn equal_pole_dispatch(tau1: f64, tau2: f64) -> PoleBranch {
    if (tau1 - tau2).abs() <= EQUAL_POLE_RTOL * tau1.abs().max(tau2.abs()) {
        PoleBranch::Equal
    } else {
        PoleBranch::Distinct
    }
}

/// Unit-step response of `k0 (tz s + 1) / ((tau1 s + 1)(tau2 s + 1)) e^(-td s)`
/// at time `t`. Exactly zero before the dead time.
///
/// Distinct poles:
/// `k0 (1 - (tz - t1)/(t2 - t1) e^(-dt/t1) - (t2 - tz)/(t2 - t1) e^(-dt/t2))`,
/// repeated pole: `k0 (1 - (1 + dt (t1 - tz) / t1^2) e^(-dt/t1))`,
/// with `dt = t - td`.
#[inline]
pub fn sopdt_step(k0: f64, tau1: f64, tau2: f64, tau_z: f64, delay: f64, t: f64) -> f64 {
    let dt = t - delay;
    if dt < 0.0 {
        return 0.0;
    }
    match equal_pole_dispatch(tau1, tau2) {
        PoleBranch::Distinct => {
            let span = tau2 - tau1;
            k0 * (1.0
                - (tau_z - tau1) / span * (-dt / tau1).exp()
                - (tau2 - tau_z) / span * (-dt / tau2).exp())
        }
        PoleBranch::Equal => {
            k0 * (1.0 - (1.0 + dt * (tau1 - tau_z) / (tau1 * tau1)) * (-dt / tau1).exp())
        }
    }
}

/// Closed-form step response for models with one or two poles and at most one
/// zero (a static gain without zeros is also accepted). A missing zero is
/// `tz = 0`.
pub fn step_response_analytic(g: &TransferFunction, t: f64) -> Result<f64> {
    let zeros: Vec<f64> = g.effective_zeros().collect();
    let poles = g.poles();
    if poles.len() > 2 || zeros.len() > 1 || (poles.is_empty() && !zeros.is_empty()) {
        return Err(Error::UnsupportedStructure {
            poles: poles.len(),
            zeros: zeros.len(),
        });
    }
    let dt = t - g.delay();
    if dt < 0.0 {
        return Ok(0.0);
    }
    let tau_z = zeros.first().copied().unwrap_or(0.0);
    Ok(match *poles {
        [] => g.k0(),
        [tau] => g.k0() * (1.0 - (1.0 - tau_z / tau) * (-dt / tau).exp()),
        [tau1, tau2] => sopdt_step(g.k0(), tau1, tau2, tau_z, g.delay(), t),
        _ => unreachable!(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dispatch_branches() {
        assert_eq!(equal_pole_dispatch(7.93, 7.93), PoleBranch::Equal);
        assert_eq!(equal_pole_dispatch(9.23, 18103.3), PoleBranch::Distinct);
        assert_eq!(equal_pole_dispatch(1.0, 1.0 + 1e-15), PoleBranch::Equal);
    }

    #[test]
    fn zero_before_delay() {
        let g = TransferFunction::sopdt(-20.54, 7.93, 7.93, 21.74, 0.18).unwrap();
        for t in [0.0, 0.05, 0.1799999] {
            assert_eq!(step_response_analytic(&g, t).unwrap(), 0.0);
        }
        assert_eq!(step_response_analytic(&g, 0.18).unwrap(), 0.0);
    }

    #[test]
    fn repeated_pole_limits() {
        let g = TransferFunction::sopdt(1.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(step_response_analytic(&g, 0.0).unwrap(), 0.0);
        assert_relative_eq!(
            step_response_analytic(&g, 60.0).unwrap(),
            1.0,
            epsilon = 1e-20
        );
        // 1 - (1 + t) e^-t at t = 1
        assert_relative_eq!(
            step_response_analytic(&g, 1.0).unwrap(),
            1.0 - 2.0 * (-1.0f64).exp(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn overshoot_when_zero_exceeds_pole() {
        // Dense-grid peak of the P_ph -> X_O2,Ca model; tz > tau1 gives an
        // overshoot past the final value.
        let g = TransferFunction::sopdt(-20.54, 7.93, 7.93, 21.74, 0.18).unwrap();
        let (mut peak_t, mut peak) = (0.0, 0.0);
        for i in 0..200_000 {
            let t = 0.18 + i as f64 * 0.001;
            let y = step_response_analytic(&g, t).unwrap();
            if y < peak {
                peak = y;
                peak_t = t;
            }
        }
        assert!(peak < -20.54);
        // Stationary point of (1 + a dt) e^(-dt/tau), a = (tau - tz)/tau^2,
        // is dt* = tau - 1/a.
        let tau: f64 = 7.93;
        let a = (tau - 21.74) / (tau * tau);
        let dt_star = tau - 1.0 / a;
        assert!((peak_t - 0.18 - dt_star).abs() < 2e-3);
        assert_relative_eq!(
            step_response_analytic(&g, 1e4).unwrap(),
            -20.54,
            max_relative = 1e-12
        );
    }

    #[test]
    fn one_pole_with_zero_jumps_at_delay() {
        let g = TransferFunction::new(2.0, vec![1.0], vec![4.0], 3.0).unwrap();
        assert_eq!(step_response_analytic(&g, 2.999).unwrap(), 0.0);
        assert_relative_eq!(step_response_analytic(&g, 3.0).unwrap(), 2.0 * 0.25);
    }

    #[test]
    fn unsupported_structures() {
        let g = TransferFunction::new(1.0, vec![], vec![3.0, 2.0, 1.0], 0.0).unwrap();
        assert!(matches!(
            step_response_analytic(&g, 1.0),
            Err(Error::UnsupportedStructure { poles: 3, .. })
        ));
        let g = TransferFunction::new(1.0, vec![1.0, 2.0], vec![3.0, 2.5], 0.0).unwrap();
        assert!(step_response_analytic(&g, 1.0).is_err());
    }

    #[test]
    fn neutral_zero_is_ignored() {
        let a = TransferFunction::new(1.5, vec![0.0], vec![2.0, 3.0], 0.5).unwrap();
        let b = TransferFunction::new(1.5, vec![], vec![2.0, 3.0], 0.5).unwrap();
        for t in [0.6, 1.0, 5.0] {
            assert_eq!(
                step_response_analytic(&a, t).unwrap(),
                step_response_analytic(&b, t).unwrap()
            );
        }
    }
}
