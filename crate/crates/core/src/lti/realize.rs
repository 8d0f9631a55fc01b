use nalgebra::DMatrix;

use super::TransferFunction;
use crate::linss::StateSpaceModel;
use crate::{Error, Result};

/// Relative tolerance for exact pole-zero cancellation before realization.
pub const CANCELLATION_RTOL: f64 = 1e-9;

/// Ascending-power coefficients of `prod(tau_i s + 1)`.
pub(crate) fn factor_poly(taus: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for &tau in taus {
        let mut next = vec![0.0; c.len() + 1];
        for (k, &ck) in c.iter().enumerate() {
            next[k] += ck;
            next[k + 1] += ck * tau;
        }
        c = next;
    }
    c
}

/// Removes zero/pole pairs that cancel exactly and the neutral zeros.
pub(crate) fn cancel_exact(g: &TransferFunction) -> (Vec<f64>, Vec<f64>) {
    let mut poles = g.poles().to_vec();
    let mut zeros = Vec::new();
    for z in g.effective_zeros() {
        let hit = poles
            .iter()
            .position(|&p| (z - p).abs() <= CANCELLATION_RTOL * z.abs().max(p));
        match hit {
            Some(i) => {
                poles.remove(i);
            }
            None => zeros.push(z),
        }
    }
    (zeros, poles)
}

/// Controllable canonical realization of the rational part of `g`; the dead
/// time is returned separately. Biproper models carry a feedthrough `D`.
pub fn to_state_space(g: &TransferFunction) -> Result<(f64, StateSpaceModel)> {
    let (zeros, poles) = cancel_exact(g);
    if zeros.len() > poles.len() {
        return Err(Error::ImproperSystem {
            zeros: zeros.len(),
            poles: poles.len(),
        });
    }
    let n = poles.len();
    let mut num: Vec<f64> = factor_poly(&zeros)
        .into_iter()
        .map(|c| c * g.k0())
        .collect();
    num.resize(n + 1, 0.0);
    let den = factor_poly(&poles);
    let lead = den[n];
    let a_coef: Vec<f64> = den.iter().map(|c| c / lead).collect();
    let b_coef: Vec<f64> = num.iter().map(|c| c / lead).collect();

    let d = b_coef[n];
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, 1);
    let mut c = DMatrix::zeros(1, n);
    for i in 0..n {
        if i + 1 < n {
            a[(i, i + 1)] = 1.0;
        }
        a[(n - 1, i)] = -a_coef[i];
        c[(0, i)] = b_coef[i] - d * a_coef[i];
    }
    if n > 0 {
        b[(n - 1, 0)] = 1.0;
    }
    let ss = StateSpaceModel::new(a, b, c, DMatrix::from_element(1, 1, d))?;
    Ok((g.delay(), ss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linss::transfer_at;
    use num_complex::Complex64;

    #[test]
    fn first_order_realization() {
        let g = TransferFunction::new(2.0, vec![], vec![5.0], 0.0).unwrap();
        let (delay, ss) = to_state_space(&g).unwrap();
        assert_eq!(delay, 0.0);
        assert!((ss.a[(0, 0)] + 0.2).abs() < 1e-15);
        assert_eq!(ss.b[(0, 0)], 1.0);
        assert!((ss.c[(0, 0)] - 0.4).abs() < 1e-15);
        assert_eq!(ss.d[(0, 0)], 0.0);
        let g0 = transfer_at(&ss, Complex64::new(0.0, 0.0)).unwrap();
        assert!((g0[(0, 0)].re - 2.0).abs() < 1e-14);
    }

    #[test]
    fn realization_matches_frequency_response() {
        let g = TransferFunction::new(-4.75, vec![2694.2], vec![20072.9, 1001.1], 1073.9).unwrap();
        let rational = g.with_delay(0.0).unwrap();
        let (delay, ss) = to_state_space(&g).unwrap();
        assert_eq!(delay, 1073.9);
        for w in [0.0, 1e-5, 1e-4, 1e-3, 1e-2] {
            let s = Complex64::new(0.0, w);
            let want = rational.eval(s);
            let got = transfer_at(&ss, s).unwrap()[(0, 0)];
            assert!(
                (want - got).norm() <= 1e-9 * want.norm().max(1e-12),
                "w={w}"
            );
        }
    }

    #[test]
    fn exact_cancellation_before_properness_check() {
        let g = TransferFunction::new(1.5, vec![3.0], vec![3.0], 0.2).unwrap();
        let (_, ss) = to_state_space(&g).unwrap();
        assert_eq!(ss.states(), 0);
        assert_eq!(ss.d[(0, 0)], 1.5);
    }

    #[test]
    fn improper_is_rejected() {
        let g = TransferFunction::new(1.0, vec![1.0, 2.0], vec![4.0], 0.0).unwrap();
        assert!(matches!(
            to_state_space(&g),
            Err(Error::ImproperSystem { zeros: 2, poles: 1 })
        ));
    }

    #[test]
    fn biproper_has_feedthrough() {
        let g = TransferFunction::new(2.0, vec![1.0], vec![4.0], 0.0).unwrap();
        let (_, ss) = to_state_space(&g).unwrap();
        assert!((ss.d[(0, 0)] - 0.5).abs() < 1e-15);
        let s = Complex64::new(0.0, 0.3);
        assert!((transfer_at(&ss, s).unwrap()[(0, 0)] - g.eval(s)).norm() < 1e-14);
    }
}
