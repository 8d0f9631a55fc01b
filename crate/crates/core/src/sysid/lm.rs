//! Box-constrained Levenberg-Marquardt with a central-difference Jacobian.

use nalgebra::{DMatrix, DVector};

const REL_PERTURBATION: f64 = 1e-6;

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome {
    pub params: Vec<f64>,
    /// Sum of squared residuals.
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    #[cfg(test)]
    pub fn unbounded(n: usize) -> Self {
        Bounds {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }
}

fn sse(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimizes `sum r(x)^2` subject to `lower <= x <= upper`. `residual` writes
/// `m` residuals for a parameter vector.
pub(crate) fn minimize<F>(
    residual: F,
    x0: &[f64],
    m: usize,
    bounds: &Bounds,
    max_iter: usize,
) -> LmOutcome
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    bounds.clamp(&mut x);
    let mut r = vec![0.0; m];
    residual(&x, &mut r);
    let mut cost = sse(&r);
    let scale0 = cost.max(f64::MIN_POSITIVE);

    let mut lambda = 1e-3;
    let mut jac = DMatrix::<f64>::zeros(m, n);
    let mut r_plus = vec![0.0; m];
    let mut r_minus = vec![0.0; m];
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; m];

    let mut iterations = 0;
    let mut converged = false;
    let mut need_jacobian = true;

    while iterations < max_iter {
        if !cost.is_finite() {
            break;
        }
        if cost <= 1e-32 * scale0 {
            converged = true;
            break;
        }
        if need_jacobian {
            for j in 0..n {
                let h = REL_PERTURBATION * x[j].abs().max(1e-3);
                let up = x[j] + h <= bounds.upper[j];
                let down = x[j] - h >= bounds.lower[j];
                let mut xp = x.clone();
                let (lo_val, hi_val, width) = match (down, up) {
                    (true, true) => {
                        xp[j] = x[j] + h;
                        residual(&xp, &mut r_plus);
                        xp[j] = x[j] - h;
                        residual(&xp, &mut r_minus);
                        (&r_minus, &r_plus, 2.0 * h)
                    }
                    (false, true) => {
                        xp[j] = x[j] + h;
                        residual(&xp, &mut r_plus);
                        (&r, &r_plus, h)
                    }
                    (true, false) => {
                        xp[j] = x[j] - h;
                        residual(&xp, &mut r_minus);
                        (&r_minus, &r, h)
                    }
                    (false, false) => {
                        jac.column_mut(j).fill(0.0);
                        continue;
                    }
                };
                for i in 0..m {
                    jac[(i, j)] = (hi_val[i] - lo_val[i]) / width;
                }
            }
            need_jacobian = false;
        }
        iterations += 1;

        let rv = DVector::from_column_slice(&r);
        let grad = jac.tr_mul(&rv);
        let hess = jac.tr_mul(&jac);
        let mut damped = hess.clone();
        let diag_floor = hess.diagonal().max() * 1e-15 + f64::MIN_POSITIVE;
        for j in 0..n {
            damped[(j, j)] += lambda * hess[(j, j)].max(diag_floor);
        }
        let step = match damped.cholesky() {
            Some(ch) => ch.solve(&(-&grad)),
            None => {
                lambda *= 10.0;
                if lambda > 1e16 {
                    converged = true;
                    break;
                }
                continue;
            }
        };
        for j in 0..n {
            trial[j] = x[j] + step[j];
        }
        bounds.clamp(&mut trial);
        residual(&trial, &mut r_trial);
        let new_cost = sse(&r_trial);

        if new_cost.is_finite() && new_cost < cost {
            let small_step =
                (0..n).all(|j| (trial[j] - x[j]).abs() <= 1e-13 * (x[j].abs() + 1e-10));
            let small_gain = cost - new_cost <= 1e-16 * cost;
            x.copy_from_slice(&trial);
            std::mem::swap(&mut r, &mut r_trial);
            cost = new_cost;
            lambda = (lambda / 3.0).max(1e-15);
            need_jacobian = true;
            if small_step || small_gain {
                converged = true;
                break;
            }
        } else {
            lambda *= 4.0;
            if lambda > 1e16 {
                // No descent left along any damped direction: stationary point.
                converged = true;
                break;
            }
        }
    }

    LmOutcome {
        params: x,
        sse: cost,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential_decay() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.2).collect();
        let y: Vec<f64> = t.iter().map(|t| 3.0 * (-t / 2.5).exp() + 0.5).collect();
        let out = minimize(
            |p, r| {
                for i in 0..t.len() {
                    r[i] = p[0] * (-t[i] / p[1]).exp() + p[2] - y[i];
                }
            },
            &[1.0, 1.0, 0.0],
            t.len(),
            &Bounds::unbounded(3),
            500,
        );
        assert!(out.converged);
        assert!((out.params[0] - 3.0).abs() < 1e-8);
        assert!((out.params[1] - 2.5).abs() < 1e-8);
        assert!((out.params[2] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn respects_bounds() {
        let out = minimize(
            |p, r| {
                r[0] = p[0] - 5.0;
            },
            &[0.0],
            1,
            &Bounds {
                lower: vec![-1.0],
                upper: vec![2.0],
            },
            100,
        );
        assert_eq!(out.params[0], 2.0);
    }
}
