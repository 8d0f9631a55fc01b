//! Linear state-space models obtained from the Jacobians of a semi-explicit
//! index-1 DAE
//!
//! ```text
//!   dx/dt = f(x, y, u),   0 = g(x, y, u),   z = h(x, y, u)
//! ```
//!
//! by eliminating the algebraic states through `dg/dy`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::matrix::{lu_rcond, serde_real, to_complex, RCOND_THRESHOLD};
use crate::{Error, Result};

/// Jacobian blocks of `f`, `g` and `h` with respect to the differential
/// states `x` (n), algebraic states `y` (m) and inputs `u` (p); `h` has q rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DaeJacobians {
    #[serde(with = "serde_real")]
    pub fx: DMatrix<f64>,
    #[serde(with = "serde_real")]
    pub fy: DMatrix<f64>,
    #[serde(with = "serde_real")]
    pub fu: DMatrix<f64>,
    #[serde(with = "serde_real")]
    pub gx: DMatrix<f64>,
    #[serde(with = "serde_real")]
    pub gy: DMatrix<f64>,
    #[serde(with = "serde_real")]
    pub gu: DMatrix<f64>,
    #[serde(with = "serde_real")]
    pub hx: DMatrix<f64>,
    #[serde(with = "serde_real")]
    pub hy: DMatrix<f64>,
    #[serde(with = "serde_real")]
    pub hu: DMatrix<f64>,
    #[serde(default)]
    pub input_names: Vec<String>,
    #[serde(default)]
    pub output_names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DaeDims {
    pub states: usize,
    pub algebraic: usize,
    pub inputs: usize,
    pub outputs: usize,
}

impl DaeJacobians {
    pub fn dims(&self) -> Result<DaeDims> {
        let n = self.fx.nrows();
        let m = self.gy.nrows();
        let p = self.fu.ncols();
        let q = self.hx.nrows();
        let expect = [
            ("fx", &self.fx, n, n),
            ("fy", &self.fy, n, m),
            ("fu", &self.fu, n, p),
            ("gx", &self.gx, m, n),
            ("gy", &self.gy, m, m),
            ("gu", &self.gu, m, p),
            ("hx", &self.hx, q, n),
            ("hy", &self.hy, q, m),
            ("hu", &self.hu, q, p),
        ];
        for (name, mat, r, c) in expect {
            if mat.nrows() != r || mat.ncols() != c {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {r}x{c}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
        }
        Ok(DaeDims {
            states: n,
            algebraic: m,
            inputs: p,
            outputs: q,
        })
    }
}

/// Continuous-time model `dx/dt = A x + B u`, `z = C x + D u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceModel {
    #[serde(rename = "A", with = "serde_real")]
    pub a: DMatrix<f64>,
    #[serde(rename = "B", with = "serde_real")]
    pub b: DMatrix<f64>,
    #[serde(rename = "C", with = "serde_real")]
    pub c: DMatrix<f64>,
    #[serde(rename = "D", with = "serde_real")]
    pub d: DMatrix<f64>,
    #[serde(default)]
    pub input_names: Vec<String>,
    #[serde(default)]
    pub output_names: Vec<String>,
}

impl StateSpaceModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let ss = StateSpaceModel {
            input_names: default_names("u", b.ncols()),
            output_names: default_names("z", c.nrows()),
            a,
            b,
            c,
            d,
        };
        ss.validate()?;
        Ok(ss)
    }

    pub fn with_names(mut self, inputs: Vec<String>, outputs: Vec<String>) -> Result<Self> {
        self.input_names = inputs;
        self.output_names = outputs;
        self.validate()?;
        Ok(self)
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        let p = self.b.ncols();
        let q = self.c.nrows();
        if self.a.ncols() != n || self.b.nrows() != n || self.c.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "A {}x{}, B {}x{}, C {}x{} are inconsistent",
                self.a.nrows(),
                self.a.ncols(),
                self.b.nrows(),
                self.b.ncols(),
                self.c.nrows(),
                self.c.ncols()
            )));
        }
        if self.d.nrows() != q || self.d.ncols() != p {
            return Err(Error::DimensionMismatch(format!(
                "D is {}x{}, expected {q}x{p}",
                self.d.nrows(),
                self.d.ncols()
            )));
        }
        check_labels("input_names", &self.input_names, p)?;
        check_labels("output_names", &self.output_names, q)?;
        Ok(())
    }
}

fn default_names(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}

pub(crate) fn check_labels(field: &str, labels: &[String], expected: usize) -> Result<()> {
    if labels.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "{field} has {} labels, expected {expected}",
            labels.len()
        )));
    }
    let mut seen = std::collections::HashSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::validation(field, format!("duplicate label '{l}'")));
        }
    }
    Ok(())
}

/// Eliminates the algebraic states:
///
/// ```text
///   A = fx - fy gy^-1 gx     B = fu - fy gy^-1 gu
///   C = hx - hy gy^-1 gx     D = hu - hy gy^-1 gu
/// ```
///
/// `gy^-1 [gx gu]` is obtained from one LU solve.
pub fn reduce_dae(j: &DaeJacobians) -> Result<StateSpaceModel> {
    let dims = j.dims()?;
    let (n, m, p) = (dims.states, dims.algebraic, dims.inputs);

    let (a, b, c, d) = if m == 0 {
        (j.fx.clone(), j.fu.clone(), j.hx.clone(), j.hu.clone())
    } else {
        let (lu, rcond) = lu_rcond(&j.gy);
        if rcond < RCOND_THRESHOLD {
            return Err(Error::SingularAlgebraicJacobian { rcond });
        }
        let mut rhs = DMatrix::zeros(m, n + p);
        rhs.columns_mut(0, n).copy_from(&j.gx);
        rhs.columns_mut(n, p).copy_from(&j.gu);
        let w = lu
            .solve(&rhs)
            .ok_or(Error::SingularAlgebraicJacobian { rcond: 0.0 })?;
        let wx = w.columns(0, n);
        let wu = w.columns(n, p);
        (
            &j.fx - &j.fy * wx,
            &j.fu - &j.fy * wu,
            &j.hx - &j.hy * wx,
            &j.hu - &j.hy * wu,
        )
    };

    let inputs = if j.input_names.is_empty() {
        default_names("u", p)
    } else {
        j.input_names.clone()
    };
    let outputs = if j.output_names.is_empty() {
        default_names("z", dims.outputs)
    } else {
        j.output_names.clone()
    };
    StateSpaceModel::new(a, b, c, d)?.with_names(inputs, outputs)
}

/// `G(s) = C (sI - A)^-1 B + D`, evaluated with a linear solve of
/// `(sI - A) X = B`.
pub fn transfer_at(ss: &StateSpaceModel, s: Complex64) -> Result<DMatrix<Complex64>> {
    ss.validate()?;
    let n = ss.states();
    let d = to_complex(&ss.d);
    if n == 0 {
        return Ok(d);
    }
    let m = DMatrix::<Complex64>::identity(n, n) * s - to_complex(&ss.a);
    let (lu, rcond) = lu_rcond(&m);
    let at_pole = Error::FrequencyAtPole {
        re: s.re,
        im: s.im,
        rcond,
    };
    if rcond < RCOND_THRESHOLD {
        return Err(at_pole);
    }
    let x = lu.solve(&to_complex(&ss.b)).ok_or(at_pole)?;
    Ok(to_complex(&ss.c) * x + d)
}

/// DC gain `G(0)`.
pub fn dc_gain(ss: &StateSpaceModel) -> Result<DMatrix<f64>> {
    Ok(transfer_at(ss, Complex64::new(0.0, 0.0))?.map(|v| v.re))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    fn scalar_case() -> DaeJacobians {
        DaeJacobians {
            fx: m(1, 1, &[-1.0]),
            fy: m(1, 1, &[1.0]),
            fu: m(1, 1, &[1.0]),
            gx: m(1, 1, &[2.0]),
            gy: m(1, 1, &[-1.0]),
            gu: m(1, 1, &[0.0]),
            hx: m(1, 1, &[1.0]),
            hy: m(1, 1, &[0.0]),
            hu: m(1, 1, &[0.0]),
            input_names: vec![],
            output_names: vec![],
        }
    }

    #[test]
    fn scalar_hand_reduction() {
        let ss = reduce_dae(&scalar_case()).unwrap();
        assert_eq!(ss.a, m(1, 1, &[1.0]));
        assert_eq!(ss.b, m(1, 1, &[1.0]));
        assert_eq!(ss.c, m(1, 1, &[1.0]));
        assert_eq!(ss.d, m(1, 1, &[0.0]));
    }

    #[test]
    fn no_algebraic_coupling_passes_through() {
        let j = DaeJacobians {
            fx: m(2, 2, &[-1.0, 0.5, 0.0, -2.0]),
            fy: DMatrix::zeros(2, 1),
            fu: m(2, 1, &[1.0, 3.0]),
            gx: m(1, 2, &[7.0, -4.0]),
            gy: m(1, 1, &[1.0]),
            gu: m(1, 1, &[9.0]),
            hx: m(1, 2, &[1.0, 1.0]),
            hy: DMatrix::zeros(1, 1),
            hu: m(1, 1, &[0.25]),
            input_names: vec![],
            output_names: vec![],
        };
        let ss = reduce_dae(&j).unwrap();
        assert_eq!(ss.a, j.fx);
        assert_eq!(ss.b, j.fu);
        assert_eq!(ss.c, j.hx);
        assert_eq!(ss.d, j.hu);
    }

    #[test]
    fn singular_gy_is_rejected() {
        let mut j = scalar_case();
        j.gy = m(1, 1, &[0.0]);
        assert!(matches!(
            reduce_dae(&j),
            Err(Error::SingularAlgebraicJacobian { .. })
        ));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut j = scalar_case();
        j.hu = DMatrix::zeros(2, 1);
        assert!(matches!(reduce_dae(&j), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn first_order_lag_frequency_response() {
        let ss = StateSpaceModel::new(
            m(1, 1, &[-1.0]),
            m(1, 1, &[1.0]),
            m(1, 1, &[1.0]),
            m(1, 1, &[0.0]),
        )
        .unwrap();
        let g0 = transfer_at(&ss, Complex64::new(0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(g0[(0, 0)].re, 1.0, epsilon = 1e-15);
        let g1 = transfer_at(&ss, Complex64::new(0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(g1[(0, 0)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g1[(0, 0)].im, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn integrator_at_origin_is_a_pole() {
        let ss = StateSpaceModel::new(
            m(1, 1, &[0.0]),
            m(1, 1, &[1.0]),
            m(1, 1, &[1.0]),
            m(1, 1, &[0.0]),
        )
        .unwrap();
        assert!(matches!(
            transfer_at(&ss, Complex64::new(0.0, 0.0)),
            Err(Error::FrequencyAtPole { .. })
        ));
    }

    #[test]
    fn json_roundtrip_uses_row_major_documents() {
        let ss = reduce_dae(&scalar_case()).unwrap();
        let text = serde_json::to_string(&ss).unwrap();
        assert!(text.contains("\"A\":{\"rows\":1,\"cols\":1,\"data\":[1.0]}"));
        let back: StateSpaceModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, ss);
    }

    #[test]
    fn duplicate_labels_rejected() {
        let ss = reduce_dae(&scalar_case()).unwrap();
        let r = ss.with_names(vec!["u".into()], vec!["z".into()]);
        assert!(r.is_ok());
        let ss = StateSpaceModel::new(
            DMatrix::zeros(0, 0),
            DMatrix::zeros(0, 2),
            DMatrix::zeros(1, 0),
            DMatrix::zeros(1, 2),
        )
        .unwrap();
        assert!(ss
            .with_names(vec!["a".into(), "a".into()], vec!["z".into()])
            .is_err());
    }
}
