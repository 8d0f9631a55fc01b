//! Dense matrix helpers shared by the linear-algebra modules: a JSON document
//! form with explicit dimensions and row-major data, and a reciprocal
//! condition number used to reject numerically singular systems.

use nalgebra::{ComplexField, DMatrix, Dyn, LU};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Threshold on the reciprocal 1-norm condition number below which a square
/// system is treated as singular.
pub const RCOND_THRESHOLD: f64 = 1e-12;

/// JSON layout of a real matrix: `{"rows": r, "cols": c, "data": [row-major]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixDoc {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        MatrixDoc {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{name}: declared {}x{} but data holds {} values",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        if let Some(bad) = self.data.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(name, format!("non-finite entry {bad}")));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

/// Serde adapter for `DMatrix<f64>` fields stored as [`MatrixDoc`].
pub mod serde_real {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        MatrixDoc::from_matrix(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let doc = MatrixDoc::deserialize(d)?;
        doc.to_matrix("matrix").map_err(serde::de::Error::custom)
    }
}

/// Maximum absolute column sum.
pub fn norm1<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.clone().modulus()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// LU factorization together with the reciprocal 1-norm condition number
/// `1 / (|A|_1 |A^-1|_1)`. A zero pivot yields `rcond = 0`.
pub fn lu_rcond<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> (LU<T, Dyn, Dyn>, f64) {
    let n = a.nrows();
    let lu = a.clone().lu();
    if n == 0 {
        return (lu, 1.0);
    }
    let rcond = match lu.solve(&DMatrix::<T>::identity(n, n)) {
        Some(inv) => {
            let r = 1.0 / (norm1(a) * norm1(&inv));
            if r.is_finite() {
                r
            } else {
                0.0
            }
        }
        None => 0.0,
    };
    (lu, rcond)
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}
