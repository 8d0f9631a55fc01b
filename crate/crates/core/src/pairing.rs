//! Relative gain array, relative interaction array and MV-CV pairing.

use std::io::{Read, Write};
use std::str::FromStr;

use log::warn;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cloop::PlantMatrix;
use crate::linss::{check_labels, transfer_at, StateSpaceModel};
use crate::matrix::{lu_rcond, RCOND_THRESHOLD};
use crate::{Error, Result};

/// Complex gains `G(i omega)`, CV rows by MV columns.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    pub cv_names: Vec<String>,
    pub mv_names: Vec<String>,
    pub values: DMatrix<Complex64>,
    /// rad/s
    pub frequency: f64,
}

impl GainMatrix {
    pub fn new(
        cv_names: Vec<String>,
        mv_names: Vec<String>,
        values: DMatrix<Complex64>,
        frequency: f64,
    ) -> Result<Self> {
        check_labels("cv_names", &cv_names, values.nrows())?;
        check_labels("mv_names", &mv_names, values.ncols())?;
        if values
            .iter()
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::validation("values", "non-finite gain"));
        }
        Ok(GainMatrix {
            cv_names,
            mv_names,
            values,
            frequency,
        })
    }

    pub fn from_real(
        cv_names: Vec<String>,
        mv_names: Vec<String>,
        values: &DMatrix<f64>,
    ) -> Result<Self> {
        Self::new(
            cv_names,
            mv_names,
            values.map(|v| Complex64::new(v, 0.0)),
            0.0,
        )
    }

    /// Entry-wise frequency response of a plant matrix, delays included;
    /// absent entries are zero.
    pub fn from_plant(plant: &PlantMatrix, omega: f64) -> Result<Self> {
        let (q, p) = (plant.cv_names().len(), plant.mv_names().len());
        let values = DMatrix::from_fn(q, p, |i, j| {
            plant
                .entry(i, j)
                .map_or(Complex64::new(0.0, 0.0), |g| g.frequency_response(omega))
        });
        Self::new(
            plant.cv_names().to_vec(),
            plant.mv_names().to_vec(),
            values,
            omega,
        )
    }

    pub fn from_state_space(ss: &StateSpaceModel, omega: f64) -> Result<Self> {
        let values = transfer_at(ss, Complex64::new(0.0, omega))?;
        Self::new(
            ss.output_names.clone(),
            ss.input_names.clone(),
            values,
            omega,
        )
    }

    /// CSV with a header of MV labels after one leading cell and one row per
    /// CV starting with its label. Cells are real numbers or complex numbers
    /// written as `a+bi`.
    pub fn read_csv<R: Read>(r: R, frequency: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(r);
        let mv_names: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
        let mut cv_names = Vec::new();
        let mut cells = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != mv_names.len() + 1 {
                return Err(Error::DimensionMismatch(format!(
                    "row {} has {} cells, expected {}",
                    cv_names.len() + 1,
                    rec.len(),
                    mv_names.len() + 1
                )));
            }
            cv_names.push(rec[0].to_string());
            for cell in rec.iter().skip(1) {
                let v = Complex64::from_str(cell)
                    .map_err(|_| Error::validation("gain", format!("cannot parse {cell:?}")))?;
                cells.push(v);
            }
        }
        if cv_names.is_empty() || mv_names.is_empty() {
            return Err(Error::validation("gain", "empty gain matrix"));
        }
        let values = DMatrix::from_row_slice(cv_names.len(), mv_names.len(), &cells);
        Self::new(cv_names, mv_names, values, frequency)
    }
}

fn format_cell(v: Complex64) -> String {
    if v.im == 0.0 {
        format!("{}", v.re)
    } else {
        format!("{v}")
    }
}

/// Writes a labelled matrix in the layout read by [`GainMatrix::read_csv`].
pub fn write_labelled_csv<W: Write>(
    w: W,
    corner: &str,
    cv_names: &[String],
    mv_names: &[String],
    m: &DMatrix<Complex64>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(std::iter::once(corner).chain(mv_names.iter().map(String::as_str)))?;
    for (i, cv) in cv_names.iter().enumerate() {
        let row: Vec<String> = std::iter::once(cv.clone())
            .chain((0..m.ncols()).map(|j| format_cell(m[(i, j)])))
            .collect();
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

fn require_square<T>(m: &DMatrix<T>) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

/// `G` times, element-wise, the transpose of its inverse.
pub fn rga(g: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    require_square(g)?;
    let (lu, rcond) = lu_rcond(&g.transpose());
    if !(rcond >= RCOND_THRESHOLD) {
        return Err(Error::SingularGainMatrix { rcond });
    }
    let n = g.nrows();
    let inv_t = lu
        .solve(&DMatrix::identity(n, n))
        .ok_or(Error::SingularGainMatrix { rcond: 0.0 })?;
    Ok(g.component_mul(&inv_t))
}

/// Element-wise `1 / lambda - 1`; a zero gain maps to `+inf`.
pub fn ria(lambda: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    lambda.map(|l| {
        if l == Complex64::new(0.0, 0.0) {
            Complex64::new(f64::INFINITY, 0.0)
        } else {
            l.inv() - 1.0
        }
    })
}

fn lambda_from_phi(phi: Complex64) -> Complex64 {
    if phi.norm().is_infinite() {
        Complex64::new(0.0, 0.0)
    } else {
        (phi + 1.0).inv()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairingMethod {
    Sequential,
    Assignment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub cv: usize,
    pub mv: usize,
    pub phi: Complex64,
    pub lambda: Complex64,
    /// The relative gain of the pair has a negative real part.
    pub negative_lambda: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingResult {
    pub method: PairingMethod,
    #[serde(with = "complex_matrix")]
    pub lambda: DMatrix<Complex64>,
    #[serde(with = "complex_matrix")]
    pub phi: DMatrix<Complex64>,
    /// In selection order for the sequential method, by CV otherwise.
    pub pairs: Vec<Pair>,
}

impl PairingResult {
    fn build(method: PairingMethod, phi: &DMatrix<Complex64>, picks: Vec<(usize, usize)>) -> Self {
        let lambda = phi.map(lambda_from_phi);
        let pairs = picks
            .into_iter()
            .map(|(cv, mv)| {
                let l = lambda[(cv, mv)];
                if l.re < 0.0 {
                    warn!("pair ({cv}, {mv}) has negative relative gain {l}");
                }
                Pair {
                    cv,
                    mv,
                    phi: phi[(cv, mv)],
                    lambda: l,
                    negative_lambda: l.re < 0.0,
                }
            })
            .collect();
        PairingResult {
            method,
            lambda,
            phi: phi.clone(),
            pairs,
        }
    }

    /// Sum of `|phi|` over the pairs.
    pub fn total_interaction(&self) -> f64 {
        self.pairs.iter().map(|p| p.phi.norm()).sum()
    }

    /// MV column paired with each CV row.
    pub fn mv_of_cv(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.pairs.len()];
        for p in &self.pairs {
            out[p.cv] = p.mv;
        }
        out
    }
}

/// Repeatedly takes the entry of smallest `|phi|` and removes its row and
/// column. Ties go to the lowest row, then the lowest column.
pub fn pair_sequential(phi: &DMatrix<Complex64>) -> Result<PairingResult> {
    require_square(phi)?;
    let n = phi.nrows();
    let mut rows = vec![true; n];
    let mut cols = vec![true; n];
    let mut picks = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|&i| rows[i]) {
            for j in (0..n).filter(|&j| cols[j]) {
                let v = phi[(i, j)].norm();
                let v = if v.is_nan() { f64::INFINITY } else { v };
                if best.is_none_or(|(b, _, _)| v < b) {
                    best = Some((v, i, j));
                }
            }
        }
        let (_, i, j) = best.expect("remaining rows and columns");
        rows[i] = false;
        cols[j] = false;
        picks.push((i, j));
    }
    Ok(PairingResult::build(PairingMethod::Sequential, phi, picks))
}

/// Perfect matching minimizing the sum of `|phi|`. Infinite entries cost a
/// finite penalty larger than any matching of finite entries.
pub fn pair_assignment(phi: &DMatrix<Complex64>) -> Result<PairingResult> {
    require_square(phi)?;
    let n = phi.nrows();
    let abs = phi.map(|v| v.norm());
    let finite_max = abs
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let penalty = (finite_max + 1.0) * (n as f64 + 1.0) * 1e3;
    let cost = abs.map(|v| if v.is_finite() { v } else { penalty });
    let col_of_row = hungarian(&cost);
    let picks = col_of_row.into_iter().enumerate().collect();
    Ok(PairingResult::build(PairingMethod::Assignment, phi, picks))
}

/// Minimum-cost perfect matching on a square cost matrix by the
/// shortest-augmenting-path method with potentials; returns the column
/// assigned to each row.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    // 1-based with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0; n];
    for j in 1..=n {
        col_of_row[row_of[j] - 1] = j - 1;
    }
    col_of_row
}

mod complex_matrix {
    use nalgebra::DMatrix;
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    /// Row-major rows of `[re, im]`.
    pub fn serialize<S: Serializer>(m: &DMatrix<Complex64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = m
            .row_iter()
            .map(|r| r.iter().map(|c| [c.re, c.im]).collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<Complex64>, D::Error> {
        let rows = Vec::<Vec<[Option<f64>; 2]>>::deserialize(d)?;
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(serde::de::Error::custom("ragged matrix"));
        }
        // Infinite entries serialize as null.
        let get = |v: Option<f64>| v.unwrap_or(f64::INFINITY);
        Ok(DMatrix::from_fn(n, p, |i, j| {
            Complex64::new(get(rows[i][j][0]), get(rows[i][j][1]))
        }))
    }
}
