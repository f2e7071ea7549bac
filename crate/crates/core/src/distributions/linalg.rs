//! Small dense linear algebra for the R×R and P×P systems the sampler needs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::DistributionError;

const SYMMETRY_TOL: f64 = 1e-10;

/// Lower Cholesky factor `L` with `L Lᵀ = m`.
///
/// Fails with the 1-based index of the first leading minor that is not
/// positive.
pub fn cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>, DistributionError> {
    check_square_symmetric(m)?;
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(DistributionError::NotPositiveDefinite { minor: j + 1 });
        }
        let d = diag.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

fn check_square_symmetric(m: &DMatrix<f64>) -> Result<(), DistributionError> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(DistributionError::Dimension(format!(
            "expected a nonempty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
            if (a - b).abs() > SYMMETRY_TOL * scale {
                return Err(DistributionError::NotSymmetric { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Inverse of a lower-triangular matrix by forward substitution.
pub fn invert_lower(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::<f64>::zeros(n, n);
    for col in 0..n {
        inv[(col, col)] = 1.0 / l[(col, col)];
        for i in (col + 1)..n {
            let mut s = 0.0;
            for k in col..i {
                s -= l[(i, k)] * inv[(k, col)];
            }
            inv[(i, col)] = s / l[(i, i)];
        }
    }
    inv
}

/// Solve `L Lᵀ x = b` given the lower Cholesky factor.
pub fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut w = b.clone();
    for i in 0..n {
        let mut s = w[i];
        for k in 0..i {
            s -= l[(i, k)] * w[k];
        }
        w[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = w[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * w[k];
        }
        w[i] = s / l[(i, i)];
    }
    w
}

/// Symmetric positive-definite matrix with its cached lower Cholesky factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    lower: DMatrix<f64>,
}

impl SpdMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, DistributionError> {
        let lower = cholesky(&matrix)?;
        // exact symmetry from here on
        let matrix = (&matrix + matrix.transpose()) * 0.5;
        Ok(Self { matrix, lower })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            lower: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn cholesky_lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let li = invert_lower(&self.lower);
        li.transpose() * li
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.matrix
    }
}

impl TryFrom<Vec<Vec<f64>>> for SpdMatrix {
    type Error = DistributionError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(DistributionError::Dimension(
                "matrix rows must all have the same length as the row count".into(),
            ));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        SpdMatrix::new(DMatrix::from_row_slice(n, n, &flat))
    }
}

impl From<SpdMatrix> for Vec<Vec<f64>> {
    fn from(m: SpdMatrix) -> Self {
        let n = m.dim();
        (0..n)
            .map(|i| (0..n).map(|j| m.matrix[(i, j)]).collect())
            .collect()
    }
}
