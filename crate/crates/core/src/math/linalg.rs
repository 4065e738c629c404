//! Dense symmetric matrices and their spectra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// A point in parameter space.
pub type ParamVec = DVector<f64>;

/// Square matrix whose stored entries are exactly symmetric.
///
/// Construction always averages the input with its transpose, so
/// `m[(i, j)] == m[(j, i)]` holds bitwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrizes a square matrix in place. Panics on non-square input.
    pub(crate) fn symmetrized(mut m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        assert_eq!(n, m.ncols(), "square matrix required");
        for j in 0..n {
            for i in (j + 1)..n {
                let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = avg;
                m[(j, i)] = avg;
            }
        }
        SymMatrix(m)
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Spectral norm, computed from the eigenvalues.
    pub fn op_norm(&self) -> Result<f64> {
        let e = sym_eigen(self)?;
        Ok(e.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())))
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &other.0)
    }

    pub fn quad_form(&self, v: &ParamVec) -> f64 {
        v.dot(&(&self.0 * v))
    }

    pub fn mul_vec(&self, v: &ParamVec) -> ParamVec {
        &self.0 * v
    }
}

impl std::ops::Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Eigenvalues in descending order with matching orthonormal eigenvectors
/// stored as columns.
#[derive(Debug, Clone)]
pub struct EigenDecomp {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenDecomp {
    pub fn min(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }

    /// Eigenvector paired with the smallest eigenvalue.
    pub fn min_vector(&self) -> ParamVec {
        self.vectors.column(self.values.len() - 1).into_owned()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let lambda = DMatrix::from_diagonal(&self.values);
        &self.vectors * lambda * self.vectors.transpose()
    }
}

pub fn sym_eigen(m: &SymMatrix) -> Result<EigenDecomp> {
    if !m.is_finite() {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let n = m.dim();
    if n == 0 {
        return Ok(EigenDecomp {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::new(m.0.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenDecomp { values, vectors })
}

/// Euclidean projection onto the closed ball of radius `r` about the origin.
pub fn project_ball(x: &ParamVec, r: f64) -> ParamVec {
    let norm = x.norm();
    if norm <= r {
        x.clone()
    } else {
        x * (r / norm)
    }
}

/// Componentwise soft-thresholding, the proximal map of `t * ||.||_1`.
pub fn soft_threshold(x: &ParamVec, t: f64) -> ParamVec {
    x.map(|v| v.signum() * (v.abs() - t).max(0.0))
}

/// Serde adapters that store parameter vectors as plain float arrays.
pub mod vec_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::ParamVec;

    pub fn serialize<S: Serializer>(v: &ParamVec, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ParamVec, D::Error> {
        Ok(ParamVec::from_vec(Vec::<f64>::deserialize(d)?))
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<ParamVec>, s: S) -> Result<S::Ok, S::Error> {
            v.as_ref().map(|v| v.as_slice().to_vec()).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<ParamVec>, D::Error> {
            Ok(Option::<Vec<f64>>::deserialize(d)?.map(ParamVec::from_vec))
        }
    }
}
