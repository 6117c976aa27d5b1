//! Block generalized least squares through accumulated normal equations.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;
use thiserror::Error;

use crate::bspline::SplineBasis;
use crate::covariance::{CovarianceError, WorkingCovariance};

/// Ridge used when a solve is retried after a singular factorization.
pub const RETRY_RIDGE: f64 = 1e-8;

/// Relative pivot size below which the normal matrix is treated as singular.
const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GlsError {
    #[error("normal equations are singular at column {column}")]
    SingularSystem { column: usize },
    #[error("block {block}: design has {design_rows} rows, weight is {weight_rows}x{weight_cols}, response has {response_rows}")]
    BlockShape {
        block: usize,
        design_rows: usize,
        weight_rows: usize,
        weight_cols: usize,
        response_rows: usize,
    },
    #[error("block {block}: design has {found} columns, expected {expected}")]
    ColumnCount {
        block: usize,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
}

/// One subject's contribution `(D_i, W_i, r_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub design: DMatrix<f64>,
    pub weight: DMatrix<f64>,
    pub response: DVector<f64>,
}

/// A list of blocks sharing one coefficient vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlockSystem {
    pub blocks: Vec<Block>,
}

impl BlockSystem {
    /// `argmin sum_i (r_i - D_i c)' W_i (r_i - D_i c) + ridge |c|^2`.
    pub fn solve(&self, ridge: f64) -> Result<Vec<f64>, GlsError> {
        let cols = self.blocks.first().map_or(0, |b| b.design.ncols());
        let mut ne = NormalEquations::new(cols);
        for (i, b) in self.blocks.iter().enumerate() {
            ne.add_block(&b.design, &b.weight, b.response.as_slice())
                .map_err(|e| match e {
                    GlsError::BlockShape { design_rows, weight_rows, weight_cols, response_rows, .. } => {
                        GlsError::BlockShape { block: i, design_rows, weight_rows, weight_cols, response_rows }
                    }
                    GlsError::ColumnCount { expected, found, .. } => {
                        GlsError::ColumnCount { block: i, expected, found }
                    }
                    other => other,
                })?;
        }
        ne.solve(ridge)
    }
}

/// Running sums `sum D'WD` and `sum D'Wr`.
///
/// Blocks are folded in the order they are added, so the result depends only
/// on the block order, never on scheduling.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations {
    pub gram: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl NormalEquations {
    pub fn new(cols: usize) -> Self {
        Self {
            gram: DMatrix::zeros(cols, cols),
            rhs: DVector::zeros(cols),
        }
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn add_block(
        &mut self,
        design: &DMatrix<f64>,
        weight: &DMatrix<f64>,
        response: &[f64],
    ) -> Result<(), GlsError> {
        let n = design.nrows();
        if weight.nrows() != n || weight.ncols() != n || response.len() != n {
            return Err(GlsError::BlockShape {
                block: 0,
                design_rows: n,
                weight_rows: weight.nrows(),
                weight_cols: weight.ncols(),
                response_rows: response.len(),
            });
        }
        if design.ncols() != self.dim() {
            return Err(GlsError::ColumnCount {
                block: 0,
                expected: self.dim(),
                found: design.ncols(),
            });
        }
        let wd = weight * design;
        self.gram.gemm_tr(1.0, design, &wd, 1.0);
        let r = DVector::from_column_slice(response);
        self.rhs.gemv_tr(1.0, &wd, &r, 1.0);
        Ok(())
    }

    pub fn merge(&mut self, other: &NormalEquations) {
        self.gram += &other.gram;
        self.rhs += &other.rhs;
    }

    pub fn solve(&self, ridge: f64) -> Result<Vec<f64>, GlsError> {
        let mut a = self.gram.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += ridge;
        }
        let l = cholesky(&a)?;
        Ok(cholesky_solve(&l, self.rhs.as_slice()))
    }

    /// Solves with `ridge`; on a singular system with zero ridge, retries once
    /// with [`RETRY_RIDGE`]. The second value reports whether the retry ran.
    pub fn solve_with_retry(&self, ridge: f64) -> Result<(Vec<f64>, bool), GlsError> {
        match self.solve(ridge) {
            Ok(c) => Ok((c, false)),
            Err(GlsError::SingularSystem { column }) if ridge == 0.0 => {
                log::warn!("singular normal equations at column {column}; retrying with ridge {RETRY_RIDGE}");
                self.solve(RETRY_RIDGE).map(|c| (c, true))
            }
            Err(e) => Err(e),
        }
    }
}

/// Lower-triangular Cholesky factor; a pivot that collapses relative to its
/// diagonal entry reports the offending column.
pub fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>, GlsError> {
    let n = a.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        let scale = a[(j, j)].abs();
        if !(d > PIVOT_TOL * scale) || !d.is_finite() {
            return Err(GlsError::SingularSystem { column: j });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

pub fn cholesky_solve(l: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Per-subject spline coefficients `(B' V^{-1} B + ridge I)^{-1} B' V^{-1} w`.
pub fn gls_fit_subject(
    basis: &SplineBasis,
    wc: &WorkingCovariance,
    x: &[f64],
    w: &[f64],
    ridge: f64,
) -> Result<Vec<f64>, GlsError> {
    let design = basis.design_matrix(x);
    let weight = wc.inverse_covariance(x.len())?;
    let mut ne = NormalEquations::new(basis.dim());
    ne.add_block(&design, &weight, w)?;
    ne.solve(ridge)
}
