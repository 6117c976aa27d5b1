//! Pooled one-group fit that seeds backfitting.
//!
//! All subjects are treated as one group and the baseline coefficients and
//! every spline component are solved jointly by GLS. Each component is
//! constrained to pooled empirical mean zero by reparameterizing its
//! coefficients in the complement of its centering vector; this removes the
//! collinearity between the intercept and each basis block (B-spline rows
//! sum to one) without dropping basis columns.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::config::FitConfig;
use crate::data::LongitudinalDataset;
use crate::design::{complement_basis, PanelDesign};
use crate::error::FitError;
use crate::gls::{GlsError, NormalEquations};

#[derive(Debug, Clone, PartialEq)]
pub struct InitialEstimates {
    /// Intercept first when centering is enabled, then the baseline coefficients.
    pub beta: Vec<f64>,
    /// One coefficient vector per smooth covariate.
    pub gamma0: Vec<Vec<f64>>,
}

/// Column layout of the joint design `U_i = (S_i, X_i)`.
#[derive(Debug, Clone)]
pub struct PooledLayout {
    /// Maps reduced coefficients back to full basis coefficients, per covariate.
    /// Identity when centering is disabled.
    pub maps: Vec<DMatrix<f64>>,
    pub baseline_cols: usize,
}

impl PooledLayout {
    pub fn new(design: &PanelDesign) -> Self {
        let k = design.k_basis();
        let maps = design
            .centering
            .iter()
            .map(|c| {
                if design.intercept {
                    complement_basis(c)
                } else {
                    DMatrix::identity(k, k)
                }
            })
            .collect();
        Self {
            maps,
            baseline_cols: design.baseline_cols(),
        }
    }

    pub fn spline_cols(&self) -> usize {
        self.maps.iter().map(|m| m.ncols()).sum()
    }

    /// Smooth part `X_i = (B_i1 N_1, ..., B_ip N_p)` for subject `i`.
    pub fn spline_design(&self, design: &PanelDesign, i: usize) -> DMatrix<f64> {
        let rows = design.spline[i].first().map_or(0, |m| m.nrows());
        let mut x = DMatrix::zeros(rows, self.spline_cols());
        let mut col = 0;
        for (b, map) in design.spline[i].iter().zip(&self.maps) {
            let reduced = b * map;
            x.columns_mut(col, map.ncols()).copy_from(&reduced);
            col += map.ncols();
        }
        x
    }

    /// Full joint design `(S_i, X_i)`.
    pub fn joint_design(&self, design: &PanelDesign, i: usize) -> DMatrix<f64> {
        let s = &design.baseline[i];
        let x = self.spline_design(design, i);
        let mut u = DMatrix::zeros(s.nrows(), s.ncols() + x.ncols());
        u.columns_mut(0, s.ncols()).copy_from(s);
        u.columns_mut(s.ncols(), x.ncols()).copy_from(&x);
        u
    }

    fn block_name(&self, column: usize, intercept: bool) -> String {
        if column < self.baseline_cols {
            return if intercept && column == 0 {
                String::from("intercept")
            } else {
                format!("baseline covariate {}", column - usize::from(intercept) + 1)
            };
        }
        let mut start = self.baseline_cols;
        for (j, m) in self.maps.iter().enumerate() {
            if column < start + m.ncols() {
                return format!("smooth covariate {}", j + 1);
            }
            start += m.ncols();
        }
        String::from("unknown")
    }

    /// Splits a joint solution into baseline and full spline coefficients.
    pub fn unpack(&self, theta: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let beta = theta[..self.baseline_cols].to_vec();
        let mut start = self.baseline_cols;
        let gamma = self
            .maps
            .iter()
            .map(|m| {
                let t = DVector::from_column_slice(&theta[start..start + m.ncols()]);
                start += m.ncols();
                (m * t).iter().copied().collect()
            })
            .collect();
        (beta, gamma)
    }
}

pub fn pooled_fit(data: &LongitudinalDataset, config: &FitConfig) -> Result<InitialEstimates, FitError> {
    let design = PanelDesign::new(data, config)?;
    pooled_fit_with_design(data, &design, config.ridge)
}

/// Joint GLS of `Y_i` on `(S_i, B_i1, ..., B_ip)` over usable subjects.
pub fn pooled_fit_with_design(
    data: &LongitudinalDataset,
    design: &PanelDesign,
    ridge: f64,
) -> Result<InitialEstimates, FitError> {
    let layout = PooledLayout::new(design);
    let mut ne = NormalEquations::new(layout.baseline_cols + layout.spline_cols());
    for &i in &design.usable {
        let u = layout.joint_design(design, i);
        ne.add_block(&u, design.weight(data, i), &data.subject(i).y)
            .map_err(|source| FitError::PooledSolve {
                block: String::from("design"),
                source,
            })?;
    }
    let (theta, _) = ne.solve_with_retry(ridge).map_err(|source| {
        let block = match source {
            GlsError::SingularSystem { column } => layout.block_name(column, design.intercept),
            _ => String::from("design"),
        };
        FitError::PooledSolve { block, source }
    })?;
    let (mut beta, mut gamma0) = layout.unpack(&theta);
    if design.intercept {
        for (g, c) in gamma0.iter_mut().zip(&design.centering) {
            beta[0] += recenter(g, c);
        }
    }
    Ok(InitialEstimates { beta, gamma0 })
}

/// Shifts `gamma` by a constant so that `c' gamma = 0`; returns the removed
/// constant. Relies on the basis summing to one, so `gamma - m 1` lowers the
/// component by exactly `m` everywhere.
pub fn recenter(gamma: &mut [f64], c: &[f64]) -> f64 {
    let total: f64 = c.iter().sum();
    let mean: f64 = gamma.iter().zip(c).map(|(g, w)| g * w).sum::<f64>() / total;
    gamma.iter_mut().for_each(|g| *g -= mean);
    mean
}
