//! Per-subject design matrices and weights, computed once per dataset.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::bspline::{SplineBasis, SplineSpec};
use crate::config::FitConfig;
use crate::covariance::InverseCache;
use crate::data::{validate, LongitudinalDataset, ValidationReport};
use crate::error::FitError;

#[derive(Debug, Clone)]
pub struct PanelDesign {
    pub report: ValidationReport,
    /// Dataset indices of subjects that take part in fitting.
    pub usable: Vec<usize>,
    pub excluded: Vec<usize>,
    pub bases: Vec<SplineBasis>,
    /// `spline[i][j]`: basis matrix of covariate `j` for subject `i` (all subjects).
    pub spline: Vec<Vec<DMatrix<f64>>>,
    /// `baseline[i]`: rows `(1, S_i')` or `S_i'`, repeated over visits.
    pub baseline: Vec<DMatrix<f64>>,
    pub weights: InverseCache,
    pub intercept: bool,
    /// Observations over usable subjects.
    pub n_obs: usize,
    /// Mean basis row of each covariate over usable observations; `c_j' gamma`
    /// is the pooled mean of a component with coefficients `gamma`.
    pub centering: Vec<Vec<f64>>,
}

impl PanelDesign {
    pub fn new(data: &LongitudinalDataset, config: &FitConfig) -> Result<Self, FitError> {
        let report = validate(data, config.k_basis(), &config.exclusion)?;
        let usable = report.usable();
        let excluded = report.excluded();
        if usable.is_empty() {
            return Err(FitError::NoUsableSubjects);
        }
        let p = data.p();
        let mut bases = Vec::with_capacity(p);
        for j in 0..p {
            let spec = SplineSpec {
                degree: config.degree,
                interior_knots: config.interior_knots,
                domain: data.covariate_range(j),
                knot_rule: config.knot_rule,
            };
            let values = data.covariate_values(j);
            bases.push(SplineBasis::new(spec, Some(&values))?);
        }
        let spline: Vec<Vec<DMatrix<f64>>> = data
            .subjects()
            .iter()
            .map(|s| bases.iter().zip(&s.x).map(|(b, x)| b.design_matrix(x)).collect())
            .collect();
        let intercept = config.center;
        let baseline = data
            .subjects()
            .iter()
            .map(|s| {
                let lead = usize::from(intercept);
                DMatrix::from_fn(s.n_obs(), lead + data.r(), |_, c| {
                    if c < lead {
                        1.0
                    } else {
                        s.s[c - lead]
                    }
                })
            })
            .collect();
        let weights = InverseCache::build(
            config.covariance,
            data.subjects().iter().map(|s| s.n_obs()),
        )?;
        let n_obs = usable.iter().map(|&i| data.subject(i).n_obs()).sum();
        let k = config.k_basis();
        let mut centering = vec![vec![0.0; k]; p];
        for &i in &usable {
            for (j, c) in centering.iter_mut().enumerate() {
                for row in spline[i][j].row_iter() {
                    c.iter_mut().zip(row.iter()).for_each(|(a, b)| *a += b);
                }
            }
        }
        for c in &mut centering {
            c.iter_mut().for_each(|v| *v /= n_obs as f64);
        }
        Ok(Self {
            report,
            usable,
            excluded,
            bases,
            spline,
            baseline,
            weights,
            intercept,
            n_obs,
            centering,
        })
    }

    pub fn p(&self) -> usize {
        self.bases.len()
    }

    pub fn k_basis(&self) -> usize {
        self.bases.first().map_or(0, SplineBasis::dim)
    }

    pub fn baseline_cols(&self) -> usize {
        self.baseline.first().map_or(0, |b| b.ncols())
    }

    pub fn weight(&self, data: &LongitudinalDataset, i: usize) -> &DMatrix<f64> {
        self.weights.get(data.subject(i).n_obs())
    }
}

/// Orthonormal basis (as columns) of the complement of `c` in `R^k`.
///
/// Uses the Householder reflection that maps `c` onto the first axis; its
/// remaining columns are orthogonal to `c`.
pub fn complement_basis(c: &[f64]) -> DMatrix<f64> {
    #[allow(unused_imports)] // inherent when std is linked
    use num_traits::Float;
    let k = c.len();
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return DMatrix::identity(k, k).columns(1, k - 1).into_owned();
    }
    let sign = if c[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut u: Vec<f64> = c.to_vec();
    u[0] += sign * norm;
    let uu: f64 = u.iter().map(|v| v * v).sum();
    let h = DMatrix::from_fn(k, k, |a, b| {
        let id = if a == b { 1.0 } else { 0.0 };
        id - 2.0 * u[a] * u[b] / uu
    });
    h.columns(1, k - 1).into_owned()
}
