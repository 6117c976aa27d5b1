//! Working covariance `V_i = A^{1/2} R_i A^{1/2}` with constant marginal variance.

use alloc::collections::BTreeMap;

use nalgebra::DMatrix;
#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CovarianceError {
    #[error("correlation {rho} is not admissible for {structure:?} with {n} visits")]
    InvalidRho {
        structure: CorrelationStructure,
        rho: f64,
        n: usize,
    },
    #[error("marginal variance must be positive, got {0}")]
    InvalidVariance(f64),
    #[error("matrix dimension must be at least 1")]
    EmptyDimension,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationStructure {
    Ar1,
    Exchangeable,
    Independence,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkingCovariance {
    pub structure: CorrelationStructure,
    pub rho: f64,
    pub marginal_variance: f64,
}

impl Default for WorkingCovariance {
    fn default() -> Self {
        Self::independence()
    }
}

impl WorkingCovariance {
    pub fn independence() -> Self {
        Self {
            structure: CorrelationStructure::Independence,
            rho: 0.0,
            marginal_variance: 1.0,
        }
    }

    pub fn ar1(rho: f64) -> Self {
        Self {
            structure: CorrelationStructure::Ar1,
            rho,
            marginal_variance: 1.0,
        }
    }

    pub fn exchangeable(rho: f64) -> Self {
        Self {
            structure: CorrelationStructure::Exchangeable,
            rho,
            marginal_variance: 1.0,
        }
    }

    /// Checks `rho` and the variance for an `n`-visit subject.
    ///
    /// AR(1) needs `|rho| < 1`; exchangeable needs `-1/(n-1) < rho < 1`,
    /// the positive-definiteness range.
    pub fn check(&self, n: usize) -> Result<(), CovarianceError> {
        if n == 0 {
            return Err(CovarianceError::EmptyDimension);
        }
        if !(self.marginal_variance > 0.0) || !self.marginal_variance.is_finite() {
            return Err(CovarianceError::InvalidVariance(self.marginal_variance));
        }
        let rho = self.rho;
        let ok = match self.structure {
            CorrelationStructure::Independence => true,
            CorrelationStructure::Ar1 => rho.is_finite() && rho.abs() < 1.0,
            CorrelationStructure::Exchangeable => {
                let lower = if n > 1 { -1.0 / (n - 1) as f64 } else { f64::NEG_INFINITY };
                rho.is_finite() && rho < 1.0 && rho > lower
            }
        };
        if ok {
            Ok(())
        } else {
            Err(CovarianceError::InvalidRho {
                structure: self.structure,
                rho,
                n,
            })
        }
    }

    /// `R_i` for an `n`-visit subject.
    pub fn correlation_matrix(&self, n: usize) -> Result<DMatrix<f64>, CovarianceError> {
        self.check(n)?;
        let rho = self.rho;
        Ok(match self.structure {
            CorrelationStructure::Independence => DMatrix::identity(n, n),
            CorrelationStructure::Ar1 => {
                DMatrix::from_fn(n, n, |t, s| rho.powi(t.abs_diff(s) as i32))
            }
            CorrelationStructure::Exchangeable => {
                DMatrix::from_fn(n, n, |t, s| if t == s { 1.0 } else { rho })
            }
        })
    }

    /// `V_i = sigma^2 R_i`.
    pub fn covariance_matrix(&self, n: usize) -> Result<DMatrix<f64>, CovarianceError> {
        Ok(self.correlation_matrix(n)? * self.marginal_variance)
    }

    /// Closed-form `V_i^{-1}`: tridiagonal for AR(1), a rank-one correction
    /// of the identity for exchangeable.
    pub fn inverse_covariance(&self, n: usize) -> Result<DMatrix<f64>, CovarianceError> {
        self.check(n)?;
        let rho = self.rho;
        let scale = 1.0 / self.marginal_variance;
        let mut inv = match self.structure {
            CorrelationStructure::Independence => DMatrix::identity(n, n),
            CorrelationStructure::Ar1 => {
                let c = 1.0 / (1.0 - rho * rho);
                DMatrix::from_fn(n, n, |t, s| {
                    if t == s {
                        if n == 1 {
                            1.0
                        } else if t == 0 || t == n - 1 {
                            c
                        } else {
                            c * (1.0 + rho * rho)
                        }
                    } else if t.abs_diff(s) == 1 {
                        -rho * c
                    } else {
                        0.0
                    }
                })
            }
            CorrelationStructure::Exchangeable => {
                let c = 1.0 / (1.0 - rho);
                let off = rho / (1.0 + (n - 1) as f64 * rho);
                DMatrix::from_fn(n, n, |t, s| {
                    if t == s {
                        c * (1.0 - off)
                    } else {
                        -c * off
                    }
                })
            }
        };
        inv *= scale;
        Ok(inv)
    }

    /// `ln det V_i`, closed form.
    pub fn log_det(&self, n: usize) -> Result<f64, CovarianceError> {
        self.check(n)?;
        let rho = self.rho;
        let nf = n as f64;
        let corr = match self.structure {
            CorrelationStructure::Independence => 0.0,
            CorrelationStructure::Ar1 => (nf - 1.0) * (1.0 - rho * rho).ln(),
            CorrelationStructure::Exchangeable => {
                (nf - 1.0) * (1.0 - rho).ln() + (1.0 + (nf - 1.0) * rho).ln()
            }
        };
        Ok(nf * self.marginal_variance.ln() + corr)
    }
}

/// Precomputed inverses for every visit count a dataset contains.
///
/// Built once before fitting and read-only afterwards.
#[derive(Debug, Clone)]
pub struct InverseCache {
    wc: WorkingCovariance,
    inverses: BTreeMap<usize, DMatrix<f64>>,
}

impl InverseCache {
    pub fn build(
        wc: WorkingCovariance,
        sizes: impl IntoIterator<Item = usize>,
    ) -> Result<Self, CovarianceError> {
        let mut inverses = BTreeMap::new();
        for n in sizes {
            if let alloc::collections::btree_map::Entry::Vacant(e) = inverses.entry(n) {
                e.insert(wc.inverse_covariance(n)?);
            }
        }
        Ok(Self { wc, inverses })
    }

    pub fn working_covariance(&self) -> &WorkingCovariance {
        &self.wc
    }

    /// Inverse for an `n`-visit subject. Panics if `n` was not part of the build set.
    pub fn get(&self, n: usize) -> &DMatrix<f64> {
        &self.inverses[&n]
    }
}
