use alloc::vec::Vec;

use crate::bspline::KnotRule;
use crate::covariance::WorkingCovariance;
use crate::data::ExclusionPolicy;
use crate::kmeans::KMeansConfig;

/// Everything the fitting engine needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub degree: usize,
    pub interior_knots: usize,
    pub knot_rule: KnotRule,
    pub covariance: WorkingCovariance,
    pub kmeans: KMeansConfig,
    pub max_sweeps: usize,
    /// Keep the pooled-fit baseline coefficients for the whole run instead of
    /// refitting them after every sweep.
    pub freeze_beta: bool,
    /// Fit a global intercept and hold every component at pooled mean zero.
    pub center: bool,
    /// Ridge for the normal equations of pooled, group and baseline fits.
    pub ridge: f64,
    /// Ridge for the per-subject spline fits that feed k-means. With few
    /// visits, coefficients of basis functions near the ends of a subject's
    /// design range are barely identified and turn into outliers that
    /// k-means isolates; a small ridge pulls them in.
    pub subject_ridge: f64,
    /// Cluster on curve shape: remove each per-subject curve's mean level
    /// before k-means so random intercepts do not drive the partition.
    pub shape_features: bool,
    pub exclusion: ExclusionPolicy,
    /// Largest group count tried by BIC selection.
    pub m_max: usize,
    /// Skip selection and use these group counts.
    pub fixed_m: Option<Vec<usize>>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            degree: 3,
            interior_knots: 2,
            knot_rule: KnotRule::Uniform,
            covariance: WorkingCovariance::independence(),
            kmeans: KMeansConfig::default(),
            max_sweeps: 50,
            freeze_beta: false,
            center: true,
            ridge: 0.0,
            subject_ridge: 1.0,
            shape_features: true,
            exclusion: ExclusionPolicy::default(),
            m_max: 5,
            fixed_m: None,
        }
    }
}

impl FitConfig {
    pub fn k_basis(&self) -> usize {
        self.interior_knots + self.degree + 1
    }
}
