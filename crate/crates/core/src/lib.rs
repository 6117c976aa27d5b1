//! Subgroup identification in longitudinal panels under an additive
//! mixed-effect model.
//!
//! Each smooth covariate `j` carries its own partition of the subjects, and
//! every group shares one B-spline component. The engine alternates
//! per-subject spline fits, k-means on the coefficient vectors and pooled
//! group refits (backfitting), and chooses group counts by BIC.
//!
//! The crate is `no_std` and needs only `alloc`; file formats and the command
//! line live in a companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod backfit;
pub mod bspline;
pub mod config;
pub mod covariance;
pub mod data;
pub mod design;
pub mod error;
pub mod gls;
pub mod initial_fit;
pub mod kmeans;
pub mod metrics;
pub mod model;
pub mod selection;
pub mod simgen;

pub use backfit::Backfitter;
pub use bspline::{KnotRule, SplineBasis, SplineSpec};
pub use config::FitConfig;
pub use covariance::{CorrelationStructure, WorkingCovariance};
pub use data::{ExclusionMode, ExclusionPolicy, LongitudinalDataset, SubgroupPartition, SubjectRecord};
pub use error::FitError;
pub use model::FittedModel;
pub use selection::{fit, fit_with_records, BicRecord};
