use alloc::string::String;

use thiserror::Error;

use crate::bspline::SplineError;
use crate::covariance::CovarianceError;
use crate::data::DataError;
use crate::gls::GlsError;
use crate::kmeans::KMeansError;

/// Errors from fitting, selection and oracle runs.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
    #[error(transparent)]
    KMeans(#[from] KMeansError),
    #[error("pooled fit is singular in the {block} block")]
    PooledSolve { block: String, source: GlsError },
    #[error("subject {subject}, covariate {covariate}: {source}")]
    SubjectSolve {
        subject: String,
        covariate: usize,
        source: GlsError,
    },
    #[error("covariate {covariate}, group {group}: {source}")]
    GroupSolve {
        covariate: usize,
        group: usize,
        source: GlsError,
    },
    #[error("baseline refit: {0}")]
    BaselineSolve(GlsError),
    #[error("no usable subjects remain after validation")]
    NoUsableSubjects,
    #[error("covariate {covariate}: {m} groups requested for {n} subjects")]
    TooManyGroups { covariate: usize, m: usize, n: usize },
    #[error("group counts given for {found} covariates, dataset has {expected}")]
    GroupCountShape { expected: usize, found: usize },
    #[error("covariate {covariate}: every candidate group count failed")]
    AllCandidatesFailed { covariate: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
