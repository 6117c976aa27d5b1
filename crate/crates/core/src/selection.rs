//! Group-count selection by BIC.
//!
//! The likelihood is Gaussian with covariance `sigma^2 V_i`, where `sigma^2`
//! is the weighted residual sum of squares over `N` observations. The
//! parameter count is `sum_j m_j K + (baseline columns) + 1` and the sample
//! size in the penalty is the observation count `N`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DVector;
#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;

use crate::backfit::Backfitter;
use crate::config::FitConfig;
use crate::data::LongitudinalDataset;
use crate::error::FitError;
use crate::model::FittedModel;

#[derive(Debug, Clone, PartialEq)]
pub struct BicRecord {
    pub covariate: usize,
    pub candidate_m: usize,
    pub loglik: f64,
    pub k_params: usize,
    pub n_obs: usize,
    pub bic: f64,
    pub feasible: bool,
}

/// `-2 loglik + ln(n_obs) k_params`.
pub fn bic_value(loglik: f64, k_params: usize, n_obs: usize) -> f64 {
    -2.0 * loglik + (n_obs as f64).ln() * k_params as f64
}

/// Free parameters of a fit with `m[j]` groups per covariate.
pub fn parameter_count(bf: &Backfitter<'_>, m: &[usize]) -> usize {
    let k = bf.design().k_basis();
    m.iter().map(|mj| mj * k).sum::<usize>() + bf.design().baseline_cols() + 1
}

/// Gaussian working log-likelihood of the usable subjects' residuals.
pub fn working_loglik(bf: &Backfitter<'_>, model: &FittedModel) -> Result<f64, FitError> {
    let data = bf.data();
    let wc = bf.config().covariance;
    let fitted = model.predict(data);
    let mut quad = 0.0;
    let mut log_det = 0.0;
    let n_obs = bf.design().n_obs as f64;
    for &i in &bf.design().usable {
        let y = &data.subject(i).y;
        let r = DVector::from_iterator(y.len(), y.iter().zip(&fitted[i]).map(|(a, b)| a - b));
        let w = bf.design().weight(data, i);
        quad += r.dot(&(w * &r));
        log_det += wc.log_det(y.len())?;
    }
    let sigma2 = (quad / n_obs).max(f64::MIN_POSITIVE);
    Ok(-0.5 * (n_obs * (2.0 * PI * sigma2).ln() + log_det + n_obs))
}

/// Fits `m = 1..=m_max` groups on covariate `j` (others held at `current`)
/// and returns the BIC minimizer, ties going to the smaller `m`.
pub fn select_m(
    bf: &Backfitter<'_>,
    j: usize,
    m_max: usize,
    current: &[usize],
) -> Result<(usize, Vec<BicRecord>), FitError> {
    let n_obs = bf.design().n_obs;
    let mut records = Vec::with_capacity(m_max);
    for m in 1..=m_max.max(1) {
        let mut counts = current.to_vec();
        counts[j] = m;
        let k_params = parameter_count(bf, &counts);
        let record = bf
            .run(&counts)
            .and_then(|model| working_loglik(bf, &model))
            .map(|loglik| BicRecord {
                covariate: j,
                candidate_m: m,
                loglik,
                k_params,
                n_obs,
                bic: bic_value(loglik, k_params, n_obs),
                feasible: true,
            });
        records.push(record.unwrap_or_else(|e| {
            log::warn!("covariate {j}, m = {m} failed: {e}");
            BicRecord {
                covariate: j,
                candidate_m: m,
                loglik: f64::NAN,
                k_params,
                n_obs,
                bic: f64::INFINITY,
                feasible: false,
            }
        }));
    }
    let best = records
        .iter()
        .filter(|r| r.feasible)
        .fold(None::<&BicRecord>, |best, r| match best {
            Some(b) if b.bic <= r.bic => Some(b),
            _ => Some(r),
        })
        .ok_or(FitError::AllCandidatesFailed { covariate: j })?;
    Ok((best.candidate_m, records))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub m: Vec<usize>,
    /// Records of the confirmation pass, one list per covariate.
    pub records: Vec<Vec<BicRecord>>,
}

/// Sequential selection over `j = 1..p` starting from one group everywhere,
/// followed by one confirmation pass with all other counts at their choices.
pub fn select_all(bf: &Backfitter<'_>) -> Result<Selection, FitError> {
    let p = bf.design().p();
    let m_max = bf.config().m_max.min(bf.n_usable());
    let mut m = vec![1; p];
    for j in 0..p {
        m[j] = select_m(bf, j, m_max, &m)?.0;
    }
    let mut records = Vec::with_capacity(p);
    for j in 0..p {
        let (best, rec) = select_m(bf, j, m_max, &m)?;
        m[j] = best;
        records.push(rec);
    }
    Ok(Selection { m, records })
}

/// Full pipeline: group counts from `config.fixed_m` or BIC, then the final fit.
pub fn fit(data: &LongitudinalDataset, config: &FitConfig) -> Result<FittedModel, FitError> {
    fit_with_records(data, config).map(|(model, _)| model)
}

/// Like [`fit`], also returning the BIC records (empty when `m` is fixed).
pub fn fit_with_records(
    data: &LongitudinalDataset,
    config: &FitConfig,
) -> Result<(FittedModel, Vec<Vec<BicRecord>>), FitError> {
    let bf = Backfitter::new(data, config)?;
    match &config.fixed_m {
        Some(m) => Ok((bf.run(m)?, Vec::new())),
        None => {
            let selection = select_all(&bf)?;
            let mut model = bf.run(&selection.m)?;
            model.bic_trace = selection
                .records
                .iter()
                .map(|rs| rs.iter().map(|r| (r.candidate_m, r.bic)).collect())
                .collect();
            Ok((model, selection.records))
        }
    }
}
