//! Monte Carlo replicates of a simulation case, scored against the truth.
//!
//! Replicates run in parallel on a rayon pool; each one derives its data and
//! k-means seeds from `(seed, replicate)` alone, so the report does not
//! depend on the thread count or scheduling.

use std::io::Write;

use rayon::prelude::*;
use subgam_core::backfit::split_seed;
use subgam_core::error::FitError;
use subgam_core::metrics::{self, MetricsError};
use subgam_core::simgen::{self, Case, GeneratedPanel, ScenarioSpec, VisitRule};
use subgam_core::{fit_with_records, FitConfig, FittedModel, WorkingCovariance};
use thiserror::Error;

use crate::csvio::{fmt_f64, IoError};
use crate::results::GRID_POINTS;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "SUBGAM_THREADS";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("replicate {replicate}: {source}")]
    Fit { replicate: usize, source: FitError },
    #[error("replicate {replicate}: {source}")]
    Metrics { replicate: usize, source: MetricsError },
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub case: Case,
    pub n: usize,
    pub reps: usize,
    pub covariance: WorkingCovariance,
    pub seed: u64,
    /// Visit-count rule; the case default when `None`.
    pub visits: Option<VisitRule>,
    pub sigma_e2: Option<f64>,
    pub sigma_b2: Option<f64>,
    /// Skip BIC and use these group counts.
    pub fixed_m: Option<Vec<usize>>,
    pub m_max: usize,
}

impl BenchSpec {
    pub fn new(case: Case, n: usize, reps: usize, covariance: WorkingCovariance) -> Self {
        Self {
            case,
            n,
            reps,
            covariance,
            seed: 0,
            visits: None,
            sigma_e2: None,
            sigma_b2: None,
            fixed_m: None,
            m_max: FitConfig::default().m_max,
        }
    }

    pub fn scenario(&self, replicate: usize) -> ScenarioSpec {
        let mut s = ScenarioSpec::new(self.case.clone(), self.n, split_seed(self.seed, replicate as u64));
        if let Some(v) = self.visits {
            s.ni_rule = v;
        }
        if let Some(v) = self.sigma_e2 {
            s.sigma_e2 = v;
        }
        if let Some(v) = self.sigma_b2 {
            s.sigma_b2 = v;
        }
        s
    }

    pub fn fit_config(&self, replicate: usize) -> FitConfig {
        let mut c = FitConfig {
            covariance: self.covariance,
            m_max: self.m_max,
            fixed_m: self.fixed_m.clone(),
            ..FitConfig::default()
        };
        c.kmeans.seed = split_seed(self.seed, replicate as u64);
        c
    }
}

/// Scores of one replicate; vectors are indexed by covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub m_hat: Vec<usize>,
    pub accuracy: Vec<f64>,
    pub nmi: Vec<f64>,
    pub rand_index: Vec<f64>,
    /// Share of subjects placed correctly on every covariate at once.
    pub total_accuracy: f64,
    pub mse: f64,
    pub oracle_mse: f64,
    pub mse_ratio: f64,
    /// Subject-averaged squared distance between each subject's fitted curve
    /// and its true curve over a uniform grid, both centered at pooled mean zero.
    pub grid_mse: Vec<f64>,
}

fn observed(panel: &GeneratedPanel) -> Vec<Vec<f64>> {
    panel.dataset.subjects().iter().map(|s| s.y.clone()).collect()
}

/// Grid error of covariate `j` against the truth, centered as the fit is.
pub fn grid_mse(panel: &GeneratedPanel, model: &FittedModel, j: usize) -> f64 {
    let data = &panel.dataset;
    let (sum, count) = data
        .subjects()
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.x[j].iter().map(move |&x| panel.true_value(i, j, x)))
        .fold((0.0, 0usize), |(a, c), v| (a + v, c + 1));
    let level = sum / count as f64;
    let curves: Vec<(Vec<f64>, Vec<f64>)> = (0..model.gamma[j].len())
        .map(|k| model.component_grid(j, k, GRID_POINTS))
        .collect();
    let mut total = 0.0;
    for i in 0..data.n() {
        let (grid, fhat) = &curves[model.partition.labels[j][i] - 1];
        let err: f64 = grid
            .iter()
            .zip(fhat)
            .map(|(&x, &f)| (f - (panel.true_value(i, j, x) - level)).powi(2))
            .sum();
        total += err / grid.len() as f64;
    }
    total / data.n() as f64
}

pub fn run_replicate(spec: &BenchSpec, replicate: usize) -> Result<ReplicateResult, BenchError> {
    let fit_err = |source| BenchError::Fit { replicate, source };
    let met_err = |source| BenchError::Metrics { replicate, source };
    let panel = simgen::generate(&spec.scenario(replicate));
    let config = spec.fit_config(replicate);
    let (model, _) = fit_with_records(&panel.dataset, &config).map_err(fit_err)?;
    let oracle = simgen::oracle_fit(&panel, &config).map_err(fit_err)?;
    let truth = &panel.truth.labels;
    let est = &model.partition.labels;
    let p = truth.len();
    let per = |f: fn(&[usize], &[usize]) -> Result<f64, MetricsError>| {
        (0..p).map(|j| f(&est[j], &truth[j])).collect::<Result<Vec<_>, _>>()
    };
    let y = observed(&panel);
    let mse = metrics::mse(&model.predict(&panel.dataset), &y).map_err(met_err)?;
    let oracle_mse = metrics::mse(&oracle.predict(&panel.dataset), &y).map_err(met_err)?;
    Ok(ReplicateResult {
        replicate,
        m_hat: model.partition.m.clone(),
        accuracy: per(metrics::accuracy).map_err(met_err)?,
        nmi: per(metrics::nmi).map_err(met_err)?,
        rand_index: per(metrics::rand_index).map_err(met_err)?,
        total_accuracy: metrics::total_accuracy(est, truth).map_err(met_err)?,
        mse,
        oracle_mse,
        mse_ratio: metrics::mse_ratio(oracle_mse, mse).map_err(met_err)?,
        grid_mse: (0..p).map(|j| grid_mse(&panel, &model, j)).collect(),
    })
}

/// Worker count: explicit value, else [`THREADS_ENV`], else rayon's default.
pub fn thread_count(explicit: Option<usize>) -> Option<usize> {
    explicit.or_else(|| std::env::var(THREADS_ENV).ok()?.trim().parse().ok())
}

/// All replicates, in replicate order.
pub fn run_bench(spec: &BenchSpec, threads: Option<usize>) -> Result<Vec<ReplicateResult>, BenchError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = thread_count(threads) {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| BenchError::Pool(e.to_string()))?;
    pool.install(|| {
        (0..spec.reps)
            .into_par_iter()
            .map(|r| {
                let res = run_replicate(spec, r);
                log::info!("replicate {r} done");
                res
            })
            .collect()
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn join_m(m: &[usize]) -> String {
    m.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

/// One row per replicate. `covariate` is `all`: accuracy is the joint
/// accuracy over covariates, NMI and Rand index are covariate means.
pub fn write_report<W: Write>(writer: W, results: &[ReplicateResult]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "replicate", "covariate", "accuracy", "nmi", "rand_index", "mse", "mse_ratio", "m_hat", "grid_mse",
    ])?;
    for r in results {
        w.write_record([
            (r.replicate + 1).to_string(),
            "all".into(),
            fmt_f64(r.total_accuracy),
            fmt_f64(mean(&r.nmi)),
            fmt_f64(mean(&r.rand_index)),
            fmt_f64(r.mse),
            fmt_f64(r.mse_ratio),
            join_m(&r.m_hat),
            fmt_f64(mean(&r.grid_mse)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per replicate and covariate.
pub fn write_detail<W: Write>(writer: W, results: &[ReplicateResult]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["replicate", "covariate", "accuracy", "nmi", "rand_index", "m_hat", "grid_mse"])?;
    for r in results {
        for j in 0..r.accuracy.len() {
            w.write_record([
                (r.replicate + 1).to_string(),
                (j + 1).to_string(),
                fmt_f64(r.accuracy[j]),
                fmt_f64(r.nmi[j]),
                fmt_f64(r.rand_index[j]),
                r.m_hat[j].to_string(),
                fmt_f64(r.grid_mse[j]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
