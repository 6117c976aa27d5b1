//! `subgam fit | simulate | metrics | bench`.
//!
//! Exit codes: 0 on success, 2 on usage errors (bad flags, missing columns),
//! 1 when the run itself fails.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use subgam_core::covariance::CorrelationStructure;
use subgam_core::metrics::{self, MetricsError};
use subgam_core::simgen::{self, Case, ScenarioSpec, VisitRule};
use subgam_core::{fit_with_records, FitError};
use thiserror::Error;

use crate::bench::{self, BenchError, BenchSpec};
use crate::config::{parse_structure, working_covariance, ColumnMap, ConfigError, RunConfig};
use crate::csvio::{create, read_long_csv, write_long_csv_file, IoError};
use crate::results::{read_memberships, write_results};

#[derive(Debug, Parser)]
#[command(name = "subgam", version, about = "Covariate-wise subgroup identification for longitudinal data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CaseArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    #[value(name = "3")]
    Three,
}

impl CaseArg {
    fn case(self) -> Case {
        match self {
            CaseArg::One => Case::CaseI,
            CaseArg::Two => Case::CaseII,
            CaseArg::Three => Case::CaseIII,
        }
    }

    /// Working correlation the case is usually fit with.
    fn default_correlation(self) -> (CorrelationStructure, f64) {
        match self {
            CaseArg::One => (CorrelationStructure::Ar1, 0.3),
            CaseArg::Two => (CorrelationStructure::Exchangeable, 0.3),
            CaseArg::Three => (CorrelationStructure::Exchangeable, 0.5),
        }
    }
}

fn structure(s: &str) -> Result<CorrelationStructure, String> {
    parse_structure(s).ok_or_else(|| format!("unknown correlation `{s}` (ar, ex, ind)"))
}

fn visits(s: &str) -> Result<VisitRule, String> {
    let bad = || format!("visits must be `K` or `LO-HI`, got `{s}`");
    match s.split_once('-') {
        Some((lo, hi)) => {
            let (lo, hi) = (lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?);
            if lo > hi {
                return Err(bad());
            }
            Ok(VisitRule::UniformInt(lo, hi))
        }
        None => s.parse().map(VisitRule::Fixed).map_err(|_| bad()),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a panel described by a config file and write the results.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `data.path` from the config.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Generate a simulation panel, its truth and a matching fit config.
    Simulate {
        #[arg(long, value_enum)]
        case: CaseArg,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// `K` visits per subject or a uniform range `LO-HI`.
        #[arg(long, value_parser = visits)]
        visits: Option<VisitRule>,
        #[arg(long)]
        sigma_e2: Option<f64>,
        #[arg(long)]
        sigma_b2: Option<f64>,
        /// Working correlation written into the generated config.
        #[arg(long, value_parser = structure)]
        corr: Option<CorrelationStructure>,
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Score estimated memberships against the truth.
    Metrics {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Run Monte Carlo replicates of a case and write the metrics report.
    Bench {
        #[arg(long, value_enum)]
        case: CaseArg,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, value_parser = structure)]
        corr: Option<CorrelationStructure>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = visits)]
        visits: Option<VisitRule>,
        #[arg(long)]
        sigma_e2: Option<f64>,
        #[arg(long)]
        sigma_b2: Option<f64>,
        /// Comma-separated group counts; BIC selection when absent.
        #[arg(long, value_delimiter = ',')]
        fixed_m: Option<Vec<usize>>,
        #[arg(long)]
        m_max: Option<usize>,
        /// Worker threads; defaults to the SUBGAM_THREADS environment variable.
        #[arg(long)]
        threads: Option<usize>,
        /// Report path; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Optional per-covariate report.
        #[arg(long)]
        detail: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io(IoError::MissingColumn(_)) => 2,
            _ => 1,
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Fit { config, out, data } => fit(&config, &out, data),
        Command::Simulate {
            case,
            n,
            seed,
            out,
            visits,
            sigma_e2,
            sigma_b2,
            corr,
            rho,
        } => {
            let mut spec = ScenarioSpec::new(case.case(), n, seed);
            if let Some(v) = visits {
                spec.ni_rule = v;
            }
            if let Some(v) = sigma_e2 {
                spec.sigma_e2 = v;
            }
            if let Some(v) = sigma_b2 {
                spec.sigma_b2 = v;
            }
            let (s0, r0) = case.default_correlation();
            simulate(&spec, &out, corr.unwrap_or(s0), rho.unwrap_or(r0))
        }
        Command::Metrics { est, truth } => {
            let report = score(&est, &truth)?;
            print!("{report}");
            Ok(())
        }
        Command::Bench {
            case,
            n,
            reps,
            corr,
            rho,
            seed,
            visits,
            sigma_e2,
            sigma_b2,
            fixed_m,
            m_max,
            threads,
            out,
            detail,
        } => {
            let (s0, r0) = case.default_correlation();
            let mut spec = BenchSpec::new(
                case.case(),
                n,
                reps,
                working_covariance(corr.unwrap_or(s0), rho.unwrap_or(r0)),
            );
            spec.seed = seed;
            spec.visits = visits;
            spec.sigma_e2 = sigma_e2;
            spec.sigma_b2 = sigma_b2;
            spec.fixed_m = fixed_m;
            if let Some(m) = m_max {
                spec.m_max = m;
            }
            let results = bench::run_bench(&spec, threads)?;
            match out {
                Some(path) => bench::write_report(create(&path)?, &results)?,
                None => bench::write_report(std::io::stdout().lock(), &results)?,
            }
            if let Some(path) = detail {
                bench::write_detail(create(&path)?, &results)?;
            }
            Ok(())
        }
    }
}

fn fit(config_path: &Path, out: &Path, data: Option<PathBuf>) -> Result<(), CliError> {
    let mut config = RunConfig::load(config_path)?;
    if data.is_some() {
        config.data = data;
    }
    let path = config
        .data
        .clone()
        .ok_or_else(|| CliError::Usage("no input: set data.path or pass --data".into()))?;
    let dataset = read_long_csv(&path, &config.columns, &config.transforms)?;
    log::info!(
        "read {} subjects, {} observations from {}",
        dataset.n(),
        dataset.total_obs(),
        path.display()
    );
    let (model, records) = fit_with_records(&dataset, &config.fit)?;
    if !model.converged {
        log::warn!("backfitting stopped after {} sweeps without converging", model.iterations);
    }
    write_results(out, &dataset, &model, &records, &config)?;
    Ok(())
}

/// Writes `data.csv`, `truth.csv` and `fit.conf` into `out`.
pub fn simulate(spec: &ScenarioSpec, out: &Path, corr: CorrelationStructure, rho: f64) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|source| IoError::File {
        path: out.to_path_buf(),
        source,
    })?;
    let panel = simgen::generate(spec);
    let data = &panel.dataset;
    let columns = ColumnMap::standard(data.p(), data.q(), data.r());
    write_long_csv_file(&out.join("data.csv"), data, &columns)?;

    let mut w = csv::Writer::from_writer(create(&out.join("truth.csv"))?);
    w.write_record(["subject_id", "covariate", "group"]).map_err(IoError::from)?;
    for (j, labels) in panel.truth.labels.iter().enumerate() {
        for (s, g) in data.subjects().iter().zip(labels) {
            w.write_record([s.id.clone(), (j + 1).to_string(), g.to_string()])
                .map_err(IoError::from)?;
        }
    }
    w.flush().map_err(IoError::from)?;

    let mut config = RunConfig {
        data: Some(PathBuf::from("data.csv")),
        columns,
        ..RunConfig::default()
    };
    config.fit.covariance = working_covariance(corr, rho);
    config.fit.kmeans.seed = spec.seed;
    std::fs::write(out.join("fit.conf"), config.to_text()).map_err(|source| IoError::File {
        path: out.join("fit.conf"),
        source,
    })?;
    Ok(())
}

/// Per-covariate accuracy, NMI and Rand index, plus joint accuracy, as text.
pub fn score(est: &Path, truth: &Path) -> Result<String, CliError> {
    let est = read_memberships(est)?;
    let truth = read_memberships(truth)?;
    let mut out = String::new();
    let mut est_all = Vec::new();
    let mut truth_all = Vec::new();
    for (cov, t) in &truth {
        let e = est
            .get(cov)
            .ok_or_else(|| CliError::Usage(format!("estimate has no covariate {cov}")))?;
        let lookup: std::collections::HashMap<&str, usize> = e.iter().map(|(s, g)| (s.as_str(), *g)).collect();
        let el: Vec<usize> = t
            .iter()
            .map(|(s, _)| {
                lookup
                    .get(s.as_str())
                    .copied()
                    .ok_or_else(|| CliError::Usage(format!("subject {s} missing from estimate")))
            })
            .collect::<Result<_, _>>()?;
        let tl: Vec<usize> = t.iter().map(|(_, g)| *g).collect();
        let acc = metrics::accuracy(&el, &tl)?;
        let nmi = metrics::nmi(&el, &tl)?;
        let ri = metrics::rand_index(&el, &tl)?;
        out.push_str(&format!(
            "covariate {cov}: accuracy {acc:.4} nmi {nmi:.4} rand_index {ri:.4}\n"
        ));
        est_all.push(el);
        truth_all.push(tl);
    }
    let total = metrics::total_accuracy(&est_all, &truth_all)?;
    out.push_str(&format!("total accuracy {total:.4}\n"));
    Ok(out)
}

/// Flushes standard output, ignoring a closed pipe.
pub fn flush_stdout() {
    let _ = std::io::stdout().flush();
}
