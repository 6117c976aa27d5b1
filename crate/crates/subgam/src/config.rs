//! Flat `key = value` run configuration with dotted keys.
//!
//! ```text
//! data.path = panel.csv
//! columns.x = age, time
//! transform.time = unit
//! covariance.structure = ar1
//! covariance.rho = 0.3
//! selection.fixed_m = 2, 2
//! ```
//!
//! Unknown keys are errors. [`RunConfig::to_text`] writes every key, so the
//! echo in an output directory reproduces the run exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use subgam_core::covariance::{CorrelationStructure, WorkingCovariance};
use subgam_core::data::ExclusionMode;
use subgam_core::{FitConfig, KnotRule};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("`{key}`: invalid value `{value}`")]
    InvalidValue { key: String, value: String },
}

/// Per-column transform applied at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Transform {
    Identity,
    /// Natural log; non-positive values are rejected.
    Log,
    /// Affine rescale of the whole column onto `[0, 1]`.
    Unit,
}

impl Transform {
    pub fn name(self) -> &'static str {
        match self {
            Transform::Identity => "identity",
            Transform::Log => "log",
            Transform::Unit => "unit",
        }
    }
}

impl FromStr for Transform {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "identity" => Ok(Transform::Identity),
            "log" => Ok(Transform::Log),
            "unit" => Ok(Transform::Unit),
            _ => Err(()),
        }
    }
}

/// Names of the CSV columns playing each role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub subject: String,
    pub y: String,
    /// Smooth covariates `x_1..x_p`.
    pub x: Vec<String>,
    /// Random-effect covariates `z_1..z_q`.
    pub z: Vec<String>,
    /// Baseline covariates `s_1..s_r`, constant within a subject.
    pub s: Vec<String>,
}

impl ColumnMap {
    /// `subject_id, y, x_1.., z_1.., s_1..`.
    pub fn standard(p: usize, q: usize, r: usize) -> Self {
        Self {
            subject: "subject_id".into(),
            y: "y".into(),
            x: (1..=p).map(|j| format!("x_{j}")).collect(),
            z: (1..=q).map(|j| format!("z_{j}")).collect(),
            s: (1..=r).map(|j| format!("s_{j}")).collect(),
        }
    }
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self::standard(1, 0, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    /// Input panel; relative paths are taken from the config file's directory.
    pub data: Option<PathBuf>,
    pub columns: ColumnMap,
    pub transforms: BTreeMap<String, Transform>,
    pub fit: FitConfig,
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
    })
}

fn structure_name(s: CorrelationStructure) -> &'static str {
    match s {
        CorrelationStructure::Ar1 => "ar1",
        CorrelationStructure::Exchangeable => "exchangeable",
        CorrelationStructure::Independence => "independence",
    }
}

/// Accepts the long names and the short `ar`/`ex`/`ind` forms.
pub fn parse_structure(s: &str) -> Option<CorrelationStructure> {
    match s {
        "ar1" | "ar" => Some(CorrelationStructure::Ar1),
        "exchangeable" | "ex" => Some(CorrelationStructure::Exchangeable),
        "independence" | "ind" => Some(CorrelationStructure::Independence),
        _ => None,
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            if seen.insert(key.to_string(), line).is_some() {
                return Err(ConfigError::Duplicate { line, key: key.into() });
            }
            cfg.set(line, key, value)?;
        }
        Ok(cfg)
    }

    /// Reads a config file and resolves `data.path` against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        if let Some(data) = &cfg.data {
            if data.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                cfg.data = Some(base.join(data));
            }
        }
        Ok(cfg)
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        let invalid = || ConfigError::InvalidValue {
            key: key.into(),
            value: value.into(),
        };
        let fit = &mut self.fit;
        match key {
            "data.path" => self.data = Some(PathBuf::from(value)),
            "columns.subject" => self.columns.subject = value.into(),
            "columns.y" => self.columns.y = value.into(),
            "columns.x" => self.columns.x = list(value),
            "columns.z" => self.columns.z = list(value),
            "columns.s" => self.columns.s = list(value),
            "spline.degree" => fit.degree = parse(key, value)?,
            "spline.interior_knots" => fit.interior_knots = parse(key, value)?,
            "spline.knot_rule" => {
                fit.knot_rule = match value {
                    "uniform" => KnotRule::Uniform,
                    "quantile" => KnotRule::Quantile,
                    _ => return Err(invalid()),
                }
            }
            "covariance.structure" => fit.covariance.structure = parse_structure(value).ok_or_else(invalid)?,
            "covariance.rho" => fit.covariance.rho = parse(key, value)?,
            "covariance.variance" => fit.covariance.marginal_variance = parse(key, value)?,
            "kmeans.restarts" => fit.kmeans.restarts = parse(key, value)?,
            "kmeans.seed" => fit.kmeans.seed = parse(key, value)?,
            "kmeans.max_iter" => fit.kmeans.max_iter = parse(key, value)?,
            "backfit.max_sweeps" => fit.max_sweeps = parse(key, value)?,
            "backfit.freeze_beta" => fit.freeze_beta = parse(key, value)?,
            "backfit.center" => fit.center = parse(key, value)?,
            "backfit.ridge" => fit.ridge = parse(key, value)?,
            "backfit.subject_ridge" => fit.subject_ridge = parse(key, value)?,
            "backfit.shape_features" => fit.shape_features = parse(key, value)?,
            "selection.m_max" => fit.m_max = parse(key, value)?,
            "selection.fixed_m" => {
                fit.fixed_m = match value {
                    "" | "auto" => None,
                    v => Some(
                        list(v)
                            .iter()
                            .map(|m| m.parse().map_err(|_| invalid()))
                            .collect::<Result<_, _>>()?,
                    ),
                }
            }
            "exclusion.mode" => {
                fit.exclusion.mode = match value {
                    "exclude" => ExclusionMode::Exclude,
                    "fail" => ExclusionMode::Fail,
                    _ => return Err(invalid()),
                }
            }
            "exclusion.min_visits" => {
                fit.exclusion.min_visits = match value {
                    "" | "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            _ => match key.strip_prefix("transform.") {
                Some(column) if !column.is_empty() => {
                    self.transforms.insert(column.into(), value.parse().map_err(|_| invalid())?);
                }
                _ => {
                    return Err(ConfigError::UnknownKey { line, key: key.into() });
                }
            },
        }
        Ok(())
    }

    /// Every key, in a fixed order; `parse(to_text())` gives back `self`.
    pub fn to_text(&self) -> String {
        let f = &self.fit;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        if let Some(p) = &self.data {
            kv("data.path", p.display().to_string());
        }
        kv("columns.subject", self.columns.subject.clone());
        kv("columns.y", self.columns.y.clone());
        kv("columns.x", self.columns.x.join(", "));
        kv("columns.z", self.columns.z.join(", "));
        kv("columns.s", self.columns.s.join(", "));
        for (col, t) in &self.transforms {
            kv(&format!("transform.{col}"), t.name().into());
        }
        kv("spline.degree", f.degree.to_string());
        kv("spline.interior_knots", f.interior_knots.to_string());
        kv(
            "spline.knot_rule",
            match f.knot_rule {
                KnotRule::Uniform => "uniform",
                KnotRule::Quantile => "quantile",
            }
            .into(),
        );
        kv("covariance.structure", structure_name(f.covariance.structure).into());
        kv("covariance.rho", f.covariance.rho.to_string());
        kv("covariance.variance", f.covariance.marginal_variance.to_string());
        kv("kmeans.restarts", f.kmeans.restarts.to_string());
        kv("kmeans.seed", f.kmeans.seed.to_string());
        kv("kmeans.max_iter", f.kmeans.max_iter.to_string());
        kv("backfit.max_sweeps", f.max_sweeps.to_string());
        kv("backfit.freeze_beta", f.freeze_beta.to_string());
        kv("backfit.center", f.center.to_string());
        kv("backfit.ridge", f.ridge.to_string());
        kv("backfit.subject_ridge", f.subject_ridge.to_string());
        kv("backfit.shape_features", f.shape_features.to_string());
        kv("selection.m_max", f.m_max.to_string());
        kv(
            "selection.fixed_m",
            f.fixed_m.as_ref().map_or("auto".into(), |m| {
                m.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")
            }),
        );
        kv(
            "exclusion.mode",
            match f.exclusion.mode {
                ExclusionMode::Exclude => "exclude",
                ExclusionMode::Fail => "fail",
            }
            .into(),
        );
        kv(
            "exclusion.min_visits",
            f.exclusion.min_visits.map_or("none".into(), |m| m.to_string()),
        );
        out
    }
}

/// Working covariance from CLI-style arguments.
pub fn working_covariance(structure: CorrelationStructure, rho: f64) -> WorkingCovariance {
    match structure {
        CorrelationStructure::Ar1 => WorkingCovariance::ar1(rho),
        CorrelationStructure::Exchangeable => WorkingCovariance::exchangeable(rho),
        CorrelationStructure::Independence => WorkingCovariance::independence(),
    }
}
