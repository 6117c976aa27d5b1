//! Result export: memberships, coefficients, baseline estimates, BIC trace,
//! plot-ready component grids and the effective config.

use std::collections::BTreeMap;
use std::path::Path;

use subgam_core::data::LongitudinalDataset;
use subgam_core::{BicRecord, FittedModel};

use crate::config::RunConfig;
use crate::csvio::{create, fmt_f64, open, IoError};

/// Grid resolution of `fitted_grids.csv`.
pub const GRID_POINTS: usize = 101;

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<std::fs::File>, IoError> {
    Ok(csv::Writer::from_writer(create(&dir.join(name))?))
}

pub fn write_results(
    outdir: &Path,
    data: &LongitudinalDataset,
    model: &FittedModel,
    records: &[Vec<BicRecord>],
    config: &RunConfig,
) -> Result<(), IoError> {
    std::fs::create_dir_all(outdir).map_err(|source| IoError::File {
        path: outdir.to_path_buf(),
        source,
    })?;

    let mut w = writer(outdir, "memberships.csv")?;
    w.write_record(["subject_id", "covariate", "group"])?;
    for (j, labels) in model.partition.labels.iter().enumerate() {
        for (s, g) in data.subjects().iter().zip(labels) {
            w.write_record([s.id.clone(), (j + 1).to_string(), g.to_string()])?;
        }
    }
    w.flush()?;

    let mut w = writer(outdir, "coefficients.csv")?;
    w.write_record(["covariate", "group", "basis_index", "gamma"])?;
    for (j, groups) in model.gamma.iter().enumerate() {
        for (k, g) in groups.iter().enumerate() {
            for (b, v) in g.iter().enumerate() {
                w.write_record([(j + 1).to_string(), (k + 1).to_string(), (b + 1).to_string(), fmt_f64(*v)])?;
            }
        }
    }
    w.flush()?;

    let mut w = writer(outdir, "beta.csv")?;
    w.write_record(["term", "estimate"])?;
    let names = model
        .intercept
        .then(|| "intercept".to_string())
        .into_iter()
        .chain(config.columns.s.iter().cloned());
    for (name, v) in names.zip(&model.beta) {
        w.write_record([name, fmt_f64(*v)])?;
    }
    w.flush()?;

    let mut w = writer(outdir, "bic_trace.csv")?;
    w.write_record(["covariate", "m", "loglik", "k", "n", "bic", "feasible"])?;
    for r in records.iter().flatten() {
        w.write_record([
            (r.covariate + 1).to_string(),
            r.candidate_m.to_string(),
            fmt_f64(r.loglik),
            r.k_params.to_string(),
            r.n_obs.to_string(),
            fmt_f64(r.bic),
            r.feasible.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = writer(outdir, "fitted_grids.csv")?;
    w.write_record(["covariate", "group", "x", "fhat"])?;
    for j in 0..model.p() {
        for k in 0..model.gamma[j].len() {
            let (grid, f) = model.component_grid(j, k, GRID_POINTS);
            for (x, v) in grid.iter().zip(&f) {
                w.write_record([(j + 1).to_string(), (k + 1).to_string(), fmt_f64(*x), fmt_f64(*v)])?;
            }
        }
    }
    w.flush()?;

    std::fs::write(outdir.join("effective.conf"), config.to_text()).map_err(|source| IoError::File {
        path: outdir.join("effective.conf"),
        source,
    })?;
    Ok(())
}

/// Memberships per covariate (1-based keys): `(subject_id, group)` in file order.
pub type Memberships = BTreeMap<usize, Vec<(String, usize)>>;

/// Reads a `subject_id, covariate, group` file, as written by
/// [`write_results`] or by `simulate` for the truth.
pub fn read_memberships(path: &Path) -> Result<Memberships, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IoError::MissingColumn(name.into()))
    };
    let (si, ci, gi) = (col("subject_id")?, col("covariate")?, col("group")?);
    let mut out = Memberships::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let int = |c: usize, name: &str| -> Result<usize, IoError> {
            let cell = rec.get(c).unwrap_or("");
            cell.parse().map_err(|_| IoError::NonNumericCell {
                row: r + 1,
                column: name.into(),
                value: cell.into(),
            })
        };
        let (cov, group) = (int(ci, "covariate")?, int(gi, "group")?);
        out.entry(cov)
            .or_default()
            .push((rec.get(si).unwrap_or("").to_string(), group));
    }
    Ok(out)
}
