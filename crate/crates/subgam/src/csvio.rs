//! Long-format panel CSV: one row per visit, rows of a subject in time order.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use subgam_core::data::{DataError, LongitudinalDataset, SubjectRecord};
use thiserror::Error;

use crate::config::{ColumnMap, Transform};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("subject {subject}: baseline column `{column}` is not constant")]
    NonConstantBaseline { subject: String, column: String },
    #[error("row {row}, column `{column}`: `{value}` is not a number")]
    NonNumericCell { row: usize, column: String, value: String },
    #[error("row {row}, column `{column}`: log of non-positive value {value}")]
    LogDomain { row: usize, column: String, value: f64 },
    #[error("column `{0}` is constant and cannot be rescaled to [0, 1]")]
    DegenerateColumn(String),
    #[error("no data rows")]
    Empty,
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{0}")]
    Format(String),
}

/// Every float goes out with 17 significant digits so it reads back exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn open(path: &Path) -> Result<std::fs::File, IoError> {
    std::fs::File::open(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn create(path: &Path) -> Result<std::fs::File, IoError> {
    std::fs::File::create(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_long_csv(
    path: &Path,
    columns: &ColumnMap,
    transforms: &BTreeMap<String, Transform>,
) -> Result<LongitudinalDataset, IoError> {
    read_long_csv_from(open(path)?, columns, transforms)
}

pub fn read_long_csv_from<R: Read>(
    reader: R,
    columns: &ColumnMap,
    transforms: &BTreeMap<String, Transform>,
) -> Result<LongitudinalDataset, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IoError::MissingColumn(name.to_string()))
    };
    let subject_col = find(&columns.subject)?;
    // numeric columns in role order: y, x.., z.., s..
    let names: Vec<&String> = std::iter::once(&columns.y)
        .chain(&columns.x)
        .chain(&columns.z)
        .chain(&columns.s)
        .collect();
    let idx: Vec<usize> = names.iter().map(|n| find(n)).collect::<Result<_, _>>()?;

    let mut ids: Vec<String> = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        ids.push(rec.get(subject_col).unwrap_or("").to_string());
        for (c, &col) in idx.iter().enumerate() {
            let cell = rec.get(col).unwrap_or("");
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| IoError::NonNumericCell {
                    row,
                    column: names[c].clone(),
                    value: cell.to_string(),
                })?;
            values[c].push(v);
        }
    }
    if ids.is_empty() {
        return Err(IoError::Empty);
    }
    for (c, name) in names.iter().enumerate() {
        apply_transform(name, transforms.get(*name).copied(), &mut values[c])?;
    }

    // subjects in order of first appearance, visits in file order
    let mut order: Vec<String> = Vec::new();
    let mut rows_of: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (row, id) in ids.iter().enumerate() {
        rows_of
            .entry(id.as_str())
            .or_insert_with(|| {
                order.push(id.clone());
                Vec::new()
            })
            .push(row);
    }
    let (p, q, r) = (columns.x.len(), columns.z.len(), columns.s.len());
    let mut subjects = Vec::with_capacity(order.len());
    for id in &order {
        let rows = &rows_of[id.as_str()];
        let col = |c: usize| -> Vec<f64> { rows.iter().map(|&t| values[c][t]).collect() };
        let y = col(0);
        let x = (0..p).map(|j| col(1 + j)).collect();
        let z = (0..q).map(|j| col(1 + p + j)).collect();
        let mut s = Vec::with_capacity(r);
        for j in 0..r {
            let v = col(1 + p + q + j);
            if v.iter().any(|&e| e != v[0]) {
                return Err(IoError::NonConstantBaseline {
                    subject: id.clone(),
                    column: columns.s[j].clone(),
                });
            }
            s.push(v[0]);
        }
        subjects.push(SubjectRecord::new(id.clone(), y, x, z, s));
    }
    Ok(LongitudinalDataset::new(subjects, p, q, r)?)
}

fn apply_transform(name: &str, t: Option<Transform>, v: &mut [f64]) -> Result<(), IoError> {
    match t.unwrap_or(Transform::Identity) {
        Transform::Identity => {}
        Transform::Log => {
            for (row, e) in v.iter_mut().enumerate() {
                if *e <= 0.0 {
                    return Err(IoError::LogDomain {
                        row: row + 1,
                        column: name.into(),
                        value: *e,
                    });
                }
                *e = e.ln();
            }
        }
        Transform::Unit => {
            let (lo, hi) = v
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| (lo.min(e), hi.max(e)));
            if hi <= lo {
                return Err(IoError::DegenerateColumn(name.into()));
            }
            for e in v.iter_mut() {
                *e = (*e - lo) / (hi - lo);
            }
        }
    }
    Ok(())
}

/// Writes `data` under the column names of `columns`, one row per visit.
pub fn write_long_csv<W: Write>(writer: W, data: &LongitudinalDataset, columns: &ColumnMap) -> Result<(), IoError> {
    if columns.x.len() != data.p() || columns.z.len() != data.q() || columns.s.len() != data.r() {
        return Err(IoError::Format("column map does not match the dataset shape".into()));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![columns.subject.clone(), columns.y.clone()];
    header.extend(columns.x.iter().chain(&columns.z).chain(&columns.s).cloned());
    w.write_record(&header)?;
    for s in data.subjects() {
        for t in 0..s.n_obs() {
            let mut rec = vec![s.id.clone(), fmt_f64(s.y[t])];
            rec.extend(s.x.iter().map(|x| fmt_f64(x[t])));
            rec.extend(s.z.iter().map(|z| fmt_f64(z[t])));
            rec.extend(s.s.iter().map(|&v| fmt_f64(v)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_long_csv_file(path: &Path, data: &LongitudinalDataset, columns: &ColumnMap) -> Result<(), IoError> {
    write_long_csv(create(path)?, data, columns)
}
