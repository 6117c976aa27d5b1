//! Longitudinal data model and covariate-wise subgroup structure.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

/// Errors raised while building or validating a dataset or a partition.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("dataset has no subjects")]
    EmptyDataset,
    #[error("subject {id} has no observations")]
    NoObservations { id: String },
    #[error("subject {id}: {field} has {found} rows, expected {expected}")]
    RowMismatch {
        id: String,
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("subject {id}: expected {expected} {field} columns, found {found}")]
    ColumnMismatch {
        id: String,
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("subject {id}: non-finite value in {field}")]
    NonFinite { id: String, field: &'static str },
    #[error("subject {id} has {visits} visits, {required} required")]
    InsufficientVisits {
        id: String,
        visits: usize,
        required: usize,
    },
    #[error("covariate {covariate}: group label {label} is unused")]
    EmptyGroup { covariate: usize, label: usize },
    #[error("covariate {covariate}: label {label} outside 1..={m}")]
    LabelOutOfRange {
        covariate: usize,
        label: usize,
        m: usize,
    },
    #[error("partition has {found} label vectors for {expected} covariates")]
    PartitionShape { expected: usize, found: usize },
}

/// One subject's repeated measurements.
///
/// Covariates are stored column-wise: `x[j][t]` is the `t`-th visit of smooth
/// covariate `j`, `z[k][t]` the `t`-th visit of random-effect covariate `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    pub y: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub s: Vec<f64>,
}

impl SubjectRecord {
    pub fn new(
        id: impl Into<String>,
        y: Vec<f64>,
        x: Vec<Vec<f64>>,
        z: Vec<Vec<f64>>,
        s: Vec<f64>,
    ) -> Self {
        Self {
            id: id.into(),
            y,
            x,
            z,
            s,
        }
    }

    /// Number of visits `n_i`.
    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    fn check(&self, p: usize, q: usize, r: usize) -> Result<(), DataError> {
        let n = self.n_obs();
        if n == 0 {
            return Err(DataError::NoObservations {
                id: self.id.clone(),
            });
        }
        for (field, cols, expected) in [("x", &self.x, p), ("z", &self.z, q)] {
            if cols.len() != expected {
                return Err(DataError::ColumnMismatch {
                    id: self.id.clone(),
                    field,
                    expected,
                    found: cols.len(),
                });
            }
            for col in cols.iter() {
                if col.len() != n {
                    return Err(DataError::RowMismatch {
                        id: self.id.clone(),
                        field,
                        expected: n,
                        found: col.len(),
                    });
                }
                if col.iter().any(|v| !v.is_finite()) {
                    return Err(DataError::NonFinite {
                        id: self.id.clone(),
                        field,
                    });
                }
            }
        }
        if self.s.len() != r {
            return Err(DataError::ColumnMismatch {
                id: self.id.clone(),
                field: "s",
                expected: r,
                found: self.s.len(),
            });
        }
        if self.y.iter().chain(self.s.iter()).any(|v| !v.is_finite()) {
            return Err(DataError::NonFinite {
                id: self.id.clone(),
                field: "y/s",
            });
        }
        Ok(())
    }
}

/// A panel of `n` independent subjects sharing covariate dimensions `p`, `q`, `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset {
    subjects: Vec<SubjectRecord>,
    p: usize,
    q: usize,
    r: usize,
}

impl LongitudinalDataset {
    pub fn new(subjects: Vec<SubjectRecord>, p: usize, q: usize, r: usize) -> Result<Self, DataError> {
        if subjects.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        for s in &subjects {
            s.check(p, q, r)?;
        }
        Ok(Self { subjects, p, q, r })
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn subject(&self, i: usize) -> &SubjectRecord {
        &self.subjects[i]
    }

    /// Number of subjects `n`.
    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Total number of observations `N = sum n_i`.
    pub fn total_obs(&self) -> usize {
        self.subjects.iter().map(SubjectRecord::n_obs).sum()
    }

    /// Observed range `[min, max]` of smooth covariate `j` across all subjects.
    pub fn covariate_range(&self, j: usize) -> (f64, f64) {
        self.subjects
            .iter()
            .flat_map(|s| s.x[j].iter().copied())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// All observed values of covariate `j`, subject by subject.
    pub fn covariate_values(&self, j: usize) -> Vec<f64> {
        self.subjects
            .iter()
            .flat_map(|s| s.x[j].iter().copied())
            .collect()
    }

    /// Returns a dataset holding the given subjects in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self, DataError> {
        Self::new(
            indices.iter().map(|&i| self.subjects[i].clone()).collect(),
            self.p,
            self.q,
            self.r,
        )
    }
}

/// What to do with subjects that have too few visits for a per-subject spline solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExclusionMode {
    /// Drop them from fitting; they are assigned post hoc.
    Exclude,
    /// Fail the run.
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExclusionPolicy {
    pub mode: ExclusionMode,
    /// Extra minimum visit count on top of the basis dimension. A value of 9
    /// drops every subject with 8 or fewer visits.
    pub min_visits: Option<usize>,
}

impl Default for ExclusionPolicy {
    fn default() -> Self {
        Self {
            mode: ExclusionMode::Exclude,
            min_visits: None,
        }
    }
}

impl ExclusionPolicy {
    pub fn required_visits(&self, k_basis: usize) -> usize {
        self.min_visits.map_or(k_basis, |m| m.max(k_basis))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectUsage {
    pub index: usize,
    pub id: String,
    pub n_obs: usize,
    pub usable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub k_basis: usize,
    pub required_visits: usize,
    pub subjects: Vec<SubjectUsage>,
}

impl ValidationReport {
    pub fn usable(&self) -> Vec<usize> {
        self.subjects
            .iter()
            .filter(|s| s.usable)
            .map(|s| s.index)
            .collect()
    }

    pub fn excluded(&self) -> Vec<usize> {
        self.subjects
            .iter()
            .filter(|s| !s.usable)
            .map(|s| s.index)
            .collect()
    }
}

/// Checks every subject's visit count against the basis dimension.
///
/// Under [`ExclusionMode::Fail`] the first insufficient subject is an error;
/// under [`ExclusionMode::Exclude`] it is only flagged in the report.
pub fn validate(
    dataset: &LongitudinalDataset,
    k_basis: usize,
    policy: &ExclusionPolicy,
) -> Result<ValidationReport, DataError> {
    if dataset.n() == 0 {
        return Err(DataError::EmptyDataset);
    }
    let required = policy.required_visits(k_basis);
    let mut subjects = Vec::with_capacity(dataset.n());
    for (index, s) in dataset.subjects().iter().enumerate() {
        let usable = s.n_obs() >= required;
        if !usable {
            if policy.mode == ExclusionMode::Fail {
                return Err(DataError::InsufficientVisits {
                    id: s.id.clone(),
                    visits: s.n_obs(),
                    required,
                });
            }
            log::warn!(
                "subject {} has {} visits (< {}); excluded from fitting",
                s.id,
                s.n_obs(),
                required
            );
        }
        subjects.push(SubjectUsage {
            index,
            id: s.id.clone(),
            n_obs: s.n_obs(),
            usable,
        });
    }
    Ok(ValidationReport {
        k_basis,
        required_visits: required,
        subjects,
    })
}

/// Relabels a label vector by order of first appearance, starting at 1.
///
/// Works for any label alphabet; returns the relabeled vector and the number
/// of distinct labels.
pub fn first_appearance_labels(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len() + 1;
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// For each covariate `j`, subject labels in `1..=m[j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgroupPartition {
    pub labels: Vec<Vec<usize>>,
    pub m: Vec<usize>,
}

impl SubgroupPartition {
    /// Builds a canonical partition from arbitrary label vectors, one per covariate.
    pub fn from_labels(labels: Vec<Vec<usize>>) -> Self {
        let mut m = Vec::with_capacity(labels.len());
        let labels = labels
            .iter()
            .map(|l| {
                let (c, k) = first_appearance_labels(l);
                m.push(k);
                c
            })
            .collect();
        Self { labels, m }
    }

    /// All subjects in one group on each of `p` covariates.
    pub fn single_group(p: usize, n: usize) -> Self {
        Self {
            labels: vec![vec![1; n]; p],
            m: vec![1; p],
        }
    }

    pub fn n_subjects(&self) -> usize {
        self.labels.first().map_or(0, Vec::len)
    }

    /// Subject indices of group `k` (1-based) on covariate `j`.
    pub fn members(&self, j: usize, k: usize) -> Vec<usize> {
        self.labels[j]
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == k)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_canonical(&self) -> bool {
        self.labels
            .iter()
            .zip(&self.m)
            .all(|(l, &m)| {
                let (c, k) = first_appearance_labels(l);
                c == *l && k == m
            })
    }
}

/// Relabels every covariate's groups by order of first appearance.
///
/// Labels may be any positive integers in `1..=m[j]`; a label in that range
/// that no subject carries is an [`DataError::EmptyGroup`].
pub fn canonicalize(partition: &SubgroupPartition) -> Result<SubgroupPartition, DataError> {
    if partition.labels.len() != partition.m.len() {
        return Err(DataError::PartitionShape {
            expected: partition.m.len(),
            found: partition.labels.len(),
        });
    }
    let mut labels = Vec::with_capacity(partition.labels.len());
    for (j, (l, &m)) in partition.labels.iter().zip(&partition.m).enumerate() {
        let mut seen = vec![false; m];
        for &label in l {
            if label == 0 || label > m {
                return Err(DataError::LabelOutOfRange {
                    covariate: j,
                    label,
                    m,
                });
            }
            seen[label - 1] = true;
        }
        if let Some(unused) = seen.iter().position(|s| !s) {
            return Err(DataError::EmptyGroup {
                covariate: j,
                label: unused + 1,
            });
        }
        labels.push(first_appearance_labels(l).0);
    }
    Ok(SubgroupPartition {
        labels,
        m: partition.m.clone(),
    })
}
