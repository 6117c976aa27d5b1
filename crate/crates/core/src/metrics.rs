//! Partition agreement and estimation error measures.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("label vectors have lengths {a} and {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("need at least {needed} subjects, got {found}")]
    TooFewSubjects { needed: usize, found: usize },
    #[error("subject {subject}: {fitted} fitted values for {observed} observations")]
    ShapeMismatch {
        subject: usize,
        fitted: usize,
        observed: usize,
    },
    #[error("method MSE is zero")]
    DivisionByZero,
    #[error("partition lists cover {a} and {b} covariates")]
    CovariateMismatch { a: usize, b: usize },
}

/// Dense contingency table of two labelings.
struct Contingency {
    table: Vec<Vec<usize>>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    n: usize,
}

fn dense(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

fn check_len(a: &[usize], b: &[usize]) -> Result<(), MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    Ok(())
}

impl Contingency {
    fn new(a: &[usize], b: &[usize]) -> Result<Self, MetricsError> {
        check_len(a, b)?;
        let (da, ka) = dense(a);
        let (db, kb) = dense(b);
        let mut table = vec![vec![0usize; kb]; ka];
        for (x, y) in da.iter().zip(&db) {
            table[*x][*y] += 1;
        }
        let rows = table.iter().map(|r| r.iter().sum()).collect();
        let cols = (0..kb).map(|c| table.iter().map(|r| r[c]).sum()).collect();
        Ok(Self {
            table,
            rows,
            cols,
            n: a.len(),
        })
    }
}

/// Maximum-weight assignment of rows to columns of a rectangular matrix;
/// returns, for each row, its column (or `None` if it got a padding column).
pub fn max_assignment(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let size = rows.max(cols);
    if size == 0 {
        return Vec::new();
    }
    let max = weights.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    // Hungarian method (shortest augmenting path) on cost = max - weight, 1-based.
    let cost = |i: usize, j: usize| -> f64 {
        if i <= rows && j <= cols {
            max - weights[i - 1][j - 1]
        } else {
            max
        }
    };
    let mut u = vec![0.0; size + 1];
    let mut v = vec![0.0; size + 1];
    let mut matched = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    for i in 1..=size {
        matched[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=size {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=size {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for j in 1..=size {
        let i = matched[j];
        if i >= 1 && i <= rows && j <= cols {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

/// Optimal estimated-to-true label map, as dense indices.
fn best_matching(c: &Contingency) -> Vec<Option<usize>> {
    let w: Vec<Vec<f64>> = c
        .table
        .iter()
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect();
    max_assignment(&w)
}

/// Fraction of subjects whose estimated group matches the truth under the
/// best one-to-one relabeling of the estimated groups.
pub fn accuracy(estimated: &[usize], truth: &[usize]) -> Result<f64, MetricsError> {
    let c = Contingency::new(estimated, truth)?;
    if c.n == 0 {
        return Err(MetricsError::TooFewSubjects { needed: 1, found: 0 });
    }
    let matched: usize = best_matching(&c)
        .iter()
        .enumerate()
        .filter_map(|(r, col)| col.map(|col| c.table[r][col]))
        .sum();
    Ok(matched as f64 / c.n as f64)
}

/// Fraction of subjects classified correctly on every covariate at once,
/// each covariate using its own optimal relabeling.
pub fn total_accuracy(estimated: &[Vec<usize>], truth: &[Vec<usize>]) -> Result<f64, MetricsError> {
    if estimated.len() != truth.len() {
        return Err(MetricsError::CovariateMismatch {
            a: estimated.len(),
            b: truth.len(),
        });
    }
    let n = truth.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(MetricsError::TooFewSubjects { needed: 1, found: 0 });
    }
    let mut correct = vec![true; n];
    for (e, t) in estimated.iter().zip(truth) {
        let c = Contingency::new(e, t)?;
        if e.len() != n {
            return Err(MetricsError::LengthMismatch { a: e.len(), b: n });
        }
        let map = best_matching(&c);
        let (de, _) = dense(e);
        let (dt, _) = dense(t);
        for i in 0..n {
            if map[de[i]] != Some(dt[i]) {
                correct[i] = false;
            }
        }
    }
    Ok(correct.iter().filter(|&&c| c).count() as f64 / n as f64)
}

/// Share of subject pairs on which the two partitions agree (both together
/// or both apart).
pub fn rand_index(a: &[usize], b: &[usize]) -> Result<f64, MetricsError> {
    check_len(a, b)?;
    let n = a.len();
    if n < 2 {
        return Err(MetricsError::TooFewSubjects { needed: 2, found: n });
    }
    let c = Contingency::new(a, b)?;
    let pairs = |k: usize| (k * k.saturating_sub(1) / 2) as f64;
    let together_both: f64 = c.table.iter().flatten().map(|&v| pairs(v)).sum();
    let together_a: f64 = c.rows.iter().map(|&v| pairs(v)).sum();
    let together_b: f64 = c.cols.iter().map(|&v| pairs(v)).sum();
    let total = pairs(n);
    let apart_both = total - together_a - together_b + together_both;
    Ok((together_both + apart_both) / total)
}

/// `2 I(A, B) / (H(A) + H(B))` with natural logarithms. Two single-group
/// partitions score 1; exactly one single-group partition scores 0.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64, MetricsError> {
    let c = Contingency::new(a, b)?;
    if c.n == 0 {
        return Err(MetricsError::TooFewSubjects { needed: 1, found: 0 });
    }
    let n = c.n as f64;
    let entropy = |counts: &[usize]| -> f64 {
        counts
            .iter()
            .filter(|&&k| k > 0)
            .map(|&k| k as f64 / n * (n / k as f64).ln())
            .sum()
    };
    let ha = entropy(&c.rows);
    let hb = entropy(&c.cols);
    if ha + hb == 0.0 {
        return Ok(1.0);
    }
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (r, row) in c.table.iter().enumerate() {
        for (col, &k) in row.iter().enumerate() {
            if k > 0 {
                let k = k as f64;
                mi += k / n * (n * k / (c.rows[r] as f64 * c.cols[col] as f64)).ln();
            }
        }
    }
    Ok((2.0 * mi / (ha + hb)).clamp(0.0, 1.0))
}

/// Subject-averaged mean squared error: `1/n sum_i 1/n_i sum_t (yhat - y)^2`.
pub fn mse(fitted: &[Vec<f64>], observed: &[Vec<f64>]) -> Result<f64, MetricsError> {
    if fitted.len() != observed.len() {
        return Err(MetricsError::LengthMismatch {
            a: fitted.len(),
            b: observed.len(),
        });
    }
    if fitted.is_empty() {
        return Err(MetricsError::TooFewSubjects { needed: 1, found: 0 });
    }
    let mut total = 0.0;
    for (i, (f, o)) in fitted.iter().zip(observed).enumerate() {
        if f.len() != o.len() || o.is_empty() {
            return Err(MetricsError::ShapeMismatch {
                subject: i,
                fitted: f.len(),
                observed: o.len(),
            });
        }
        total += f.iter().zip(o).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / o.len() as f64;
    }
    Ok(total / fitted.len() as f64)
}

pub fn mse_ratio(oracle_mse: f64, method_mse: f64) -> Result<f64, MetricsError> {
    if method_mse == 0.0 {
        return Err(MetricsError::DivisionByZero);
    }
    Ok(oracle_mse / method_mse)
}
