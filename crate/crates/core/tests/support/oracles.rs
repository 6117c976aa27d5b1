//! Slow, independent reference implementations used to check the library.
//!
//! Nothing here shares numerics with the crate under test (only knot vectors
//! and dense covariance matrices are taken from it): B-splines come from
//! the textbook recursion, inverses from a dense LU, least squares from a
//! whitened QR/SVD solve, and k-means optima from enumerating every set
//! partition.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// `B_{i,d}(x)` by the Cox–de Boor recursion, with the right end of the
/// knot vector treated as belonging to the last non-empty span.
pub fn cox_de_boor(knots: &[f64], i: usize, d: usize, x: f64) -> f64 {
    if d == 0 {
        let last = *knots.last().unwrap();
        let (lo, hi) = (knots[i], knots[i + 1]);
        if lo <= x && x < hi {
            return 1.0;
        }
        // x at the right boundary: the last span of positive length wins
        if x == last && hi == last && lo < hi {
            return 1.0;
        }
        return 0.0;
    }
    let mut v = 0.0;
    let a = knots[i + d] - knots[i];
    if a > 0.0 {
        v += (x - knots[i]) / a * cox_de_boor(knots, i, d - 1, x);
    }
    let b = knots[i + d + 1] - knots[i + 1];
    if b > 0.0 {
        v += (knots[i + d + 1] - x) / b * cox_de_boor(knots, i + 1, d - 1, x);
    }
    v
}

/// All basis values at `x` for a knot vector of degree `d`.
pub fn cox_de_boor_all(knots: &[f64], d: usize, x: f64) -> Vec<f64> {
    let k = knots.len() - d - 1;
    (0..k).map(|i| cox_de_boor(knots, i, d, x)).collect()
}

pub fn dense_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().lu().try_inverse().expect("invertible")
}

/// `(D, W, r)` triples solved as one stacked weighted least-squares problem:
/// whiten each block by the Cholesky factor of `W`, stack, and solve by SVD.
/// A ridge is appended as `sqrt(ridge) I` pseudo-observations.
pub fn stacked_gls(blocks: &[(DMatrix<f64>, DMatrix<f64>, Vec<f64>)], ridge: f64) -> Vec<f64> {
    let cols = blocks[0].0.ncols();
    let rows: usize = blocks.iter().map(|b| b.0.nrows()).sum::<usize>() + if ridge > 0.0 { cols } else { 0 };
    let mut a = DMatrix::zeros(rows, cols);
    let mut y = DVector::zeros(rows);
    let mut at = 0;
    for (d, w, r) in blocks {
        let l = w.clone().cholesky().expect("weight is SPD").l();
        let lt = l.transpose();
        let wd = &lt * d;
        let wr = &lt * DVector::from_column_slice(r);
        a.rows_mut(at, d.nrows()).copy_from(&wd);
        y.rows_mut(at, d.nrows()).copy_from(&wr);
        at += d.nrows();
    }
    if ridge > 0.0 {
        for c in 0..cols {
            a[(at + c, c)] = ridge.sqrt();
        }
    }
    let svd = a.svd(true, true);
    svd.solve(&y, 1e-14).expect("svd solve").iter().copied().collect()
}

/// Global minimum of the k-means objective over all partitions of `points`
/// into at most `k` non-empty clusters, by restricted-growth enumeration.
pub fn exhaustive_kmeans(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    fn rec(i: usize, used: usize, k: usize, labels: &mut Vec<usize>, points: &[Vec<f64>], best: &mut f64) {
        if i == labels.len() {
            *best = best.min(objective(points, labels, used));
            return;
        }
        for l in 0..(used + 1).min(k) {
            labels[i] = l;
            rec(i + 1, used.max(l + 1), k, labels, points, best);
        }
    }
    rec(0, 0, k, &mut labels, points, &mut best);
    best
}

/// Within-cluster sum of squares with centers at cluster means.
pub fn objective(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| {
            p.iter()
                .zip(&sums[l])
                .map(|(v, s)| {
                    let c = s / counts[l] as f64;
                    (v - c) * (v - c)
                })
                .sum::<f64>()
        })
        .sum()
}

/// Rand index by direct pair enumeration.
pub fn pair_rand_index(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let mut agree = 0usize;
    let mut total = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            total += 1;
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / total as f64
}

/// Best label matching by trying every injective map of estimated labels to
/// true labels (small label counts only).
pub fn brute_accuracy(est: &[usize], truth: &[usize]) -> f64 {
    let mut el: Vec<usize> = est.to_vec();
    el.sort_unstable();
    el.dedup();
    let mut tl: Vec<usize> = truth.to_vec();
    tl.sort_unstable();
    tl.dedup();
    let mut best = 0usize;
    let mut assign: Vec<Option<usize>> = vec![None; el.len()];
    let mut used = vec![false; tl.len()];
    fn rec(
        i: usize,
        el: &[usize],
        tl: &[usize],
        assign: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
        est: &[usize],
        truth: &[usize],
        best: &mut usize,
    ) {
        if i == el.len() {
            let hits = est
                .iter()
                .zip(truth)
                .filter(|(e, t)| {
                    let idx = el.iter().position(|v| v == *e).unwrap();
                    assign[idx].is_some_and(|a| tl[a] == **t)
                })
                .count();
            *best = (*best).max(hits);
            return;
        }
        assign[i] = None;
        rec(i + 1, el, tl, assign, used, est, truth, best);
        for t in 0..tl.len() {
            if !used[t] {
                used[t] = true;
                assign[i] = Some(t);
                rec(i + 1, el, tl, assign, used, est, truth, best);
                used[t] = false;
            }
        }
        assign[i] = None;
    }
    rec(0, &el, &tl, &mut assign, &mut used, est, truth, &mut best);
    best as f64 / est.len() as f64
}

/// Pooled baseline estimate through the partitioned inverse
/// `H^11 (sum S'V^-1 Y - H_12 H_22^-1 sum X'V^-1 Y)`, with each spline block
/// made identifiable by dropping its last column; the intercept is then
/// shifted by every component's pooled mean.
pub fn partitioned_beta(
    data: &subgam_core::LongitudinalDataset,
    bases: &[subgam_core::SplineBasis],
    wc: &subgam_core::WorkingCovariance,
) -> Vec<f64> {
    let p = data.p();
    let k = bases[0].dim();
    let xcols = p * (k - 1);
    let scols = 1 + data.r();
    let mut h11 = DMatrix::zeros(scols, scols);
    let mut h12 = DMatrix::zeros(scols, xcols);
    let mut h22 = DMatrix::zeros(xcols, xcols);
    let mut sy = DVector::zeros(scols);
    let mut xy = DVector::zeros(xcols);
    let mut col_means = vec![vec![0.0; k]; p];
    let mut n_obs = 0.0;
    for s in data.subjects() {
        let n = s.n_obs();
        let sm = DMatrix::from_fn(n, scols, |_, c| if c == 0 { 1.0 } else { s.s[c - 1] });
        let mut xm = DMatrix::zeros(n, xcols);
        for j in 0..p {
            for t in 0..n {
                let row = cox_de_boor_all(bases[j].knots(), 3, s.x[j][t]);
                for l in 0..k {
                    col_means[j][l] += row[l];
                    if l < k - 1 {
                        xm[(t, j * (k - 1) + l)] = row[l];
                    }
                }
            }
        }
        n_obs += n as f64;
        let vinv = dense_inverse(&wc.covariance_matrix(n).unwrap());
        let y = DVector::from_column_slice(&s.y);
        h11 += sm.transpose() * &vinv * &sm;
        h12 += sm.transpose() * &vinv * &xm;
        h22 += xm.transpose() * &vinv * &xm;
        sy += sm.transpose() * &vinv * &y;
        xy += xm.transpose() * &vinv * &y;
    }
    let h22_inv = dense_inverse(&h22);
    let schur = &h11 - &h12 * &h22_inv * h12.transpose();
    let beta = dense_inverse(&schur) * (&sy - &h12 * &h22_inv * &xy);
    let gamma = &h22_inv * (&xy - h12.transpose() * &beta);
    let mut out: Vec<f64> = beta.iter().copied().collect();
    for j in 0..p {
        let mean: f64 = (0..k - 1)
            .map(|l| gamma[j * (k - 1) + l] * col_means[j][l] / n_obs)
            .sum();
        out[0] += mean;
    }
    out
}

/// Simple deterministic generator for oracle loops that must not depend on
/// the library's own RNG plumbing.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal via Box–Muller.
    pub fn normal(&mut self) -> f64 {
        let u = self.unit().max(1e-300);
        let v = self.unit();
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }
}
