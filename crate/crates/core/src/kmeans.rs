//! Lloyd k-means with k-means++ seeding and best-of-restarts selection.
//!
//! After Lloyd's iterations settle, single-point Hartigan moves are applied
//! until no transfer lowers the within-cluster sum of squares; this removes
//! most of the poor local optima Lloyd alone stops at on tiny inputs.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KMeansError {
    #[error("k = {k} is invalid for {n} points")]
    InvalidK { k: usize, n: usize },
    #[error("point {index} has dimension {found}, expected {expected}")]
    RaggedPoints {
        index: usize,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            seed: 0,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Cluster index in `0..k` for every point.
    pub labels: Vec<usize>,
    /// `k` centers, each the mean of its assigned points.
    pub centers: Vec<Vec<f64>>,
    /// Within-cluster sum of squared Euclidean distances.
    pub objective: f64,
    pub restarts_used: usize,
    /// Objective after each Lloyd update of the winning restart, followed by
    /// the value after Hartigan refinement.
    pub trace: Vec<f64>,
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest center; ties go to the lowest index.
pub fn nearest(point: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(point, center);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

pub fn within_ss(points: &[Vec<f64>], labels: &[usize], centers: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centers[l]))
        .sum()
}

/// Clusters `points` into `k` groups, keeping the best of `restarts` seeded runs.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    restarts: usize,
    max_iter: usize,
) -> Result<KMeansResult, KMeansError> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(KMeansError::InvalidK { k, n });
    }
    let dim = points[0].len();
    if let Some((index, p)) = points.iter().enumerate().find(|(_, p)| p.len() != dim) {
        return Err(KMeansError::RaggedPoints {
            index,
            expected: dim,
            found: p.len(),
        });
    }
    let restarts = restarts.max(1);
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let run = single_run(points, k, max_iter, &mut rng);
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one restart");
    best.restarts_used = restarts;
    Ok(best)
}

fn plus_plus_seeds(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut idx = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

fn means(points: &[Vec<f64>], labels: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            let inv = 1.0 / c as f64;
            s.iter_mut().for_each(|v| *v *= inv);
        }
    }
    (sums, counts)
}

/// Moves the farthest point of a multi-point cluster into each empty cluster.
fn repair_empty(points: &[Vec<f64>], labels: &mut [usize], centers: &mut [Vec<f64>]) {
    let k = centers.len();
    loop {
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let far = (0..points.len())
            .filter(|&i| counts[labels[i]] > 1)
            .fold((usize::MAX, -1.0), |(bi, bd), i| {
                let d = sq_dist(&points[i], &centers[labels[i]]);
                if d > bd {
                    (i, d)
                } else {
                    (bi, bd)
                }
            })
            .0;
        labels[far] = empty;
        centers[empty] = points[far].clone();
    }
}

fn single_run(points: &[Vec<f64>], k: usize, max_iter: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
    let mut centers = plus_plus_seeds(points, k, rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    let mut trace = Vec::new();
    for iter in 0..max_iter.max(1) {
        if iter > 0 {
            let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
            if next == labels {
                break;
            }
            labels = next;
        }
        repair_empty(points, &mut labels, &mut centers);
        centers = means(points, &labels, k).0;
        trace.push(within_ss(points, &labels, &centers));
    }
    hartigan(points, &mut labels, k);
    centers = means(points, &labels, k).0;
    let objective = within_ss(points, &labels, &centers);
    trace.push(objective);
    KMeansResult {
        labels,
        centers,
        objective,
        restarts_used: 1,
        trace,
    }
}

/// Single-point transfers that strictly lower the objective.
fn hartigan(points: &[Vec<f64>], labels: &mut [usize], k: usize) {
    let (mut centers, mut counts) = means(points, labels, k);
    let mut moved = true;
    let mut passes = 0;
    while moved && passes < 100 {
        moved = false;
        passes += 1;
        for (i, p) in points.iter().enumerate() {
            let a = labels[i];
            if counts[a] <= 1 {
                continue;
            }
            let na = counts[a] as f64;
            let cost_out = na / (na - 1.0) * sq_dist(p, &centers[a]);
            let mut best = a;
            let mut best_in = cost_out;
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let cost_in = nb / (nb + 1.0) * sq_dist(p, &centers[b]);
                if cost_in < best_in - 1e-12 * (1.0 + cost_out) {
                    best_in = cost_in;
                    best = b;
                }
            }
            if best != a {
                let nb = counts[best] as f64;
                for d in 0..p.len() {
                    centers[a][d] = (centers[a][d] * na - p[d]) / (na - 1.0);
                    centers[best][d] = (centers[best][d] * nb + p[d]) / (nb + 1.0);
                }
                counts[a] -= 1;
                counts[best] += 1;
                labels[i] = best;
                moved = true;
            }
        }
    }
}
