use alloc::vec::Vec;

use crate::bspline::SplineBasis;
use crate::data::{LongitudinalDataset, SubgroupPartition};

/// Output of a full subgroup fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    /// Intercept first when `intercept` is set, then one entry per baseline covariate.
    pub beta: Vec<f64>,
    pub intercept: bool,
    /// `gamma[j][k]`: coefficients of group `k + 1` on covariate `j`.
    pub gamma: Vec<Vec<Vec<f64>>>,
    /// Memberships of every subject, excluded ones included.
    pub partition: SubgroupPartition,
    /// Per covariate, `(candidate m, BIC)` pairs; empty when `m` was fixed.
    pub bic_trace: Vec<Vec<(usize, f64)>>,
    /// Backfitting sweeps, including the fixed-partition ones that settle
    /// the coefficients after memberships converge.
    pub iterations: usize,
    pub converged: bool,
    pub bases: Vec<SplineBasis>,
    /// Dataset indices of subjects that were not used for fitting.
    pub excluded: Vec<usize>,
}

impl FittedModel {
    pub fn p(&self) -> usize {
        self.gamma.len()
    }

    /// Baseline part `S_i' beta` (plus intercept) of subject `i`.
    pub fn baseline_value(&self, data: &LongitudinalDataset, i: usize) -> f64 {
        let s = &data.subject(i).s;
        let lead = usize::from(self.intercept);
        let mut v = if self.intercept { self.beta[0] } else { 0.0 };
        v += s.iter().zip(&self.beta[lead..]).map(|(a, b)| a * b).sum::<f64>();
        v
    }

    /// Fitted component `j` of subject `i` at its own visits.
    pub fn component_values(&self, data: &LongitudinalDataset, i: usize, j: usize) -> Vec<f64> {
        let g = self.partition.labels[j][i] - 1;
        self.bases[j]
            .eval_component(&self.gamma[j][g], &data.subject(i).x[j])
            .expect("gamma length matches basis")
    }

    /// `yhat_it` for every subject, without the random effect.
    pub fn predict(&self, data: &LongitudinalDataset) -> Vec<Vec<f64>> {
        (0..data.n())
            .map(|i| {
                let base = self.baseline_value(data, i);
                let mut y = alloc::vec![base; data.subject(i).n_obs()];
                for j in 0..self.p() {
                    for (v, c) in y.iter_mut().zip(self.component_values(data, i, j)) {
                        *v += c;
                    }
                }
                y
            })
            .collect()
    }

    /// `fhat` of group `k` (0-based) on covariate `j` over `points` grid values.
    pub fn component_grid(&self, j: usize, k: usize, points: usize) -> (Vec<f64>, Vec<f64>) {
        let grid = self.bases[j].grid(points);
        let f = self.bases[j]
            .eval_component(&self.gamma[j][k], &grid)
            .expect("gamma length matches basis");
        (grid, f)
    }
}
