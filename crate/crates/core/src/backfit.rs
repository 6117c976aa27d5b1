//! Backfitting with k-means subgroup pursuit.
//!
//! One sweep visits every smooth covariate `j` in order:
//!
//! 1. partial residuals `W_ij = Y_i - S_i beta - sum_{k != j} fhat_k`, using
//!    each subject's current group on the other covariates;
//! 2. a spline GLS fit of `W_ij` for every subject on its own;
//! 3. k-means on those coefficient vectors with `m_j` clusters, relabeled
//!    canonically;
//! 4. a pooled GLS refit of each group's curve, then recentering of the
//!    covariate to pooled mean zero with the constant moved to the intercept.
//!
//! Baseline coefficients are refit after each sweep unless `freeze_beta` is
//! set. Sweeps stop once a whole sweep leaves every covariate's partition
//! unchanged; the coefficients are then settled under that partition.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DVector;

use crate::config::FitConfig;
use crate::data::{first_appearance_labels, LongitudinalDataset, SubgroupPartition};
use crate::design::PanelDesign;
use crate::error::FitError;
use crate::gls::NormalEquations;
use crate::initial_fit::pooled_fit_with_design;
use crate::kmeans::{kmeans, nearest};
use crate::model::FittedModel;

/// Ridge for membership fits of subjects too short for an exact spline solve.
pub const EXCLUDED_RIDGE: f64 = 1e-6;

/// Coefficient change below which fixed-partition sweeps stop.
const ORACLE_TOL: f64 = 1e-10;

/// Current estimates during backfitting. Labels index usable subjects in
/// the order of [`PanelDesign::usable`].
#[derive(Debug, Clone, PartialEq)]
pub struct BackfitState {
    pub beta: Vec<f64>,
    pub gamma: Vec<Vec<Vec<f64>>>,
    pub partition: SubgroupPartition,
    /// Last k-means centers per covariate, in canonical group order.
    pub centers: Vec<Vec<Vec<f64>>>,
    pub sweep: usize,
}

pub struct Backfitter<'a> {
    data: &'a LongitudinalDataset,
    design: PanelDesign,
    config: FitConfig,
}

/// Decorrelates per-covariate k-means seeds.
pub fn split_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl<'a> Backfitter<'a> {
    pub fn new(data: &'a LongitudinalDataset, config: &FitConfig) -> Result<Self, FitError> {
        let design = PanelDesign::new(data, config)?;
        Ok(Self {
            data,
            design,
            config: config.clone(),
        })
    }

    pub fn data(&self) -> &LongitudinalDataset {
        self.data
    }

    pub fn design(&self) -> &PanelDesign {
        &self.design
    }

    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    pub fn n_usable(&self) -> usize {
        self.design.usable.len()
    }

    /// Pooled fit, every covariate in a single group.
    pub fn initial_state(&self) -> Result<BackfitState, FitError> {
        let init = pooled_fit_with_design(self.data, &self.design, self.config.ridge)?;
        let p = self.design.p();
        Ok(BackfitState {
            beta: init.beta,
            gamma: init.gamma0.into_iter().map(|g| vec![g]).collect(),
            partition: SubgroupPartition::single_group(p, self.n_usable()),
            centers: vec![Vec::new(); p],
            sweep: 0,
        })
    }

    /// Component `j` of usable subject `u` under its current group.
    pub fn component_values(&self, state: &BackfitState, j: usize, u: usize) -> DVector<f64> {
        let i = self.design.usable[u];
        let g = state.partition.labels[j][u] - 1;
        &self.design.spline[i][j] * DVector::from_column_slice(&state.gamma[j][g])
    }

    fn baseline_values(&self, beta: &[f64], i: usize) -> DVector<f64> {
        &self.design.baseline[i] * DVector::from_column_slice(beta)
    }

    /// `W_ij` for every usable subject.
    pub fn partial_residuals(&self, state: &BackfitState, j: usize) -> Vec<Vec<f64>> {
        (0..self.n_usable())
            .map(|u| {
                let i = self.design.usable[u];
                let mut w = DVector::from_column_slice(&self.data.subject(i).y);
                w -= self.baseline_values(&state.beta, i);
                for k in (0..self.design.p()).filter(|&k| k != j) {
                    w -= self.component_values(state, k, u);
                }
                w.iter().copied().collect()
            })
            .collect()
    }

    /// Spline coefficients of `W_ij` fitted subject by subject.
    pub fn subject_coefficients(&self, j: usize, w: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, FitError> {
        self.design
            .usable
            .iter()
            .zip(w)
            .map(|(&i, wi)| {
                let mut ne = NormalEquations::new(self.design.k_basis());
                let subject_err = |source| FitError::SubjectSolve {
                    subject: self.data.subject(i).id.clone(),
                    covariate: j,
                    source,
                };
                ne.add_block(&self.design.spline[i][j], self.design.weight(self.data, i), wi)
                    .map_err(subject_err)?;
                ne.solve_with_retry(self.config.subject_ridge)
                    .map(|(c, _)| c)
                    .map_err(subject_err)
            })
            .collect()
    }

    /// Points handed to k-means: the per-subject coefficients, with each
    /// curve's pooled-design mean removed when `shape_features` is set.
    pub fn cluster_features(&self, j: usize, mut coefs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        if self.config.shape_features {
            for c in &mut coefs {
                self.remove_level(j, c);
            }
        }
        coefs
    }

    /// B-spline rows sum to one, so subtracting `c_j' gamma` from every
    /// coefficient lowers the curve by its pooled mean.
    fn remove_level(&self, j: usize, gamma: &mut [f64]) {
        let level: f64 = gamma.iter().zip(&self.design.centering[j]).map(|(g, c)| g * c).sum();
        gamma.iter_mut().for_each(|g| *g -= level);
    }

    /// GLS fit of one curve per group from the subjects' partial residuals.
    ///
    /// `labels` are 1-based over usable subjects. The returned curves are not
    /// recentered; see [`Backfitter::center_covariate`].
    pub fn group_refit(
        &self,
        j: usize,
        w: &[Vec<f64>],
        labels: &[usize],
        m: usize,
    ) -> Result<Vec<Vec<f64>>, FitError> {
        let k = self.design.k_basis();
        let mut systems = vec![NormalEquations::new(k); m];
        for (u, (&i, wi)) in self.design.usable.iter().zip(w).enumerate() {
            let g = labels[u] - 1;
            systems[g]
                .add_block(&self.design.spline[i][j], self.design.weight(self.data, i), wi)
                .map_err(|source| FitError::GroupSolve {
                    covariate: j,
                    group: g + 1,
                    source,
                })?;
        }
        systems
            .iter()
            .enumerate()
            .map(|(g, ne)| {
                ne.solve_with_retry(self.config.ridge)
                    .map(|(c, _)| c)
                    .map_err(|source| FitError::GroupSolve {
                        covariate: j,
                        group: g + 1,
                        source,
                    })
            })
            .collect()
    }

    /// Pooled empirical mean of fitted component `j` over usable observations.
    pub fn component_mean(&self, state: &BackfitState, j: usize) -> f64 {
        let total: f64 = (0..self.n_usable())
            .map(|u| self.component_values(state, j, u).sum())
            .sum();
        total / self.design.n_obs as f64
    }

    /// Shifts every group curve of covariate `j` by one constant so the
    /// pooled mean is zero, moving that constant into the intercept.
    pub fn center_covariate(&self, state: &mut BackfitState, j: usize) {
        if !self.design.intercept {
            return;
        }
        let mean = self.component_mean(state, j);
        for g in &mut state.gamma[j] {
            g.iter_mut().for_each(|v| *v -= mean);
        }
        state.beta[0] += mean;
    }

    /// GLS of `Y - sum_j fhat_j` on the baseline design.
    pub fn refresh_beta(&self, state: &mut BackfitState) -> Result<(), FitError> {
        let cols = self.design.baseline_cols();
        if cols == 0 {
            return Ok(());
        }
        let mut ne = NormalEquations::new(cols);
        for (u, &i) in self.design.usable.iter().enumerate() {
            let mut r = DVector::from_column_slice(&self.data.subject(i).y);
            for j in 0..self.design.p() {
                r -= self.component_values(state, j, u);
            }
            ne.add_block(&self.design.baseline[i], self.design.weight(self.data, i), r.as_slice())
                .map_err(FitError::BaselineSolve)?;
        }
        let (beta, _) = ne
            .solve_with_retry(self.config.ridge)
            .map_err(FitError::BaselineSolve)?;
        state.beta = beta;
        Ok(())
    }

    /// One backfitting step on covariate `j` with `m` groups.
    pub fn update_covariate(&self, state: &mut BackfitState, j: usize, m: usize) -> Result<(), FitError> {
        let w = self.partial_residuals(state, j);
        let (labels, centers) = if m == 1 {
            (vec![1; self.n_usable()], Vec::new())
        } else {
            let features = self.cluster_features(j, self.subject_coefficients(j, &w)?);
            let km = kmeans(
                &features,
                m,
                split_seed(self.config.kmeans.seed, j as u64),
                self.config.kmeans.restarts,
                self.config.kmeans.max_iter,
            )?;
            let (labels, _) = first_appearance_labels(&km.labels);
            let centers = group_means(&features, &labels, m);
            (labels, centers)
        };
        state.gamma[j] = self.group_refit(j, &w, &labels, m)?;
        state.partition.labels[j] = labels;
        state.partition.m[j] = m;
        state.centers[j] = centers;
        self.center_covariate(state, j);
        Ok(())
    }

    fn check_m(&self, m: &[usize]) -> Result<(), FitError> {
        if m.len() != self.design.p() {
            return Err(FitError::GroupCountShape {
                expected: self.design.p(),
                found: m.len(),
            });
        }
        if let Some((j, &mj)) = m
            .iter()
            .enumerate()
            .find(|(_, &mj)| mj == 0 || mj > self.n_usable())
        {
            return Err(FitError::TooManyGroups {
                covariate: j,
                m: mj,
                n: self.n_usable(),
            });
        }
        Ok(())
    }

    /// Iterates sweeps with `m[j]` groups per covariate until memberships stop
    /// changing or `max_sweeps` is reached.
    pub fn run_state(&self, m: &[usize]) -> Result<(BackfitState, bool), FitError> {
        self.check_m(m)?;
        let mut state = self.initial_state()?;
        let mut previous: Option<SubgroupPartition> = None;
        let mut converged = false;
        for sweep in 1..=self.config.max_sweeps.max(1) {
            for (j, &mj) in m.iter().enumerate() {
                self.update_covariate(&mut state, j, mj)?;
            }
            if !self.config.freeze_beta {
                self.refresh_beta(&mut state)?;
            }
            state.sweep = sweep;
            if previous.as_ref() == Some(&state.partition) {
                converged = true;
                break;
            }
            previous = Some(state.partition.clone());
        }
        if !converged {
            log::warn!(
                "memberships did not converge within {} sweeps",
                self.config.max_sweeps
            );
        }
        Ok((state, converged))
    }

    /// Runs to membership convergence, then settles the coefficients under
    /// the final partition so the result is the group GLS fit for it.
    pub fn run(&self, m: &[usize]) -> Result<FittedModel, FitError> {
        let (mut state, converged) = self.run_state(m)?;
        let partition = state.partition.clone();
        self.settle(&mut state, &partition)?;
        Ok(self.finish(state, converged))
    }

    /// Backfitting sweeps with memberships held at `partition` (usable
    /// subjects, canonical) until no coefficient moves by more than
    /// [`ORACLE_TOL`]. Returns whether that happened within `max_sweeps`;
    /// every sweep counts toward `state.sweep`.
    pub fn settle(&self, state: &mut BackfitState, partition: &SubgroupPartition) -> Result<bool, FitError> {
        for _ in 0..self.config.max_sweeps.max(1) {
            let before = (state.beta.clone(), state.gamma.clone());
            for j in 0..self.design.p() {
                let w = self.partial_residuals(state, j);
                let labels = &partition.labels[j];
                let m = partition.m[j];
                state.gamma[j] = self.group_refit(j, &w, labels, m)?;
                state.partition.labels[j] = labels.clone();
                state.partition.m[j] = m;
                self.center_covariate(state, j);
            }
            if !self.config.freeze_beta {
                self.refresh_beta(state)?;
            }
            state.sweep += 1;
            if max_change(&before, &(state.beta.clone(), state.gamma.clone())) < ORACLE_TOL {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Backfitting with memberships held at `partition` (dataset order, all
    /// subjects): the oracle estimator. Stops when coefficients settle.
    pub fn run_with_partition(&self, partition: &SubgroupPartition) -> Result<FittedModel, FitError> {
        let p = self.design.p();
        if partition.labels.len() != p {
            return Err(FitError::GroupCountShape {
                expected: p,
                found: partition.labels.len(),
            });
        }
        let usable_part = SubgroupPartition::from_labels(
            partition
                .labels
                .iter()
                .map(|l| self.design.usable.iter().map(|&i| l[i]).collect())
                .collect(),
        );
        let mut state = self.initial_state()?;
        let converged = self.settle(&mut state, &usable_part)?;
        // Centers are the group means of per-subject fits so excluded subjects
        // can still be assigned.
        for j in 0..p {
            let m = usable_part.m[j];
            if m > 1 {
                let w = self.partial_residuals(&state, j);
                let coefs = self.cluster_features(j, self.subject_coefficients(j, &w)?);
                state.centers[j] = group_means(&coefs, &usable_part.labels[j], m);
            }
        }
        Ok(self.finish(state, converged))
    }

    /// Assigns excluded subjects by nearest center and canonicalizes labels
    /// over the full subject list.
    fn finish(&self, state: BackfitState, converged: bool) -> FittedModel {
        let n = self.data.n();
        let p = self.design.p();
        let mut labels = vec![vec![0usize; n]; p];
        for (u, &i) in self.design.usable.iter().enumerate() {
            for j in 0..p {
                labels[j][i] = state.partition.labels[j][u];
            }
        }
        for &i in &self.design.excluded {
            let assigned = self.assign_excluded(&state, i);
            for j in 0..p {
                labels[j][i] = assigned[j];
            }
        }
        let mut gamma = state.gamma;
        let mut m = Vec::with_capacity(p);
        for j in 0..p {
            let (canon, k) = first_appearance_labels(&labels[j]);
            let mut reordered = vec![Vec::new(); k];
            for (old, new) in labels[j].iter().zip(&canon) {
                if reordered[new - 1].is_empty() {
                    reordered[new - 1] = gamma[j][old - 1].clone();
                }
            }
            gamma[j] = reordered;
            labels[j] = canon;
            m.push(k);
        }
        FittedModel {
            beta: state.beta,
            intercept: self.design.intercept,
            gamma,
            partition: SubgroupPartition { labels, m },
            bic_trace: vec![Vec::new(); p],
            iterations: state.sweep,
            converged,
            bases: self.design.bases.clone(),
            excluded: self.design.excluded.clone(),
        }
    }

    fn assign_excluded(&self, state: &BackfitState, i: usize) -> Vec<usize> {
        let p = self.design.p();
        let mut labels: Vec<usize> = (0..p)
            .map(|j| {
                let m = state.partition.m[j];
                let mut counts = vec![0usize; m];
                state.partition.labels[j].iter().for_each(|&l| counts[l - 1] += 1);
                // largest group, ties to the lowest label
                let max = counts.iter().copied().max().unwrap_or(0);
                counts.iter().position(|&c| c == max).unwrap_or(0) + 1
            })
            .collect();
        let y = DVector::from_column_slice(&self.data.subject(i).y);
        let weight = self.design.weight(self.data, i);
        for _ in 0..2 {
            for j in 0..p {
                if state.partition.m[j] == 1 || state.centers[j].is_empty() {
                    continue;
                }
                let mut w = &y - self.baseline_values(&state.beta, i);
                for k in (0..p).filter(|&k| k != j) {
                    w -= &self.design.spline[i][k] * DVector::from_column_slice(&state.gamma[k][labels[k] - 1]);
                }
                let mut ne = NormalEquations::new(self.design.k_basis());
                if ne.add_block(&self.design.spline[i][j], weight, w.as_slice()).is_err() {
                    continue;
                }
                if let Ok(mut coef) = ne.solve(EXCLUDED_RIDGE.max(self.config.subject_ridge)) {
                    if self.config.shape_features {
                        self.remove_level(j, &mut coef);
                    }
                    labels[j] = nearest(&coef, &state.centers[j]) + 1;
                }
            }
        }
        labels
    }
}

fn group_means(points: &[Vec<f64>], labels: &[usize], m: usize) -> Vec<Vec<f64>> {
    let dim = points.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; m];
    let mut counts = vec![0usize; m];
    for (p, &l) in points.iter().zip(labels) {
        counts[l - 1] += 1;
        sums[l - 1].iter_mut().zip(p).for_each(|(s, v)| *s += v);
    }
    for (s, c) in sums.iter_mut().zip(counts) {
        s.iter_mut().for_each(|v| *v /= c.max(1) as f64);
    }
    sums
}

type Coefs = (Vec<f64>, Vec<Vec<Vec<f64>>>);

fn max_change(a: &Coefs, b: &Coefs) -> f64 {
    let beta = a.0.iter().zip(&b.0).map(|(x, y)| (x - y).abs());
    let gamma = a
        .1
        .iter()
        .flatten()
        .flatten()
        .zip(b.1.iter().flatten().flatten())
        .map(|(x, y)| (x - y).abs());
    beta.chain(gamma).fold(0.0, f64::max)
}
