//! Seeded panel generators for the three benchmark designs and custom ones.
//!
//! Every random quantity is drawn from its own ChaCha stream keyed by
//! `(subject, variable)`, so growing `n` leaves earlier subjects unchanged.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, StandardUniform};

use crate::backfit::Backfitter;
use crate::config::FitConfig;
use crate::data::{LongitudinalDataset, SubgroupPartition, SubjectRecord};
use crate::error::FitError;
use crate::model::FittedModel;

/// A known smooth component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrueFunction {
    /// `slope * x + offset`
    Linear { slope: f64, offset: f64 },
    /// `-1.75 arctan(5(x - 0.6)) - 0.415`
    Arctan,
    /// `2.5 (1 - ((x - 0.75) / 0.8)^2)^4 - 1.363`
    Bump,
    /// `2 sin(pi x) - pi / 4`
    Sine,
    /// `2 cos(pi x)`
    Cosine,
    Zero,
}

impl TrueFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TrueFunction::Linear { slope, offset } => slope * x + offset,
            TrueFunction::Arctan => -1.75 * (5.0 * (x - 0.6)).atan() - 0.415,
            TrueFunction::Bump => 2.5 * (1.0 - ((x - 0.75) / 0.8).powi(2)).powi(4) - 1.363,
            TrueFunction::Sine => 2.0 * (PI * x).sin() - PI / 4.0,
            TrueFunction::Cosine => 2.0 * (PI * x).cos(),
            TrueFunction::Zero => 0.0,
        }
    }
}

/// How subjects (1-based index `i` of `n`) are split into true groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupRule {
    /// Everyone in one group.
    All,
    /// `i <= n/2` in group 1, the rest in group 2.
    Halves,
    /// Odd `i` in group 1, even `i` in group 2.
    OddEven,
}

impl GroupRule {
    /// 1-based group of 0-based subject `i`.
    pub fn group(&self, i: usize, n: usize) -> usize {
        match self {
            GroupRule::All => 1,
            GroupRule::Halves => {
                if i < n / 2 {
                    1
                } else {
                    2
                }
            }
            GroupRule::OddEven => {
                if (i + 1) % 2 == 1 {
                    1
                } else {
                    2
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateDesign {
    pub rule: GroupRule,
    /// One function per group, in group order.
    pub functions: Vec<TrueFunction>,
}

/// Random-effect covariate of the generated panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomEffect {
    /// `Z_it ~ N(0, 1)`, one slope per subject.
    NormalSlope,
    /// `Z_it = 1`: a random intercept.
    Intercept,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CustomDesign {
    pub covariates: Vec<CovariateDesign>,
    pub random_effect: RandomEffect,
    /// Include one Bernoulli(0.5) baseline covariate with coefficient `beta`.
    pub baseline: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Case {
    CaseI,
    CaseII,
    CaseIII,
    Custom(CustomDesign),
}

impl Case {
    pub fn design(&self) -> CustomDesign {
        use TrueFunction::*;
        let cov = |rule, functions: &[TrueFunction]| CovariateDesign {
            rule,
            functions: functions.to_vec(),
        };
        match self {
            Case::CaseI => CustomDesign {
                covariates: vec![
                    cov(
                        GroupRule::Halves,
                        &[
                            Linear { slope: 3.0, offset: -1.5 },
                            Linear { slope: -5.0, offset: 2.5 },
                        ],
                    ),
                    cov(
                        GroupRule::Halves,
                        &[
                            Linear { slope: 1.25, offset: -0.625 },
                            Linear { slope: -6.0, offset: 3.0 },
                        ],
                    ),
                ],
                random_effect: RandomEffect::NormalSlope,
                baseline: false,
            },
            Case::CaseII => CustomDesign {
                covariates: vec![
                    cov(GroupRule::OddEven, &[Arctan, Bump]),
                    cov(GroupRule::Halves, &[Sine, Cosine]),
                ],
                random_effect: RandomEffect::NormalSlope,
                baseline: false,
            },
            Case::CaseIII => CustomDesign {
                covariates: vec![
                    cov(GroupRule::All, &[Cosine]),
                    cov(
                        GroupRule::OddEven,
                        &[
                            Linear { slope: 3.0, offset: -1.5 },
                            Linear { slope: -5.0, offset: 2.5 },
                        ],
                    ),
                    cov(GroupRule::Halves, &[Arctan, Bump]),
                ],
                random_effect: RandomEffect::Intercept,
                baseline: true,
            },
            Case::Custom(d) => d.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisitRule {
    Fixed(usize),
    /// Uniform integer in `lo..=hi`.
    UniformInt(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub case: Case,
    pub n: usize,
    pub ni_rule: VisitRule,
    /// Random-effect variance.
    pub sigma_b2: f64,
    /// Error variance.
    pub sigma_e2: f64,
    pub seed: u64,
    /// Baseline coefficient, used when the design has a baseline covariate.
    pub beta: f64,
}

impl ScenarioSpec {
    /// Defaults of a case: 15 visits for the balanced design, 10 to 20 otherwise.
    pub fn new(case: Case, n: usize, seed: u64) -> Self {
        let ni_rule = match case {
            Case::CaseI => VisitRule::Fixed(15),
            _ => VisitRule::UniformInt(10, 20),
        };
        Self {
            case,
            n,
            ni_rule,
            sigma_b2: 0.2,
            sigma_e2: 0.1,
            seed,
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPanel {
    pub dataset: LongitudinalDataset,
    pub truth: SubgroupPartition,
    /// `components[j][k]`: true function of group `k + 1` on covariate `j`.
    pub components: Vec<Vec<TrueFunction>>,
    pub beta: Option<f64>,
}

impl GeneratedPanel {
    /// True component `j` of subject `i` at `x`.
    pub fn true_value(&self, i: usize, j: usize, x: f64) -> f64 {
        self.components[j][self.truth.labels[j][i] - 1].eval(x)
    }
}

const VAR_VISITS: u64 = 0;
const VAR_RANDOM_EFFECT: u64 = 1;
const VAR_BASELINE: u64 = 2;
const VAR_NOISE: u64 = 3;
const VAR_Z: u64 = 4;
const VAR_X: u64 = 16;

fn stream(seed: u64, subject: usize, var: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((subject as u64) << 8) | var);
    rng
}

fn normal(variance: f64) -> Normal<f64> {
    Normal::new(0.0, variance.max(0.0).sqrt()).expect("finite nonnegative standard deviation")
}

pub fn generate(spec: &ScenarioSpec) -> GeneratedPanel {
    let design = spec.case.design();
    let p = design.covariates.len();
    let n = spec.n;
    let b_dist = normal(spec.sigma_b2);
    let e_dist = normal(spec.sigma_e2);
    let coin = Bernoulli::new(0.5).expect("valid probability");
    let truth_labels: Vec<Vec<usize>> = design
        .covariates
        .iter()
        .map(|c| (0..n).map(|i| c.rule.group(i, n)).collect())
        .collect();
    let subjects = (0..n)
        .map(|i| {
            let n_i = match spec.ni_rule {
                VisitRule::Fixed(k) => k,
                VisitRule::UniformInt(lo, hi) => stream(spec.seed, i, VAR_VISITS).random_range(lo..=hi),
            };
            let x: Vec<Vec<f64>> = (0..p)
                .map(|j| {
                    let mut rng = stream(spec.seed, i, VAR_X + j as u64);
                    (0..n_i).map(|_| StandardUniform.sample(&mut rng)).collect()
                })
                .collect();
            let z: Vec<f64> = match design.random_effect {
                RandomEffect::NormalSlope => {
                    let mut rng = stream(spec.seed, i, VAR_Z);
                    let sn = normal(1.0);
                    (0..n_i).map(|_| sn.sample(&mut rng)).collect()
                }
                RandomEffect::Intercept => vec![1.0; n_i],
            };
            let b = b_dist.sample(&mut stream(spec.seed, i, VAR_RANDOM_EFFECT));
            let s: Vec<f64> = if design.baseline {
                let u = coin.sample(&mut stream(spec.seed, i, VAR_BASELINE));
                vec![if u { 1.0 } else { 0.0 }]
            } else {
                Vec::new()
            };
            let base = s.first().map_or(0.0, |u| u * spec.beta);
            let mut noise = stream(spec.seed, i, VAR_NOISE);
            let y = (0..n_i)
                .map(|t| {
                    let smooth: f64 = design
                        .covariates
                        .iter()
                        .enumerate()
                        .map(|(j, c)| c.functions[truth_labels[j][i] - 1].eval(x[j][t]))
                        .sum();
                    base + smooth + z[t] * b + e_dist.sample(&mut noise)
                })
                .collect();
            SubjectRecord::new(format!("{}", i + 1), y, x, vec![z], s)
        })
        .collect();
    let r = usize::from(design.baseline);
    let dataset = LongitudinalDataset::new(subjects, p, 1, r).expect("generated panel is well formed");
    GeneratedPanel {
        dataset,
        truth: SubgroupPartition::from_labels(truth_labels),
        components: design.covariates.iter().map(|c| c.functions.clone()).collect(),
        beta: design.baseline.then_some(spec.beta),
    }
}

/// Fit with memberships fixed at the truth.
pub fn oracle_fit(panel: &GeneratedPanel, config: &FitConfig) -> Result<FittedModel, FitError> {
    Backfitter::new(&panel.dataset, config)?.run_with_partition(&panel.truth)
}
