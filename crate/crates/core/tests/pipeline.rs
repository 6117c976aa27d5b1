//! End-to-end behaviour of the fitting engine on generated panels.

mod support;

use nalgebra::DVector;
use subgam_core::backfit::BackfitState;
use subgam_core::bspline::{SplineBasis, SplineSpec};
use subgam_core::gls::{gls_fit_subject, Block, BlockSystem};
use subgam_core::initial_fit::pooled_fit;
use subgam_core::metrics::{accuracy, mse};
use subgam_core::simgen::{
    generate, oracle_fit, Case, CovariateDesign, CustomDesign, GeneratedPanel, GroupRule, RandomEffect,
    ScenarioSpec, TrueFunction, VisitRule,
};
use subgam_core::{Backfitter, FitConfig, LongitudinalDataset, SubjectRecord, WorkingCovariance};
use support::oracles::SplitMix;

fn noiseless(case: Case, n: usize, seed: u64) -> GeneratedPanel {
    let mut spec = ScenarioSpec::new(case, n, seed);
    spec.sigma_b2 = 0.0;
    spec.sigma_e2 = 0.0;
    generate(&spec)
}

fn fixed(m: &[usize]) -> FitConfig {
    FitConfig {
        fixed_m: Some(m.to_vec()),
        ..FitConfig::default()
    }
}

fn line(slope: f64, offset: f64) -> TrueFunction {
    TrueFunction::Linear { slope, offset }
}

fn same_sets(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|k| (a[i] == a[k]) == (b[i] == b[k])))
}

/// Pooled mean of fitted component `j` over every observation.
fn pooled_component_mean(model: &subgam_core::FittedModel, data: &LongitudinalDataset, j: usize) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..data.n() {
        let v = model.component_values(data, i, j);
        total += v.iter().sum::<f64>();
        count += v.len();
    }
    total / count as f64
}

#[test]
fn single_covariate_residual_is_response() {
    let panel = generate(&ScenarioSpec::new(Case::CaseII, 12, 1));
    // keep only the first smooth covariate
    let subjects: Vec<SubjectRecord> = panel
        .dataset
        .subjects()
        .iter()
        .map(|s| SubjectRecord::new(s.id.clone(), s.y.clone(), vec![s.x[0].clone()], s.z.clone(), vec![]))
        .collect();
    let data = LongitudinalDataset::new(subjects, 1, 1, 0).unwrap();
    let config = FitConfig { center: false, ..FitConfig::default() };
    let bf = Backfitter::new(&data, &config).unwrap();
    let state = bf.initial_state().unwrap();
    let w = bf.partial_residuals(&state, 0);
    for (i, wi) in w.iter().enumerate() {
        assert_eq!(wi, &data.subject(i).y);
    }
}

/// Coefficients of a line in a clamped B-spline basis: the line evaluated at
/// the Greville abscissae.
fn line_coefficients(basis: &SplineBasis, slope: f64, offset: f64) -> Vec<f64> {
    let d = basis.degree();
    let t = basis.knots();
    (0..basis.dim())
        .map(|l| {
            let xi = t[l + 1..=l + d].iter().sum::<f64>() / d as f64;
            slope * xi + offset
        })
        .collect()
}

#[test]
fn residual_at_truth_recovers_arctan_component() {
    let design = CustomDesign {
        covariates: vec![
            CovariateDesign {
                rule: GroupRule::OddEven,
                functions: vec![TrueFunction::Arctan, TrueFunction::Bump],
            },
            CovariateDesign {
                rule: GroupRule::Halves,
                functions: vec![line(2.0, -1.0), line(-1.0, 0.5)],
            },
        ],
        random_effect: RandomEffect::NormalSlope,
        baseline: false,
    };
    let panel = noiseless(Case::Custom(design), 20, 3);
    let data = &panel.dataset;
    let bf = Backfitter::new(data, &fixed(&[2, 2])).unwrap();
    let basis = &bf.design().bases[1];
    let state = BackfitState {
        beta: vec![0.0],
        gamma: vec![
            vec![vec![0.0; basis.dim()]; 2],
            vec![line_coefficients(basis, 2.0, -1.0), line_coefficients(basis, -1.0, 0.5)],
        ],
        partition: panel.truth.clone(),
        centers: vec![Vec::new(); 2],
        sweep: 0,
    };
    let w = bf.partial_residuals(&state, 0);
    for i in (0..data.n()).step_by(2) {
        for (t, &x) in data.subject(i).x[0].iter().enumerate() {
            let want = -1.75 * (5.0 * (x - 0.6)).atan() - 0.415;
            assert!((w[i][t] - want).abs() < 1e-12, "subject {i} visit {t}");
        }
    }
}

#[test]
fn noiseless_case_one_coefficients_separate_groups() {
    let panel = noiseless(Case::CaseI, 20, 5);
    let data = &panel.dataset;
    // the unregularized per-subject estimator; the default ridge shrinks
    // same-line subjects toward zero by different amounts
    let config = FitConfig { subject_ridge: 0.0, ..FitConfig::default() };
    let bf = Backfitter::new(data, &config).unwrap();
    let w: Vec<Vec<f64>> = (0..data.n())
        .map(|i| data.subject(i).x[0].iter().map(|&x| panel.true_value(i, 0, x)).collect())
        .collect();
    let coefs = bf.subject_coefficients(0, &w).unwrap();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    // subjects 0 and 1 share the first line, the last subject has the second
    let within = dist(&coefs[0], &coefs[1]);
    let between = dist(&coefs[0], &coefs[19]);
    assert!(between > 10.0 * within, "between {between}, within {within}");

    let twins = LongitudinalDataset::new(vec![data.subject(0).clone(); 2], 2, 1, 0).unwrap();
    let twin_bf = Backfitter::new(&twins, &config).unwrap();
    let again = twin_bf.subject_coefficients(0, &[w[0].clone(), w[0].clone()]).unwrap();
    assert_eq!(again[0], again[1]);
}

#[test]
fn oracle_fit_reproduces_noiseless_lines() {
    let panel = noiseless(Case::CaseI, 30, 8);
    let data = &panel.dataset;
    let model = oracle_fit(&panel, &FitConfig::default()).unwrap();
    // Both covariates share one partition here, so a group's curves are only
    // identified up to constants that cancel across covariates: compare shapes.
    for j in 0..2 {
        for k in 0..2 {
            let (grid, f) = model.component_grid(j, k, 101);
            let truth = panel.components[j][k];
            let gap: Vec<f64> = grid.iter().zip(&f).map(|(x, v)| v - truth.eval(*x)).collect();
            let spread = gap.iter().fold(f64::NEG_INFINITY, |a: f64, v| a.max(*v))
                - gap.iter().fold(f64::INFINITY, |a: f64, v| a.min(*v));
            assert!(spread < 1e-8, "j={j} k={k} spread {spread}");
        }
        assert!(pooled_component_mean(&model, data, j).abs() < 1e-8);
    }
    let fitted = model.predict(data);
    let y: Vec<Vec<f64>> = data.subjects().iter().map(|s| s.y.clone()).collect();
    assert!(mse(&fitted, &y).unwrap() < 1e-16);
}

#[test]
fn fitted_components_are_centered() {
    let panel = generate(&ScenarioSpec::new(Case::CaseIII, 40, 2));
    let config = FitConfig {
        covariance: WorkingCovariance::exchangeable(0.5),
        ..fixed(&[1, 2, 2])
    };
    let data = &panel.dataset;
    let model = subgam_core::fit(data, &config).unwrap();
    for j in 0..3 {
        assert!(pooled_component_mean(&model, data, j).abs() < 1e-8);
    }
    let bf = Backfitter::new(data, &config).unwrap();
    let mut state = bf.initial_state().unwrap();
    for j in 0..3 {
        assert!(bf.component_mean(&state, j).abs() < 1e-8);
    }
    for sweep in 0..3 {
        for (j, m) in [1, 2, 2].into_iter().enumerate() {
            bf.update_covariate(&mut state, j, m).unwrap();
            assert!(bf.component_mean(&state, j).abs() < 1e-8, "sweep {sweep} j={j}");
        }
        bf.refresh_beta(&mut state).unwrap();
        for j in 0..3 {
            assert!(bf.component_mean(&state, j).abs() < 1e-8);
        }
        assert!(state.partition.is_canonical());
        for j in 0..3 {
            assert_eq!(state.gamma[j].len(), state.partition.m[j]);
        }
    }
}

#[test]
fn pooled_fit_with_null_component_recovers_baseline() {
    let design = CustomDesign {
        covariates: vec![CovariateDesign {
            rule: GroupRule::All,
            functions: vec![TrueFunction::Zero],
        }],
        random_effect: RandomEffect::Intercept,
        baseline: true,
    };
    let mut spec = ScenarioSpec::new(Case::Custom(design), 30, 4);
    spec.sigma_b2 = 0.0;
    spec.sigma_e2 = 0.0;
    spec.beta = 2.0;
    let panel = generate(&spec);
    let config = FitConfig::default();
    let init = pooled_fit(&panel.dataset, &config).unwrap();
    assert!(init.beta[0].abs() < 1e-8);
    assert!((init.beta[1] - 2.0).abs() < 1e-8);
    let basis = SplineBasis::new(SplineSpec::cubic(2, panel.dataset.covariate_range(0)), None).unwrap();
    let f = basis.eval_component(&init.gamma0[0], &basis.grid(101)).unwrap();
    assert!(f.iter().all(|v| v.abs() < 1e-6));
}

#[test]
fn shifting_response_moves_only_the_intercept() {
    let panel = generate(&ScenarioSpec::new(Case::CaseIII, 30, 6));
    let shifted: Vec<SubjectRecord> = panel
        .dataset
        .subjects()
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.y.iter_mut().for_each(|v| *v += 3.25);
            s
        })
        .collect();
    let shifted = LongitudinalDataset::new(shifted, 3, 1, 1).unwrap();
    let config = FitConfig::default();
    let a = pooled_fit(&panel.dataset, &config).unwrap();
    let b = pooled_fit(&shifted, &config).unwrap();
    assert!((b.beta[0] - a.beta[0] - 3.25).abs() < 1e-8);
    assert!((b.beta[1] - a.beta[1]).abs() < 1e-8);
    for (ga, gb) in a.gamma0.iter().zip(&b.gamma0) {
        for (x, y) in ga.iter().zip(gb) {
            assert!((x - y).abs() < 1e-8);
        }
    }
}

#[test]
fn pooled_curve_lies_between_group_lines() {
    let panel = noiseless(Case::CaseI, 50, 10);
    let data = &panel.dataset;
    let config = FitConfig::default();
    let bf = Backfitter::new(data, &config).unwrap();
    let state = bf.initial_state().unwrap();
    let basis = &bf.design().bases[0];
    let grid = basis.grid(101);
    let f = basis.eval_component(&state.gamma[0][0], &grid).unwrap();
    let (l1, l2) = (panel.components[0][0], panel.components[0][1]);
    // The pooled curve is a finite-sample additive projection of the two
    // lines, so allow its misfit where the band between them is narrow.
    for (x, v) in grid.iter().zip(&f) {
        let lo = l1.eval(*x).min(l2.eval(*x));
        let hi = l1.eval(*x).max(l2.eval(*x));
        assert!(*v >= lo - 0.2 && *v <= hi + 0.2, "x={x}: {v} not in [{lo}, {hi}]");
    }

    // a single pooled curve fits worse than the per-group oracle
    let noisy = generate(&ScenarioSpec::new(Case::CaseI, 50, 10));
    let y: Vec<Vec<f64>> = noisy.dataset.subjects().iter().map(|s| s.y.clone()).collect();
    let pooled = Backfitter::new(&noisy.dataset, &config).unwrap().run(&[1, 1]).unwrap();
    let oracle = oracle_fit(&noisy, &config).unwrap();
    let pooled_mse = mse(&pooled.predict(&noisy.dataset), &y).unwrap();
    let oracle_mse = mse(&oracle.predict(&noisy.dataset), &y).unwrap();
    assert!(pooled_mse > oracle_mse, "{pooled_mse} <= {oracle_mse}");
}

#[test]
fn single_subject_pooled_fit_is_subject_gls() {
    let panel = generate(&ScenarioSpec::new(Case::CaseI, 1, 12));
    let s = panel.dataset.subject(0);
    let data = LongitudinalDataset::new(
        vec![SubjectRecord::new("a", s.y.clone(), vec![s.x[0].clone()], vec![], vec![])],
        1,
        0,
        0,
    )
    .unwrap();
    let config = FitConfig { center: false, ..FitConfig::default() };
    let init = pooled_fit(&data, &config).unwrap();
    let basis = SplineBasis::new(SplineSpec::cubic(2, data.covariate_range(0)), None).unwrap();
    let direct = gls_fit_subject(&basis, &WorkingCovariance::independence(), &s.x[0], &s.y, 0.0).unwrap();
    for (a, b) in init.gamma0[0].iter().zip(&direct) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn group_refit_matches_block_solve_and_ignores_order() {
    let panel = generate(&ScenarioSpec::new(Case::CaseII, 24, 14));
    let data = &panel.dataset;
    let config = FitConfig {
        covariance: WorkingCovariance::exchangeable(0.3),
        ..FitConfig::default()
    };
    let bf = Backfitter::new(data, &config).unwrap();
    let state = bf.initial_state().unwrap();
    let w = bf.partial_residuals(&state, 0);

    let single = bf.group_refit(0, &w, &vec![1; data.n()], 1).unwrap();
    let blocks = (0..data.n())
        .map(|i| Block {
            design: bf.design().spline[i][0].clone(),
            weight: bf.design().weight(data, i).clone(),
            response: DVector::from_column_slice(&w[i]),
        })
        .collect();
    let direct = BlockSystem { blocks }.solve(0.0).unwrap();
    for (a, b) in single[0].iter().zip(&direct) {
        assert!((a - b).abs() < 1e-12);
    }

    // reverse the subject order: per-group coefficients do not move
    let labels = &panel.truth.labels[0];
    let two = bf.group_refit(0, &w, labels, 2).unwrap();
    let order: Vec<usize> = (0..data.n()).rev().collect();
    let rev_data = data.select(&order).unwrap();
    let rev_bf = Backfitter::new(&rev_data, &config).unwrap();
    let rev_w: Vec<Vec<f64>> = order.iter().map(|&i| w[i].clone()).collect();
    let rev_labels: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
    let rev = rev_bf.group_refit(0, &rev_w, &rev_labels, 2).unwrap();
    for (g, r) in two.iter().zip(&rev) {
        let scale = g.iter().fold(1.0, |a: f64, v| a.max(v.abs()));
        for (a, b) in g.iter().zip(r) {
            assert!((a - b).abs() < 1e-12 * scale);
        }
    }

    // refit coefficients minimize the weighted residual sum of their group
    let wrss = |gamma: &[f64], group: usize| -> f64 {
        (0..data.n())
            .filter(|&i| labels[i] == group)
            .map(|i| {
                let b = &bf.design().spline[i][0];
                let r = DVector::from_column_slice(&w[i]) - b * DVector::from_column_slice(gamma);
                r.dot(&(bf.design().weight(data, i) * &r))
            })
            .sum()
    };
    let mut rng = SplitMix(3);
    for (g, gamma) in two.iter().enumerate() {
        let best = wrss(gamma, g + 1);
        for _ in 0..20 {
            let perturbed: Vec<f64> = gamma.iter().map(|v| v + 0.05 * rng.normal()).collect();
            assert!(best <= wrss(&perturbed, g + 1));
        }
    }
}

#[test]
fn case_one_partition_recovered() {
    let panel = generate(&ScenarioSpec::new(Case::CaseI, 50, 1));
    let config = FitConfig {
        covariance: WorkingCovariance::ar1(0.3),
        ..fixed(&[2, 2])
    };
    let model = subgam_core::fit(&panel.dataset, &config).unwrap();
    for j in 0..2 {
        assert_eq!(accuracy(&model.partition.labels[j], &panel.truth.labels[j]).unwrap(), 1.0);
    }
    assert!(model.converged);

    // with the partition recovered, the oracle fit is the same fit
    let y: Vec<Vec<f64>> = panel.dataset.subjects().iter().map(|s| s.y.clone()).collect();
    let oracle = oracle_fit(&panel, &config).unwrap();
    let method_mse = mse(&model.predict(&panel.dataset), &y).unwrap();
    let oracle_mse = mse(&oracle.predict(&panel.dataset), &y).unwrap();
    assert!(oracle_mse <= method_mse + 1e-8);
}

#[test]
fn shuffled_subjects_give_same_partition() {
    let panel = noiseless(Case::CaseI, 40, 2);
    let data = &panel.dataset;
    let config = fixed(&[2, 2]);
    let model = subgam_core::fit(data, &config).unwrap();
    let mut order: Vec<usize> = (0..data.n()).collect();
    let mut rng = SplitMix(17);
    for i in (1..order.len()).rev() {
        order.swap(i, rng.below(i + 1));
    }
    let shuffled = data.select(&order).unwrap();
    let again = subgam_core::fit(&shuffled, &config).unwrap();
    for j in 0..2 {
        let back: Vec<usize> = {
            let mut v = vec![0; data.n()];
            for (pos, &i) in order.iter().enumerate() {
                v[i] = again.partition.labels[j][pos];
            }
            v
        };
        assert!(same_sets(&model.partition.labels[j], &back));
        assert!(same_sets(&model.partition.labels[j], &panel.truth.labels[j]));
    }
}

#[test]
fn short_subject_is_assigned_to_nearest_group() {
    let panel = generate(&ScenarioSpec::new(Case::CaseI, 40, 4));
    // a group-two subject (both covariates) observed only five times
    let mut spec = ScenarioSpec::new(Case::CaseI, 40, 99);
    spec.ni_rule = VisitRule::Fixed(5);
    let extra = generate(&spec);
    let mut short = extra.dataset.subject(39).clone();
    short.id = "short".into();
    let mut subjects = panel.dataset.subjects().to_vec();
    subjects.push(short);
    let data = LongitudinalDataset::new(subjects, 2, 1, 0).unwrap();
    let model = subgam_core::fit(&data, &fixed(&[2, 2])).unwrap();
    assert_eq!(model.excluded, vec![40]);
    for j in 0..2 {
        let labels = &model.partition.labels[j];
        // subject 39 is in the second true group on both covariates
        assert_eq!(labels[40], labels[39], "covariate {j}");
        assert_ne!(labels[40], labels[0], "covariate {j}");
    }
    // the excluded subject does not influence the fit
    let without = subgam_core::fit(&panel.dataset, &fixed(&[2, 2])).unwrap();
    assert_eq!(without.gamma, model.gamma);
}

#[test]
fn working_covariance_structures_agree_on_exact_data() {
    let basis = SplineBasis::new(SplineSpec::cubic(2, (0.0, 1.0)), None).unwrap();
    let mut rng = SplitMix(1);
    let x: Vec<f64> = (0..15).map(|_| rng.unit()).collect();
    let w: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.5).collect();
    let grid = basis.grid(101);
    let ind = gls_fit_subject(&basis, &WorkingCovariance::independence(), &x, &w, 0.0).unwrap();
    let ar = gls_fit_subject(&basis, &WorkingCovariance::ar1(0.5), &x, &w, 0.0).unwrap();
    let fi = basis.eval_component(&ind, &grid).unwrap();
    let fa = basis.eval_component(&ar, &grid).unwrap();
    for ((a, b), x) in fi.iter().zip(&fa).zip(&grid) {
        assert!((a - b).abs() < 1e-8);
        assert!((a - (3.0 * x - 1.5)).abs() < 1e-8);
    }
}
