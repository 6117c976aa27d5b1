//! CSV ingestion, result export and config echo.

use std::collections::BTreeMap;
use std::path::Path;

use subgam::config::{ColumnMap, RunConfig, Transform};
use subgam::csvio::{read_long_csv, read_long_csv_from, write_long_csv, IoError};
use subgam::results::{read_memberships, write_results, GRID_POINTS};
use subgam_core::data::{LongitudinalDataset, SubjectRecord};
use subgam_core::simgen::{generate, Case, ScenarioSpec};
use subgam_core::{fit_with_records, WorkingCovariance};

fn read_str(text: &str, columns: &ColumnMap) -> Result<LongitudinalDataset, IoError> {
    read_long_csv_from(text.as_bytes(), columns, &BTreeMap::new())
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn two_subjects_three_rows() {
    let csv = "subject_id,y,x_1,z_1,s_1\n\
               a,1.0,0.1,1,5\n\
               a,2.0,0.2,1,5\n\
               a,3.0,0.3,1,5\n\
               b,4.0,0.4,1,0\n\
               b,5.0,0.5,1,0\n\
               b,6.0,0.6,1,0\n";
    let data = read_str(csv, &ColumnMap::standard(1, 1, 1)).unwrap();
    assert_eq!(data.n(), 2);
    assert_eq!(data.subjects().iter().map(SubjectRecord::n_obs).collect::<Vec<_>>(), [3, 3]);
    assert_eq!(data.subject(1).y, [4.0, 5.0, 6.0]);
    assert_eq!(data.subject(0).s, [5.0]);
}

#[test]
fn interleaved_rows_keep_first_appearance_and_file_order() {
    let csv = "subject_id,y,x_1\nb,1,0\na,2,0\nb,3,0\na,4,0\n";
    let data = read_str(csv, &ColumnMap::standard(1, 0, 0)).unwrap();
    assert_eq!(data.subject(0).id, "b");
    assert_eq!(data.subject(0).y, [1.0, 3.0]);
    assert_eq!(data.subject(1).y, [2.0, 4.0]);
}

#[test]
fn varying_baseline_is_rejected() {
    let csv = "subject_id,y,x_1,s_1\na,1,0.1,0\na,2,0.2,1\n";
    match read_str(csv, &ColumnMap::standard(1, 0, 1)) {
        Err(IoError::NonConstantBaseline { subject, column }) => {
            assert_eq!(subject, "a");
            assert_eq!(column, "s_1");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn bad_cells_and_missing_columns() {
    let cols = ColumnMap::standard(1, 0, 0);
    match read_str("subject_id,y,x_1\na,1,0.1\na,NA,0.2\n", &cols) {
        Err(IoError::NonNumericCell { row, column, .. }) => {
            assert_eq!(row, 2);
            assert_eq!(column, "y");
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        read_str("subject_id,x_1\na,0.1\n", &cols),
        Err(IoError::MissingColumn(c)) if c == "y"
    ));
    assert!(matches!(read_str("subject_id,y,x_1\n", &cols), Err(IoError::Empty)));
}

#[test]
fn column_mapping_and_transforms() {
    let csv = "id,bili,day,other\n1,1.0,10,9\n1,2.718281828459045,20,9\n2,7.38905609893065,30,9\n";
    let columns = ColumnMap {
        subject: "id".into(),
        y: "bili".into(),
        x: vec!["day".into()],
        z: vec![],
        s: vec![],
    };
    let mut t = BTreeMap::new();
    t.insert("bili".to_string(), Transform::Log);
    t.insert("day".to_string(), Transform::Unit);
    let data = read_long_csv_from(csv.as_bytes(), &columns, &t).unwrap();
    let y: Vec<f64> = data.subjects().iter().flat_map(|s| s.y.clone()).collect();
    let x: Vec<f64> = data.subjects().iter().flat_map(|s| s.x[0].clone()).collect();
    for (got, want) in y.iter().zip([0.0, 1.0, 2.0]) {
        assert!((got - want).abs() < 1e-14);
    }
    assert_eq!(x, [0.0, 0.5, 1.0]);

    let bad = "id,bili,day\n1,0,1\n1,1,2\n";
    assert!(matches!(
        read_long_csv_from(bad.as_bytes(), &columns, &t),
        Err(IoError::LogDomain { row: 1, .. })
    ));
}

#[test]
fn simulated_panel_round_trips_exactly() {
    for case in [Case::CaseI, Case::CaseII, Case::CaseIII] {
        let panel = generate(&ScenarioSpec::new(case, 12, 4));
        let d = &panel.dataset;
        let cols = ColumnMap::standard(d.p(), d.q(), d.r());
        let mut buf = Vec::new();
        write_long_csv(&mut buf, d, &cols).unwrap();
        let back = read_long_csv_from(buf.as_slice(), &cols, &BTreeMap::new()).unwrap();
        assert_eq!(&back, d);
    }
}

/// Case I with only the first covariate.
fn one_covariate_panel(n: usize) -> LongitudinalDataset {
    let panel = generate(&ScenarioSpec::new(Case::CaseI, n, 2));
    let subjects = panel
        .dataset
        .subjects()
        .iter()
        .map(|s| SubjectRecord::new(s.id.clone(), s.y.clone(), vec![s.x[0].clone()], s.z.clone(), vec![]))
        .collect();
    LongitudinalDataset::new(subjects, 1, 1, 0).unwrap()
}

#[test]
fn results_have_expected_shape_and_rerun_identically() {
    let data = one_covariate_panel(30);
    let mut config = RunConfig {
        columns: ColumnMap::standard(1, 1, 0),
        ..RunConfig::default()
    };
    config.fit.fixed_m = Some(vec![3]);
    let (model, records) = fit_with_records(&data, &config.fit).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    write_results(&a, &data, &model, &records, &config).unwrap();

    let grids = std::fs::read_to_string(a.join("fitted_grids.csv")).unwrap();
    let cov1 = grids.lines().skip(1).filter(|l| l.starts_with("1,")).count();
    assert_eq!(cov1, 3 * GRID_POINTS);

    let coefs = std::fs::read_to_string(a.join("coefficients.csv")).unwrap();
    assert_eq!(coefs.lines().count(), 1 + 3 * config.fit.k_basis());

    // canonical labels: first subject in group 1, new labels appear in order
    let m = read_memberships(&a.join("memberships.csv")).unwrap();
    let mut next = 1;
    for (_, g) in &m[&1] {
        assert!(*g <= next);
        if *g == next {
            next += 1;
        }
    }
    assert_eq!(next, 4);

    let fit_again = fit_with_records(&data, &config.fit).unwrap();
    write_results(&b, &data, &fit_again.0, &fit_again.1, &config).unwrap();
    assert_eq!(files(&a), files(&b));
}

#[test]
fn effective_config_reproduces_the_run() {
    let data = one_covariate_panel(24);
    let mut config = RunConfig {
        columns: ColumnMap::standard(1, 1, 0),
        ..RunConfig::default()
    };
    config.fit.covariance = WorkingCovariance::exchangeable(0.3);
    config.fit.m_max = 3;
    let (model, records) = fit_with_records(&data, &config.fit).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_results(dir.path(), &data, &model, &records, &config).unwrap();
    let echoed = RunConfig::load(&dir.path().join("effective.conf")).unwrap();
    assert_eq!(echoed, config);
    let bic = std::fs::read_to_string(dir.path().join("bic_trace.csv")).unwrap();
    assert_eq!(bic.lines().next().unwrap(), "covariate,m,loglik,k,n,bic,feasible");
    assert_eq!(bic.lines().count(), 1 + 3);
}

#[test]
fn short_subject_is_excluded_and_still_assigned() {
    let panel = generate(&ScenarioSpec::new(Case::CaseI, 30, 5));
    let d = &panel.dataset;
    let cols = ColumnMap::standard(d.p(), d.q(), d.r());
    let mut buf = Vec::new();
    write_long_csv(&mut buf, d, &cols).unwrap();
    let mut text = String::from_utf8(buf).unwrap();
    // a subject seen on only 8 visits
    for t in 0..8 {
        let x = (t as f64 + 0.5) / 8.0;
        text.push_str(&format!("short,{},{x},{x},1\n", 0.1 * t as f64));
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("panel.csv");
    std::fs::write(&path, text).unwrap();

    let mut config = RunConfig::parse("exclusion.min_visits = 9\nselection.fixed_m = 2, 2").unwrap();
    config.columns = cols;
    let data = read_long_csv(&path, &config.columns, &config.transforms).unwrap();
    assert_eq!(data.n(), 31);
    let (model, records) = fit_with_records(&data, &config.fit).unwrap();
    assert_eq!(model.excluded, [30]);
    write_results(dir.path(), &data, &model, &records, &config).unwrap();
    let m = read_memberships(&dir.path().join("memberships.csv")).unwrap();
    for labels in m.values() {
        assert_eq!(labels.len(), 31);
        assert_eq!(labels[30].0, "short");
        assert!((1..=2).contains(&labels[30].1));
    }
}
