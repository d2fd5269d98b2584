use anderson_core::{
    aa_solve_from, check_pairwise_bound, check_tyler_necessary_conditions, compute_w0,
    make_diag_operator, AAConfig, DataModelSpec,
};
use anderson_lab::config::{Experiment, ExperimentConfig, Model, OperatorSpec};
use anderson_lab::linear::initial_point;
use anderson_lab::report::median;
use anderson_lab::run;

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn diag(diagonal: &[f64], offset: &[f64]) -> OperatorSpec {
    OperatorSpec::Diag {
        diagonal: diagonal.to_vec(),
        offset: Some(offset.to_vec()),
    }
}

#[test]
fn scaled_identity_meets_scalar_bound() {
    let offset = [1.0, -2.0, 0.5, 0.0];
    let bound = 0.3 * (0.3 / 1.7);
    let mut c = ExperimentConfig::for_experiment(Experiment::LinearBound);
    c.operator = diag(&[0.3; 4], &offset);
    c.methods = strings(&["aa1"]);
    c.seeds = (0..20).collect();
    let r = run(&c).unwrap();
    assert_eq!(r.violations, 0);
    assert!(r.bound.iter().all(|row| (row.rhs - bound).abs() < 1e-12));

    // From x1 = q(x0) AA(1) lands on x* at step 2, so start from independent
    // pairs to get nontrivial rows.
    let op = make_diag_operator(&[0.3; 4], &offset).unwrap();
    let mut rows = 0;
    for seed in 0..20 {
        let x0 = initial_point(seed, 4);
        let x1 = initial_point(seed + 1000, 4);
        let trace = aa_solve_from(&op, &[&x0, &x1], &AAConfig::new(1).with_max_iterations(30)).unwrap();
        for row in check_pairwise_bound(&trace, op.matrix(), op.offset().as_slice()).unwrap() {
            assert!((row.rhs - bound).abs() < 1e-12);
            assert!(row.floor || row.lhs <= bound * (1.0 + 1e-9), "{row:?}");
            rows += 1;
        }
    }
    assert!(rows >= 20);
}

#[test]
fn empty_seed_list_is_an_error() {
    for e in Experiment::ALL {
        if matches!(e, Experiment::ScalarTight | Experiment::W0Table) {
            continue;
        }
        let mut c = ExperimentConfig::for_experiment(e);
        c.seeds.clear();
        assert!(run(&c).is_err(), "{e}");
    }
}

#[test]
fn zero_operator_converges_immediately() {
    let mut c = ExperimentConfig::for_experiment(Experiment::LinearRate);
    c.operator = diag(&[0.0; 3], &[1.0, 2.0, 3.0]);
    c.methods = strings(&["fp", "aa1", "aa2", "aa3"]);
    c.seeds = (0..10).collect();
    let r = run(&c).unwrap();
    assert_eq!(r.violations, 0);
    for m in ["fp", "aa1", "aa2", "aa3"] {
        let its = &r.summary["methods"][m]["median_iterations"];
        assert!(its.as_f64().unwrap() <= 2.0, "{m}: {its}");
        for seed in 0..10u64 {
            let k = r.rate.iter().filter(|x| x.seed == seed && x.method == m).count();
            assert!(k <= 2, "{m} seed {seed}: {k} rows");
        }
    }
}

#[test]
fn rate_medians_improve_with_depth() {
    let mut c = ExperimentConfig::for_experiment(Experiment::LinearRate);
    c.seeds = (0..30).collect();
    let r = run(&c).unwrap();
    let med = |m: &str| r.summary["methods"][m]["median_r_est_tail"].as_f64().unwrap();
    let fp = med("fp");
    assert!((fp - 0.95).abs() <= 0.02, "fp tail {fp}");
    assert!(med("aa3") <= med("aa2"));
    assert!(med("aa2") <= med("aa1") + 0.02);
    assert_eq!(r.violations, 0);
}

#[test]
fn w0_table_known_points() {
    let mut c = ExperimentConfig::for_experiment(Experiment::W0Table);
    c.grid_points = 39;
    let r = run(&c).unwrap();
    // With 39 points the axis step is 0.05, so these pairs lie on the grid.
    let find = |lo: f64, hi: f64| {
        r.w0.iter()
            .find(|x| (x.lambda_min - lo).abs() < 1e-12 && (x.lambda_max - hi).abs() < 1e-12)
            .unwrap_or_else(|| panic!("no row for ({lo}, {hi})"))
    };
    let a = find(-0.3, 0.3);
    assert!((a.w0 - 0.3).abs() < 1e-9 && a.equality_flag);
    let b = find(0.5, 0.5);
    assert!((b.w0 - 1.0 / 3.0).abs() < 1e-9 && !b.equality_flag);
    let z = find(0.0, 0.0);
    assert!(z.w0.abs() < 1e-12 && z.equality_flag);
    assert!((compute_w0(0.0, 0.0).unwrap()).abs() < 1e-15);
    assert_eq!(r.violations, 0);
}

#[test]
fn desk_model_two_admits_an_estimator() {
    for seed in 0..3 {
        let spec = DataModelSpec::Model2 {
            n0: 60,
            n1: 57,
            big_d: 20,
            d: 10,
            seed,
        };
        let prob = spec.generate().unwrap();
        let report = check_tyler_necessary_conditions(&prob, 200, seed);
        assert!(report.passed, "seed {seed}: {report:?}");
    }
}

#[test]
fn tme_rows_carry_seeds_and_order() {
    let mut c = ExperimentConfig::for_experiment(Experiment::TmeRun);
    c.data.model = Model::Model1;
    c.data.p = 6;
    c.data.n = 15;
    c.seeds = vec![4, 2];
    c.inits = 2;
    c.methods = strings(&["aa2:c0=1e4"]);
    let r = run(&c).unwrap();
    let keys: Vec<(u64, usize, &str)> = r.tme.iter().map(|x| (x.seed, x.init, x.method.as_str())).collect();
    assert_eq!(
        keys,
        vec![
            (4, 0, "aa2:c0=1e4"),
            (4, 0, "fp-standard"),
            (4, 1, "aa2:c0=1e4"),
            (4, 1, "fp-standard"),
            (2, 0, "aa2:c0=1e4"),
            (2, 0, "fp-standard"),
            (2, 1, "aa2:c0=1e4"),
            (2, 1, "fp-standard"),
        ]
    );
    assert!(r.tme.iter().all(|x| x.final_residual <= 1e-12));
    let its: Vec<f64> = r.tme.iter().map(|x| x.iterations as f64).collect();
    assert!(median(&its) > 0.0);
}

#[test]
fn shipped_configs_run_clean() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut paths: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    assert!(paths.len() >= 9);
    for path in paths {
        let c = ExperimentConfig::from_path(&path, Experiment::LinearBound).unwrap();
        let r = run(&c).unwrap();
        assert_eq!(r.violations, 0, "{}", path.display());
    }
}
