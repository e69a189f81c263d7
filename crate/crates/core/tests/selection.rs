use std::time::Instant;

use active_lasso::bench::{
    bench_run, fit, kfold_cv, select_eta, validation_metric, write_csv, write_jsonl, BenchRecord,
    CvConfig, EtaRule, ExperimentSpec, FitSpec, GeneratorSpec, CSV_HEADER,
};
use active_lasso::datagen::{noisy_regression_dataset, Dataset};
use active_lasso::{kkt_residual, DesignMatrix, LossKind, SolverKind};
use approx::assert_relative_eq;

fn cd() -> FitSpec {
    FitSpec::hybrid(SolverKind::CoordinateDescent)
}

fn toy(target: Vec<f64>, diag: &[f64]) -> Dataset {
    let n = diag.len();
    let mut values = vec![0.0; n * n];
    for (i, &d) in diag.iter().enumerate() {
        values[i * n + i] = d;
    }
    Dataset::new(
        DesignMatrix::from_row_slice(n, n, &values).unwrap(),
        target,
        LossKind::LeastSquaresHalf,
    )
    .unwrap()
}

#[test]
fn larger_eta_wins_when_it_zeroes_a_noise_coordinate() {
    // A = diag(10, 1): the fit is x_1 = (300 - eta) / 100, x_2 = soft(0.45, eta)
    let train = toy(vec![30.0, 0.45], &[10.0, 1.0]);
    let val = toy(vec![30.0, 0.0], &[10.0, 1.0]);
    let candidates = [0.05, 0.5];
    let brute: Vec<f64> = candidates
        .iter()
        .map(|&eta| {
            let x1 = (300.0 - eta) / 100.0;
            let x2 = (0.45f64 - eta).max(0.0);
            ((10.0 * x1 - 30.0).powi(2) + x2 * x2) / 2.0
        })
        .collect();
    let sel = select_eta(&train, &val, &candidates, &cd()).unwrap();
    assert_eq!(sel.chosen, 0.5);
    assert!(sel.is_unique());
    for (m, b) in sel.metrics.iter().zip(&brute) {
        assert_relative_eq!(m.unwrap(), *b, max_relative = 1e-9);
    }
}

#[test]
fn chosen_metric_is_reproducible() {
    let ds = noisy_regression_dataset(80, 40, 4, 3).unwrap();
    let (train, val) = ds.split_halves();
    let g = active_lasso::model::norm_inf(&train.design.tr_mul_vec(&train.response));
    let grid: Vec<f64> = (1..=6).map(|k| g * k as f64 / 10.0).collect();
    let sel = select_eta(&train, &val, &grid, &cd()).unwrap();
    let best = sel.metrics.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(sel.best_metric, best);
    let f = fit(&train.instance(sel.chosen).unwrap(), &cd()).unwrap();
    let again = validation_metric(&f.x, &val).unwrap();
    assert!((again - sel.best_metric).abs() <= 1e-12 * (1.0 + again.abs()));
    for (k, eta) in sel.kkt.iter().zip(&grid) {
        assert!(k.unwrap() <= 1e-4 * eta);
    }
}

#[test]
fn leave_one_out_runs() {
    let ds = noisy_regression_dataset(6, 4, 2, 8).unwrap();
    let sel = kfold_cv(&ds, &CvConfig::new(6, 1), &[0.01, 0.1, 1.0], &cd()).unwrap();
    assert!(sel.metrics.iter().all(Option::is_some));
    assert!(sel.candidates.contains(&sel.chosen));
}

#[test]
fn equal_candidates_get_equal_metrics() {
    let ds = noisy_regression_dataset(30, 10, 3, 4).unwrap();
    let sel = kfold_cv(&ds, &CvConfig::new(3, 2), &[0.5, 0.5], &cd()).unwrap();
    assert_eq!(sel.metrics[0], sel.metrics[1]);
}

#[test]
fn two_fold_split_of_duplicated_rows_matches_holdout() {
    let d = noisy_regression_dataset(20, 8, 3, 6).unwrap();
    let rows: Vec<usize> = (0..20).chain(0..20).collect();
    let doubled = d.select_rows(&rows);
    let cfg = CvConfig {
        folds: 2,
        seed: 0,
        shuffle: false,
    };
    let grid = [0.05, 0.2, 0.8, 3.0];
    let cv = kfold_cv(&doubled, &cfg, &grid, &cd()).unwrap();
    let hold = select_eta(&d, &d, &grid, &cd()).unwrap();
    assert_eq!(cv.chosen, hold.chosen);
    for (a, b) in cv.metrics.iter().zip(&hold.metrics) {
        assert_relative_eq!(a.unwrap(), b.unwrap(), max_relative = 1e-12);
    }
}

#[test]
fn single_candidate_is_chosen_vacuously() {
    let d = noisy_regression_dataset(20, 8, 3, 6).unwrap();
    let sel = select_eta(&d, &d, &[18.0], &cd()).unwrap();
    assert_eq!(sel.chosen, 18.0);
}

fn identity_spec(trials: usize) -> ExperimentSpec {
    ExperimentSpec::from_json(&format!(
        r#"{{
            "id": "smoke",
            "generator": {{"name": "identity", "target": [3.0, 0.5, -2.0]}},
            "trials": {trials},
            "solvers": ["gpsr", "admm", "cd"],
            "master_seed": 1,
            "eta": {{"rule": "fixed", "value": 1.0}}
        }}"#
    ))
    .unwrap()
}

#[test]
fn identity_smoke_run_is_fast_and_exact() {
    let started = Instant::now();
    let records = bench_run(&identity_spec(1)).unwrap();
    assert!(started.elapsed().as_secs_f64() < 1.0);
    // 3 solvers x 2 modes, one trial row and one mean row each
    assert_eq!(records.len(), 12);
    for r in &records {
        assert!(r.error.is_none(), "{r:?}");
        // soft-threshold of (3, 0.5, -2) at 1 is (2, 0, -1)
        assert_relative_eq!(r.objective.unwrap(), 0.5 * (1.0 + 0.25 + 1.0) + 3.0, max_relative = 1e-8);
        assert_eq!(r.support_size, Some(2.0));
    }
}

fn numeric(r: &BenchRecord) -> Vec<Option<f64>> {
    vec![
        r.eta,
        r.objective,
        r.kkt_residual,
        r.outer_iterations,
        r.support_size,
        r.recovered_size,
        r.support_f1,
    ]
}

#[test]
fn bench_runs_are_deterministic() {
    let spec = ExperimentSpec {
        id: "det".into(),
        generator: GeneratorSpec::NoisyRegression {
            n: 40,
            d: 60,
            s: 4,
            variance: 0.1,
        },
        trials: 2,
        solvers: vec![SolverKind::GpsrBB, SolverKind::CoordinateDescent],
        hybrid: vec![false, true],
        master_seed: 99,
        eta: EtaRule::default(),
        tuning: Default::default(),
    };
    let a = bench_run(&spec).unwrap();
    let b = bench_run(&spec).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((x.trial, x.seed, x.solver, x.hybrid), (y.trial, y.seed, y.solver, y.hybrid));
        assert_eq!(numeric(x), numeric(y));
    }
    for r in a.iter().filter(|r| r.trial.is_some()) {
        assert!(r.kkt_residual.unwrap() <= 1e-4 * r.eta.unwrap());
    }
}

#[test]
fn csv_and_jsonl_outputs() {
    let records = bench_run(&identity_spec(2)).unwrap();
    let mut csv = Vec::new();
    write_csv(&records, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(lines.count(), records.len());

    let mut jsonl = Vec::new();
    write_jsonl(&records, &mut jsonl).unwrap();
    let back: Vec<BenchRecord> = String::from_utf8(jsonl)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(back, records);
}

#[test]
fn failures_are_recorded_not_fatal() {
    // ADMM does not handle the logistic loss
    let spec = ExperimentSpec {
        id: "fail".into(),
        generator: GeneratorSpec::SyntheticLogistic { n: 30, d: 20, s: 3 },
        trials: 1,
        solvers: vec![SolverKind::Admm, SolverKind::CoordinateDescent],
        hybrid: vec![true],
        master_seed: 3,
        eta: EtaRule::default(),
        tuning: Default::default(),
    };
    let records = bench_run(&spec).unwrap();
    let admm = records.iter().find(|r| r.solver == SolverKind::Admm && r.trial.is_some()).unwrap();
    let cd_row = records
        .iter()
        .find(|r| r.solver == SolverKind::CoordinateDescent && r.trial.is_some())
        .unwrap();
    assert!(admm.error.is_some() && admm.objective.is_none());
    assert!(cd_row.error.is_none());
    let ds = spec.generator.generate(active_lasso::datagen::derive_seeds(3, 1)[0]).unwrap();
    let inst = ds.instance(cd_row.eta.unwrap()).unwrap();
    let f = fit(&inst, &cd()).unwrap();
    assert_relative_eq!(f.objective, cd_row.objective.unwrap(), max_relative = 1e-12);
    assert!(kkt_residual(&inst, &f.x).unwrap() <= 1e-4 * inst.eta());
}
