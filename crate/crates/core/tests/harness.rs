use bir_core::bench::{run_mrre_on, REPORT_CSV_HEADER};
use bir_core::{
    gen_synthetic, run_r2_study, Dataset, ExperimentConfig, MetricReport, SyntheticFunction, SyntheticSpec,
};
use nalgebra::{DMatrix, DVector};
use serde_json::json;

fn config(value: serde_json::Value) -> ExperimentConfig {
    let c: ExperimentConfig = serde_json::from_value(value).unwrap();
    c.validate().unwrap();
    c
}

fn small_r2() -> ExperimentConfig {
    config(json!({
        "name": "fun1_small",
        "kind": "r2_synthetic",
        "synthetic": { "function": "fun1", "dimensions": [6], "n": 30 },
        "methods": ["SIR", "SAVE", "BIR", "BAVE"],
        "k": 2,
        "trials": 3,
        "base_seed": 17,
        "n_mc": 200,
        "gp_restarts": 1
    }))
}

fn assert_consistent(report: &MetricReport) {
    for r in &report.records {
        let values: Vec<f64> = report
            .raw
            .iter()
            .filter(|v| v.method == r.method && v.setting == r.setting && v.metric == r.metric)
            .map(|v| v.value)
            .collect();
        assert_eq!(values.len(), r.trials);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!((mean - r.mean).abs() < 1e-12);
        assert!(r.min <= r.mean + 1e-12 && r.mean <= r.max + 1e-12 && r.std >= 0.0);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((min, max), (r.min, r.max));
    }
}

#[test]
fn r2_report_is_consistent_and_complete() {
    let report = run_r2_study(&small_r2()).unwrap();
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    // 4 methods × 1 setting × (subspace + 2 directions)
    assert_eq!(report.records.len(), 12);
    assert_consistent(&report);
    assert!(report.records.iter().all(|r| (0.0..=1.0 + 1e-12).contains(&r.mean)));
}

#[test]
fn r2_report_is_independent_of_thread_count() {
    let cfg = small_r2();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let several = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = single.install(|| run_r2_study(&cfg)).unwrap();
    let b = several.install(|| run_r2_study(&cfg)).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn csv_report_has_documented_header() {
    let report = run_r2_study(&small_r2()).unwrap();
    let mut out = Vec::new();
    report.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().next().unwrap(), REPORT_CSV_HEADER.join(","));
    assert_eq!(text.lines().count(), 1 + report.records.len());
}

fn linear_dataset(n: usize) -> Dataset {
    let x = DMatrix::from_fn(n, 3, |i, j| ((i * (j + 2) * 7919) % 101) as f64 / 10.0);
    let y = DVector::from_fn(n, |i, _| 50.0 + 2.0 * x[(i, 0)] - x[(i, 1)] + 0.5 * x[(i, 2)]);
    Dataset::new(x, y, None).unwrap()
}

#[test]
fn exact_linear_data_without_reduction_has_zero_error() {
    let cfg = config(json!({
        "name": "linear",
        "kind": "mrre_dataset",
        "dataset": { "path": "unused.csv", "response": "y", "train_sizes": [10, 20], "test_size": 10 },
        "methods": ["NONE", "SIR"],
        "k": 1,
        "trials": 4
    }));
    let report = run_mrre_on(&cfg, &linear_dataset(40)).unwrap();
    assert_consistent(&report);
    for r in report.records.iter().filter(|r| r.method == "NONE") {
        assert!(r.max < 1e-8, "{r:?}");
    }
}

#[test]
fn mrre_rejects_nonpositive_response() {
    let mut ds = linear_dataset(40);
    ds.y[3] = -1.0;
    let cfg = config(json!({
        "name": "linear",
        "kind": "mrre_dataset",
        "dataset": { "path": "unused.csv", "response": "y", "train_sizes": [10], "test_size": 10 },
        "methods": ["NONE"],
        "k": 1,
        "trials": 1
    }));
    assert!(matches!(run_mrre_on(&cfg, &ds), Err(bir_core::Error::NonPositiveResponse(3))));
}

#[test]
fn banana_at_zero_curvature_is_gaussian() {
    let spec = SyntheticSpec::new(SyntheticFunction::Fun3Banana, 10).with_banana_b(0.0);
    let (ds, _) = gen_synthetic(&spec, 100, 5).unwrap();
    let latent: Vec<f64> = (0..10).map(|i| i as f64 * 0.3 - 1.0).collect();
    assert_eq!(spec.latent_to_x(&latent), latent);
    let mean = ds.x.row_mean();
    let cov = (ds.x.transpose() * &ds.x) / 100.0 - mean.transpose() * &mean;
    assert!(cov[(1, 1)] < 2.0 && cov[(1, 1)] > 0.5);
}
