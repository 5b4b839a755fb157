use sparse_anomaly::eval::truncate2;
use sparse_anomaly::runner::{
    emit_report, load_report, read_table_csv, repeat_seed, run_experiment, select_best,
    ExperimentConfig, RunReport, F1_TABLE_FILE,
};
use sparse_anomaly::Error;

fn config(repeats: usize, models: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(&format!(
        r#"
schema_version = 1
name = "runner test"
repeats = {repeats}
window_size = 5
scoring_samples = 2

[[datasets]]
kind = "synthetic"
name = "a"
seed = 1
[datasets.synth]
train_rows = 500
validation_rows = 200
mixed_rows = 400

[[datasets]]
kind = "synthetic"
name = "b"
seed = 2
[datasets.synth]
train_rows = 500
validation_rows = 200
mixed_rows = 400
{models}
"#
    ))
    .unwrap()
}

const MODELS: &str = r#"
[[models]]
model = "pca"

[[models]]
model = "isoforest"
tries = 3

[[models]]
model = "vae-err"
architecture = { epochs = 2 }

[[models]]
model = "vae-sl"
architecture = { epochs = 2 }
"#;

fn run(repeats: usize) -> RunReport {
    run_experiment(&config(repeats, MODELS)).unwrap()
}

#[test]
fn seeds_follow_the_base_seed() {
    assert_eq!(repeat_seed(7, 0), 7);
    assert_eq!(repeat_seed(7, 3), 10);
    let r = run(2);
    assert_eq!(r.seeds, vec![0, 1]);
    assert_eq!(r.table.datasets, vec!["a", "b"]);
    assert_eq!(
        r.table.methods,
        vec!["PCA", "IsoF", "VAE Err", "VAE SL Max", "VAE SL Avg"]
    );
}

#[test]
fn report_is_determined_by_config_and_survives_disk() {
    let a = run(2);
    let b = run(2);
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );

    let dir = tempfile::tempdir().unwrap();
    emit_report(&a, dir.path(), false).unwrap();
    assert!(matches!(
        emit_report(&a, dir.path(), false),
        Err(Error::Output(_))
    ));
    let back = load_report(dir.path()).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&back).unwrap()
    );
    let (methods, datasets, values) = read_table_csv(&dir.path().join(F1_TABLE_FILE)).unwrap();
    assert_eq!(methods, a.table.methods);
    assert_eq!(datasets, a.table.datasets);
    assert_eq!(values, a.table.f1);
}

#[test]
fn more_repeats_never_lower_the_best() {
    let short = run(1);
    let long = run(3);
    for (ds_short, ds_long) in short.datasets.iter().zip(&long.datasets) {
        for (m1, m3) in ds_short.methods.iter().zip(&ds_long.methods) {
            assert_eq!(m1.method, m3.method);
            // repeat 0 is shared, so the longer run can only improve on it
            assert_eq!(m1.repeats[0].report, m3.repeats[0].report);
            let (b1, b3) = (m1.best().unwrap(), m3.best().unwrap());
            let key =
                |r: &sparse_anomaly::eval::MetricsReport| (truncate2(r.best_f1()), r.auc_or_zero());
            assert!(key(&b3.report) >= key(&b1.report), "{}", m1.method);
        }
    }
}

#[test]
fn best_marks_and_selection_recompute_from_repeats() {
    let r = run(2);
    for (d, ds) in r.datasets.iter().enumerate() {
        for (m, method) in ds.methods.iter().enumerate() {
            let best = select_best(method.repeats.iter().map(|rep| &rep.report));
            assert_eq!(best, method.best_repeat);
            assert_eq!(r.table.f1[m][d], method.best_f1());
        }
        let marks = r.table.best_methods(&r.table.f1, d);
        let top = r
            .table
            .f1
            .iter()
            .filter_map(|row| row[d].map(truncate2))
            .fold(f64::MIN, f64::max);
        for (m, row) in r.table.f1.iter().enumerate() {
            assert_eq!(marks.contains(&m), row[d].map(truncate2) == Some(top));
        }
    }
    let metrics: Vec<&str> = r.cross_dataset.iter().map(|c| c.metric.as_str()).collect();
    assert_eq!(metrics, ["f1", "auc"]);
}

#[test]
fn single_dataset_skips_cross_dataset_tests() {
    let mut cfg = config(1, "[[models]]\nmodel = \"pca\"\n");
    cfg.datasets.truncate(1);
    let r = run_experiment(&cfg).unwrap();
    assert!(r.cross_dataset.is_empty());
    assert_eq!(r.datasets[0].methods.len(), 1);
}
