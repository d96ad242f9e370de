use std::process::Command;

use fqt_data::{BlobsConfig, DatasetConfig};
use fqt_infer::{build_model, infer, infer_file, InferConfig, SplitChoice};
use fqt_nn::weights;
use fqt_nn::ModelPreset;

const CONFIG: &str = r#"
seed = 3
output_dir = "ignored"

[ansatz]
n_layers = 5

[model]
preset = "mlp_tiny"
hidden = 12

[data]
kind = "blobs"
n_classes = 3
n_per_class = 30
input_dim = 6
separation = 5.0
"#;

fn config() -> InferConfig {
    InferConfig::from_toml(CONFIG).unwrap()
}

#[test]
fn reads_only_model_and_data() {
    let c = config();
    assert_eq!(c.seed, 3);
    assert_eq!(c.model, ModelPreset::MlpTiny { hidden: 12 });
    assert_eq!(
        c.data,
        DatasetConfig::Blobs(BlobsConfig {
            n_classes: 3,
            n_per_class: 30,
            input_dim: 6,
            separation: 5.0
        })
    );
}

#[test]
fn zero_weights_give_majority_rate() {
    let c = config();
    let data = c.data.load(c.seed).unwrap();
    let spec = build_model(&c.model, &data.test).unwrap();
    let omega = vec![0.0; spec.param_count()];
    let eval = infer(&spec, &omega, &data.test).unwrap();
    // All logits tie, so every prediction is class 0.
    let class0 =
        data.test.labels().iter().filter(|&&l| l == 0).count() as f64 / data.test.len() as f64;
    assert_eq!(eval.accuracy, class0);
    assert_eq!(class0, data.test.majority_rate());
    assert!((eval.loss - 3f64.ln()).abs() < 1e-12);
}

#[test]
fn file_roundtrip_matches_in_memory() {
    let c = config();
    let data = c.data.load(c.seed).unwrap();
    let spec = build_model(&c.model, &data.test).unwrap();
    let omega: Vec<f64> = (0..spec.param_count())
        .map(|i| weights::quantize(&[((i * 37 % 101) as f64 - 50.0) / 80.0])[0])
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.fqtw");
    weights::save(&path, &omega).unwrap();
    let report = infer_file(&path, &c, SplitChoice::Test).unwrap();
    assert_eq!(report.evaluation, infer(&spec, &omega, &data.test).unwrap());
    assert_eq!(report.m, 6 * 12 + 12 + 12 * 3 + 3);
}

#[test]
fn wrong_size_is_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.fqtw");
    weights::save(&path, &[0.0; 10]).unwrap();
    let err = infer_file(&path, &config(), SplitChoice::Test).unwrap_err();
    let msg = err.to_string();
    assert!(
        msg.contains("expects m = 123") && msg.contains("holds 10"),
        "{msg}"
    );
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let w = dir.path().join("w.fqtw");
    weights::save(&w, &[0.0; 123]).unwrap();
    let bin = env!("CARGO_BIN_EXE_fqt-infer");
    let run = |args: &[&std::ffi::OsStr]| Command::new(bin).args(args).output().unwrap();

    let ok = run(&[
        "--config".as_ref(),
        cfg.as_os_str(),
        "--weights".as_ref(),
        w.as_os_str(),
    ]);
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("accuracy "));

    weights::save(&w, &[0.0; 5]).unwrap();
    let bad = run(&[
        "--config".as_ref(),
        cfg.as_os_str(),
        "--weights".as_ref(),
        w.as_os_str(),
    ]);
    assert_eq!(bad.status.code(), Some(2));

    let usage = run(&["--weights".as_ref(), w.as_os_str()]);
    assert_eq!(usage.status.code(), Some(1));
}
