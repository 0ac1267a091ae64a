use std::path::Path;
use std::process::{Command, Output};

use neural_mpc::{ResidualDataset, ResidualVariant, Vector};
use nmpc_cli::manifest::{RunManifest, MANIFEST_NAME};
use proptest::prelude::*;

fn nmpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nmpc")).args(args).output().expect("spawn nmpc")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn tiny_dataset(path: &Path) {
    let inputs: Vec<Vector> = (0..60).map(|i| Vector::from_column_slice(&[0.1 * i as f64, 0.5, -0.2])).collect();
    let labels: Vec<Vector> = inputs.iter().map(|z| Vector::from_column_slice(&[z[0], -z[0], 0.0])).collect();
    ResidualDataset::from_rows(ResidualVariant::A, &inputs, &labels).unwrap().write(path).unwrap();
}

#[test]
fn missing_spec_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    let r = nmpc(&["bench", "--spec", "/nonexistent/bench.toml", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 2);
    assert!(!String::from_utf8_lossy(&r.stderr).is_empty());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(code(&nmpc(&["track", "--no-such-flag"])), 2);
    assert_eq!(code(&nmpc(&[])), 2);
}

#[test]
fn bench_subset_writes_one_row_per_width() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    let r = nmpc(&[
        "bench", "--widths", "4,16,64", "--modes", "rtn", "--repetitions", "10", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(out.join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let m = RunManifest::read(&out.join(MANIFEST_NAME)).unwrap();
    assert_eq!(m.command, "bench");
    assert!(m.outputs.contains_key("bench.csv"));
}

#[test]
fn train_sidecar_records_the_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.bin");
    tiny_dataset(&data);
    let out = dir.path().join("t");
    let r = nmpc(&[
        "train", "--data", data.to_str().unwrap(), "--arch", "2x8", "--max-epochs", "5", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("model.bin.json")).unwrap()).unwrap();
    assert_eq!(side["layer_sizes"], serde_json::json!([3, 8, 8, 3]));
    assert_eq!(side["extra"]["arch"], "2x8");
}

#[test]
fn model_variant_must_match_the_controller() {
    let dir = tempfile::tempdir().unwrap();
    let inputs: Vec<Vector> = (0..30).map(|i| Vector::from_column_slice(&[i as f64, 1.0])).collect();
    let labels: Vec<Vector> = (0..30).map(|_| Vector::zeros(ResidualVariant::DiState.output_dim())).collect();
    let data = dir.path().join("di.bin");
    ResidualDataset::from_rows(ResidualVariant::DiState, &inputs, &labels).unwrap().write(&data).unwrap();
    let t = dir.path().join("t");
    let r = nmpc(&["train", "--data", data.to_str().unwrap(), "--max-epochs", "2", "--out", t.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let model = t.join("model.bin");
    let r = nmpc(&["track", "--model", model.to_str().unwrap(), "--out", dir.path().join("k").to_str().unwrap()]);
    assert_eq!(code(&r), 2, "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn replay_refuses_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.bin");
    tiny_dataset(&data);
    let out = dir.path().join("t");
    let r = nmpc(&["train", "--data", data.to_str().unwrap(), "--max-epochs", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0);
    std::fs::write(&data, b"changed").unwrap();
    let manifest = out.join(MANIFEST_NAME);
    assert_eq!(code(&nmpc(&["--replay", manifest.to_str().unwrap()])), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn any_byte_change_invalidates_the_manifest(
        bytes in proptest::collection::vec(any::<u8>(), 1..256),
        pos in any::<prop::sample::Index>(),
        flip in 1u8..=255,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.bin");
        std::fs::write(&input, &bytes).unwrap();
        let outcome = nmpc_cli::Outcome { inputs: vec![input.clone()], outputs: vec![] };
        let m = RunManifest::new("train", 0, serde_json::Value::Null, dir.path(), &outcome).unwrap();
        prop_assert!(m.verify_inputs().is_ok());
        let mut changed = bytes.clone();
        let i = pos.index(changed.len());
        changed[i] ^= flip;
        std::fs::write(&input, &changed).unwrap();
        prop_assert_eq!(m.verify_inputs().unwrap_err().exit_code(), 2);
    }
}
