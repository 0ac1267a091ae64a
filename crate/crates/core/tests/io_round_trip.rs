use neural_mpc::neural::io::{read_model, read_sidecar, write_model};
use neural_mpc::{Activation, MlpModel, ResidualDataset, ResidualVariant, Vector};

#[test]
fn model_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    let net = MlpModel::new(&[3, 16, 16, 3], Activation::Tanh, ResidualVariant::A, 11).unwrap();
    write_model(&net, &path, serde_json::json!({"tag": "t"})).unwrap();
    let back = read_model(&path).unwrap();
    assert_eq!(back, net);
    let z = Vector::from_column_slice(&[0.1, -0.2, 0.3]);
    assert_eq!(back.forward(&z), net.forward(&z));
    let side = read_sidecar(&path).unwrap();
    assert_eq!(side.extra["tag"], "t");
}

#[test]
fn corrupt_model_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    let net = MlpModel::new(&[2, 4, 2], Activation::Relu, ResidualVariant::DiState, 1).unwrap();
    write_model(&net, &path, serde_json::Value::Null).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() / 2);
    std::fs::write(&path, bytes).unwrap();
    assert!(read_model(&path).is_err());
}

#[test]
fn dataset_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.bin");
    let inputs: Vec<Vector> = (0..20).map(|i| Vector::from_column_slice(&[i as f64, -0.5 * i as f64])).collect();
    let labels: Vec<Vector> = (0..20).map(|i| Vector::from_column_slice(&[(i as f64).sin()])).collect();
    let ds = ResidualDataset::from_rows(ResidualVariant::DiState, &inputs, &labels).unwrap();
    ds.write(&path).unwrap();
    let back = ResidualDataset::read(&path).unwrap();
    assert_eq!(back.len(), 20);
    for i in 0..20 {
        assert_eq!(back.input(i), ds.input(i));
        assert_eq!(back.label(i), ds.label(i));
    }
}
