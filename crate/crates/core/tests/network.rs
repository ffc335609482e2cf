use evplan::energy::EnergyModel;
use evplan::fit::{
    build_dataset, read_dataset_csv, training_depths, write_dataset_csv, TrainingSample,
};
use evplan::pgnn::{
    mlp_forward, pgnn_loss, predict, train_pgnn, MlpParams, Mode, PhysicsAt, TrainConfig, V_MAX,
    V_MIN,
};
use evplan::Error;
use proptest::prelude::*;

fn dataset() -> Vec<TrainingSample> {
    build_dataset(
        &EnergyModel::calibrated_default().unwrap(),
        &training_depths(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn loss_is_affine_in_lambda(seed in 0u64..1000, lambda in 0.0f64..10.0) {
        let data = dataset();
        let params = MlpParams::init(seed);
        let zero = pgnn_loss(&params, &data, 0.0, PhysicsAt::Prediction).unwrap();
        let l = pgnn_loss(&params, &data, lambda, PhysicsAt::Prediction).unwrap();
        prop_assert_eq!(zero.mse, l.mse);
        prop_assert!((l.total - (zero.mse + lambda * l.physics)).abs() <= 1e-12 * l.total.abs().max(1.0));
    }

    #[test]
    fn predictions_stay_in_range(seed in 0u64..1000, depth in 0.1f64..50.0) {
        let v = mlp_forward(&MlpParams::init(seed), depth, Mode::Infer).unwrap();
        prop_assert!((V_MIN..=V_MAX).contains(&v));
    }
}

#[test]
fn dataset_csv_round_trip() {
    let data = dataset();
    let mut buf = Vec::new();
    write_dataset_csv(&mut buf, &data).unwrap();
    let back = read_dataset_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), data.len());
    for (a, b) in data.iter().zip(&back) {
        assert_eq!((a.depth, a.v_star, a.k), (b.depth, b.v_star, b.k));
    }
}

#[test]
fn params_json_round_trip_preserves_output() {
    let p = MlpParams::init(3);
    let q = MlpParams::from_json(&p.to_json().unwrap()).unwrap();
    assert_eq!(p, q);
    assert_eq!(predict(&p, 3.3).unwrap(), predict(&q, 3.3).unwrap());
}

#[test]
fn truncated_json_is_a_parse_error() {
    let text = MlpParams::init(3).to_json().unwrap();
    assert!(MlpParams::from_json(&text[..text.len() / 2]).is_err());
}

#[test]
fn short_training_lowers_the_loss_and_is_reproducible() {
    let data = dataset();
    let cfg = TrainConfig {
        epochs: 300,
        ..TrainConfig::default()
    };
    let a = train_pgnn(&data, &cfg).unwrap();
    let b = train_pgnn(&data, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.loss_curve.len(), 300);
    assert!(a.loss_curve.last().unwrap().total < a.loss_curve[0].total);
}

#[test]
fn rejects_tiny_dataset() {
    let data = dataset();
    let err = train_pgnn(&data[..3], &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, Error::InsufficientSamples { .. }));
}
