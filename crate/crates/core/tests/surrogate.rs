use jointmpc::costs::{compare_to_oracle, oracle_samples, train_collision_surrogate, CollisionSurrogate, TrainingConfig};
use jointmpc::fixtures;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn reduced_training_tracks_the_oracle() {
    let chain = fixtures::planar2();
    let cfg = TrainingConfig {
        samples: 8000,
        hidden: vec![64, 32],
        epochs: 30,
        seed: 11,
        ..TrainingConfig::default()
    };
    let net = train_collision_surrogate(&chain, &cfg).unwrap();
    let report = net.report.clone().unwrap();
    assert_eq!(report.train_samples + report.holdout_samples, 8000);

    // fresh configurations, never seen in training
    let mut rng = ChaCha8Rng::seed_from_u64(999);
    let (qs, oracle) = oracle_samples(&chain, 2000, &mut rng);
    let (mae, sign) = compare_to_oracle(&net, &qs, &oracle);
    assert!(sign > 0.9, "sign agreement {sign}");
    assert!(mae < 0.05, "mae {mae}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    net.save(&path).unwrap();
    let back = CollisionSurrogate::load(&path).unwrap();
    for (a, b) in back.predict_batch(&qs[..50]).iter().zip(net.predict_batch(&qs[..50])) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}
