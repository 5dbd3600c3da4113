use asis::config::AsisConfig;
use asis::network::{NetworkConfig, NetworkError};
use asis::synth::{generate_dataset, SceneSpec};
use asis::train::{load_model, log_path, sidecar_path, train_to_disk, TrainError, LOG_HEADER};

fn small_config() -> AsisConfig {
    let mut cfg = AsisConfig::default();
    cfg.network = NetworkConfig::tiny(4);
    cfg.blocks.sample_size = 32;
    cfg.train.epochs = 1;
    cfg.train.batch_size = 2;
    cfg.train.blocks_per_epoch = Some(4);
    cfg
}

#[test]
fn checkpoint_round_trip_and_toggle_guard() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    generate_dataset(2, &SceneSpec { points_per_instance: [60, 80], ..SceneSpec::default() }, 1, &data).unwrap();
    let mut cfg = small_config();
    cfg.network.use_sa = false;
    let ckpt = dir.path().join("model.ckpt");
    let outcome = train_to_disk(&data, &cfg, &ckpt).unwrap();

    let log = std::fs::read_to_string(log_path(&ckpt)).unwrap();
    assert_eq!(log.lines().next(), Some(LOG_HEADER));
    assert_eq!(log.lines().count(), 1 + outcome.log.len());
    assert!(sidecar_path(&ckpt).exists());

    let (params, meta) = load_model(&ckpt, Some(&cfg.network)).unwrap();
    assert_eq!(params.to_named_tensors(), outcome.params.to_named_tensors());
    assert!(!meta.use_sa && meta.use_if);

    let mut contradicting = cfg.network.clone();
    contradicting.use_sa = true;
    match load_model(&ckpt, Some(&contradicting)) {
        Err(TrainError::Network(NetworkError::Incompatible(_))) => {}
        other => panic!("expected an incompatibility error, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn descent_on_default_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    generate_dataset(6, &SceneSpec::default(), 2, &data).unwrap();
    let mut cfg = AsisConfig::default();
    cfg.train.epochs = 2;
    cfg.train.batch_size = 4;
    let out = train_to_disk(&data, &cfg, &dir.path().join("m.ckpt")).unwrap();
    assert!(out.log.len() >= 20);
    let median = |s: &[f64]| {
        let mut v = s.to_vec();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let totals: Vec<f64> = out.log.iter().map(|r| r.total).collect();
    let (first, last) = (median(&totals[..10]), median(&totals[totals.len() - 10..]));
    assert!(last < first, "median loss {first} -> {last}");
}
