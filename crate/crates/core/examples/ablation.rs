//! Trains all four SA/IF toggle combinations on the same rooms and prints
//! one comparison row per configuration.
//!
//! Usage: `ablation [train_scenes] [test_scenes] [epochs]`

use asis::config::AsisConfig;
use asis::synth::{generate_scene, SceneSpec};
use asis::train::{evaluate_dataset, infer_scene, train, TrainData};

fn arg(i: usize, default: u64) -> u64 {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (n_train, n_test, epochs) = (arg(1, 40), arg(2, 10), arg(3, 2));
    let spec = SceneSpec::default();
    let scenes = |offset: u64, n: u64| -> Result<Vec<_>, asis::synth::SynthError> {
        (0..n).map(|i| generate_scene(&SceneSpec { seed: offset + i, ..spec.clone() })).collect()
    };
    let (train_scenes, test) = (scenes(0, n_train)?, scenes(1_000_000, n_test)?);

    println!("config    mCov    mWCov   mPrec   mRec    oAcc    mAcc    mIoU");
    for (name, sa, fuse) in [("vanilla", false, false), ("+SA", true, false), ("+IF", false, true), ("ASIS", true, true)] {
        let mut cfg = AsisConfig::default();
        cfg.network.use_sa = sa;
        cfg.network.use_if = fuse;
        cfg.train.epochs = epochs as usize;
        let data = TrainData::from_scenes(train_scenes.clone(), &cfg.blocks)?;
        let out = train(&data, &cfg, |_, _, _| Ok(()))?;
        let m = evaluate_dataset(&test, spec.n_classes(), 0.5, |c| infer_scene(&out.params, c, &cfg, 1))?.metrics;
        println!(
            "{name:<8}  {:.4}  {:.4}  {:.4}  {:.4}  {:.4}  {:.4}  {:.4}",
            m.m_cov, m.m_wcov, m.m_prec, m.m_rec, m.o_acc, m.m_acc, m.m_iou
        );
    }
    Ok(())
}
