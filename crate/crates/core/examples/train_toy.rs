//! Trains the full network on generated rooms and scores held-out rooms.
//!
//! Usage: `train_toy [train_scenes] [test_scenes] [epochs] [seed]`

use std::time::Instant;

use asis::config::AsisConfig;
use asis::synth::{generate_scene, scene_seed, SceneSpec};
use asis::train::{evaluate_dataset, infer_scene, train, TrainData};

fn arg(i: usize, default: u64) -> u64 {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (n_train, n_test, epochs, seed) = (arg(1, 40), arg(2, 10), arg(3, 4), arg(4, 0));
    let spec = SceneSpec::default();
    let scenes = |offset: u64, n: u64| -> Result<Vec<_>, asis::synth::SynthError> {
        (0..n as usize).map(|i| generate_scene(&SceneSpec { seed: scene_seed(seed + offset, i), ..spec.clone() })).collect()
    };
    let mut cfg = AsisConfig::default();
    cfg.train.epochs = epochs as usize;
    cfg.train.seed = seed;

    let data = TrainData::from_scenes(scenes(0, n_train)?, &cfg.blocks)?;
    let test = scenes(1, n_test)?;
    println!("{} training blocks from {} scenes", data.windows.len(), data.scenes.len());

    let t = Instant::now();
    let out = train(&data, &cfg, |_, _, _| Ok(()))?;
    let secs = t.elapsed().as_secs_f64();
    println!(
        "trained {} steps in {secs:.1}s ({:.1} ms per block)",
        out.steps,
        1e3 * secs / (cfg.train.epochs * data.windows.len()) as f64
    );
    let first = out.log.first().map_or(0.0, |r| r.total);
    let last = out.log.last().map_or(0.0, |r| r.total);
    println!("loss {first:.4} -> {last:.4}");

    let t = Instant::now();
    let eval = evaluate_dataset(&test, spec.n_classes(), cfg.eval.iou_threshold, |c| infer_scene(&out.params, c, &cfg, 1))?;
    println!("inference on {} scenes in {:.1}s", test.len(), t.elapsed().as_secs_f64());
    print!("{}", eval.metrics.table());
    Ok(())
}
