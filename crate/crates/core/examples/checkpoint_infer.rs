//! Trains briefly, saves a checkpoint with its sidecar, reloads it and
//! segments a scene.

use asis::config::AsisConfig;
use asis::synth::{generate_scene, SceneSpec};
use asis::train::{infer_scene, load_model, save_model, train, TrainData};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenes: Vec<_> =
        (0..8).map(|s| generate_scene(&SceneSpec { seed: s, ..SceneSpec::default() })).collect::<Result<_, _>>()?;
    let mut cfg = AsisConfig::default();
    cfg.train.epochs = 1;
    let data = TrainData::from_scenes(scenes, &cfg.blocks)?;
    let out = train(&data, &cfg, |_, _, _| Ok(()))?;

    let dir = std::env::temp_dir().join("asis-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.ckpt");
    save_model(&path, &out.params, &cfg, out.steps)?;
    let (params, meta) = load_model(&path, Some(&cfg.network))?;
    println!("reloaded {} parameters trained for {} steps", params.parameter_count(), meta.steps);

    let scene = generate_scene(&SceneSpec { seed: 99, ..SceneSpec::default() })?;
    let seg = infer_scene(&params, &scene, &meta.config, 1)?;
    println!("{} points -> {} instances", scene.len(), seg.instances.instance_count());
    Ok(())
}
