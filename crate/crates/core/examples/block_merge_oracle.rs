//! Runs grouping and block merging on ground-truth embeddings, which bounds
//! what the pipeline can recover from a perfect network.

use asis::config::AsisConfig;
use asis::synth::{generate_scene, SceneSpec};
use asis::train::{evaluate_dataset, oracle_block_labels, segment_scene};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = AsisConfig::default();
    let scenes: Vec<_> =
        (0..5).map(|s| generate_scene(&SceneSpec { seed: s, ..SceneSpec::default() })).collect::<Result<_, _>>()?;
    let eval = evaluate_dataset(&scenes, 4, cfg.eval.iou_threshold, |c| {
        segment_scene(c, &cfg.blocks, &cfg.merge, |_, w| Ok(oracle_block_labels(c, w, &cfg.mean_shift)))
    })?;
    for (scene, pred) in scenes.iter().zip(&eval.predictions) {
        println!("{} gt instances -> {} merged instances", scene.instance_count(), pred.instances.instance_count());
    }
    print!("{}", eval.metrics.table());
    Ok(())
}
