//! Splits a room into overlapping blocks and samples one of them.

use asis::cloud::{parse_scene, format_scene, sample_block, split_blocks, BlockConfig};
use asis::synth::{generate_scene, SceneSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cloud = generate_scene(&SceneSpec { seed: 1, ..SceneSpec::default() })?;
    let text = format_scene(&cloud);
    assert_eq!(parse_scene(&text)?, cloud);
    println!("{} points, {} instances, {} bytes as text", cloud.len(), cloud.instance_count(), text.len());

    let cfg = BlockConfig::default();
    let windows = split_blocks(&cloud, cfg.block_size, cfg.stride, cfg.min_points)?;
    for w in &windows {
        println!("block at ({:.2}, {:.2}): {} points", w.origin[0], w.origin[1], w.indices.len());
    }
    let block = sample_block(&cloud, &windows[0], cfg.sample_size, 7)?;
    println!("sampled features: {:?}", block.features.shape());
    println!("first row: {:.3?}", block.features.row(0));
    Ok(())
}
