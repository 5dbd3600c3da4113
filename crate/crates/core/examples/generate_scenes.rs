//! Writes a small synthetic dataset and summarizes its manifest.
//!
//! Usage: `generate_scenes [out_dir] [scenes] [seed]`

use std::path::PathBuf;

use asis::synth::{generate_dataset, SceneSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "scenes".into()));
    let n: usize = args.next().map_or(Ok(4), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;

    let spec = SceneSpec::default();
    let manifest = generate_dataset(n, &spec, seed, &out)?;
    println!("classes: {}", manifest.class_names.join(", "));
    for s in &manifest.scenes {
        println!("{}  seed {:>20}  {:>5} points  {} instances", s.file, s.seed, s.points, s.instances);
    }
    println!("manifest: {}", out.join("manifest.json").display());
    Ok(())
}
