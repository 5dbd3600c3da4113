use sha2::{Digest, Sha256};

use asis::cloud::{format_scene, read_scene};
use asis::synth::{generate_dataset, generate_scene, scene_seed, Manifest, SceneSpec};

#[test]
fn single_scene_dataset_matches_generate_scene() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SceneSpec::default();
    let manifest = generate_dataset(1, &spec, 7, dir.path()).unwrap();
    assert_eq!(manifest.scenes.len(), 1);
    let expected = generate_scene(&SceneSpec { seed: scene_seed(7, 0), ..spec }).unwrap();
    let text = std::fs::read_to_string(dir.path().join(&manifest.scenes[0].file)).unwrap();
    assert_eq!(text, format_scene(&expected));
}

#[test]
fn manifest_counts_match_files() {
    let dir = tempfile::tempdir().unwrap();
    generate_dataset(5, &SceneSpec::default(), 3, dir.path()).unwrap();
    let manifest = Manifest::read(dir.path()).unwrap();
    for (entry, path) in manifest.scenes.iter().zip(manifest.scene_paths(dir.path())) {
        let cloud = read_scene(&path).unwrap();
        assert_eq!(cloud.len(), entry.points);
        assert_eq!(cloud.instance_count(), entry.instances);
    }
}

#[test]
fn scenes_have_distinct_content() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(8, &SceneSpec::default(), 11, dir.path()).unwrap();
    let mut prefixes: Vec<[u8; 8]> = manifest
        .scene_paths(dir.path())
        .iter()
        .map(|p| {
            let digest = Sha256::digest(std::fs::read(p).unwrap());
            digest[..8].try_into().unwrap()
        })
        .collect();
    prefixes.sort();
    prefixes.dedup();
    assert_eq!(prefixes.len(), 8);
}

#[test]
fn regeneration_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_dataset(2, &SceneSpec::default(), 5, a.path()).unwrap();
    generate_dataset(2, &SceneSpec::default(), 5, b.path()).unwrap();
    for name in ["scene_0000.txt", "scene_0001.txt", "manifest.json"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
    }
}
