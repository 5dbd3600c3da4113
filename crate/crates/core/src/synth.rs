//! Seeded synthetic rooms: a floor, walls, box furniture on the floor and
//! thin panels hung a short distance in front of walls.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{format_scene, LabeledCloud, SceneError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Primitive {
    Floor,
    Wall,
    Box,
    Panel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub name: String,
    pub primitive: Primitive,
    /// Inclusive instance count range.
    pub count: [usize; 2],
    /// Base colour; each instance jitters it by up to `color_jitter`.
    pub palette: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub room_extent: [f64; 3],
    /// Class index is the position in this list.
    pub classes: Vec<ClassSpec>,
    /// Inclusive range of points drawn per instance.
    pub points_per_instance: [usize; 2],
    pub position_noise: f64,
    pub color_noise: f64,
    pub color_jitter: f64,
    /// Distance of panels from their wall.
    pub panel_offset: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        let class = |name: &str, primitive, count, palette| ClassSpec { name: name.into(), primitive, count, palette };
        Self {
            room_extent: [2.0, 2.0, 1.5],
            classes: vec![
                class("floor", Primitive::Floor, [1, 1], [0.55, 0.42, 0.30]),
                class("wall", Primitive::Wall, [2, 3], [0.82, 0.80, 0.76]),
                class("box", Primitive::Box, [1, 2], [0.20, 0.45, 0.70]),
                class("panel", Primitive::Panel, [1, 2], [0.15, 0.15, 0.18]),
            ],
            points_per_instance: [250, 500],
            position_noise: 0.005,
            color_noise: 0.03,
            color_jitter: 0.08,
            panel_offset: 0.02,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn max_instances(&self) -> usize {
        self.classes.iter().map(|c| c.count[1]).sum()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Spec(m));
        if self.room_extent.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return bad(format!("room extent {:?} must be positive", self.room_extent));
        }
        if self.classes.is_empty() {
            return bad("no classes".into());
        }
        let [lo, hi] = self.points_per_instance;
        if lo == 0 || lo > hi {
            return bad(format!("points per instance range {lo}..={hi}"));
        }
        for (name, v) in [("position", self.position_noise), ("color", self.color_noise), ("jitter", self.color_jitter)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} noise {v}"));
            }
        }
        if !(self.panel_offset >= 0.0) {
            return bad(format!("panel offset {}", self.panel_offset));
        }
        let mut walls = 0;
        for c in &self.classes {
            if c.count[0] > c.count[1] {
                return bad(format!("class {}: count range {:?}", c.name, c.count));
            }
            match c.primitive {
                Primitive::Floor if c.count[1] > 1 => return bad(format!("class {}: at most one floor", c.name)),
                Primitive::Wall => walls += c.count[1],
                _ => {}
            }
        }
        if walls > 4 {
            return bad(format!("{walls} walls requested, a room has 4"));
        }
        let [x, y, _] = self.room_extent;
        let boxes = self.classes.iter().any(|c| c.primitive == Primitive::Box && c.count[1] > 0);
        if boxes && (x < 0.8 || y < 0.8) {
            return bad("room too small for box furniture".into());
        }
        Ok(())
    }
}

struct Builder<'a> {
    spec: &'a SceneSpec,
    rng: ChaCha8Rng,
    cloud: LabeledCloud,
    next_id: i64,
}

/// An axis-aligned rectangle: `origin + u·a + v·b` for `u, v ∈ [0, 1]`.
#[derive(Clone, Copy)]
struct Quad {
    origin: [f64; 3],
    a: [f64; 3],
    b: [f64; 3],
}

impl Quad {
    fn area(&self) -> f64 {
        let n = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        n(self.a) * n(self.b)
    }
}

impl Builder<'_> {
    fn instance_color(&mut self, palette: [f64; 3]) -> [f64; 3] {
        let j = self.spec.color_jitter;
        palette.map(|c| (c + if j > 0.0 { self.rng.gen_range(-j..=j) } else { 0.0 }).clamp(0.0, 1.0))
    }

    fn emit(&mut self, quads: &[Quad], class: usize) {
        let [lo, hi] = self.spec.points_per_instance;
        let n = self.rng.gen_range(lo..=hi);
        let color = self.instance_color(self.spec.classes[class].palette);
        let pos_noise = Normal::new(0.0, self.spec.position_noise).expect("validated");
        let col_noise = Normal::new(0.0, self.spec.color_noise).expect("validated");
        let areas: Vec<f64> = quads.iter().map(Quad::area).collect();
        let total: f64 = areas.iter().sum();
        let id = self.next_id;
        self.next_id += 1;
        for _ in 0..n {
            let mut pick = self.rng.gen::<f64>() * total;
            let mut q = quads[quads.len() - 1];
            for (quad, &area) in quads.iter().zip(&areas) {
                if pick < area {
                    q = *quad;
                    break;
                }
                pick -= area;
            }
            let (u, v): (f64, f64) = (self.rng.gen(), self.rng.gen());
            let mut p = [0.0; 3];
            for k in 0..3 {
                p[k] = q.origin[k] + u * q.a[k] + v * q.b[k] + pos_noise.sample(&mut self.rng);
            }
            let c = color.map(|c| (c + col_noise.sample(&mut self.rng)).clamp(0.0, 1.0));
            self.cloud.push(p, c, class, id);
        }
    }
}

/// Wall `k`: 0 at x = 0, 1 at x = X, 2 at y = 0, 3 at y = Y. Returns the
/// wall quad and the unit normal pointing into the room.
fn wall_geometry(k: usize, [x, y, z]: [f64; 3]) -> (Quad, [f64; 3]) {
    match k {
        0 => (Quad { origin: [0.0, 0.0, 0.0], a: [0.0, y, 0.0], b: [0.0, 0.0, z] }, [1.0, 0.0, 0.0]),
        1 => (Quad { origin: [x, 0.0, 0.0], a: [0.0, y, 0.0], b: [0.0, 0.0, z] }, [-1.0, 0.0, 0.0]),
        2 => (Quad { origin: [0.0, 0.0, 0.0], a: [x, 0.0, 0.0], b: [0.0, 0.0, z] }, [0.0, 1.0, 0.0]),
        _ => (Quad { origin: [0.0, y, 0.0], a: [x, 0.0, 0.0], b: [0.0, 0.0, z] }, [0.0, -1.0, 0.0]),
    }
}

/// Five visible faces of a box standing on the floor.
fn box_faces(lo: [f64; 3], d: [f64; 3]) -> Vec<Quad> {
    let [x, y, z] = lo;
    let [dx, dy, dz] = d;
    vec![
        Quad { origin: [x, y, z + dz], a: [dx, 0.0, 0.0], b: [0.0, dy, 0.0] },
        Quad { origin: [x, y, z], a: [dx, 0.0, 0.0], b: [0.0, 0.0, dz] },
        Quad { origin: [x, y + dy, z], a: [dx, 0.0, 0.0], b: [0.0, 0.0, dz] },
        Quad { origin: [x, y, z], a: [0.0, dy, 0.0], b: [0.0, 0.0, dz] },
        Quad { origin: [x + dx, y, z], a: [0.0, dy, 0.0], b: [0.0, 0.0, dz] },
    ]
}

fn overlaps_xy(a: &([f64; 3], [f64; 3]), b: &([f64; 3], [f64; 3]), gap: f64) -> bool {
    (0..2).all(|k| a.0[k] < b.0[k] + b.1[k] + gap && b.0[k] < a.0[k] + a.1[k] + gap)
}

/// Generates one labeled room; `spec.seed` determines the output.
pub fn generate_scene(spec: &SceneSpec) -> Result<LabeledCloud, SynthError> {
    spec.validate()?;
    let mut b = Builder {
        spec,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        cloud: LabeledCloud::with_classes(spec.n_classes()),
        next_id: 0,
    };
    let ext = spec.room_extent;

    let counts: Vec<usize> = spec.classes.iter().map(|c| b.rng.gen_range(c.count[0]..=c.count[1])).collect();
    let mut free_walls: Vec<usize> = (0..4).collect();
    let mut walls: Vec<usize> = Vec::new();
    for (class, c) in spec.classes.iter().enumerate() {
        match c.primitive {
            Primitive::Floor => {
                for _ in 0..counts[class] {
                    let q = Quad { origin: [0.0; 3], a: [ext[0], 0.0, 0.0], b: [0.0, ext[1], 0.0] };
                    b.emit(&[q], class);
                }
            }
            Primitive::Wall => {
                for _ in 0..counts[class] {
                    let k = free_walls.remove(b.rng.gen_range(0..free_walls.len()));
                    walls.push(k);
                    b.emit(&[wall_geometry(k, ext).0], class);
                }
            }
            _ => {}
        }
    }

    let mut placed: Vec<([f64; 3], [f64; 3])> = Vec::new();
    for (class, c) in spec.classes.iter().enumerate() {
        if c.primitive != Primitive::Box {
            continue;
        }
        for _ in 0..counts[class] {
            let margin = 0.15;
            let mut chosen = None;
            for _ in 0..32 {
                let d = [
                    b.rng.gen_range(0.25..0.5),
                    b.rng.gen_range(0.25..0.5),
                    b.rng.gen_range(0.3..0.7f64).min(ext[2]),
                ];
                let lo = [
                    b.rng.gen_range(margin..(ext[0] - margin - d[0]).max(margin + 1e-9)),
                    b.rng.gen_range(margin..(ext[1] - margin - d[1]).max(margin + 1e-9)),
                    0.0,
                ];
                let cand = (lo, d);
                if !placed.iter().any(|p| overlaps_xy(p, &cand, 0.1)) {
                    chosen = Some(cand);
                    break;
                }
            }
            if let Some(cand) = chosen {
                placed.push(cand);
                b.emit(&box_faces(cand.0, cand.1), class);
            }
        }
    }

    for (class, c) in spec.classes.iter().enumerate() {
        if c.primitive != Primitive::Panel || walls.is_empty() {
            continue;
        }
        let mut used: Vec<(usize, f64, f64)> = Vec::new();
        for _ in 0..counts[class] {
            for _ in 0..32 {
                let w = walls[b.rng.gen_range(0..walls.len())];
                let (q, normal) = wall_geometry(w, ext);
                let along = if q.a[0] != 0.0 { ext[0] } else { ext[1] };
                let width = b.rng.gen_range(0.3..0.6f64).min(0.8 * along);
                let height = b.rng.gen_range(0.25..0.5f64).min(0.5 * ext[2]);
                let start = b.rng.gen_range(0.1 * along..(0.9 * along - width).max(0.1 * along + 1e-9));
                if used.iter().any(|&(uw, s, e)| uw == w && start < e + 0.1 && s < start + width + 0.1) {
                    continue;
                }
                used.push((w, start, start + width));
                let bottom = b.rng.gen_range(0.3 * ext[2]..(ext[2] - height - 0.05).max(0.3 * ext[2] + 1e-9));
                let dir = if q.a[0] != 0.0 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
                let mut origin = q.origin;
                for k in 0..3 {
                    origin[k] += dir[k] * start + normal[k] * spec.panel_offset;
                }
                origin[2] = bottom;
                let panel = Quad { origin, a: dir.map(|v| v * width), b: [0.0, 0.0, height] };
                b.emit(&[panel], class);
                break;
            }
        }
    }
    Ok(b.cloud)
}

/// One scene of a generated dataset, as recorded in `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub seed: u64,
    pub points: usize,
    pub instances: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub n_classes: usize,
    pub class_names: Vec<String>,
    pub spec: SceneSpec,
    pub scenes: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self, SynthError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|source| SynthError::Io { path: path.display().to_string(), source })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn scene_paths(&self, dir: &Path) -> Vec<PathBuf> {
        self.scenes.iter().map(|s| dir.join(&s.file)).collect()
    }
}

/// Seed of scene `index` in a dataset seeded with `seed`.
pub fn scene_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Writes `n_scenes` scene files and a manifest into `dir`.
pub fn generate_dataset(n_scenes: usize, template: &SceneSpec, seed: u64, dir: &Path) -> Result<Manifest, SynthError> {
    if n_scenes == 0 {
        return Err(SynthError::Spec("need at least one scene".into()));
    }
    template.validate()?;
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| SynthError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut scenes = Vec::with_capacity(n_scenes);
    for i in 0..n_scenes {
        let spec = SceneSpec { seed: scene_seed(seed, i), ..template.clone() };
        let cloud = generate_scene(&spec)?;
        let file = format!("scene_{i:04}.txt");
        let path = dir.join(&file);
        fs::write(&path, format_scene(&cloud)).map_err(io(&path))?;
        scenes.push(ManifestEntry { file, seed: spec.seed, points: cloud.len(), instances: cloud.instance_count() });
    }
    let manifest = Manifest {
        seed,
        n_classes: template.n_classes(),
        class_names: template.classes.iter().map(|c| c.name.clone()).collect(),
        spec: template.clone(),
        scenes,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(io(&path))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn only(primitive: Primitive) -> SceneSpec {
        let mut spec = SceneSpec::default();
        for c in &mut spec.classes {
            c.count = if c.primitive == primitive { [1, 1] } else { [0, 0] };
        }
        spec
    }

    #[test]
    fn lone_floor() {
        let cloud = generate_scene(&only(Primitive::Floor)).unwrap();
        assert!(!cloud.is_empty());
        assert!(cloud.instance_ids.iter().all(|&i| i == 0));
        assert!(cloud.semantic_labels.iter().all(|&s| s == 0));
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SceneSpec { seed: 11, ..SceneSpec::default() };
        assert_eq!(generate_scene(&spec).unwrap(), generate_scene(&spec).unwrap());
        let other = SceneSpec { seed: 12, ..SceneSpec::default() };
        assert_ne!(generate_scene(&spec).unwrap(), generate_scene(&other).unwrap());
    }

    #[test]
    fn default_scene_respects_limits() {
        let spec = SceneSpec::default();
        assert!(spec.max_instances() <= 8);
        for seed in 0..20 {
            let cloud = generate_scene(&SceneSpec { seed, ..spec.clone() }).unwrap();
            cloud.validate().unwrap();
            assert!(cloud.instance_count() <= 8);
            let (lo, hi) = cloud.bounds().unwrap();
            for k in 0..3 {
                assert!(lo[k] > -0.05 && hi[k] < spec.room_extent[k] + 0.05);
            }
        }
    }

    #[test]
    fn panel_sits_in_front_of_wall() {
        let mut spec = SceneSpec { position_noise: 0.0, ..SceneSpec::default() };
        for c in &mut spec.classes {
            c.count = match c.primitive {
                Primitive::Wall | Primitive::Panel => [1, 1],
                _ => [0, 0],
            };
        }
        let cloud = generate_scene(&spec).unwrap();
        assert_eq!(cloud.instance_count(), 2);
        let bbox = |id: i64| {
            let mut lo = [f64::MAX; 3];
            let mut hi = [f64::MIN; 3];
            for (p, _) in cloud.positions.iter().zip(&cloud.instance_ids).filter(|e| *e.1 == id) {
                for k in 0..3 {
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                }
            }
            (lo, hi)
        };
        let (wall, panel) = (bbox(0), bbox(1));
        // boxes grown by the offset intersect
        let pad = spec.panel_offset + 1e-9;
        assert!((0..3).all(|k| wall.0[k] - pad <= panel.1[k] && panel.0[k] - pad <= wall.1[k]));
        let class_of = |id| cloud.semantic_labels[cloud.instance_ids.iter().position(|&i| i == id).unwrap()];
        assert_ne!(class_of(0), class_of(1));
    }

    #[test]
    fn degenerate_specs_rejected() {
        let mut spec = SceneSpec::default();
        spec.room_extent[2] = 0.0;
        assert!(generate_scene(&spec).is_err());
        let mut spec = SceneSpec::default();
        spec.classes[1].count = [5, 5];
        assert!(spec.validate().is_err());
        assert!(generate_dataset(0, &SceneSpec::default(), 0, Path::new("/nonexistent")).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = SceneSpec::default();
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<SceneSpec>(&text).unwrap(), spec);
        assert!(serde_json::from_str::<SceneSpec>(r#"{"bogus": 1}"#).is_err());
    }
}
