//! Labeled point clouds, the scene text format, and room-to-block splitting.

mod blocks;

pub use blocks::{sample_block, split_blocks, Block, BlockConfig, BlockWindow, FEATURE_DIM};

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

pub const SCENE_MAGIC: &str = "asis-scene";
pub const SCENE_VERSION: &str = "v1";

/// Instance id of points that belong to no instance.
pub const UNLABELED: i64 = -1;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene I/O on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("scene line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid cloud: {0}")]
    Invalid(String),
}

/// A point cloud with per-point semantic classes and instance ids.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct LabeledCloud {
    pub positions: Vec<[f64; 3]>,
    /// RGB in `[0, 1]`.
    pub colors: Vec<[f64; 3]>,
    pub semantic_labels: Vec<usize>,
    /// `-1` marks unlabeled points.
    pub instance_ids: Vec<i64>,
    pub n_classes: usize,
}

impl LabeledCloud {
    pub fn with_classes(n_classes: usize) -> Self {
        Self { n_classes, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, position: [f64; 3], color: [f64; 3], semantic: usize, instance: i64) {
        self.positions.push(position);
        self.colors.push(color);
        self.semantic_labels.push(semantic);
        self.instance_ids.push(instance);
    }

    /// Checks label ranges and that every instance id maps to one class.
    pub fn validate(&self) -> Result<(), SceneError> {
        let n = self.len();
        if self.colors.len() != n || self.semantic_labels.len() != n || self.instance_ids.len() != n {
            return Err(SceneError::Invalid("per-point arrays differ in length".into()));
        }
        if self.n_classes == 0 {
            return Err(SceneError::Invalid("n_classes must be positive".into()));
        }
        let mut class_of = std::collections::HashMap::new();
        for i in 0..n {
            let s = self.semantic_labels[i];
            if s >= self.n_classes {
                return Err(SceneError::Invalid(format!(
                    "point {i}: semantic label {s} >= {}",
                    self.n_classes
                )));
            }
            let id = self.instance_ids[i];
            if id < UNLABELED {
                return Err(SceneError::Invalid(format!("point {i}: instance id {id} < -1")));
            }
            if id >= 0 {
                if let Some(prev) = class_of.insert(id, s) {
                    if prev != s {
                        return Err(SceneError::Invalid(format!(
                            "instance {id} carries classes {prev} and {s}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Axis-aligned bounding box `(min, max)`; `None` for an empty cloud.
    pub fn bounds(&self) -> Option<([f64; 3], [f64; 3])> {
        let first = *self.positions.first()?;
        let mut lo = first;
        let mut hi = first;
        for p in &self.positions {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        Some((lo, hi))
    }

    /// Number of distinct non-negative instance ids.
    pub fn instance_count(&self) -> usize {
        let mut ids: Vec<i64> = self.instance_ids.iter().copied().filter(|&i| i >= 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}

pub fn format_scene(cloud: &LabeledCloud) -> String {
    let mut out = String::with_capacity(64 * cloud.len() + 32);
    let _ = writeln!(out, "{SCENE_MAGIC} {SCENE_VERSION} {} {}", cloud.len(), cloud.n_classes);
    for i in 0..cloud.len() {
        let p = cloud.positions[i];
        let c = cloud.colors[i];
        let _ = writeln!(
            out,
            "{:?} {:?} {:?} {:?} {:?} {:?} {} {}",
            p[0], p[1], p[2], c[0], c[1], c[2], cloud.semantic_labels[i], cloud.instance_ids[i]
        );
    }
    out
}

pub fn parse_scene(text: &str) -> Result<LabeledCloud, SceneError> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((i, l)) => break (i + 1, l),
            None => return Err(SceneError::Parse { line: 1, msg: "missing header".into() }),
        }
    };
    let (hline, htext) = header;
    let fields: Vec<&str> = htext.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != SCENE_MAGIC || fields[1] != SCENE_VERSION {
        return Err(SceneError::Parse {
            line: hline,
            msg: format!("expected `{SCENE_MAGIC} {SCENE_VERSION} <n_points> <n_classes>`"),
        });
    }
    let n_points: usize = fields[2]
        .parse()
        .map_err(|_| SceneError::Parse { line: hline, msg: format!("bad point count `{}`", fields[2]) })?;
    let n_classes: usize = fields[3]
        .parse()
        .ok()
        .filter(|&c| c > 0)
        .ok_or_else(|| SceneError::Parse { line: hline, msg: format!("bad class count `{}`", fields[3]) })?;

    let mut cloud = LabeledCloud::with_classes(n_classes);
    cloud.positions.reserve(n_points);
    for (i, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let line = i + 1;
        let bad = |msg: String| SceneError::Parse { line, msg };
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 8 {
            return Err(bad(format!("expected 8 fields, got {}", f.len())));
        }
        let mut reals = [0.0f64; 6];
        for (k, r) in reals.iter_mut().enumerate() {
            *r = f[k].parse().map_err(|_| bad(format!("bad real `{}`", f[k])))?;
            if !r.is_finite() {
                return Err(bad(format!("non-finite value `{}`", f[k])));
            }
        }
        let sem: usize = f[6].parse().map_err(|_| bad(format!("bad semantic label `{}`", f[6])))?;
        if sem >= n_classes {
            return Err(bad(format!("semantic label {sem} out of range for {n_classes} classes")));
        }
        let inst: i64 = f[7].parse().map_err(|_| bad(format!("bad instance id `{}`", f[7])))?;
        if inst < UNLABELED {
            return Err(bad(format!("instance id {inst} below -1")));
        }
        cloud.push([reals[0], reals[1], reals[2]], [reals[3], reals[4], reals[5]], sem, inst);
    }
    if cloud.len() != n_points {
        return Err(SceneError::Parse {
            line: hline,
            msg: format!("header declares {n_points} points, body has {}", cloud.len()),
        });
    }
    Ok(cloud)
}

pub fn read_scene(path: &Path) -> Result<LabeledCloud, SceneError> {
    let text = fs::read_to_string(path)
        .map_err(|source| SceneError::Io { path: path.display().to_string(), source })?;
    parse_scene(&text)
}

pub fn write_scene(cloud: &LabeledCloud, path: &Path) -> Result<(), SceneError> {
    fs::write(path, format_scene(cloud))
        .map_err(|source| SceneError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_body_gives_empty_cloud() {
        let c = parse_scene("asis-scene v1 0 4\n").unwrap();
        assert!(c.is_empty());
        assert_eq!(c.n_classes, 4);
    }

    #[test]
    fn single_point_round_trips() {
        let mut c = LabeledCloud::with_classes(3);
        c.push([0.1, -2.0, 1e-7], [0.2, 0.4, 1.0], 2, 5);
        let text = format_scene(&c);
        assert_eq!(parse_scene(&text).unwrap(), c);
    }

    #[test]
    fn out_of_range_label_names_the_line() {
        let text = "asis-scene v1 2 2\n0 0 0 0 0 0 1 0\n0 0 0 0 0 0 2 0\n";
        match parse_scene(text) {
            Err(SceneError::Parse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("semantic label 2"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_rows_rejected() {
        assert!(parse_scene("asis-scene v1 1 2\n0 0 0 0 0 0 1\n").is_err());
        assert!(parse_scene("asis-scene v1 1 2\n0 0 x 0 0 0 1 0\n").is_err());
        assert!(parse_scene("asis-scene v1 2 2\n0 0 0 0 0 0 1 0\n").is_err());
        assert!(parse_scene("asis-scene v2 0 2\n").is_err());
        assert!(parse_scene("asis-scene v1 1 2\n0 0 0 0 0 0 1 -2\n").is_err());
    }

    #[test]
    fn validate_catches_mixed_class_instances() {
        let mut c = LabeledCloud::with_classes(2);
        c.push([0.0; 3], [0.0; 3], 0, 1);
        c.push([1.0; 3], [0.0; 3], 1, 1);
        assert!(c.validate().is_err());
        c.instance_ids[1] = UNLABELED;
        assert!(c.validate().is_ok());
    }

    proptest! {
        #[test]
        fn format_then_parse_is_lossless(
            pts in prop::collection::vec(
                (prop::array::uniform3(-100.0f64..100.0), prop::array::uniform3(0.0f64..=1.0), 0usize..5, -1i64..20),
                0..30)
        ) {
            let mut c = LabeledCloud::with_classes(5);
            for (p, col, s, i) in pts {
                c.push(p, col, s, i);
            }
            prop_assert_eq!(parse_scene(&format_scene(&c)).unwrap(), c);
        }
    }
}
