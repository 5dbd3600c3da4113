use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LabeledCloud, SceneError};
use crate::tensor::Tensor;

/// xyz (block-centered in x and y), rgb, room-normalized xyz.
pub const FEATURE_DIM: usize = 9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockConfig {
    /// Side of the square ground-plane window.
    pub block_size: f64,
    pub stride: f64,
    /// Windows with fewer points are discarded.
    pub min_points: usize,
    /// Points per sampled block (4096 in the original protocol).
    pub sample_size: usize,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self { block_size: 1.0, stride: 0.5, min_points: 100, sample_size: 512 }
    }
}

/// One ground-plane window and the cloud points inside it.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockWindow {
    pub origin: [f64; 2],
    pub size: f64,
    pub indices: Vec<usize>,
}

impl BlockWindow {
    pub fn center(&self) -> [f64; 2] {
        [self.origin[0] + 0.5 * self.size, self.origin[1] + 0.5 * self.size]
    }
}

/// A fixed-size sample of one window, ready for the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    /// `S × 9` feature matrix.
    pub features: Tensor,
    /// Row `r` of `features` came from cloud point `source_indices[r]`.
    pub source_indices: Vec<usize>,
    pub origin: [f64; 2],
    pub size: f64,
}

fn window_count(extent: f64, size: f64, stride: f64) -> usize {
    if extent <= size {
        1
    } else {
        ((extent - size) / stride - 1e-9).ceil() as usize + 1
    }
}

/// Tiles the xy bounding box of `cloud` with overlapping square windows.
///
/// Windows are half-open `[x0, x0 + size)` except the last along each axis,
/// which is closed, so every point falls in at least one window. Windows
/// are returned in ascending origin order (x major, then y).
pub fn split_blocks(
    cloud: &LabeledCloud,
    block_size: f64,
    stride: f64,
    min_points: usize,
) -> Result<Vec<BlockWindow>, SceneError> {
    if !(block_size > 0.0) || !(stride > 0.0) || stride > block_size {
        return Err(SceneError::Invalid(format!(
            "need block_size > 0 and 0 < stride <= block_size, got {block_size} / {stride}"
        )));
    }
    let Some((lo, hi)) = cloud.bounds() else { return Ok(Vec::new()) };
    let nx = window_count(hi[0] - lo[0], block_size, stride);
    let ny = window_count(hi[1] - lo[1], block_size, stride);

    let mut windows = Vec::new();
    for ix in 0..nx {
        let x0 = lo[0] + ix as f64 * stride;
        let last_x = ix + 1 == nx;
        for iy in 0..ny {
            let y0 = lo[1] + iy as f64 * stride;
            let last_y = iy + 1 == ny;
            let indices: Vec<usize> = cloud
                .positions
                .iter()
                .enumerate()
                .filter(|(_, p)| {
                    inside(p[0], x0, block_size, last_x) && inside(p[1], y0, block_size, last_y)
                })
                .map(|(i, _)| i)
                .collect();
            if !indices.is_empty() && indices.len() >= min_points {
                windows.push(BlockWindow { origin: [x0, y0], size: block_size, indices });
            }
        }
    }
    Ok(windows)
}

fn inside(v: f64, start: f64, size: f64, closed: bool) -> bool {
    v >= start && (v < start + size || (closed && v <= start + size))
}

/// Samples `sample_size` points from a window and assembles their features.
///
/// Windows holding at least `sample_size` points are sampled without
/// replacement. Smaller windows keep every point once and are padded with
/// random repeats.
pub fn sample_block(
    cloud: &LabeledCloud,
    window: &BlockWindow,
    sample_size: usize,
    seed: u64,
) -> Result<Block, SceneError> {
    if window.indices.is_empty() {
        return Err(SceneError::Invalid("cannot sample an empty block".into()));
    }
    if sample_size == 0 {
        return Err(SceneError::Invalid("sample size must be positive".into()));
    }
    let n = cloud.len();
    if let Some(&bad) = window.indices.iter().find(|&&i| i >= n) {
        return Err(SceneError::Invalid(format!("index {bad} outside cloud of {n} points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = window.indices.len();
    let chosen: Vec<usize> = if m >= sample_size {
        rand::seq::index::sample(&mut rng, m, sample_size)
            .into_iter()
            .map(|k| window.indices[k])
            .collect()
    } else {
        let mut v = window.indices.clone();
        while v.len() < sample_size {
            v.push(window.indices[rng.gen_range(0..m)]);
        }
        v.shuffle(&mut rng);
        v
    };

    let (lo, hi) = cloud.bounds().expect("non-empty window implies non-empty cloud");
    let extent: Vec<f64> = (0..3).map(|a| hi[a] - lo[a]).collect();
    let center = window.center();
    let mut data = Vec::with_capacity(sample_size * FEATURE_DIM);
    for &i in &chosen {
        let p = cloud.positions[i];
        let c = cloud.colors[i];
        data.extend_from_slice(&[p[0] - center[0], p[1] - center[1], p[2]]);
        data.extend_from_slice(&c);
        for a in 0..3 {
            let t = if extent[a] > 0.0 { (p[a] - lo[a]) / extent[a] } else { 0.5 };
            data.push(t.clamp(0.0, 1.0));
        }
    }
    let features = Tensor::new(vec![sample_size, FEATURE_DIM], data)
        .map_err(|e| SceneError::Invalid(e.to_string()))?;
    Ok(Block { features, source_indices: chosen, origin: window.origin, size: window.size })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_cloud(coords: &[f64]) -> LabeledCloud {
        let mut c = LabeledCloud::with_classes(1);
        for &x in coords {
            for &y in coords {
                c.push([x, y, 0.0], [0.5; 3], 0, 0);
            }
        }
        c
    }

    #[test]
    fn one_window_when_everything_fits() {
        let c = grid_cloud(&[0.1, 0.5, 0.9]);
        let w = split_blocks(&c, 1.0, 1.0, 1).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].indices, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn half_stride_membership_matches_brute_force() {
        // 3x3 grid at spacing 1 spans [0,2]^2; windows of side 1 at stride 0.5.
        let c = grid_cloud(&[0.0, 1.0, 2.0]);
        let w = split_blocks(&c, 1.0, 0.5, 1).unwrap();
        // brute force: origins {0, .5, 1} per axis, last closed
        let origins = [0.0, 0.5, 1.0];
        let mut expected_counts = vec![0usize; 9];
        for (ix, &x0) in origins.iter().enumerate() {
            for (iy, &y0) in origins.iter().enumerate() {
                for (k, p) in c.positions.iter().enumerate() {
                    let inx = p[0] >= x0 && (p[0] < x0 + 1.0 || (ix == 2 && p[0] <= x0 + 1.0));
                    let iny = p[1] >= y0 && (p[1] < y0 + 1.0 || (iy == 2 && p[1] <= y0 + 1.0));
                    if inx && iny {
                        expected_counts[k] += 1;
                    }
                }
            }
        }
        let mut counts = vec![0usize; 9];
        for win in &w {
            for &i in &win.indices {
                counts[i] += 1;
            }
        }
        assert_eq!(counts, expected_counts);
        // the interior point (1,1) sits in 4 windows
        assert_eq!(counts[4], 4);
        assert!(counts.iter().all(|&k| (1..=4).contains(&k)));
    }

    #[test]
    fn min_points_above_total_gives_nothing() {
        let c = grid_cloud(&[0.0, 0.5]);
        assert!(split_blocks(&c, 1.0, 0.5, 5).unwrap().is_empty());
        assert!(split_blocks(&LabeledCloud::with_classes(1), 1.0, 0.5, 1).unwrap().is_empty());
        assert!(split_blocks(&c, 1.0, 1.5, 1).is_err());
    }

    #[test]
    fn exact_size_sample_is_a_permutation() {
        let c = grid_cloud(&[0.0, 0.3, 0.6]);
        let w = &split_blocks(&c, 1.0, 1.0, 1).unwrap()[0];
        let b = sample_block(&c, w, 9, 3).unwrap();
        let mut s = b.source_indices.clone();
        s.sort_unstable();
        assert_eq!(s, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn single_index_is_repeated() {
        let mut c = LabeledCloud::with_classes(1);
        c.push([1.0, 1.0, 1.0], [0.0; 3], 0, 0);
        let w = BlockWindow { origin: [0.0, 0.0], size: 1.0, indices: vec![0] };
        let b = sample_block(&c, &w, 4, 0).unwrap();
        assert_eq!(b.source_indices, vec![0; 4]);
        let empty = BlockWindow { indices: vec![], ..w };
        assert!(sample_block(&c, &empty, 4, 0).is_err());
    }

    #[test]
    fn room_normalization() {
        let mut c = LabeledCloud::with_classes(1);
        c.push([0.0, 0.0, 0.0], [0.0; 3], 0, 0);
        c.push([2.0, 2.0, 2.0], [0.0; 3], 0, 0);
        c.push([1.0, 1.0, 1.0], [0.1, 0.2, 0.3], 0, 0);
        let w = BlockWindow { origin: [0.5, 0.5], size: 1.0, indices: vec![2] };
        let b = sample_block(&c, &w, 1, 0).unwrap();
        assert_eq!(b.features.row(0), &[0.0, 0.0, 1.0, 0.1, 0.2, 0.3, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let c = grid_cloud(&[0.0, 0.1, 0.2, 0.3, 0.4, 0.5]);
        let w = &split_blocks(&c, 1.0, 1.0, 1).unwrap()[0];
        let a = sample_block(&c, w, 10, 42).unwrap();
        let b = sample_block(&c, w, 10, 42).unwrap();
        assert_eq!(a, b);
        let d = sample_block(&c, w, 10, 43).unwrap();
        assert_ne!(a.source_indices, d.source_indices);
    }
}
