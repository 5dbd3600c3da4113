//! Voxel-overlap merging of per-block instances into scene instances.
//!
//! Blocks are visited in ascending origin order. A voxel grid over the
//! scene remembers, per semantic class, which global instance first claimed
//! each voxel. A block instance joins the global instance of the same class
//! that owns the largest share of its voxels when that share reaches the
//! overlap threshold, and mints a new global id otherwise. Each point then
//! takes the label given by the covering block whose center is nearest.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{canonical_labels, mode_of, GroupingError, InstanceSegmentation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeConfig {
    pub voxel_size: f64,
    pub overlap_threshold: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self { voxel_size: 0.05, overlap_threshold: 0.3 }
    }
}

/// Instances found inside one block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockInstances {
    pub origin: [f64; 2],
    pub size: f64,
    /// Scene point indices covered by the block.
    pub indices: Vec<usize>,
    /// Aligned with `indices`.
    pub segmentation: InstanceSegmentation,
}

impl BlockInstances {
    fn center(&self) -> [f64; 2] {
        [self.origin[0] + 0.5 * self.size, self.origin[1] + 0.5 * self.size]
    }
}

type Voxel = (i64, i64, i64);

pub fn block_merge(
    positions: &[[f64; 3]],
    blocks: &[BlockInstances],
    cfg: &MergeConfig,
) -> Result<InstanceSegmentation, GroupingError> {
    if !(cfg.voxel_size > 0.0) {
        return Err(GroupingError::InvalidBlock(format!("voxel size {}", cfg.voxel_size)));
    }
    let n = positions.len();
    for (b, blk) in blocks.iter().enumerate() {
        let seg = &blk.segmentation;
        if seg.instance_ids.len() != blk.indices.len() {
            return Err(GroupingError::InvalidBlock(format!(
                "block {b}: {} indices but {} instance ids",
                blk.indices.len(),
                seg.instance_ids.len()
            )));
        }
        if let Some(&i) = blk.indices.iter().find(|&&i| i >= n) {
            return Err(GroupingError::InvalidBlock(format!("block {b}: index {i} of {n}")));
        }
        if let Some(&k) = seg.instance_ids.iter().find(|&&k| k >= seg.classes.len()) {
            return Err(GroupingError::InvalidBlock(format!("block {b}: instance {k} has no class")));
        }
    }
    if n == 0 {
        return Ok(InstanceSegmentation { instance_ids: Vec::new(), classes: Vec::new() });
    }

    let mut lo = positions[0];
    for p in positions {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
        }
    }
    let voxel_of = |p: &[f64; 3]| -> Voxel {
        let q = |a: usize| ((p[a] - lo[a]) / cfg.voxel_size).floor() as i64;
        (q(0), q(1), q(2))
    };

    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.sort_by(|&a, &b| {
        let (oa, ob) = (blocks[a].origin, blocks[b].origin);
        oa[0].total_cmp(&ob[0]).then(oa[1].total_cmp(&ob[1]))
    });

    let mut owner: HashMap<(Voxel, usize), usize> = HashMap::new();
    let mut next_gid = 0usize;
    // global id of every (block, local instance)
    let mut gid_of: Vec<Vec<usize>> = vec![Vec::new(); blocks.len()];

    for &b in &order {
        let blk = &blocks[b];
        let seg = &blk.segmentation;
        let k = seg.classes.len();
        let mut voxels: Vec<Vec<Voxel>> = vec![Vec::new(); k];
        for (&pi, &local) in blk.indices.iter().zip(&seg.instance_ids) {
            voxels[local].push(voxel_of(&positions[pi]));
        }
        for v in &mut voxels {
            v.sort_unstable();
            v.dedup();
        }
        let mut assigned = Vec::with_capacity(k);
        for (local, vox) in voxels.iter().enumerate() {
            let class = seg.classes[local];
            if vox.is_empty() {
                assigned.push(usize::MAX);
                continue;
            }
            let mut counts: HashMap<usize, usize> = HashMap::new();
            for v in vox {
                if let Some(&g) = owner.get(&(*v, class)) {
                    *counts.entry(g).or_insert(0) += 1;
                }
            }
            let best = counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)));
            let gid = match best {
                Some((g, c)) if c as f64 / vox.len() as f64 >= cfg.overlap_threshold => g,
                _ => {
                    next_gid += 1;
                    next_gid - 1
                }
            };
            assigned.push(gid);
        }
        for (local, vox) in voxels.iter().enumerate() {
            let class = seg.classes[local];
            for v in vox {
                owner.entry((*v, class)).or_insert(assigned[local]);
            }
        }
        gid_of[b] = assigned;
    }

    // (distance², global id, class) of the nearest-center covering block
    let mut vote: Vec<Option<(f64, usize, usize)>> = vec![None; n];
    for &b in &order {
        let blk = &blocks[b];
        let c = blk.center();
        for (&pi, &local) in blk.indices.iter().zip(&blk.segmentation.instance_ids) {
            let p = positions[pi];
            let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
            if vote[pi].map_or(true, |(best, _, _)| d2 < best) {
                vote[pi] = Some((d2, gid_of[b][local], blk.segmentation.classes[local]));
            }
        }
    }
    let mut gids = Vec::with_capacity(n);
    let mut point_classes = Vec::with_capacity(n);
    for (i, v) in vote.iter().enumerate() {
        let (_, g, c) = v.ok_or(GroupingError::Uncovered(i))?;
        gids.push(g);
        point_classes.push(c);
    }
    let instance_ids = canonical_labels(&gids);
    let count = instance_ids.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (&id, &c) in instance_ids.iter().zip(&point_classes) {
        members[id].push(c);
    }
    let classes = members.into_iter().map(|m| mode_of(m).expect("non-empty")).collect();
    Ok(InstanceSegmentation { instance_ids, classes })
}
