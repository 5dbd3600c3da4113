use crate::cloud::{sample_block, split_blocks, BlockConfig, BlockWindow, LabeledCloud};
use crate::config::AsisConfig;
use crate::grouping::{assign_instance_classes, block_merge, mean_shift, BlockInstances, InstanceSegmentation, MeanShiftConfig, MergeConfig};
use crate::metrics::{Evaluator, SegMetrics};
use crate::network::{ForwardOutputs, Mode, NetworkParams};
use crate::synth::scene_seed;
use crate::tensor::Tensor;

use super::TrainError;

/// Per-block cluster ids and semantic classes, aligned with the window's
/// point indices.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockLabels {
    pub clusters: Vec<usize>,
    pub semantic: Vec<usize>,
}

/// Scene-level prediction: one semantic class and one instance id per point.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSegmentation {
    pub semantic: Vec<usize>,
    pub instances: InstanceSegmentation,
}

impl SceneSegmentation {
    /// `cloud` with its labels replaced by the prediction.
    pub fn to_cloud(&self, cloud: &LabeledCloud) -> LabeledCloud {
        LabeledCloud {
            positions: cloud.positions.clone(),
            colors: cloud.colors.clone(),
            semantic_labels: self.semantic.clone(),
            instance_ids: self.instances.instance_ids.iter().map(|&i| i as i64).collect(),
            n_classes: cloud.n_classes,
        }
    }
}

fn sq_dist2(p: &[f64; 3], c: [f64; 2]) -> f64 {
    (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)
}

/// Windows used at inference. Windows below `min_points` are dropped and
/// their points not covered elsewhere join the kept window with the
/// nearest center.
pub fn inference_windows(cloud: &LabeledCloud, blocks: &BlockConfig) -> Result<Vec<BlockWindow>, TrainError> {
    let all = split_blocks(cloud, blocks.block_size, blocks.stride, 1)?;
    if all.is_empty() {
        return Ok(all);
    }
    let largest = all.iter().map(|w| w.indices.len()).max().unwrap_or(0);
    let threshold = blocks.min_points.min(largest);
    let mut kept: Vec<BlockWindow> = all.iter().filter(|w| w.indices.len() >= threshold).cloned().collect();
    let mut covered = vec![false; cloud.len()];
    for w in &kept {
        for &i in &w.indices {
            covered[i] = true;
        }
    }
    let centers: Vec<[f64; 2]> = kept.iter().map(BlockWindow::center).collect();
    for (i, p) in cloud.positions.iter().enumerate().filter(|&(i, _)| !covered[i]) {
        let best = (0..centers.len())
            .min_by(|&a, &b| sq_dist2(p, centers[a]).total_cmp(&sq_dist2(p, centers[b])))
            .expect("at least one kept window");
        kept[best].indices.push(i);
    }
    Ok(kept)
}

/// Votes classes within each block, merges blocks, and broadcasts each
/// instance's class to its points.
pub fn merge_block_labels(
    cloud: &LabeledCloud,
    windows: &[BlockWindow],
    labels: Vec<BlockLabels>,
    merge: &MergeConfig,
) -> Result<SceneSegmentation, TrainError> {
    let mut blocks = Vec::with_capacity(windows.len());
    for (w, l) in windows.iter().zip(labels) {
        blocks.push(BlockInstances {
            origin: w.origin,
            size: w.size,
            indices: w.indices.clone(),
            segmentation: assign_instance_classes(&l.clusters, &l.semantic)?,
        });
    }
    let instances = block_merge(&cloud.positions, &blocks, merge)?;
    Ok(SceneSegmentation { semantic: instances.point_classes(), instances })
}

/// Segments a scene with per-block labels from `label_block(index, window)`.
pub fn segment_scene<F>(
    cloud: &LabeledCloud,
    blocks: &BlockConfig,
    merge: &MergeConfig,
    mut label_block: F,
) -> Result<SceneSegmentation, TrainError>
where
    F: FnMut(usize, &BlockWindow) -> Result<BlockLabels, TrainError>,
{
    let windows = inference_windows(cloud, blocks)?;
    let labels = windows.iter().enumerate().map(|(i, w)| label_block(i, w)).collect::<Result<Vec<_>, _>>()?;
    merge_block_labels(cloud, &windows, labels, merge)
}

/// Ground-truth stand-in for the network: one-hot instance indicators
/// scaled to ten bandwidths as embeddings, and the true semantic classes.
pub fn oracle_block_labels(cloud: &LabeledCloud, window: &BlockWindow, ms: &MeanShiftConfig) -> BlockLabels {
    let ids: Vec<i64> = window.indices.iter().map(|&i| cloud.instance_ids[i]).collect();
    let dense = crate::grouping::canonical_labels(&ids);
    let k = dense.iter().copied().max().map_or(0, |m| m + 1);
    let scale = 10.0 * ms.bandwidth;
    let mut data = vec![0.0; dense.len() * k];
    for (r, &c) in dense.iter().enumerate() {
        data[r * k + c] = scale;
    }
    let emb = Tensor::new(vec![dense.len(), k], data).expect("non-empty window");
    BlockLabels {
        clusters: mean_shift(&emb, ms),
        semantic: window.indices.iter().map(|&i| cloud.semantic_labels[i]).collect(),
    }
}

fn network_block_labels(
    params: &NetworkParams,
    cloud: &LabeledCloud,
    window: &BlockWindow,
    cfg: &AsisConfig,
    seed: u64,
) -> Result<BlockLabels, TrainError> {
    let block = sample_block(cloud, window, cfg.blocks.sample_size, seed)?;
    let out = ForwardOutputs::compute(params, &block.features, Mode::Infer)?;
    let sem = out.predicted_classes();
    let clusters = mean_shift(&out.embeddings, &cfg.mean_shift);

    let mut first_row = std::collections::HashMap::new();
    for (r, &src) in block.source_indices.iter().enumerate() {
        first_row.entry(src).or_insert(r);
    }
    let rows: Vec<usize> = window
        .indices
        .iter()
        .map(|&i| {
            first_row.get(&i).copied().unwrap_or_else(|| {
                let p = cloud.positions[i];
                let d = |r: usize| {
                    let q = cloud.positions[block.source_indices[r]];
                    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)
                };
                (0..block.source_indices.len()).min_by(|&a, &b| d(a).total_cmp(&d(b))).expect("sampled block")
            })
        })
        .collect();
    Ok(BlockLabels {
        clusters: rows.iter().map(|&r| clusters[r]).collect(),
        semantic: rows.iter().map(|&r| sem[r]).collect(),
    })
}

/// Full inference on one scene. Blocks are processed on up to `threads`
/// threads; results do not depend on the thread count.
pub fn infer_scene(
    params: &NetworkParams,
    cloud: &LabeledCloud,
    cfg: &AsisConfig,
    threads: usize,
) -> Result<SceneSegmentation, TrainError> {
    let windows = inference_windows(cloud, &cfg.blocks)?;
    let seed_of = |w: usize| scene_seed(cfg.train.seed, w);
    let labels: Vec<BlockLabels> = if threads <= 1 || windows.len() <= 1 {
        windows
            .iter()
            .enumerate()
            .map(|(w, win)| network_block_labels(params, cloud, win, cfg, seed_of(w)))
            .collect::<Result<_, _>>()?
    } else {
        let chunk = windows.len().div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = windows
                .chunks(chunk)
                .enumerate()
                .map(|(c, part)| {
                    s.spawn(move || {
                        part.iter()
                            .enumerate()
                            .map(|(j, win)| network_block_labels(params, cloud, win, cfg, seed_of(c * chunk + j)))
                            .collect::<Result<Vec<_>, _>>()
                    })
                })
                .collect();
            let mut all = Vec::with_capacity(windows.len());
            for h in handles {
                all.extend(h.join().expect("inference thread panicked")?);
            }
            Ok::<_, TrainError>(all)
        })?
    };
    merge_block_labels(cloud, &windows, labels, &cfg.merge)
}

pub struct DatasetEvaluation {
    pub metrics: SegMetrics,
    pub predictions: Vec<SceneSegmentation>,
}

/// Segments every scene with `segment` and pools the scores.
pub fn evaluate_dataset<F>(
    scenes: &[LabeledCloud],
    n_classes: usize,
    iou_threshold: f64,
    mut segment: F,
) -> Result<DatasetEvaluation, TrainError>
where
    F: FnMut(&LabeledCloud) -> Result<SceneSegmentation, TrainError>,
{
    let mut ev = Evaluator::new(n_classes, iou_threshold);
    let mut predictions = Vec::with_capacity(scenes.len());
    for cloud in scenes {
        let seg = segment(cloud)?;
        let ids: Vec<i64> = seg.instances.instance_ids.iter().map(|&i| i as i64).collect();
        ev.add_scene(&cloud.semantic_labels, &cloud.instance_ids, &seg.semantic, &ids)?;
        predictions.push(seg);
    }
    Ok(DatasetEvaluation { metrics: ev.finish(), predictions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, SceneSpec};

    #[test]
    fn oracle_path_recovers_small_scene() {
        let cloud = generate_scene(&SceneSpec { seed: 3, position_noise: 0.0, ..SceneSpec::default() }).unwrap();
        let cfg = AsisConfig::default();
        let eval = evaluate_dataset(std::slice::from_ref(&cloud), 4, 0.5, |c| {
            segment_scene(c, &cfg.blocks, &cfg.merge, |_, w| Ok(oracle_block_labels(c, w, &cfg.mean_shift)))
        })
        .unwrap();
        assert!(eval.metrics.m_wcov > 0.95, "{}", eval.metrics.table());
        assert_eq!(eval.metrics.m_iou, 1.0);
    }

    #[test]
    fn every_point_gets_labels_and_threads_agree() {
        let cloud = generate_scene(&SceneSpec { seed: 5, points_per_instance: [60, 80], ..SceneSpec::default() }).unwrap();
        let mut cfg = AsisConfig::default();
        cfg.network = crate::network::NetworkConfig::tiny(4);
        cfg.blocks.sample_size = 32;
        let params = NetworkParams::init(&cfg.network, 1).unwrap();
        let one = infer_scene(&params, &cloud, &cfg, 1).unwrap();
        assert_eq!(one.semantic.len(), cloud.len());
        assert_eq!(one.instances.len(), cloud.len());
        assert_eq!(infer_scene(&params, &cloud, &cfg, 3).unwrap(), one);
    }

    #[test]
    fn single_block_scene_merge_is_identity() {
        let mut cloud = LabeledCloud::with_classes(2);
        for i in 0..30 {
            let x = 0.02 * i as f64;
            cloud.push([x, 0.1, 0.0], [0.5; 3], (i / 15) as usize, (i / 10) as i64);
        }
        let cfg = AsisConfig::default();
        let windows = inference_windows(&cloud, &cfg.blocks).unwrap();
        assert_eq!(windows.len(), 1);
        let labels = oracle_block_labels(&cloud, &windows[0], &cfg.mean_shift);
        let seg = merge_block_labels(&cloud, &windows, vec![labels.clone()], &cfg.merge).unwrap();
        assert_eq!(seg.instances, assign_instance_classes(&labels.clusters, &labels.semantic).unwrap());
    }
}
