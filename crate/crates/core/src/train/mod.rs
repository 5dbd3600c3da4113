//! Block-level training: seeded shuffling and sampling, batches of
//! independent forwards with averaged gradients, Adam, a CSV log and
//! checkpoints with a JSON sidecar.

mod infer;

pub use infer::{
    evaluate_dataset, infer_scene, inference_windows, merge_block_labels, oracle_block_labels, segment_scene, BlockLabels,
    DatasetEvaluation, SceneSegmentation,
};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{read_scene, sample_block, split_blocks, Block, BlockConfig, BlockWindow, LabeledCloud, SceneError};
use crate::config::AsisConfig;
use crate::losses::{total_loss, DiscriminativeParams, InstanceGroups, LossError, LossWeights, TotalLoss};
use crate::network::{forward, ForwardGraph, ForwardOptions, NetworkConfig, NetworkError, NetworkParams};
use crate::synth::{Manifest, SynthError};
use crate::tensor::{read_checkpoint, write_checkpoint, AdamConfig, AdamState, CheckpointError, Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Dataset(#[from] SynthError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Grouping(#[from] crate::grouping::GroupingError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("metadata: {0}")]
    Metadata(String),
    #[error("invalid training setup: {0}")]
    Setup(String),
    #[error("non-finite loss at step {step}: {dump}")]
    NonFinite { step: u64, dump: String },
}

pub(crate) fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError {
    let path = path.display().to_string();
    move |source| TrainError::Io { path, source }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Blocks per optimizer step.
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub loss_weights: LossWeights,
    /// Write an intermediate checkpoint every this many epochs; 0 disables.
    pub eval_every: usize,
    /// Train on at most this many shuffled blocks per epoch.
    pub blocks_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 8,
            adam: AdamConfig::default(),
            seed: 0,
            loss_weights: LossWeights::default(),
            eval_every: 0,
            blocks_per_epoch: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.epochs == 0 || self.batch_size == 0 || self.blocks_per_epoch == Some(0) {
            return Err(format!(
                "epochs {}, batch_size {} and blocks_per_epoch {:?} must be positive",
                self.epochs, self.batch_size, self.blocks_per_epoch
            ));
        }
        if !(self.adam.learning_rate >= 0.0) || self.adam.halving_interval == 0 {
            return Err(format!("adam: {:?}", self.adam));
        }
        Ok(())
    }
}

/// One optimizer step, averaged over its batch.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub step: u64,
    pub lr: f64,
    pub total: f64,
    pub l_var: f64,
    pub l_dist: f64,
    pub l_reg: f64,
    pub ce: f64,
}

pub const LOG_HEADER: &str = "step,lr,total,l_var,l_dist,l_reg,ce";

pub fn format_log(records: &[LogRecord]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(s, "{},{:?},{:?},{:?},{:?},{:?},{:?}", r.step, r.lr, r.total, r.l_var, r.l_dist, r.l_reg, r.ce);
    }
    s
}

/// Loaded scenes and their training windows.
pub struct TrainData {
    pub scenes: Vec<LabeledCloud>,
    /// `(scene index, window)`.
    pub windows: Vec<(usize, BlockWindow)>,
}

impl TrainData {
    pub fn from_scenes(scenes: Vec<LabeledCloud>, blocks: &BlockConfig) -> Result<Self, TrainError> {
        let mut windows = Vec::new();
        for (s, cloud) in scenes.iter().enumerate() {
            cloud.validate()?;
            for w in split_blocks(cloud, blocks.block_size, blocks.stride, blocks.min_points)? {
                windows.push((s, w));
            }
        }
        if windows.is_empty() {
            return Err(TrainError::Setup("no block holds enough points to train on".into()));
        }
        Ok(Self { scenes, windows })
    }

    /// Reads every scene listed in `dir/manifest.json`.
    pub fn load(dir: &Path, blocks: &BlockConfig) -> Result<Self, TrainError> {
        let manifest = Manifest::read(dir)?;
        let scenes = manifest.scene_paths(dir).iter().map(|p| read_scene(p)).collect::<Result<Vec<_>, _>>()?;
        Self::from_scenes(scenes, blocks)
    }

    pub fn n_classes(&self) -> usize {
        self.scenes.iter().map(|s| s.n_classes).max().unwrap_or(0)
    }
}

/// Labels of a sampled block.
pub fn block_targets(cloud: &LabeledCloud, block: &Block) -> (Vec<Option<usize>>, InstanceGroups) {
    let labels = block.source_indices.iter().map(|&i| Some(cloud.semantic_labels[i])).collect();
    let ids: Vec<i64> = block.source_indices.iter().map(|&i| cloud.instance_ids[i]).collect();
    (labels, InstanceGroups::from_instance_ids(&ids))
}

pub fn discriminative_params(cfg: &NetworkConfig) -> DiscriminativeParams {
    DiscriminativeParams { delta_v: cfg.delta_v, delta_d: cfg.delta_d, alpha: cfg.alpha }
}

/// A forward pass joined to the loss: `root` is the scalar objective.
pub struct Objective {
    pub graph: ForwardGraph,
    pub loss: TotalLoss,
    pub root: Var,
}

/// Records forward and loss on `tape`.
pub fn objective(
    tape: &mut Tape,
    params: &NetworkParams,
    features: &Tensor,
    labels: &[Option<usize>],
    groups: &InstanceGroups,
    weights: &LossWeights,
    opts: &ForwardOptions<'_>,
) -> Result<Objective, TrainError> {
    let graph = forward(tape, params, features, opts)?;
    let p = discriminative_params(params.config());
    let loss = total_loss(tape.value(graph.logits), tape.value(graph.embeddings), labels, groups, &p, weights)?;
    let ce = tape.external_scalar(graph.logits, loss.cross_entropy.value, loss.cross_entropy.gradient.clone())?;
    let mut terms = vec![(ce, weights.cross_entropy)];
    if let Some(d) = &loss.discriminative {
        let v = tape.external_scalar(graph.embeddings, d.total, d.gradient.clone())?;
        terms.push((v, weights.discriminative));
    }
    let root = tape.weighted_sum(&terms)?;
    Ok(Objective { graph, loss, root })
}

struct BlockResult {
    loss: TotalLoss,
    grads: Vec<Tensor>,
}

fn block_step(
    params: &mut NetworkParams,
    cloud: &LabeledCloud,
    block: &Block,
    weights: &LossWeights,
) -> Result<BlockResult, TrainError> {
    let (labels, groups) = block_targets(cloud, block);
    let mut tape = Tape::new();
    let obj = objective(&mut tape, params, &block.features, &labels, &groups, weights, &ForwardOptions::train())?;
    let mut grads = tape.backward(obj.root)?;
    let grad_tensors = obj
        .graph
        .param_vars
        .iter()
        .zip(params.trainable())
        .map(|(&v, nt)| grads.take_or_zeros(v, nt.tensor.shape()))
        .collect();
    let momentum = params.config().bn_momentum;
    for (idx, stats) in &obj.graph.batch_stats {
        params.running_mut()[*idx].update(stats, momentum);
    }
    Ok(BlockResult { loss: obj.loss, grads: grad_tensors })
}

/// Seed for sampling `window` in `epoch`.
fn sample_seed(seed: u64, epoch: usize, window: usize) -> u64 {
    crate::synth::scene_seed(seed ^ (epoch as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93), window)
}

pub struct TrainOutcome {
    pub params: NetworkParams,
    pub log: Vec<LogRecord>,
    pub steps: u64,
}

/// Trains a fresh network. `on_epoch(epoch, params, log)` runs after every
/// epoch.
pub fn train<F>(data: &TrainData, cfg: &AsisConfig, mut on_epoch: F) -> Result<TrainOutcome, TrainError>
where
    F: FnMut(usize, &NetworkParams, &[LogRecord]) -> Result<(), TrainError>,
{
    cfg.validate().map_err(|e| TrainError::Setup(e.to_string()))?;
    let tc = &cfg.train;
    if data.n_classes() > cfg.network.n_classes {
        return Err(TrainError::Setup(format!(
            "dataset has {} classes, network predicts {}",
            data.n_classes(),
            cfg.network.n_classes
        )));
    }
    let mut params = NetworkParams::init(&cfg.network, tc.seed)?;
    let mut adam = AdamState::new(tc.adam.clone(), params.trainable().iter().map(|nt| &nt.tensor));
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..data.windows.len()).collect();

    for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        let take = tc.blocks_per_epoch.map_or(order.len(), |m| m.min(order.len()));
        for batch in order[..take].chunks(tc.batch_size) {
            let step = adam.timestep() + 1;
            let mut sum: Option<Vec<Tensor>> = None;
            let mut rec = LogRecord { step, lr: adam.current_lr(), total: 0.0, l_var: 0.0, l_dist: 0.0, l_reg: 0.0, ce: 0.0 };
            for &w in batch {
                let (s, window) = &data.windows[w];
                let cloud = &data.scenes[*s];
                let block = sample_block(cloud, window, cfg.blocks.sample_size, sample_seed(tc.seed, epoch, w))?;
                let r = block_step(&mut params, cloud, &block, &tc.loss_weights)?;
                if !r.loss.total.is_finite() || r.grads.iter().any(|g| !g.is_finite()) {
                    let d = r.loss.discriminative.as_ref();
                    return Err(TrainError::NonFinite {
                        step,
                        dump: format!(
                            "epoch {epoch}, scene {s}, block origin {:?}, total {}, ce {}, l_var {:?}, l_dist {:?}, l_reg {:?}",
                            window.origin,
                            r.loss.total,
                            r.loss.cross_entropy.value,
                            d.map(|d| d.l_var),
                            d.map(|d| d.l_dist),
                            d.map(|d| d.l_reg)
                        ),
                    });
                }
                rec.total += r.loss.total;
                rec.ce += r.loss.cross_entropy.value;
                if let Some(d) = &r.loss.discriminative {
                    rec.l_var += d.l_var;
                    rec.l_dist += d.l_dist;
                    rec.l_reg += d.l_reg;
                }
                match &mut sum {
                    None => sum = Some(r.grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&r.grads) {
                            a.data_mut().iter_mut().zip(g.data()).for_each(|(x, y)| *x += y);
                        }
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            let mut grads = sum.expect("non-empty batch");
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|x| *x *= scale);
            }
            for v in [&mut rec.total, &mut rec.ce, &mut rec.l_var, &mut rec.l_dist, &mut rec.l_reg] {
                *v *= scale;
            }
            let mut refs: Vec<&mut Tensor> = params.trainable_mut().collect();
            adam.step(&mut refs, &grads)?;
            log::debug!("step {} lr {:.2e} loss {:.5}", rec.step, rec.lr, rec.total);
            log.push(rec);
        }
        if let Some(last) = log.last() {
            log::info!("epoch {}/{}: step {} loss {:.5}", epoch + 1, tc.epochs, last.step, last.total);
        }
        on_epoch(epoch, &params, &log)?;
    }
    Ok(TrainOutcome { params, log, steps: adam.timestep() })
}

/// Checkpoint sidecar contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub config: AsisConfig,
    pub use_sa: bool,
    pub use_if: bool,
    pub seed: u64,
    pub steps: u64,
}

pub fn sidecar_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn log_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".log.csv");
    PathBuf::from(s)
}

pub fn save_model(path: &Path, params: &NetworkParams, cfg: &AsisConfig, steps: u64) -> Result<(), TrainError> {
    write_checkpoint(path, &params.to_named_tensors())?;
    let meta = CheckpointMeta {
        config: cfg.clone(),
        use_sa: cfg.network.use_sa,
        use_if: cfg.network.use_if,
        seed: cfg.train.seed,
        steps,
    };
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&meta).map_err(|e| TrainError::Metadata(e.to_string()))?;
    fs::write(&side, text).map_err(io_error(&side))
}

/// Loads a checkpoint and its sidecar. When `requested` is given, its
/// toggles and widths must agree with those the model was trained with.
pub fn load_model(path: &Path, requested: Option<&NetworkConfig>) -> Result<(NetworkParams, CheckpointMeta), TrainError> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(io_error(&side))?;
    let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| TrainError::Metadata(format!("{}: {e}", side.display())))?;
    let net = &meta.config.network;
    if meta.use_sa != net.use_sa || meta.use_if != net.use_if {
        return Err(TrainError::Metadata("sidecar toggles disagree with its network config".into()));
    }
    if let Some(req) = requested {
        if req.use_sa != meta.use_sa || req.use_if != meta.use_if {
            return Err(NetworkError::Incompatible(format!(
                "checkpoint trained with use_sa={} use_if={}, requested use_sa={} use_if={}",
                meta.use_sa, meta.use_if, req.use_sa, req.use_if
            ))
            .into());
        }
        if req != net {
            return Err(NetworkError::Incompatible("requested network config differs from the checkpoint's".into()).into());
        }
    }
    let params = NetworkParams::from_named_tensors(net, read_checkpoint(path)?)?;
    Ok((params, meta))
}

/// Trains on the dataset in `data_dir` and writes the checkpoint, its
/// sidecar and the CSV log next to `out`.
pub fn train_to_disk(data_dir: &Path, cfg: &AsisConfig, out: &Path) -> Result<TrainOutcome, TrainError> {
    let data = TrainData::load(data_dir, &cfg.blocks)?;
    log::info!("{} scenes, {} blocks", data.scenes.len(), data.windows.len());
    let every = cfg.train.eval_every;
    let outcome = train(&data, cfg, |epoch, params, log| {
        if every > 0 && (epoch + 1) % every == 0 {
            save_model(out, params, cfg, log.last().map_or(0, |r| r.step))?;
            fs::write(log_path(out), format_log(log)).map_err(io_error(&log_path(out)))?;
        }
        Ok(())
    })?;
    save_model(out, &outcome.params, cfg, outcome.steps)?;
    let lp = log_path(out);
    fs::write(&lp, format_log(&outcome.log)).map_err(io_error(&lp))?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, SceneSpec};

    pub(crate) fn tiny_setup(epochs: usize) -> (TrainData, AsisConfig) {
        let spec = SceneSpec { points_per_instance: [40, 60], ..SceneSpec::default() };
        let scenes = (0..2).map(|s| generate_scene(&SceneSpec { seed: s, ..spec.clone() }).unwrap()).collect();
        let mut cfg = AsisConfig::default();
        cfg.network = NetworkConfig::tiny(4);
        cfg.blocks.min_points = 10;
        cfg.blocks.sample_size = 32;
        cfg.train.epochs = epochs;
        cfg.train.batch_size = 4;
        cfg.train.blocks_per_epoch = Some(8);
        (TrainData::from_scenes(scenes, &cfg.blocks).unwrap(), cfg)
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let (data, mut cfg) = tiny_setup(1);
        cfg.train.adam.learning_rate = 0.0;
        let out = train(&data, &cfg, |_, _, _| Ok(())).unwrap();
        let init = NetworkParams::init(&cfg.network, cfg.train.seed).unwrap();
        assert_eq!(out.params.trainable(), init.trainable());
        assert_eq!(out.steps, 2);
    }

    #[test]
    fn training_is_deterministic() {
        let (data, cfg) = tiny_setup(2);
        let a = train(&data, &cfg, |_, _, _| Ok(())).unwrap();
        let b = train(&data, &cfg, |_, _, _| Ok(())).unwrap();
        assert_eq!(format_log(&a.log), format_log(&b.log));
        assert_eq!(a.params.to_named_tensors(), b.params.to_named_tensors());
    }

    #[test]
    fn log_format_has_header() {
        let r = LogRecord { step: 1, lr: 1e-3, total: 1.5, l_var: 0.1, l_dist: 0.2, l_reg: 0.3, ce: 0.9 };
        let text = format_log(&[r]);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(LOG_HEADER));
        assert_eq!(lines.next(), Some("1,0.001,1.5,0.1,0.2,0.3,0.9"));
    }

    #[test]
    fn bad_config_rejected() {
        let (data, mut cfg) = tiny_setup(1);
        cfg.train.batch_size = 0;
        assert!(train(&data, &cfg, |_, _, _| Ok(())).is_err());
    }
}
