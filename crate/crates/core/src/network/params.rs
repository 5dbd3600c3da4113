use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NetworkConfig, NetworkError};
use crate::tensor::{BatchStats, NamedTensor, Tensor};

/// Running mean and variance of one batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub name: String,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl RunningStats {
    fn new(name: String, width: usize) -> Self {
        Self { name, mean: vec![0.0; width], variance: vec![1.0; width] }
    }

    /// `running <- momentum * running + (1 - momentum) * batch`.
    pub fn update(&mut self, batch: &BatchStats, momentum: f64) {
        for (r, b) in self.mean.iter_mut().zip(&batch.mean) {
            *r = momentum * *r + (1.0 - momentum) * b;
        }
        for (r, b) in self.variance.iter_mut().zip(&batch.variance) {
            *r = momentum * *r + (1.0 - momentum) * b;
        }
    }
}

/// Indices of one `matmul → batchnorm → relu` layer.
#[derive(Clone, Copy, Debug)]
pub(crate) struct NormLayer {
    pub weight: usize,
    pub gamma: usize,
    pub beta: usize,
    pub stats: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Linear {
    pub weight: usize,
    pub bias: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub encoder: Vec<NormLayer>,
    pub sem_decoder: Vec<NormLayer>,
    pub ins_decoder: Vec<NormLayer>,
    pub sa: Option<NormLayer>,
    pub sem_head: Linear,
    pub emb_head: Linear,
}

/// All learned weights plus batch-norm running statistics.
#[derive(Clone, Debug)]
pub struct NetworkParams {
    config: NetworkConfig,
    trainable: Vec<NamedTensor>,
    running: Vec<RunningStats>,
    pub(crate) layout: Layout,
}

/// FNV-1a, so initial weights do not depend on the std hasher.
fn name_hash(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

struct Builder<'a> {
    seed: u64,
    trainable: &'a mut Vec<NamedTensor>,
    running: &'a mut Vec<RunningStats>,
}

impl Builder<'_> {
    /// Uniform in `±1/√fan_in`, seeded by the global seed and the name, so
    /// the value of one tensor never depends on which others exist.
    fn uniform(&mut self, name: String, shape: &[usize], fan_in: usize) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ name_hash(&name));
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        self.push(name, Tensor::new(shape.to_vec(), data).expect("shape/data agree"))
    }

    fn push(&mut self, name: String, tensor: Tensor) -> usize {
        self.trainable.push(NamedTensor { name, tensor });
        self.trainable.len() - 1
    }

    fn norm_layer(&mut self, prefix: &str, fan_in: usize, width: usize) -> NormLayer {
        let weight = self.uniform(format!("{prefix}.weight"), &[fan_in, width], fan_in);
        let gamma = self.push(format!("{prefix}.gamma"), Tensor::filled(&[width], 1.0));
        let beta = self.push(format!("{prefix}.beta"), Tensor::zeros(&[width]));
        self.running.push(RunningStats::new(prefix.to_string(), width));
        NormLayer { weight, gamma, beta, stats: self.running.len() - 1 }
    }

    fn stack(&mut self, prefix: &str, fan_in: usize, widths: &[usize]) -> Vec<NormLayer> {
        let mut prev = fan_in;
        widths
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let l = self.norm_layer(&format!("{prefix}.{i}"), prev, w);
                prev = w;
                l
            })
            .collect()
    }

    fn linear(&mut self, prefix: &str, fan_in: usize, width: usize) -> Linear {
        let weight = self.uniform(format!("{prefix}.weight"), &[fan_in, width], fan_in);
        let bias = self.push(format!("{prefix}.bias"), Tensor::zeros(&[width]));
        Linear { weight, bias }
    }
}

impl NetworkParams {
    /// Seeded initialization for `config`.
    pub fn init(config: &NetworkConfig, seed: u64) -> Result<Self, NetworkError> {
        config.validate()?;
        let mut trainable = Vec::new();
        let mut running = Vec::new();
        let mut b = Builder { seed, trainable: &mut trainable, running: &mut running };
        let nf = config.feature_width();
        let encoder = b.stack("encoder", config.input_dim, &config.encoder_widths);
        let shared = config.shared_width();
        let sem_decoder = b.stack("sem_decoder", shared, &config.decoder_widths);
        let ins_decoder = b.stack("ins_decoder", shared, &config.decoder_widths);
        let sa = config.use_sa.then(|| b.norm_layer("sa", nf, nf));
        let sem_head = b.linear("sem_head", nf, config.n_classes);
        let emb_head = b.linear("emb_head", nf, config.embedding_dim);
        let layout = Layout { encoder, sem_decoder, ins_decoder, sa, sem_head, emb_head };
        Ok(Self { config: config.clone(), trainable, running, layout })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn trainable(&self) -> &[NamedTensor] {
        &self.trainable
    }

    pub fn trainable_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.trainable.iter_mut().map(|nt| &mut nt.tensor)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.trainable.iter().find(|nt| nt.name == name).map(|nt| &nt.tensor)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.trainable.iter_mut().find(|nt| nt.name == name).map(|nt| &mut nt.tensor)
    }

    pub fn running(&self) -> &[RunningStats] {
        &self.running
    }

    pub fn running_mut(&mut self) -> &mut [RunningStats] {
        &mut self.running
    }

    pub fn parameter_count(&self) -> usize {
        self.trainable.iter().map(|nt| nt.tensor.len()).sum()
    }

    /// Every trainable tensor followed by every running statistic.
    pub fn to_named_tensors(&self) -> Vec<NamedTensor> {
        let mut out = self.trainable.clone();
        for rs in &self.running {
            out.push(NamedTensor {
                name: format!("{}.running_mean", rs.name),
                tensor: Tensor::vector(rs.mean.clone()).expect("non-empty"),
            });
            out.push(NamedTensor {
                name: format!("{}.running_var", rs.name),
                tensor: Tensor::vector(rs.variance.clone()).expect("non-empty"),
            });
        }
        out
    }

    /// Rebuilds parameters for `config` from checkpoint tensors; every
    /// expected tensor must be present with the expected shape.
    pub fn from_named_tensors(config: &NetworkConfig, tensors: Vec<NamedTensor>) -> Result<Self, NetworkError> {
        let mut params = Self::init(config, 0)?;
        let mut by_name: std::collections::HashMap<String, Tensor> =
            tensors.into_iter().map(|nt| (nt.name, nt.tensor)).collect();
        for nt in &mut params.trainable {
            let t = by_name
                .remove(&nt.name)
                .ok_or_else(|| NetworkError::Incompatible(format!("missing tensor `{}`", nt.name)))?;
            if t.shape() != nt.tensor.shape() {
                return Err(NetworkError::Incompatible(format!(
                    "`{}` has shape {:?}, configuration expects {:?}",
                    nt.name,
                    t.shape(),
                    nt.tensor.shape()
                )));
            }
            nt.tensor = t;
        }
        for rs in &mut params.running {
            for (suffix, slot) in [("running_mean", &mut rs.mean), ("running_var", &mut rs.variance)] {
                let key = format!("{}.{suffix}", rs.name);
                let t = by_name
                    .remove(&key)
                    .ok_or_else(|| NetworkError::Incompatible(format!("missing tensor `{key}`")))?;
                if t.len() != slot.len() {
                    return Err(NetworkError::Incompatible(format!(
                        "`{key}` has {} values, configuration expects {}",
                        t.len(),
                        slot.len()
                    )));
                }
                *slot = t.into_data();
            }
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(NetworkError::Incompatible(format!("unexpected tensor `{extra}`")));
        }
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths_chain_and_embedding_width() {
        let cfg = NetworkConfig::default();
        let p = NetworkParams::init(&cfg, 1).unwrap();
        assert_eq!(p.tensor("encoder.0.weight").unwrap().shape(), &[9, 32]);
        assert_eq!(p.tensor("encoder.2.weight").unwrap().shape(), &[64, 128]);
        assert_eq!(p.tensor("sem_decoder.0.weight").unwrap().shape(), &[256, 128]);
        assert_eq!(p.tensor("ins_decoder.1.weight").unwrap().shape(), &[128, 64]);
        assert_eq!(p.tensor("sa.weight").unwrap().shape(), &[64, 64]);
        assert_eq!(p.tensor("emb_head.weight").unwrap().shape(), &[64, 5]);
        assert_eq!(p.tensor("sem_head.weight").unwrap().shape(), &[64, 4]);
    }

    #[test]
    fn init_is_independent_of_toggles() {
        let full = NetworkParams::init(&NetworkConfig::default(), 9).unwrap();
        let vanilla_cfg = NetworkConfig { use_sa: false, use_if: false, ..Default::default() };
        let vanilla = NetworkParams::init(&vanilla_cfg, 9).unwrap();
        assert!(vanilla.tensor("sa.weight").is_none());
        for nt in vanilla.trainable() {
            assert_eq!(Some(&nt.tensor), full.tensor(&nt.name), "{}", nt.name);
        }
    }

    #[test]
    fn named_tensor_round_trip_and_mismatch() {
        let cfg = NetworkConfig::tiny(3);
        let mut p = NetworkParams::init(&cfg, 4).unwrap();
        p.running_mut()[0].mean[0] = 0.25;
        let back = NetworkParams::from_named_tensors(&cfg, p.to_named_tensors()).unwrap();
        assert_eq!(back.to_named_tensors(), p.to_named_tensors());

        let wider = NetworkConfig { decoder_widths: vec![8, 7], ..cfg.clone() };
        let err = NetworkParams::from_named_tensors(&wider, p.to_named_tensors()).unwrap_err();
        assert!(matches!(err, NetworkError::Incompatible(_)));
        let no_sa = NetworkConfig { use_sa: false, ..cfg };
        assert!(NetworkParams::from_named_tensors(&no_sa, p.to_named_tensors()).is_err());
    }
}
