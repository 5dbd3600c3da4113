use super::knn::knn_embedding;
use super::params::{Linear, NormLayer};
use super::{NetworkError, NetworkParams};
use crate::tensor::{BatchNormMode, BatchStats, Tape, Tensor, TensorError, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch norm uses batch statistics and reports them.
    Train,
    /// Batch norm uses the stored running statistics.
    Infer,
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardOptions<'a> {
    pub mode: Mode,
    /// Bind parameters as differentiable leaves.
    pub trainable: bool,
    /// Use these neighbor lists for instance fusion instead of running kNN
    /// on the current embeddings.
    pub neighbors: Option<&'a [Vec<usize>]>,
}

impl ForwardOptions<'_> {
    pub fn train() -> Self {
        Self { mode: Mode::Train, trainable: true, neighbors: None }
    }

    pub fn infer() -> Self {
        Self { mode: Mode::Infer, trainable: false, neighbors: None }
    }
}

/// Tape handles of one forward pass.
pub struct ForwardGraph {
    pub param_vars: Vec<Var>,
    pub shared: Var,
    pub f_sem: Var,
    pub f_ins: Var,
    pub f_sins: Var,
    pub f_isem: Var,
    pub logits: Var,
    pub embeddings: Var,
    /// kNN lists used by instance fusion (`None` when fusion is off).
    pub neighbors: Option<Vec<Vec<usize>>>,
    /// Training-mode statistics keyed by running-stat slot.
    pub batch_stats: Vec<(usize, BatchStats)>,
}

/// Values of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutputs {
    pub f_sem: Tensor,
    pub f_ins: Tensor,
    pub f_sins: Tensor,
    pub f_isem: Tensor,
    pub logits: Tensor,
    pub embeddings: Tensor,
    pub neighbors: Option<Vec<Vec<usize>>>,
}

impl ForwardOutputs {
    pub fn from_graph(tape: &Tape, g: &ForwardGraph) -> Self {
        Self {
            f_sem: tape.value(g.f_sem).clone(),
            f_ins: tape.value(g.f_ins).clone(),
            f_sins: tape.value(g.f_sins).clone(),
            f_isem: tape.value(g.f_isem).clone(),
            logits: tape.value(g.logits).clone(),
            embeddings: tape.value(g.embeddings).clone(),
            neighbors: g.neighbors.clone(),
        }
    }

    /// Runs a forward pass on a fresh tape and returns the values.
    pub fn compute(params: &NetworkParams, features: &Tensor, mode: Mode) -> Result<Self, NetworkError> {
        let mut tape = Tape::new();
        let opts = ForwardOptions { mode, trainable: false, neighbors: None };
        let g = forward(&mut tape, params, features, &opts)?;
        Ok(Self::from_graph(&tape, &g))
    }

    /// Per-point argmax of the semantic logits (first maximum on ties).
    pub fn predicted_classes(&self) -> Vec<usize> {
        (0..self.logits.rows())
            .map(|i| {
                let row = self.logits.row(i);
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

/// Builds the network graph piece by piece on a tape.
pub struct GraphBuilder<'t, 'p> {
    tape: &'t mut Tape,
    params: &'p NetworkParams,
    vars: Vec<Var>,
    mode: Mode,
    stats: Vec<(usize, BatchStats)>,
}

impl<'t, 'p> GraphBuilder<'t, 'p> {
    pub fn new(tape: &'t mut Tape, params: &'p NetworkParams, mode: Mode, trainable: bool) -> Self {
        let vars = params
            .trainable()
            .iter()
            .map(|nt| {
                if trainable {
                    tape.param(nt.tensor.clone())
                } else {
                    tape.constant(nt.tensor.clone())
                }
            })
            .collect();
        Self { tape, params, vars, mode, stats: Vec::new() }
    }

    pub fn tape(&mut self) -> &mut Tape {
        self.tape
    }

    pub fn param_var(&self, name: &str) -> Option<Var> {
        self.params.trainable().iter().position(|nt| nt.name == name).map(|i| self.vars[i])
    }

    fn norm_layer(&mut self, x: Var, layer: NormLayer) -> Result<Var, TensorError> {
        let eps = self.params.config().bn_epsilon;
        let h = self.tape.matmul(x, self.vars[layer.weight])?;
        let mode = match self.mode {
            Mode::Train => BatchNormMode::Train { epsilon: eps },
            Mode::Infer => BatchNormMode::Infer { epsilon: eps },
        };
        let rs = &self.params.running()[layer.stats];
        let (y, stats) = self.tape.batchnorm(
            h,
            self.vars[layer.gamma],
            self.vars[layer.beta],
            mode,
            Some((&rs.mean, &rs.variance)),
        )?;
        if let Some(s) = stats {
            self.stats.push((layer.stats, s));
        }
        Ok(self.tape.relu(y))
    }

    fn linear(&mut self, x: Var, l: Linear) -> Result<Var, TensorError> {
        let h = self.tape.matmul(x, self.vars[l.weight])?;
        self.tape.add_bias(h, self.vars[l.bias])
    }

    /// Per-point MLP, then each local row concatenated with the
    /// channel-wise max over all rows.
    pub fn encode(&mut self, features: Var) -> Result<Var, NetworkError> {
        let (n, d) = self.tape.value(features).require_matrix("encode")?;
        if d != self.params.config().input_dim {
            return Err(TensorError::Dimension(format!(
                "features have {d} columns, network expects {}",
                self.params.config().input_dim
            ))
            .into());
        }
        if n == 0 {
            return Err(TensorError::EmptyInput("encode").into());
        }
        if !self.tape.value(features).is_finite() {
            return Err(TensorError::Evaluation("non-finite input features".into()).into());
        }
        let mut x = features;
        for layer in self.params.layout.encoder.clone() {
            x = self.norm_layer(x, layer)?;
        }
        let global = self.tape.global_max_pool(x)?;
        Ok(self.tape.concat_broadcast(x, global)?)
    }

    /// The two decoder branches: `(F_SEM, F_INS)`.
    pub fn decode_branches(&mut self, shared: Var) -> Result<(Var, Var), NetworkError> {
        let mut s = shared;
        for layer in self.params.layout.sem_decoder.clone() {
            s = self.norm_layer(s, layer)?;
        }
        let mut i = shared;
        for layer in self.params.layout.ins_decoder.clone() {
            i = self.norm_layer(i, layer)?;
        }
        Ok((s, i))
    }

    /// `F_SINS = F_INS + ReLU(BN(F_SEM · W))`.
    pub fn semantic_awareness(&mut self, f_sem: Var, f_ins: Var) -> Result<Var, NetworkError> {
        let layer = self
            .params
            .layout
            .sa
            .ok_or_else(|| NetworkError::Config("semantic awareness parameters absent".into()))?;
        let adapted = self.norm_layer(f_sem, layer)?;
        Ok(self.tape.add(f_ins, adapted)?)
    }

    /// Row `i` of `F_ISEM` is the channel-wise max of the `F_SEM` rows in
    /// `neighbors[i]`.
    pub fn instance_fusion(&mut self, f_sem: Var, neighbors: &[Vec<usize>]) -> Result<Var, NetworkError> {
        Ok(self.tape.gather_max(f_sem, neighbors)?)
    }

    pub fn embedding_head(&mut self, f_sins: Var) -> Result<Var, NetworkError> {
        let l = self.params.layout.emb_head;
        Ok(self.linear(f_sins, l)?)
    }

    pub fn semantic_head(&mut self, f_isem: Var) -> Result<Var, NetworkError> {
        let l = self.params.layout.sem_head;
        Ok(self.linear(f_isem, l)?)
    }

    /// `(P_SEM logits, E_INS)`.
    pub fn heads(&mut self, f_isem: Var, f_sins: Var) -> Result<(Var, Var), NetworkError> {
        let e = self.embedding_head(f_sins)?;
        let p = self.semantic_head(f_isem)?;
        Ok((p, e))
    }

    pub fn finish(self) -> (Vec<Var>, Vec<(usize, BatchStats)>) {
        (self.vars, self.stats)
    }
}

/// Full forward pass. Embeddings come from `F_SINS` first; kNN over them
/// then drives instance fusion into `F_ISEM`.
pub fn forward(
    tape: &mut Tape,
    params: &NetworkParams,
    features: &Tensor,
    opts: &ForwardOptions<'_>,
) -> Result<ForwardGraph, NetworkError> {
    let cfg = params.config();
    let mut b = GraphBuilder::new(tape, params, opts.mode, opts.trainable);
    let x = b.tape().constant(features.clone());
    let shared = b.encode(x)?;
    let (f_sem, f_ins) = b.decode_branches(shared)?;
    let f_sins = if cfg.use_sa { b.semantic_awareness(f_sem, f_ins)? } else { f_ins };
    let embeddings = b.embedding_head(f_sins)?;
    let (f_isem, neighbors) = if cfg.use_if {
        let nbrs = match opts.neighbors {
            Some(n) => n.to_vec(),
            None => knn_embedding(b.tape().value(embeddings), cfg.k_neighbors, cfg.delta_v),
        };
        (b.instance_fusion(f_sem, &nbrs)?, Some(nbrs))
    } else {
        (f_sem, None)
    };
    let logits = b.semantic_head(f_isem)?;
    let (param_vars, batch_stats) = b.finish();
    Ok(ForwardGraph {
        param_vars,
        shared,
        f_sem,
        f_ins,
        f_sins,
        f_isem,
        logits,
        embeddings,
        neighbors,
        batch_stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_features(n: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * 9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::new(vec![n, 9], data).unwrap()
    }

    #[test]
    fn encode_shapes_and_duplicate_rows() {
        let cfg = NetworkConfig::default();
        let p = NetworkParams::init(&cfg, 0).unwrap();
        let mut f = random_features(6, 1).into_data();
        let row0: Vec<f64> = f[..9].to_vec();
        f[9..18].copy_from_slice(&row0);
        let feats = Tensor::new(vec![6, 9], f).unwrap();
        let mut tape = Tape::new();
        let mut b = GraphBuilder::new(&mut tape, &p, Mode::Train, false);
        let x = b.tape().constant(feats);
        let shared = b.encode(x).unwrap();
        let v = tape.value(shared);
        assert_eq!(v.shape(), &[6, 256]);
        assert_eq!(v.row(0), v.row(1));
    }

    #[test]
    fn identical_branches_give_identical_features() {
        let cfg = NetworkConfig::tiny(3);
        let mut p = NetworkParams::init(&cfg, 0).unwrap();
        for i in 0..cfg.decoder_widths.len() {
            for part in ["weight", "gamma", "beta"] {
                let src = p.tensor(&format!("sem_decoder.{i}.{part}")).unwrap().clone();
                *p.tensor_mut(&format!("ins_decoder.{i}.{part}")).unwrap() = src;
            }
        }
        let out = ForwardOutputs::compute(&p, &random_features(10, 2), Mode::Train).unwrap();
        assert_eq!(out.f_sem, out.f_ins);
        assert_eq!(out.f_sem.shape(), &[10, 6]);
    }

    #[test]
    fn zeroed_adapter_leaves_instance_features() {
        let cfg = NetworkConfig::tiny(3);
        let mut p = NetworkParams::init(&cfg, 3).unwrap();
        p.tensor_mut("sa.gamma").unwrap().data_mut().fill(0.0);
        p.tensor_mut("sa.beta").unwrap().data_mut().fill(0.0);
        let out = ForwardOutputs::compute(&p, &random_features(8, 4), Mode::Train).unwrap();
        assert_eq!(out.f_sins, out.f_ins);
    }

    #[test]
    fn toggles_route_features() {
        let base = NetworkConfig::tiny(3);
        let feats = random_features(12, 5);
        let vanilla = NetworkConfig { use_sa: false, use_if: false, ..base.clone() };
        let p = NetworkParams::init(&vanilla, 1).unwrap();
        let out = ForwardOutputs::compute(&p, &feats, Mode::Train).unwrap();
        assert_eq!(out.f_sins, out.f_ins);
        assert_eq!(out.f_isem, out.f_sem);
        assert!(out.neighbors.is_none());

        let full = NetworkParams::init(&base, 1).unwrap();
        let out = ForwardOutputs::compute(&full, &feats, Mode::Train).unwrap();
        let nbrs = out.neighbors.as_ref().unwrap();
        assert_eq!(nbrs.len(), 12);
        assert!(nbrs.iter().enumerate().all(|(i, r)| r.len() == base.k_neighbors && r[0] == i));
    }

    #[test]
    fn zero_heads_give_zero_outputs() {
        let cfg = NetworkConfig::tiny(3);
        let mut p = NetworkParams::init(&cfg, 3).unwrap();
        for name in ["sem_head.weight", "sem_head.bias", "emb_head.weight", "emb_head.bias"] {
            p.tensor_mut(name).unwrap().data_mut().fill(0.0);
        }
        let out = ForwardOutputs::compute(&p, &random_features(5, 1), Mode::Train).unwrap();
        assert_eq!(out.logits.shape(), &[5, 3]);
        assert_eq!(out.embeddings.shape(), &[5, 3]);
        assert!(out.logits.data().iter().all(|&v| v == 0.0));
        assert!(out.embeddings.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_hot_head_copies_a_column() {
        let cfg = NetworkConfig { use_if: false, ..NetworkConfig::tiny(3) };
        let mut p = NetworkParams::init(&cfg, 3).unwrap();
        let w = p.tensor_mut("sem_head.weight").unwrap();
        w.data_mut().fill(0.0);
        // logit 1 <- feature column 2
        w.data_mut()[2 * 3 + 1] = 1.0;
        p.tensor_mut("sem_head.bias").unwrap().data_mut().fill(0.0);
        let out = ForwardOutputs::compute(&p, &random_features(7, 8), Mode::Train).unwrap();
        for i in 0..7 {
            assert_eq!(out.logits.get(i, 1), out.f_isem.get(i, 2));
            assert_eq!(out.logits.get(i, 0), 0.0);
        }
    }

    #[test]
    fn non_finite_features_rejected() {
        let p = NetworkParams::init(&NetworkConfig::tiny(2), 0).unwrap();
        let mut f = random_features(4, 0).into_data();
        f[3] = f64::NAN;
        let r = ForwardOutputs::compute(&p, &Tensor::new(vec![4, 9], f).unwrap(), Mode::Train);
        assert!(matches!(r, Err(NetworkError::Tensor(TensorError::Evaluation(_)))));
    }

    #[test]
    fn infer_mode_uses_running_stats() {
        let p = NetworkParams::init(&NetworkConfig::tiny(2), 0).unwrap();
        // a single row is fine at inference
        let out = ForwardOutputs::compute(&p, &random_features(1, 0), Mode::Infer).unwrap();
        assert!(out.logits.is_finite());
        assert!(ForwardOutputs::compute(&p, &random_features(1, 0), Mode::Train).is_err());
    }
}
