//! Finite-difference gradient suites and brute-force metric oracles behind
//! the `gradcheck` and `selftest` commands.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::losses::{
    cross_entropy, discriminative_branches, discriminative_loss, DiscriminativeParams, InstanceGroups, LossWeights,
};
use crate::metrics::{coverage, match_counts, Region, RegionSet};
use crate::network::{forward, ForwardOptions, NetworkConfig, NetworkParams};
use crate::tensor::{gradient_check, GradCheckReport, Probe, Tape, Tensor};
use crate::train::{discriminative_params, objective};

/// Largest accepted relative gradient error.
pub const GRADIENT_TOLERANCE: f64 = 1e-4;
/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradTarget {
    Discriminative,
    CrossEntropy,
    FullGraph,
}

impl GradTarget {
    pub const ALL: [GradTarget; 3] = [GradTarget::Discriminative, GradTarget::CrossEntropy, GradTarget::FullGraph];

    pub fn name(self) -> &'static str {
        match self {
            GradTarget::Discriminative => "discriminative_loss",
            GradTarget::CrossEntropy => "cross_entropy",
            GradTarget::FullGraph => "forward+loss",
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCase {
    pub target: GradTarget,
    pub seed: u64,
    pub points: usize,
    pub embedding_dim: usize,
    pub instances: usize,
    pub report: GradCheckReport,
}

#[derive(Clone, Debug, Default)]
pub struct GradSuite {
    pub cases: Vec<GradCase>,
}

impl GradSuite {
    pub fn max_rel_error(&self) -> f64 {
        self.cases.iter().map(|c| c.report.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        !self.cases.is_empty() && self.max_rel_error() < GRADIENT_TOLERANCE
    }

    pub fn summary(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        for c in &self.cases {
            let _ = writeln!(
                s,
                "{:<20} seed {:>20}  N_P {:>2}  N_E {}  I {}  checked {:>4}  kinks {:>3}  max rel {:.3e}",
                c.target.name(),
                c.seed,
                c.points,
                c.embedding_dim,
                c.instances,
                c.report.checked,
                c.report.skipped_kinks,
                c.report.max_rel_error
            );
        }
        let _ = writeln!(s, "max relative gradient error: {:.3e} (tolerance {GRADIENT_TOLERANCE:e})", self.max_rel_error());
        s
    }
}

/// Deliberate gradient corruption, used to show the harness can fail.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradFault {
    pub relative: f64,
}

fn corrupt(grad: &mut [f64], fault: Option<GradFault>) {
    if let Some(f) = fault {
        for g in grad.iter_mut() {
            *g *= 1.0 + f.relative;
        }
        if let Some(g) = grad.first_mut() {
            *g += f.relative;
        }
    }
}

fn random_groups(rng: &mut ChaCha8Rng, n: usize, instances: usize) -> (Vec<i64>, InstanceGroups) {
    let mut ids: Vec<i64> = (0..n).map(|j| (j % instances) as i64).collect();
    for i in (1..n).rev() {
        ids.swap(i, rng.gen_range(0..=i));
    }
    let groups = InstanceGroups::from_instance_ids(&ids);
    (ids, groups)
}

fn case_dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    let n = rng.gen_range(8..=32);
    let d = rng.gen_range(1..=5);
    let i = rng.gen_range(1..=4);
    (n, d, i)
}

fn check_discriminative(seed: u64, fault: Option<GradFault>, step: f64) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d, inst) = case_dims(&mut rng);
    let (_, groups) = random_groups(&mut rng, n, inst);
    let p = DiscriminativeParams::default();
    let x0: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let report = gradient_check(
        |x, _| {
            let e = Tensor::new(vec![n, d], x.to_vec()).expect("shape");
            let l = discriminative_loss(&e, &groups, &p).expect("valid groups");
            let mut gradient = l.gradient.into_data();
            corrupt(&mut gradient, fault);
            Probe { value: l.total, gradient, branch: discriminative_branches(&e, &groups, &p) }
        },
        &x0,
        step,
    )
    .expect("finite loss");
    GradCase { target: GradTarget::Discriminative, seed, points: n, embedding_dim: d, instances: inst, report }
}

fn check_cross_entropy(seed: u64, fault: Option<GradFault>, step: f64) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, _, _) = case_dims(&mut rng);
    let c = rng.gen_range(2..=6);
    let labels: Vec<Option<usize>> =
        (0..n).map(|j| if j > 0 && rng.gen_bool(0.1) { None } else { Some(rng.gen_range(0..c)) }).collect();
    let x0: Vec<f64> = (0..n * c).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let report = gradient_check(
        |x, _| {
            let logits = Tensor::new(vec![n, c], x.to_vec()).expect("shape");
            let ce = cross_entropy(&logits, &labels).expect("labeled rows");
            let mut gradient = ce.gradient.into_data();
            corrupt(&mut gradient, fault);
            Probe { value: ce.value, gradient, branch: 0 }
        },
        &x0,
        step,
    )
    .expect("finite loss");
    GradCase { target: GradTarget::CrossEntropy, seed, points: n, embedding_dim: c, instances: 0, report }
}

/// Gradient of the training objective with respect to every trainable
/// parameter of a small network, with both SA and IF enabled.
fn check_full_graph(seed: u64, fault: Option<GradFault>, step: f64) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, _, inst) = case_dims(&mut rng);
    let cfg = NetworkConfig { embedding_dim: rng.gen_range(2..=5), ..NetworkConfig::tiny(4) };
    let mut params = NetworkParams::init(&cfg, seed).expect("valid config");
    let features = Tensor::new(vec![n, cfg.input_dim], (0..n * cfg.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .expect("shape");
    let (ids, groups) = random_groups(&mut rng, n, inst);
    let labels: Vec<Option<usize>> = ids.iter().map(|&i| Some(i as usize % cfg.n_classes)).collect();
    let weights = LossWeights::default();

    let neighbors = {
        let mut tape = Tape::new();
        let g = forward(&mut tape, &params, &features, &ForwardOptions::train()).expect("forward");
        g.neighbors.expect("instance fusion enabled")
    };
    let opts = ForwardOptions { neighbors: Some(&neighbors), ..ForwardOptions::train() };
    let x0: Vec<f64> = params.trainable().iter().flat_map(|nt| nt.tensor.data().to_vec()).collect();
    let p = discriminative_params(&cfg);

    let report = gradient_check(
        |x, want| {
            let mut off = 0;
            for t in params.trainable_mut() {
                let len = t.len();
                t.data_mut().copy_from_slice(&x[off..off + len]);
                off += len;
            }
            let mut tape = Tape::new();
            let obj = objective(&mut tape, &params, &features, &labels, &groups, &weights, &opts).expect("objective");
            let branch = tape.branch_signature()
                ^ discriminative_branches(tape.value(obj.graph.embeddings), &groups, &p).rotate_left(17);
            let mut gradient = Vec::new();
            if want {
                let mut grads = tape.backward(obj.root).expect("backward");
                for (&v, nt) in obj.graph.param_vars.iter().zip(params.trainable()) {
                    gradient.extend(grads.take_or_zeros(v, nt.tensor.shape()).into_data());
                }
                corrupt(&mut gradient, fault);
            }
            Probe { value: obj.loss.total, gradient, branch }
        },
        &x0,
        step,
    )
    .expect("finite objective");
    GradCase { target: GradTarget::FullGraph, seed, points: n, embedding_dim: cfg.embedding_dim, instances: inst, report }
}

pub fn check_case(target: GradTarget, seed: u64, fault: Option<GradFault>) -> GradCase {
    check_case_with_step(target, seed, fault, FD_STEP)
}

pub fn check_case_with_step(target: GradTarget, seed: u64, fault: Option<GradFault>, step: f64) -> GradCase {
    match target {
        GradTarget::Discriminative => check_discriminative(seed, fault, step),
        GradTarget::CrossEntropy => check_cross_entropy(seed, fault, step),
        GradTarget::FullGraph => check_full_graph(seed, fault, step),
    }
}

/// `cases_per_target` seeded cases for each gradient target.
pub fn gradient_suite(seed: u64, cases_per_target: usize, fault: Option<GradFault>) -> GradSuite {
    let mut cases = Vec::new();
    for (t, target) in GradTarget::ALL.into_iter().enumerate() {
        for k in 0..cases_per_target {
            let case_seed = crate::synth::scene_seed(seed.wrapping_add(t as u64 * 1_000_003), k);
            cases.push(check_case(target, case_seed, fault));
        }
    }
    GradSuite { cases }
}

/// A random gt/prediction pair over a shared point universe: predictions
/// are gt regions with points reassigned, split or merged at random.
pub fn random_region_pair(rng: &mut impl Rng, max_regions: usize, max_points: usize) -> (RegionSet, RegionSet) {
    let classes = 3;
    let n_gt = rng.gen_range(1..=max_regions);
    let mut gt_members: Vec<Vec<usize>> = vec![Vec::new(); n_gt];
    let mut next = 0usize;
    for m in gt_members.iter_mut() {
        let size = rng.gen_range(1..=max_points);
        m.extend(next..next + size);
        next += size;
    }
    let gt_class: Vec<usize> = (0..n_gt).map(|_| rng.gen_range(0..classes)).collect();

    let n_pred = rng.gen_range(1..=max_regions);
    let mut pred_members: Vec<Vec<usize>> = vec![Vec::new(); n_pred];
    let noise: f64 = rng.gen_range(0.0..0.6);
    for (g, m) in gt_members.iter().enumerate() {
        let home = g % n_pred;
        for &p in m {
            let roll: f64 = rng.gen();
            if roll < noise * 0.2 {
                continue;
            }
            let target = if roll < noise { rng.gen_range(0..n_pred) } else { home };
            pred_members[target].push(p);
        }
    }
    for _ in 0..rng.gen_range(0..3) {
        let size = rng.gen_range(1..=max_points.min(20));
        let target = rng.gen_range(0..n_pred);
        pred_members[target].extend(next..next + size);
        next += size;
    }
    let pred_class: Vec<usize> = (0..n_pred)
        .map(|k| if rng.gen_bool(0.8) && k < n_gt { gt_class[k] } else { rng.gen_range(0..classes) })
        .collect();
    let gt = RegionSet::new(gt_members.into_iter().zip(gt_class).map(|(m, c)| Region::new(m, c)).collect());
    let pred = RegionSet::new(pred_members.into_iter().zip(pred_class).map(|(m, c)| Region::new(m, c)).collect());
    (gt, pred)
}

fn set_iou(a: &HashSet<usize>, b: &HashSet<usize>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Coverage by direct enumeration of all region pairs.
pub fn brute_coverage(gt: &RegionSet, pred: &RegionSet, weighted: bool) -> f64 {
    let sets = |r: &RegionSet| -> Vec<HashSet<usize>> { r.regions().iter().map(|x| x.points().iter().copied().collect()).collect() };
    let (g, p) = (sets(gt), sets(pred));
    let total: usize = g.iter().map(HashSet::len).sum();
    let mut acc = 0.0;
    for gi in &g {
        let best = p.iter().map(|pj| set_iou(gi, pj)).fold(0.0, f64::max);
        acc += if weighted { gi.len() as f64 * best } else { best };
    }
    acc / if weighted { total as f64 } else { g.len() as f64 }
}

/// Largest one-to-one same-class matching with IoU at or above the
/// threshold, by exhaustive search. Returns the matched count per gt class.
pub fn brute_true_positives(gt: &RegionSet, pred: &RegionSet, threshold: f64) -> Vec<usize> {
    let sets = |r: &RegionSet| -> Vec<HashSet<usize>> { r.regions().iter().map(|x| x.points().iter().copied().collect()).collect() };
    let (g, p) = (sets(gt), sets(pred));
    let classes = gt.regions().iter().chain(pred.regions()).map(|r| r.class + 1).max().unwrap_or(0);
    let mut tp = vec![0; classes];
    for c in 0..classes {
        let gs: Vec<usize> = (0..g.len()).filter(|&i| gt.regions()[i].class == c).collect();
        let ps: Vec<usize> = (0..p.len()).filter(|&j| pred.regions()[j].class == c).collect();
        let cand: Vec<Vec<usize>> =
            gs.iter().map(|&i| ps.iter().copied().filter(|&j| set_iou(&g[i], &p[j]) >= threshold).collect()).collect();
        fn search(k: usize, cand: &[Vec<usize>], used: &mut HashSet<usize>) -> usize {
            if k == cand.len() {
                return 0;
            }
            let mut best = search(k + 1, cand, used);
            for &j in &cand[k] {
                if used.insert(j) {
                    best = best.max(1 + search(k + 1, cand, used));
                    used.remove(&j);
                }
            }
            best
        }
        tp[c] = search(0, &cand, &mut HashSet::new());
    }
    tp
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Compares the metric implementations against the brute-force oracles on
/// `pairs` random region-set pairs.
pub fn metric_oracle_check(seed: u64, pairs: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut tp_mismatch = 0;
    for _ in 0..pairs {
        let (gt, pred) = random_region_pair(&mut rng, 20, 200);
        for w in [false, true] {
            let a = coverage(&gt, &pred, w).expect("non-empty gt");
            worst = worst.max((a - brute_coverage(&gt, &pred, w)).abs());
        }
        let counts = match_counts(&gt, &pred, 0.5).expect("valid threshold");
        let oracle = brute_true_positives(&gt, &pred, 0.5);
        for (c, &t) in oracle.iter().enumerate() {
            if counts.get(&c).map_or(0, |m| m.true_positives) != t {
                tp_mismatch += 1;
            }
        }
    }
    CheckResult {
        name: "metric oracles".into(),
        passed: worst <= 1e-12 && tp_mismatch == 0,
        detail: format!("{pairs} pairs, max coverage difference {worst:.1e}, matching mismatches {tp_mismatch}"),
    }
}

/// Hand-computable loss values.
pub fn loss_value_check() -> CheckResult {
    let col = |v: &[f64]| Tensor::new(vec![v.len(), 1], v.to_vec()).expect("non-empty");
    let p = DiscriminativeParams::default();
    let a = discriminative_loss(&col(&[0.0, 2.0]), &InstanceGroups::new(vec![vec![0, 1]]), &p).expect("groups");
    let b = discriminative_loss(&col(&[0.0, 1.0]), &InstanceGroups::new(vec![vec![0], vec![1]]), &p).expect("groups");
    let e = Tensor::new(vec![4, 2], vec![0.1, 0.0, -0.1, 0.0, 5.0, 0.1, 5.0, -0.1]).expect("shape");
    let c = discriminative_loss(&e, &InstanceGroups::new(vec![vec![0, 1], vec![2, 3]]), &p).expect("groups");
    let errs = [(a.total - 0.251).abs(), (b.l_dist - 4.0).abs(), c.l_var.abs() + c.l_dist.abs()];
    let worst = errs.iter().copied().fold(0.0, f64::max);
    CheckResult {
        name: "loss unit values".into(),
        passed: worst <= 1e-12,
        detail: format!("0.251 total, L_dist 4, inactive hinges 0: max error {worst:.1e}"),
    }
}

/// Everything `selftest` runs.
pub fn selftest(seed: u64) -> Vec<CheckResult> {
    let grads = gradient_suite(seed, 8, None);
    vec![
        CheckResult {
            name: "gradients".into(),
            passed: grads.passed(),
            detail: format!("{} cases, max relative error {:.3e}", grads.cases.len(), grads.max_rel_error()),
        },
        loss_value_check(),
        metric_oracle_check(seed, 100),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn each_target_passes() {
        for target in GradTarget::ALL {
            let case = check_case(target, 7, None);
            assert!(case.report.checked > 0, "{target:?}");
            assert!(case.report.max_rel_error < GRADIENT_TOLERANCE, "{target:?}: {:?}", case.report);
        }
    }

    #[test]
    fn injected_fault_is_caught() {
        for target in GradTarget::ALL {
            let case = check_case(target, 7, Some(GradFault { relative: 0.01 }));
            assert!(case.report.max_rel_error > GRADIENT_TOLERANCE, "{target:?}");
        }
    }

    #[test]
    fn oracles_agree_with_metrics() {
        assert!(metric_oracle_check(3, 20).passed);
        assert!(loss_value_check().passed);
    }
}
