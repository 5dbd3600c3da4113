//! Discriminative embedding loss and softmax cross entropy.
//!
//! Both return their value together with the analytic gradient with respect
//! to their input matrix, so they plug into the tape as external scalars.
//!
//! For instance centers `μ_i` (means of member embeddings `e_j`):
//!
//! ```text
//! L_var  = 1/I Σ_i 1/N_i Σ_j [‖μ_i − e_j‖₁ − δ_v]₊²
//! L_dist = 1/(I(I−1)) Σ_{a≠b} [2δ_d − ‖μ_a − μ_b‖₁]₊²      (0 when I = 1)
//! L_reg  = 1/I Σ_i ‖μ_i‖₁
//! L      = L_var + L_dist + α·L_reg
//! ```
//!
//! Hinges have subgradient 0 at the kink and `sign(0) = 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("no instance groups to supervise")]
    NoGroups,
    #[error("no labeled points for cross entropy")]
    NoLabeledPoints,
    #[error("group member {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("expected {expected} labels, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminativeParams {
    pub delta_v: f64,
    pub delta_d: f64,
    pub alpha: f64,
}

impl Default for DiscriminativeParams {
    fn default() -> Self {
        Self { delta_v: 0.5, delta_d: 1.5, alpha: 0.001 }
    }
}

impl DiscriminativeParams {
    /// True when the pull radius sits inside the push radius.
    pub fn margins_consistent(&self) -> bool {
        2.0 * self.delta_v < 2.0 * self.delta_d
    }
}

/// Member rows of each ground-truth instance.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceGroups {
    groups: Vec<Vec<usize>>,
}

impl InstanceGroups {
    pub fn new(groups: Vec<Vec<usize>>) -> Self {
        Self { groups: groups.into_iter().filter(|g| !g.is_empty()).collect() }
    }

    /// Groups rows by instance id, ordered by first occurrence; negative ids
    /// are unlabeled and left out.
    pub fn from_instance_ids(ids: &[i64]) -> Self {
        let mut order: Vec<i64> = Vec::new();
        let mut slot = std::collections::HashMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (row, &id) in ids.iter().enumerate() {
            if id < 0 {
                continue;
            }
            let k = *slot.entry(id).or_insert_with(|| {
                order.push(id);
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[k].push(row);
        }
        Self { groups }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminativeLoss {
    pub total: f64,
    pub l_var: f64,
    pub l_dist: f64,
    pub l_reg: f64,
    /// d total / d embeddings.
    pub gradient: Tensor,
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn discriminative_loss(
    embeddings: &Tensor,
    groups: &InstanceGroups,
    p: &DiscriminativeParams,
) -> Result<DiscriminativeLoss, LossError> {
    if groups.is_empty() {
        return Err(LossError::NoGroups);
    }
    if !p.margins_consistent() {
        log::warn!("delta_v {} is not below delta_d {}", p.delta_v, p.delta_d);
    }
    let n = embeddings.rows();
    let d = embeddings.cols();
    for g in groups.groups() {
        if let Some(&bad) = g.iter().find(|&&j| j >= n) {
            return Err(LossError::IndexOutOfRange { index: bad, len: n });
        }
    }
    let count = groups.len();
    let i_f = count as f64;

    let centers: Vec<Vec<f64>> = groups
        .groups()
        .iter()
        .map(|g| {
            let mut mu = vec![0.0; d];
            for &j in g {
                for (m, v) in mu.iter_mut().zip(embeddings.row(j)) {
                    *m += v;
                }
            }
            mu.iter_mut().for_each(|m| *m /= g.len() as f64);
            mu
        })
        .collect();

    let mut grad = vec![0.0; n * d];
    // gradient with respect to each center, distributed to members at the end
    let mut grad_mu = vec![vec![0.0; d]; count];

    let mut l_var = 0.0;
    for (gi, g) in groups.groups().iter().enumerate() {
        let ni = g.len() as f64;
        let mu = &centers[gi];
        let mut group_sum = 0.0;
        for &j in g {
            let e = embeddings.row(j);
            let dist: f64 = mu.iter().zip(e).map(|(a, b)| (a - b).abs()).sum();
            let t = dist - p.delta_v;
            if t > 0.0 {
                group_sum += t * t;
                let coef = 2.0 * t / (i_f * ni);
                for c in 0..d {
                    let s = sign(mu[c] - e[c]);
                    grad[j * d + c] -= coef * s;
                    grad_mu[gi][c] += coef * s;
                }
            }
        }
        l_var += group_sum / ni;
    }
    l_var /= i_f;

    let mut l_dist = 0.0;
    if count > 1 {
        let norm = i_f * (i_f - 1.0);
        for a in 0..count {
            for b in 0..count {
                if a == b {
                    continue;
                }
                let dist: f64 = centers[a].iter().zip(&centers[b]).map(|(x, y)| (x - y).abs()).sum();
                let u = 2.0 * p.delta_d - dist;
                if u > 0.0 {
                    l_dist += u * u;
                    let coef = 2.0 * u / norm;
                    for c in 0..d {
                        let s = sign(centers[a][c] - centers[b][c]);
                        grad_mu[a][c] -= coef * s;
                        grad_mu[b][c] += coef * s;
                    }
                }
            }
        }
        l_dist /= norm;
    }

    let mut l_reg = 0.0;
    for (gi, mu) in centers.iter().enumerate() {
        l_reg += mu.iter().map(|v| v.abs()).sum::<f64>();
        for c in 0..d {
            grad_mu[gi][c] += p.alpha * sign(mu[c]) / i_f;
        }
    }
    l_reg /= i_f;

    for (gi, g) in groups.groups().iter().enumerate() {
        let ni = g.len() as f64;
        for &j in g {
            for c in 0..d {
                grad[j * d + c] += grad_mu[gi][c] / ni;
            }
        }
    }

    Ok(DiscriminativeLoss {
        total: l_var + l_dist + p.alpha * l_reg,
        l_var,
        l_dist,
        l_reg,
        gradient: Tensor::new(embeddings.shape().to_vec(), grad).expect("same shape as input"),
    })
}

/// Hash of the discrete pieces the discriminative loss sits in: the sign of
/// every ℓ1 coordinate difference, the state of every hinge and the sign of
/// every center coordinate.
pub fn discriminative_branches(embeddings: &Tensor, groups: &InstanceGroups, p: &DiscriminativeParams) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    let d = embeddings.cols();
    let centers: Vec<Vec<f64>> = groups
        .groups()
        .iter()
        .map(|g| {
            let mut mu = vec![0.0; d];
            for &j in g {
                for (m, v) in mu.iter_mut().zip(embeddings.row(j)) {
                    *m += v;
                }
            }
            mu.iter_mut().for_each(|m| *m /= g.len() as f64);
            mu
        })
        .collect();
    let s = |x: f64| sign(x) as i8;
    for (g, mu) in groups.groups().iter().zip(&centers) {
        for &j in g {
            let e = embeddings.row(j);
            mu.iter().zip(e).for_each(|(a, b)| s(a - b).hash(&mut h));
            let dist: f64 = mu.iter().zip(e).map(|(a, b)| (a - b).abs()).sum();
            s(dist - p.delta_v).hash(&mut h);
        }
        mu.iter().for_each(|&m| s(m).hash(&mut h));
    }
    for a in 0..centers.len() {
        for b in a + 1..centers.len() {
            centers[a].iter().zip(&centers[b]).for_each(|(x, y)| s(x - y).hash(&mut h));
            let dist: f64 = centers[a].iter().zip(&centers[b]).map(|(x, y)| (x - y).abs()).sum();
            s(2.0 * p.delta_d - dist).hash(&mut h);
        }
    }
    h.finish()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrossEntropy {
    pub value: f64,
    pub gradient: Tensor,
    pub labeled: usize,
}

/// Mean negative log-softmax of the true class over labeled rows.
/// `None` entries are unlabeled and ignored.
pub fn cross_entropy(logits: &Tensor, labels: &[Option<usize>]) -> Result<CrossEntropy, LossError> {
    let n = logits.rows();
    let c = logits.cols();
    if labels.len() != n {
        return Err(LossError::LengthMismatch { expected: n, got: labels.len() });
    }
    let labeled = labels.iter().filter(|l| l.is_some()).count();
    if labeled == 0 {
        return Err(LossError::NoLabeledPoints);
    }
    let mut grad = vec![0.0; n * c];
    let mut total = 0.0;
    let inv = 1.0 / labeled as f64;
    for (i, label) in labels.iter().enumerate() {
        let Some(y) = *label else { continue };
        if y >= c {
            return Err(LossError::LabelOutOfRange { label: y, classes: c });
        }
        let row = logits.row(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let log_z = z.ln() + m;
        total += log_z - row[y];
        for k in 0..c {
            let prob = (row[k] - log_z).exp();
            grad[i * c + k] = inv * (prob - if k == y { 1.0 } else { 0.0 });
        }
    }
    Ok(CrossEntropy {
        value: total * inv,
        gradient: Tensor::new(logits.shape().to_vec(), grad).expect("same shape as input"),
        labeled,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub cross_entropy: f64,
    pub discriminative: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { cross_entropy: 1.0, discriminative: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TotalLoss {
    pub total: f64,
    pub cross_entropy: CrossEntropy,
    /// `None` when the block holds no labeled instance.
    pub discriminative: Option<DiscriminativeLoss>,
}

/// Weighted sum of cross entropy on the logits and the discriminative loss
/// on the embeddings.
pub fn total_loss(
    logits: &Tensor,
    embeddings: &Tensor,
    labels: &[Option<usize>],
    groups: &InstanceGroups,
    p: &DiscriminativeParams,
    weights: &LossWeights,
) -> Result<TotalLoss, LossError> {
    let ce = cross_entropy(logits, labels)?;
    let disc = if groups.is_empty() { None } else { Some(discriminative_loss(embeddings, groups, p)?) };
    let total = weights.cross_entropy * ce.value
        + weights.discriminative * disc.as_ref().map_or(0.0, |d| d.total);
    Ok(TotalLoss { total, cross_entropy: ce, discriminative: disc })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(vals: &[f64]) -> Tensor {
        let rows: Vec<[f64; 1]> = vals.iter().map(|&v| [v]).collect();
        Tensor::from_rows(&rows).unwrap()
    }

    #[test]
    fn single_instance_pull_and_regularizer() {
        let e = column(&[0.0, 2.0]);
        let g = InstanceGroups::new(vec![vec![0, 1]]);
        let l = discriminative_loss(&e, &g, &DiscriminativeParams::default()).unwrap();
        assert!((l.l_var - 0.25).abs() < 1e-12);
        assert_eq!(l.l_dist, 0.0);
        assert!((l.l_reg - 1.0).abs() < 1e-12);
        assert!((l.total - 0.251).abs() < 1e-12);
    }

    #[test]
    fn two_close_centers_repel() {
        let e = column(&[0.0, 1.0]);
        let g = InstanceGroups::new(vec![vec![0], vec![1]]);
        let l = discriminative_loss(&e, &g, &DiscriminativeParams::default()).unwrap();
        assert!((l.l_dist - 4.0).abs() < 1e-12);
        assert_eq!(l.l_var, 0.0);
    }

    #[test]
    fn inactive_hinges_give_zero() {
        let e = Tensor::from_rows(&[[0.1, 0.0], [-0.1, 0.0], [5.0, 0.1], [5.0, -0.1]]).unwrap();
        let g = InstanceGroups::new(vec![vec![0, 1], vec![2, 3]]);
        let l = discriminative_loss(&e, &g, &DiscriminativeParams::default()).unwrap();
        assert_eq!(l.l_var, 0.0);
        assert_eq!(l.l_dist, 0.0);
    }

    #[test]
    fn empty_groups_rejected() {
        let e = column(&[0.0]);
        assert_eq!(
            discriminative_loss(&e, &InstanceGroups::new(vec![]), &DiscriminativeParams::default()),
            Err(LossError::NoGroups)
        );
    }

    #[test]
    fn groups_from_ids_skip_unlabeled() {
        let g = InstanceGroups::from_instance_ids(&[3, -1, 0, 3, 0, -1]);
        assert_eq!(g.groups(), &[vec![0, 3], vec![2, 4]]);
    }

    #[test]
    fn cross_entropy_examples() {
        let uniform = Tensor::from_rows(&[[0.3; 4]]).unwrap();
        let ce = cross_entropy(&uniform, &[Some(2)]).unwrap();
        assert!((ce.value - 4f64.ln()).abs() < 1e-12);

        let confident = Tensor::from_rows(&[[50.0, 0.0, 0.0]]).unwrap();
        assert!(cross_entropy(&confident, &[Some(0)]).unwrap().value < 1e-6);

        let two = Tensor::from_rows(&[[0.0, 3f64.ln()]]).unwrap();
        let ce = cross_entropy(&two, &[Some(1)]).unwrap();
        assert!((ce.value - (4.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_ignores_unlabeled_rows() {
        let l = Tensor::from_rows(&[[1.0, -1.0], [100.0, -100.0]]).unwrap();
        let ce = cross_entropy(&l, &[Some(0), None]).unwrap();
        assert_eq!(ce.labeled, 1);
        assert_eq!(ce.gradient.row(1), &[0.0, 0.0]);
        assert_eq!(cross_entropy(&l, &[None, None]).unwrap_err(), LossError::NoLabeledPoints);
        assert!(cross_entropy(&l, &[Some(2), None]).is_err());
    }

    #[test]
    fn total_is_weighted_sum_of_parts() {
        let logits = Tensor::from_rows(&[[0.2, 0.1], [0.0, 1.0], [0.5, 0.5]]).unwrap();
        let emb = column(&[0.0, 1.0, 3.0]);
        let labels = [Some(0), Some(1), Some(1)];
        let groups = InstanceGroups::new(vec![vec![0, 1], vec![2]]);
        let p = DiscriminativeParams::default();
        let w = LossWeights { cross_entropy: 0.5, discriminative: 2.0 };
        let t = total_loss(&logits, &emb, &labels, &groups, &p, &w).unwrap();
        let ce = cross_entropy(&logits, &labels).unwrap();
        let d = discriminative_loss(&emb, &groups, &p).unwrap();
        assert_eq!(t.total, 0.5 * ce.value + 2.0 * d.total);
    }
}
