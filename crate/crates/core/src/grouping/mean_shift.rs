use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeanShiftConfig {
    pub bandwidth: f64,
    pub max_iterations: usize,
    pub convergence_tol: f64,
    /// Defaults to half the bandwidth when `None`.
    pub mode_merge_radius: Option<f64>,
}

impl Default for MeanShiftConfig {
    fn default() -> Self {
        Self { bandwidth: 0.6, max_iterations: 300, convergence_tol: 1e-4, mode_merge_radius: None }
    }
}

impl MeanShiftConfig {
    pub fn merge_radius(&self) -> f64 {
        self.mode_merge_radius.unwrap_or(0.5 * self.bandwidth)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Flat-kernel mean-shift with every point as a seed.
///
/// Returns one cluster id per row; ids are dense from 0 and ordered by the
/// index of each cluster's first member.
pub fn mean_shift(embeddings: &Tensor, cfg: &MeanShiftConfig) -> Vec<usize> {
    let n = embeddings.rows();
    if n == 0 {
        return Vec::new();
    }
    let d = embeddings.cols();
    let bw2 = cfg.bandwidth * cfg.bandwidth;
    let tol2 = cfg.convergence_tol * cfg.convergence_tol;
    let data = embeddings.data();

    let mut modes: Vec<f64> = data.to_vec();
    let mut mean = vec![0.0; d];
    for s in 0..n {
        let seed = &mut modes[s * d..(s + 1) * d];
        for _ in 0..cfg.max_iterations {
            mean.fill(0.0);
            let mut count = 0usize;
            for row in data.chunks(d) {
                if sq_dist(seed, row) <= bw2 {
                    count += 1;
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
            }
            if count == 0 {
                break;
            }
            mean.iter_mut().for_each(|m| *m /= count as f64);
            let shift = sq_dist(seed, &mean);
            seed.copy_from_slice(&mean);
            if shift < tol2 {
                break;
            }
        }
    }

    let merge2 = cfg.merge_radius() * cfg.merge_radius();
    let mut reps: Vec<usize> = Vec::new();
    let mut ids = Vec::with_capacity(n);
    for i in 0..n {
        let m = &modes[i * d..(i + 1) * d];
        let found = reps.iter().position(|&r| sq_dist(&modes[r * d..(r + 1) * d], m) <= merge2);
        match found {
            Some(c) => ids.push(c),
            None => {
                reps.push(i);
                ids.push(reps.len() - 1);
            }
        }
    }
    ids
}

/// Relabels ids densely by order of first appearance.
pub fn canonical_labels<T: Eq + std::hash::Hash + Copy>(labels: &[T]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}
