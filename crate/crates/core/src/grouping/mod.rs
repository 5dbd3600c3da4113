//! Turning embeddings into instances: mean-shift, per-instance semantic
//! voting, and merging of overlapping blocks into scene instances.

mod mean_shift;
mod merge;

pub use mean_shift::{canonical_labels, mean_shift, MeanShiftConfig};
pub use merge::{block_merge, BlockInstances, MergeConfig};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GroupingError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("point {0} is not covered by any block")]
    Uncovered(usize),
    #[error("invalid block: {0}")]
    InvalidBlock(String),
}

/// Per-point instance ids with one semantic class per instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceSegmentation {
    pub instance_ids: Vec<usize>,
    /// `classes[k]` is the class of instance `k`.
    pub classes: Vec<usize>,
}

impl InstanceSegmentation {
    pub fn len(&self) -> usize {
        self.instance_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instance_ids.is_empty()
    }

    pub fn instance_count(&self) -> usize {
        self.classes.len()
    }

    /// The instance class broadcast to each point.
    pub fn point_classes(&self) -> Vec<usize> {
        self.instance_ids.iter().map(|&k| self.classes[k]).collect()
    }
}

/// Most frequent value, smallest on ties.
pub(crate) fn mode_of(values: impl IntoIterator<Item = usize>) -> Option<usize> {
    let mut counts: Vec<usize> = Vec::new();
    for v in values {
        if v >= counts.len() {
            counts.resize(v + 1, 0);
        }
        counts[v] += 1;
    }
    let mut best: Option<(usize, usize)> = None;
    for (v, &c) in counts.iter().enumerate() {
        if c > 0 && best.map_or(true, |(_, bc)| c > bc) {
            best = Some((v, c));
        }
    }
    best.map(|b| b.0)
}

/// Gives each cluster the most frequent predicted class of its members.
/// Cluster ids are relabeled densely by first appearance.
pub fn assign_instance_classes(
    cluster_ids: &[usize],
    semantic: &[usize],
) -> Result<InstanceSegmentation, GroupingError> {
    if cluster_ids.len() != semantic.len() {
        return Err(GroupingError::LengthMismatch(format!(
            "{} cluster ids, {} semantic labels",
            cluster_ids.len(),
            semantic.len()
        )));
    }
    let ids = canonical_labels(cluster_ids);
    let k = ids.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (&id, &s) in ids.iter().zip(semantic) {
        members[id].push(s);
    }
    let classes = members
        .into_iter()
        .map(|m| mode_of(m).expect("every cluster has a member"))
        .collect();
    Ok(InstanceSegmentation { instance_ids: ids, classes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_and_tie_rules() {
        let seg = assign_instance_classes(&[0, 0, 0, 1, 1, 1, 1, 2], &[2, 2, 3, 1, 1, 2, 2, 5]).unwrap();
        assert_eq!(seg.classes, vec![2, 1, 5]);
        assert_eq!(seg.point_classes(), vec![2, 2, 2, 1, 1, 1, 1, 5]);
    }

    #[test]
    fn ids_are_relabeled_densely() {
        let seg = assign_instance_classes(&[4, 9, 4], &[0, 1, 0]).unwrap();
        assert_eq!(seg.instance_ids, vec![0, 1, 0]);
        assert_eq!(seg.classes, vec![0, 1]);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(assign_instance_classes(&[0, 1], &[0]).is_err());
    }
}
