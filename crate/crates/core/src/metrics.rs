//! Instance metrics (coverage, weighted coverage, precision and recall at an
//! IoU threshold) and semantic metrics (overall/mean accuracy, mean IoU).
//!
//! Coverage of ground-truth regions `G` by predicted regions `O`:
//!
//! ```text
//! Cov(G, O)  = Σ_i 1/|G| · max_j IoU(g_i, o_j)
//! WCov(G, O) = Σ_i w_i · max_j IoU(g_i, o_j),   w_i = |g_i| / Σ_k |g_k|
//! ```
//!
//! Coverage is class-agnostic. Precision and recall match a prediction to a
//! ground-truth region of the same class only, greedily in descending IoU.
//! Scene results are pooled per class before class means are taken; only
//! classes present in the ground truth enter the means.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("ground truth has no regions")]
    EmptyGroundTruth,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("iou threshold {0} not in (0, 1]")]
    Threshold(f64),
}

/// A set of point indices with a class label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    /// Sorted and free of duplicates.
    points: Vec<usize>,
    pub class: usize,
}

impl Region {
    pub fn new(mut points: Vec<usize>, class: usize) -> Self {
        points.sort_unstable();
        points.dedup();
        Self { points, class }
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Disjoint, non-empty regions.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RegionSet {
    regions: Vec<Region>,
}

impl RegionSet {
    /// Keeps non-empty regions; callers guarantee disjointness.
    pub fn new(regions: Vec<Region>) -> Self {
        Self { regions: regions.into_iter().filter(|r| !r.is_empty()).collect() }
    }

    /// One region per non-negative instance id, ordered by first point;
    /// the class is the most frequent semantic label (smallest on ties).
    pub fn from_labels(instance_ids: &[i64], semantic: &[usize]) -> Result<Self, MetricsError> {
        if instance_ids.len() != semantic.len() {
            return Err(MetricsError::LengthMismatch(format!(
                "{} instance ids, {} semantic labels",
                instance_ids.len(),
                semantic.len()
            )));
        }
        let mut slot: HashMap<i64, usize> = HashMap::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for (i, &id) in instance_ids.iter().enumerate() {
            if id < 0 {
                continue;
            }
            let k = *slot.entry(id).or_insert_with(|| {
                members.push(Vec::new());
                members.len() - 1
            });
            members[k].push(i);
        }
        let regions = members
            .into_iter()
            .map(|pts| {
                let class = crate::grouping::mode_of(pts.iter().map(|&p| semantic[p])).expect("non-empty");
                Region { points: pts, class }
            })
            .collect();
        Ok(Self { regions })
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn push(&mut self, region: Region) {
        if !region.is_empty() {
            self.regions.push(region);
        }
    }

    fn point_owner(&self) -> HashMap<usize, usize> {
        let mut owner = HashMap::new();
        for (k, r) in self.regions.iter().enumerate() {
            for &p in &r.points {
                owner.insert(p, k);
            }
        }
        owner
    }
}

/// `|a ∩ b| / |a ∪ b|`.
pub fn iou(a: &Region, b: &Region) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.points.len() && j < b.points.len() {
        match a.points[i].cmp(&b.points[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Sparse IoU table: for every gt region, `(pred index, IoU)` of each
/// overlapping prediction.
fn overlap_table(gt: &RegionSet, pred: &RegionSet) -> Vec<Vec<(usize, f64)>> {
    let owner = pred.point_owner();
    gt.regions
        .iter()
        .map(|g| {
            let mut inter: HashMap<usize, usize> = HashMap::new();
            for p in &g.points {
                if let Some(&k) = owner.get(p) {
                    *inter.entry(k).or_insert(0) += 1;
                }
            }
            let mut row: Vec<(usize, f64)> = inter
                .into_iter()
                .map(|(k, c)| (k, c as f64 / (g.len() + pred.regions[k].len() - c) as f64))
                .collect();
            row.sort_by_key(|e| e.0);
            row
        })
        .collect()
}

/// Best IoU of each gt region against any prediction.
pub fn best_ious(gt: &RegionSet, pred: &RegionSet) -> Vec<f64> {
    overlap_table(gt, pred)
        .into_iter()
        .map(|row| row.into_iter().map(|e| e.1).fold(0.0, f64::max))
        .collect()
}

fn coverage_from(sizes: &[usize], best: &[f64], weighted: bool) -> f64 {
    if weighted {
        let total: usize = sizes.iter().sum();
        sizes.iter().zip(best).map(|(&s, &b)| s as f64 * b).sum::<f64>() / total as f64
    } else {
        best.iter().sum::<f64>() / best.len() as f64
    }
}

/// Unweighted (`Cov`) or size-weighted (`WCov`) coverage.
pub fn coverage(gt: &RegionSet, pred: &RegionSet, weighted: bool) -> Result<f64, MetricsError> {
    if gt.is_empty() {
        return Err(MetricsError::EmptyGroundTruth);
    }
    let sizes: Vec<usize> = gt.regions.iter().map(Region::len).collect();
    Ok(coverage_from(&sizes, &best_ious(gt, pred), weighted))
}

/// Per-class match counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MatchCounts {
    pub true_positives: usize,
    pub predictions: usize,
    pub ground_truth: usize,
}

/// Greedy one-to-one matching of same-class regions with
/// `IoU >= threshold`, highest IoU first (ties by gt then pred index).
pub fn match_counts(
    gt: &RegionSet,
    pred: &RegionSet,
    threshold: f64,
) -> Result<BTreeMap<usize, MatchCounts>, MetricsError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(MetricsError::Threshold(threshold));
    }
    let mut out: BTreeMap<usize, MatchCounts> = BTreeMap::new();
    for g in &gt.regions {
        out.entry(g.class).or_default().ground_truth += 1;
    }
    for p in &pred.regions {
        out.entry(p.class).or_default().predictions += 1;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (gi, row) in overlap_table(gt, pred).into_iter().enumerate() {
        for (pi, v) in row {
            if v >= threshold && gt.regions[gi].class == pred.regions[pi].class {
                pairs.push((v, gi, pi));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_used = vec![false; gt.len()];
    let mut pred_used = vec![false; pred.len()];
    for (_, gi, pi) in pairs {
        if !gt_used[gi] && !pred_used[pi] {
            gt_used[gi] = true;
            pred_used[pi] = true;
            out.entry(gt.regions[gi].class).or_default().true_positives += 1;
        }
    }
    Ok(out)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Class-mean precision and recall over classes present in `gt`.
pub fn prec_recall(gt: &RegionSet, pred: &RegionSet, threshold: f64) -> Result<(f64, f64), MetricsError> {
    let counts = match_counts(gt, pred, threshold)?;
    let present: Vec<&MatchCounts> = counts.values().filter(|c| c.ground_truth > 0).collect();
    if present.is_empty() {
        return Ok((0.0, 0.0));
    }
    let k = present.len() as f64;
    let p = present.iter().map(|c| ratio(c.true_positives, c.predictions)).sum::<f64>() / k;
    let r = present.iter().map(|c| ratio(c.true_positives, c.ground_truth)).sum::<f64>() / k;
    Ok((p, r))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticScores {
    pub overall_accuracy: f64,
    pub mean_accuracy: f64,
    pub mean_iou: f64,
    /// `None` for classes absent from the ground truth.
    pub per_class_iou: Vec<Option<f64>>,
    pub per_class_accuracy: Vec<Option<f64>>,
}

/// `confusion[gt][pred]` counts.
pub fn confusion_matrix(pred: &[usize], gt: &[usize], n_classes: usize) -> Result<Vec<Vec<u64>>, MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::LengthMismatch(format!("{} predictions, {} labels", pred.len(), gt.len())));
    }
    let mut m = vec![vec![0u64; n_classes]; n_classes];
    for (&p, &g) in pred.iter().zip(gt) {
        for label in [p, g] {
            if label >= n_classes {
                return Err(MetricsError::LabelOutOfRange { label, classes: n_classes });
            }
        }
        m[g][p] += 1;
    }
    Ok(m)
}

pub fn scores_from_confusion(m: &[Vec<u64>]) -> SemanticScores {
    let n = m.len();
    let total: u64 = m.iter().flatten().sum();
    let trace: u64 = (0..n).map(|c| m[c][c]).sum();
    let mut per_iou = vec![None; n];
    let mut per_acc = vec![None; n];
    for c in 0..n {
        let row: u64 = m[c].iter().sum();
        if row == 0 {
            continue;
        }
        let col: u64 = (0..n).map(|r| m[r][c]).sum();
        let tp = m[c][c];
        per_acc[c] = Some(tp as f64 / row as f64);
        per_iou[c] = Some(tp as f64 / (row + col - tp) as f64);
    }
    let mean = |v: &[Option<f64>]| {
        let xs: Vec<f64> = v.iter().flatten().copied().collect();
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    SemanticScores {
        overall_accuracy: if total == 0 { 0.0 } else { trace as f64 / total as f64 },
        mean_accuracy: mean(&per_acc),
        mean_iou: mean(&per_iou),
        per_class_iou: per_iou,
        per_class_accuracy: per_acc,
    }
}

pub fn semantic_scores(pred: &[usize], gt: &[usize], n_classes: usize) -> Result<SemanticScores, MetricsError> {
    Ok(scores_from_confusion(&confusion_matrix(pred, gt, n_classes)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: usize,
    pub gt_instances: usize,
    pub pred_instances: usize,
    pub cov: Option<f64>,
    pub wcov: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub iou: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegMetrics {
    pub m_cov: f64,
    pub m_wcov: f64,
    pub m_prec: f64,
    pub m_rec: f64,
    pub o_acc: f64,
    pub m_acc: f64,
    pub m_iou: f64,
    pub per_class: Vec<ClassScores>,
    pub scenes: usize,
    pub iou_threshold: f64,
    pub matching: String,
    pub class_mean: String,
}

/// Pools scene results and reports class means.
#[derive(Clone, Debug)]
pub struct Evaluator {
    n_classes: usize,
    iou_threshold: f64,
    confusion: Vec<Vec<u64>>,
    /// Per class: `(gt size, best IoU)` of every gt instance seen.
    coverage: Vec<Vec<(usize, f64)>>,
    counts: Vec<MatchCounts>,
    scenes: usize,
}

impl Evaluator {
    pub fn new(n_classes: usize, iou_threshold: f64) -> Self {
        Self {
            n_classes,
            iou_threshold,
            confusion: vec![vec![0; n_classes]; n_classes],
            coverage: vec![Vec::new(); n_classes],
            counts: vec![MatchCounts::default(); n_classes],
            scenes: 0,
        }
    }

    /// Adds one scene given gt and predicted per-point labels.
    pub fn add_scene(
        &mut self,
        gt_semantic: &[usize],
        gt_instances: &[i64],
        pred_semantic: &[usize],
        pred_instances: &[i64],
    ) -> Result<(), MetricsError> {
        let n = gt_semantic.len();
        for (what, len) in [("gt instances", gt_instances.len()), ("pred semantic", pred_semantic.len()), ("pred instances", pred_instances.len())] {
            if len != n {
                return Err(MetricsError::LengthMismatch(format!("{what}: {len} vs {n} points")));
            }
        }
        let m = confusion_matrix(pred_semantic, gt_semantic, self.n_classes)?;
        for (acc, row) in self.confusion.iter_mut().zip(m) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        let gt = RegionSet::from_labels(gt_instances, gt_semantic)?;
        let pred = RegionSet::from_labels(pred_instances, pred_semantic)?;
        for (region, best) in gt.regions().iter().zip(best_ious(&gt, &pred)) {
            self.coverage[region.class].push((region.len(), best));
        }
        for (class, c) in match_counts(&gt, &pred, self.iou_threshold)? {
            let slot = &mut self.counts[class];
            slot.true_positives += c.true_positives;
            slot.predictions += c.predictions;
            slot.ground_truth += c.ground_truth;
        }
        self.scenes += 1;
        Ok(())
    }

    pub fn finish(&self) -> SegMetrics {
        let sem = scores_from_confusion(&self.confusion);
        let mut per_class = Vec::with_capacity(self.n_classes);
        for c in 0..self.n_classes {
            let cov = &self.coverage[c];
            let counts = &self.counts[c];
            let has_gt = !cov.is_empty();
            let sizes: Vec<usize> = cov.iter().map(|e| e.0).collect();
            let best: Vec<f64> = cov.iter().map(|e| e.1).collect();
            per_class.push(ClassScores {
                class: c,
                gt_instances: counts.ground_truth,
                pred_instances: counts.predictions,
                cov: has_gt.then(|| coverage_from(&sizes, &best, false)),
                wcov: has_gt.then(|| coverage_from(&sizes, &best, true)),
                precision: has_gt.then(|| ratio(counts.true_positives, counts.predictions)),
                recall: has_gt.then(|| ratio(counts.true_positives, counts.ground_truth)),
                iou: sem.per_class_iou[c],
                accuracy: sem.per_class_accuracy[c],
            });
        }
        let mean = |f: fn(&ClassScores) -> Option<f64>| {
            let xs: Vec<f64> = per_class.iter().filter_map(f).collect();
            if xs.is_empty() {
                0.0
            } else {
                xs.iter().sum::<f64>() / xs.len() as f64
            }
        };
        SegMetrics {
            m_cov: mean(|c| c.cov),
            m_wcov: mean(|c| c.wcov),
            m_prec: mean(|c| c.precision),
            m_rec: mean(|c| c.recall),
            o_acc: sem.overall_accuracy,
            m_acc: sem.mean_accuracy,
            m_iou: sem.mean_iou,
            per_class,
            scenes: self.scenes,
            iou_threshold: self.iou_threshold,
            matching: "greedy one-to-one, descending IoU, same class only".into(),
            class_mean: "mean over classes present in ground truth; scenes pooled per class".into(),
        }
    }
}

impl SegMetrics {
    /// Human-readable summary table.
    pub fn table(&self) -> String {
        use std::fmt::Write as _;
        let f = |v: Option<f64>| v.map_or_else(|| "   -  ".to_string(), |x| format!("{x:6.4}"));
        let mut s = String::new();
        let _ = writeln!(s, "scenes: {}   IoU threshold: {}", self.scenes, self.iou_threshold);
        let _ = writeln!(
            s,
            "mCov {:.4}  mWCov {:.4}  mPrec {:.4}  mRec {:.4}  oAcc {:.4}  mAcc {:.4}  mIoU {:.4}",
            self.m_cov, self.m_wcov, self.m_prec, self.m_rec, self.o_acc, self.m_acc, self.m_iou
        );
        let _ = writeln!(s, "class  #gt  #pred  Cov     WCov    Prec    Rec     IoU     Acc");
        for c in &self.per_class {
            let _ = writeln!(
                s,
                "{:5} {:4} {:6}  {}  {}  {}  {}  {}  {}",
                c.class,
                c.gt_instances,
                c.pred_instances,
                f(c.cov),
                f(c.wcov),
                f(c.precision),
                f(c.recall),
                f(c.iou),
                f(c.accuracy)
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(points: &[usize], class: usize) -> Region {
        Region::new(points.to_vec(), class)
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&r(&[1, 2, 3], 0), &r(&[1, 2, 3], 0)), 1.0);
        assert_eq!(iou(&r(&[1, 2], 0), &r(&[3, 4], 0)), 0.0);
        assert_eq!(iou(&r(&[1, 2, 3], 0), &r(&[2, 3, 4], 0)), 0.5);
    }

    #[test]
    fn coverage_examples() {
        let gt = RegionSet::new(vec![r(&[0, 1, 2], 0), r(&[3], 1)]);
        assert_eq!(coverage(&gt, &gt, false).unwrap(), 1.0);
        assert_eq!(coverage(&gt, &gt, true).unwrap(), 1.0);
        let pred = RegionSet::new(vec![r(&[0, 1, 2], 0)]);
        assert_eq!(coverage(&gt, &pred, false).unwrap(), 0.5);
        assert_eq!(coverage(&gt, &pred, true).unwrap(), 0.75);
        assert_eq!(coverage(&gt, &RegionSet::default(), false).unwrap(), 0.0);
        assert_eq!(coverage(&RegionSet::default(), &pred, false), Err(MetricsError::EmptyGroundTruth));
    }

    #[test]
    fn precision_recall_examples() {
        let gt = RegionSet::new(vec![r(&[0, 1], 0), r(&[2, 3], 0)]);
        assert_eq!(prec_recall(&gt, &gt, 0.5).unwrap(), (1.0, 1.0));
        let pred = RegionSet::new(vec![r(&[0, 1], 0), r(&[7, 8], 0)]);
        assert_eq!(prec_recall(&gt, &pred, 0.5).unwrap(), (0.5, 0.5));
        let wrong_class = RegionSet::new(vec![r(&[0, 1], 1), r(&[2, 3], 1)]);
        assert_eq!(prec_recall(&gt, &wrong_class, 0.5).unwrap(), (0.0, 0.0));
        assert!(prec_recall(&gt, &gt, 0.0).is_err());
    }

    #[test]
    fn semantic_examples() {
        let s = semantic_scores(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!((s.overall_accuracy, s.mean_accuracy, s.mean_iou), (1.0, 1.0, 1.0));
        let s = semantic_scores(&[1, 0, 1], &[0, 1, 0], 2).unwrap();
        assert_eq!((s.overall_accuracy, s.mean_iou), (0.0, 0.0));
        // confusion [[2,1,0],[0,2,0],[0,0,1]]
        let gt = [0, 0, 0, 1, 1, 2];
        let pred = [0, 0, 1, 1, 1, 2];
        let s = semantic_scores(&pred, &gt, 3).unwrap();
        assert!((s.overall_accuracy - 5.0 / 6.0).abs() < 1e-15);
        assert!((s.per_class_iou[0].unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(semantic_scores(&[0], &[0, 1], 2).is_err());
    }

    #[test]
    fn evaluator_perfect_scene() {
        let sem = [0, 0, 1, 1, 1, 2];
        let inst = [0, 0, 1, 1, 2, 3];
        let mut ev = Evaluator::new(3, 0.5);
        ev.add_scene(&sem, &inst, &sem, &inst).unwrap();
        let m = ev.finish();
        for v in [m.m_cov, m.m_wcov, m.m_prec, m.m_rec, m.o_acc, m.m_acc, m.m_iou] {
            assert_eq!(v, 1.0);
        }
        assert!(m.table().contains("mWCov 1.0000"));
    }

    #[test]
    fn unlabeled_points_form_no_region() {
        let rs = RegionSet::from_labels(&[-1, 0, 0, -1], &[0, 1, 1, 0]).unwrap();
        assert_eq!(rs.len(), 1);
        assert_eq!(rs.regions()[0].points(), &[1, 2]);
        assert_eq!(rs.regions()[0].class, 1);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn labels() -> impl Strategy<Value = (Vec<usize>, Vec<i64>, Vec<i64>)> {
        (1usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec(0usize..3, n),
                proptest::collection::vec(0i64..5, n),
                proptest::collection::vec(-1i64..5, n),
            )
        })
    }

    proptest! {
        #[test]
        fn coverage_in_unit_interval((sem, gt, pred) in labels()) {
            let g = RegionSet::from_labels(&gt, &sem).unwrap();
            let p = RegionSet::from_labels(&pred, &sem).unwrap();
            for w in [false, true] {
                let c = coverage(&g, &p, w).unwrap();
                prop_assert!((0.0..=1.0).contains(&c));
            }
            prop_assert_eq!(coverage(&g, &g, false).unwrap(), 1.0);
        }

        #[test]
        fn equal_sizes_make_weighting_irrelevant(k in 1usize..6, size in 1usize..5, shift in 0usize..4) {
            let gt: Vec<i64> = (0..k * size).map(|i| (i / size) as i64).collect();
            let pred: Vec<i64> = (0..k * size).map(|i| ((i + shift) / size) as i64).collect();
            let sem = vec![0; k * size];
            let g = RegionSet::from_labels(&gt, &sem).unwrap();
            let p = RegionSet::from_labels(&pred, &sem).unwrap();
            let a = coverage(&g, &p, false).unwrap();
            let b = coverage(&g, &p, true).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn relabeling_predictions_changes_nothing((sem, gt, pred) in labels(), offset in 10i64..100) {
            let g = RegionSet::from_labels(&gt, &sem).unwrap();
            let p = RegionSet::from_labels(&pred, &sem).unwrap();
            let renamed: Vec<i64> = pred.iter().map(|&v| if v < 0 { v } else { offset - v }).collect();
            let q = RegionSet::from_labels(&renamed, &sem).unwrap();
            prop_assert_eq!(coverage(&g, &p, true).unwrap(), coverage(&g, &q, true).unwrap());
            prop_assert_eq!(prec_recall(&g, &p, 0.5).unwrap(), prec_recall(&g, &q, 0.5).unwrap());
        }

        #[test]
        fn higher_threshold_never_adds_matches((sem, gt, pred) in labels(), t in 0.5f64..0.9) {
            let g = RegionSet::from_labels(&gt, &sem).unwrap();
            let p = RegionSet::from_labels(&pred, &sem).unwrap();
            let tp = |thr| match_counts(&g, &p, thr).unwrap().values().map(|c| c.true_positives).sum::<usize>();
            prop_assert!(tp(t + 0.1) <= tp(t));
        }

        #[test]
        fn perfect_semantics_score_one(sem in proptest::collection::vec(0usize..4, 1..50)) {
            let s = semantic_scores(&sem, &sem, 4).unwrap();
            prop_assert_eq!((s.overall_accuracy, s.mean_accuracy, s.mean_iou), (1.0, 1.0, 1.0));
        }
    }
}
