//! Scores a hand-made prediction against ground truth.

use asis::metrics::{coverage, prec_recall, semantic_scores, Evaluator, RegionSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // ten points: a wall (class 0) of six points and a panel (class 1) on it
    let gt_sem = [0, 0, 0, 0, 0, 0, 1, 1, 1, 1];
    let gt_ins = [0, 0, 0, 0, 0, 0, 1, 1, 1, 1];
    // the prediction swallows one panel point into the wall
    let pred_sem = [0, 0, 0, 0, 0, 0, 0, 1, 1, 1];
    let pred_ins = [5, 5, 5, 5, 5, 5, 5, 9, 9, 9];

    let gt = RegionSet::from_labels(&gt_ins, &gt_sem)?;
    let pred = RegionSet::from_labels(&pred_ins, &pred_sem)?;
    println!("Cov {:.4}  WCov {:.4}", coverage(&gt, &pred, false)?, coverage(&gt, &pred, true)?);
    let (p, r) = prec_recall(&gt, &pred, 0.5)?;
    println!("mPrec {p:.4}  mRec {r:.4}");
    let s = semantic_scores(&pred_sem, &gt_sem, 2)?;
    println!("oAcc {:.4}  mAcc {:.4}  mIoU {:.4}", s.overall_accuracy, s.mean_accuracy, s.mean_iou);

    let mut ev = Evaluator::new(2, 0.5);
    ev.add_scene(&gt_sem, &gt_ins, &pred_sem, &pred_ins)?;
    let m = ev.finish();
    print!("{}", m.table());
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(())
}
