//! Multi-label metrics (mAP, CF1, OF1), localization AP50, and aggregation
//! over tasks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral_cut::BBox;

pub const F1_THRESHOLD: f64 = 0.5;
pub const IOU_THRESHOLD: f64 = 0.5;

/// Scores and binary truths, one row per sample, one column per class.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalRecord {
    pub scores: Vec<Vec<f64>>,
    pub truths: Vec<Vec<bool>>,
}

impl EvalRecord {
    pub fn push(&mut self, scores: Vec<f64>, truths: Vec<bool>) {
        self.scores.push(scores);
        self.truths.push(truths);
    }

    pub fn n_classes(&self) -> usize {
        self.scores.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scores.len() != self.truths.len() {
            return Err(Error::Shape("scores and truths differ in sample count".into()));
        }
        let c = self.n_classes();
        for (s, t) in self.scores.iter().zip(&self.truths) {
            if s.len() != c || t.len() != c {
                return Err(Error::Shape("ragged evaluation record".into()));
            }
            if s.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Shape("scores must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Mean of precision at each positive's rank, ranking by descending score
/// with ties kept in index order. `None` when there are no positives.
pub fn average_precision(scores: &[f64], truths: &[bool]) -> Option<f64> {
    let positives = truths.iter().filter(|&&t| t).count();
    if positives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if truths[i] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(total / positives as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MultiLabelScores {
    pub map: f64,
    pub cf1: f64,
    pub of1: f64,
    /// Classes left out of mAP for having no positives.
    pub skipped_classes: usize,
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

pub fn map_cf1_of1(rec: &EvalRecord, threshold: f64) -> Result<MultiLabelScores> {
    rec.validate()?;
    let c = rec.n_classes();
    let mut out = MultiLabelScores::default();
    if c == 0 {
        return Ok(out);
    }
    let mut aps = Vec::new();
    let mut f1_sum = 0.0;
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    for k in 0..c {
        let s: Vec<f64> = rec.scores.iter().map(|r| r[k]).collect();
        let t: Vec<bool> = rec.truths.iter().map(|r| r[k]).collect();
        match average_precision(&s, &t) {
            Some(ap) => aps.push(ap),
            None => out.skipped_classes += 1,
        }
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (&score, &truth) in s.iter().zip(&t) {
            match (score >= threshold, truth) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        f1_sum += f1(tp, fp, fn_);
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
    }
    out.map = if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    };
    out.cf1 = f1_sum / c as f64;
    out.of1 = f1(tp_all, fp_all, fn_all);
    Ok(out)
}

/// Class-agnostic AP at IoU 0.5. `preds[i]` holds scored boxes for image
/// `i`, `gts[i]` its ground-truth boxes. Within an image, predictions are
/// matched greedily in descending score order to the best unmatched box;
/// AP is precision averaged over the ranks of true positives, divided by
/// the total number of ground-truth boxes.
pub fn ap50(preds: &[Vec<(BBox, f64)>], gts: &[Vec<BBox>]) -> Result<f64> {
    if preds.len() != gts.len() {
        return Err(Error::Shape("prediction and ground-truth image counts differ".into()));
    }
    let n_gt: usize = gts.iter().map(Vec::len).sum();
    if n_gt == 0 {
        return Ok(0.0);
    }
    // (score, image, pred index, is true positive)
    let mut flagged = Vec::new();
    for (img, (p, g)) in preds.iter().zip(gts).enumerate() {
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by(|&a, &b| p[b].1.total_cmp(&p[a].1));
        let mut used = vec![false; g.len()];
        for i in order {
            let best = g
                .iter()
                .enumerate()
                .filter(|(j, _)| !used[*j])
                .map(|(j, gt)| (j, p[i].0.iou(gt)))
                .filter(|&(_, iou)| iou >= IOU_THRESHOLD)
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            if let Some((j, _)) = best {
                used[j] = true;
            }
            flagged.push((p[i].1, img, i, best.is_some()));
        }
    }
    flagged.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, f) in flagged.iter().enumerate() {
        if f.3 {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / n_gt as f64)
}

/// Metrics from one evaluation pass.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub map: f64,
    pub cf1: f64,
    pub of1: f64,
    pub ap50: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub avg: TaskMetrics,
    pub last: TaskMetrics,
}

/// Mean over the end-of-task evaluations, and the final one.
pub fn aggregate(per_task: &[TaskMetrics]) -> Result<Aggregate> {
    let last = *per_task
        .last()
        .ok_or_else(|| Error::config("metrics", "no task was evaluated"))?;
    let n = per_task.len() as f64;
    let mean = |f: fn(&TaskMetrics) -> f64| per_task.iter().map(f).sum::<f64>() / n;
    Ok(Aggregate {
        avg: TaskMetrics {
            map: mean(|m| m.map),
            cf1: mean(|m| m.cf1),
            of1: mean(|m| m.of1),
            ap50: mean(|m| m.ap50),
        },
        last,
    })
}

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run_id: String,
    pub task_id: usize,
    pub step: usize,
    pub metrics: TaskMetrics,
    pub mean_fiedler: f64,
    pub buffer_ratio: f64,
}

impl MetricRow {
    pub const CSV_HEADER: &'static str = "run_id,task_id,step,mAP,CF1,OF1,AP50,mean_fiedler,buffer_ratio";

    pub fn to_csv(&self) -> String {
        let m = &self.metrics;
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.run_id, self.task_id, self.step, m.map, m.cf1, m.of1, m.ap50, self.mean_fiedler, self.buffer_ratio
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[0.9, 0.8, 0.1], &[true, true, false]), Some(1.0));
        let ap = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&[0.3, 0.2], &[false, false]), None);

        // positives last among N: precision at ranks N-p+1..N
        for n in 4..10 {
            for p in 1..n / 2 {
                let scores: Vec<f64> = (0..n).map(|i| 1.0 - i as f64 / n as f64).collect();
                let truths: Vec<bool> = (0..n).map(|i| i >= n - p).collect();
                let expect = (1..=p).map(|k| k as f64 / (n - p + k) as f64).sum::<f64>() / p as f64;
                let ap = average_precision(&scores, &truths).unwrap();
                assert!((ap - expect).abs() < 1e-15);
                assert!(ap < 0.5);
            }
        }
    }

    #[test]
    fn ap_is_rank_based() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let s: Vec<f64> = (0..20).map(|_| rng.gen::<f64>()).collect();
            let t: Vec<bool> = (0..20).map(|_| rng.gen_bool(0.3)).collect();
            let warped: Vec<f64> = s.iter().map(|v| v.powi(3) * 0.5).collect();
            assert_eq!(average_precision(&s, &t), average_precision(&warped, &t));
        }
    }

    #[test]
    fn f1_examples() {
        let mut rec = EvalRecord::default();
        rec.push(vec![1.0, 0.0, 1.0], vec![true, false, true]);
        rec.push(vec![0.0, 1.0, 0.0], vec![false, true, false]);
        let m = map_cf1_of1(&rec, F1_THRESHOLD).unwrap();
        assert_eq!((m.map, m.cf1, m.of1), (1.0, 1.0, 1.0));

        let mut zero = EvalRecord::default();
        zero.push(vec![0.0, 0.0], vec![true, false]);
        zero.push(vec![0.0, 0.0], vec![false, true]);
        let m = map_cf1_of1(&zero, F1_THRESHOLD).unwrap();
        assert_eq!((m.cf1, m.of1), (0.0, 0.0));
    }

    #[test]
    fn f1_matches_confusion_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let mut rec = EvalRecord::default();
            for _ in 0..20 {
                rec.push(
                    (0..5).map(|_| rng.gen::<f64>()).collect(),
                    (0..5).map(|_| rng.gen_bool(0.4)).collect(),
                );
            }
            let m = map_cf1_of1(&rec, 0.5).unwrap();
            let mut per_class = Vec::new();
            let mut conf = [[0usize; 2]; 2];
            for k in 0..5 {
                let mut c = [[0usize; 2]; 2];
                for (s, t) in rec.scores.iter().zip(&rec.truths) {
                    c[(s[k] >= 0.5) as usize][t[k] as usize] += 1;
                }
                let (tp, fp, fn_) = (c[1][1] as f64, c[1][0] as f64, c[0][1] as f64);
                let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
                let rec_ = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
                per_class.push(if prec + rec_ > 0.0 { 2.0 * prec * rec_ / (prec + rec_) } else { 0.0 });
                for a in 0..2 {
                    for b in 0..2 {
                        conf[a][b] += c[a][b];
                    }
                }
            }
            let cf1 = per_class.iter().sum::<f64>() / 5.0;
            let (tp, fp, fn_) = (conf[1][1] as f64, conf[1][0] as f64, conf[0][1] as f64);
            let (p, r) = (tp / (tp + fp), tp / (tp + fn_));
            let of1 = 2.0 * p * r / (p + r);
            assert!((m.cf1 - cf1).abs() < 1e-12);
            assert!((m.of1 - of1).abs() < 1e-12);

            // simultaneous sample permutation leaves everything unchanged
            let mut perm = rec.clone();
            perm.scores.reverse();
            perm.truths.reverse();
            let q = map_cf1_of1(&perm, 0.5).unwrap();
            assert!((q.cf1 - m.cf1).abs() < 1e-15 && (q.of1 - m.of1).abs() < 1e-15);
        }
    }

    #[test]
    fn ap50_examples() {
        let a = BBox::new(0, 0, 3, 3);
        let b = BBox::new(4, 4, 6, 6);
        assert_eq!(ap50(&[vec![(a, 1.0), (b, 0.5)]], &[vec![a, b]]).unwrap(), 1.0);
        assert_eq!(ap50(&[vec![(a, 1.0)]], &[vec![b]]).unwrap(), 0.0);

        // 4x4 vs 4x4 shifted by two columns: overlap 8 cells, union 24
        let gt = BBox::new(0, 0, 3, 3);
        let shifted = BBox::new(0, 2, 3, 5);
        let cells = |x: &BBox| -> Vec<(usize, usize)> {
            (x.h1..=x.h2).flat_map(|r| (x.w1..=x.w2).map(move |c| (r, c))).collect()
        };
        let (cg, cs) = (cells(&gt), cells(&shifted));
        let inter = cg.iter().filter(|c| cs.contains(c)).count();
        let iou = inter as f64 / (cg.len() + cs.len() - inter) as f64;
        let expect = if iou >= 0.5 { 1.0 } else { 0.0 };
        assert_eq!(ap50(&[vec![(shifted, 1.0)]], &[vec![gt]]).unwrap(), expect);
        // 4x4 shifted by one column: 12 / 20 = 0.6
        assert_eq!(ap50(&[vec![(BBox::new(0, 1, 3, 4), 1.0)]], &[vec![gt]]).unwrap(), 1.0);

        // a gt matches at most once
        assert_eq!(ap50(&[vec![(a, 1.0), (a, 0.9)]], &[vec![a]]).unwrap(), 1.0);
        assert_eq!(ap50(&[vec![(a, 0.9), (a, 1.0)]], &[vec![a, b]]).unwrap(), 0.5);
    }

    #[test]
    fn iou_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut bx = || {
                let (h1, w1) = (rng.gen_range(0..6), rng.gen_range(0..6));
                BBox::new(h1, w1, h1 + rng.gen_range(0..3), w1 + rng.gen_range(0..3))
            };
            let (a, b) = (bx(), bx());
            assert_eq!(a.iou(&b), b.iou(&a));
            assert_eq!(a.iou(&a), 1.0);
        }
    }

    #[test]
    fn aggregate_examples() {
        let m = |v: f64| TaskMetrics {
            map: v,
            cf1: v / 2.0,
            of1: v,
            ap50: 0.0,
        };
        let one = aggregate(&[m(0.4)]).unwrap();
        assert_eq!(one.avg, one.last);
        let flat = aggregate(&[m(0.3); 4]).unwrap();
        assert!((flat.avg.map - 0.3).abs() < 1e-15);
        let two = aggregate(&[m(0.8), m(0.5)]).unwrap();
        assert!((two.avg.map - 0.65).abs() < 1e-15);
        assert_eq!(two.last.map, 0.5);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn csv_row() {
        let row = MetricRow {
            run_id: "cuter_s0".into(),
            task_id: 2,
            step: 40,
            metrics: TaskMetrics {
                map: 0.5,
                cf1: 0.25,
                of1: 0.125,
                ap50: 1.0,
            },
            mean_fiedler: 0.75,
            buffer_ratio: 1.5,
        };
        assert_eq!(MetricRow::CSV_HEADER.split(',').count(), row.to_csv().split(',').count());
        assert!(row.to_csv().starts_with("cuter_s0,2,40,0.500000,"));
    }
}
