//! Pose and bowing metrics: L1 averages, 3-D PCK, bowing direction and
//! attack extraction with tolerance-matched F1, and wrist cosine similarity.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::skeleton::{SkeletonSequence, RIGHT_WRIST};

fn same_shape(pred: &Matrix, gt: &Matrix) -> Result<()> {
    if pred.shape() != gt.shape() {
        return Err(Error::shape(format!(
            "prediction is {:?}, ground truth is {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("empty sequences"));
    }
    Ok(())
}

/// Mean absolute difference over all columns and frames.
pub fn l1_avg(pred: &Matrix, gt: &Matrix) -> Result<f64> {
    same_shape(pred, gt)?;
    let n = pred.as_slice().len() as f64;
    Ok(pred.as_slice().iter().zip(gt.as_slice()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n)
}

/// Mean absolute difference over the given columns (the wrist) and all frames.
pub fn l1_hand_avg(pred: &Matrix, gt: &Matrix, cols: &[usize]) -> Result<f64> {
    same_shape(pred, gt)?;
    l1_avg(&pred.select_cols(cols)?, &gt.select_cols(cols)?)
}

fn check_joints(m: &Matrix) -> Result<usize> {
    if m.cols() == 0 || m.cols() % 3 != 0 {
        return Err(Error::shape(format!("{} columns is not a whole number of 3-D joints", m.cols())));
    }
    Ok(m.cols() / 3)
}

/// Fraction of joints within `alpha * max(h, w, d)` of the ground truth, where
/// the box spans the ground-truth joints of each frame. Equality counts as
/// correct, so a degenerate box still accepts exact hits.
pub fn pck_at(pred: &Matrix, gt: &Matrix, alpha: f64) -> Result<f64> {
    same_shape(pred, gt)?;
    let joints = check_joints(gt)?;
    let mut correct = 0usize;
    for (p, g) in pred.row_iter().zip(gt.row_iter()) {
        let mut extent = 0.0f64;
        for axis in 0..3 {
            let vals = (0..joints).map(|j| g[3 * j + axis]);
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            extent = extent.max(hi - lo);
        }
        let thr = alpha * extent;
        correct += (0..joints)
            .filter(|&j| {
                let d2: f64 = (0..3).map(|a| (p[3 * j + a] - g[3 * j + a]).powi(2)).sum();
                d2.sqrt() <= thr
            })
            .count();
    }
    Ok(correct as f64 / (joints * pred.rows()) as f64)
}

/// [`pck_at`] averaged over `alphas`.
pub fn pck(pred: &Matrix, gt: &Matrix, alphas: &[f64]) -> Result<f64> {
    if alphas.is_empty() {
        return Err(Error::invalid("pck needs at least one alpha"));
    }
    let mut sum = 0.0;
    for &a in alphas {
        sum += pck_at(pred, gt, a)?;
    }
    Ok(sum / alphas.len() as f64)
}

/// `D(i) = 1` if `y(i+1) - y(i) > 0`, else 0. Length `L - 1`.
pub fn bowing_direction(y: &[f64]) -> Vec<u8> {
    y.windows(2).map(|w| u8::from(w[1] - w[0] > 0.0)).collect()
}

/// `A(i) = 1` where the direction changes. Length `len(D) - 1`; entry `k`
/// compares `D(k + 1)` with `D(k)`.
pub fn bowing_attacks(d: &[u8]) -> Vec<u8> {
    d.windows(2).map(|w| u8::from(w[1] != w[0])).collect()
}

pub fn attack_indices(a: &[u8]) -> Vec<usize> {
    a.iter().enumerate().filter(|(_, &v)| v != 0).map(|(i, _)| i).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub predicted: usize,
    pub actual: usize,
}

/// Size of a maximum one-to-one matching between sorted predicted and
/// ground-truth attack times, where a pair matches if `|p - g| <= delta`.
///
/// Predictions are visited in ascending order and each takes the earliest
/// unconsumed ground-truth attack in its window. Because every window has
/// the same width, windows are ordered by both start and end, and this
/// greedy choice is optimal.
pub fn match_attacks(pred: &[usize], gt: &[usize], delta: usize) -> usize {
    let mut g = 0;
    let mut matched = 0;
    for &p in pred {
        let lo = p.saturating_sub(delta);
        while g < gt.len() && gt[g] < lo {
            g += 1;
        }
        if g < gt.len() && gt[g] <= p + delta {
            matched += 1;
            g += 1;
        }
    }
    matched
}

/// Greedy matching that gives each prediction (ascending) the nearest
/// unconsumed ground-truth attack in its window, ties to the earlier one.
/// Not always maximal; kept to measure how often it falls short.
pub fn match_attacks_nearest(pred: &[usize], gt: &[usize], delta: usize) -> usize {
    let mut used = vec![false; gt.len()];
    let mut matched = 0;
    for &p in pred {
        let best = gt
            .iter()
            .enumerate()
            .filter(|&(k, &g)| !used[k] && g.abs_diff(p) <= delta)
            .min_by_key(|&(_, &g)| (g.abs_diff(p), g));
        if let Some((k, _)) = best {
            used[k] = true;
            matched += 1;
        }
    }
    matched
}

/// Precision, recall and F1 of predicted attacks against ground truth with
/// tolerance `delta` frames; each ground-truth attack is matched at most once.
/// Both empty gives F1 = 1; exactly one empty gives 0.
pub fn bowing_f1(pred: &[u8], gt: &[u8], delta: usize) -> Result<F1Score> {
    if pred.len() != gt.len() {
        return Err(Error::shape(format!(
            "attack sequences differ in length: {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    let (p, g) = (attack_indices(pred), attack_indices(gt));
    Ok(f1_from_counts(match_attacks(&p, &g, delta), p.len(), g.len()))
}

pub fn f1_from_counts(tp: usize, predicted: usize, actual: usize) -> F1Score {
    let (precision, recall, f1) = match (predicted, actual) {
        (0, 0) => (1.0, 1.0, 1.0),
        (0, _) | (_, 0) => (0.0, 0.0, 0.0),
        _ => {
            let p = tp as f64 / predicted as f64;
            let r = tp as f64 / actual as f64;
            let f = if tp == 0 { 0.0 } else { 2.0 * p * r / (p + r) };
            (p, r, f)
        }
    };
    F1Score {
        precision,
        recall,
        f1,
        true_positives: tp,
        predicted,
        actual,
    }
}

/// Bowing-attack F1 between two coordinate trajectories.
pub fn trajectory_f1(pred: &[f64], gt: &[f64], delta: usize) -> Result<F1Score> {
    if pred.len() < 3 || pred.len() != gt.len() {
        return Err(Error::invalid(format!(
            "trajectories need equal lengths of at least 3, got {} and {}",
            pred.len(),
            gt.len()
        )));
    }
    bowing_f1(
        &bowing_attacks(&bowing_direction(pred)),
        &bowing_attacks(&bowing_direction(gt)),
        delta,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CosineMode {
    /// Cosine between whole per-axis trajectories, averaged over the axes.
    #[default]
    PerAxis,
    /// Cosine between the 3-D positions of each frame, averaged over frames.
    PerFrame,
}

fn cosine(a: impl Iterator<Item = f64> + Clone, b: impl Iterator<Item = f64> + Clone) -> Option<f64> {
    let dot: f64 = a.clone().zip(b.clone()).map(|(x, y)| x * y).sum();
    let na = a.map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.map(|x| x * x).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| (dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine similarity of two `L x 3` wrist trajectories. A zero vector makes
/// its term 0.
pub fn cosine_similarity(pred: &Matrix, gt: &Matrix, mode: CosineMode) -> Result<f64> {
    same_shape(pred, gt)?;
    if pred.cols() != 3 {
        return Err(Error::shape(format!("wrist trajectories need 3 columns, got {}", pred.cols())));
    }
    let mut zero = 0usize;
    let mut term = |c: Option<f64>| {
        c.unwrap_or_else(|| {
            zero += 1;
            0.0
        })
    };
    let value = match mode {
        CosineMode::PerAxis => {
            (0..3)
                .map(|a| {
                    let (p, g) = (pred.column(a), gt.column(a));
                    term(cosine(p.iter().copied(), g.iter().copied()))
                })
                .sum::<f64>()
                / 3.0
        }
        CosineMode::PerFrame => {
            pred.row_iter()
                .zip(gt.row_iter())
                .map(|(p, g)| term(cosine(p.iter().copied(), g.iter().copied())))
                .sum::<f64>()
                / pred.rows() as f64
        }
    };
    if zero > 0 {
        log::warn!("cosine similarity: {zero} zero-length vector(s) scored as 0");
    }
    Ok(value)
}

/// Scores in the column order of the results table.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub l1_avg: f64,
    pub l1_hand_avg: f64,
    pub pck: f64,
    pub bow_x: f64,
    pub bow_y: f64,
    pub bow_z: f64,
    pub bow_avg: f64,
    pub cosine_similarity: f64,
}

impl MetricsReport {
    pub const COLUMNS: [&'static str; 8] = [
        "l1_avg",
        "l1_hand_avg",
        "pck",
        "bow_x",
        "bow_y",
        "bow_z",
        "bow_avg",
        "cosine_similarity",
    ];

    pub fn values(&self) -> [f64; 8] {
        [
            self.l1_avg,
            self.l1_hand_avg,
            self.pck,
            self.bow_x,
            self.bow_y,
            self.bow_z,
            self.bow_avg,
            self.cosine_similarity,
        ]
    }

    fn from_values(v: [f64; 8]) -> Self {
        Self {
            l1_avg: v[0],
            l1_hand_avg: v[1],
            pck: v[2],
            bow_x: v[3],
            bow_y: v[4],
            bow_z: v[5],
            bow_avg: v[6],
            cosine_similarity: v[7],
        }
    }

    /// Field-wise mean.
    pub fn mean(reports: &[MetricsReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::invalid("no reports to average"));
        }
        let mut acc = [0.0; 8];
        for r in reports {
            acc.iter_mut().zip(r.values()).for_each(|(a, v)| *a += v);
        }
        Ok(Self::from_values(acc.map(|a| a / reports.len() as f64)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Attack-matching tolerance in frames.
    pub delta: usize,
    pub alphas: Vec<f64>,
    /// Joint whose trajectory defines bowing.
    pub wrist_joint: usize,
    pub cosine_mode: CosineMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            delta: 3,
            alphas: vec![0.1, 0.2],
            wrist_joint: RIGHT_WRIST,
            cosine_mode: CosineMode::PerAxis,
        }
    }
}

/// All metrics for joint matrices with any number of joints, given the
/// wrist joint index in `opts`.
pub fn evaluate_with(pred: &Matrix, gt: &Matrix, opts: &EvalOptions) -> Result<MetricsReport> {
    same_shape(pred, gt)?;
    let joints = check_joints(gt)?;
    if opts.wrist_joint >= joints {
        return Err(Error::invalid(format!(
            "wrist joint {} out of range for {joints} joints",
            opts.wrist_joint
        )));
    }
    let wc: Vec<usize> = (0..3).map(|a| 3 * opts.wrist_joint + a).collect();
    let (pw, gw) = (pred.select_cols(&wc)?, gt.select_cols(&wc)?);
    let bow = |a: usize| trajectory_f1(&pw.column(a), &gw.column(a), opts.delta).map(|s| s.f1);
    let (bx, by, bz) = (bow(0)?, bow(1)?, bow(2)?);
    Ok(MetricsReport {
        l1_avg: l1_avg(pred, gt)?,
        l1_hand_avg: l1_hand_avg(pred, gt, &wc)?,
        pck: pck(pred, gt, &opts.alphas)?,
        bow_x: bx,
        bow_y: by,
        bow_z: bz,
        bow_avg: (bx + by + bz) / 3.0,
        cosine_similarity: cosine_similarity(&pw, &gw, opts.cosine_mode)?,
    })
}

/// Metrics of a predicted skeleton against ground truth, locating the right
/// wrist by name when the sequences carry one.
pub fn evaluate(pred: &SkeletonSequence, gt: &SkeletonSequence) -> Result<MetricsReport> {
    if (pred.frame_rate - gt.frame_rate).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "frame rates differ: {} vs {}",
            pred.frame_rate, gt.frame_rate
        )));
    }
    let opts = EvalOptions {
        wrist_joint: gt.joint_index("right_wrist").unwrap_or(RIGHT_WRIST),
        ..EvalOptions::default()
    };
    evaluate_with(&pred.joints, &gt.joints, &opts)
}

/// Writes `label` plus every metric column, one row per entry.
pub fn write_table_csv(path: &Path, rows: &[(String, MetricsReport)]) -> Result<()> {
    let mut out = String::from("label");
    for c in MetricsReport::COLUMNS {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (label, r) in rows {
        out.push_str(label);
        for v in r.values() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(rows: usize, joints: usize) -> Matrix {
        Matrix::from_fn(rows, 3 * joints, |r, c| ((r * 7 + c * 3) % 11) as f64 * 0.1 + c as f64)
    }

    #[test]
    fn l1_examples() {
        let g = ramp(5, 15);
        assert_eq!(l1_avg(&g, &g).unwrap(), 0.0);
        let p = g.map(|v| v + 0.01);
        assert!((l1_avg(&p, &g).unwrap() - 0.01).abs() < 1e-12);
        assert!((l1_hand_avg(&p, &g, &[24, 25, 26]).unwrap() - 0.01).abs() < 1e-12);
        assert!(matches!(l1_avg(&g, &ramp(4, 15)), Err(Error::Shape(_))));
    }

    #[test]
    fn pck_unit_cube_example() {
        // Two joints at opposite cube corners: max extent 1.
        let g = Matrix::from_rows(&[[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]]).unwrap();
        let p = g.map(|v| v + 0.15 / 3f64.sqrt());
        assert_eq!(pck_at(&p, &g, 0.1).unwrap(), 0.0);
        assert_eq!(pck_at(&p, &g, 0.2).unwrap(), 1.0);
        assert!((pck(&p, &g, &[0.1, 0.2]).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(pck(&g, &g, &[0.1, 0.2]).unwrap(), 1.0);
    }

    #[test]
    fn pck_scale_and_translation_invariance() {
        let g = ramp(6, 15);
        let p = g.map(|v| v * 1.03 + 0.02);
        let base = pck(&p, &g, &[0.1, 0.2]).unwrap();
        assert_eq!(pck(&p.map(|v| 2.0 * v), &g.map(|v| 2.0 * v), &[0.1, 0.2]).unwrap(), base);
        assert_eq!(pck(&p.map(|v| v + 4.0), &g.map(|v| v + 4.0), &[0.1, 0.2]).unwrap(), base);
    }

    #[test]
    fn degenerate_box_accepts_only_exact_hits() {
        let g = Matrix::from_rows(&[[1.0; 6]]).unwrap();
        assert_eq!(pck_at(&g, &g, 0.1).unwrap(), 1.0);
        let p = Matrix::from_rows(&[[1.0, 1.0, 1.0, 1.0, 1.0, 1.1]]).unwrap();
        assert_eq!(pck_at(&p, &g, 0.1).unwrap(), 0.5);
    }

    #[test]
    fn direction_and_attack_examples() {
        assert_eq!(bowing_direction(&[0.0, 1.0, 2.0, 1.0, 0.0]), vec![1, 1, 0, 0]);
        assert_eq!(bowing_direction(&[2.0; 5]), vec![0; 4]);
        assert_eq!(bowing_direction(&[0.0, 1.0, 2.0, 3.0]), vec![1; 3]);
        assert_eq!(bowing_attacks(&[1, 1, 0, 0]), vec![0, 1, 0]);
        assert_eq!(bowing_attacks(&[0; 5]), vec![0; 4]);
        assert_eq!(bowing_attacks(&[0, 1, 0, 1]), vec![1; 3]);
    }

    fn flags(len: usize, at: &[usize]) -> Vec<u8> {
        let mut v = vec![0; len];
        at.iter().for_each(|&i| v[i] = 1);
        v
    }

    #[test]
    fn f1_examples() {
        let a = flags(100, &[10, 50]);
        assert_eq!(bowing_f1(&a, &a, 3).unwrap().f1, 1.0);
        let s = bowing_f1(&a, &flags(100, &[12, 80]), 3).unwrap();
        assert_eq!((s.true_positives, s.predicted, s.actual), (1, 2, 2));
        assert!((s.f1 - 0.5).abs() < 1e-12);
        let s = bowing_f1(&flags(100, &[10, 11]), &flags(100, &[12]), 3).unwrap();
        assert_eq!((s.precision, s.recall), (0.5, 1.0));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(bowing_f1(&flags(9, &[]), &flags(9, &[]), 3).unwrap().f1, 1.0);
        assert_eq!(bowing_f1(&flags(9, &[2]), &flags(9, &[]), 3).unwrap().f1, 0.0);
        assert_eq!(bowing_f1(&flags(9, &[]), &flags(9, &[2]), 3).unwrap().f1, 0.0);
        assert!(bowing_f1(&flags(9, &[]), &flags(8, &[]), 3).is_err());
    }

    #[test]
    fn nearest_greedy_can_fall_short() {
        // Pred 10 grabs gt 11 (nearest), leaving 14 with nothing in reach;
        // the maximum matching pairs 10-7 and 14-11.
        let (p, g) = ([10, 14], [7, 11]);
        assert_eq!(match_attacks_nearest(&p, &g, 3), 1);
        assert_eq!(match_attacks(&p, &g, 3), 2);
    }

    #[test]
    fn cosine_examples() {
        let g = Matrix::from_rows(&[[0.0, 1.0, 2.0], [1.0, 3.0, -1.0]]).unwrap();
        assert!((cosine_similarity(&g, &g, CosineMode::PerAxis).unwrap() - 1.0).abs() < 1e-12);
        let neg = g.map(|v| -v);
        assert!((cosine_similarity(&neg, &g, CosineMode::PerAxis).unwrap() + 1.0).abs() < 1e-12);
        let p = Matrix::from_rows(&[[1.0, 1.0, 2.0], [0.0, 3.0, -1.0]]).unwrap();
        assert!((cosine_similarity(&p, &g, CosineMode::PerAxis).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let z = Matrix::zeros(2, 3);
        assert_eq!(cosine_similarity(&z, &g, CosineMode::PerAxis).unwrap(), 0.0);
        assert!((cosine_similarity(&g, &g, CosineMode::PerFrame).unwrap() - 1.0).abs() < 1e-12);
    }

    fn bowing_skeleton(len: usize) -> Matrix {
        Matrix::from_fn(len, 45, |r, c| {
            let tri = ((r % 20) as f64 - 10.0).abs();
            if (24..27).contains(&c) {
                tri * (c as f64 - 23.0)
            } else {
                (c as f64) + 0.01 * (r as f64 * 0.3 + c as f64).sin()
            }
        })
    }

    #[test]
    fn identity_and_time_reversal() {
        let g = bowing_skeleton(97);
        let id = evaluate_with(&g, &g, &EvalOptions::default()).unwrap();
        assert_eq!(
            id,
            MetricsReport {
                l1_avg: 0.0,
                l1_hand_avg: 0.0,
                pck: 1.0,
                bow_x: 1.0,
                bow_y: 1.0,
                bow_z: 1.0,
                bow_avg: 1.0,
                cosine_similarity: 1.0,
            }
        );
        let rev = Matrix::from_fn(97, 45, |r, c| g.get(96 - r, c));
        let r = evaluate_with(&rev, &g, &EvalOptions::default()).unwrap();
        assert!(r.cosine_similarity < id.cosine_similarity);
        assert!(r.bow_avg < id.bow_avg);
    }

    #[test]
    fn thirteen_joint_layout() {
        let g = Matrix::from_fn(40, 39, |r, c| ((r as f64) * 0.2 + c as f64).sin());
        let opts = EvalOptions {
            wrist_joint: 6,
            ..EvalOptions::default()
        };
        let r = evaluate_with(&g, &g, &opts).unwrap();
        assert_eq!(r.pck, 1.0);
        let bad = EvalOptions {
            wrist_joint: 13,
            ..EvalOptions::default()
        };
        assert!(evaluate_with(&g, &g, &bad).is_err());
    }

    #[test]
    fn report_json_and_csv() {
        let r = MetricsReport {
            l1_avg: 0.1,
            bow_avg: 0.25,
            ..Default::default()
        };
        let back: MetricsReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_table_csv(&p, &[("mean".into(), r)]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "label,l1_avg,l1_hand_avg,pck,bow_x,bow_y,bow_z,bow_avg,cosine_similarity"
        );
        let m = MetricsReport::mean(&[r, MetricsReport::default()]).unwrap();
        assert!((m.l1_avg - 0.05).abs() < 1e-15);
    }
}
