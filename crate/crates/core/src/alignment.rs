//! Beat transfer by dynamic time warping, beat-anchored segmentation,
//! z-score normalization, tempo resampling and leave-one-piece-out folds.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Frames per training segment (30 s at 30 fps).
pub const SEGMENT_LEN: usize = 900;
pub const STD_FLOOR: f64 = 1e-8;

/// Ascending beat times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatGrid {
    beat_times: Vec<f64>,
}

impl BeatGrid {
    pub fn new(beat_times: Vec<f64>) -> Result<Self> {
        if let Some(t) = beat_times.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return Err(Error::invalid(format!("beat time {t} must be finite and nonnegative")));
        }
        if let Some(w) = beat_times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "beat times must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self { beat_times })
    }

    pub fn times(&self) -> &[f64] {
        &self.beat_times
    }

    pub fn is_empty(&self) -> bool {
        self.beat_times.is_empty()
    }

    /// Beat times rounded onto a frame grid.
    pub fn to_frames(&self, frame_rate: f64) -> Vec<usize> {
        self.beat_times
            .iter()
            .map(|t| (t * frame_rate).round() as usize)
            .collect()
    }

    /// Parses one decimal time per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut times = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let t: f64 = line
                .parse()
                .map_err(|_| Error::invalid(format!("line {}: bad beat time `{line}`", i + 1)))?;
            times.push(t);
        }
        Self::new(times)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn to_text(&self) -> String {
        self.beat_times.iter().map(|t| format!("{t}\n")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtwResult {
    /// Monotone, contiguous `(i, j)` pairs from `(0, 0)` to `(N-1, M-1)`.
    pub path: Vec<(usize, usize)>,
    pub cost: f64,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Dynamic time warping with steps `(1,0)`, `(0,1)`, `(1,1)` and Euclidean
/// frame distance. Backtracking prefers the diagonal, then `(i-1, j)`.
pub fn dtw(a: &Matrix, b: &Matrix) -> Result<DtwResult> {
    let (n, m) = (a.rows(), b.rows());
    if n == 0 || m == 0 {
        return Err(Error::invalid("dtw needs two nonempty sequences"));
    }
    if a.cols() != b.cols() {
        return Err(Error::shape(format!(
            "dtw dimension mismatch: {} vs {}",
            a.cols(),
            b.cols()
        )));
    }
    let mut acc = vec![f64::INFINITY; n * m];
    for i in 0..n {
        for j in 0..m {
            let d = euclidean(a.row(i), b.row(j));
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[(i - 1) * m + j - 1] } else { f64::INFINITY };
                let up = if i > 0 { acc[(i - 1) * m + j] } else { f64::INFINITY };
                let left = if j > 0 { acc[i * m + j - 1] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[i * m + j] = d + best;
        }
    }

    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while i > 0 || j > 0 {
        (i, j) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = acc[(i - 1) * m + j - 1];
            let up = acc[(i - 1) * m + j];
            let left = acc[i * m + j - 1];
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        path.push((i, j));
    }
    path.reverse();
    Ok(DtwResult {
        path,
        cost: acc[n * m - 1],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeatTransfer {
    /// Nondecreasing frame indices in the second (recorded) sequence.
    pub frames: Vec<usize>,
    /// Beats that fell beyond the reference sequence and were clamped.
    pub warnings: Vec<String>,
}

/// Maps beat times of the reference sequence (`i` side of `path`) onto the
/// recorded sequence (`j` side): each beat goes to its reference frame, then
/// to the smallest recorded frame matched with it.
pub fn transfer_beats(beats: &BeatGrid, path: &[(usize, usize)], frame_rate: f64) -> BeatTransfer {
    let mut warnings = Vec::new();
    let Some(&(last_ref, _)) = path.last() else {
        return BeatTransfer {
            frames: Vec::new(),
            warnings: vec!["empty alignment path".into()],
        };
    };
    // first_match[i] = smallest j paired with i; the path is sorted by i then j.
    let mut first_match = vec![usize::MAX; last_ref + 1];
    for &(i, j) in path {
        first_match[i] = first_match[i].min(j);
    }
    let frames = beats
        .times()
        .iter()
        .map(|&t| {
            let mut f = (t * frame_rate).round() as usize;
            if f > last_ref {
                warnings.push(format!(
                    "beat at {t:.3}s (frame {f}) is past the last frame {last_ref}; clamped"
                ));
                f = last_ref;
            }
            first_match[f]
        })
        .collect();
    BeatTransfer { frames, warnings }
}

/// One beat-anchored training window of a piece.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub piece_id: String,
    pub start_frame: usize,
    pub len: usize,
}

impl Segment {
    pub fn id(&self) -> String {
        format!("{}:{}", self.piece_id, self.start_frame)
    }

    /// The segment's rows of a per-piece matrix.
    pub fn rows<'a>(&self, m: &'a Matrix) -> &'a [f64] {
        m.rows_slice(self.start_frame, self.len)
    }

    pub fn slice(&self, m: &Matrix) -> Result<Matrix> {
        m.slice_rows(self.start_frame, self.len)
    }
}

/// One segment of length `len` per distinct beat frame `b` with
/// `b + len <= frames`. Segments may overlap.
pub fn segment(
    piece_id: &str,
    features: &Matrix,
    skeleton: &Matrix,
    beat_frames: &[usize],
    len: usize,
) -> Result<Vec<Segment>> {
    if features.rows() != skeleton.rows() {
        return Err(Error::shape(format!(
            "features have {} frames, skeleton {}",
            features.rows(),
            skeleton.rows()
        )));
    }
    if len == 0 {
        return Err(Error::invalid("segment length must be positive"));
    }
    let total = features.rows();
    let mut starts: Vec<usize> = beat_frames
        .iter()
        .copied()
        .filter(|&b| b + len <= total)
        .collect();
    starts.sort_unstable();
    starts.dedup();
    Ok(starts
        .into_iter()
        .map(|start_frame| Segment {
            piece_id: piece_id.to_string(),
            start_frame,
            len,
        })
        .collect())
}

/// Per-column mean and (floored) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Fits z-score statistics over every frame of the given row blocks (each a
/// row-major slice with `cols` columns).
pub fn zscore_fit<'a>(blocks: impl IntoIterator<Item = &'a [f64]>, cols: usize) -> Result<NormStats> {
    if cols == 0 {
        return Err(Error::invalid("zero columns"));
    }
    let mut n = 0usize;
    let mut sum = vec![0.0; cols];
    let mut sq = vec![0.0; cols];
    let blocks: Vec<&[f64]> = blocks.into_iter().collect();
    for block in &blocks {
        for row in block.chunks_exact(cols) {
            n += 1;
            for (c, v) in row.iter().enumerate() {
                sum[c] += v;
            }
        }
    }
    if n < 2 {
        return Err(Error::invalid(format!("z-score fit needs at least 2 frames, got {n}")));
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    for block in &blocks {
        for row in block.chunks_exact(cols) {
            for (c, v) in row.iter().enumerate() {
                sq[c] += (v - mean[c]).powi(2);
            }
        }
    }
    let std = sq
        .iter()
        .map(|s| (s / n as f64).sqrt().max(STD_FLOOR))
        .collect();
    Ok(NormStats { mean, std })
}

/// Fits statistics on the feature rows of the given segments.
pub fn zscore_fit_segments<'a>(
    segments: impl IntoIterator<Item = (&'a Segment, &'a Matrix)>,
) -> Result<NormStats> {
    let items: Vec<(&Segment, &Matrix)> = segments.into_iter().collect();
    let cols = items
        .first()
        .map(|(_, m)| m.cols())
        .ok_or_else(|| Error::invalid("no training segments"))?;
    zscore_fit(items.iter().map(|(s, m)| s.rows(m)), cols)
}

pub fn zscore_apply(x: &Matrix, stats: &NormStats) -> Result<Matrix> {
    if x.cols() != stats.dim() {
        return Err(Error::shape(format!(
            "{} columns, statistics for {}",
            x.cols(),
            stats.dim()
        )));
    }
    Ok(Matrix::from_fn(x.rows(), x.cols(), |r, c| {
        (x.get(r, c) - stats.mean[c]) / stats.std[c]
    }))
}

/// Linear time resampling to `round(L / speed)` frames, keeping endpoints.
pub fn resample_features(seq: &Matrix, speed: f64) -> Result<Matrix> {
    if !(speed > 0.0) || !speed.is_finite() {
        return Err(Error::invalid(format!("speed must be positive, got {speed}")));
    }
    let len = seq.rows();
    if len == 0 {
        return Ok(seq.clone());
    }
    let target = ((len as f64 / speed).round() as usize).max(1);
    resample_to(seq, target)
}

/// Linear interpolation of rows onto `target` evenly spaced positions that
/// include both endpoints.
pub fn resample_to(seq: &Matrix, target: usize) -> Result<Matrix> {
    let len = seq.rows();
    if len == 0 || target == 0 {
        return Err(Error::invalid("cannot resample to or from zero frames"));
    }
    if target == len {
        return Ok(seq.clone());
    }
    let scale = if target > 1 {
        (len - 1) as f64 / (target - 1) as f64
    } else {
        0.0
    };
    Ok(Matrix::from_fn(target, seq.cols(), |k, c| {
        let pos = k as f64 * scale;
        let i0 = (pos.floor() as usize).min(len - 1);
        let i1 = (i0 + 1).min(len - 1);
        let w = pos - i0 as f64;
        seq.get(i0, c) * (1.0 - w) + seq.get(i1, c) * w
    }))
}

/// One cross-validation fold over piece ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub fold: usize,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Leave-one-piece-out: `k` must equal the number of pieces; fold `i`
/// tests on piece `i` and trains on the rest.
pub fn split_folds(pieces: &[String], k: usize) -> Result<Vec<Fold>> {
    let mut seen = HashSet::new();
    if let Some(dup) = pieces.iter().find(|p| !seen.insert(p.as_str())) {
        return Err(Error::invalid(format!("duplicate piece id `{dup}`")));
    }
    if k != pieces.len() {
        return Err(Error::invalid(format!(
            "leave-one-piece-out needs k = {} folds, got {k}",
            pieces.len()
        )));
    }
    Ok((0..k)
        .map(|i| Fold {
            fold: i,
            train: pieces
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, p)| p.clone())
                .collect(),
            test: vec![pieces[i].clone()],
        })
        .collect())
}

/// Shuffles segments with a fixed seed and splits them into
/// `(train, validation)` with `val_fraction` of them (rounded) held out.
pub fn split_train_val(
    segments: &[Segment],
    val_fraction: f64,
    seed: u64,
) -> (Vec<Segment>, Vec<Segment>) {
    let mut order: Vec<Segment> = segments.to_vec();
    order.sort_by(|a, b| (&a.piece_id, a.start_frame).cmp(&(&b.piece_id, b.start_frame)));
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((order.len() as f64) * val_fraction).round() as usize;
    let n_val = if order.len() >= 2 { n_val.clamp(1, order.len() - 1) } else { 0 };
    let val = order.split_off(order.len() - n_val);
    (order, val)
}

/// On-disk fold description: segment ids for train/val, piece ids for test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldManifest {
    pub fold: usize,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(v: &[f64]) -> Matrix {
        Matrix::from_vec(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn dtw_identical_is_free_and_diagonal() {
        let a = col(&[0.0, 3.0, 1.0, 4.0]);
        let r = dtw(&a, &a).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.path, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn dtw_hand_example() {
        let a = col(&[0.0, 1.0, 2.0]);
        let b = col(&[0.0, 1.0, 1.0, 2.0]);
        let r = dtw(&a, &b).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.path, vec![(0, 0), (1, 1), (1, 2), (2, 3)]);
        assert_eq!(dtw(&b, &a).unwrap().cost, 0.0);
    }

    #[test]
    fn dtw_errors() {
        assert!(matches!(dtw(&Matrix::zeros(0, 1), &col(&[1.0])), Err(Error::InvalidInput(_))));
        assert!(matches!(dtw(&Matrix::zeros(2, 2), &col(&[1.0])), Err(Error::Shape(_))));
    }

    #[test]
    fn transfer_identity_and_insertion() {
        let beats = BeatGrid::new(vec![0.0, 1.0 / 30.0, 2.0 / 30.0]).unwrap();
        let ident: Vec<(usize, usize)> = (0..3).map(|i| (i, i)).collect();
        assert_eq!(transfer_beats(&beats, &ident, 30.0).frames, vec![0, 1, 2]);

        let path = vec![(0, 0), (1, 1), (1, 2), (2, 3)];
        let t = transfer_beats(&beats, &path, 30.0);
        assert_eq!(t.frames, vec![0, 1, 3]);
        assert!(t.warnings.is_empty());

        let empty = BeatGrid::new(vec![]).unwrap();
        assert!(transfer_beats(&empty, &path, 30.0).frames.is_empty());
    }

    #[test]
    fn transfer_clamps_late_beats_with_warning() {
        let beats = BeatGrid::new(vec![0.0, 10.0]).unwrap();
        let path = vec![(0, 0), (1, 1), (1, 2), (2, 3)];
        let t = transfer_beats(&beats, &path, 30.0);
        assert_eq!(t.frames, vec![0, 3]);
        assert_eq!(t.warnings.len(), 1);
    }

    #[test]
    fn beat_grid_validation_and_parsing() {
        assert!(BeatGrid::new(vec![1.0, 1.0]).is_err());
        assert!(BeatGrid::new(vec![-1.0]).is_err());
        let g = BeatGrid::parse("# beats\n0.5\n\n1.25\n").unwrap();
        assert_eq!(g.times(), &[0.5, 1.25]);
        assert_eq!(BeatGrid::parse(&g.to_text()).unwrap(), g);
        assert!(BeatGrid::parse("abc").is_err());
    }

    #[test]
    fn segmentation_boundary_rule() {
        let f = Matrix::zeros(1800, 28);
        let s = Matrix::zeros(1800, 45);
        let segs = segment("p", &f, &s, &[0, 450, 900], 900).unwrap();
        assert_eq!(segs.iter().map(|s| s.start_frame).collect::<Vec<_>>(), vec![0, 450, 900]);
        assert!(segment("p", &f, &s, &[901], 900).unwrap().is_empty());
        assert!(segment("p", &f, &s, &[], 900).unwrap().is_empty());
        let short = Matrix::zeros(899, 28);
        assert!(segment("p", &short, &Matrix::zeros(899, 45), &[0], 900).unwrap().is_empty());
        assert!(segment("p", &f, &Matrix::zeros(10, 45), &[0], 900).is_err());
        assert_eq!(SEGMENT_LEN as f64 / 30.0, 30.0);
    }

    #[test]
    fn zscore_on_training_data_is_standard() {
        let m = Matrix::from_fn(50, 3, |r, c| (r * (c + 1)) as f64 + if c == 2 { 0.0 } else { 1.0 });
        let m = Matrix::hstack(&[&m, &Matrix::from_vec(50, 1, vec![5.0; 50]).unwrap()]).unwrap();
        let stats = zscore_fit([m.as_slice()], 4).unwrap();
        assert_eq!(stats.std[3], STD_FLOOR);
        let z = zscore_apply(&m, &stats).unwrap();
        for c in 0..3 {
            let v = z.column(c);
            let mean = v.iter().sum::<f64>() / 50.0;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 50.0;
            assert!(mean.abs() < 1e-6 && (var.sqrt() - 1.0).abs() < 1e-6);
        }
        assert!(z.column(3).iter().all(|&v| v == 0.0));
        assert!(zscore_fit([&[1.0][..]], 1).is_err());
    }

    #[test]
    fn resample_examples() {
        let ramp = Matrix::from_fn(9, 2, |r, c| r as f64 * (c as f64 + 1.0));
        assert_eq!(resample_features(&ramp, 1.0).unwrap(), ramp);
        let half = resample_features(&ramp, 2.0).unwrap();
        assert_eq!(half.rows(), 5);
        for k in 0..5 {
            assert!((half.get(k, 0) - 2.0 * k as f64).abs() < 1e-12);
        }
        assert_eq!(resample_features(&ramp, 0.5).unwrap().rows(), 18);
        assert!(resample_features(&ramp, 0.0).is_err());
        assert!(resample_features(&ramp, -1.0).is_err());
    }

    #[test]
    fn fold_examples() {
        let ids: Vec<String> = (0..14).map(|i| format!("p{i}")).collect();
        let folds = split_folds(&ids, 14).unwrap();
        assert_eq!(folds.len(), 14);
        let mut tested: Vec<String> = folds.iter().flat_map(|f| f.test.clone()).collect();
        tested.sort();
        let mut all = ids.clone();
        all.sort();
        assert_eq!(tested, all);
        for f in &folds {
            assert!(!f.train.contains(&f.test[0]));
        }

        let two = split_folds(&["A".into(), "B".into()], 2).unwrap();
        assert_eq!((two[0].train.clone(), two[0].test.clone()), (vec!["B".to_string()], vec!["A".to_string()]));
        assert_eq!((two[1].train.clone(), two[1].test.clone()), (vec!["A".to_string()], vec!["B".to_string()]));

        assert!(split_folds(&["A".into(), "A".into()], 2).is_err());
        assert!(split_folds(&["A".into(), "B".into()], 3).is_err());
    }

    #[test]
    fn train_val_split_is_seeded_80_20() {
        let segs: Vec<Segment> = (0..20)
            .map(|i| Segment { piece_id: "p".into(), start_frame: i, len: 5 })
            .collect();
        let (tr, va) = split_train_val(&segs, 0.2, 9);
        assert_eq!((tr.len(), va.len()), (16, 4));
        assert_eq!(split_train_val(&segs, 0.2, 9), (tr.clone(), va.clone()));
        let mut all: Vec<_> = tr.into_iter().chain(va).collect();
        all.sort_by_key(|s| s.start_frame);
        assert_eq!(all, segs);
    }

    /// Minimum path cost by exhaustive recursion over every monotone path.
    fn brute_force_dtw(a: &[f64], b: &[f64]) -> f64 {
        fn go(a: &[f64], b: &[f64], i: usize, j: usize) -> f64 {
            let d = (a[i] - b[j]).abs();
            if i == a.len() - 1 && j == b.len() - 1 {
                return d;
            }
            let mut best = f64::INFINITY;
            if i + 1 < a.len() {
                best = best.min(go(a, b, i + 1, j));
            }
            if j + 1 < b.len() {
                best = best.min(go(a, b, i, j + 1));
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                best = best.min(go(a, b, i + 1, j + 1));
            }
            d + best
        }
        go(a, b, 0, 0)
    }

    proptest! {
        #[test]
        fn dtw_matches_exhaustive_search(
            a in prop::collection::vec(-3.0f64..3.0, 1..=6),
            b in prop::collection::vec(-3.0f64..3.0, 1..=6),
        ) {
            let r = dtw(&col(&a), &col(&b)).unwrap();
            let oracle = brute_force_dtw(&a, &b);
            prop_assert!((r.cost - oracle).abs() < 1e-9);
            prop_assert!((r.cost - dtw(&col(&b), &col(&a)).unwrap().cost).abs() < 1e-9);
            // The returned path realizes the cost and is a valid warping path.
            let along: f64 = r.path.iter().map(|&(i, j)| (a[i] - b[j]).abs()).sum();
            prop_assert!((along - r.cost).abs() < 1e-9);
            prop_assert_eq!(r.path[0], (0, 0));
            prop_assert_eq!(*r.path.last().unwrap(), (a.len() - 1, b.len() - 1));
            for w in r.path.windows(2) {
                let (di, dj) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
                prop_assert!(matches!((di, dj), (1, 0) | (0, 1) | (1, 1)));
            }
        }

        #[test]
        fn segments_stay_in_bounds(total in 0usize..300, len in 1usize..100, beats in prop::collection::vec(0usize..400, 0..20)) {
            let f = Matrix::zeros(total, 2);
            let s = Matrix::zeros(total, 3);
            for seg in segment("p", &f, &s, &beats, len).unwrap() {
                prop_assert!(seg.start_frame + seg.len <= total);
                prop_assert_eq!(seg.slice(&f).unwrap().rows(), len);
            }
        }

        #[test]
        fn resample_round_trip_on_smooth_input(len in 64usize..400, speed in 0.5f64..2.0, phase in 0.0f64..6.3, cycles in 0.0f64..0.5) {
            let m = Matrix::from_fn(len, 2, |r, c| {
                let t = r as f64 / len as f64;
                (2.0 * std::f64::consts::PI * cycles * t + phase + c as f64).sin()
            });
            let there = resample_features(&m, speed).unwrap();
            let back = resample_to(&there, len).unwrap();
            let rms = (m.as_slice().iter().zip(back.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                / m.as_slice().len() as f64).sqrt();
            prop_assert!(rms < 1e-3, "rms {}", rms);
        }

        #[test]
        fn dtw_cost_zero_iff_equal(a in prop::collection::vec(-3.0f64..3.0, 1..=6)) {
            let mut b = a.clone();
            prop_assert_eq!(dtw(&col(&a), &col(&b)).unwrap().cost, 0.0);
            b[0] += 0.5;
            prop_assert!(dtw(&col(&a), &col(&b)).unwrap().cost > 1e-12);
        }
    }
}
