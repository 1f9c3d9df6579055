//! 15-joint 3-D skeleton sequences: normalization, median smoothing, the
//! body / right-hand split, and file I/O.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfile;
use crate::matrix::Matrix;

pub const N_JOINTS: usize = 15;
pub const SKELETON_DIM: usize = 3 * N_JOINTS;

pub const JOINT_NAMES: [&str; N_JOINTS] = [
    "head",
    "nose",
    "thorax",
    "spine",
    "right_shoulder",
    "left_shoulder",
    "right_elbow",
    "left_elbow",
    "right_wrist",
    "left_wrist",
    "hip",
    "right_hip",
    "left_hip",
    "right_knee",
    "left_knee",
];

pub const RIGHT_ELBOW: usize = 6;
pub const RIGHT_WRIST: usize = 8;

/// Columns of the right wrist in the 45-D layout.
pub const RIGHT_WRIST_COLS: [usize; 3] = [3 * RIGHT_WRIST, 3 * RIGHT_WRIST + 1, 3 * RIGHT_WRIST + 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSequence {
    /// `L x (3 * joints)`, xyz per joint.
    pub joints: Matrix,
    pub frame_rate: f64,
    pub joint_names: Vec<String>,
}

impl SkeletonSequence {
    /// A sequence in the standard 15-joint order.
    pub fn new(joints: Matrix, frame_rate: f64) -> Result<Self> {
        Self::with_joint_names(
            joints,
            frame_rate,
            JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
        )
    }

    /// A sequence with an arbitrary joint set (e.g. 13-joint layouts).
    pub fn with_joint_names(joints: Matrix, frame_rate: f64, joint_names: Vec<String>) -> Result<Self> {
        if joints.cols() != 3 * joint_names.len() {
            return Err(Error::shape(format!(
                "{} columns for {} joints",
                joints.cols(),
                joint_names.len()
            )));
        }
        if !joints.all_finite() {
            return Err(Error::invalid("skeleton contains non-finite coordinates"));
        }
        Ok(Self {
            joints,
            frame_rate,
            joint_names,
        })
    }

    pub fn len(&self) -> usize {
        self.joints.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn n_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    /// Coordinates of one joint over time, `L x 3`.
    pub fn joint_track(&self, joint: usize) -> Matrix {
        Matrix::from_fn(self.len(), 3, |r, c| self.joints.get(r, 3 * joint + c))
    }

    fn column_names(&self) -> Vec<String> {
        self.joint_names
            .iter()
            .flat_map(|j| ["x", "y", "z"].map(|a| format!("{j}_{a}")))
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        matfile::write_csv(path, &self.column_names(), &self.joints)
    }

    /// Reads a skeleton CSV; joint names come from the header.
    pub fn read_csv(path: &Path, frame_rate: f64) -> Result<Self> {
        let (header, m) = matfile::read_csv(path)?;
        if header.len() % 3 != 0 {
            return Err(Error::format(path, "column count is not a multiple of 3"));
        }
        let mut names = Vec::with_capacity(header.len() / 3);
        for chunk in header.chunks(3) {
            let joint = chunk[0]
                .strip_suffix("_x")
                .ok_or_else(|| Error::format(path, format!("expected `<joint>_x`, got `{}`", chunk[0])))?;
            if chunk[1] != format!("{joint}_y") || chunk[2] != format!("{joint}_z") {
                return Err(Error::format(path, format!("bad coordinate columns for `{joint}`")));
            }
            names.push(joint.to_string());
        }
        Self::with_joint_names(m, frame_rate, names)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        matfile::write_matrix(path, matfile::SKELETON_MAGIC, &self.joints)
    }

    /// Reads the binary container; assumes the standard joint order.
    pub fn read_binary(path: &Path, frame_rate: f64) -> Result<Self> {
        Self::new(matfile::read_matrix(path, matfile::SKELETON_MAGIC)?, frame_rate)
    }

    pub fn to_render(&self) -> RenderExport {
        RenderExport {
            fps: self.frame_rate,
            joint_names: self.joint_names.clone(),
            frames: self
                .joints
                .row_iter()
                .map(|row| row.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect())
                .collect(),
        }
    }

    pub fn write_render_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec(&self.to_render())?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

/// JSON document for external visualizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderExport {
    pub fps: f64,
    pub joint_names: Vec<String>,
    pub frames: Vec<Vec<[f64; 3]>>,
}

/// Subtracts the per-axis mean over all joints and frames, so x, y and z are
/// each zero-mean.
pub fn normalize(seq: &SkeletonSequence) -> Result<SkeletonSequence> {
    if seq.is_empty() {
        return Err(Error::invalid("cannot normalize an empty skeleton"));
    }
    if !seq.joints.all_finite() {
        return Err(Error::invalid("skeleton contains non-finite coordinates"));
    }
    let mut mean = [0.0f64; 3];
    let count = (seq.len() * seq.n_joints()) as f64;
    for row in seq.joints.row_iter() {
        for p in row.chunks_exact(3) {
            for a in 0..3 {
                mean[a] += p[a];
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let joints = Matrix::from_fn(seq.len(), seq.joints.cols(), |r, c| {
        seq.joints.get(r, c) - mean[c % 3]
    });
    Ok(SkeletonSequence {
        joints,
        ..seq.clone()
    })
}

/// Centered running median per scalar channel; windows are truncated at
/// the sequence edges.
pub fn median_smooth(seq: &SkeletonSequence, window: usize) -> Result<SkeletonSequence> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::invalid(format!("median window must be odd, got {window}")));
    }
    let half = window / 2;
    let n = seq.len();
    let mut out = Matrix::zeros(n, seq.joints.cols());
    let mut buf = Vec::with_capacity(window);
    for c in 0..seq.joints.cols() {
        for t in 0..n {
            buf.clear();
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(n - 1);
            buf.extend((lo..=hi).map(|i| seq.joints.get(i, c)));
            buf.sort_by(f64::total_cmp);
            let m = buf.len();
            let med = if m % 2 == 1 {
                buf[m / 2]
            } else {
                0.5 * (buf[m / 2 - 1] + buf[m / 2])
            };
            out.set(t, c, med);
        }
    }
    Ok(SkeletonSequence {
        joints: out,
        ..seq.clone()
    })
}

/// Joint partition between the body decoder (13 joints) and the right-hand
/// decoder (right elbow, then right wrist).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BodySplit {
    pub body_indices: Vec<usize>,
    pub righthand_indices: Vec<usize>,
}

impl Default for BodySplit {
    fn default() -> Self {
        let righthand_indices = vec![RIGHT_ELBOW, RIGHT_WRIST];
        let body_indices = (0..N_JOINTS)
            .filter(|j| !righthand_indices.contains(j))
            .collect();
        Self {
            body_indices,
            righthand_indices,
        }
    }
}

impl BodySplit {
    pub fn n_joints(&self) -> usize {
        self.body_indices.len() + self.righthand_indices.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_joints();
        let mut seen = vec![false; n];
        for &j in self.body_indices.iter().chain(&self.righthand_indices) {
            if j >= n || seen[j] {
                return Err(Error::invalid(format!("joint {j} is out of range or repeated")));
            }
            seen[j] = true;
        }
        Ok(())
    }

    fn columns(joints: &[usize]) -> Vec<usize> {
        joints.iter().flat_map(|&j| [3 * j, 3 * j + 1, 3 * j + 2]).collect()
    }

    pub fn body_columns(&self) -> Vec<usize> {
        Self::columns(&self.body_indices)
    }

    pub fn righthand_columns(&self) -> Vec<usize> {
        Self::columns(&self.righthand_indices)
    }

    /// For each column of the full layout: `(from_righthand, column in that part)`.
    pub fn merge_plan(&self) -> Vec<(bool, usize)> {
        let mut plan = vec![(false, 0); 3 * self.n_joints()];
        for (i, c) in self.body_columns().into_iter().enumerate() {
            plan[c] = (false, i);
        }
        for (i, c) in self.righthand_columns().into_iter().enumerate() {
            plan[c] = (true, i);
        }
        plan
    }

    /// `(body, righthand)` column blocks of a full-layout matrix.
    pub fn split(&self, full: &Matrix) -> Result<(Matrix, Matrix)> {
        if full.cols() != 3 * self.n_joints() {
            return Err(Error::shape(format!(
                "split expects {} columns, got {}",
                3 * self.n_joints(),
                full.cols()
            )));
        }
        Ok((
            full.select_cols(&self.body_columns())?,
            full.select_cols(&self.righthand_columns())?,
        ))
    }

    /// Inverse of [`BodySplit::split`].
    pub fn merge(&self, body: &Matrix, righthand: &Matrix) -> Result<Matrix> {
        if body.rows() != righthand.rows()
            || body.cols() != 3 * self.body_indices.len()
            || righthand.cols() != 3 * self.righthand_indices.len()
        {
            return Err(Error::shape(format!(
                "cannot merge {:?} and {:?}",
                body.shape(),
                righthand.shape()
            )));
        }
        let plan = self.merge_plan();
        Ok(Matrix::from_fn(body.rows(), plan.len(), |r, c| match plan[c] {
            (false, i) => body.get(r, i),
            (true, i) => righthand.get(r, i),
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_seq(frames: usize, seed: u64) -> SkeletonSequence {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = Matrix::from_fn(frames, SKELETON_DIM, |_, _| rng.gen_range(-2.0..3.0));
        SkeletonSequence::new(m, 30.0).unwrap()
    }

    fn axis_means(seq: &SkeletonSequence) -> [f64; 3] {
        let mut s = [0.0; 3];
        for r in 0..seq.len() {
            for c in 0..seq.joints.cols() {
                s[c % 3] += seq.joints.get(r, c);
            }
        }
        let n = (seq.len() * seq.n_joints()) as f64;
        s.map(|v| v / n)
    }

    #[test]
    fn normalize_zero_means_each_axis() {
        let seq = random_seq(50, 1);
        let n = normalize(&seq).unwrap();
        for m in axis_means(&n) {
            assert!(m.abs() < 1e-9, "{m}");
        }
    }

    #[test]
    fn normalize_removes_constant_offset_and_keeps_geometry() {
        let base = normalize(&random_seq(10, 2)).unwrap();
        let shifted = SkeletonSequence::new(base.joints.map(|v| v + 7.5), 30.0).unwrap();
        let n = normalize(&shifted).unwrap();
        assert!(n.joints.max_abs_diff(&base.joints).unwrap() < 1e-12);
        let again = normalize(&base).unwrap();
        assert!(again.joints.max_abs_diff(&base.joints).unwrap() < 1e-12);
    }

    #[test]
    fn normalize_rejects_empty() {
        let seq = SkeletonSequence::new(Matrix::zeros(0, SKELETON_DIM), 30.0).unwrap();
        assert!(normalize(&seq).is_err());
    }

    #[test]
    fn non_finite_skeleton_is_rejected() {
        let mut m = Matrix::zeros(2, SKELETON_DIM);
        m.set(1, 4, f64::INFINITY);
        assert!(matches!(SkeletonSequence::new(m, 30.0), Err(Error::InvalidInput(_))));
    }

    fn single_channel(values: &[f64]) -> SkeletonSequence {
        let names = vec!["j".to_string()];
        let m = Matrix::from_fn(values.len(), 3, |r, _| values[r]);
        SkeletonSequence::with_joint_names(m, 30.0, names).unwrap()
    }

    #[test]
    fn median_removes_spike() {
        let s = median_smooth(&single_channel(&[0.0, 0.0, 9.0, 0.0, 0.0]), 5).unwrap();
        assert_eq!(s.joints.get(2, 0), 0.0);
    }

    #[test]
    fn median_keeps_constant_and_monotone_interior() {
        let c = median_smooth(&single_channel(&[3.0; 6]), 5).unwrap();
        assert!(c.joints.as_slice().iter().all(|&v| v == 3.0));
        let ramp: Vec<f64> = (0..10).map(|i| (i * i) as f64).collect();
        let m = median_smooth(&single_channel(&ramp), 5).unwrap();
        for t in 2..8 {
            assert_eq!(m.joints.get(t, 0), ramp[t]);
        }
    }

    #[test]
    fn median_rejects_even_window() {
        assert!(median_smooth(&single_channel(&[1.0, 2.0]), 4).is_err());
        assert!(median_smooth(&single_channel(&[1.0, 2.0]), 0).is_err());
    }

    #[test]
    fn default_split_shapes() {
        let split = BodySplit::default();
        split.validate().unwrap();
        assert_eq!(split.body_columns().len(), 39);
        assert_eq!(split.righthand_columns().len(), 6);
        let seq = random_seq(4, 3);
        let (body, rh) = split.split(&seq.joints).unwrap();
        assert_eq!(body.cols(), 39);
        for r in 0..4 {
            assert_eq!(&rh.row(r)[3..], &seq.joints.row(r)[24..27]);
        }
        assert_eq!(split.merge(&body, &rh).unwrap(), seq.joints);
    }

    #[test]
    fn invalid_split_is_rejected() {
        let split = BodySplit {
            body_indices: vec![0, 1],
            righthand_indices: vec![1, 2],
        };
        assert!(split.validate().is_err());
    }

    #[test]
    fn csv_and_binary_and_render_io() {
        let dir = tempfile::tempdir().unwrap();
        let seq = SkeletonSequence::new(
            Matrix::from_fn(3, SKELETON_DIM, |r, c| r as f64 * 0.5 + c as f64 * 0.25),
            30.0,
        )
        .unwrap();
        let csv = dir.path().join("s.csv");
        seq.write_csv(&csv).unwrap();
        let header = std::fs::read_to_string(&csv).unwrap();
        assert!(header.starts_with("frame,head_x,head_y,head_z,nose_x"));
        assert_eq!(SkeletonSequence::read_csv(&csv, 30.0).unwrap(), seq);

        let bin = dir.path().join("s.bgs");
        seq.write_binary(&bin).unwrap();
        assert_eq!(SkeletonSequence::read_binary(&bin, 30.0).unwrap(), seq);

        let json = dir.path().join("s.json");
        seq.write_render_json(&json).unwrap();
        let r: RenderExport = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
        assert_eq!(r.frames.len(), 3);
        assert_eq!(r.frames[1].len(), 15);
        assert_eq!(r.frames[1][2], [0.5 + 1.5, 0.5 + 1.75, 0.5 + 2.0]);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(frames in 1usize..20, seed in 0u64..500) {
            let once = normalize(&random_seq(frames, seed)).unwrap();
            let twice = normalize(&once).unwrap();
            prop_assert!(twice.joints.max_abs_diff(&once.joints).unwrap() < 1e-12);
        }

        #[test]
        fn median_commutes_with_translation(frames in 1usize..15, seed in 0u64..500, shift in -5.0f64..5.0) {
            let seq = random_seq(frames, seed);
            let moved = SkeletonSequence::new(seq.joints.map(|v| v + shift), 30.0).unwrap();
            let a = median_smooth(&seq, 5).unwrap().joints.map(|v| v + shift);
            let b = median_smooth(&moved, 5).unwrap().joints;
            prop_assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
        }

        #[test]
        fn split_merge_is_bijective(frames in 1usize..10, seed in 0u64..500) {
            let split = BodySplit::default();
            let seq = random_seq(frames, seed);
            let (b, r) = split.split(&seq.joints).unwrap();
            prop_assert_eq!(split.merge(&b, &r).unwrap(), seq.joints);
        }
    }
}
