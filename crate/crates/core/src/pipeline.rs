//! End-to-end data flow shared by the command line and tests: piece
//! preparation, fold assembly, per-fold training and per-piece scoring.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignment::{
    dtw, resample_features, segment, split_train_val, transfer_beats, zscore_apply, zscore_fit_segments,
    split_folds, BeatGrid, FoldManifest, Segment, SEGMENT_LEN,
};
use crate::audio_features::{extract_features_with, read_wav, AudioClip, FeatureConfig, N_MFCC};
use crate::error::{Error, Result};
use crate::matfile::{read_matrix, write_matrix, FEATURE_MAGIC, SKELETON_MAGIC};
use crate::matrix::Matrix;
use crate::metrics::{evaluate_with, EvalOptions, MetricsReport};
use crate::model::{generate, ModelConfig, ModelWeights};
use crate::skeleton::{median_smooth, normalize, SkeletonSequence};
use crate::training::{fit, Example, FitResult, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepareOptions {
    pub segment_len: usize,
    pub median_window: usize,
    pub features: FeatureConfig,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            segment_len: SEGMENT_LEN,
            median_window: 5,
            features: FeatureConfig::default(),
        }
    }
}

/// A piece ready for training: raw features, normalized and smoothed
/// skeleton of equal length, beat frames and the segments they anchor.
#[derive(Debug, Clone)]
pub struct PreparedPiece {
    pub id: String,
    pub features: Matrix,
    pub skeleton: Matrix,
    pub beat_frames: Vec<usize>,
    pub segments: Vec<Segment>,
    pub warnings: Vec<String>,
}

/// Prepares a piece from in-memory parts. With a `reference` recording the
/// beats are times in the reference, carried over to `audio` by DTW on the
/// MFCC columns; otherwise they are times in `audio` itself.
pub fn prepare_parts(
    id: &str,
    audio: &AudioClip,
    skeleton: &SkeletonSequence,
    beats: &BeatGrid,
    reference: Option<&AudioClip>,
    opts: &PrepareOptions,
) -> Result<PreparedPiece> {
    let fr = opts.features.frame_rate;
    let features = extract_features_with(audio, &opts.features)?.frames;
    let (fa, fs) = (features.rows(), skeleton.len());
    if fa.abs_diff(fs) > 1 {
        return Err(Error::invalid(format!(
            "{id}: audio gives {fa} frames but the skeleton has {fs}"
        )));
    }
    let n = fa.min(fs);
    let features = features.slice_rows(0, n)?;
    let skel = SkeletonSequence::with_joint_names(skeleton.joints.slice_rows(0, n)?, fr, skeleton.joint_names.clone())?;
    let skel = median_smooth(&normalize(&skel)?, opts.median_window)?;

    let mut warnings = Vec::new();
    let beat_frames = match reference {
        Some(r) => {
            let rf = extract_features_with(r, &opts.features)?.frames;
            let cols: Vec<usize> = (0..N_MFCC).collect();
            let path = dtw(&rf.select_cols(&cols)?, &features.select_cols(&cols)?)?.path;
            let t = transfer_beats(beats, &path, fr);
            warnings.extend(t.warnings);
            t.frames
        }
        None => beats.to_frames(fr),
    };
    let segments = segment(id, &features, &skel.joints, &beat_frames, opts.segment_len)?;
    if segments.is_empty() {
        warnings.push(format!(
            "{id}: no segments of {} frames fit in {n} frames",
            opts.segment_len
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(PreparedPiece {
        id: id.to_string(),
        features,
        skeleton: skel.joints,
        beat_frames,
        segments,
        warnings,
    })
}

/// Prepares `<dir>/{audio.wav, skeleton.csv, beats.txt[, reference.wav]}`.
pub fn prepare_dir(dir: &Path, id: &str, opts: &PrepareOptions) -> Result<PreparedPiece> {
    for f in ["audio.wav", "skeleton.csv", "beats.txt"] {
        let p = dir.join(f);
        if !p.is_file() {
            return Err(Error::invalid(format!("{id}: missing {}", p.display())));
        }
    }
    let audio = read_wav(&dir.join("audio.wav"))?;
    let skeleton = SkeletonSequence::read_csv(&dir.join("skeleton.csv"), opts.features.frame_rate)?;
    let beats = BeatGrid::read(&dir.join("beats.txt"))?;
    let reference = dir.join("reference.wav");
    let reference = if reference.is_file() { Some(read_wav(&reference)?) } else { None };
    prepare_parts(id, &audio, &skeleton, &beats, reference.as_ref(), opts)
}

/// Fold that tests on `test` pieces and splits the remaining pieces'
/// segments into train and validation.
pub fn make_fold(
    fold: usize,
    pieces: &BTreeMap<String, PreparedPiece>,
    test: &[String],
    val_fraction: f64,
    seed: u64,
) -> FoldManifest {
    let segs: Vec<Segment> = pieces
        .values()
        .filter(|p| !test.contains(&p.id))
        .flat_map(|p| p.segments.iter().cloned())
        .collect();
    let (train, val) = split_train_val(&segs, val_fraction, seed);
    FoldManifest {
        fold,
        train: train.iter().map(Segment::id).collect(),
        val: val.iter().map(Segment::id).collect(),
        test: test.to_vec(),
    }
}

fn resolve<'a>(pieces: &'a BTreeMap<String, PreparedPiece>, id: &str) -> Result<&'a Segment> {
    let (piece, start) = id
        .rsplit_once(':')
        .ok_or_else(|| Error::invalid(format!("segment id `{id}` is not `piece:start`")))?;
    let start: usize = start
        .parse()
        .map_err(|_| Error::invalid(format!("segment id `{id}` has a bad start frame")))?;
    pieces
        .get(piece)
        .and_then(|p| p.segments.iter().find(|s| s.start_frame == start))
        .ok_or_else(|| Error::invalid(format!("unknown segment `{id}`")))
}

/// Fits feature normalization on the fold's training segments, then
/// trains from `ModelWeights::init(model_cfg, init_seed)`. The returned
/// weights carry the normalization.
pub fn train_fold(
    pieces: &BTreeMap<String, PreparedPiece>,
    fold: &FoldManifest,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    init_seed: u64,
    log: Option<&mut dyn Write>,
) -> Result<FitResult> {
    let train: Vec<&Segment> = fold.train.iter().map(|id| resolve(pieces, id)).collect::<Result<_>>()?;
    let val: Vec<&Segment> = fold.val.iter().map(|id| resolve(pieces, id)).collect::<Result<_>>()?;
    if let Some(s) = train.iter().chain(&val).find(|s| fold.test.contains(&s.piece_id)) {
        return Err(Error::invalid(format!("segment {} belongs to a test piece", s.id())));
    }
    let norm = zscore_fit_segments(train.iter().map(|s| (*s, &pieces[&s.piece_id].features)))?;
    let mut normalized = BTreeMap::new();
    for s in train.iter().chain(&val) {
        if !normalized.contains_key(&s.piece_id) {
            normalized.insert(s.piece_id.clone(), zscore_apply(&pieces[&s.piece_id].features, &norm)?);
        }
    }
    let example = |s: &&Segment| Example {
        features: s.rows(&normalized[&s.piece_id]),
        target: s.rows(&pieces[&s.piece_id].skeleton),
        len: s.len,
    };
    let train_ex: Vec<Example<'_>> = train.iter().map(example).collect();
    let val_ex: Vec<Example<'_>> = val.iter().map(example).collect();
    let mut init = ModelWeights::init(model_cfg, init_seed)?;
    init.norm = Some(norm.clone());
    let mut result = fit(init, &train_ex, &val_ex, train_cfg, log)?;
    result.weights.norm = Some(norm);
    Ok(result)
}

/// Generates motion for a whole piece, with features and ground truth both
/// time-scaled by `speed`, and scores it.
pub fn evaluate_piece(weights: &ModelWeights, piece: &PreparedPiece, speed: f64) -> Result<(Matrix, MetricsReport)> {
    let (features, gt) = if speed == 1.0 {
        (piece.features.clone(), piece.skeleton.clone())
    } else {
        (resample_features(&piece.features, speed)?, resample_features(&piece.skeleton, speed)?)
    };
    let pred = generate(weights, &features)?;
    let report = evaluate_with(&pred, &gt, &EvalOptions::default())?;
    Ok((pred, report))
}

const MANIFEST: &str = "manifest.json";
const FEATURES_FILE: &str = "features.bgf";
const SKELETON_FILE: &str = "skeleton.bgs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceEntry {
    pub id: String,
    pub frames: usize,
    pub beat_frames: Vec<usize>,
    pub segments: Vec<Segment>,
    pub warnings: Vec<String>,
}

/// Index of a prepared directory. Per-piece matrices live next to it in
/// `<id>/features.bgf` and `<id>/skeleton.bgs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedManifest {
    pub options: PrepareOptions,
    pub pieces: Vec<PieceEntry>,
}

/// Writes prepared pieces, the manifest and one `folds/fold_NN.json` per
/// fold. Output depends only on the inputs.
pub fn save_prepared(
    out: &Path,
    opts: &PrepareOptions,
    pieces: &BTreeMap<String, PreparedPiece>,
    folds: &[FoldManifest],
) -> Result<()> {
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mkdir(out)?;
    for p in pieces.values() {
        let dir = out.join(&p.id);
        mkdir(&dir)?;
        write_matrix(&dir.join(FEATURES_FILE), FEATURE_MAGIC, &p.features)?;
        write_matrix(&dir.join(SKELETON_FILE), SKELETON_MAGIC, &p.skeleton)?;
    }
    let manifest = PreparedManifest {
        options: opts.clone(),
        pieces: pieces
            .values()
            .map(|p| PieceEntry {
                id: p.id.clone(),
                frames: p.features.rows(),
                beat_frames: p.beat_frames.clone(),
                segments: p.segments.clone(),
                warnings: p.warnings.clone(),
            })
            .collect(),
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    let fold_dir = out.join("folds");
    mkdir(&fold_dir)?;
    for f in folds {
        write_json(&fold_dir.join(format!("fold_{:02}.json", f.fold)), f)?;
    }
    Ok(())
}

/// Reads what `save_prepared` wrote, without the folds.
pub fn load_prepared(dir: &Path) -> Result<(PrepareOptions, BTreeMap<String, PreparedPiece>)> {
    let manifest: PreparedManifest = read_json(&dir.join(MANIFEST))?;
    let mut pieces = BTreeMap::new();
    for e in manifest.pieces {
        let features = read_matrix(&dir.join(&e.id).join(FEATURES_FILE), FEATURE_MAGIC)?;
        let skeleton = read_matrix(&dir.join(&e.id).join(SKELETON_FILE), SKELETON_MAGIC)?;
        if features.rows() != e.frames || skeleton.rows() != e.frames {
            return Err(Error::format(
                dir.join(&e.id),
                format!(
                    "manifest says {} frames, found {} feature and {} skeleton rows",
                    e.frames,
                    features.rows(),
                    skeleton.rows()
                ),
            ));
        }
        pieces.insert(
            e.id.clone(),
            PreparedPiece {
                id: e.id,
                features,
                skeleton,
                beat_frames: e.beat_frames,
                segments: e.segments,
                warnings: e.warnings,
            },
        );
    }
    Ok((manifest.options, pieces))
}

/// Reads every `fold_*.json` under `<dir>/folds`, ordered by fold index.
pub fn load_folds(dir: &Path) -> Result<Vec<FoldManifest>> {
    let fold_dir = dir.join("folds");
    let entries = std::fs::read_dir(&fold_dir).map_err(|e| Error::io(&fold_dir, e))?;
    let mut folds = Vec::new();
    for e in entries {
        let path = e.map_err(|e| Error::io(&fold_dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            folds.push(read_json::<FoldManifest>(&path)?);
        }
    }
    folds.sort_by_key(|f| f.fold);
    Ok(folds)
}

/// Leave-one-piece-out folds over all pieces, each with its own seeded
/// train/validation split of the remaining segments.
pub fn leave_one_out(pieces: &BTreeMap<String, PreparedPiece>, val_fraction: f64, seed: u64) -> Result<Vec<FoldManifest>> {
    let ids: Vec<String> = pieces.keys().cloned().collect();
    Ok(split_folds(&ids, ids.len())?
        .into_iter()
        .map(|f| make_fold(f.fold, pieces, &f.test, val_fraction, seed.wrapping_add(f.fold as u64)))
        .collect())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))
}
