//! Command-line front end. Every command reads an optional TOML project
//! file; flags override its values.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::resample_features;
use crate::audio_features::{extract_features_with, read_wav};
use crate::error::{Error, Result};
use crate::matfile::{read_matrix, SKELETON_MAGIC};
use crate::matrix::Matrix;
use crate::metrics::{evaluate_with, write_table_csv, EvalOptions, MetricsReport};
use crate::model::{generate, ModelConfig, ModelWeights};
use crate::pipeline::{
    evaluate_piece, leave_one_out, load_folds, load_prepared, prepare_dir, save_prepared, train_fold, write_json,
    PrepareOptions, PreparedPiece,
};
use crate::skeleton::SkeletonSequence;
use crate::synth::{write_corpus, SyntheticSpec};
use crate::training::TrainConfig;

/// Playback speeds of the tempo-robustness sweep.
pub const SWEEP_SPEEDS: [f64; 5] = [0.5, 0.75, 1.0, 1.5, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    #[serde(flatten)]
    pub options: EvalOptions,
    /// Speeds evaluated when no `--speed` flag is given.
    pub speeds: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            options: EvalOptions::default(),
            speeds: vec![1.0],
        }
    }
}

/// Contents of the project file. All keys are optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    /// Root holding one directory per piece.
    pub dataset: PathBuf,
    /// Base for default output directories.
    pub out: PathBuf,
    /// Folds to train; empty means all.
    pub folds: Vec<usize>,
    pub val_fraction: f64,
    pub prepare: PrepareOptions,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub synth: SyntheticSpec,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data"),
            out: PathBuf::from("runs"),
            folds: Vec::new(),
            val_fraction: 0.1,
            prepare: PrepareOptions::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            synth: SyntheticSpec::default(),
        }
    }
}

impl ProjectConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::invalid(format!("config does not serialize: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::invalid(format!("val_fraction must be in [0, 1), got {}", self.val_fraction)));
        }
        if self.prepare.segment_len == 0 {
            return Err(Error::invalid("prepare.segment_len must be positive"));
        }
        if self.eval.speeds.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid("eval.speeds must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "bowmotion", version, about = "Violinist skeleton motion from music audio")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML project file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed used by the command.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract features, align, segment and write fold manifests.
    Prepare {
        #[command(flatten)]
        common: Common,
        /// Dataset root; overrides `dataset`.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        segment_len: Option<usize>,
    },
    /// Train one model per selected fold.
    Train {
        #[command(flatten)]
        common: Common,
        /// Prepared directory; defaults to `<out>/prepared`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Folds to train (repeatable); overrides `folds`.
        #[arg(long = "fold")]
        folds: Vec<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Generate skeletons from audio files or piece directories.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Time-scale the audio features before generation.
        #[arg(long)]
        speed: Option<f64>,
        /// `.wav` files or directories containing `audio.wav`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Score predictions against ground truth, or a checkpoint on prepared data.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Directory of `<piece>.csv` predictions.
        #[arg(long, conflicts_with = "checkpoint", requires = "gt")]
        pred: Option<PathBuf>,
        /// Ground truth: `<piece>.csv`, `<piece>/skeleton.bgs` or `<piece>/skeleton.csv`.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Model to run on prepared data instead of reading predictions.
        #[arg(long, requires = "data")]
        checkpoint: Option<PathBuf>,
        /// Prepared directory used with `--checkpoint`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Pieces to score with `--checkpoint`; defaults to all.
        #[arg(long = "piece")]
        pieces: Vec<String>,
        /// Playback speeds (repeatable); needs `--checkpoint`.
        #[arg(long = "speed")]
        speeds: Vec<f64>,
        /// Shorthand for the five sweep speeds 0.5x to 2x.
        #[arg(long, conflicts_with = "speeds")]
        sweep: bool,
    },
    /// Write a synthetic corpus with correlated audio and motion.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_pieces: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        bowing_rate: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Print the effective project file.
    Config {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<ProjectConfig> {
    let cfg = match &common.config {
        Some(p) => ProjectConfig::load(p)?,
        None => ProjectConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} {} does not exist", path.display())))
    }
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn collect_failures<T>(results: Vec<(String, Result<T>)>) -> Result<Vec<(String, T)>> {
    let total = results.len();
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (id, r) in results {
        match r {
            Ok(v) => ok.push((id, v)),
            Err(e) => failures.push(format!("{id}: {e}")),
        }
    }
    if failures.is_empty() {
        Ok(ok)
    } else {
        Err(Error::Pieces { total, failures })
    }
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare { common, dataset, segment_len } => {
            let mut cfg = load_config(&common)?;
            if let Some(d) = dataset {
                cfg.dataset = d;
            }
            if let Some(l) = segment_len {
                cfg.prepare.segment_len = l;
            }
            let seed = common.seed.unwrap_or(cfg.train.seed);
            let out = common.out.unwrap_or_else(|| cfg.out.join("prepared"));
            cmd_prepare(&cfg.dataset, &out, &cfg.prepare, cfg.val_fraction, seed)
        }
        Command::Train { common, data, folds, epochs } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = common.seed {
                cfg.train.seed = s;
            }
            if let Some(e) = epochs {
                cfg.train.max_epochs = e;
            }
            if !folds.is_empty() {
                cfg.folds = folds;
            }
            cfg.train.validate()?;
            let data = data.unwrap_or_else(|| cfg.out.join("prepared"));
            let out = common.out.unwrap_or_else(|| cfg.out.join("train"));
            cmd_train(&data, &out, &cfg)
        }
        Command::Generate { common, checkpoint, speed, inputs } => {
            let cfg = load_config(&common)?;
            let expected = common.config.as_ref().map(|_| &cfg.model);
            let out = common.out.unwrap_or_else(|| cfg.out.join("generated"));
            cmd_generate(&checkpoint, expected, &inputs, speed, &cfg.prepare, &out)
        }
        Command::Evaluate { common, pred, gt, checkpoint, data, pieces, speeds, sweep } => {
            let cfg = load_config(&common)?;
            let out = common.out.unwrap_or_else(|| cfg.out.join("eval"));
            let speeds = if sweep {
                SWEEP_SPEEDS.to_vec()
            } else if speeds.is_empty() {
                cfg.eval.speeds.clone()
            } else {
                speeds
            };
            match (pred, gt, checkpoint, data) {
                (Some(pred), Some(gt), None, _) => {
                    if speeds != [1.0] {
                        return Err(Error::invalid("--speed needs --checkpoint and --data"));
                    }
                    cmd_evaluate_files(&pred, &gt, &cfg.eval.options, &out)
                }
                (None, _, Some(ck), Some(data)) => {
                    let expected = common.config.as_ref().map(|_| &cfg.model);
                    cmd_evaluate_model(&ck, expected, &data, &pieces, &speeds, &cfg.eval.options, &out)
                }
                _ => Err(Error::invalid(
                    "evaluate needs either --pred and --gt, or --checkpoint and --data",
                )),
            }
        }
        Command::Synth { common, n_pieces, frames, bowing_rate, noise } => {
            let mut cfg = load_config(&common)?;
            let spec = &mut cfg.synth;
            if let Some(v) = n_pieces {
                spec.n_pieces = v;
            }
            if let Some(v) = frames {
                spec.frames_per_piece = v;
            }
            if let Some(v) = bowing_rate {
                spec.bowing_rate = v;
            }
            if let Some(v) = noise {
                spec.noise = v;
            }
            if let Some(v) = common.seed {
                spec.seed = v;
            }
            let out = common.out.unwrap_or_else(|| cfg.dataset.clone());
            mkdir(&out)?;
            let pieces = write_corpus(&cfg.synth, &out)?;
            println!("wrote {} synthetic pieces to {}", pieces.len(), out.display());
            Ok(())
        }
        Command::Config { common } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = common.seed {
                cfg.train.seed = s;
                cfg.synth.seed = s;
            }
            if let Some(o) = common.out {
                cfg.out = o;
            }
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
    }
}

fn piece_dirs(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs = Vec::new();
    for e in entries {
        let path = e.map_err(|e| Error::io(root, e))?.path();
        if path.is_dir() {
            let id = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            dirs.push((id, path));
        }
    }
    dirs.sort();
    Ok(dirs)
}

pub fn cmd_prepare(dataset: &Path, out: &Path, opts: &PrepareOptions, val_fraction: f64, seed: u64) -> Result<()> {
    require_dir(dataset, "dataset root")?;
    let dirs = piece_dirs(dataset)?;
    if dirs.is_empty() {
        return Err(Error::invalid(format!("no piece directories under {}", dataset.display())));
    }
    let results: Vec<(String, Result<PreparedPiece>)> = dirs
        .par_iter()
        .map(|(id, dir)| (id.clone(), prepare_dir(dir, id, opts)))
        .collect();
    let pieces: BTreeMap<String, PreparedPiece> = collect_failures(results)?.into_iter().collect();
    let folds = if pieces.len() >= 2 {
        leave_one_out(&pieces, val_fraction, seed)?
    } else {
        log::warn!("one piece only: no folds written");
        Vec::new()
    };
    save_prepared(out, opts, &pieces, &folds)?;
    let n_segments: usize = pieces.values().map(|p| p.segments.len()).sum();
    println!(
        "prepared {} pieces, {n_segments} segments, {} folds in {}",
        pieces.len(),
        folds.len(),
        out.display()
    );
    for w in pieces.values().flat_map(|p| &p.warnings) {
        println!("warning: {w}");
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    fold: usize,
    test: &'a [String],
    epochs_run: usize,
    best_epoch: usize,
    best_val_loss: f64,
    stopped_early: bool,
}

pub fn cmd_train(data: &Path, out: &Path, cfg: &ProjectConfig) -> Result<()> {
    require_dir(data, "prepared directory")?;
    let (_, pieces) = load_prepared(data)?;
    if let Some(p) = pieces.values().find(|p| p.features.cols() != cfg.model.feature_dim) {
        return Err(Error::shape(format!(
            "model.feature_dim is {} but piece {} has {} feature columns",
            cfg.model.feature_dim,
            p.id,
            p.features.cols()
        )));
    }
    let all = load_folds(data)?;
    let selected: Vec<_> = if cfg.folds.is_empty() {
        all
    } else {
        cfg.folds
            .iter()
            .map(|&k| {
                all.iter()
                    .find(|f| f.fold == k)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("no fold {k} in {}", data.display())))
            })
            .collect::<Result<_>>()?
    };
    if selected.is_empty() {
        return Err(Error::invalid(format!("no folds in {}", data.display())));
    }
    for fold in &selected {
        let dir = out.join(format!("fold_{:02}", fold.fold));
        mkdir(&dir)?;
        let log_path = dir.join("train_log.jsonl");
        let file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
        let mut log = BufWriter::new(file);
        let result = train_fold(&pieces, fold, &cfg.model, &cfg.train, cfg.train.seed, Some(&mut log))?;
        drop(log);
        result.weights.save(&dir.join("model.bgw"))?;
        result.optimizer.save(&dir.join("optimizer.bgo"))?;
        let h = &result.history;
        write_json(
            &dir.join("summary.json"),
            &TrainSummary {
                fold: fold.fold,
                test: &fold.test,
                epochs_run: h.epochs.len(),
                best_epoch: h.best_epoch,
                best_val_loss: h.best_val_loss,
                stopped_early: h.stopped_early,
            },
        )?;
        println!(
            "fold {}: best val L1 {:.5} at epoch {} of {}",
            fold.fold,
            h.best_val_loss,
            h.best_epoch,
            h.epochs.len()
        );
    }
    Ok(())
}

/// Names the first top-level config field where `found` differs from `expected`.
fn config_mismatch(expected: &ModelConfig, found: &ModelConfig) -> Option<String> {
    let a = serde_json::to_value(expected).ok()?;
    let b = serde_json::to_value(found).ok()?;
    let (a, b) = (a.as_object()?, b.as_object()?);
    a.iter().find(|(k, v)| b.get(*k) != Some(*v)).map(|(k, v)| {
        format!(
            "checkpoint has model.{k} = {}, config says {v}",
            b.get(k).map(ToString::to_string).unwrap_or_default()
        )
    })
}

pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<ModelWeights> {
    let w = ModelWeights::load(path)?;
    if let Some(msg) = expected.and_then(|e| config_mismatch(e, &w.config)) {
        return Err(Error::format(path, msg));
    }
    Ok(w)
}

pub fn cmd_generate(
    checkpoint: &Path,
    expected: Option<&ModelConfig>,
    inputs: &[PathBuf],
    speed: Option<f64>,
    opts: &PrepareOptions,
    out: &Path,
) -> Result<()> {
    let weights = load_checkpoint(checkpoint, expected)?;
    mkdir(out)?;
    let fr = opts.features.frame_rate;
    let results: Vec<(String, Result<()>)> = inputs
        .par_iter()
        .map(|input| {
            let (id, wav) = if input.is_dir() {
                (input.file_name().unwrap_or_default(), input.join("audio.wav"))
            } else {
                (input.file_stem().unwrap_or_default(), input.clone())
            };
            let id = id.to_string_lossy().into_owned();
            let run = || -> Result<()> {
                let mut features = extract_features_with(&read_wav(&wav)?, &opts.features)?.frames;
                if let Some(s) = speed {
                    features = resample_features(&features, s)?;
                }
                let seq = SkeletonSequence::new(generate(&weights, &features)?, fr)?;
                seq.write_csv(&out.join(format!("{id}.csv")))?;
                seq.write_render_json(&out.join(format!("{id}.json")))
            };
            let r = run();
            (id, r)
        })
        .collect();
    let done = collect_failures(results)?;
    println!("generated {} skeletons in {}", done.len(), out.display());
    Ok(())
}

fn read_skeleton_any(path: &Path) -> Result<Matrix> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bgs") => read_matrix(path, SKELETON_MAGIC),
        _ => Ok(SkeletonSequence::read_csv(path, crate::audio_features::FRAME_RATE)?.joints),
    }
}

fn find_gt(gt: &Path, id: &str) -> Option<PathBuf> {
    [
        gt.join(format!("{id}.csv")),
        gt.join(id).join("skeleton.bgs"),
        gt.join(id).join("skeleton.csv"),
    ]
    .into_iter()
    .find(|p| p.is_file())
}

fn score(pred: &Matrix, gt: &Matrix, opts: &EvalOptions) -> Result<MetricsReport> {
    let (a, b) = (pred.rows(), gt.rows());
    if a.abs_diff(b) > 1 {
        return Err(Error::shape(format!("prediction has {a} frames, ground truth {b}")));
    }
    let n = a.min(b);
    evaluate_with(&pred.slice_rows(0, n)?, &gt.slice_rows(0, n)?, opts)
}

fn write_reports(out: &Path, stem: &str, rows: &[(String, MetricsReport)]) -> Result<MetricsReport> {
    let reports: Vec<MetricsReport> = rows.iter().map(|(_, r)| *r).collect();
    let mean = MetricsReport::mean(&reports)?;
    let mut table = rows.to_vec();
    table.push(("mean".to_string(), mean));
    write_table_csv(&out.join(format!("{stem}.csv")), &table)?;
    let json: BTreeMap<&str, &MetricsReport> = table.iter().map(|(k, v)| (k.as_str(), v)).collect();
    write_json(&out.join(format!("{stem}.json")), &json)?;
    Ok(mean)
}

pub fn cmd_evaluate_files(pred: &Path, gt: &Path, opts: &EvalOptions, out: &Path) -> Result<()> {
    require_dir(pred, "prediction directory")?;
    require_dir(gt, "ground-truth directory")?;
    let entries = fs::read_dir(pred).map_err(|e| Error::io(pred, e))?;
    let mut files = Vec::new();
    for e in entries {
        let path = e.map_err(|e| Error::io(pred, e))?.path();
        if path.extension().is_some_and(|x| x == "csv") {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(format!("no .csv predictions in {}", pred.display())));
    }
    let results: Vec<(String, Result<MetricsReport>)> = files
        .par_iter()
        .map(|path| {
            let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let r = (|| {
                let g = find_gt(gt, &id)
                    .ok_or_else(|| Error::invalid(format!("no ground truth under {}", gt.display())))?;
                score(&read_skeleton_any(path)?, &read_skeleton_any(&g)?, opts)
            })();
            (id, r)
        })
        .collect();
    let rows = collect_failures(results)?;
    mkdir(out)?;
    let mean = write_reports(out, "report", &rows)?;
    println!(
        "{} pieces: bow avg {:.4}, cosine {:.4}, L1 {:.4}",
        rows.len(),
        mean.bow_avg,
        mean.cosine_similarity,
        mean.l1_avg
    );
    Ok(())
}

pub fn speed_label(speed: f64) -> String {
    format!("{speed}x")
}

pub fn cmd_evaluate_model(
    checkpoint: &Path,
    expected: Option<&ModelConfig>,
    data: &Path,
    pieces: &[String],
    speeds: &[f64],
    opts: &EvalOptions,
    out: &Path,
) -> Result<()> {
    require_dir(data, "prepared directory")?;
    let weights = load_checkpoint(checkpoint, expected)?;
    let (_, prepared) = load_prepared(data)?;
    let selected: Vec<&PreparedPiece> = if pieces.is_empty() {
        prepared.values().collect()
    } else {
        pieces
            .iter()
            .map(|id| prepared.get(id).ok_or_else(|| Error::invalid(format!("unknown piece `{id}`"))))
            .collect::<Result<_>>()?
    };
    if selected.is_empty() {
        return Err(Error::invalid("no pieces to evaluate"));
    }
    mkdir(out)?;
    let mut sweep = Vec::new();
    for &speed in speeds {
        let results: Vec<(String, Result<MetricsReport>)> = selected
            .par_iter()
            .map(|p| {
                let r = evaluate_piece(&weights, p, speed).and_then(|(pred, _)| {
                    let gt = if speed == 1.0 {
                        p.skeleton.clone()
                    } else {
                        resample_features(&p.skeleton, speed)?
                    };
                    score(&pred, &gt, opts)
                });
                (p.id.clone(), r)
            })
            .collect();
        let rows = collect_failures(results)?;
        let label = speed_label(speed);
        let mean = write_reports(out, &format!("report_{label}"), &rows)?;
        println!("{label}: bow avg {:.4}, cosine {:.4}", mean.bow_avg, mean.cosine_similarity);
        sweep.push((label, mean));
    }
    if speeds.len() > 1 {
        write_table_csv(&out.join("speed_sweep.csv"), &sweep)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = ProjectConfig::default();
        cfg.train.grad_clip = Some(1.5);
        cfg.model = ModelConfig::tiny();
        cfg.eval.speeds = SWEEP_SPEEDS.to_vec();
        cfg.val_fraction = 0.137;
        let text = cfg.to_toml().unwrap();
        assert_eq!(ProjectConfig::from_toml(&text, Path::new("x")).unwrap(), cfg);

        let default = ProjectConfig::default();
        let text = default.to_toml().unwrap();
        assert_eq!(ProjectConfig::from_toml(&text, Path::new("x")).unwrap(), default);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = ProjectConfig::from_toml("dataset = \"d\"\n[train]\nwarmup = 7\n", Path::new("x")).unwrap();
        assert_eq!(cfg.train.warmup, 7);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(cfg.dataset, PathBuf::from("d"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ProjectConfig::from_toml("datset = \"d\"\n", Path::new("p.toml")).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }

    #[test]
    fn mismatch_names_the_field() {
        let a = ModelConfig::tiny();
        let mut b = a.clone();
        assert!(config_mismatch(&a, &b).is_none());
        b.n_heads = 4;
        assert!(config_mismatch(&a, &b).unwrap().contains("model.n_heads"));
    }

    #[test]
    fn failures_list_every_piece() {
        let results = vec![
            ("a".to_string(), Ok(1)),
            ("b".to_string(), Err(Error::invalid("x"))),
            ("c".to_string(), Err(Error::invalid("y"))),
        ];
        match collect_failures(results) {
            Err(Error::Pieces { total, failures }) => {
                assert_eq!(total, 3);
                assert_eq!(failures.len(), 2);
                assert!(failures[0].starts_with("b:") && failures[1].starts_with("c:"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sweep_labels_match_table_header() {
        let labels: Vec<String> = SWEEP_SPEEDS.iter().map(|&s| speed_label(s)).collect();
        assert_eq!(labels, ["0.5x", "0.75x", "1x", "1.5x", "2x"]);
    }
}
