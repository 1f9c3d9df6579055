//! Synthetic violin corpus: bowing strokes drive both the audio envelope
//! and the right-arm motion, so the two are genuinely correlated.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::audio_features::{write_wav, AudioClip, FRAME_RATE};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::skeleton::{SkeletonSequence, N_JOINTS, RIGHT_ELBOW, RIGHT_WRIST};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_pieces: usize,
    pub frames_per_piece: usize,
    /// Bow changes per second.
    pub bowing_rate: f64,
    /// Standard deviation of joint jitter away from the bowing arm.
    pub noise: f64,
    pub seed: u64,
    pub sample_rate: u32,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_pieces: 8,
            frames_per_piece: 900,
            bowing_rate: 1.0,
            noise: 0.002,
            seed: 0,
            sample_rate: 22050,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_pieces == 0 || self.frames_per_piece < 8 || self.sample_rate < 8000 {
            return Err(Error::invalid("synthetic spec needs pieces, >= 8 frames and >= 8 kHz audio"));
        }
        if !(self.bowing_rate > 0.0) || !(self.noise >= 0.0) {
            return Err(Error::invalid("bowing rate must be positive and noise nonnegative"));
        }
        if FRAME_RATE / self.bowing_rate < 4.0 {
            return Err(Error::invalid("bowing rate too high: strokes need at least 4 frames"));
        }
        Ok(())
    }
}

const TEMPLATE: [[f64; 3]; N_JOINTS] = [
    [0.0, 1.70, 0.00],
    [0.0, 1.65, 0.08],
    [0.0, 1.45, 0.00],
    [0.0, 1.20, 0.00],
    [-0.18, 1.45, 0.00],
    [0.18, 1.45, 0.00],
    [-0.30, 1.20, 0.10],
    [0.30, 1.30, 0.20],
    [-0.20, 1.10, 0.30],
    [0.20, 1.45, 0.35],
    [0.0, 0.95, 0.00],
    [-0.10, 0.95, 0.00],
    [0.10, 0.95, 0.00],
    [-0.10, 0.50, 0.00],
    [0.10, 0.50, 0.00],
];

/// Direction of bow travel; every component is nonzero, so all three wrist
/// axes turn at the same frames.
const BOW_DIR: [f64; 3] = [0.62, -0.35, 0.45];

const SCALE_HZ: [f64; 8] = [196.0, 220.0, 246.9, 293.7, 329.6, 392.0, 440.0, 493.9];

#[derive(Debug, Clone)]
pub struct SyntheticPiece {
    pub id: String,
    pub audio: AudioClip,
    pub skeleton: SkeletonSequence,
    /// Frames where the bow turns (interior only).
    pub attack_frames: Vec<usize>,
    /// Stroke start times in seconds.
    pub beats: Vec<f64>,
}

/// Turning frames `0 = t_0 < t_1 < ... < t_K = len - 1` with seeded jitter
/// around the stroke period.
fn stroke_boundaries(len: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let period = FRAME_RATE / rate;
    let mut t = vec![0usize];
    loop {
        let step = (period * rng.gen_range(0.8..1.2)).round().max(4.0) as usize;
        let next = t.last().unwrap() + step;
        if next + 4 > len - 1 {
            break;
        }
        t.push(next);
    }
    t.push(len - 1);
    t
}

/// Bow position in `[-amp, amp]` at fractional frame `f`, linear between
/// turning points.
fn bow_position(bounds: &[usize], amps: &[f64], f: f64) -> (f64, usize) {
    let k = bounds.partition_point(|&b| (b as f64) <= f).clamp(1, bounds.len() - 1) - 1;
    let (t0, t1) = (bounds[k] as f64, bounds[k + 1] as f64);
    let u = ((f - t0) / (t1 - t0)).clamp(0.0, 1.0);
    (amps[k] + u * (amps[k + 1] - amps[k]), k)
}

pub fn synth_piece(spec: &SyntheticSpec, index: usize) -> Result<SyntheticPiece> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let len = spec.frames_per_piece;
    let bounds = stroke_boundaries(len, spec.bowing_rate, &mut rng);
    // Alternating extremes of the bow.
    let amps: Vec<f64> = (0..bounds.len())
        .map(|k| {
            let a = rng.gen_range(0.08..0.12);
            if k % 2 == 0 {
                -a
            } else {
                a
            }
        })
        .collect();
    let pitches: Vec<f64> = (0..bounds.len()).map(|_| SCALE_HZ[rng.gen_range(0..SCALE_HZ.len())]).collect();

    let noise = Normal::new(0.0, spec.noise.max(1e-12)).expect("valid sigma");
    let sway_phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut joints = Matrix::zeros(len, 3 * N_JOINTS);
    for t in 0..len {
        let (s, _) = bow_position(&bounds, &amps, t as f64);
        let sway = 0.01 * (t as f64 / FRAME_RATE * 0.7 + sway_phase).sin();
        let row = joints.row_mut(t);
        for j in 0..N_JOINTS {
            for a in 0..3 {
                let base = TEMPLATE[j][a];
                row[3 * j + a] = match j {
                    RIGHT_WRIST => base + s * BOW_DIR[a],
                    RIGHT_ELBOW => base + 0.4 * s * BOW_DIR[a],
                    _ => {
                        let n = if spec.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                        base + if a == 0 { sway } else { 0.0 } + n
                    }
                };
            }
        }
    }

    let sr = spec.sample_rate as f64;
    let n_samples = (len as f64 / FRAME_RATE * sr).round() as usize;
    let mut audio = Vec::with_capacity(n_samples);
    let mut phase = 0.0f64;
    let hiss = Normal::new(0.0, 0.002).expect("valid sigma");
    for n in 0..n_samples {
        let f = n as f64 / sr * FRAME_RATE;
        let (s, k) = bow_position(&bounds, &amps, f);
        let a = amps[k].abs().max(amps[k + 1].abs());
        let env = 0.1 + 0.5 * (s / a + 1.0) / 2.0;
        phase = (phase + std::f64::consts::TAU * pitches[k] / sr) % std::f64::consts::TAU;
        let tone: f64 = (1..=4).map(|h| (h as f64 * phase).sin() / h as f64).sum::<f64>() / 2.1;
        audio.push(env * tone + hiss.sample(&mut rng));
    }

    Ok(SyntheticPiece {
        id: format!("piece{index:02}"),
        audio: AudioClip::new(audio, spec.sample_rate)?,
        skeleton: SkeletonSequence::new(joints, FRAME_RATE)?,
        attack_frames: bounds[1..bounds.len() - 1].to_vec(),
        beats: bounds[..bounds.len() - 1].iter().map(|&b| b as f64 / FRAME_RATE).collect(),
    })
}

/// Attack flags (as produced by direction changes) for bow turns at
/// `frames` in a sequence of `len` frames: a turn at frame `t` is flagged
/// at index `t - 1`.
pub fn attack_flags(frames: &[usize], len: usize) -> Vec<u8> {
    let mut flags = vec![0u8; len.saturating_sub(2)];
    for &t in frames {
        if t >= 1 && t - 1 < flags.len() {
            flags[t - 1] = 1;
        }
    }
    flags
}

#[derive(Serialize)]
struct SynthManifest<'a> {
    spec: &'a SyntheticSpec,
    pieces: Vec<PieceInfo>,
}

#[derive(Serialize)]
struct PieceInfo {
    id: String,
    frames: usize,
    attacks: usize,
}

/// Writes `<out>/<piece>/{audio.wav, skeleton.csv, beats.txt, attacks.txt}`
/// and `<out>/synth.json`.
pub fn write_corpus(spec: &SyntheticSpec, out: &Path) -> Result<Vec<SyntheticPiece>> {
    spec.validate()?;
    let pieces: Vec<SyntheticPiece> = (0..spec.n_pieces).map(|i| synth_piece(spec, i)).collect::<Result<_>>()?;
    for p in &pieces {
        let dir = out.join(&p.id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_wav(&dir.join("audio.wav"), &p.audio)?;
        p.skeleton.write_csv(&dir.join("skeleton.csv"))?;
        let beats: String = p.beats.iter().map(|b| format!("{b:.6}\n")).collect();
        let path = dir.join("beats.txt");
        std::fs::write(&path, beats).map_err(|e| Error::io(&path, e))?;
        let attacks: String = p.attack_frames.iter().map(|f| format!("{f}\n")).collect();
        let path = dir.join("attacks.txt");
        std::fs::write(&path, format!("# bow-turn frames at {FRAME_RATE} fps\n{attacks}"))
            .map_err(|e| Error::io(&path, e))?;
    }
    let manifest = SynthManifest {
        spec,
        pieces: pieces
            .iter()
            .map(|p| PieceInfo {
                id: p.id.clone(),
                frames: p.skeleton.len(),
                attacks: p.attack_frames.len(),
            })
            .collect(),
    };
    let path = out.join("synth.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(pieces)
}

/// Reads an `attacks.txt` file of frame indices.
pub fn read_attacks(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.parse().map_err(|_| Error::format(path, format!("bad frame index `{l}`"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{bowing_attacks, bowing_direction, bowing_f1};

    fn short() -> SyntheticSpec {
        SyntheticSpec {
            n_pieces: 2,
            frames_per_piece: 300,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn same_seed_same_piece() {
        let a = synth_piece(&short(), 1).unwrap();
        let b = synth_piece(&short(), 1).unwrap();
        assert_eq!(a.audio.samples(), b.audio.samples());
        assert_eq!(a.skeleton, b.skeleton);
        let c = synth_piece(&short(), 0).unwrap();
        assert_ne!(a.attack_frames, c.attack_frames);
    }

    #[test]
    fn one_attack_per_second() {
        let spec = SyntheticSpec {
            frames_per_piece: 900,
            ..SyntheticSpec::default()
        };
        for i in 0..4 {
            let p = synth_piece(&spec, i).unwrap();
            let n = p.attack_frames.len() + 1;
            assert!((29..=31).contains(&n), "{n} strokes");
        }
    }

    #[test]
    fn wrist_attacks_match_emitted_frames_exactly() {
        let p = synth_piece(&short(), 0).unwrap();
        let gt = attack_flags(&p.attack_frames, p.skeleton.len());
        for c in [24, 25, 26] {
            let a = bowing_attacks(&bowing_direction(&p.skeleton.joints.column(c)));
            assert_eq!(bowing_f1(&a, &gt, 0).unwrap().f1, 1.0, "column {c}");
        }
    }

    #[test]
    fn audio_has_expected_length_and_range() {
        let p = synth_piece(&short(), 0).unwrap();
        assert_eq!(p.audio.samples().len(), 300 * 22050 / 30);
        assert!(p.audio.samples().iter().all(|v| v.abs() < 1.0));
        assert_eq!(p.beats[0], 0.0);
    }

    #[test]
    fn corpus_files() {
        let dir = tempfile::tempdir().unwrap();
        let pieces = write_corpus(&short(), dir.path()).unwrap();
        assert!(dir.path().join("synth.json").exists());
        let back = read_attacks(&dir.path().join("piece01/attacks.txt")).unwrap();
        assert_eq!(back, pieces[1].attack_frames);
    }
}
