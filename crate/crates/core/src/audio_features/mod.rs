//! Per-frame audio features: 13 MFCC, log mean energy and their first-order
//! deltas, sampled on a 30 fps grid.

mod mel;
mod wav;

use std::path::Path;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfile;
use crate::matrix::Matrix;

pub use mel::{hz_to_mel, mel_to_hz, MelFilterbank};
pub use wav::{read_wav, write_wav};

/// Number of columns in an [`AudioFeatureSequence`].
pub const FEATURE_DIM: usize = 28;
pub const N_MFCC: usize = 13;
/// Floor applied before every logarithm.
pub const LOG_FLOOR: f64 = 1e-10;
pub const FRAME_RATE: f64 = 30.0;

/// Mono audio with samples nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Power spectrogram, `frames x (window_len / 2 + 1)`.
#[derive(Debug, Clone)]
pub struct PowerSpectrogram {
    pub power: Matrix,
    pub sample_rate: u32,
    pub window_len: usize,
    pub hop_len: usize,
}

impl PowerSpectrogram {
    pub fn frames(&self) -> usize {
        self.power.rows()
    }

    pub fn bins(&self) -> usize {
        self.power.cols()
    }
}

/// `L x 28` features: `[13 MFCC | log energy | 13 dMFCC | d log energy]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioFeatureSequence {
    pub frames: Matrix,
    pub frame_rate: f64,
}

impl AudioFeatureSequence {
    pub fn new(frames: Matrix, frame_rate: f64) -> Result<Self> {
        if frames.cols() != FEATURE_DIM {
            return Err(Error::shape(format!(
                "feature sequence needs {FEATURE_DIM} columns, got {}",
                frames.cols()
            )));
        }
        if !frames.all_finite() {
            return Err(Error::invalid("feature sequence contains non-finite values"));
        }
        Ok(Self { frames, frame_rate })
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn column_names() -> Vec<String> {
        let mut names: Vec<String> = (0..N_MFCC).map(|i| format!("mfcc{i}")).collect();
        names.push("log_energy".into());
        names.extend((0..N_MFCC).map(|i| format!("d_mfcc{i}")));
        names.push("d_log_energy".into());
        names
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        matfile::write_matrix(path, matfile::FEATURE_MAGIC, &self.frames)
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        Self::new(matfile::read_matrix(path, matfile::FEATURE_MAGIC)?, FRAME_RATE)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        matfile::write_csv(path, &Self::column_names(), &self.frames)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let (_, m) = matfile::read_csv(path)?;
        Self::new(m, FRAME_RATE)
    }
}

/// Analysis parameters. Defaults: 4096-sample Hann window, hop of 1/30 s,
/// 128 mel bands from 0 Hz to Nyquist, 13 coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub window_len: usize,
    pub frame_rate: f64,
    pub n_mels: usize,
    pub n_mfcc: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            window_len: 4096,
            frame_rate: FRAME_RATE,
            n_mels: 128,
            n_mfcc: N_MFCC,
        }
    }
}

impl FeatureConfig {
    pub fn hop_len(&self, sample_rate: u32) -> usize {
        ((sample_rate as f64 / self.frame_rate).round() as usize).max(1)
    }
}

/// Index into a signal of length `n` extended by mirror reflection (the edge
/// sample is not repeated).
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
        .collect()
}

/// Centered short-time power spectrum. Frame `t` is centered on sample
/// `t * hop_len`; the signal is reflect-padded by `window_len / 2` on each
/// side, giving `ceil(len / hop_len)` frames.
pub fn stft(clip: &AudioClip, window_len: usize, hop_len: usize) -> Result<PowerSpectrogram> {
    let x = clip.samples();
    if x.is_empty() {
        return Err(Error::invalid("empty audio clip"));
    }
    if hop_len == 0 || window_len == 0 {
        return Err(Error::invalid("window and hop lengths must be positive"));
    }
    let n_frames = x.len().div_ceil(hop_len);
    let n_bins = window_len / 2 + 1;
    let pad = (window_len / 2) as isize;
    let window = hann_window(window_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window_len);

    let mut power = Vec::with_capacity(n_frames * n_bins);
    let mut buf = vec![Complex::new(0.0, 0.0); window_len];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for t in 0..n_frames {
        let start = (t * hop_len) as isize - pad;
        for (k, slot) in buf.iter_mut().enumerate() {
            let s = x[reflect_index(start + k as isize, x.len())];
            *slot = Complex::new(s * window[k], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        power.extend(buf[..n_bins].iter().map(|c| c.norm_sqr()));
    }
    Ok(PowerSpectrogram {
        power: Matrix::from_vec(n_frames, n_bins, power)?,
        sample_rate: clip.sample_rate(),
        window_len,
        hop_len,
    })
}

/// Orthonormal type-II DCT basis, `n_out x n_in`.
fn dct2_basis(n_in: usize, n_out: usize) -> Vec<f64> {
    let n = n_in as f64;
    let mut basis = Vec::with_capacity(n_in * n_out);
    for k in 0..n_out {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        for i in 0..n_in {
            let arg = std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n);
            basis.push(scale * arg.cos());
        }
    }
    basis
}

/// MFCC with the default 128-band filterbank.
pub fn mfcc(spec: &PowerSpectrogram, n_coeffs: usize) -> Result<Matrix> {
    mfcc_with_bands(spec, n_coeffs, FeatureConfig::default().n_mels)
}

/// Mel filterbank, natural log with [`LOG_FLOOR`], orthonormal DCT-II,
/// first `n_coeffs` coefficients.
pub fn mfcc_with_bands(spec: &PowerSpectrogram, n_coeffs: usize, n_mels: usize) -> Result<Matrix> {
    if spec.frames() == 0 {
        return Err(Error::invalid("empty spectrogram"));
    }
    if n_coeffs > n_mels {
        return Err(Error::invalid(format!(
            "{n_coeffs} coefficients requested from {n_mels} mel bands"
        )));
    }
    let fb = MelFilterbank::new(
        spec.sample_rate,
        spec.window_len,
        n_mels,
        0.0,
        spec.sample_rate as f64 / 2.0,
    );
    if fb.n_bins() != spec.bins() {
        return Err(Error::shape(format!(
            "spectrogram has {} bins, filterbank expects {}",
            spec.bins(),
            fb.n_bins()
        )));
    }
    let basis = dct2_basis(n_mels, n_coeffs);
    let mut out = Matrix::zeros(spec.frames(), n_coeffs);
    for (t, frame) in spec.power.row_iter().enumerate() {
        let log_mel: Vec<f64> = fb
            .apply(frame)
            .into_iter()
            .map(|e| e.max(LOG_FLOOR).ln())
            .collect();
        for k in 0..n_coeffs {
            let row = &basis[k * n_mels..(k + 1) * n_mels];
            out.set(t, k, row.iter().zip(&log_mel).map(|(b, v)| b * v).sum());
        }
    }
    Ok(out)
}

/// `log(max(mean power, 1e-10))` per frame, as a `frames x 1` matrix.
pub fn log_mean_energy(spec: &PowerSpectrogram) -> Matrix {
    let bins = spec.bins().max(1) as f64;
    let data = spec
        .power
        .row_iter()
        .map(|frame| (frame.iter().sum::<f64>() / bins).max(LOG_FLOOR).ln())
        .collect();
    Matrix::from_vec(spec.frames(), 1, data).expect("one value per frame")
}

/// Central difference `(x[i+1] - x[i-1]) / 2` along time, with the sequence
/// extended by repeating its first and last frames.
pub fn delta(seq: &Matrix) -> Result<Matrix> {
    let n = seq.rows();
    if n < 2 {
        return Err(Error::invalid(format!("delta needs at least 2 frames, got {n}")));
    }
    Ok(Matrix::from_fn(n, seq.cols(), |i, c| {
        let next = seq.get((i + 1).min(n - 1), c);
        let prev = seq.get(i.saturating_sub(1), c);
        (next - prev) / 2.0
    }))
}

pub fn extract_features(clip: &AudioClip) -> Result<AudioFeatureSequence> {
    extract_features_with(clip, &FeatureConfig::default())
}

pub fn extract_features_with(clip: &AudioClip, cfg: &FeatureConfig) -> Result<AudioFeatureSequence> {
    let spec = stft(clip, cfg.window_len, cfg.hop_len(clip.sample_rate()))?;
    let coeffs = mfcc_with_bands(&spec, cfg.n_mfcc, cfg.n_mels)?;
    let energy = log_mean_energy(&spec);
    let static_part = Matrix::hstack(&[&coeffs, &energy])?;
    let deltas = if static_part.rows() >= 2 {
        delta(&static_part)?
    } else {
        Matrix::zeros(static_part.rows(), static_part.cols())
    };
    let frames = Matrix::hstack(&[&static_part, &deltas])?;
    let frames = if frames.cols() == FEATURE_DIM {
        frames
    } else {
        return Err(Error::invalid(format!(
            "configuration yields {} feature columns, expected {FEATURE_DIM}",
            frames.cols()
        )));
    };
    AudioFeatureSequence::new(frames, cfg.frame_rate)
}
