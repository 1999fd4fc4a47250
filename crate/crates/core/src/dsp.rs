//! STFT analysis and the two log-amplitude views of a multichannel frame:
//! per-frequency RMS over channels (input to the classical cepstrum) and
//! per-channel RMS over frequency (input to the spatial and graph cepstra).

use std::sync::Arc;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};

/// Amplitude floor applied before taking the log, so digital silence stays finite.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
    Rect,
}

impl Window {
    /// Periodic window of length `len`.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; len],
            Window::Hann => (0..len)
                .map(|i| {
                    0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftParams {
    pub frame_len: usize,
    pub fft_size: usize,
    pub hop: usize,
    #[serde(default)]
    pub window: Window,
}

impl Default for StftParams {
    /// 20 ms frames, 2048-point FFT at 48 kHz, half-frame hop.
    fn default() -> Self {
        StftParams {
            frame_len: 960,
            fft_size: 2048,
            hop: 480,
            window: Window::Hann,
        }
    }
}

impl StftParams {
    /// 20 ms frames with half-frame hop and the next power-of-two FFT size.
    pub fn for_rate(sample_rate: u32) -> Self {
        let frame_len = (sample_rate as usize / 50).max(1);
        StftParams {
            frame_len,
            fft_size: frame_len.next_power_of_two(),
            hop: (frame_len / 2).max(1),
            window: Window::Hann,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_len == 0 || self.frame_len > self.fft_size {
            return Err(Error::Config(format!(
                "need 0 < frame_len <= fft_size, got {} / {}",
                self.frame_len, self.fft_size
            )));
        }
        if self.hop == 0 {
            return Err(Error::Config("hop must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Full frames that fit in `samples`; frames running past the end are not emitted.
    pub fn n_frames(&self, samples: usize) -> usize {
        if samples < self.frame_len {
            0
        } else {
            (samples - self.frame_len) / self.hop + 1
        }
    }
}

/// One-sided complex spectrogram, indexed `[bin, frame, channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StftTensor {
    pub values: Array3<Complex64>,
    pub frame_len: usize,
    pub fft_size: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl StftTensor {
    pub fn n_bins(&self) -> usize {
        self.values.shape()[0]
    }
    pub fn n_frames(&self) -> usize {
        self.values.shape()[1]
    }
    pub fn n_channels(&self) -> usize {
        self.values.shape()[2]
    }
}

/// Windowed, zero-padded one-sided FFT of single frames.
pub struct FrameAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
    n_bins: usize,
}

impl FrameAnalyzer {
    pub fn new(params: &StftParams) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(params.fft_size);
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        FrameAnalyzer {
            fft,
            window: params.window.coefficients(params.frame_len),
            buf: vec![Complex64::default(); params.fft_size],
            scratch,
            n_bins: params.n_bins(),
        }
    }

    pub fn spectrum(&mut self, frame: impl IntoIterator<Item = f64>) -> &[Complex64] {
        self.buf.iter_mut().for_each(|z| *z = Complex64::default());
        for ((slot, x), w) in self.buf.iter_mut().zip(frame).zip(&self.window) {
            *slot = Complex64::new(x * w, 0.0);
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        &self.buf[..self.n_bins]
    }
}

fn check_clip(clip: &AudioClip, params: &StftParams) -> Result<usize> {
    params.validate()?;
    if clip.n_samples() < params.frame_len {
        return Err(Error::EmptyTensor {
            samples: clip.n_samples(),
            frame_len: params.frame_len,
        });
    }
    Ok(params.n_frames(clip.n_samples()))
}

pub fn stft(clip: &AudioClip, params: &StftParams) -> Result<StftTensor> {
    let frames = check_clip(clip, params)?;
    let mut values = Array3::<Complex64>::zeros((params.n_bins(), frames, clip.n_channels()));
    let mut fa = FrameAnalyzer::new(params);
    for ch in 0..clip.n_channels() {
        let row = clip.samples.row(ch);
        for tau in 0..frames {
            let start = tau * params.hop;
            let spec = fa.spectrum((start..start + params.frame_len).map(|i| row[i]));
            for (w, z) in spec.iter().enumerate() {
                values[[w, tau, ch]] = *z;
            }
        }
    }
    Ok(StftTensor {
        values,
        frame_len: params.frame_len,
        fft_size: params.fft_size,
        hop: params.hop,
        sample_rate: clip.sample_rate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreqLogVector {
    pub values: Vec<f64>,
    pub frame: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelLogVector {
    pub values: Vec<f64>,
    pub frame: usize,
}

/// Frame-by-frame log-amplitudes stacked as rows of a `[frames × dim]` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LogAmplitudeSeq {
    pub values: Array2<f64>,
}

impl LogAmplitudeSeq {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }
}

fn floored_log(mean_sq: f64) -> f64 {
    mean_sq.sqrt().max(LOG_FLOOR).ln()
}

fn check_frame(t: &StftTensor, tau: usize) -> Result<()> {
    if tau >= t.n_frames() {
        return Err(Error::Contract(format!(
            "frame {tau} out of range ({} frames)",
            t.n_frames()
        )));
    }
    Ok(())
}

/// `log max(ε, sqrt(mean_n |s|²))` for every frequency bin of frame `tau`.
pub fn freq_log_vector(t: &StftTensor, tau: usize) -> Result<FreqLogVector> {
    check_frame(t, tau)?;
    let n = t.n_channels() as f64;
    let values = (0..t.n_bins())
        .map(|w| {
            let ms: f64 = (0..t.n_channels())
                .map(|ch| t.values[[w, tau, ch]].norm_sqr())
                .sum::<f64>()
                / n;
            floored_log(ms)
        })
        .collect();
    Ok(FreqLogVector { values, frame: tau })
}

/// `log max(ε, sqrt(mean_ω |s|²))` for every channel of frame `tau`.
pub fn channel_log_vector(t: &StftTensor, tau: usize) -> Result<ChannelLogVector> {
    check_frame(t, tau)?;
    let bins = t.n_bins() as f64;
    let values = (0..t.n_channels())
        .map(|ch| {
            let ms: f64 = (0..t.n_bins())
                .map(|w| t.values[[w, tau, ch]].norm_sqr())
                .sum::<f64>()
                / bins;
            floored_log(ms)
        })
        .collect();
    Ok(ChannelLogVector { values, frame: tau })
}

pub fn freq_log_vectors(t: &StftTensor) -> LogAmplitudeSeq {
    let mut values = Array2::zeros((t.n_frames(), t.n_bins()));
    for tau in 0..t.n_frames() {
        let v = freq_log_vector(t, tau).expect("frame in range");
        values.row_mut(tau).assign(&ndarray::Array1::from(v.values));
    }
    LogAmplitudeSeq { values }
}

pub fn channel_log_vectors(t: &StftTensor) -> LogAmplitudeSeq {
    let mut values = Array2::zeros((t.n_frames(), t.n_channels()));
    for tau in 0..t.n_frames() {
        let v = channel_log_vector(t, tau).expect("frame in range");
        values.row_mut(tau).assign(&ndarray::Array1::from(v.values));
    }
    LogAmplitudeSeq { values }
}

/// Same result as `channel_log_vectors(&stft(clip, params)?)` without keeping
/// the full spectrogram in memory.
pub fn channel_log_sequence(clip: &AudioClip, params: &StftParams) -> Result<LogAmplitudeSeq> {
    let frames = check_clip(clip, params)?;
    let bins = params.n_bins() as f64;
    let mut values = Array2::zeros((frames, clip.n_channels()));
    let mut fa = FrameAnalyzer::new(params);
    for ch in 0..clip.n_channels() {
        let row = clip.samples.row(ch);
        for tau in 0..frames {
            let start = tau * params.hop;
            let spec = fa.spectrum((start..start + params.frame_len).map(|i| row[i]));
            let ms = spec.iter().map(|z| z.norm_sqr()).sum::<f64>() / bins;
            values[[tau, ch]] = floored_log(ms);
        }
    }
    Ok(LogAmplitudeSeq { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn clip_from(rows: Vec<Vec<f64>>, sr: u32) -> AudioClip {
        let n = rows.len();
        let s = rows[0].len();
        AudioClip::new(Array2::from_shape_fn((n, s), |(c, t)| rows[c][t]), sr).unwrap()
    }

    fn rect(frame: usize) -> StftParams {
        StftParams {
            frame_len: frame,
            fft_size: frame,
            hop: frame,
            window: Window::Rect,
        }
    }

    #[test]
    fn dc_signal_spectrum() {
        let t = stft(&clip_from(vec![vec![1.0; 4]], 8000), &rect(4)).unwrap();
        assert_eq!(t.values.shape(), &[3, 1, 1]);
        let got: Vec<f64> = (0..3).map(|w| t.values[[w, 0, 0]].norm()).collect();
        assert!((got[0] - 4.0).abs() < 1e-12 && got[1] < 1e-12 && got[2] < 1e-12);
    }

    #[test]
    fn table_one_bin_count() {
        let p = StftParams::default();
        assert_eq!(p.n_bins(), 1025);
        let clip = AudioClip::new(Array2::zeros((1, 4800)), 48_000).unwrap();
        let t = stft(&clip, &p).unwrap();
        assert_eq!(t.n_bins(), 1025);
        assert_eq!(t.n_frames(), (4800 - 960) / 480 + 1);
    }

    #[test]
    fn tone_at_bin_center() {
        let n = 64;
        let k0 = 5;
        let x: Vec<f64> = (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * k0 as f64 * t as f64 / n as f64).cos())
            .collect();
        let t = stft(&clip_from(vec![x], 8000), &rect(n)).unwrap();
        for w in 0..t.n_bins() {
            let a = t.values[[w, 0, 0]].norm();
            if w == k0 {
                assert!((a - n as f64 / 2.0).abs() < 1e-9);
            } else {
                assert!(a < 1e-9, "bin {w} leaked {a}");
            }
        }
    }

    #[test]
    fn short_clip_is_empty_tensor_error() {
        let clip = AudioClip::new(Array2::zeros((2, 10)), 8000).unwrap();
        assert!(matches!(stft(&clip, &rect(16)), Err(Error::EmptyTensor { .. })));
        let bad = StftParams { frame_len: 32, fft_size: 16, hop: 8, window: Window::Hann };
        assert!(stft(&clip, &bad).is_err());
    }

    fn synthetic_tensor(a: &[&[f64]]) -> StftTensor {
        // a[bin][channel] amplitudes, single frame
        let bins = a.len();
        let ch = a[0].len();
        StftTensor {
            values: Array3::from_shape_fn((bins, 1, ch), |(w, _, c)| Complex64::new(0.0, a[w][c])),
            frame_len: 2,
            fft_size: 2,
            hop: 1,
            sample_rate: 1,
        }
    }

    #[test]
    fn freq_log_rms_over_channels() {
        let t = synthetic_tensor(&[&[3.0, 4.0]]);
        let v = freq_log_vector(&t, 0).unwrap();
        assert!((v.values[0] - (12.5f64).sqrt().ln()).abs() < 1e-15);
        assert!((v.values[0] - 1.2629).abs() < 1e-4);

        let z = synthetic_tensor(&[&[0.0, 0.0], &[0.0, 0.0]]);
        assert!(freq_log_vector(&z, 0).unwrap().values.iter().all(|v| *v == LOG_FLOOR.ln()));

        let one = synthetic_tensor(&[&[2.5], &[0.5]]);
        let v = freq_log_vector(&one, 0).unwrap();
        assert!((v.values[0] - 2.5f64.ln()).abs() < 1e-15);
        assert!((v.values[1] - 0.5f64.ln()).abs() < 1e-15);
        assert!(freq_log_vector(&one, 1).is_err());
    }

    #[test]
    fn channel_log_rms_over_bins() {
        let t = synthetic_tensor(&[&[1.0, 2.0, 0.0], &[1.0, 2.0, 0.0]]);
        let v = channel_log_vector(&t, 0).unwrap();
        assert!(v.values[0].abs() < 1e-15);
        assert!((v.values[1] - v.values[0] - 2f64.ln()).abs() < 1e-15);
        assert_eq!(v.values[2], LOG_FLOOR.ln());
    }

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-0.5..0.5)).collect()
    }

    #[test]
    fn parseval_rect_window() {
        let n = 32;
        let x = noise(n * 3, 1);
        let t = stft(&clip_from(vec![x.clone()], 8000), &rect(n)).unwrap();
        for tau in 0..3 {
            let time: f64 = x[tau * n..(tau + 1) * n].iter().map(|v| v * v).sum();
            let mut freq = 0.0;
            for w in 0..t.n_bins() {
                let weight = if w == 0 || w == n / 2 { 1.0 } else { 2.0 };
                freq += weight * t.values[[w, tau, 0]].norm_sqr();
            }
            freq /= n as f64;
            assert!((freq - time).abs() <= 1e-9 * time);
        }
    }

    #[test]
    fn streaming_path_matches_tensor_path() {
        let clip = clip_from(vec![noise(3000, 2), noise(3000, 3)], 16_000);
        let p = StftParams::for_rate(16_000);
        let a = channel_log_vectors(&stft(&clip, &p).unwrap());
        let b = channel_log_sequence(&clip, &p).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gain_shifts_only_its_channel(seed in 0u64..1000, g in 0.05f64..20.0, ch in 0usize..3) {
            let rows: Vec<Vec<f64>> = (0..3).map(|c| noise(800, seed * 3 + c as u64)).collect();
            let mut scaled = rows.clone();
            scaled[ch].iter_mut().for_each(|v| *v *= g);
            let p = StftParams { frame_len: 128, fft_size: 256, hop: 64, window: Window::Hann };
            let a = channel_log_sequence(&clip_from(rows, 8000), &p).unwrap();
            let b = channel_log_sequence(&clip_from(scaled, 8000), &p).unwrap();
            for tau in 0..a.n_frames() {
                for c in 0..3 {
                    let d = b.values[[tau, c]] - a.values[[tau, c]];
                    let want = if c == ch { g.ln() } else { 0.0 };
                    prop_assert!((d - want).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn freq_log_is_channel_permutation_invariant(seed in 0u64..1000) {
            let rows: Vec<Vec<f64>> = (0..3).map(|c| noise(512, seed * 5 + c as u64)).collect();
            let mut perm = rows.clone();
            perm.rotate_left(1);
            let p = StftParams { frame_len: 128, fft_size: 128, hop: 128, window: Window::Hann };
            let a = freq_log_vectors(&stft(&clip_from(rows, 8000), &p).unwrap());
            let b = freq_log_vectors(&stft(&clip_from(perm, 8000), &p).unwrap());
            for (x, y) in a.values.iter().zip(b.values.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
