//! Multichannel clips and WAV ingest.
//!
//! Recordings arrive either as one interleaved WAV or as one mono WAV per
//! channel plus a JSON manifest giving channel order. Integer PCM is scaled by
//! the full-scale constant of its bit depth, never by the clip peak, so level
//! differences between channels survive.

use std::path::{Path, PathBuf};

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    /// `[channels × samples]`, nominally in `[-1, 1]`.
    pub samples: Array2<f64>,
    pub sample_rate: u32,
    pub channel_ids: Vec<String>,
    pub scene_label: Option<String>,
}

impl AudioClip {
    pub fn new(samples: Array2<f64>, sample_rate: u32) -> Result<Self> {
        let ids = (0..samples.nrows()).map(|i| format!("ch{i}")).collect();
        Self::with_ids(samples, sample_rate, ids)
    }

    pub fn with_ids(samples: Array2<f64>, sample_rate: u32, channel_ids: Vec<String>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Contract("sample rate must be positive".into()));
        }
        if samples.nrows() == 0 {
            return Err(Error::Contract("clip needs at least one channel".into()));
        }
        if channel_ids.len() != samples.nrows() {
            return Err(Error::Contract(format!(
                "{} channel ids for {} channels",
                channel_ids.len(),
                samples.nrows()
            )));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
            channel_ids,
            scene_label: None,
        })
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.scene_label = Some(label.into());
        self
    }

    pub fn n_channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate as f64
    }

    /// Samples `[start, end)` of every channel.
    pub fn slice(&self, start: usize, end: usize) -> AudioClip {
        AudioClip {
            samples: self.samples.slice(s![.., start..end]).to_owned(),
            sample_rate: self.sample_rate,
            channel_ids: self.channel_ids.clone(),
            scene_label: self.scene_label.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavFormat {
    Pcm16,
    Pcm24,
    Float32,
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::FormatError(r) => Error::Format {
            path: path.to_path_buf(),
            reason: r.to_string(),
        },
        hound::Error::Unsupported => Error::Unsupported {
            path: path.to_path_buf(),
            reason: "codec not supported".into(),
        },
        other => Error::Format {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    }
}

pub fn load_wav(path: &Path) -> Result<AudioClip> {
    let mut reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if !(1..=64).contains(&channels) {
        return Err(Error::Unsupported {
            path: path.to_path_buf(),
            reason: format!("{channels} channels (supported: 1..=64)"),
        });
    }
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => {
            if spec.bits_per_sample != 32 {
                return Err(Error::Unsupported {
                    path: path.to_path_buf(),
                    reason: format!("{}-bit float", spec.bits_per_sample),
                });
            }
            reader
                .samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| map_hound(path, e))?
        }
        hound::SampleFormat::Int => {
            let bits = spec.bits_per_sample;
            if !(8..=32).contains(&bits) {
                return Err(Error::Unsupported {
                    path: path.to_path_buf(),
                    reason: format!("{bits}-bit integer PCM"),
                });
            }
            let full_scale = (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / full_scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| map_hound(path, e))?
        }
    };
    let frames = interleaved.len() / channels;
    let samples = Array2::from_shape_fn((channels, frames), |(c, t)| interleaved[t * channels + c]);
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ids = (0..channels).map(|c| format!("{stem}:{c}")).collect();
    AudioClip::with_ids(samples, spec.sample_rate, ids)
}

pub fn write_wav(path: &Path, clip: &AudioClip, format: WavFormat) -> Result<()> {
    let (bits, sample_format) = match format {
        WavFormat::Pcm16 => (16, hound::SampleFormat::Int),
        WavFormat::Pcm24 => (24, hound::SampleFormat::Int),
        WavFormat::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: clip.n_channels() as u16,
        sample_rate: clip.sample_rate,
        bits_per_sample: bits,
        sample_format,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut w = hound::WavWriter::create(&tmp, spec).map_err(|e| map_hound(&tmp, e))?;
        let full_scale = ((1u64 << (bits - 1)) - 1) as f64;
        for t in 0..clip.n_samples() {
            for c in 0..clip.n_channels() {
                let x = clip.samples[[c, t]];
                let r = match format {
                    WavFormat::Float32 => w.write_sample(x as f32),
                    _ => w.write_sample((x.clamp(-1.0, 1.0) * full_scale).round() as i32),
                };
                r.map_err(|e| map_hound(&tmp, e))?;
            }
        }
        w.finalize().map_err(|e| map_hound(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestChannel {
    pub id: String,
    pub path: PathBuf,
}

/// `{channels: [{id, path}], sample_rate}`; relative paths resolve against the manifest directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelManifest {
    pub channels: Vec<ManifestChannel>,
    pub sample_rate: u32,
}

/// Assembles a multichannel clip from mono WAVs listed in a manifest.
pub fn load_manifest(path: &Path) -> Result<AudioClip> {
    let manifest: ChannelManifest = tensor_io::read_json(path)?;
    if manifest.channels.is_empty() {
        return Err(Error::Config(format!("{}: manifest lists no channels", path.display())));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::with_capacity(manifest.channels.len());
    for ch in &manifest.channels {
        let p = base.join(&ch.path);
        let mono = load_wav(&p)?;
        if mono.n_channels() != 1 {
            return Err(Error::Format {
                path: p,
                reason: format!("expected mono, found {} channels", mono.n_channels()),
            });
        }
        if mono.sample_rate != manifest.sample_rate {
            return Err(Error::Format {
                path: p,
                reason: format!(
                    "sample rate {} differs from manifest {}",
                    mono.sample_rate, manifest.sample_rate
                ),
            });
        }
        rows.push(mono.samples.row(0).to_owned());
    }
    let len = rows[0].len();
    if let Some(bad) = rows.iter().position(|r| r.len() != len) {
        return Err(Error::Format {
            path: base.join(&manifest.channels[bad].path),
            reason: format!("length {} differs from first channel {len}", rows[bad].len()),
        });
    }
    let samples = Array2::from_shape_fn((rows.len(), len), |(c, t)| rows[c][t]);
    AudioClip::with_ids(
        samples,
        manifest.sample_rate,
        manifest.channels.iter().map(|c| c.id.clone()).collect(),
    )
}

/// Splits into consecutive non-overlapping clips of `clip_len_s`; a shorter tail is dropped.
pub fn segment_clips(clip: &AudioClip, clip_len_s: f64) -> Result<Vec<AudioClip>> {
    if !(clip_len_s > 0.0) || !clip_len_s.is_finite() {
        return Err(Error::Contract(format!("clip length must be positive, got {clip_len_s}")));
    }
    let len = (clip_len_s * clip.sample_rate as f64).round() as usize;
    if len == 0 {
        return Err(Error::Contract("clip length rounds to zero samples".into()));
    }
    let count = clip.n_samples() / len;
    Ok((0..count)
        .map(|i| clip.slice(i * len, (i + 1) * len))
        .collect())
}

/// File name for the `index`-th clip cut from `stem`.
pub fn clip_file_name(stem: &str, index: usize) -> String {
    format!("{stem}_{index:04}.wav")
}
