//! Synthetic multichannel scenes and inter-group clock offsets.
//!
//! The field model is free-field point sources: each microphone hears every
//! source delayed by `distance / c` (fractional, cubic Lagrange
//! interpolation) and attenuated by `1 / max(distance, 0.1 m)`, plus
//! independent white noise at the room's noise floor. There is no
//! reverberation.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::seed;

pub const SPEED_OF_SOUND: f64 = 343.0;
pub const MIN_DISTANCE: f64 = 0.1;
const MAX_REDRAWS: usize = 100;
const BURST_RAMP_S: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SignalKind {
    Tone { freq_hz: f64 },
    NoiseBand { low_hz: f64, high_hz: f64 },
    /// Clicks at random (Poisson) onsets with the given mean rate.
    ImpulseTrain { rate_hz: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Activity {
    #[default]
    Continuous,
    /// On/off gating: Poisson burst onsets, exponentially distributed burst lengths.
    Bursts { rate_hz: f64, mean_len_s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub position: [f64; 2],
    pub signal: SignalKind,
    /// Linear amplitude at 1 m. Zero gives a silent source.
    pub level: f64,
    #[serde(default)]
    pub activity: Activity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Attenuation {
    #[default]
    InverseDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    #[serde(default)]
    pub attenuation: Attenuation,
    /// White-noise standard deviation in dB re full scale; `None` for no noise.
    pub noise_floor_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub scene_label: String,
    pub sources: Vec<Source>,
    pub mic_positions: Vec<[f64; 2]>,
    pub room: Room,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::Config(format!("scene {:?} has no sources", self.scene_label)));
        }
        if self.mic_positions.len() < 2 {
            return Err(Error::Config(format!(
                "scene {:?} needs at least two microphones",
                self.scene_label
            )));
        }
        let finite = |p: &[f64; 2]| p.iter().all(|v| v.is_finite());
        if !self.mic_positions.iter().all(finite) || !self.sources.iter().all(|s| finite(&s.position)) {
            return Err(Error::Config("non-finite position".into()));
        }
        for s in &self.sources {
            if !(s.level >= 0.0) || !s.level.is_finite() {
                return Err(Error::Config(format!("source level must be >= 0, got {}", s.level)));
            }
            match s.signal {
                SignalKind::Tone { freq_hz } if !(freq_hz > 0.0) => {
                    return Err(Error::Config("tone frequency must be positive".into()))
                }
                SignalKind::NoiseBand { low_hz, high_hz } if !(0.0 < low_hz && low_hz < high_hz) => {
                    return Err(Error::Config("noise band needs 0 < low < high".into()))
                }
                SignalKind::ImpulseTrain { rate_hz } if !(rate_hz > 0.0) => {
                    return Err(Error::Config("impulse rate must be positive".into()))
                }
                _ => {}
            }
            if let Activity::Bursts { rate_hz, mean_len_s } = s.activity {
                if !(rate_hz > 0.0 && mean_len_s > 0.0) {
                    return Err(Error::Config("burst rate and length must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Second-order band-pass (constant 0 dB peak gain) applied in place.
fn bandpass(x: &mut [f64], low: f64, high: f64, sr: f64) {
    let high = high.min(0.45 * sr);
    let low = low.min(high * 0.9);
    let f0 = (low * high).sqrt();
    let q = f0 / (high - low);
    let w0 = 2.0 * std::f64::consts::PI * f0 / sr;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let (b0, b2) = (alpha / a0, -alpha / a0);
    let (a1, a2) = (-2.0 * w0.cos() / a0, (1.0 - alpha) / a0);
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    for v in x.iter_mut() {
        let x0 = *v;
        let y0 = b0 * x0 + b2 * x2 - a1 * y1 - a2 * y2;
        x2 = x1;
        x1 = x0;
        y2 = y1;
        y1 = y0;
        *v = y0;
    }
}

fn poisson_onsets(len: usize, rate_hz: f64, sr: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let exp = Exp::new(rate_hz).expect("positive rate");
    let mut t = exp.sample(rng);
    let mut out = Vec::new();
    while (t * sr) < len as f64 {
        out.push((t * sr) as usize);
        t += exp.sample(rng).max(1e-3);
    }
    out
}

fn dry_signal(kind: &SignalKind, len: usize, sr: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match *kind {
        SignalKind::Tone { freq_hz } => {
            let phase = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
            (0..len)
                .map(|i| (2.0 * std::f64::consts::PI * freq_hz * i as f64 / sr + phase).sin())
                .collect()
        }
        SignalKind::NoiseBand { low_hz, high_hz } => {
            let mut x: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
            bandpass(&mut x, low_hz, high_hz, sr);
            let rms = (x.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
            if rms > 0.0 {
                x.iter_mut().for_each(|v| *v /= rms);
            }
            x
        }
        SignalKind::ImpulseTrain { rate_hz } => {
            let mut x = vec![0.0; len];
            let tail = (0.003 * sr) as usize;
            let tau = 0.001 * sr;
            for onset in poisson_onsets(len, rate_hz, sr, rng) {
                x[onset] += 1.0;
                for k in 1..tail {
                    if onset + k >= len {
                        break;
                    }
                    let n: f64 = StandardNormal.sample(rng);
                    x[onset + k] += 0.3 * n * (-(k as f64) / tau).exp();
                }
            }
            x
        }
    }
}

fn activity_envelope(activity: &Activity, len: usize, sr: f64, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    let Activity::Bursts { rate_hz, mean_len_s } = *activity else {
        return None;
    };
    let mut env = vec![0.0; len];
    let ramp = (BURST_RAMP_S * sr).max(1.0);
    let dur = Exp::new(1.0 / mean_len_s).expect("positive length");
    for onset in poisson_onsets(len, rate_hz, sr, rng) {
        let n = (dur.sample(rng) * sr).max(2.0 * ramp) as usize;
        for k in 0..n {
            let i = onset + k;
            if i >= len {
                break;
            }
            let edge = (k as f64).min((n - 1 - k) as f64);
            let g = if edge < ramp {
                0.5 - 0.5 * (std::f64::consts::PI * edge / ramp).cos()
            } else {
                1.0
            };
            env[i] = f64::max(env[i], g);
        }
    }
    Some(env)
}

/// Four-point Lagrange interpolation of `x` at fractional index `pos`; zero outside.
fn interp(x: &[f64], pos: f64) -> f64 {
    let i = pos.floor();
    let f = pos - i;
    let i = i as isize;
    let at = |k: isize| -> f64 {
        if k < 0 || k as usize >= x.len() {
            0.0
        } else {
            x[k as usize]
        }
    };
    if f == 0.0 {
        return at(i);
    }
    let wm1 = -f * (f - 1.0) * (f - 2.0) / 6.0;
    let w0 = (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0;
    let w1 = -(f + 1.0) * f * (f - 2.0) / 2.0;
    let w2 = (f + 1.0) * f * (f - 1.0) / 6.0;
    wm1 * at(i - 1) + w0 * at(i) + w1 * at(i + 1) + w2 * at(i + 2)
}

/// Renders `spec` at the microphones. Deterministic given `seed`.
pub fn synthesize_scene(spec: &SceneSpec, duration_s: f64, sample_rate: u32, seed: u64) -> Result<AudioClip> {
    spec.validate()?;
    if !(duration_s >= 0.0) {
        return Err(Error::Config(format!("duration must be >= 0, got {duration_s}")));
    }
    let sr = sample_rate as f64;
    let len = (duration_s * sr).round() as usize;
    let n_mics = spec.mic_positions.len();
    let mut out = Array2::<f64>::zeros((n_mics, len));

    for (si, src) in spec.sources.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(seed, &[seed::TAG_SYNTH, si as u64]));
        let dists: Vec<f64> = spec.mic_positions.iter().map(|m| distance(*m, src.position)).collect();
        let max_delay = dists.iter().fold(0.0f64, |m, d| m.max(*d)) / SPEED_OF_SOUND * sr;
        // the dry timeline starts `lead` samples before the first output sample
        let lead = max_delay.ceil() as usize + 2;
        let dry_len = len + lead + 3;
        let mut dry = dry_signal(&src.signal, dry_len, sr, &mut rng);
        if let Some(env) = activity_envelope(&src.activity, dry_len, sr, &mut rng) {
            dry.iter_mut().zip(env).for_each(|(x, g)| *x *= g);
        }
        if src.level == 0.0 {
            continue;
        }
        for (m, d) in dists.iter().enumerate() {
            let gain = src.level / d.max(MIN_DISTANCE);
            let delay = d / SPEED_OF_SOUND * sr;
            let mut row = out.row_mut(m);
            for t in 0..len {
                row[t] += gain * interp(&dry, t as f64 + lead as f64 - delay);
            }
        }
    }

    if let Some(db) = spec.room.noise_floor_db {
        let sd = 10f64.powf(db / 20.0);
        let noise = Normal::new(0.0, sd).map_err(|e| Error::Config(e.to_string()))?;
        for m in 0..n_mics {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(seed, &[seed::TAG_SYNTH, 1 << 20, m as u64]));
            out.row_mut(m).iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        }
    }

    let ids = (0..n_mics).map(|m| format!("mic{m}")).collect();
    Ok(AudioClip::with_ids(out, sample_rate, ids)?.labeled(spec.scene_label.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesyncSpec {
    pub groups: Vec<Vec<usize>>,
    /// Standard deviation of the per-group clock offset, seconds.
    pub sigma_s: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Desynced {
    pub clip: AudioClip,
    /// Applied shift per group in samples; positive means the group lags.
    pub offsets: Vec<i64>,
}

impl Desynced {
    pub fn offsets_s(&self) -> Vec<f64> {
        let sr = self.clip.sample_rate as f64;
        self.offsets.iter().map(|o| *o as f64 / sr).collect()
    }
}

/// Shifts every group of channels by one offset drawn from `N(0, σ²)`,
/// rounded to whole samples and zero-padded. Ungrouped channels stay put.
pub fn inject_desync(clip: &AudioClip, spec: &DesyncSpec) -> Result<Desynced> {
    if !(spec.sigma_s >= 0.0) || !spec.sigma_s.is_finite() {
        return Err(Error::Config(format!("sigma must be >= 0, got {}", spec.sigma_s)));
    }
    let n = clip.n_channels();
    let mut seen = vec![false; n];
    for g in &spec.groups {
        for &ch in g {
            if ch >= n || seen[ch] {
                return Err(Error::Config(format!("bad or repeated channel {ch} in desync groups")));
            }
            seen[ch] = true;
        }
    }
    if spec.sigma_s == 0.0 {
        return Ok(Desynced {
            clip: clip.clone(),
            offsets: vec![0; spec.groups.len()],
        });
    }
    let len = clip.n_samples() as i64;
    let sr = clip.sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut offsets = Vec::with_capacity(spec.groups.len());
    for gi in 0..spec.groups.len() {
        let mut tries = 0;
        let off = loop {
            let z: f64 = StandardNormal.sample(&mut rng);
            let off = (spec.sigma_s * z * sr).round() as i64;
            if off.abs() < len {
                break off;
            }
            tries += 1;
            if tries >= MAX_REDRAWS {
                return Err(Error::Desync(format!(
                    "group {gi}: no offset shorter than the clip after {MAX_REDRAWS} draws"
                )));
            }
        };
        offsets.push(off);
    }

    let mut out = clip.clone();
    for (g, &off) in spec.groups.iter().zip(&offsets) {
        if off == 0 {
            continue;
        }
        for &ch in g {
            let src = clip.samples.row(ch);
            let mut dst = out.samples.row_mut(ch);
            for t in 0..len {
                let from = t - off;
                dst[t as usize] = if (0..len).contains(&from) { src[from as usize] } else { 0.0 };
            }
        }
    }
    Ok(Desynced { clip: out, offsets })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(sources: Vec<Source>, mics: Vec<[f64; 2]>, noise: Option<f64>) -> SceneSpec {
        SceneSpec {
            scene_label: "test".into(),
            sources,
            mic_positions: mics,
            room: Room {
                attenuation: Attenuation::InverseDistance,
                noise_floor_db: noise,
            },
        }
    }

    fn noise_source(pos: [f64; 2], level: f64) -> Source {
        Source {
            position: pos,
            signal: SignalKind::NoiseBand { low_hz: 200.0, high_hz: 3000.0 },
            level,
            activity: Activity::Continuous,
        }
    }

    fn rms(x: ndarray::ArrayView1<f64>) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn equidistant_mics_match() {
        let s = spec(
            vec![noise_source([0.0, 0.0], 0.3)],
            vec![[1.3, 0.4], [-0.4, 1.3]],
            None,
        );
        let c = synthesize_scene(&s, 0.5, 16_000, 1).unwrap();
        let diff = (&c.samples.row(0) - &c.samples.row(1)).mapv(f64::abs);
        let peak = c.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff.iter().fold(0.0f64, |m, v| m.max(*v)) <= 1e-3 * peak);
    }

    #[test]
    fn inverse_distance_law() {
        // tone keeps the comparison free of interpolation loss; mics on a line
        let src = Source {
            position: [0.0, 0.0],
            signal: SignalKind::Tone { freq_hz: 250.0 },
            level: 0.5,
            activity: Activity::Continuous,
        };
        let s = spec(vec![src], vec![[1.0, 0.0], [2.0, 0.0]], None);
        let c = synthesize_scene(&s, 1.0, 16_000, 4).unwrap();
        let skip = 200;
        let r1 = rms(c.samples.slice(ndarray::s![0, skip..]));
        let r2 = rms(c.samples.slice(ndarray::s![1, skip..]));
        assert!((r1 / r2 - 2.0).abs() < 1e-3, "ratio {}", r1 / r2);
    }

    #[test]
    fn silence_without_noise_is_zero() {
        let s = spec(vec![noise_source([1.0, 1.0], 0.0)], vec![[0.0, 0.0], [2.0, 0.0]], None);
        let c = synthesize_scene(&s, 0.25, 8000, 7).unwrap();
        assert!(c.samples.iter().all(|v| *v == 0.0));
        assert_eq!(c.scene_label.as_deref(), Some("test"));
    }

    #[test]
    fn synthesis_is_deterministic() {
        let mut src = noise_source([1.0, 2.0], 0.2);
        src.activity = Activity::Bursts { rate_hz: 3.0, mean_len_s: 0.1 };
        let s = spec(vec![src], vec![[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]], Some(-60.0));
        let a = synthesize_scene(&s, 0.5, 8000, 42).unwrap();
        let b = synthesize_scene(&s, 0.5, 8000, 42).unwrap();
        let c = synthesize_scene(&s, 0.5, 8000, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn scene_validation() {
        let one_mic = spec(vec![noise_source([0.0, 0.0], 1.0)], vec![[1.0, 1.0]], None);
        assert!(synthesize_scene(&one_mic, 1.0, 8000, 0).is_err());
        let none = spec(vec![], vec![[1.0, 1.0], [0.0, 0.0]], None);
        assert!(synthesize_scene(&none, 1.0, 8000, 0).is_err());
        let nan = spec(vec![noise_source([f64::NAN, 0.0], 1.0)], vec![[1.0, 1.0], [0.0, 0.0]], None);
        assert!(nan.validate().is_err());
    }

    #[test]
    fn scene_spec_json_shape() {
        let s = spec(vec![noise_source([0.5, 1.0], 0.1)], vec![[0.0, 0.0], [1.0, 0.0]], Some(-70.0));
        let v = serde_json::to_value(&s).unwrap();
        assert_eq!(v["sources"][0]["signal"]["type"], "noise_band");
        assert_eq!(v["room"]["attenuation"], "inverse_distance");
        let back: SceneSpec = serde_json::from_value(v).unwrap();
        assert_eq!(back, s);
    }

    fn ramp_clip(n: usize, len: usize) -> AudioClip {
        let s = Array2::from_shape_fn((n, len), |(c, t)| ((t * (c + 3)) % 17) as f64 / 17.0 - 0.5);
        AudioClip::new(s, 1000).unwrap()
    }

    #[test]
    fn zero_sigma_is_identity() {
        let c = ramp_clip(4, 300);
        let d = inject_desync(&c, &DesyncSpec { groups: vec![vec![0, 1], vec![2]], sigma_s: 0.0, seed: 1 }).unwrap();
        assert_eq!(d.clip, c);
        assert_eq!(d.offsets, vec![0, 0]);
    }

    #[test]
    fn offsets_repeat_with_seed_and_shift_whole_groups() {
        let c = ramp_clip(5, 2000);
        let spec = DesyncSpec { groups: vec![vec![0, 1], vec![2, 3]], sigma_s: 0.05, seed: 77 };
        let a = inject_desync(&c, &spec).unwrap();
        let b = inject_desync(&c, &spec).unwrap();
        assert_eq!(a, b);
        assert!(a.offsets.iter().any(|o| *o != 0));
        for (g, &off) in spec.groups.iter().zip(&a.offsets) {
            for &ch in g {
                for t in 0..2000i64 {
                    let from = t - off;
                    let want = if (0..2000).contains(&from) { c.samples[[ch, from as usize]] } else { 0.0 };
                    assert_eq!(a.clip.samples[[ch, t as usize]], want);
                }
            }
        }
        // channel 4 belongs to no group
        assert_eq!(a.clip.samples.row(4), c.samples.row(4));
        assert_eq!(a.offsets_s()[0], a.offsets[0] as f64 / 1000.0);
    }

    #[test]
    fn oversized_sigma_fails_after_redraws() {
        let c = ramp_clip(2, 10);
        let r = inject_desync(&c, &DesyncSpec { groups: vec![vec![0]], sigma_s: 1e6, seed: 3 });
        assert!(matches!(r, Err(Error::Desync(_))));
        let neg = inject_desync(&c, &DesyncSpec { groups: vec![vec![0]], sigma_s: -1.0, seed: 3 });
        assert!(neg.is_err());
    }
}
