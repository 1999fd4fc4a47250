//! Experiment protocol: synthesize a labelled dataset, extract
//! features, train per-scene GMMs and sweep desynchronization strength.
//!
//! Clips carry a guard margin on both sides. Desync is applied to the full
//! clip and the margin is trimmed afterwards, so group shifts move real
//! signal into the analysed window instead of zero padding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::dsp::{self, LogAmplitudeSeq, StftParams};
use crate::error::{Error, Result};
use crate::features::{self, FeatureKind, FeatureSequence, PcaAccumulator, PcaBasis};
use crate::gmm::{self, Evaluation, GmmConfig, GmmModel};
use crate::graph::GraphBasis;
use crate::seed;
use crate::sim::{self, DesyncSpec, SceneSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub clip_s: f64,
    /// Extra signal kept on each side of a clip and trimmed after desync.
    pub guard_s: f64,
    pub sample_rate: u32,
    /// Per-clip uniform jitter of every source position, metres.
    pub jitter_m: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_train: 200,
            n_test: 100,
            clip_s: 4.0,
            guard_s: 0.5,
            sample_rate: crate::fixture::SAMPLE_RATE,
            jitter_m: 0.3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config("n_train and n_test must be positive".into()));
        }
        if !(self.clip_s > 0.0 && self.clip_s <= 600.0) {
            return Err(Error::Config(format!("clip_s must be in (0, 600], got {}", self.clip_s)));
        }
        if !(self.guard_s >= 0.0 && self.guard_s <= 10.0) {
            return Err(Error::Config(format!("guard_s must be in [0, 10], got {}", self.guard_s)));
        }
        if !(self.jitter_m >= 0.0 && self.jitter_m <= 5.0) {
            return Err(Error::Config(format!("jitter_m must be in [0, 5], got {}", self.jitter_m)));
        }
        if !(1000..=192_000).contains(&self.sample_rate) {
            return Err(Error::Config(format!("unsupported sample rate {}", self.sample_rate)));
        }
        Ok(())
    }

    pub fn guard_samples(&self) -> usize {
        (self.guard_s * self.sample_rate as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipMeta {
    pub id: String,
    pub scene: String,
    pub split: Split,
    /// Guard margin in samples on each side of the stored clip.
    pub guard: usize,
}

/// A labelled set of clips that are produced on demand, so whole datasets
/// never sit in memory.
pub trait ClipSource: Sync {
    fn clips(&self) -> &[ClipMeta];
    /// The stored clip, guard margins included.
    fn load(&self, index: usize) -> Result<AudioClip>;

    fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.clips().len()).filter(|&i| self.clips()[i].split == split).collect()
    }
}

pub fn trim_guard(clip: &AudioClip, guard: usize) -> AudioClip {
    let n = clip.n_samples();
    let g = guard.min(n / 2);
    clip.slice(g, n - g)
}

/// Scenes rendered from specs. Clip `i` (training clips first) uses scene
/// `i mod S` and seed `mix(seed, [scene tag, i])`.
#[derive(Debug, Clone)]
pub struct SynthSource {
    scenes: Vec<SceneSpec>,
    cfg: SynthConfig,
    seed: u64,
    meta: Vec<ClipMeta>,
}

impl SynthSource {
    pub fn new(scenes: Vec<SceneSpec>, cfg: SynthConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if scenes.is_empty() {
            return Err(Error::Config("no scene specs".into()));
        }
        for s in &scenes {
            s.validate()?;
        }
        let guard = cfg.guard_samples();
        let meta = (0..cfg.n_train + cfg.n_test)
            .map(|i| {
                let (split, j) = if i < cfg.n_train {
                    (Split::Train, i)
                } else {
                    (Split::Test, i - cfg.n_train)
                };
                let tag = if split == Split::Train { "train" } else { "test" };
                ClipMeta {
                    id: format!("{tag}_{j:04}"),
                    scene: scenes[j % scenes.len()].scene_label.clone(),
                    split,
                    guard,
                }
            })
            .collect();
        Ok(SynthSource { scenes, cfg, seed, meta })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    fn clip_seed(&self, index: usize) -> u64 {
        seed::mix(self.seed, &[seed::TAG_SCENE, index as u64])
    }

    /// The scene spec of clip `index` with its source jitter applied.
    pub fn spec(&self, index: usize) -> SceneSpec {
        let m = &self.meta[index];
        let j = if m.split == Split::Train { index } else { index - self.cfg.n_train };
        let mut spec = self.scenes[j % self.scenes.len()].clone();
        if self.cfg.jitter_m > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.clip_seed(index));
            for s in &mut spec.sources {
                for c in &mut s.position {
                    *c += self.cfg.jitter_m * (2.0 * rng.random::<f64>() - 1.0);
                }
            }
        }
        spec
    }
}

impl ClipSource for SynthSource {
    fn clips(&self) -> &[ClipMeta] {
        &self.meta
    }

    fn load(&self, index: usize) -> Result<AudioClip> {
        let sr = self.cfg.sample_rate;
        let total_s = self.cfg.clip_s + 2.0 * self.meta[index].guard as f64 / sr as f64;
        sim::synthesize_scene(&self.spec(index), total_s, sr, self.clip_seed(index))
    }
}

/// A fitted feature transform.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Gc(GraphBasis),
    Sc(PcaBasis),
    Cep,
}

impl Transform {
    pub fn kind(&self) -> FeatureKind {
        match self {
            Transform::Gc(_) => FeatureKind::Gc,
            Transform::Sc(_) => FeatureKind::Sc,
            Transform::Cep => FeatureKind::Cep,
        }
    }

    /// Features from precomputed channel (`q`) and frequency (`p`) log-amplitudes.
    pub fn apply(&self, q: &LogAmplitudeSeq, p: Option<&LogAmplitudeSeq>, order: usize) -> Result<FeatureSequence> {
        match self {
            Transform::Gc(b) => features::graph_cepstrum(q, b, order),
            Transform::Sc(b) => features::spatial_cepstrum(q, b, order),
            Transform::Cep => {
                let p = p.ok_or_else(|| Error::Contract("cepstrum needs frequency log-amplitudes".into()))?;
                features::cepstrum(p, order)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSettings {
    pub stft: StftParams,
    pub order: usize,
    pub normalize: bool,
}

/// Runs one STFT and applies every transform to it.
pub fn extract_all(clip: &AudioClip, transforms: &[&Transform], fs: &FeatureSettings) -> Result<Vec<FeatureSequence>> {
    let t = dsp::stft(clip, &fs.stft)?;
    let q = dsp::channel_log_vectors(&t);
    let p = transforms
        .iter()
        .any(|x| matches!(x, Transform::Cep))
        .then(|| dsp::freq_log_vectors(&t));
    transforms
        .iter()
        .map(|x| {
            let mut f = x.apply(&q, p.as_ref(), fs.order)?;
            if fs.normalize {
                f.normalize_frames();
            }
            Ok(f)
        })
        .collect()
}

pub fn extract(clip: &AudioClip, transform: &Transform, fs: &FeatureSettings) -> Result<FeatureSequence> {
    Ok(extract_all(clip, &[transform], fs)?.remove(0))
}

/// Channel log-amplitudes of the listed clips, guard trimmed, in order.
pub fn channel_logs(src: &dyn ClipSource, indices: &[usize], stft: &StftParams) -> Result<Vec<LogAmplitudeSeq>> {
    indices
        .par_iter()
        .map(|&i| {
            let m = &src.clips()[i];
            dsp::channel_log_sequence(&trim_guard(&src.load(i)?, m.guard), stft)
        })
        .collect()
}

/// Second-moment (or covariance, if `centered`) PCA basis over every frame.
pub fn fit_sc_basis(qs: &[LogAmplitudeSeq], centered: bool) -> Result<PcaBasis> {
    let first = qs
        .first()
        .ok_or_else(|| Error::EmptyInput("no clips to fit a spatial basis on".into()))?;
    let mut acc = PcaAccumulator::new(first.dim(), centered);
    for q in qs {
        acc.add(q)?;
    }
    acc.finish()
}

/// Features of every transform for the listed clips (no desync), `[clip][transform]`.
pub fn features_for(
    src: &dyn ClipSource,
    indices: &[usize],
    transforms: &[&Transform],
    fs: &FeatureSettings,
) -> Result<Vec<Vec<FeatureSequence>>> {
    indices
        .par_iter()
        .map(|&i| {
            let m = &src.clips()[i];
            extract_all(&trim_guard(&src.load(i)?, m.guard), transforms, fs)
        })
        .collect()
}

/// Trains one scene model per transform on the training split.
pub fn train_models(
    src: &dyn ClipSource,
    transforms: &[&Transform],
    fs: &FeatureSettings,
    cfg: &GmmConfig,
) -> Result<Vec<GmmModel>> {
    let idx = src.indices(Split::Train);
    let mut feats = features_for(src, &idx, transforms, fs)?;
    (0..transforms.len())
        .rev()
        .map(|_| {
            let set: Vec<(FeatureSequence, String)> = feats
                .iter_mut()
                .zip(&idx)
                .map(|(f, &i)| (f.pop().expect("one feature per transform"), src.clips()[i].scene.clone()))
                .collect();
            gmm::train_gmm(&set, cfg)
        })
        .collect::<Result<Vec<_>>>()
        .map(|mut v| {
            v.reverse();
            v
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub sigmas_ms: Vec<f64>,
    pub repetitions: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            sigmas_ms: vec![0.0, 5.0, 10.0, 20.0, 50.0, 100.0],
            repetitions: 10,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas_ms.is_empty() || self.repetitions == 0 {
            return Err(Error::Config("sweep needs at least one sigma and one repetition".into()));
        }
        if let Some(s) = self.sigmas_ms.iter().find(|s| !(**s >= 0.0 && **s <= 10_000.0)) {
            return Err(Error::Config(format!("sigma {s} ms outside [0, 10000]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: FeatureKind,
    pub sigma_ms: f64,
    pub rep: usize,
    pub accuracy: f64,
}

/// Seed of the desync draw for repetition `rep` of test clip `clip`. It does
/// not depend on σ, so every σ of one repetition scales the same draws.
pub fn desync_seed(root: u64, rep: usize, clip: usize) -> u64 {
    seed::mix(root, &[seed::TAG_DESYNC, rep as u64, clip as u64])
}

/// Evaluates every model on the test clips desynchronized at each σ.
/// Rows are ordered by kind (model order), then σ, then repetition.
pub fn sweep(
    src: &dyn ClipSource,
    groups: &[Vec<usize>],
    models: &[(Transform, GmmModel)],
    fs: &FeatureSettings,
    cfg: &SweepConfig,
    root_seed: u64,
) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let test = src.indices(Split::Test);
    if test.is_empty() {
        return Err(Error::EmptyInput("no test clips to sweep".into()));
    }
    let transforms: Vec<&Transform> = models.iter().map(|(t, _)| t).collect();
    let truth: Vec<Vec<usize>> = models
        .iter()
        .map(|(_, m)| {
            test.iter()
                .map(|&i| {
                    let scene = &src.clips()[i].scene;
                    m.scenes
                        .iter()
                        .position(|s| s == scene)
                        .ok_or_else(|| Error::Contract(format!("scene {scene:?} unknown to model")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let (n_sigma, n_rep) = (cfg.sigmas_ms.len(), cfg.repetitions);
    // predicted[clip][sigma][rep][model]
    let predicted = test
        .par_iter()
        .enumerate()
        .map(|(ci, &i)| {
            let meta = &src.clips()[i];
            let clip = src.load(i)?;
            let mut out = vec![vec![Vec::new(); n_rep]; n_sigma];
            for (si, &sigma_ms) in cfg.sigmas_ms.iter().enumerate() {
                for rep in 0..n_rep {
                    if sigma_ms == 0.0 && rep > 0 {
                        out[si][rep] = out[si][0].clone();
                        continue;
                    }
                    let spec = DesyncSpec {
                        groups: groups.to_vec(),
                        sigma_s: sigma_ms / 1000.0,
                        seed: desync_seed(root_seed, rep, ci),
                    };
                    let shifted = sim::inject_desync(&clip, &spec)?.clip;
                    let feats = extract_all(&trim_guard(&shifted, meta.guard), &transforms, fs)?;
                    out[si][rep] = models
                        .iter()
                        .zip(&feats)
                        .map(|((_, m), f)| Ok(gmm::classify_clip(m, f)?.scene_index))
                        .collect::<Result<Vec<usize>>>()?;
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (mi, (t, m)) in models.iter().enumerate() {
        for (si, &sigma_ms) in cfg.sigmas_ms.iter().enumerate() {
            for rep in 0..n_rep {
                let pairs: Vec<(usize, usize)> = (0..test.len())
                    .map(|c| (truth[mi][c], predicted[c][si][rep][mi]))
                    .collect();
                rows.push(SweepRow {
                    kind: t.kind(),
                    sigma_ms,
                    rep,
                    accuracy: Evaluation::from_predictions(m.scenes.clone(), &pairs)?.accuracy,
                });
            }
        }
    }
    Ok(rows)
}

/// Accuracy of `kind` at `sigma_ms`, one entry per repetition.
pub fn accuracies(rows: &[SweepRow], kind: FeatureKind, sigma_ms: f64) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.kind == kind && r.sigma_ms == sigma_ms)
        .map(|r| r.accuracy)
        .collect()
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;

    fn tiny() -> SynthConfig {
        SynthConfig {
            n_train: 6,
            n_test: 3,
            clip_s: 0.5,
            guard_s: 0.1,
            sample_rate: 8000,
            jitter_m: 0.2,
        }
    }

    fn tiny_source(seed: u64) -> SynthSource {
        SynthSource::new(fixture::scenes()[..3].to_vec(), tiny(), seed).unwrap()
    }

    #[test]
    fn source_layout_and_determinism() {
        let src = tiny_source(5);
        let m = src.clips();
        assert_eq!(m.len(), 9);
        assert_eq!(m[0].scene, "chatting");
        assert_eq!(m[4].scene, "cooking");
        assert_eq!(m[6].split, Split::Test);
        assert_eq!(m[6].id, "test_0000");
        let a = src.load(0).unwrap();
        assert_eq!(a.n_samples(), 4000 + 2 * 800);
        assert_eq!(trim_guard(&a, m[0].guard).n_samples(), 4000);
        assert_eq!(a, tiny_source(5).load(0).unwrap());
        assert_ne!(a, src.load(3).unwrap());
        assert_eq!(src.indices(Split::Test), vec![6, 7, 8]);
    }

    #[test]
    fn sweep_shape_and_zero_sigma() {
        let src = tiny_source(9);
        let fs = FeatureSettings {
            stft: StftParams::for_rate(8000),
            order: 13,
            normalize: false,
        };
        let gcfg = GmmConfig {
            components: 2,
            ..GmmConfig::default()
        };
        let gc = Transform::Gc(GraphBasis::for_graph(&fixture::graph(0.01)).unwrap());
        let model = train_models(&src, &[&gc], &fs, &gcfg).unwrap().remove(0);
        let cfg = SweepConfig {
            sigmas_ms: vec![0.0, 20.0],
            repetitions: 2,
        };
        let rows = sweep(&src, &fixture::groups(), &[(gc.clone(), model.clone())], &fs, &cfg, 1).unwrap();
        assert_eq!(rows.len(), 4);
        let test = src.indices(Split::Test);
        let feats = features_for(&src, &test, &[&gc], &fs).unwrap();
        let set: Vec<_> = feats
            .into_iter()
            .zip(&test)
            .map(|(mut f, &i)| (f.remove(0), src.clips()[i].scene.clone()))
            .collect();
        let plain = gmm::evaluate(&model, &set).unwrap().accuracy;
        assert_eq!(accuracies(&rows, FeatureKind::Gc, 0.0), vec![plain, plain]);
    }

    #[test]
    fn mean_std_basic() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }
}
