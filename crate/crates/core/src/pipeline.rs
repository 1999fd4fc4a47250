//! File-based pipeline behind the `graphceps` command.
//!
//! Layout on disk:
//!
//! ```text
//! <dataset>/index.json          clip list, sample rate, channel ids
//! <dataset>/wav/<id>.wav        clips with guard margins
//! <dataset>/graph.json          microphone graph (built-in fixture only)
//! <dataset>/scenes.json         scene specs used for synthesis
//! <output>/bases/               gc_<graph hash>.bin, sc_<dataset key>.bin
//! <output>/features/<kind>/     one tensor + sidecar per clip
//! <output>/models/<kind>.json
//! <output>/reports/
//! ```
//!
//! Every command validates the whole configuration before writing anything.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::{self, AudioClip, WavFormat};
use crate::dsp::StftParams;
use crate::error::{Error, Result};
use crate::experiment::{self, ClipMeta, ClipSource, FeatureSettings, Split, SweepConfig, SweepRow, SynthConfig, SynthSource, Transform};
use crate::features::{self, FeatureKind, FeatureSequence, PcaBasis, DEFAULT_ORDER};
use crate::fixture;
use crate::gmm::{self, Classification, Evaluation, GmmConfig, GmmModel};
use crate::graph::{GraphBasis, MicGraph};
use crate::sim::SceneSpec;
use crate::tensor_io;

pub const SEED_ENV: &str = "GRAPHCEPS_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    pub order: usize,
    /// Mean-centred PCA for SC instead of the plain second-moment matrix.
    pub centered: bool,
    pub normalize: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            kind: FeatureKind::Gc,
            order: DEFAULT_ORDER,
            centered: false,
            normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmParams {
    pub components: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub var_floor_rel: f64,
}

impl Default for GmmParams {
    fn default() -> Self {
        let d = GmmConfig::default();
        GmmParams {
            components: d.components,
            max_iter: d.max_iter,
            tol: d.tol,
            var_floor_rel: d.var_floor_rel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub sigmas_ms: Vec<f64>,
    pub repetitions: usize,
    pub kinds: Vec<FeatureKind>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        let d = SweepConfig::default();
        SweepSettings {
            sigmas_ms: d.sigmas_ms,
            repetitions: d.repetitions,
            kinds: vec![FeatureKind::Gc, FeatureKind::Sc],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisReportSettings {
    pub alphas: Vec<f64>,
}

impl Default for BasisReportSettings {
    fn default() -> Self {
        BasisReportSettings {
            alphas: vec![1.0, 0.1, 0.01, 0.001, 0.0001],
        }
    }
}

/// One reproducible pipeline. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub output: PathBuf,
    /// Microphone graph JSON. Falls back to `<dataset>/graph.json`.
    pub graph: Option<PathBuf>,
    /// Scene spec list for `synth`. The built-in fixture when absent.
    pub scenes: Option<PathBuf>,
    pub feature: FeatureConfig,
    /// STFT settings. 20 ms frames at the dataset rate when absent.
    pub stft: Option<StftParams>,
    pub gmm: GmmParams,
    pub synth: SynthConfig,
    pub sweep: SweepSettings,
    pub basis_report: BasisReportSettings,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: PathBuf::from("data"),
            output: PathBuf::from("out"),
            graph: None,
            scenes: None,
            feature: FeatureConfig::default(),
            stft: None,
            gmm: GmmParams::default(),
            synth: SynthConfig::default(),
            sweep: SweepSettings::default(),
            basis_report: BasisReportSettings::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Extract,
    FitBasis,
    BasisReport,
    Train,
    Classify,
    Evaluate,
    Sweep,
}

impl RunConfig {
    /// Reads a config file, resolves its relative paths and applies `GRAPHCEPS_SEED`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = tensor_io::read_json(path).map_err(|e| match e {
            Error::Json { path, source } => Error::Config(format!("{}: {source}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.apply_env()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset);
        fix(&mut self.output);
        if let Some(g) = &mut self.graph {
            fix(g);
        }
        if let Some(s) = &mut self.scenes {
            fix(s);
        }
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn gmm_config(&self) -> GmmConfig {
        GmmConfig {
            components: self.gmm.components,
            max_iter: self.gmm.max_iter,
            tol: self.gmm.tol,
            var_floor_rel: self.gmm.var_floor_rel,
            seed: self.seed,
        }
    }

    pub fn index_path(&self) -> PathBuf {
        self.dataset.join("index.json")
    }

    pub fn graph_path(&self) -> PathBuf {
        self.graph.clone().unwrap_or_else(|| self.dataset.join("graph.json"))
    }

    /// Checks ranges and referenced files for `cmd`. Nothing is written before this passes.
    pub fn validate(&self, cmd: Command) -> Result<()> {
        let order = self.feature.order;
        if !(1..=512).contains(&order) {
            return Err(Error::Config(format!("feature.order must be in 1..=512, got {order}")));
        }
        if let Some(s) = &self.stft {
            s.validate()?;
        }
        let g = &self.gmm;
        if !(1..=256).contains(&g.components) {
            return Err(Error::Config(format!("gmm.components must be in 1..=256, got {}", g.components)));
        }
        if !(1..=100_000).contains(&g.max_iter) {
            return Err(Error::Config(format!("gmm.max_iter must be in 1..=100000, got {}", g.max_iter)));
        }
        if !(g.tol > 0.0 && g.tol < 1.0) {
            return Err(Error::Config(format!("gmm.tol must be in (0, 1), got {}", g.tol)));
        }
        if !(g.var_floor_rel > 0.0 && g.var_floor_rel < 1.0) {
            return Err(Error::Config(format!("gmm.var_floor_rel must be in (0, 1), got {}", g.var_floor_rel)));
        }
        self.synth.validate()?;
        SweepConfig {
            sigmas_ms: self.sweep.sigmas_ms.clone(),
            repetitions: self.sweep.repetitions,
        }
        .validate()?;
        if self.sweep.kinds.is_empty() {
            return Err(Error::Config("sweep.kinds is empty".into()));
        }
        if let Some(a) = self.basis_report.alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
            return Err(Error::Config(format!("basis_report.alphas must be finite and >= 0, got {a}")));
        }
        if let Some(g) = &self.graph {
            require_file(g, "graph")?;
        }
        match cmd {
            Command::Synth => {
                if let Some(s) = &self.scenes {
                    require_file(s, "scenes")?;
                }
            }
            Command::BasisReport => {
                require_file(&self.graph_path(), "graph")?;
            }
            _ => {
                require_file(&self.index_path(), "dataset index")?;
            }
        }
        let needs_graph = |k: &FeatureKind| *k == FeatureKind::Gc;
        let graph_needed = match cmd {
            Command::Extract | Command::Train | Command::Classify | Command::Evaluate => needs_graph(&self.feature.kind),
            Command::Sweep => true,
            _ => false,
        };
        if graph_needed && !self.graph_path().is_file() {
            return Err(Error::Config(format!(
                "a microphone graph is required (set \"graph\" or provide {})",
                self.graph_path().display()
            )));
        }
        Ok(())
    }
}

fn require_file(p: &Path, what: &str) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} file {} does not exist", p.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    /// Relative to the dataset directory.
    pub file: String,
    pub scene: String,
    pub split: Split,
    pub guard_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub sample_rate: u32,
    pub channel_ids: Vec<String>,
    pub clips: Vec<IndexEntry>,
}

/// A dataset directory written by `synth` (or by hand in the same layout).
pub struct DiskSource {
    dir: PathBuf,
    pub index: DatasetIndex,
    meta: Vec<ClipMeta>,
    /// Digest of `index.json`, part of the SC basis cache key.
    pub digest: String,
}

impl DiskSource {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join("index.json");
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let index: DatasetIndex =
            serde_json::from_slice(&bytes).map_err(|source| Error::Json { path: path.clone(), source })?;
        if index.clips.is_empty() {
            return Err(Error::EmptyInput(format!("{} lists no clips", path.display())));
        }
        let meta = index
            .clips
            .iter()
            .map(|c| ClipMeta {
                id: c.id.clone(),
                scene: c.scene.clone(),
                split: c.split,
                guard: c.guard_samples,
            })
            .collect();
        Ok(DiskSource {
            dir: dir.to_path_buf(),
            digest: hex::encode(&Sha256::digest(&bytes)[..8]),
            index,
            meta,
        })
    }
}

impl ClipSource for DiskSource {
    fn clips(&self) -> &[ClipMeta] {
        &self.meta
    }

    fn load(&self, i: usize) -> Result<AudioClip> {
        let entry = &self.index.clips[i];
        let clip = audio::load_wav(&self.dir.join(&entry.file))?;
        if clip.sample_rate != self.index.sample_rate || clip.n_channels() != self.index.channel_ids.len() {
            return Err(Error::Format {
                path: self.dir.join(&entry.file),
                reason: "sample rate or channel count differs from index.json".into(),
            });
        }
        Ok(clip.labeled(entry.scene.clone()))
    }
}

fn kind_dir(kind: FeatureKind) -> String {
    kind.to_string().to_lowercase()
}

pub struct Outputs {
    pub root: PathBuf,
}

impl Outputs {
    pub fn new(root: &Path) -> Self {
        Outputs { root: root.to_path_buf() }
    }
    pub fn bases(&self) -> PathBuf {
        self.root.join("bases")
    }
    pub fn features(&self, kind: FeatureKind) -> PathBuf {
        self.root.join("features").join(kind_dir(kind))
    }
    pub fn feature_file(&self, kind: FeatureKind, clip_id: &str) -> PathBuf {
        self.features(kind).join(format!("{clip_id}.bin"))
    }
    pub fn model(&self, kind: FeatureKind) -> PathBuf {
        self.root.join("models").join(format!("{}.json", kind_dir(kind)))
    }
    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
    pub fn gc_basis(&self, graph_hash: &str) -> PathBuf {
        self.bases().join(format!("gc_{graph_hash}.bin"))
    }
    pub fn sc_basis(&self, key: &str) -> PathBuf {
        self.bases().join(format!("sc_{key}.bin"))
    }
}

/// Resolved STFT settings: explicit, or 20 ms frames at `sample_rate`.
pub fn stft_for(cfg: &RunConfig, sample_rate: u32) -> StftParams {
    cfg.stft.unwrap_or_else(|| StftParams::for_rate(sample_rate))
}

fn feature_settings(cfg: &RunConfig, sample_rate: u32) -> FeatureSettings {
    FeatureSettings {
        stft: stft_for(cfg, sample_rate),
        order: cfg.feature.order,
        normalize: cfg.feature.normalize,
    }
}

/// Cache key of the SC basis: dataset index digest, STFT settings and centring.
pub fn sc_key(data: &DiskSource, stft: &StftParams, centered: bool) -> String {
    let text = format!(
        "{}|{}|{}|{}|{:?}|{}",
        data.digest, stft.frame_len, stft.fft_size, stft.hop, stft.window, centered
    );
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

pub fn load_graph(cfg: &RunConfig) -> Result<MicGraph> {
    let path = cfg.graph_path();
    if !path.is_file() {
        return Err(Error::Config(format!("missing graph config {}", path.display())));
    }
    MicGraph::load(&path)
}

/// The GC basis, computed once per graph hash and cached under `bases/`.
pub fn gc_basis(cfg: &RunConfig) -> Result<GraphBasis> {
    let graph = load_graph(cfg)?;
    let out = Outputs::new(&cfg.output);
    let path = out.gc_basis(&graph.hash());
    if path.is_file() {
        let b = GraphBasis::load(&path)?;
        if b.graph_hash == graph.hash() {
            return Ok(b);
        }
    }
    let b = GraphBasis::for_graph(&graph)?;
    b.save(&path)?;
    Ok(b)
}

pub fn sc_basis(cfg: &RunConfig, data: &DiskSource) -> Result<PcaBasis> {
    let stft = stft_for(cfg, data.index.sample_rate);
    let path = Outputs::new(&cfg.output).sc_basis(&sc_key(data, &stft, cfg.feature.centered));
    if !path.is_file() {
        return Err(Error::MissingArtifact {
            path,
            hint: "no fitted spatial basis for this dataset; run `graphceps fit-basis` first".into(),
        });
    }
    PcaBasis::load(&path)
}

pub fn transform_for(cfg: &RunConfig, kind: FeatureKind, data: &DiskSource) -> Result<Transform> {
    Ok(match kind {
        FeatureKind::Gc => Transform::Gc(gc_basis(cfg)?),
        FeatureKind::Sc => Transform::Sc(sc_basis(cfg, data)?),
        FeatureKind::Cep => Transform::Cep,
    })
}

fn with_kind(cfg: &RunConfig, kind: FeatureKind) -> RunConfig {
    let mut c = cfg.clone();
    c.feature.kind = kind;
    c
}

pub fn load_scenes(cfg: &RunConfig) -> Result<Vec<SceneSpec>> {
    match &cfg.scenes {
        Some(p) => tensor_io::read_json(p),
        None => Ok(fixture::scenes()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub clips: usize,
    pub minutes: f64,
}

/// Renders the scene specs to WAV files plus `index.json`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthSummary> {
    cfg.validate(Command::Synth)?;
    let scenes = load_scenes(cfg)?;
    let source = SynthSource::new(scenes.clone(), cfg.synth.clone(), cfg.seed)?;
    let n_mics = scenes[0].mic_positions.len();
    if scenes.iter().any(|s| s.mic_positions.len() != n_mics) {
        return Err(Error::Config("all scenes must share one microphone layout".into()));
    }
    let dir = &cfg.dataset;
    let entries = (0..source.clips().len())
        .into_par_iter()
        .map(|i| {
            let m = &source.clips()[i];
            let file = format!("wav/{}.wav", m.id);
            audio::write_wav(&dir.join(&file), &source.load(i)?, WavFormat::Float32)?;
            Ok(IndexEntry {
                id: m.id.clone(),
                file,
                scene: m.scene.clone(),
                split: m.split,
                guard_samples: m.guard,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let index = DatasetIndex {
        sample_rate: cfg.synth.sample_rate,
        channel_ids: (0..n_mics).map(|m| format!("mic{m}")).collect(),
        clips: entries,
    };
    tensor_io::write_json(&dir.join("scenes.json"), &scenes)?;
    if cfg.scenes.is_none() {
        tensor_io::write_json(&dir.join("graph.json"), &fixture::graph(0.01))?;
    }
    tensor_io::write_json(&cfg.index_path(), &index)?;
    Ok(SynthSummary {
        clips: index.clips.len(),
        minutes: index.clips.len() as f64 * cfg.synth.clip_s / 60.0,
    })
}

/// Fits the SC basis on the training split. Returns the basis file path.
pub fn cmd_fit_basis(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate(Command::FitBasis)?;
    let data = DiskSource::open(&cfg.dataset)?;
    let stft = stft_for(cfg, data.index.sample_rate);
    let qs = experiment::channel_logs(&data, &data.indices(Split::Train), &stft)?;
    let basis = experiment::fit_sc_basis(&qs, cfg.feature.centered)?;
    let path = Outputs::new(&cfg.output).sc_basis(&sc_key(&data, &stft, cfg.feature.centered));
    basis.save(&path)?;
    Ok(path)
}

/// Writes one feature file per clip for the configured kind. Returns the paths.
pub fn cmd_extract(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate(Command::Extract)?;
    let data = DiskSource::open(&cfg.dataset)?;
    let kind = cfg.feature.kind;
    let transform = transform_for(cfg, kind, &data)?;
    let fs = feature_settings(cfg, data.index.sample_rate);
    let out = Outputs::new(&cfg.output);
    let all: Vec<usize> = (0..data.clips().len()).collect();
    all.par_iter()
        .map(|&i| {
            let id = &data.clips()[i].id;
            let f = experiment::features_for(&data, &[i], &[&transform], &fs)?.remove(0).remove(0);
            let path = out.feature_file(kind, id);
            f.save(&path, id)?;
            Ok(path)
        })
        .collect()
}

fn load_split_features(cfg: &RunConfig, data: &DiskSource, split: Split) -> Result<Vec<(FeatureSequence, String)>> {
    let kind = cfg.feature.kind;
    let out = Outputs::new(&cfg.output);
    data.indices(split)
        .par_iter()
        .map(|&i| {
            let m = &data.clips()[i];
            let path = out.feature_file(kind, &m.id);
            if !path.is_file() {
                return Err(Error::MissingArtifact {
                    path,
                    hint: format!("run `graphceps extract --kind {kind}` first"),
                });
            }
            let (f, _) = FeatureSequence::load(&path)?;
            if f.kind != kind || f.order != cfg.feature.order {
                return Err(Error::Contract(format!(
                    "{}: holds {}/{} features, config asks for {}/{}",
                    path.display(),
                    f.kind,
                    f.order,
                    kind,
                    cfg.feature.order
                )));
            }
            Ok((f, m.scene.clone()))
        })
        .collect()
}

/// Trains the scene models of the configured kind. Returns the model path.
pub fn cmd_train(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate(Command::Train)?;
    let data = DiskSource::open(&cfg.dataset)?;
    let set = load_split_features(cfg, &data, Split::Train)?;
    let model = gmm::train_gmm(&set, &cfg.gmm_config())?;
    let path = Outputs::new(&cfg.output).model(cfg.feature.kind);
    model.save(&path)?;
    Ok(path)
}

fn load_model(cfg: &RunConfig, kind: FeatureKind) -> Result<GmmModel> {
    let path = Outputs::new(&cfg.output).model(kind);
    if !path.is_file() {
        return Err(Error::MissingArtifact {
            path,
            hint: format!("run `graphceps train --kind {kind}` first"),
        });
    }
    GmmModel::load(&path)
}

/// Classifies one WAV file (all of it, no guard trimming).
pub fn cmd_classify(cfg: &RunConfig, wav: &Path) -> Result<Classification> {
    cfg.validate(Command::Classify)?;
    let data = DiskSource::open(&cfg.dataset)?;
    let model = load_model(cfg, cfg.feature.kind)?;
    let transform = transform_for(cfg, cfg.feature.kind, &data)?;
    let clip = audio::load_wav(wav)?;
    let f = experiment::extract(&clip, &transform, &feature_settings(cfg, clip.sample_rate))?;
    gmm::classify_clip(&model, &f)
}

/// Test-split accuracy and confusion matrix; writes `eval_<kind>.json` and `confusion_<kind>.csv`.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Evaluation> {
    cfg.validate(Command::Evaluate)?;
    let data = DiskSource::open(&cfg.dataset)?;
    let model = load_model(cfg, cfg.feature.kind)?;
    let set = load_split_features(cfg, &data, Split::Test)?;
    let eval = gmm::evaluate(&model, &set)?;
    let reports = Outputs::new(&cfg.output).reports();
    let k = kind_dir(cfg.feature.kind);
    tensor_io::write_json(&reports.join(format!("eval_{k}.json")), &eval)?;
    tensor_io::write_atomic(&reports.join(format!("confusion_{k}.csv")), eval.confusion_csv().as_bytes())?;
    Ok(eval)
}

pub fn sweep_long_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("kind,sigma_ms,rep,accuracy\n");
    for r in rows {
        s.push_str(&format!("{},{:?},{},{:?}\n", r.kind, r.sigma_ms, r.rep, r.accuracy));
    }
    s
}

pub fn sweep_summary_csv(rows: &[SweepRow], kinds: &[FeatureKind], sigmas_ms: &[f64]) -> String {
    let mut s = String::from("kind,sigma_ms,mean_accuracy,std_accuracy,repetitions\n");
    for &k in kinds {
        for &sigma in sigmas_ms {
            let acc = experiment::accuracies(rows, k, sigma);
            let (m, sd) = experiment::mean_std(&acc);
            s.push_str(&format!("{k},{sigma:?},{m:?},{sd:?},{}\n", acc.len()));
        }
    }
    s
}

/// Accuracy against desync strength for every kind in `sweep.kinds`;
/// writes `sweep_long.csv` and `sweep_summary.csv`.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    cfg.validate(Command::Sweep)?;
    let data = DiskSource::open(&cfg.dataset)?;
    let graph = load_graph(cfg)?;
    let models = cfg
        .sweep
        .kinds
        .iter()
        .map(|&k| Ok((transform_for(&with_kind(cfg, k), k, &data)?, load_model(cfg, k)?)))
        .collect::<Result<Vec<_>>>()?;
    let sweep_cfg = SweepConfig {
        sigmas_ms: cfg.sweep.sigmas_ms.clone(),
        repetitions: cfg.sweep.repetitions,
    };
    let fs = feature_settings(cfg, data.index.sample_rate);
    let rows = experiment::sweep(&data, &graph.groups, &models, &fs, &sweep_cfg, cfg.seed)?;
    let reports = Outputs::new(&cfg.output).reports();
    tensor_io::write_atomic(&reports.join("sweep_long.csv"), sweep_long_csv(&rows).as_bytes())?;
    tensor_io::write_atomic(
        &reports.join("sweep_summary.csv"),
        sweep_summary_csv(&rows, &cfg.sweep.kinds, &cfg.sweep.sigmas_ms).as_bytes(),
    )?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTable {
    pub labels: Vec<String>,
    /// Symmetric, zero diagonal.
    pub values: Vec<Vec<f64>>,
}

impl SimilarityTable {
    pub fn to_csv(&self) -> String {
        let mut s = format!(",{}\n", self.labels.join(","));
        for (l, row) in self.labels.iter().zip(&self.values) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&format!("{l},{}\n", cells.join(",")));
        }
        s
    }
}

/// Pairwise `basis_similarity` of the given matrices.
pub fn similarity_table(named: &[(String, ndarray::Array2<f64>)]) -> Result<SimilarityTable> {
    let n = named.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let r = features::basis_similarity(&named[i].1, &named[j].1)?;
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(SimilarityTable {
        labels: named.iter().map(|(l, _)| l.clone()).collect(),
        values,
    })
}

/// U grids for each α, the SC matrix when a fitted basis exists, and the
/// similarity table over all of them.
pub fn cmd_basis_report(cfg: &RunConfig) -> Result<SimilarityTable> {
    cfg.validate(Command::BasisReport)?;
    let graph = load_graph(cfg)?;
    let reports = Outputs::new(&cfg.output).reports();
    let mut named = Vec::new();
    for &alpha in &cfg.basis_report.alphas {
        let b = GraphBasis::for_graph(&graph.with_alpha(alpha))?;
        tensor_io::write_matrix_csv(&reports.join(format!("igft_alpha_{alpha:?}.csv")), &b.u, None)?;
        named.push((format!("alpha={alpha:?}"), b.u));
    }
    if cfg.index_path().is_file() {
        let data = DiskSource::open(&cfg.dataset)?;
        match sc_basis(cfg, &data) {
            Ok(sc) => {
                tensor_io::write_matrix_csv(&reports.join("sc_matrix.csv"), &sc.e_t, None)?;
                named.push(("SC".to_string(), sc.e_t));
            }
            Err(Error::MissingArtifact { .. }) => log::info!("no fitted SC basis; table covers the IGFT matrices only"),
            Err(e) => return Err(e),
        }
    }
    let table = similarity_table(&named)?;
    tensor_io::write_atomic(&reports.join("basis_similarity.csv"), table.to_csv().as_bytes())?;
    Ok(table)
}
