//! Diagonal-covariance Gaussian mixtures per scene, and clip-level
//! classification by summing frame log-likelihoods over the clip.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSequence};
use crate::seed;
use crate::tensor_io;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub components: usize,
    pub max_iter: usize,
    /// Stop when the relative log-likelihood improvement drops below this.
    pub tol: f64,
    /// Variance floor as a fraction of each dimension's pooled data variance.
    pub var_floor_rel: f64,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            components: 8,
            max_iter: 200,
            tol: 1e-6,
            var_floor_rel: 1e-6,
            seed: 0,
        }
    }
}

/// One mixture with diagonal covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGmm {
    pub weights: Array1<f64>,
    /// `[components × dim]`
    pub means: Array2<f64>,
    /// `[components × dim]`
    pub variances: Array2<f64>,
}

/// Result of one EM run.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: DiagGmm,
    /// Total data log-likelihood before each M-step.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl DiagGmm {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    /// Per-component `log w_m − ½ Σ_d (ln 2π + ln σ²_{m,d})`.
    fn log_norms(&self) -> Vec<f64> {
        (0..self.n_components())
            .map(|m| {
                let w = self.weights[m];
                if w <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                w.ln() - 0.5 * self.variances.row(m).iter().map(|v| LN_2PI + v.ln()).sum::<f64>()
            })
            .collect()
    }

    fn component_logs(&self, norms: &[f64], x: ArrayView1<f64>, out: &mut [f64]) {
        for m in 0..self.n_components() {
            if norms[m] == f64::NEG_INFINITY {
                out[m] = f64::NEG_INFINITY;
                continue;
            }
            let mut q = 0.0;
            for d in 0..self.dim() {
                let diff = x[d] - self.means[[m, d]];
                q += diff * diff / self.variances[[m, d]];
            }
            out[m] = norms[m] - 0.5 * q;
        }
    }

    /// Log density of one feature vector.
    pub fn log_pdf(&self, x: ArrayView1<f64>) -> f64 {
        let norms = self.log_norms();
        let mut buf = vec![0.0; self.n_components()];
        self.component_logs(&norms, x, &mut buf);
        log_sum_exp(&buf)
    }

    /// Summed log density over all rows of `frames`.
    pub fn total_log_likelihood(&self, frames: &Array2<f64>) -> f64 {
        let norms = self.log_norms();
        let mut buf = vec![0.0; self.n_components()];
        frames
            .rows()
            .into_iter()
            .map(|x| {
                self.component_logs(&norms, x, &mut buf);
                log_sum_exp(&buf)
            })
            .sum()
    }
}

fn kmeans_pp(data: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = data.nrows();
    let mut centers = Array2::zeros((k, data.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&data.row(first));
    let sq = |a: ArrayView1<f64>, b: ArrayView1<f64>| -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
    };
    let mut dist: Vec<f64> = data.rows().into_iter().map(|r| sq(r, centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in dist.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&data.row(pick));
        for (i, r) in data.rows().into_iter().enumerate() {
            dist[i] = dist[i].min(sq(r, centers.row(c)));
        }
    }
    centers
}

/// EM for a diagonal GMM on the rows of `data`, seeded with k-means++.
pub fn fit_diag_gmm(data: &Array2<f64>, cfg: &GmmConfig) -> Result<EmFit> {
    let (n, dim) = data.dim();
    if n == 0 || dim == 0 {
        return Err(Error::Training("no frames to fit".into()));
    }
    if cfg.components == 0 {
        return Err(Error::Config("GMM needs at least one component".into()));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Training("non-finite feature values".into()));
    }
    let m = cfg.components.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mean = data.sum_axis(ndarray::Axis(0)) / n as f64;
    let data_var: Array1<f64> = (0..dim)
        .map(|d| data.column(d).iter().map(|x| (x - mean[d]).powi(2)).sum::<f64>() / n as f64)
        .collect();
    let floor: Array1<f64> = data_var.mapv(|v| (cfg.var_floor_rel * v).max(1e-12));

    let mut model = DiagGmm {
        weights: Array1::from_elem(m, 1.0 / m as f64),
        means: kmeans_pp(data, m, &mut rng),
        variances: Array2::from_shape_fn((m, dim), |(_, d)| data_var[d].max(floor[d])),
    };

    let mut resp = Array2::<f64>::zeros((n, m));
    let mut trace = Vec::new();
    let mut converged = false;
    let mut buf = vec![0.0; m];
    for _ in 0..cfg.max_iter {
        // E-step
        let norms = model.log_norms();
        let mut ll = 0.0;
        for (i, x) in data.rows().into_iter().enumerate() {
            model.component_logs(&norms, x, &mut buf);
            let lse = log_sum_exp(&buf);
            ll += lse;
            for c in 0..m {
                resp[[i, c]] = (buf[c] - lse).exp();
            }
        }
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            if (ll - prev) <= cfg.tol * prev.abs() {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);

        // M-step
        let nk = resp.sum_axis(ndarray::Axis(0));
        for c in 0..m {
            model.weights[c] = nk[c] / n as f64;
            if nk[c] < 1e-10 {
                continue;
            }
            for d in 0..dim {
                let mu = (0..n).map(|i| resp[[i, c]] * data[[i, d]]).sum::<f64>() / nk[c];
                let var = (0..n)
                    .map(|i| resp[[i, c]] * (data[[i, d]] - mu).powi(2))
                    .sum::<f64>()
                    / nk[c];
                model.means[[c, d]] = mu;
                model.variances[[c, d]] = var.max(floor[d]);
            }
        }
    }
    Ok(EmFit {
        model,
        log_likelihood: trace,
        converged,
    })
}

/// Scene models sharing one feature kind and order.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub scenes: Vec<String>,
    pub mixtures: Vec<DiagGmm>,
    pub feature_kind: FeatureKind,
    pub order: usize,
    pub training_config: GmmConfig,
}

#[derive(Serialize, Deserialize)]
struct GmmModelFile {
    scenes: Vec<String>,
    weights: Vec<Vec<f64>>,
    means: Vec<Vec<Vec<f64>>>,
    variances: Vec<Vec<Vec<f64>>>,
    feature_kind: FeatureKind,
    #[serde(rename = "K")]
    k: usize,
    training_config: GmmConfig,
}

fn rows_of(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if rows.iter().any(|x| x.len() != c) {
        return Err(Error::Contract(format!("ragged {what} in model file")));
    }
    Ok(Array2::from_shape_fn((r, c), |(i, j)| rows[i][j]))
}

impl GmmModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = GmmModelFile {
            scenes: self.scenes.clone(),
            weights: self.mixtures.iter().map(|g| g.weights.to_vec()).collect(),
            means: self.mixtures.iter().map(|g| rows_of(&g.means)).collect(),
            variances: self.mixtures.iter().map(|g| rows_of(&g.variances)).collect(),
            feature_kind: self.feature_kind,
            k: self.order,
            training_config: self.training_config,
        };
        tensor_io::write_json(path, &file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: GmmModelFile = tensor_io::read_json(path)?;
        let s = f.scenes.len();
        if f.weights.len() != s || f.means.len() != s || f.variances.len() != s {
            return Err(Error::Contract(format!("{}: inconsistent scene count", path.display())));
        }
        let mut mixtures = Vec::with_capacity(s);
        for i in 0..s {
            let g = DiagGmm {
                weights: Array1::from(f.weights[i].clone()),
                means: from_rows(&f.means[i], "means")?,
                variances: from_rows(&f.variances[i], "variances")?,
            };
            if g.means.ncols() != f.k || g.variances.dim() != g.means.dim() {
                return Err(Error::Contract(format!("{}: bad mixture shape", path.display())));
            }
            mixtures.push(g);
        }
        Ok(GmmModel {
            scenes: f.scenes,
            mixtures,
            feature_kind: f.feature_kind,
            order: f.k,
            training_config: f.training_config,
        })
    }
}

/// One EM fit per scene on the pooled frames of that scene's clips. Scenes are
/// ordered by label.
pub fn train_gmm(features: &[(FeatureSequence, String)], cfg: &GmmConfig) -> Result<GmmModel> {
    let first = features
        .first()
        .ok_or_else(|| Error::Training("no training clips".into()))?;
    let (kind, order) = (first.0.kind, first.0.order);
    let mut pooled: BTreeMap<&str, Vec<&FeatureSequence>> = BTreeMap::new();
    for (f, label) in features {
        if f.kind != kind || f.order != order {
            return Err(Error::Contract(format!(
                "mixed features: {}/{} and {}/{}",
                kind, order, f.kind, f.order
            )));
        }
        pooled.entry(label.as_str()).or_default().push(f);
    }
    let scenes: Vec<String> = pooled.keys().map(|s| s.to_string()).collect();
    let mixtures = pooled
        .into_iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .enumerate()
        .map(|(i, (label, seqs))| {
            let total: usize = seqs.iter().map(|f| f.n_frames()).sum();
            if total == 0 {
                return Err(Error::Training(format!("scene {label:?} has no frames")));
            }
            if total < cfg.components * order {
                log::warn!(
                    "scene {label:?}: {total} frames for {} components x {order} dims",
                    cfg.components
                );
            }
            let mut data = Array2::zeros((total, order));
            let mut at = 0;
            for f in seqs {
                let t = f.n_frames();
                data.slice_mut(ndarray::s![at..at + t, ..]).assign(&f.values);
                at += t;
            }
            let scene_cfg = GmmConfig {
                seed: seed::mix(cfg.seed, &[seed::TAG_GMM, i as u64]),
                ..*cfg
            };
            Ok(fit_diag_gmm(&data, &scene_cfg)?.model)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GmmModel {
        scenes,
        mixtures,
        feature_kind: kind,
        order,
        training_config: *cfg,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: String,
    pub scene_index: usize,
    /// Clip log-likelihood per scene, in model scene order.
    pub log_likelihoods: Vec<f64>,
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// `argmax_x Σ_τ log p(f_τ | x)`.
pub fn classify_clip(model: &GmmModel, features: &FeatureSequence) -> Result<Classification> {
    if features.kind != model.feature_kind || features.order != model.order {
        return Err(Error::Contract(format!(
            "model expects {}/{}, got {}/{}",
            model.feature_kind, model.order, features.kind, features.order
        )));
    }
    if features.n_frames() == 0 {
        return Err(Error::Contract("cannot classify an empty feature sequence".into()));
    }
    let lls: Vec<f64> = model
        .mixtures
        .iter()
        .map(|g| g.total_log_likelihood(&features.values))
        .collect();
    let best = argmax_first(&lls);
    Ok(Classification {
        label: model.scenes[best].clone(),
        scene_index: best,
        log_likelihoods: lls,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub scenes: Vec<String>,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

impl Evaluation {
    /// Tallies `(true, predicted)` scene index pairs.
    pub fn from_predictions(scenes: Vec<String>, pairs: &[(usize, usize)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyInput("evaluation needs at least one clip".into()));
        }
        let s = scenes.len();
        let mut confusion = vec![vec![0usize; s]; s];
        for &(t, p) in pairs {
            if t >= s || p >= s {
                return Err(Error::Contract(format!("scene index out of range ({t}, {p})")));
            }
            confusion[t][p] += 1;
        }
        let correct = (0..s).map(|i| confusion[i][i]).sum();
        Ok(Evaluation {
            scenes,
            accuracy: correct as f64 / pairs.len() as f64,
            correct,
            total: pairs.len(),
            confusion,
        })
    }

    pub fn confusion_csv(&self) -> String {
        let mut s = format!("true\\predicted,{}\n", self.scenes.join(","));
        for (i, row) in self.confusion.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            s.push_str(&format!("{},{}\n", self.scenes[i], cells.join(",")));
        }
        s
    }
}

/// Clip-level accuracy and confusion matrix over a labelled test set.
pub fn evaluate(model: &GmmModel, test_set: &[(FeatureSequence, String)]) -> Result<Evaluation> {
    let pairs = test_set
        .par_iter()
        .map(|(f, label)| {
            let truth = model
                .scenes
                .iter()
                .position(|s| s == label)
                .ok_or_else(|| Error::Contract(format!("test label {label:?} unknown to model")))?;
            Ok((truth, classify_clip(model, f)?.scene_index))
        })
        .collect::<Result<Vec<_>>>()?;
    Evaluation::from_predictions(model.scenes.clone(), &pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::f64::consts::PI;
    use rand_distr::{Distribution, Normal};

    fn seq(values: Array2<f64>) -> FeatureSequence {
        let order = values.ncols();
        FeatureSequence {
            values,
            kind: FeatureKind::Gc,
            order,
            source: "test".into(),
        }
    }

    fn unit_gaussian(mean: f64) -> DiagGmm {
        DiagGmm {
            weights: array![1.0],
            means: array![[mean]],
            variances: array![[1.0]],
        }
    }

    fn two_scene_model() -> GmmModel {
        GmmModel {
            scenes: vec!["a".into(), "b".into()],
            mixtures: vec![unit_gaussian(0.0), unit_gaussian(10.0)],
            feature_kind: FeatureKind::Gc,
            order: 1,
            training_config: GmmConfig::default(),
        }
    }

    #[test]
    fn single_component_matches_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = Array2::from_shape_fn((500, 3), |(_, d)| rng.random::<f64>() * (d + 1) as f64);
        let cfg = GmmConfig { components: 1, ..GmmConfig::default() };
        let fit = fit_diag_gmm(&data, &cfg).unwrap();
        for d in 0..3 {
            let col = data.column(d);
            let mu = col.sum() / 500.0;
            let var = col.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / 500.0;
            assert!((fit.model.means[[0, d]] - mu).abs() < 1e-9);
            assert!((fit.model.variances[[0, d]] - var).abs() < 1e-9);
        }
        assert!((fit.model.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_never_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = Normal::new(0.0, 1.0).unwrap();
        let data = Array2::from_shape_fn((1500, 2), |(i, _)| n.sample(&mut rng) + (i % 3) as f64 * 4.0);
        let fit = fit_diag_gmm(&data, &GmmConfig { components: 4, ..GmmConfig::default() }).unwrap();
        for w in fit.log_likelihood.windows(2) {
            assert!(w[1] - w[0] >= -1e-8, "{} -> {}", w[0], w[1]);
        }
        let s: f64 = fit.model.weights.sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_data_stays_finite() {
        let data = Array2::from_elem((40, 2), 3.0);
        let fit = fit_diag_gmm(&data, &GmmConfig { components: 3, ..GmmConfig::default() }).unwrap();
        assert!(fit.log_likelihood.iter().all(|v| v.is_finite()));
        let far = array![1e6, -1e6];
        assert!(fit.model.log_pdf(far.view()).is_finite());
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let feats: Vec<(FeatureSequence, String)> = (0..4)
            .map(|i| {
                let v = Array2::from_shape_fn((60, 2), |_| rng.random::<f64>() + i as f64);
                (seq(v), if i % 2 == 0 { "x".into() } else { "y".into() })
            })
            .collect();
        let cfg = GmmConfig { components: 3, seed: 9, ..GmmConfig::default() };
        let a = train_gmm(&feats, &cfg).unwrap();
        let b = train_gmm(&feats, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.scenes, vec!["x", "y"]);
    }

    #[test]
    fn empty_scene_is_training_error() {
        let feats = vec![(seq(Array2::zeros((0, 2))), "quiet".to_string())];
        assert!(matches!(train_gmm(&feats, &GmmConfig::default()), Err(Error::Training(_))));
        assert!(matches!(train_gmm(&[], &GmmConfig::default()), Err(Error::Training(_))));
    }

    #[test]
    fn separable_case() {
        let m = two_scene_model();
        let f = seq(array![[0.1], [-0.3], [0.2]]);
        assert_eq!(classify_clip(&m, &f).unwrap().label, "a");
    }

    #[test]
    fn tie_goes_to_lower_index() {
        let m = two_scene_model();
        let c = classify_clip(&m, &seq(array![[5.0]])).unwrap();
        assert_eq!(c.log_likelihoods[0], c.log_likelihoods[1]);
        assert_eq!(c.scene_index, 0);
    }

    #[test]
    fn frame_order_is_irrelevant() {
        let m = two_scene_model();
        let a = classify_clip(&m, &seq(array![[1.0], [7.0], [3.5]])).unwrap();
        let b = classify_clip(&m, &seq(array![[3.5], [1.0], [7.0]])).unwrap();
        for (x, y) in a.log_likelihoods.iter().zip(&b.log_likelihoods) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(a.scene_index, b.scene_index);
    }

    #[test]
    fn argmax_stable_under_constant_shift() {
        let lls = [-120.5, -80.25, -80.25, -300.0];
        let shifted: Vec<f64> = lls.iter().map(|v| v + 1234.5).collect();
        assert_eq!(argmax_first(&lls), 1);
        assert_eq!(argmax_first(&shifted), 1);
    }

    #[test]
    fn classify_contract_errors() {
        let m = two_scene_model();
        assert!(classify_clip(&m, &seq(Array2::zeros((0, 1)))).is_err());
        assert!(classify_clip(&m, &seq(Array2::zeros((3, 2)))).is_err());
        let mut sc = seq(array![[0.0]]);
        sc.kind = FeatureKind::Sc;
        assert!(classify_clip(&m, &sc).is_err());
    }

    #[test]
    fn evaluation_counts() {
        let m = two_scene_model();
        let test: Vec<(FeatureSequence, String)> =
            (0..5).map(|i| (seq(array![[i as f64 * 0.1]]), "a".to_string())).collect();
        let e = evaluate(&m, &test).unwrap();
        assert_eq!(e.accuracy, 1.0);
        assert_eq!(e.confusion, vec![vec![5, 0], vec![0, 0]]);

        let mixed = vec![
            (seq(array![[0.0]]), "a".to_string()),
            (seq(array![[9.0]]), "a".to_string()),
            (seq(array![[10.0]]), "b".to_string()),
        ];
        let e = evaluate(&m, &mixed).unwrap();
        let rows: Vec<usize> = e.confusion.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(rows, vec![2, 1]);
        assert!((e.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert!(evaluate(&m, &[]).is_err());
        assert!(e.confusion_csv().starts_with("true\\predicted,a,b\n"));
    }

    #[test]
    fn model_json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let m = two_scene_model();
        m.save(&p).unwrap();
        assert_eq!(GmmModel::load(&p).unwrap(), m);
        let raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        for key in ["scenes", "weights", "means", "variances", "feature_kind", "K", "training_config"] {
            assert!(raw.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn log_pdf_matches_closed_form() {
        let g = unit_gaussian(2.0);
        let x = array![3.0];
        let want = -0.5 * (2.0 * PI).ln() - 0.5;
        assert!((g.log_pdf(x.view()) - want).abs() < 1e-14);
    }
}
