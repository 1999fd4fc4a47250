//! The three cepstral feature families and the basis similarity metric.
//!
//! * graph cepstrum (GC): `e_τ = U q_τ`, with `U` the Laplacian eigenbasis of
//!   the microphone graph. No training data needed.
//! * spatial cepstrum (SC): `d_τ = Eᵀ q_τ`, with `Eᵀ` the eigenvectors of the
//!   non-centred second-moment matrix of `q` over training frames.
//! * cepstrum (CEP): real part of the unitary IDFT of the per-frequency
//!   log-amplitude vector `p_τ`.
//!
//! All three keep the lowest `K` orders: ascending Laplacian eigenvalue for
//! GC, descending variance for SC, lowest quefrency for CEP.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::LogAmplitudeSeq;
use crate::error::{Error, Result};
use crate::graph::{sidecar_path, GraphBasis};
use crate::linalg::{self, EigenOrder};
use crate::tensor_io::{self, Tensor};

/// Default number of coefficients kept per frame.
pub const DEFAULT_ORDER: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureKind {
    #[serde(rename = "GC")]
    Gc,
    #[serde(rename = "SC")]
    Sc,
    #[serde(rename = "CEP")]
    Cep,
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::Gc => "GC",
            FeatureKind::Sc => "SC",
            FeatureKind::Cep => "CEP",
        })
    }
}

impl FromStr for FeatureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GC" => Ok(FeatureKind::Gc),
            "SC" => Ok(FeatureKind::Sc),
            "CEP" => Ok(FeatureKind::Cep),
            other => Err(Error::Config(format!("unknown feature kind {other:?} (GC, SC, CEP)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    /// `[frames × order]`
    pub values: Array2<f64>,
    pub kind: FeatureKind,
    pub order: usize,
    /// Digest of the basis that produced the features.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub kind: FeatureKind,
    pub order: usize,
    pub basis_hash: String,
    pub clip_id: String,
}

impl FeatureSequence {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    /// Per-frame z-normalisation across coefficients. Off by default in the pipeline.
    pub fn normalize_frames(&mut self) {
        for mut row in self.values.rows_mut() {
            let k = row.len() as f64;
            let mean = row.sum() / k;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
            let sd = var.sqrt().max(1e-12);
            row.mapv_inplace(|v| (v - mean) / sd);
        }
    }

    pub fn save(&self, path: &Path, clip_id: &str) -> Result<()> {
        tensor_io::write_tensor(path, &Tensor::from_matrix(&self.values))?;
        tensor_io::write_json(
            &sidecar_path(path),
            &FeatureSidecar {
                kind: self.kind,
                order: self.order,
                basis_hash: self.source.clone(),
                clip_id: clip_id.to_string(),
            },
        )
    }

    pub fn load(path: &Path) -> Result<(Self, FeatureSidecar)> {
        let values = tensor_io::read_tensor(path)?.into_matrix()?;
        let side: FeatureSidecar = tensor_io::read_json(&sidecar_path(path))?;
        if values.ncols() != side.order {
            return Err(Error::Contract(format!(
                "{}: {} columns but sidecar order {}",
                path.display(),
                values.ncols(),
                side.order
            )));
        }
        Ok((
            FeatureSequence {
                values,
                kind: side.kind,
                order: side.order,
                source: side.basis_hash.clone(),
            },
            side,
        ))
    }

    pub fn to_csv(&self) -> String {
        let header: Vec<String> = (0..self.order).map(|k| format!("{}{k}", self.kind)).collect();
        tensor_io::matrix_to_csv(&self.values, Some(&header))
    }
}

/// Applies the first `order` rows of `basis` to every frame (row) of `q`.
fn project(q: &Array2<f64>, basis: &Array2<f64>, order: usize) -> Array2<f64> {
    let rows = basis.slice(s![..order, ..]);
    q.dot(&rows.t())
}

fn check_dims(q: &LogAmplitudeSeq, n: usize, order: usize, what: &str) -> Result<()> {
    if q.dim() != n {
        return Err(Error::Contract(format!(
            "{what}: frames have {} channels, basis has {n}",
            q.dim()
        )));
    }
    if order == 0 || order > n {
        return Err(Error::Contract(format!("{what}: order {order} outside 1..={n}")));
    }
    Ok(())
}

/// Graph cepstrum: `e_{τ,k} = Σ_n u_{k,n} q_{τ,n}` for `k < order`.
pub fn graph_cepstrum(q: &LogAmplitudeSeq, b: &GraphBasis, order: usize) -> Result<FeatureSequence> {
    check_dims(q, b.dim(), order, "graph cepstrum")?;
    Ok(FeatureSequence {
        values: project(&q.values, &b.u, order),
        kind: FeatureKind::Gc,
        order,
        source: b.graph_hash.clone(),
    })
}

/// PCA basis of channel log-amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    /// Eigenvectors of `R_q` as rows (`Eᵀ`), descending eigenvalue.
    pub e_t: Array2<f64>,
    pub eigvals: Array1<f64>,
    pub frames_used: usize,
    /// Frame mean subtracted before projection; `None` for the plain second-moment basis.
    pub mean: Option<Array1<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PcaSidecar {
    eigvals: Vec<f64>,
    frames_used: usize,
    mean: Option<Vec<f64>>,
}

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.eigvals.len()
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        self.e_t.iter().for_each(|v| h.update(v.to_le_bytes()));
        if let Some(m) = &self.mean {
            m.iter().for_each(|v| h.update(v.to_le_bytes()));
        }
        hex::encode(&h.finalize()[..8])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        tensor_io::write_tensor(path, &Tensor::from_matrix(&self.e_t))?;
        tensor_io::write_json(
            &sidecar_path(path),
            &PcaSidecar {
                eigvals: self.eigvals.to_vec(),
                frames_used: self.frames_used,
                mean: self.mean.as_ref().map(|m| m.to_vec()),
            },
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let e_t = tensor_io::read_tensor(path)?.into_matrix()?;
        let side: PcaSidecar = tensor_io::read_json(&sidecar_path(path))?;
        if side.eigvals.len() != e_t.nrows() {
            return Err(Error::Contract(format!(
                "{}: basis and sidecar disagree",
                path.display()
            )));
        }
        Ok(PcaBasis {
            e_t,
            eigvals: Array1::from(side.eigvals),
            frames_used: side.frames_used,
            mean: side.mean.map(Array1::from),
        })
    }
}

/// Streams frames into the moment sums needed for [`PcaBasis`].
#[derive(Debug, Clone)]
pub struct PcaAccumulator {
    second: Array2<f64>,
    first: Array1<f64>,
    frames: usize,
    centered: bool,
}

impl PcaAccumulator {
    pub fn new(dim: usize, centered: bool) -> Self {
        PcaAccumulator {
            second: Array2::zeros((dim, dim)),
            first: Array1::zeros(dim),
            frames: 0,
            centered,
        }
    }

    pub fn add(&mut self, q: &LogAmplitudeSeq) -> Result<()> {
        if q.dim() != self.first.len() {
            return Err(Error::Contract(format!(
                "PCA: frames have {} channels, expected {}",
                q.dim(),
                self.first.len()
            )));
        }
        self.second = &self.second + &q.values.t().dot(&q.values);
        self.first = &self.first + &q.values.sum_axis(ndarray::Axis(0));
        self.frames += q.n_frames();
        Ok(())
    }

    pub fn finish(self) -> Result<PcaBasis> {
        let n = self.first.len();
        if self.frames == 0 {
            return Err(Error::EmptyInput("PCA needs at least one frame".into()));
        }
        if self.frames < n {
            log::warn!("fitting a {n}-channel PCA basis on only {} frames", self.frames);
        }
        let t = self.frames as f64;
        let mut r = self.second / t;
        let mean = if self.centered {
            let m = self.first / t;
            for i in 0..n {
                for j in 0..n {
                    r[[i, j]] -= m[i] * m[j];
                }
            }
            Some(m)
        } else {
            None
        };
        // exact symmetry for the eigensolver
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (r[[i, j]] + r[[j, i]]);
                r[[i, j]] = v;
                r[[j, i]] = v;
            }
        }
        let eig = linalg::canonical_eigen(&r, EigenOrder::Descending)?;
        Ok(PcaBasis {
            e_t: eig.vectors,
            eigvals: eig.values,
            frames_used: self.frames,
            mean,
        })
    }
}

/// `R_q = (1/T) Σ q_τ q_τᵀ` (no mean removal unless `centered`), eigenvectors by descending eigenvalue.
pub fn fit_pca_basis(qs: &LogAmplitudeSeq, centered: bool) -> Result<PcaBasis> {
    let mut acc = PcaAccumulator::new(qs.dim(), centered);
    acc.add(qs)?;
    acc.finish()
}

/// Spatial cepstrum: `d_τ = Eᵀ q_τ` truncated to `order`.
pub fn spatial_cepstrum(q: &LogAmplitudeSeq, p: &PcaBasis, order: usize) -> Result<FeatureSequence> {
    check_dims(q, p.dim(), order, "spatial cepstrum")?;
    let values = match &p.mean {
        Some(m) => project(&(&q.values - m), &p.e_t, order),
        None => project(&q.values, &p.e_t, order),
    };
    Ok(FeatureSequence {
        values,
        kind: FeatureKind::Sc,
        order,
        source: p.hash(),
    })
}

/// Classical cepstrum: `c_τ = Re(Z_Ω p_τ)` with the unitary IDFT, first `order` quefrencies.
pub fn cepstrum(p: &LogAmplitudeSeq, order: usize) -> Result<FeatureSequence> {
    let bins = p.dim();
    if order == 0 || order > bins {
        return Err(Error::Contract(format!("cepstrum: order {order} outside 1..={bins}")));
    }
    let scale = 1.0 / (bins as f64).sqrt();
    let table = Array2::from_shape_fn((order, bins), |(j, k)| {
        let e = (j * k) % bins;
        scale * (2.0 * PI * e as f64 / bins as f64).cos()
    });
    Ok(FeatureSequence {
        values: p.values.dot(&table.t()),
        kind: FeatureKind::Cep,
        order,
        source: format!("idft{bins}"),
    })
}

/// Sum of squared differences of element magnitudes. Blind to row sign flips.
pub fn basis_similarity(m1: &Array2<f64>, m2: &Array2<f64>) -> Result<f64> {
    if m1.dim() != m2.dim() {
        return Err(Error::Contract(format!(
            "basis similarity on shapes {:?} and {:?}",
            m1.dim(),
            m2.dim()
        )));
    }
    Ok(m1
        .iter()
        .zip(m2.iter())
        .map(|(a, b)| (a.abs() - b.abs()).powi(2))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{MicGraph, ring_idft_basis};
    use ndarray::array;
    use num_complex::Complex64;

    fn seq(rows: Vec<Vec<f64>>) -> LogAmplitudeSeq {
        let t = rows.len();
        let n = rows[0].len();
        LogAmplitudeSeq {
            values: Array2::from_shape_fn((t, n), |(i, j)| rows[i][j]),
        }
    }

    #[test]
    fn gc_two_mic() {
        let b = GraphBasis::for_graph(&MicGraph::new(2, vec![vec![0, 1]], 0.01).unwrap()).unwrap();
        let e = graph_cepstrum(&seq(vec![vec![2.0, 0.0]]), &b, 2).unwrap();
        let r2 = 2f64.sqrt();
        assert!((e.values[[0, 0]] - r2).abs() < 1e-12);
        assert!((e.values[[0, 1]] - r2).abs() < 1e-12);
        assert_eq!(e.kind, FeatureKind::Gc);
    }

    #[test]
    fn gc_constant_level() {
        let g = MicGraph::new(5, vec![vec![0, 1], vec![2, 3, 4]], 0.01).unwrap();
        let b = GraphBasis::for_graph(&g).unwrap();
        let e = graph_cepstrum(&seq(vec![vec![-1.5; 5]]), &b, 5).unwrap();
        assert!((e.values[[0, 0]] + 1.5 * 5f64.sqrt()).abs() < 1e-12);
        for k in 1..5 {
            assert!(e.values[[0, k]].abs() < 1e-12);
        }
    }

    #[test]
    fn gc_dimension_errors() {
        let b = GraphBasis::for_graph(&MicGraph::ring(4)).unwrap();
        assert!(matches!(
            graph_cepstrum(&seq(vec![vec![0.0; 3]]), &b, 2),
            Err(Error::Contract(_))
        ));
        assert!(graph_cepstrum(&seq(vec![vec![0.0; 4]]), &b, 5).is_err());
    }

    #[test]
    fn pca_single_axis_of_variation() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![0.0, (i as f64 - 9.5) * 0.3, 0.0]).collect();
        let p = fit_pca_basis(&seq(rows), false).unwrap();
        assert!((p.e_t[[0, 1]] - 1.0).abs() < 1e-12);
        assert!(p.e_t[[0, 0]].abs() < 1e-12 && p.e_t[[0, 2]].abs() < 1e-12);
        assert!(p.eigvals[0] > 0.0 && p.eigvals[1].abs() < 1e-12);
    }

    #[test]
    fn pca_reconstruction_and_order() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.3).sin(), (t * 0.7).cos() + 0.5, (t * 0.11).sin() * 2.0, 0.2]
            })
            .collect();
        let q = seq(rows);
        let p = fit_pca_basis(&q, false).unwrap();
        let r = q.values.t().dot(&q.values) / 50.0;
        let recon = p.e_t.t().dot(&Array2::from_diag(&p.eigvals)).dot(&p.e_t);
        assert!(linalg::max_abs_diff(&recon, &r) < 1e-9);
        assert!(linalg::orthonormality_error(&p.e_t) < 1e-10);
        for w in p.eigvals.to_vec().windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(p.eigvals.iter().all(|v| *v >= -1e-10));
    }

    #[test]
    fn pca_empty_input() {
        let q = LogAmplitudeSeq { values: Array2::zeros((0, 3)) };
        assert!(matches!(fit_pca_basis(&q, false), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn centered_pca_differs_from_plain() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![5.0 + (i as f64 * 0.9).sin(), 5.0 - (i as f64 * 0.9).sin() * 0.5])
            .collect();
        let q = seq(rows);
        let plain = fit_pca_basis(&q, false).unwrap();
        let centered = fit_pca_basis(&q, true).unwrap();
        // plain basis leads with the mean direction, centred with the variation direction
        assert!(plain.e_t[[0, 0]] > 0.5 && plain.e_t[[0, 1]] > 0.5);
        assert!(centered.e_t[[0, 0]] * centered.e_t[[0, 1]] < 0.0);
        let d = spatial_cepstrum(&q, &centered, 2).unwrap();
        assert!(d.values.column(0).sum().abs() < 1e-9);
    }

    #[test]
    fn sc_eigenvector_input_and_reconstruction() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.5).sin(), (t * 0.2).cos(), 0.3 * t.sqrt()]
            })
            .collect();
        let q = seq(rows);
        let p = fit_pca_basis(&q, false).unwrap();
        for j in 0..3 {
            let e = seq(vec![p.e_t.row(j).to_vec()]);
            let d = spatial_cepstrum(&e, &p, 3).unwrap();
            for k in 0..3 {
                let want = if k == j { 1.0 } else { 0.0 };
                assert!((d.values[[0, k]] - want).abs() < 1e-12);
            }
        }
        let d = spatial_cepstrum(&q, &p, 3).unwrap();
        let back = d.values.dot(&p.e_t);
        assert!(linalg::max_abs_diff(&back, &q.values) < 1e-10);
        let z = spatial_cepstrum(&seq(vec![vec![0.0; 3]]), &p, 2).unwrap();
        assert!(z.values.iter().all(|v| *v == 0.0));
        assert!(spatial_cepstrum(&seq(vec![vec![0.0; 2]]), &p, 2).is_err());
    }

    #[test]
    fn cepstrum_dc() {
        let c = cepstrum(&seq(vec![vec![0.7; 9]]), 5).unwrap();
        assert!((c.values[[0, 0]] - 0.7 * 3.0).abs() < 1e-12);
        for k in 1..5 {
            assert!(c.values[[0, k]].abs() < 1e-12);
        }
        assert!(cepstrum(&seq(vec![vec![0.7; 9]]), 10).is_err());
    }

    #[test]
    fn cepstrum_even_input_has_no_imaginary_part() {
        let n = 10;
        let p: Vec<f64> = (0..n).map(|k| {
            let m = k.min(n - k) as f64;
            (m * 0.7).cos() + 0.1 * m
        }).collect();
        let z = ring_idft_basis(n).unwrap();
        let full: Vec<Complex64> = (0..n)
            .map(|j| (0..n).map(|k| z[[j, k]] * p[k]).sum())
            .collect();
        assert!(full.iter().all(|c| c.im.abs() < 1e-10));
        let c = cepstrum(&seq(vec![p]), n).unwrap();
        for j in 0..n {
            assert!((c.values[[0, j]] - full[j].re).abs() < 1e-12);
        }
    }

    #[test]
    fn cepstrum_is_linear() {
        let a: Vec<f64> = (0..17).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..17).map(|i| (i as f64 * 1.1).cos() - 2.0).collect();
        let s: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let ca = cepstrum(&seq(vec![a]), 13).unwrap();
        let cb = cepstrum(&seq(vec![b]), 13).unwrap();
        let cs = cepstrum(&seq(vec![s]), 13).unwrap();
        assert!(linalg::max_abs_diff(&cs.values, &(&ca.values + &cb.values)) < 1e-10);
    }

    #[test]
    fn similarity_examples() {
        let m = array![[0.5, -0.5], [0.7, 0.1]];
        assert_eq!(basis_similarity(&m, &m).unwrap(), 0.0);
        assert_eq!(basis_similarity(&m, &(-&m)).unwrap(), 0.0);
        let other = array![[1.0, 0.0], [0.0, 1.0]];
        let r = basis_similarity(&m, &other).unwrap();
        assert!((r - basis_similarity(&other, &m).unwrap()).abs() < 1e-15);
        assert!((r - (0.25 + 0.25 + 0.49 + 0.81)).abs() < 1e-12);
        assert!(basis_similarity(&m, &array![[1.0]]).is_err());
    }

    #[test]
    fn feature_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let f = cepstrum(&seq(vec![vec![0.1, 0.2, 0.3], vec![0.0, -1.0, 2.0]]), 2).unwrap();
        f.save(&path, "clip_7").unwrap();
        let (back, side) = FeatureSequence::load(&path).unwrap();
        assert_eq!(back, f);
        assert_eq!(side.clip_id, "clip_7");
        assert!(f.to_csv().starts_with("CEP0,CEP1\n"));
    }

    #[test]
    fn frame_normalization() {
        let mut f = cepstrum(&seq(vec![vec![0.3, 1.2, -0.4, 2.0]]), 4).unwrap();
        f.normalize_frames();
        let row = f.values.row(0);
        assert!(row.sum().abs() < 1e-12);
        assert!((row.iter().map(|v| v * v).sum::<f64>() / 4.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("gc".parse::<FeatureKind>().unwrap(), FeatureKind::Gc);
        assert_eq!(FeatureKind::Cep.to_string(), "CEP");
        assert!("mfcc".parse::<FeatureKind>().is_err());
        assert_eq!(serde_json::to_string(&FeatureKind::Sc).unwrap(), "\"SC\"");
    }
}
