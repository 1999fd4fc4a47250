//! Microphone connection graphs and their Laplacian eigenbasis.
//!
//! Channels inside one group (one device, or mics that share a clock) are
//! joined with weight 1. Every other pair gets the weak weight `alpha`, since
//! sound still reaches all microphones. Rows of the resulting
//! [`GraphBasis::u`] are the eigenvectors of `L = D − A` in ascending
//! eigenvalue order, so `U q` is the inverse graph Fourier transform of a
//! channel vector `q`.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{self, EigenOrder};
use crate::tensor_io::{self, Tensor};

/// Connectivity of a set of `n` microphones. Serialized as the graph config
/// JSON `{n, groups, extra_edges, alpha}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicGraph {
    pub n: usize,
    #[serde(default)]
    pub groups: Vec<Vec<usize>>,
    #[serde(default)]
    pub extra_edges: Vec<[usize; 2]>,
    pub alpha: f64,
}

impl MicGraph {
    pub fn new(n: usize, groups: Vec<Vec<usize>>, alpha: f64) -> Result<Self> {
        let g = MicGraph {
            n,
            groups,
            extra_edges: Vec::new(),
            alpha,
        };
        g.validate()?;
        Ok(g)
    }

    /// Cycle `0 - 1 - … - n-1 - 0` with no weak connections.
    pub fn ring(n: usize) -> Self {
        MicGraph {
            n,
            groups: Vec::new(),
            extra_edges: (0..n).map(|i| [i, (i + 1) % n]).collect(),
            alpha: 0.0,
        }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        MicGraph {
            alpha,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("graph must have at least one channel".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        let mut owner = vec![None; self.n];
        for (gi, group) in self.groups.iter().enumerate() {
            for &ch in group {
                if ch >= self.n {
                    return Err(Error::Config(format!(
                        "group {gi} references channel {ch} but n = {}",
                        self.n
                    )));
                }
                if let Some(prev) = owner[ch] {
                    return Err(Error::Config(format!(
                        "channel {ch} appears in groups {prev} and {gi}"
                    )));
                }
                owner[ch] = Some(gi);
            }
        }
        for &[i, j] in &self.extra_edges {
            if i >= self.n || j >= self.n {
                return Err(Error::Config(format!("edge ({i}, {j}) out of range")));
            }
            if i == j {
                return Err(Error::Config(format!("self loop on channel {i}")));
            }
        }
        Ok(())
    }

    /// Group index of every channel, `None` for ungrouped channels.
    pub fn membership(&self) -> Vec<Option<usize>> {
        let mut owner = vec![None; self.n];
        for (gi, group) in self.groups.iter().enumerate() {
            for &ch in group {
                if ch < self.n {
                    owner[ch] = Some(gi);
                }
            }
        }
        owner
    }

    /// Short content digest, stable across runs and platforms.
    pub fn hash(&self) -> String {
        let mut groups: Vec<Vec<usize>> = self
            .groups
            .iter()
            .map(|g| {
                let mut g = g.clone();
                g.sort_unstable();
                g
            })
            .collect();
        groups.sort();
        let mut edges: Vec<(usize, usize)> = self
            .extra_edges
            .iter()
            .map(|&[i, j]| (i.min(j), i.max(j)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        let canon = format!(
            "n={};alpha={:016x};groups={:?};edges={:?}",
            self.n,
            self.alpha.to_bits(),
            groups,
            edges
        );
        let digest = Sha256::digest(canon.as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn load(path: &Path) -> Result<Self> {
        let g: MicGraph = tensor_io::read_json(path)?;
        g.validate()?;
        Ok(g)
    }
}

/// Weighted adjacency: 1 between connected channels, `alpha` otherwise, zero diagonal.
pub fn adjacency(g: &MicGraph) -> Result<Array2<f64>> {
    g.validate()?;
    let n = g.n;
    let mut a = Array2::<f64>::from_elem((n, n), g.alpha);
    for i in 0..n {
        a[[i, i]] = 0.0;
    }
    for group in &g.groups {
        for &i in group {
            for &j in group {
                if i != j {
                    a[[i, j]] = 1.0;
                }
            }
        }
    }
    for &[i, j] in &g.extra_edges {
        a[[i, j]] = 1.0;
        a[[j, i]] = 1.0;
    }
    Ok(a)
}

/// Diagonal degree matrix of row sums.
pub fn degree(a: &Array2<f64>) -> Array2<f64> {
    Array2::from_diag(&a.sum_axis(ndarray::Axis(1)))
}

/// `L = D − A`.
pub fn laplacian(g: &MicGraph) -> Result<Array2<f64>> {
    let a = adjacency(g)?;
    Ok(degree(&a) - &a)
}

/// Orthonormal IGFT matrix of a graph Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBasis {
    /// Eigenvectors of `L` as rows, ascending eigenvalue.
    pub u: Array2<f64>,
    pub lambda: Array1<f64>,
    pub graph_hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct BasisSidecar {
    graph_hash: String,
    lambda: Vec<f64>,
}

impl GraphBasis {
    pub fn for_graph(g: &MicGraph) -> Result<Self> {
        let mut b = eigenbasis(&laplacian(g)?)?;
        b.graph_hash = g.hash();
        Ok(b)
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    /// Writes `<path>` (binary tensor of `U`) and `<path>.json` with eigenvalues and graph hash.
    pub fn save(&self, path: &Path) -> Result<()> {
        tensor_io::write_tensor(path, &Tensor::from_matrix(&self.u))?;
        tensor_io::write_json(
            &sidecar_path(path),
            &BasisSidecar {
                graph_hash: self.graph_hash.clone(),
                lambda: self.lambda.to_vec(),
            },
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let u = tensor_io::read_tensor(path)?.into_matrix()?;
        let side: BasisSidecar = tensor_io::read_json(&sidecar_path(path))?;
        if side.lambda.len() != u.nrows() || u.nrows() != u.ncols() {
            return Err(Error::Contract(format!(
                "basis {} is inconsistent with its sidecar",
                path.display()
            )));
        }
        Ok(GraphBasis {
            u,
            lambda: Array1::from(side.lambda),
            graph_hash: side.graph_hash,
        })
    }
}

pub(crate) fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Eigendecomposition `L = Uᵀ diag(λ) U` under the crate's deterministic
/// conventions (see [`crate::linalg`]).
pub fn eigenbasis(l: &Array2<f64>) -> Result<GraphBasis> {
    let asym = linalg::max_asymmetry(l);
    if asym > 1e-12 {
        return Err(Error::Contract(format!(
            "Laplacian is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let eig = linalg::canonical_eigen(l, EigenOrder::Ascending)?;
    let digest = Sha256::digest(
        l.iter()
            .flat_map(|v| v.to_le_bytes())
            .collect::<Vec<u8>>(),
    );
    Ok(GraphBasis {
        u: eig.vectors,
        lambda: eig.values,
        graph_hash: hex::encode(&digest[..8]),
    })
}

/// Unitary IDFT matrix `Z(j, k) = ζ^{jk} / √N`, `ζ = e^{j2π/N}`.
pub fn ring_idft_basis(n: usize) -> Result<Array2<Complex64>> {
    if n < 2 {
        return Err(Error::Contract(format!("ring needs n >= 2, got {n}")));
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok(Array2::from_shape_fn((n, n), |(j, k)| {
        // reduce the exponent first so large N keeps full phase accuracy
        let e = (j * k) % n;
        Complex64::from_polar(scale, 2.0 * PI * e as f64 / n as f64)
    }))
}

/// Ring Laplacian eigenvalue for DFT index `k`.
pub fn ring_eigenvalue(n: usize, k: usize) -> f64 {
    2.0 - 2.0 * (2.0 * PI * k as f64 / n as f64).cos()
}

/// Orthogonal projectors onto the eigenspaces of `b`, clustering eigenvalues
/// whose consecutive gap is within `tol`.
pub fn eigenspace_projectors(b: &GraphBasis, tol: f64) -> Vec<Array2<f64>> {
    let n = b.dim();
    linalg::cluster_sorted(b.lambda.as_slice().unwrap_or(&b.lambda.to_vec()), tol)
        .into_iter()
        .map(|range| {
            let mut p = Array2::<f64>::zeros((n, n));
            for k in range {
                let row = b.u.row(k);
                for i in 0..n {
                    for j in 0..n {
                        p[[i, j]] += row[i] * row[j];
                    }
                }
            }
            p
        })
        .collect()
}

/// Eigenspace projectors built from the columns of the IDFT matrix, grouped by
/// `λ_k = 2 − 2cos(2πk/N)` in ascending order. Returns `(λ, P)` pairs; every
/// `P` is real because conjugate columns share an eigenvalue.
pub fn ring_idft_projectors(n: usize, tol: f64) -> Result<Vec<(f64, Array2<f64>)>> {
    let z = ring_idft_basis(n)?;
    let mut ks: Vec<usize> = (0..n).collect();
    ks.sort_by(|&a, &b| ring_eigenvalue(n, a).total_cmp(&ring_eigenvalue(n, b)));
    let vals: Vec<f64> = ks.iter().map(|&k| ring_eigenvalue(n, k)).collect();
    let mut out = Vec::new();
    for range in linalg::cluster_sorted(&vals, tol) {
        let mut p = Array2::<Complex64>::zeros((n, n));
        for &k in &ks[range.clone()] {
            let col = z.column(k);
            for i in 0..n {
                for j in 0..n {
                    p[[i, j]] += col[i] * col[j].conj();
                }
            }
        }
        let max_im = p.iter().fold(0.0f64, |m, c| m.max(c.im.abs()));
        if max_im > 1e-9 {
            return Err(Error::Contract(format!(
                "IDFT projector has imaginary part {max_im:e}"
            )));
        }
        out.push((vals[range.start], p.mapv(|c| c.re)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, orthonormality_error};
    use ndarray::array;

    fn close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) -> bool {
        max_abs_diff(a, b) <= tol
    }

    fn three_mic() -> MicGraph {
        MicGraph::new(3, vec![vec![0, 1]], 0.01).unwrap()
    }

    #[test]
    fn adjacency_three_mic_example() {
        let a = adjacency(&three_mic()).unwrap();
        let expect = array![[0.0, 1.0, 0.01], [1.0, 0.0, 0.01], [0.01, 0.01, 0.0]];
        assert!(close(&a, &expect, 0.0));
    }

    #[test]
    fn adjacency_alpha_one_is_complete() {
        let g = MicGraph::new(4, vec![vec![0, 1]], 1.0).unwrap();
        let a = adjacency(&g).unwrap();
        let expect = Array2::from_shape_fn((4, 4), |(i, j)| if i == j { 0.0 } else { 1.0 });
        assert!(close(&a, &expect, 0.0));
    }

    #[test]
    fn adjacency_empty_graph() {
        let g = MicGraph::new(3, vec![], 0.0).unwrap();
        assert!(adjacency(&g).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn duplicate_channel_is_config_error() {
        let r = MicGraph::new(4, vec![vec![0, 1], vec![1, 2]], 0.01);
        assert!(matches!(r, Err(Error::Config(_))));
        assert!(MicGraph::new(3, vec![vec![3]], 0.0).is_err());
        assert!(MicGraph::new(3, vec![], 1.5).is_err());
    }

    #[test]
    fn degree_examples() {
        let d = degree(&adjacency(&three_mic()).unwrap());
        assert!(close(&d, &Array2::from_diag(&array![1.01, 1.01, 0.02]), 1e-15));
        let k4 = adjacency(&MicGraph::new(4, vec![], 1.0).unwrap()).unwrap();
        assert!(close(&degree(&k4), &Array2::from_diag(&array![3.0, 3.0, 3.0, 3.0]), 0.0));
        assert!(degree(&Array2::zeros((2, 2))).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn laplacian_examples() {
        let two = MicGraph::new(2, vec![vec![0, 1]], 0.3).unwrap();
        assert!(close(&laplacian(&two).unwrap(), &array![[1.0, -1.0], [-1.0, 1.0]], 0.0));

        let l3 = laplacian(&three_mic()).unwrap();
        let expect = array![
            [1.01, -1.0, -0.01],
            [-1.0, 1.01, -0.01],
            [-0.01, -0.01, 0.02]
        ];
        assert!(close(&l3, &expect, 1e-15));

        let ring = laplacian(&MicGraph::ring(6)).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let d = (i as isize - j as isize).rem_euclid(6);
                let want = match d {
                    0 => 2.0,
                    1 | 5 => -1.0,
                    _ => 0.0,
                };
                assert_eq!(ring[[i, j]], want);
            }
        }
    }

    #[test]
    fn eigenbasis_two_mic() {
        let b = eigenbasis(&array![[1.0, -1.0], [-1.0, 1.0]]).unwrap();
        assert!(b.lambda[0].abs() < 1e-14 && (b.lambda[1] - 2.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(&b.u, &array![[h, h], [h, -h]], 1e-14));
    }

    #[test]
    fn eigenbasis_ring4_spectrum() {
        let b = GraphBasis::for_graph(&MicGraph::ring(4)).unwrap();
        for (got, want) in b.lambda.iter().zip([0.0, 2.0, 2.0, 4.0]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert!(orthonormality_error(&b.u) < 1e-12);
    }

    #[test]
    fn eigenbasis_rejects_asymmetric() {
        let r = eigenbasis(&array![[1.0, -1.0], [-0.5, 1.0]]);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn leading_vector_constant_on_connected_graph() {
        let g = MicGraph::new(5, vec![vec![0, 1, 2], vec![3, 4]], 0.01).unwrap();
        let b = GraphBasis::for_graph(&g).unwrap();
        let c = 1.0 / 5f64.sqrt();
        assert!(b.u.row(0).iter().all(|v| (v - c).abs() < 1e-12));
    }

    #[test]
    fn disconnected_graph_null_space() {
        let g = MicGraph::new(5, vec![vec![0, 1, 2], vec![3, 4]], 0.0).unwrap();
        let b = GraphBasis::for_graph(&g).unwrap();
        assert!(b.lambda[0].abs() < 1e-12 && b.lambda[1].abs() < 1e-12);
        assert!(b.lambda[2] > 1.0);
        let p = eigenspace_projectors(&b, 1e-8);
        assert_eq!(p[0].diag().sum().round() as usize, 2);
    }

    #[test]
    fn idft_small_cases() {
        let z2 = ring_idft_basis(2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let want = [[h, h], [h, -h]];
        for j in 0..2 {
            for k in 0..2 {
                assert!((z2[[j, k]] - Complex64::new(want[j][k], 0.0)).norm() < 1e-15);
            }
        }
        let z4 = ring_idft_basis(4).unwrap();
        let row1 = [
            Complex64::new(0.5, 0.0),
            Complex64::new(0.0, 0.5),
            Complex64::new(-0.5, 0.0),
            Complex64::new(0.0, -0.5),
        ];
        for k in 0..4 {
            assert!((z4[[1, k]] - row1[k]).norm() < 1e-15);
        }
        assert!(ring_idft_basis(1).is_err());
    }

    #[test]
    fn idft_is_unitary() {
        for n in 2..20 {
            let z = ring_idft_basis(n).unwrap();
            let zzh = z.dot(&z.t().mapv(|c| c.conj()));
            for ((i, j), v) in zzh.indexed_iter() {
                let t = if i == j { 1.0 } else { 0.0 };
                assert!((v - Complex64::new(t, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn projector_ranks_ring4() {
        let b = GraphBasis::for_graph(&MicGraph::ring(4)).unwrap();
        let ps = eigenspace_projectors(&b, 1e-8);
        let ranks: Vec<usize> = ps.iter().map(|p| p.diag().sum().round() as usize).collect();
        assert_eq!(ranks, vec![1, 2, 1]);
        let mut total = Array2::<f64>::zeros((4, 4));
        for p in &ps {
            assert!(close(&p.dot(p), p, 1e-10));
            total = total + p;
        }
        assert!(close(&total, &Array2::eye(4), 1e-10));
    }

    #[test]
    fn distinct_eigenvalues_give_rank_one_projectors() {
        let g = MicGraph::new(3, vec![vec![0, 1]], 0.01).unwrap();
        let b = GraphBasis::for_graph(&g).unwrap();
        let ps = eigenspace_projectors(&b, 1e-8);
        assert_eq!(ps.len(), 3);
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gc.bin");
        let b = GraphBasis::for_graph(&three_mic()).unwrap();
        b.save(&path).unwrap();
        assert_eq!(GraphBasis::load(&path).unwrap(), b);
    }

    #[test]
    fn hash_ignores_group_order() {
        let a = MicGraph::new(4, vec![vec![0, 1], vec![2, 3]], 0.01).unwrap();
        let b = MicGraph::new(4, vec![vec![3, 2], vec![1, 0]], 0.01).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), a.with_alpha(0.1).hash());
    }
}
