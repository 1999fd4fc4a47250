//! Dense symmetric eigendecomposition for the small matrices this crate deals
//! with (channel counts up to a few dozen).
//!
//! The solver is a cyclic Jacobi iteration. On top of the raw decomposition,
//! [`canonical_eigen`] applies a deterministic convention so that two
//! decompositions of the same matrix produce identical bases:
//!
//! 1. eigenpairs are sorted by eigenvalue (ascending or descending);
//! 2. eigenvalues closer than a clustering tolerance form one eigenspace,
//!    whose basis is rebuilt by Gram-Schmidt over the columns of the
//!    eigenspace projector, taken in channel-index order;
//! 3. each eigenvector is flipped so that its largest-magnitude entry is
//!    positive (lowest index wins a tie);
//! 4. inside an eigenspace, vectors are stably sorted by the index of that
//!    largest-magnitude entry.
//!
//! Step 2 makes the basis a function of the eigenspace alone, independent of
//! the rotation the iterative solver happened to converge to. For graph
//! Laplacians it also keeps eigenvectors of separate microphone groups from
//! being mixed when the groups share an eigenvalue.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

/// Off-diagonal convergence threshold, relative to the Frobenius norm.
const JACOBI_REL_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
/// Entries within this distance of the maximum magnitude count as tied.
const SIGN_TIE_TOL: f64 = 1e-12;
/// Relative gap under which neighbouring eigenvalues are treated as one eigenspace.
pub const CLUSTER_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenOrder {
    Ascending,
    Descending,
}

/// Eigenpairs of a symmetric matrix. `vectors` holds one eigenvector per row.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

impl SymmetricEigen {
    /// `Vᵀ diag(λ) V` with eigenvectors as rows of `V`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let n = self.values.len();
        let mut out = Array2::<f64>::zeros((n, n));
        for (k, row) in self.vectors.axis_iter(Axis(0)).enumerate() {
            let lambda = self.values[k];
            for i in 0..n {
                for j in 0..n {
                    out[[i, j]] += lambda * row[i] * row[j];
                }
            }
        }
        out
    }
}

pub fn max_asymmetry(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst
}

/// Largest absolute entry of `U Uᵀ − I`.
pub fn orthonormality_error(u: &Array2<f64>) -> f64 {
    let g = u.dot(&u.t());
    let mut worst = 0.0f64;
    for ((i, j), v) in g.indexed_iter() {
        let target = if i == j { 1.0 } else { 0.0 };
        worst = worst.max((v - target).abs());
    }
    worst
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn check_square_symmetric(a: &Array2<f64>, sym_tol: f64) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Contract(format!(
            "matrix is not square: {} x {}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("matrix has non-finite entries".into()));
    }
    let asym = max_asymmetry(a);
    if asym > sym_tol {
        return Err(Error::Contract(format!(
            "matrix is not symmetric (max |a_ij - a_ji| = {asym:e})"
        )));
    }
    Ok(())
}

/// Raw cyclic Jacobi decomposition. Eigenpairs come back unsorted, eigenvectors as rows.
pub fn jacobi_eigen(a: &Array2<f64>) -> Result<SymmetricEigen> {
    check_square_symmetric(a, 1e-12)?;
    let n = a.nrows();
    let mut m = a.clone();
    // symmetrize exactly so round-off in the input cannot bias the rotations
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = avg;
            m[[j, i]] = avg;
        }
    }
    let mut v = Array2::<f64>::eye(n);
    let frob = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let threshold = JACOBI_REL_TOL * frob;

    let off_norm = |m: &Array2<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[[i, j]] * m[[i, j]];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = frob == 0.0;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged || off_norm(&m) <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[[k, p]];
                    let akq = m[[k, q]];
                    m[[k, p]] = c * akp - s * akq;
                    m[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[[p, k]];
                    let aqk = m[[q, k]];
                    m[[p, k]] = c * apk - s * aqk;
                    m[[q, k]] = s * apk + c * aqk;
                }
                m[[p, q]] = 0.0;
                m[[q, p]] = 0.0;
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && off_norm(&m) > threshold {
        return Err(Error::Contract(
            "Jacobi eigensolver did not converge".to_string(),
        ));
    }
    let values = Array1::from_iter((0..n).map(|i| m[[i, i]]));
    Ok(SymmetricEigen {
        values,
        vectors: v.reversed_axes(),
    })
}

/// Index of the largest-magnitude entry, lowest index on ties.
pub fn dominant_index(v: &[f64]) -> usize {
    let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    v.iter()
        .position(|x| x.abs() >= peak - SIGN_TIE_TOL)
        .unwrap_or(0)
}

/// Flips `v` in place so that its dominant entry is positive.
pub fn apply_sign_convention(v: &mut [f64]) {
    let i = dominant_index(v);
    if v[i] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Groups consecutive sorted eigenvalues whose gap is at most `tol`.
pub fn cluster_sorted(values: &[f64], tol: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || (values[i] - values[i - 1]).abs() > tol {
            if i > start {
                out.push(start..i);
            }
            start = i;
        }
    }
    out
}

/// Orthonormal basis of the span of `rows`, built by Gram-Schmidt over the
/// projector columns in index order.
fn canonical_subspace_basis(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let rank = rows.len();
    let n = rows[0].len();
    let mut proj = vec![vec![0.0; n]; n];
    for r in rows {
        for i in 0..n {
            for j in 0..n {
                proj[i][j] += r[i] * r[j];
            }
        }
    }
    // some column always clears this bound while rank remains
    let accept = 0.5 / (n as f64).sqrt();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rank);
    for col in 0..n {
        if basis.len() == rank {
            break;
        }
        let mut w: Vec<f64> = (0..n).map(|i| proj[i][col]).collect();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = b.iter().zip(&w).map(|(x, y)| x * y).sum();
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > accept {
            w.iter_mut().for_each(|x| *x /= norm);
            basis.push(w);
        }
    }
    if basis.len() < rank {
        return rows.to_vec();
    }
    basis
}

/// Eigendecomposition with the deterministic ordering, eigenspace and sign
/// conventions described in the module docs.
pub fn canonical_eigen(a: &Array2<f64>, order: EigenOrder) -> Result<SymmetricEigen> {
    let raw = jacobi_eigen(a)?;
    let n = raw.values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    match order {
        EigenOrder::Ascending => idx.sort_by(|&i, &j| raw.values[i].total_cmp(&raw.values[j])),
        EigenOrder::Descending => idx.sort_by(|&i, &j| raw.values[j].total_cmp(&raw.values[i])),
    }
    let sorted_vals: Vec<f64> = idx.iter().map(|&i| raw.values[i]).collect();
    let sorted_vecs: Vec<Vec<f64>> = idx.iter().map(|&i| raw.vectors.row(i).to_vec()).collect();

    let scale = sorted_vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let clusters = cluster_sorted(&sorted_vals, CLUSTER_REL_TOL * scale);

    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for range in clusters {
        let mut block: Vec<(Vec<f64>, f64)> = if range.len() == 1 {
            let mut v = sorted_vecs[range.start].clone();
            apply_sign_convention(&mut v);
            vec![(v, sorted_vals[range.start])]
        } else {
            canonical_subspace_basis(&sorted_vecs[range.clone()])
                .into_iter()
                .map(|mut v| {
                    apply_sign_convention(&mut v);
                    let rq = rayleigh_quotient(a, &v);
                    (v, rq)
                })
                .collect()
        };
        block.sort_by_key(|(v, _)| dominant_index(v));
        // one shared value per eigenspace keeps the ordering monotone
        let shared = block.iter().map(|(_, l)| l).sum::<f64>() / block.len() as f64;
        for (v, _) in block {
            values.push(shared);
            vectors.push(v);
        }
    }

    let mut mat = Array2::<f64>::zeros((n, n));
    for (k, v) in vectors.iter().enumerate() {
        for (j, x) in v.iter().enumerate() {
            mat[[k, j]] = *x;
        }
    }
    Ok(SymmetricEigen {
        values: Array1::from(values),
        vectors: mat,
    })
}

fn rayleigh_quotient(a: &Array2<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += a[[i, j]] * v[j];
        }
        s += v[i] * row;
    }
    s
}
