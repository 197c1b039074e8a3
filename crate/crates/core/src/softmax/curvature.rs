//! Numerical check of the `d×d` log-determinant lower bound on the
//! `dL×dL` Hessian.
//!
//! `diag(p) − ppᵀ` always annihilates `1_L`, so its smallest eigenvalue is
//! zero. The curvature constant `γ` is therefore taken on the subspace
//! orthogonal to `1_L`, and the Hessian's log-determinant on the matching
//! complement of its `1_L ⊗ v` null space.

use nalgebra::DMatrix;

use super::{nll_hessian_dense, softmax_in_place, ParamMatrix, SubsetData, MAX_DENSE_PARAMS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureReport {
    /// Smallest eigenvalue of `diag(p) − ppᵀ` on `1⊥`, minimized over positions.
    pub gamma: f64,
    /// Log-determinant of the Hessian restricted to `1⊥ ⊗ R^d`.
    pub lhs: f64,
    /// `d · log det((γ/n) Σ x xᵀ + floor·I)`.
    pub rhs: f64,
    /// `(L − 1) · log det((γ/n) Σ x xᵀ)`, the bound the Kronecker structure
    /// gives on the restricted subspace.
    pub restricted_rhs: f64,
    pub holds: bool,
    pub reason: Option<String>,
}

/// Orthonormal basis of the complement of `1_L` (Helmert contrasts), `L×(L−1)`.
fn helmert_basis(l: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(l, l - 1);
    for k in 1..l {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for r in 0..k {
            q[(r, k - 1)] = 1.0 / norm;
        }
        q[(k, k - 1)] = -(k as f64) / norm;
    }
    q
}

/// Smallest eigenvalue of `diag(p) − ppᵀ` restricted to `1⊥`.
pub fn restricted_min_eigenvalue(p: &[f64]) -> f64 {
    let l = p.len();
    if l < 2 {
        return 0.0;
    }
    let pv = DMatrix::from_column_slice(l, 1, p);
    let a = DMatrix::from_diagonal(&pv.column(0).into_owned()) - &pv * pv.transpose();
    let q = helmert_basis(l);
    (q.transpose() * a * q).symmetric_eigenvalues().min()
}

/// `−∞` when the matrix is singular to working precision.
fn logdet_spd(m: DMatrix<f64>) -> f64 {
    let eig = m.symmetric_eigenvalues();
    let scale = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let cutoff = scale * eig.len() as f64 * f64::EPSILON;
    if eig.iter().any(|&v| v <= cutoff) {
        f64::NEG_INFINITY
    } else {
        eig.iter().map(|v| v.ln()).sum()
    }
}

pub fn curvature_diagnostic(
    theta: &ParamMatrix,
    data: &SubsetData<'_>,
    sigma_floor: f64,
) -> Result<CurvatureReport> {
    let (d, l) = (theta.dim(), theta.vocab_size());
    if d * l > MAX_DENSE_PARAMS {
        return Err(Error::UnsupportedSize(format!(
            "diagnostic needs d·L <= {MAX_DENSE_PARAMS}, got {}",
            d * l
        )));
    }
    if l < 2 {
        return Err(Error::invalid("diagnostic needs at least two tokens"));
    }
    if sigma_floor < 0.0 {
        return Err(Error::invalid("sigma_floor must be non-negative"));
    }
    let hessian = nll_hessian_dense(theta, data)?;
    let n = data.len() as f64;

    let mut gamma = f64::INFINITY;
    let mut scatter = DMatrix::<f64>::zeros(d, d);
    let mut p = vec![0.0; l];
    for (_, x) in data.pairs() {
        theta.logits_into(&x, &mut p);
        softmax_in_place(&mut p);
        gamma = gamma.min(restricted_min_eigenvalue(&p));
        let xv = DMatrix::from_column_slice(d, 1, &x);
        scatter += &xv * xv.transpose();
    }

    // Q ⊗ I_d in the token-major, feature-minor index order.
    let q = helmert_basis(l);
    let mut basis = DMatrix::zeros(d * l, d * (l - 1));
    for t in 0..l {
        for k in 0..l - 1 {
            for a in 0..d {
                basis[(t * d + a, k * d + a)] = q[(t, k)];
            }
        }
    }
    let lhs = logdet_spd(basis.transpose() * hessian * &basis);

    let g = &scatter * (gamma.max(0.0) / n);
    let rhs = d as f64 * logdet_spd(&g + DMatrix::identity(d, d) * sigma_floor);
    let restricted_rhs = (l - 1) as f64 * logdet_spd(g);

    let (holds, reason) = if !(gamma > 0.0) {
        (false, Some(format!("restricted curvature gamma = {gamma} is not positive")))
    } else if lhs >= rhs {
        (true, None)
    } else {
        (false, Some(format!("lhs {lhs} < rhs {rhs}")))
    };
    Ok(CurvatureReport {
        gamma,
        lhs,
        rhs,
        restricted_rhs,
        holds,
        reason,
    })
}
