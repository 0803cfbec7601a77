//! Small dense helpers shared across the crate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Settings for power iteration on `AᵀA`.
#[derive(Debug, Clone, Copy)]
pub struct PowerIteration {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// Deterministic, non-degenerate start vector for power iteration.
pub fn start_vector(dim: usize) -> DVector<f64> {
    // golden-ratio sequence: no sign pattern aligned with block structure
    let v = DVector::from_fn(dim, |i, _| {
        let x = ((i as f64 + 1.0) * 0.618_033_988_749_894_8).fract();
        0.5 + x
    });
    let n = v.norm();
    v / n
}

impl PowerIteration {
    /// Largest singular value of the linear operator given by `apply` and its
    /// transpose `apply_t`, acting on vectors of length `dim`.
    pub fn spectral_norm_op<F, G>(&self, dim: usize, apply: F, apply_t: G) -> f64
    where
        F: Fn(&DVector<f64>) -> DVector<f64>,
        G: Fn(&DVector<f64>) -> DVector<f64>,
    {
        if dim == 0 {
            return 0.0;
        }
        let mut v = start_vector(dim);
        let mut sigma_sq = 0.0;
        for _ in 0..self.max_iter {
            let w = apply_t(&apply(&v));
            let lambda = w.norm();
            if lambda == 0.0 {
                return 0.0;
            }
            v = w / lambda;
            let done = (lambda - sigma_sq).abs() <= self.tol * lambda;
            sigma_sq = lambda;
            if done {
                break;
            }
        }
        sigma_sq.sqrt()
    }

    pub fn spectral_norm(&self, a: &DMatrix<f64>) -> f64 {
        self.spectral_norm_op(a.ncols(), |v| a * v, |w| a.tr_mul(w))
    }
}

/// `‖A‖₂` with default power-iteration settings.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    PowerIteration::default().spectral_norm(a)
}

pub fn ensure_finite_matrix(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn ensure_finite_vector(v: &DVector<f64>, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn symmetric_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Numerical rank from the diagonal of the R factor of a Householder QR.
pub fn qr_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let r = m.clone().qr().r();
    let diag: Vec<f64> = (0..r.nrows().min(r.ncols()))
        .map(|i| r[(i, i)].abs())
        .collect();
    let scale = diag.iter().copied().fold(0.0, f64::max);
    diag.iter()
        .filter(|d| **d > rel_tol * scale.max(f64::MIN_POSITIVE))
        .count()
}
