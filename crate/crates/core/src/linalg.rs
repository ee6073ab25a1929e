//! Regularized Cholesky factorization of Gram matrices.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Number of ×10 jitter escalations tried after the plain noise-regularized attempt.
pub const JITTER_ESCALATIONS: u32 = 10;

/// Smallest admissible squared pivot relative to the largest diagonal entry.
const PIVOT_FLOOR: f64 = 1e-14;

/// Lower-triangular Cholesky factor of `K + (noise + jitter) I`.
#[derive(Clone, Debug)]
pub struct Factor {
    chol: Cholesky<f64, Dyn>,
    /// Extra diagonal added on top of the noise variance (0 when none was needed).
    pub jitter: f64,
}

impl Factor {
    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// Solves `L v = b` (forward substitution only).
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut v = b.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut v);
        v
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// `log det A = 2 Σ log L_ii`.
    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }
}

fn try_factor(gram: &DMatrix<f64>, diag_add: f64) -> Option<Cholesky<f64, Dyn>> {
    let mut a = gram.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += diag_add;
    }
    let max_diag = (0..a.nrows()).map(|i| a[(i, i)]).fold(0.0_f64, f64::max);
    let chol = Cholesky::new(a)?;
    let l = chol.l_dirty();
    let ok = (0..l.nrows()).all(|i| {
        let p = l[(i, i)];
        p.is_finite() && p * p >= PIVOT_FLOOR * max_diag
    });
    ok.then_some(chol)
}

/// Factorizes `gram + noise I`, escalating an extra jitter ×10 up to
/// [`JITTER_ESCALATIONS`] times when the matrix is not numerically positive definite.
pub fn factorize(gram: &DMatrix<f64>, noise: f64) -> Result<Factor> {
    assert!(gram.is_square());
    if gram.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalDegeneracy { jitter: 0.0 });
    }
    if let Some(chol) = try_factor(gram, noise) {
        return Ok(Factor { chol, jitter: 0.0 });
    }
    let n = gram.nrows().max(1);
    let mean_diag = (0..gram.nrows()).map(|i| gram[(i, i)].abs()).sum::<f64>() / n as f64;
    let base = noise.max(1e-10 * mean_diag.max(f64::MIN_POSITIVE));
    let mut jitter = base;
    for _ in 0..JITTER_ESCALATIONS {
        jitter *= 10.0;
        if let Some(chol) = try_factor(gram, noise + jitter) {
            return Ok(Factor { chol, jitter });
        }
    }
    Err(Error::NumericalDegeneracy { jitter })
}
