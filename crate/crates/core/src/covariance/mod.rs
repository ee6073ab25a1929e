//! Covariance functions.
//!
//! All kernels expose the same surface: pointwise evaluation, Gram matrices,
//! the contraction `Σ_ij W_ij ∂K_ij/∂θ` used by the marginal-likelihood
//! gradient, and (where available) gradients with respect to the first input.

mod cylindrical;
mod informative;
mod stationary;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use cylindrical::{cylindrical_cov, kumaraswamy_cdf, Cylindrical, CylindricalParams};
pub use informative::{
    informative_cov, prior_covariance, shaping_phi, warp_factor, warp_input, AnchorSet,
    Informative, ShapingConfig,
};
pub use stationary::{matern52, Matern52};

/// Unit-variance Matérn-5/2 profile as a function of the squared distance.
///
/// Returns `(M(ρ), dM/d(ρ²))`; the derivative is finite at ρ = 0.
#[inline]
pub fn matern52_profile(r2: f64) -> (f64, f64) {
    let r = r2.max(0.0).sqrt();
    let s5r = 5.0_f64.sqrt() * r;
    let e = (-s5r).exp();
    let m = (1.0 + s5r + 5.0 / 3.0 * r2) * e;
    let g = -5.0 / 6.0 * (1.0 + s5r) * e;
    (m, g)
}

/// Gaussian shaping kernel `exp(-d²/2)` on a squared distance.
#[inline]
pub(crate) fn gaussian_kernel(d2: f64) -> f64 {
    (-0.5 * d2).exp()
}

/// Per-point quantities reused across cross-covariance evaluations.
#[derive(Clone, Debug)]
pub struct Features {
    /// Amplitude factor: `√φ(x)` for informative kernels, 1 otherwise.
    pub scale: f64,
    /// Warped coordinates (stationary/informative) or unit direction (cylindrical; empty at the origin).
    pub coords: Vec<f64>,
    /// Warped radius (cylindrical only).
    pub radius: f64,
}

impl Features {
    pub fn is_origin(&self) -> bool {
        self.coords.is_empty()
    }
}

/// The covariance families available to the models.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub enum Covariance {
    Stationary(Matern52),
    Informative(Informative),
    Cylindrical(Cylindrical),
}

impl Covariance {
    pub fn dim(&self) -> usize {
        match self {
            Covariance::Stationary(k) => k.lengthscales.len(),
            Covariance::Informative(k) => k.lengthscales.len(),
            Covariance::Cylindrical(k) => k.dim,
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Covariance::Stationary(k) => 1 + k.lengthscales.len(),
            Covariance::Informative(k) => 2 + k.lengthscales.len(),
            Covariance::Cylindrical(_) => Cylindrical::N_PARAMS,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Covariance::Stationary(k) => std::iter::once(k.variance)
                .chain(k.lengthscales.iter().copied())
                .collect(),
            Covariance::Informative(k) => std::iter::once(k.variance)
                .chain(k.lengthscales.iter().copied())
                .chain(std::iter::once(k.ratio))
                .collect(),
            Covariance::Cylindrical(k) => k.params(),
        }
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params());
        match self {
            Covariance::Stationary(k) => {
                k.variance = p[0];
                k.lengthscales.copy_from_slice(&p[1..]);
            }
            Covariance::Informative(k) => {
                let d = k.lengthscales.len();
                k.variance = p[0];
                k.lengthscales.copy_from_slice(&p[1..=d]);
                k.ratio = p[d + 1];
            }
            Covariance::Cylindrical(k) => k.set_params(p),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        let ls = |d: usize| (0..d).map(|i| format!("lengthscale[{i}]"));
        match self {
            Covariance::Stationary(k) => std::iter::once("variance".to_string())
                .chain(ls(k.lengthscales.len()))
                .collect(),
            Covariance::Informative(k) => std::iter::once("variance".to_string())
                .chain(ls(k.lengthscales.len()))
                .chain(std::iter::once("ratio".to_string()))
                .collect(),
            Covariance::Cylindrical(_) => Cylindrical::PARAM_NAMES
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    /// Lengthscales of the (warped) stationary component, when the family has them.
    pub fn lengthscales(&self) -> Option<&[f64]> {
        match self {
            Covariance::Stationary(k) => Some(&k.lengthscales),
            Covariance::Informative(k) => Some(&k.lengthscales),
            Covariance::Cylindrical(_) => None,
        }
    }

    pub fn features(&self, x: &[f64]) -> Features {
        match self {
            Covariance::Stationary(k) => k.features(x),
            Covariance::Informative(k) => k.features(x),
            Covariance::Cylindrical(k) => k.features(x),
        }
    }

    /// Covariance between two featurized points.
    pub fn eval_features(&self, a: &Features, b: &Features) -> f64 {
        match self {
            Covariance::Stationary(k) => k.eval_features(a, b),
            Covariance::Informative(k) => k.eval_features(a, b),
            Covariance::Cylindrical(k) => k.eval_features(a, b),
        }
    }

    pub fn eval(&self, xi: &[f64], xj: &[f64]) -> f64 {
        self.eval_features(&self.features(xi), &self.features(xj))
    }

    /// Prior variance `C(x, x)`.
    pub fn diag(&self, x: &[f64]) -> f64 {
        let f = self.features(x);
        self.eval_features(&f, &f)
    }

    pub fn gram(&self, xs: &[Vec<f64>]) -> DMatrix<f64> {
        let feats: Vec<Features> = xs.iter().map(|x| self.features(x)).collect();
        self.gram_features(&feats)
    }

    pub fn gram_features(&self, feats: &[Features]) -> DMatrix<f64> {
        let n = feats.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval_features(&feats[i], &feats[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    pub fn cross(&self, x: &Features, train: &[Features]) -> DVector<f64> {
        DVector::from_iterator(train.len(), train.iter().map(|t| self.eval_features(x, t)))
    }

    /// `Σ_ij W_ij ∂K_ij/∂θ_k` for every covariance parameter `θ_k` (constrained coordinates).
    /// `weights` must be symmetric.
    pub fn param_gradient(&self, xs: &[Vec<f64>], weights: &DMatrix<f64>) -> Vec<f64> {
        match self {
            Covariance::Stationary(k) => k.param_gradient(xs, weights),
            Covariance::Informative(k) => k.param_gradient(xs, weights),
            Covariance::Cylindrical(k) => k.param_gradient(xs, weights),
        }
    }

    /// Cross-covariance vector `c(x)` and its Jacobian `∂c/∂x` (rows: training points),
    /// plus `C(x,x)` and its gradient. `None` for families without analytic input gradients.
    pub fn cross_with_input_grad(
        &self,
        x: &[f64],
        train: &[Features],
    ) -> Option<InputGradient> {
        match self {
            Covariance::Stationary(k) => Some(k.cross_with_input_grad(x, train)),
            Covariance::Informative(k) => Some(k.cross_with_input_grad(x, train)),
            Covariance::Cylindrical(_) => None,
        }
    }
}

/// Output of [`Covariance::cross_with_input_grad`].
#[derive(Clone, Debug)]
pub struct InputGradient {
    pub cross: DVector<f64>,
    pub cross_jacobian: DMatrix<f64>,
    pub diag: f64,
    pub diag_grad: DVector<f64>,
}
