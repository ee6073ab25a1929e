//! Cylindrical covariance: a 1-D Matérn-5/2 on the Kumaraswamy-warped radius times
//! a polynomial kernel on the angular components.
//!
//! The origin has no direction. Wherever it is compared with another point,
//! its direction is taken to be that point's, so the angular factor is 1.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{matern52_profile, Features};

/// `F(r) = 1 - (1 - r^α)^β` on `[0, 1]`.
pub fn kumaraswamy_cdf(r: f64, alpha: f64, beta: f64) -> f64 {
    1.0 - (1.0 - r.powf(alpha)).powf(beta)
}

fn kumaraswamy_cdf_grad(r: f64, alpha: f64, beta: f64) -> (f64, f64) {
    if r <= 0.0 {
        return (0.0, 0.0);
    }
    let ra = r.powf(alpha);
    let one_minus = 1.0 - ra;
    let d_alpha = beta * one_minus.powf(beta - 1.0) * ra * r.ln();
    let d_beta = if one_minus > 0.0 {
        -one_minus.powf(beta) * one_minus.ln()
    } else {
        0.0
    };
    (d_alpha, d_beta)
}

/// Angular weights and radius-warp shapes.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CylindricalParams {
    /// Unnormalized non-negative weights `c_0..c_3`.
    pub weights: [f64; 4],
    pub alpha: f64,
    pub beta: f64,
}

impl CylindricalParams {
    pub fn identity_warp() -> Self {
        Self {
            weights: [1.0; 4],
            alpha: 1.0,
            beta: 1.0,
        }
    }

    pub fn normalized_weights(&self) -> [f64; 4] {
        let total: f64 = self.weights.iter().sum();
        self.weights.map(|c| c / total)
    }

    /// `Σ_p c_p (a₁ᵀa₂)^p` with normalized weights.
    pub fn angular(&self, cos: f64) -> f64 {
        let c = self.normalized_weights();
        c[0] + cos * (c[1] + cos * (c[2] + cos * c[3]))
    }
}

/// Radius of `x` normalized by the half-diagonal `√D` of the centered hypercube.
fn normalized_radius(x: &[f64]) -> (f64, f64) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r = (norm / (x.len() as f64).sqrt()).min(1.0);
    (norm, r)
}

/// Cylindrical covariance between two points with a 1-D Matérn radial kernel.
pub fn cylindrical_cov(
    xi: &[f64],
    xj: &[f64],
    params: &CylindricalParams,
    variance: f64,
    lengthscale: f64,
) -> f64 {
    let k = Cylindrical {
        variance,
        lengthscale,
        angular: params.clone(),
        dim: xi.len(),
    };
    k.eval_features(&k.features(xi), &k.features(xj))
}

/// Parameters (in order): `variance`, `lengthscale`, `c_0..c_3`, `alpha`, `beta`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Cylindrical {
    pub variance: f64,
    pub lengthscale: f64,
    pub angular: CylindricalParams,
    pub dim: usize,
}

impl Cylindrical {
    pub const N_PARAMS: usize = 8;
    pub const PARAM_NAMES: [&'static str; 8] = [
        "variance",
        "lengthscale",
        "weight[0]",
        "weight[1]",
        "weight[2]",
        "weight[3]",
        "alpha",
        "beta",
    ];

    pub fn new(dim: usize, variance: f64, lengthscale: f64, angular: CylindricalParams) -> Self {
        Self {
            variance,
            lengthscale,
            angular,
            dim,
        }
    }

    pub(super) fn params(&self) -> Vec<f64> {
        let mut p = vec![self.variance, self.lengthscale];
        p.extend_from_slice(&self.angular.weights);
        p.push(self.angular.alpha);
        p.push(self.angular.beta);
        p
    }

    pub(super) fn set_params(&mut self, p: &[f64]) {
        self.variance = p[0];
        self.lengthscale = p[1];
        self.angular.weights.copy_from_slice(&p[2..6]);
        self.angular.alpha = p[6];
        self.angular.beta = p[7];
    }

    pub fn features(&self, x: &[f64]) -> Features {
        let (norm, r) = normalized_radius(x);
        let coords = if norm > 0.0 {
            x.iter().map(|v| v / norm).collect()
        } else {
            Vec::new()
        };
        Features {
            scale: 1.0,
            coords,
            radius: kumaraswamy_cdf(r, self.angular.alpha, self.angular.beta),
        }
    }

    fn cosine(a: &Features, b: &Features) -> f64 {
        if a.is_origin() || b.is_origin() {
            1.0
        } else {
            a.coords
                .iter()
                .zip(&b.coords)
                .map(|(p, q)| p * q)
                .sum::<f64>()
                .clamp(-1.0, 1.0)
        }
    }

    /// Radial factor (including variance) between two featurized points.
    pub fn radial(&self, a: &Features, b: &Features) -> f64 {
        let t2 = ((a.radius - b.radius) / self.lengthscale).powi(2);
        self.variance * matern52_profile(t2).0
    }

    pub fn eval_features(&self, a: &Features, b: &Features) -> f64 {
        self.radial(a, b) * self.angular.angular(Self::cosine(a, b))
    }

    /// Covariance where `origin_dir` stands in for the direction of every origin point.
    pub fn eval_with_origin_direction(
        &self,
        a: &Features,
        b: &Features,
        origin_dir: Option<&[f64]>,
    ) -> f64 {
        let dir_a = if a.is_origin() { origin_dir } else { Some(&a.coords[..]) };
        let dir_b = if b.is_origin() { origin_dir } else { Some(&b.coords[..]) };
        let cos = match (dir_a, dir_b) {
            (Some(p), Some(q)) if !p.is_empty() && !q.is_empty() => p
                .iter()
                .zip(q)
                .map(|(x, y)| x * y)
                .sum::<f64>()
                .clamp(-1.0, 1.0),
            _ => 1.0,
        };
        self.radial(a, b) * self.angular.angular(cos)
    }

    pub(super) fn param_gradient(&self, xs: &[Vec<f64>], w: &DMatrix<f64>) -> Vec<f64> {
        let n = xs.len();
        let (alpha, beta) = (self.angular.alpha, self.angular.beta);
        let feats: Vec<Features> = xs.iter().map(|x| self.features(x)).collect();
        let dwarp: Vec<(f64, f64)> = xs
            .iter()
            .map(|x| kumaraswamy_cdf_grad(normalized_radius(x).1, alpha, beta))
            .collect();
        let total: f64 = self.angular.weights.iter().sum();
        let ell = self.lengthscale;
        let mut grad = vec![0.0; Self::N_PARAMS];
        for i in 0..n {
            for j in 0..=i {
                let weight = if i == j { w[(i, i)] } else { 2.0 * w[(i, j)] };
                if weight == 0.0 {
                    continue;
                }
                let diff = feats[i].radius - feats[j].radius;
                let t2 = (diff / ell).powi(2);
                let (m, g) = matern52_profile(t2);
                let cos = Self::cosine(&feats[i], &feats[j]);
                let ang = self.angular.angular(cos);
                grad[0] += weight * m * ang;
                let wv = weight * self.variance;
                grad[1] += wv * g * (-2.0 * t2 / ell) * ang;
                let mut pw = 1.0;
                for p in 0..4 {
                    grad[2 + p] += wv * m * (pw - ang) / total;
                    pw *= cos;
                }
                let dt2 = 2.0 * diff / (ell * ell);
                grad[6] += wv * g * dt2 * (dwarp[i].0 - dwarp[j].0) * ang;
                grad[7] += wv * g * dt2 * (dwarp[i].1 - dwarp[j].1) * ang;
            }
        }
        grad
    }
}
