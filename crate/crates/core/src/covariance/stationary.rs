use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{matern52_profile, Features, InputGradient};

/// Anisotropic Matérn-5/2 with weighted Euclidean distance.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Matern52 {
    pub variance: f64,
    pub lengthscales: Vec<f64>,
}

/// `σ₀² (1 + √5 d + 5/3 d²) exp(-√5 d)` with `d` the weighted Euclidean distance.
pub fn matern52(xi: &[f64], xj: &[f64], lengthscales: &[f64], variance: f64) -> f64 {
    let r2: f64 = xi
        .iter()
        .zip(xj)
        .zip(lengthscales)
        .map(|((a, b), l)| ((a - b) / l).powi(2))
        .sum();
    variance * matern52_profile(r2).0
}

impl Matern52 {
    pub fn new(variance: f64, lengthscales: Vec<f64>) -> Self {
        Self {
            variance,
            lengthscales,
        }
    }

    pub(super) fn features(&self, x: &[f64]) -> Features {
        Features {
            scale: 1.0,
            coords: x.iter().zip(&self.lengthscales).map(|(v, l)| v / l).collect(),
            radius: 0.0,
        }
    }

    pub(super) fn eval_features(&self, a: &Features, b: &Features) -> f64 {
        let r2: f64 = a
            .coords
            .iter()
            .zip(&b.coords)
            .map(|(p, q)| (p - q).powi(2))
            .sum();
        self.variance * matern52_profile(r2).0
    }

    pub(super) fn param_gradient(&self, xs: &[Vec<f64>], w: &DMatrix<f64>) -> Vec<f64> {
        let d = self.lengthscales.len();
        let feats: Vec<Features> = xs.iter().map(|x| self.features(x)).collect();
        let mut grad = vec![0.0; 1 + d];
        let mut p2 = vec![0.0; d];
        for i in 0..xs.len() {
            for j in 0..=i {
                let weight = if i == j { w[(i, i)] } else { 2.0 * w[(i, j)] };
                if weight == 0.0 {
                    continue;
                }
                let mut r2 = 0.0;
                for k in 0..d {
                    let p = feats[i].coords[k] - feats[j].coords[k];
                    p2[k] = p * p;
                    r2 += p2[k];
                }
                let (m, g) = matern52_profile(r2);
                grad[0] += weight * m;
                let c = weight * self.variance * g;
                for k in 0..d {
                    grad[1 + k] += c * (-2.0 * p2[k] / self.lengthscales[k]);
                }
            }
        }
        grad
    }

    pub(super) fn cross_with_input_grad(&self, x: &[f64], train: &[Features]) -> InputGradient {
        let d = x.len();
        let fx = self.features(x);
        let n = train.len();
        let mut cross = DVector::zeros(n);
        let mut jac = DMatrix::zeros(n, d);
        for (j, t) in train.iter().enumerate() {
            let r2: f64 = fx
                .coords
                .iter()
                .zip(&t.coords)
                .map(|(p, q)| (p - q).powi(2))
                .sum();
            let (m, g) = matern52_profile(r2);
            cross[j] = self.variance * m;
            for k in 0..d {
                let p = fx.coords[k] - t.coords[k];
                jac[(j, k)] = self.variance * g * 2.0 * p / self.lengthscales[k];
            }
        }
        InputGradient {
            cross,
            cross_jacobian: jac,
            diag: self.variance,
            diag_grad: DVector::zeros(d),
        }
    }
}
