//! Prior mean functions.

use serde::{Deserialize, Serialize};

/// Axis-aligned quadratic `b + Σ a_d (x_d − c_d)²`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct QuadraticMeanParams {
    pub offset: f64,
    /// Non-negative curvature weights `a_d`.
    pub weights: Vec<f64>,
    /// Center `c₀`; not a fitted parameter.
    pub center: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub enum MeanFunction {
    Zero,
    Constant(f64),
    Quadratic(QuadraticMeanParams),
}

impl MeanFunction {
    pub fn quadratic(offset: f64, weights: Vec<f64>, center: Vec<f64>) -> Self {
        assert_eq!(weights.len(), center.len());
        MeanFunction::Quadratic(QuadraticMeanParams {
            offset,
            weights,
            center,
        })
    }

    pub fn n_params(&self) -> usize {
        match self {
            MeanFunction::Zero => 0,
            MeanFunction::Constant(_) => 1,
            MeanFunction::Quadratic(q) => 1 + q.weights.len(),
        }
    }

    /// Parameters in order: offset, then quadratic weights.
    pub fn params(&self) -> Vec<f64> {
        match self {
            MeanFunction::Zero => Vec::new(),
            MeanFunction::Constant(b) => vec![*b],
            MeanFunction::Quadratic(q) => std::iter::once(q.offset)
                .chain(q.weights.iter().copied())
                .collect(),
        }
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params());
        match self {
            MeanFunction::Zero => {}
            MeanFunction::Constant(b) => *b = p[0],
            MeanFunction::Quadratic(q) => {
                q.offset = p[0];
                q.weights.copy_from_slice(&p[1..]);
            }
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self {
            MeanFunction::Zero => Vec::new(),
            MeanFunction::Constant(_) => vec!["offset".into()],
            MeanFunction::Quadratic(q) => std::iter::once("offset".to_string())
                .chain((0..q.weights.len()).map(|d| format!("curvature[{d}]")))
                .collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            MeanFunction::Zero => 0.0,
            MeanFunction::Constant(b) => *b,
            MeanFunction::Quadratic(q) => {
                q.offset
                    + x.iter()
                        .zip(&q.center)
                        .zip(&q.weights)
                        .map(|((v, c), a)| a * (v - c).powi(2))
                        .sum::<f64>()
            }
        }
    }

    /// `∂m(x)/∂θ` in parameter order.
    pub fn param_grad(&self, x: &[f64]) -> Vec<f64> {
        match self {
            MeanFunction::Zero => Vec::new(),
            MeanFunction::Constant(_) => vec![1.0],
            MeanFunction::Quadratic(q) => std::iter::once(1.0)
                .chain(x.iter().zip(&q.center).map(|(v, c)| (v - c).powi(2)))
                .collect(),
        }
    }

    /// `∂m(x)/∂x`.
    pub fn input_grad(&self, x: &[f64]) -> Vec<f64> {
        match self {
            MeanFunction::Quadratic(q) => x
                .iter()
                .zip(&q.center)
                .zip(&q.weights)
                .map(|((v, c), a)| 2.0 * a * (v - c))
                .collect(),
            _ => vec![0.0; x.len()],
        }
    }
}
