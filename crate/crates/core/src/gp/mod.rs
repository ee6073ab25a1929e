//! Exact Gaussian-process regression.

mod fit;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::{Covariance, Features};
use crate::error::{Error, Result};
use crate::linalg::{factorize, Factor};
use crate::mean::MeanFunction;

pub use fit::{
    fit_empirical_bayes, fit_saas_selection, loo_log_predictive, penalized_objective, FitOptions,
    FitResult, ModelSpec, ParamSpec, PriorArg, SaasSelection, Transform, SAAS_TAUS,
};

/// Noise variance used for noise-free objectives.
pub const DEFAULT_NOISE: f64 = 1e-3;

/// Ordered observations `(x_i, y_i)` with inputs in `[-1, 1]^D`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSet {
    dim: usize,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
}

impl EvidenceSet {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0);
        Self {
            dim,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn from_parts(dim: usize, inputs: Vec<Vec<f64>>, outputs: Vec<f64>) -> Result<Self> {
        if inputs.len() != outputs.len() {
            return Err(Error::Precondition(format!(
                "{} inputs but {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        let mut e = Self::new(dim);
        for (x, y) in inputs.into_iter().zip(outputs) {
            e.push(x, y)?;
        }
        Ok(e)
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::Precondition(format!("input {x:?} outside [-1, 1]^D")));
        }
        if !y.is_finite() {
            return Err(Error::Precondition(format!("non-finite observation {y}")));
        }
        self.inputs.push(x);
        self.outputs.push(y);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    /// Index and value of the lowest observation (earliest on ties).
    pub fn best(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &y) in self.outputs.iter().enumerate() {
            if best.is_none_or(|(_, b)| y < b) {
                best = Some((i, y));
            }
        }
        best
    }

    pub fn output_range(&self) -> Option<(f64, f64)> {
        let lo = self.outputs.iter().copied().reduce(f64::min)?;
        let hi = self.outputs.iter().copied().reduce(f64::max)?;
        Some((lo, hi))
    }

    /// Same evidence with outputs mapped through `f`.
    pub fn map_outputs(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dim: self.dim,
            inputs: self.inputs.clone(),
            outputs: self.outputs.iter().map(|&y| f(y)).collect(),
        }
    }
}

/// Mean function, covariance function and noise variance of a GP prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub mean: MeanFunction,
    pub covariance: Covariance,
    pub noise_variance: f64,
}

impl GpHyperparams {
    pub fn new(mean: MeanFunction, covariance: Covariance, noise_variance: f64) -> Self {
        Self {
            mean,
            covariance,
            noise_variance,
        }
    }

    pub fn n_params(&self) -> usize {
        self.covariance.n_params() + self.mean.n_params()
    }

    /// Covariance parameters followed by mean parameters.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.covariance.params();
        p.extend(self.mean.params());
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let nc = self.covariance.n_params();
        self.covariance.set_params(&p[..nc]);
        self.mean.set_params(&p[nc..]);
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = self.covariance.param_names();
        names.extend(self.mean.param_names().into_iter().map(|n| format!("mean.{n}")));
        names
    }

    pub fn prior_variance(&self) -> f64 {
        self.covariance.params()[0]
    }

    pub fn lengthscales(&self) -> Option<&[f64]> {
        self.covariance.lengthscales()
    }
}

/// Posterior predictive of the latent function at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosteriorPredictive {
    pub mean: f64,
    pub variance: f64,
}

impl PosteriorPredictive {
    pub fn std(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// Posterior predictive with gradients with respect to the input.
#[derive(Clone, Debug)]
pub struct PredictiveGradient {
    pub predictive: PosteriorPredictive,
    pub mean_grad: Vec<f64>,
    pub variance_grad: Vec<f64>,
}

/// Cached data for cylindrical models with origin points in the training set.
#[derive(Clone, Debug)]
struct OriginBlock {
    /// Training indices of origin points.
    origins: Vec<usize>,
    /// Remaining training indices.
    rest: Vec<usize>,
    /// Factor of the regularized Gram restricted to `rest`.
    rest_factor: Option<Factor>,
    /// `L_B⁻¹ r_B`.
    rest_whitened: DVector<f64>,
}

/// A GP conditioned on an evidence set.
#[derive(Clone, Debug)]
pub struct GpModel {
    hyper: GpHyperparams,
    inputs: Vec<Vec<f64>>,
    features: Vec<Features>,
    residuals: DVector<f64>,
    factor: Option<Factor>,
    alpha: DVector<f64>,
    origin_block: Option<OriginBlock>,
}

impl GpModel {
    /// Conditions the prior on `evidence`, factorizing `C_n + σ_y² I` with jitter escalation.
    pub fn new(hyper: GpHyperparams, evidence: &EvidenceSet) -> Result<Self> {
        if hyper.covariance.dim() != evidence.dim() {
            return Err(Error::Dimension {
                expected: hyper.covariance.dim(),
                found: evidence.dim(),
            });
        }
        let inputs = evidence.inputs().to_vec();
        let features: Vec<Features> = inputs.iter().map(|x| hyper.covariance.features(x)).collect();
        let n = inputs.len();
        let residuals = DVector::from_iterator(
            n,
            inputs
                .iter()
                .zip(evidence.outputs())
                .map(|(x, y)| y - hyper.mean.eval(x)),
        );
        let mut model = Self {
            hyper,
            inputs,
            features,
            residuals,
            factor: None,
            alpha: DVector::zeros(n),
            origin_block: None,
        };
        if n > 0 {
            let gram = model.hyper.covariance.gram_features(&model.features);
            let factor = factorize(&gram, model.hyper.noise_variance)?;
            model.alpha = factor.solve(&model.residuals);
            model.factor = Some(factor);
            model.origin_block = model.build_origin_block()?;
        }
        Ok(model)
    }

    fn build_origin_block(&self) -> Result<Option<OriginBlock>> {
        if !matches!(self.hyper.covariance, Covariance::Cylindrical(_)) {
            return Ok(None);
        }
        let (origins, rest): (Vec<usize>, Vec<usize>) =
            (0..self.features.len()).partition(|&i| self.features[i].is_origin());
        if origins.is_empty() {
            return Ok(None);
        }
        let (rest_factor, rest_whitened) = if rest.is_empty() {
            (None, DVector::zeros(0))
        } else {
            let feats: Vec<Features> = rest.iter().map(|&i| self.features[i].clone()).collect();
            let gram = self.hyper.covariance.gram_features(&feats);
            let f = factorize(&gram, self.noise_total())?;
            let r = DVector::from_iterator(rest.len(), rest.iter().map(|&i| self.residuals[i]));
            let w = f.solve_lower(&r);
            (Some(f), w)
        };
        Ok(Some(OriginBlock {
            origins,
            rest,
            rest_factor,
            rest_whitened,
        }))
    }

    /// Noise variance plus any jitter the training factorization needed.
    fn noise_total(&self) -> f64 {
        self.hyper.noise_variance + self.factor.as_ref().map_or(0.0, |f| f.jitter)
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyper
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Jitter added on top of the noise variance (0 when none was needed).
    pub fn jitter(&self) -> f64 {
        self.factor.as_ref().map_or(0.0, |f| f.jitter)
    }

    pub fn prior_variance_at(&self, x: &[f64]) -> f64 {
        self.hyper.covariance.diag(x)
    }

    /// Posterior mean and variance of the latent function at `x`.
    pub fn predict(&self, x: &[f64]) -> PosteriorPredictive {
        let prior_mean = self.hyper.mean.eval(x);
        let fx = self.hyper.covariance.features(x);
        let prior_var = self.hyper.covariance.eval_features(&fx, &fx);
        let Some(factor) = &self.factor else {
            return PosteriorPredictive {
                mean: prior_mean,
                variance: prior_var,
            };
        };
        if let Some(block) = &self.origin_block {
            if !fx.is_origin() {
                return self.predict_with_origin(block, &fx, prior_mean, prior_var);
            }
        }
        let c = self.hyper.covariance.cross(&fx, &self.features);
        let v = factor.solve_lower(&c);
        PosteriorPredictive {
            mean: prior_mean + c.dot(&self.alpha),
            variance: (prior_var - v.norm_squared()).max(0.0),
        }
    }

    /// Prediction where training origins take the direction of `fx`.
    fn predict_with_origin(
        &self,
        block: &OriginBlock,
        fx: &Features,
        prior_mean: f64,
        prior_var: f64,
    ) -> PosteriorPredictive {
        let Covariance::Cylindrical(k) = &self.hyper.covariance else {
            unreachable!("origin blocks exist only for cylindrical models")
        };
        let dir = Some(&fx.coords[..]);
        let no = block.origins.len();
        let nb = block.rest.len();
        let cov = |i: usize, j: usize| {
            k.eval_with_origin_direction(&self.features[i], &self.features[j], dir)
        };
        let c_b = DVector::from_iterator(nb, block.rest.iter().map(|&i| k.eval_features(fx, &self.features[i])));
        let c_o = DVector::from_iterator(
            no,
            block
                .origins
                .iter()
                .map(|&i| k.eval_with_origin_direction(fx, &self.features[i], dir)),
        );
        let noise = self.noise_total();
        // Schur complement S = K_OO − VᵀV with V = L_B⁻¹ K_BO
        let mut v = DMatrix::zeros(nb, no);
        if let Some(fb) = &block.rest_factor {
            for (col, &o) in block.origins.iter().enumerate() {
                let k_bo = DVector::from_iterator(nb, block.rest.iter().map(|&i| cov(i, o)));
                v.set_column(col, &fb.solve_lower(&k_bo));
            }
        }
        let mut s = DMatrix::zeros(no, no);
        for (a, &oa) in block.origins.iter().enumerate() {
            for (b, &ob) in block.origins.iter().enumerate() {
                s[(a, b)] = cov(oa, ob);
            }
        }
        s -= v.transpose() * &v;
        let w_b = match &block.rest_factor {
            Some(fb) => fb.solve_lower(&c_b),
            None => DVector::zeros(0),
        };
        let Ok(fs) = factorize(&s, noise) else {
            // Fall back to the pairwise origin convention of the training factor.
            let c = self.hyper.covariance.cross(fx, &self.features);
            let f = self.factor.as_ref().expect("non-empty model");
            let v = f.solve_lower(&c);
            return PosteriorPredictive {
                mean: prior_mean + c.dot(&self.alpha),
                variance: (prior_var - v.norm_squared()).max(0.0),
            };
        };
        let r_o = DVector::from_iterator(no, block.origins.iter().map(|&i| self.residuals[i]));
        let w_o = fs.solve_lower(&(c_o - v.transpose() * &w_b));
        let rho_o = fs.solve_lower(&(r_o - v.transpose() * &block.rest_whitened));
        let mean = prior_mean + w_b.dot(&block.rest_whitened) + w_o.dot(&rho_o);
        let variance = prior_var - w_b.norm_squared() - w_o.norm_squared();
        PosteriorPredictive {
            mean,
            variance: variance.max(0.0),
        }
    }

    /// Predictive with analytic input gradients; `None` for covariance families
    /// without them (callers fall back to finite differences).
    pub fn predict_with_grad(&self, x: &[f64]) -> Option<PredictiveGradient> {
        let d = x.len();
        let prior_mean = self.hyper.mean.eval(x);
        let mean_in_grad = self.hyper.mean.input_grad(x);
        let ig = self.hyper.covariance.cross_with_input_grad(x, &self.features)?;
        let Some(factor) = &self.factor else {
            return Some(PredictiveGradient {
                predictive: PosteriorPredictive {
                    mean: prior_mean,
                    variance: ig.diag,
                },
                mean_grad: mean_in_grad,
                variance_grad: ig.diag_grad.iter().copied().collect(),
            });
        };
        let kinv_c = factor.solve(&ig.cross);
        let v = factor.solve_lower(&ig.cross);
        let mean = prior_mean + ig.cross.dot(&self.alpha);
        let variance = ig.diag - v.norm_squared();
        let jt_alpha = ig.cross_jacobian.transpose() * &self.alpha;
        let jt_kc = ig.cross_jacobian.transpose() * &kinv_c;
        let mean_grad = (0..d).map(|k| mean_in_grad[k] + jt_alpha[k]).collect();
        let (variance, variance_grad) = if variance > 0.0 {
            (
                variance,
                (0..d).map(|k| ig.diag_grad[k] - 2.0 * jt_kc[k]).collect(),
            )
        } else {
            (0.0, vec![0.0; d])
        };
        Some(PredictiveGradient {
            predictive: PosteriorPredictive { mean, variance },
            mean_grad,
            variance_grad,
        })
    }

    /// `log N(y; m(X), C_n + σ_y² I)`.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let Some(factor) = &self.factor else {
            return 0.0;
        };
        let n = self.len() as f64;
        -0.5 * self.residuals.dot(&self.alpha)
            - 0.5 * factor.log_det()
            - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    /// Gradient of the log marginal likelihood with respect to the constrained
    /// hyperparameters (covariance parameters, then mean parameters).
    pub fn log_marginal_likelihood_grad(&self) -> Vec<f64> {
        let Some(factor) = &self.factor else {
            return vec![0.0; self.hyper.n_params()];
        };
        let mut w = &self.alpha * self.alpha.transpose();
        w -= factor.inverse();
        let mut grad: Vec<f64> = self
            .hyper
            .covariance
            .param_gradient(&self.inputs, &w)
            .into_iter()
            .map(|g| 0.5 * g)
            .collect();
        let mut mean_grad = vec![0.0; self.hyper.mean.n_params()];
        for (i, x) in self.inputs.iter().enumerate() {
            for (g, dm) in mean_grad.iter_mut().zip(self.hyper.mean.param_grad(x)) {
                *g += self.alpha[i] * dm;
            }
        }
        grad.extend(mean_grad);
        grad
    }

    /// `(K⁻¹)_ii` and `α_i` for closed-form leave-one-out.
    pub(crate) fn loo_terms(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        let factor = self.factor.as_ref()?;
        let inv = factor.inverse();
        Some((inv.diagonal(), self.alpha.clone()))
    }
}

/// Posterior predictive at `x` given the prior and the evidence.
pub fn posterior_predict(
    hyper: &GpHyperparams,
    evidence: &EvidenceSet,
    x: &[f64],
) -> Result<PosteriorPredictive> {
    Ok(GpModel::new(hyper.clone(), evidence)?.predict(x))
}

/// Log marginal likelihood and its gradient with respect to the constrained hyperparameters.
pub fn log_marginal_likelihood(
    hyper: &GpHyperparams,
    evidence: &EvidenceSet,
) -> Result<(f64, Vec<f64>)> {
    if evidence.is_empty() {
        return Err(Error::Precondition("marginal likelihood needs evidence".into()));
    }
    let model = GpModel::new(hyper.clone(), evidence)?;
    Ok((model.log_marginal_likelihood(), model.log_marginal_likelihood_grad()))
}
