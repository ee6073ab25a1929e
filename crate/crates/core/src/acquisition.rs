//! Acquisition functions, candidate generation, multi-start maximization and
//! the trust-region schedule.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::gp::{GpModel, PosteriorPredictive};
use crate::optimize::{minimize, Bounds, LbfgsbOptions};
use crate::qmc::{mix64, scrambled_sobol};

/// `1/√(2π)`.
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn std_normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `τ(z) = z Φ(z) + φ(z)`.
pub fn tau(z: f64) -> f64 {
    (z * std_normal_cdf(z) + std_normal_pdf(z)).max(0.0)
}

/// Expected improvement below `f_best` (minimization).
pub fn expected_improvement(post: &PosteriorPredictive, f_best: f64) -> f64 {
    let s = post.std();
    if s <= 0.0 {
        return (f_best - post.mean).max(0.0);
    }
    s * tau((f_best - post.mean) / s)
}

/// Lower confidence bound `m − β σ` (to be minimized).
pub fn lcb(post: &PosteriorPredictive, beta: f64) -> f64 {
    post.mean - beta * post.std()
}

/// Fixed belief over the optimum location used by the weighted EI variants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorWeight {
    pub location: Vec<f64>,
    pub std: f64,
    /// Unnormalized Gaussian kernel (true) or normalized Gaussian density (false).
    pub kernel: bool,
}

impl PriorWeight {
    /// `π(x)^{ζ/n}` and its gradient with respect to `x`.
    pub fn factor(&self, x: &[f64], exponent: f64) -> (f64, Vec<f64>) {
        let s2 = self.std * self.std;
        let d2: f64 = x
            .iter()
            .zip(&self.location)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let w = if self.kernel {
            (-0.5 * exponent * d2 / s2).exp()
        } else {
            // literal evaluation: the density may underflow in high dimension
            let norm = (self.std * (2.0 * PI).sqrt()).powi(x.len() as i32);
            let density = (-0.5 * d2 / s2).exp() / norm;
            density.powf(exponent)
        };
        let grad = x
            .iter()
            .zip(&self.location)
            .map(|(a, b)| -w * exponent * (a - b) / s2)
            .collect();
        (w, grad)
    }
}

/// `EI(x) π(x)^{ζ/n}`.
pub fn weighted_ei(
    post: &PosteriorPredictive,
    f_best: f64,
    x: &[f64],
    prior: &PriorWeight,
    step: usize,
    zeta: f64,
) -> f64 {
    assert!(step >= 1, "step index is 1-based");
    expected_improvement(post, f_best) * prior.factor(x, zeta / step as f64).0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum AcquisitionKind {
    Ei,
    Lcb { beta: f64 },
    /// Gaussian-density-weighted EI.
    Gwei,
    /// Gaussian-kernel-weighted EI.
    Gkei,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub kind: AcquisitionKind,
    /// Center of the belief for the weighted variants.
    pub prior_location: Vec<f64>,
    pub prior_std: f64,
    /// Decay `ζ` of the weighted variants.
    pub zeta: f64,
    pub n_sobol: usize,
    pub n_heuristic: usize,
    pub n_starts: usize,
    /// Standard deviation of incumbent perturbations.
    pub perturbation_std: f64,
    /// Use the minimum posterior mean over the evidence as the EI reference.
    pub noisy: bool,
    pub max_iters: usize,
    pub pgtol: f64,
}

impl AcquisitionConfig {
    pub fn new(kind: AcquisitionKind, dim: usize, budget: usize) -> Self {
        Self {
            kind,
            prior_location: vec![0.0; dim],
            prior_std: 0.5,
            zeta: budget as f64 / 10.0,
            n_sobol: 20_000,
            n_heuristic: 10,
            n_starts: 20,
            perturbation_std: 0.04,
            noisy: false,
            max_iters: 200,
            pgtol: 1e-12,
        }
    }

    fn prior(&self) -> Option<PriorWeight> {
        match self.kind {
            AcquisitionKind::Gwei | AcquisitionKind::Gkei => Some(PriorWeight {
                location: self.prior_location.clone(),
                std: self.prior_std,
                kernel: self.kind == AcquisitionKind::Gkei,
            }),
            _ => None,
        }
    }
}

/// Acquisition utility (larger is better) at one step.
pub struct Acquisition<'a> {
    pub model: &'a GpModel,
    pub config: &'a AcquisitionConfig,
    pub f_best: f64,
    /// 1-based step index.
    pub step: usize,
    prior: Option<PriorWeight>,
}

impl<'a> Acquisition<'a> {
    pub fn new(model: &'a GpModel, config: &'a AcquisitionConfig, f_best: f64, step: usize) -> Self {
        Self {
            model,
            config,
            f_best,
            step: step.max(1),
            prior: config.prior(),
        }
    }

    fn from_predictive(&self, post: &PosteriorPredictive, x: &[f64]) -> f64 {
        match &self.config.kind {
            AcquisitionKind::Ei => expected_improvement(post, self.f_best),
            AcquisitionKind::Lcb { beta } => -lcb(post, *beta),
            AcquisitionKind::Gwei | AcquisitionKind::Gkei => {
                let prior = self.prior.as_ref().expect("weighted variant has a prior");
                weighted_ei(post, self.f_best, x, prior, self.step, self.config.zeta)
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.from_predictive(&self.model.predict(x), x)
    }

    /// Utility and its gradient; finite differences inside `bounds` when the
    /// model has no analytic input gradient.
    pub fn value_and_grad(&self, x: &[f64], bounds: &Bounds) -> (f64, Vec<f64>) {
        let Some(pg) = self.model.predict_with_grad(x) else {
            return self.finite_difference(x, bounds);
        };
        let post = pg.predictive;
        let s = post.std();
        let d = x.len();
        let dsigma: Vec<f64> = if s > 0.0 {
            pg.variance_grad.iter().map(|g| g / (2.0 * s)).collect()
        } else {
            vec![0.0; d]
        };
        let ei_grad = |post: &PosteriorPredictive| -> (f64, Vec<f64>) {
            if s <= 0.0 {
                let v = (self.f_best - post.mean).max(0.0);
                let g = if v > 0.0 {
                    pg.mean_grad.iter().map(|g| -g).collect()
                } else {
                    vec![0.0; d]
                };
                return (v, g);
            }
            let z = (self.f_best - post.mean) / s;
            let (cdf, pdf) = (std_normal_cdf(z), std_normal_pdf(z));
            let g = (0..d)
                .map(|k| -cdf * pg.mean_grad[k] + pdf * dsigma[k])
                .collect();
            (s * tau(z), g)
        };
        match &self.config.kind {
            AcquisitionKind::Ei => ei_grad(&post),
            AcquisitionKind::Lcb { beta } => (
                -lcb(&post, *beta),
                (0..d).map(|k| -pg.mean_grad[k] + beta * dsigma[k]).collect(),
            ),
            AcquisitionKind::Gwei | AcquisitionKind::Gkei => {
                let prior = self.prior.as_ref().expect("weighted variant has a prior");
                let (ei, eg) = ei_grad(&post);
                let (w, wg) = prior.factor(x, self.config.zeta / self.step as f64);
                (ei * w, (0..d).map(|k| eg[k] * w + ei * wg[k]).collect())
            }
        }
    }

    fn finite_difference(&self, x: &[f64], bounds: &Bounds) -> (f64, Vec<f64>) {
        let v = self.value(x);
        let mut g = vec![0.0; x.len()];
        let mut probe = x.to_vec();
        for k in 0..x.len() {
            let h = 1e-6;
            let hi = (x[k] + h).min(bounds.upper[k]);
            let lo = (x[k] - h).max(bounds.lower[k]);
            if hi <= lo {
                continue;
            }
            probe[k] = hi;
            let fh = self.value(&probe);
            probe[k] = lo;
            let fl = self.value(&probe);
            probe[k] = x[k];
            g[k] = (fh - fl) / (hi - lo);
        }
        (v, g)
    }
}

/// Axis-aligned search box.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SearchBox {
    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![-1.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    fn map_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| lo + (hi - lo) * v)
            .collect()
    }

    fn bounds(&self) -> Bounds {
        Bounds::new(self.lower.clone(), self.upper.clone())
    }
}

/// Incumbent perturbations followed by scrambled Sobol points, all inside
/// `[-1, 1]^D` intersected with `region` (when given). Deterministic in `(seed, step)`.
pub fn generate_candidates(
    seed: u64,
    step: u64,
    incumbent: &[f64],
    region: Option<&SearchBox>,
    config: &AcquisitionConfig,
) -> Vec<Vec<f64>> {
    let dim = incumbent.len();
    let domain = intersect(&SearchBox::unit(dim), region);
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(step)));
    let noise = Normal::new(0.0, config.perturbation_std).expect("positive std");
    let mut out = Vec::with_capacity(config.n_heuristic + config.n_sobol);
    for _ in 0..config.n_heuristic {
        let x = incumbent
            .iter()
            .zip(domain.lower.iter().zip(&domain.upper))
            .map(|(v, (lo, hi))| (v + noise.sample(&mut rng)).clamp(*lo, *hi))
            .collect();
        out.push(x);
    }
    for u in scrambled_sobol(dim, config.n_sobol, seed, step) {
        out.push(domain.map_unit(&u));
    }
    out
}

fn intersect(a: &SearchBox, b: Option<&SearchBox>) -> SearchBox {
    let Some(b) = b else { return a.clone() };
    let lower: Vec<f64> = a.lower.iter().zip(&b.lower).map(|(x, y)| x.max(*y)).collect();
    let upper: Vec<f64> = a
        .upper
        .iter()
        .zip(&b.upper)
        .zip(&lower)
        .map(|((x, y), lo)| x.min(*y).max(*lo))
        .collect();
    SearchBox { lower, upper }
}

#[derive(Clone, Debug)]
pub struct AcquisitionResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Index of the best raw candidate.
    pub best_candidate: usize,
    /// Whether gradient refinement improved on the best raw candidate.
    pub refined: bool,
    /// True when every gradient run failed to produce a finite value.
    pub all_runs_failed: bool,
}

/// Scores every candidate, refines the best `n_starts` by bounded quasi-Newton
/// ascent inside `region ∩ [-1,1]^D`, and returns the overall argmax.
pub fn maximize_acquisition(
    acq: &Acquisition<'_>,
    candidates: &[Vec<f64>],
    region: Option<&SearchBox>,
) -> AcquisitionResult {
    assert!(!candidates.is_empty());
    let dim = candidates[0].len();
    let domain = intersect(&SearchBox::unit(dim), region);
    let bounds = domain.bounds();
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|x| {
            let v = acq.value(x);
            if v.is_nan() {
                f64::NEG_INFINITY
            } else {
                v
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let starts = &order[..acq.config.n_starts.min(order.len())];

    let opts = LbfgsbOptions {
        max_iters: acq.config.max_iters,
        pgtol: acq.config.pgtol,
        ..Default::default()
    };
    let runs: Vec<(f64, Vec<f64>)> = starts
        .par_iter()
        .map(|&i| {
            let m = minimize(
                |x, g| {
                    let (v, grad) = acq.value_and_grad(x, &bounds);
                    for (gi, v) in g.iter_mut().zip(grad) {
                        *gi = -v;
                    }
                    -v
                },
                &candidates[i],
                &bounds,
                &opts,
            );
            (-m.value, m.x)
        })
        .collect();

    let best_candidate = order[0];
    let mut x = candidates[best_candidate].clone();
    let mut value = scores[best_candidate];
    let mut refined = false;
    let mut all_runs_failed = true;
    for (v, rx) in runs {
        if !v.is_finite() {
            continue;
        }
        all_runs_failed = false;
        if v > value {
            // re-score at the returned point to guard against stale line-search values
            let check = acq.value(&rx);
            if check > value {
                value = check;
                x = rx;
                refined = true;
            }
        }
    }
    AcquisitionResult {
        x,
        value,
        best_candidate,
        refined,
        all_runs_failed,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustRegionConfig {
    pub min_side: f64,
    pub max_side: f64,
    pub init_side: f64,
    pub success_tolerance: u32,
    pub failure_tolerance: u32,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            min_side: 2.0f64.powi(-6),
            max_side: 1.6,
            init_side: 1.6,
            success_tolerance: 3,
            failure_tolerance: 10,
        }
    }
}

/// Trust region centered at the incumbent, with side length doubled after
/// consecutive successes and halved after consecutive failures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustRegionState {
    pub center: Vec<f64>,
    pub side: f64,
    pub success_count: u32,
    pub failure_count: u32,
    pub config: TrustRegionConfig,
}

impl TrustRegionState {
    pub fn new(center: Vec<f64>, config: TrustRegionConfig) -> Self {
        Self {
            center,
            side: config.init_side,
            success_count: 0,
            failure_count: 0,
            config,
        }
    }

    /// Records one acquisition outcome and recenters on `incumbent`.
    pub fn update(&mut self, improved: bool, incumbent: &[f64]) {
        if improved {
            self.success_count += 1;
            self.failure_count = 0;
        } else {
            self.failure_count += 1;
            self.success_count = 0;
        }
        if self.success_count >= self.config.success_tolerance {
            self.side = (2.0 * self.side).min(self.config.max_side);
            self.success_count = 0;
        } else if self.failure_count >= self.config.failure_tolerance {
            self.side = (0.5 * self.side).max(self.config.min_side);
            self.failure_count = 0;
        }
        self.center = incumbent.to_vec();
    }

    /// Box of per-dimension sides `side · λ_d / geomean(λ)` around the center,
    /// clipped to the domain.
    pub fn region(&self, lengthscales: Option<&[f64]>) -> SearchBox {
        let d = self.center.len();
        let weights: Vec<f64> = match lengthscales {
            Some(ls) if ls.len() == d => {
                let log_mean = ls.iter().map(|l| l.ln()).sum::<f64>() / d as f64;
                ls.iter().map(|l| (l.ln() - log_mean).exp()).collect()
            }
            _ => vec![1.0; d],
        };
        let lower = self
            .center
            .iter()
            .zip(&weights)
            .map(|(c, w)| (c - 0.5 * self.side * w).max(-1.0))
            .collect();
        let upper = self
            .center
            .iter()
            .zip(&weights)
            .map(|(c, w)| (c + 0.5 * self.side * w).min(1.0))
            .collect();
        SearchBox { lower, upper }
    }
}

/// Whether `y` improves on `best` by the trust-region margin.
pub fn is_improvement(y: f64, best: f64) -> bool {
    y < best - 1e-3 * best.abs()
}
