//! The Bayesian-optimization loop, run records and experiment bookkeeping.

mod method;
mod metrics;
mod persist;

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acquisition::{
    generate_candidates, is_improvement, maximize_acquisition, Acquisition, AcquisitionConfig,
    AcquisitionKind, TrustRegionConfig, TrustRegionState,
};
use crate::covariance::{Covariance, Cylindrical, CylindricalParams, Informative, Matern52};
use crate::error::{Error, Result};
use crate::gp::{
    fit_empirical_bayes, fit_saas_selection, EvidenceSet, FitOptions, GpHyperparams, GpModel,
    ModelSpec, DEFAULT_NOISE, SAAS_TAUS,
};
use crate::mean::MeanFunction;
use crate::objectives::{log_transform, Family, Objective, ObjectiveSpec, LOG_OFFSET};
use crate::qmc::{mix64, scrambled_sobol};

pub use method::{AcquisitionTag, AnchorPolicy, CovarianceKind, Method, RatioPrior};
pub use metrics::{mean_ni, mean_std, normalized_improvement, quantile, run_mean_ni, NiSeries};
pub use persist::{
    load_record, load_records, plot_data, run_dir, summarize, write_csv, write_record, write_table,
    PlotRow, RecordPaths, SummaryRow,
};

/// Stream id of the initial design, disjoint from per-step candidate streams.
const INIT_STREAM: u64 = u64::MAX;

/// Everything that determines a set of runs. Mirrors the `run` CLI flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub objective: Family,
    pub dim: usize,
    pub method: Method,
    /// Initial design size, the origin included.
    pub n0: usize,
    /// Number of acquisitions `N`.
    pub budget: usize,
    pub seeds: Vec<u64>,
    /// Used when the method tag names no ratio prior.
    pub ratio_prior: RatioPrior,
    pub trust_region: TrustRegionConfig,
    pub n_sobol: usize,
    pub n_heuristic: usize,
    pub n_starts: usize,
    /// LCB exploration constant; required for LCB methods.
    pub lcb_beta: Option<f64>,
    /// Decay of weighted acquisitions; `budget / 10` when absent.
    pub zeta: Option<f64>,
    /// EI against the minimum posterior mean instead of the best observation.
    pub noisy: bool,
    /// Models are fit to `log(y + log_offset)`; `None` fits raw values.
    pub log_offset: Option<f64>,
    pub restarts: usize,
    pub noise_variance: f64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            objective: Family::QBranin,
            dim: 2,
            method: "S".parse().expect("valid tag"),
            n0: 16,
            budget: 200,
            seeds: vec![0],
            ratio_prior: RatioPrior::default(),
            trust_region: TrustRegionConfig::default(),
            n_sobol: 20_000,
            n_heuristic: 10,
            n_starts: 20,
            lcb_beta: None,
            zeta: None,
            noisy: false,
            log_offset: Some(LOG_OFFSET),
            restarts: 5,
            noise_variance: DEFAULT_NOISE,
            out: PathBuf::from("results"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n0 < 2 {
            return bad(format!("n0 must be at least 2, got {}", self.n0));
        }
        if self.method.saas && self.n0 < 3 {
            return bad("SAAS selection needs n0 >= 3".into());
        }
        if self.method.acquisition == AcquisitionTag::Lcb && !self.lcb_beta.is_some_and(|b| b > 0.0) {
            return bad("LCB needs a positive lcb_beta".into());
        }
        if self.zeta.is_some_and(|z| !(z > 0.0)) {
            return bad("zeta must be positive".into());
        }
        if self.log_offset.is_some_and(|o| !(o > 0.0)) {
            return bad("log_offset must be positive".into());
        }
        if !(self.noise_variance > 0.0) {
            return bad("noise_variance must be positive".into());
        }
        if self.n_sobol + self.n_heuristic == 0 || self.n_starts == 0 || self.restarts == 0 {
            return bad("candidate, start and restart counts must be positive".into());
        }
        let tr = &self.trust_region;
        if !(tr.min_side > 0.0 && tr.min_side <= tr.init_side && tr.init_side <= tr.max_side) {
            return bad("trust region needs 0 < min_side <= init_side <= max_side".into());
        }
        if tr.success_tolerance == 0 || tr.failure_tolerance == 0 {
            return bad("trust-region tolerances must be positive".into());
        }
        ObjectiveSpec::new(self.objective, self.dim)?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn objective(&self) -> Result<Objective> {
        Ok(Objective::Builtin(ObjectiveSpec::new(self.objective, self.dim)?))
    }
}

/// One evaluation: initial-design rows first, then one row per acquisition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub x: Vec<f64>,
    pub y: f64,
    /// Best observed value up to and including this row.
    pub incumbent: f64,
    /// `NI_n` on acquisition rows, 0 on initial rows; absent without a known optimum.
    pub ni: Option<f64>,
    /// Wall time of the row (fit, acquisition and evaluation).
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub objective: String,
    pub dim: usize,
    pub method: Method,
    pub seed: u64,
    pub config_hash: String,
    pub n0: usize,
    pub steps: Vec<StepRecord>,
    /// The initial incumbent was already optimal.
    pub ni_degenerate: bool,
}

impl RunRecord {
    /// `NI_0..NI_N`, if the optimum is known.
    pub fn ni(&self) -> Option<Vec<f64>> {
        self.steps[self.n0 - 1..].iter().map(|s| s.ni).collect()
    }

    /// `f(x_best^{(n₀+n)})` for `n = 0..N`.
    pub fn incumbents(&self) -> Vec<f64> {
        self.steps[self.n0 - 1..].iter().map(|s| s.incumbent).collect()
    }

    pub fn budget(&self) -> usize {
        self.steps.len() - self.n0
    }
}

/// Origin plus `n0 − 1` scrambled Sobol points in `[-1, 1]^D`.
pub fn initial_design(dim: usize, n0: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dim]];
    for u in scrambled_sobol(dim, n0.saturating_sub(1), seed, INIT_STREAM) {
        pts.push(u.iter().map(|v| 2.0 * v - 1.0).collect());
    }
    pts
}

fn data_template(
    method: &Method,
    evidence: &EvidenceSet,
    anchor: &[f64],
    noise: f64,
) -> GpHyperparams {
    let d = evidence.dim();
    let ys = evidence.outputs();
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).max(1e-6);
    let ls = vec![0.5 * (d as f64).sqrt(); d];
    let covariance = match method.covariance {
        CovarianceKind::Stationary => Covariance::Stationary(Matern52::new(var, ls)),
        CovarianceKind::Informative => {
            let mut k = Informative::new(var, ls, 0.1, vec![anchor.to_vec()]);
            if method.focused {
                k = k.with_distance_lengthscales(vec![0.1 * (d as f64).sqrt(); d]);
            }
            Covariance::Informative(k)
        }
        CovarianceKind::Cylindrical => Covariance::Cylindrical(Cylindrical::new(
            d,
            var,
            0.5,
            CylindricalParams::identity_warp(),
        )),
    };
    let mean_fn = if method.quadratic_mean {
        MeanFunction::quadratic(mean, vec![0.1; d], vec![0.0; d])
    } else {
        MeanFunction::Constant(mean)
    };
    GpHyperparams::new(mean_fn, covariance, noise)
}

fn set_anchor(hyper: &mut GpHyperparams, anchor: &[f64]) {
    if let Covariance::Informative(k) = &mut hyper.covariance {
        k.anchors = vec![anchor.to_vec()];
    }
}

struct Loop<'a> {
    config: &'a RunConfig,
    objective: &'a Objective,
    seed: u64,
    evidence: EvidenceSet,
    model_evidence: EvidenceSet,
    previous: Option<GpHyperparams>,
}

impl Loop<'_> {
    fn model_output(&self, y: f64) -> Result<f64> {
        match self.config.log_offset {
            None => Ok(y),
            Some(offset) => {
                let y = match self.objective {
                    // normalized built-ins are non-negative up to rounding
                    Objective::Builtin(_) => y.max(0.0),
                    Objective::External(_) => y,
                };
                log_transform(y, offset)
            }
        }
    }

    fn observe(&mut self, x: Vec<f64>) -> Result<f64> {
        let y = self.objective.evaluate(&x)?;
        let m = self.model_output(y)?;
        self.evidence.push(x.clone(), y)?;
        self.model_evidence.push(x, m)?;
        Ok(y)
    }

    fn incumbent(&self) -> (Vec<f64>, f64) {
        let (i, y) = self.evidence.best().expect("evidence is non-empty");
        (self.evidence.inputs()[i].clone(), y)
    }

    fn anchor(&self) -> Vec<f64> {
        match self.config.method.anchor {
            AnchorPolicy::Origin => vec![0.0; self.evidence.dim()],
            AnchorPolicy::Adaptive => self.incumbent().0,
        }
    }

    fn fit(&mut self, step: usize) -> Result<GpModel> {
        let method = &self.config.method;
        let anchor = self.anchor();
        let template = match &self.previous {
            Some(prev) => {
                let mut h = prev.clone();
                set_anchor(&mut h, &anchor);
                h
            }
            None => data_template(
                method,
                &self.model_evidence,
                &anchor,
                self.config.noise_variance,
            ),
        };
        let ratio = method.ratio_prior_or(self.config.ratio_prior).hyperprior();
        let spec = ModelSpec::with_default_priors(template.clone(), &self.model_evidence, ratio);
        let opts = FitOptions {
            restarts: self.config.restarts,
            seed: mix64(self.seed ^ mix64(0xf17 + step as u64)),
            ..FitOptions::default()
        };
        let fitted = if method.saas {
            fit_saas_selection(&spec, &self.model_evidence, &SAAS_TAUS, &opts)
                .map(|s| Some(s.model.hyperparams().clone()))
        } else {
            fit_empirical_bayes(&spec, &self.model_evidence, &opts)
                .map(|f| (!f.degraded).then_some(f.hyper))
        };
        let hyper = match fitted {
            Ok(Some(h)) => h,
            Ok(None) => {
                log::warn!("seed {} step {step}: fit degenerate, reusing previous hyperparameters", self.seed);
                template
            }
            Err(e) => {
                log::warn!("seed {} step {step}: fit failed ({e}), reusing previous hyperparameters", self.seed);
                template
            }
        };
        log::debug!(
            "seed {} step {step}: {:?}",
            self.seed,
            hyper.param_names().iter().zip(hyper.params()).collect::<Vec<_>>()
        );
        let model = GpModel::new(hyper.clone(), &self.model_evidence)?;
        self.previous = Some(hyper);
        Ok(model)
    }
}

/// Runs the optimization loop on a built-in objective.
pub fn run_bo(config: &RunConfig, seed: u64) -> Result<RunRecord> {
    config.validate()?;
    run_bo_objective(&config.objective()?, config, seed)
}

/// Runs the optimization loop on any objective. `config.objective` and `config.dim` only
/// enter the record through the config hash.
pub fn run_bo_objective(objective: &Objective, config: &RunConfig, seed: u64) -> Result<RunRecord> {
    if config.n0 < 2 {
        return Err(Error::Config("n0 must be at least 2".into()));
    }
    let dim = objective.dim();
    let method = config.method;
    let mut state = Loop {
        config,
        objective,
        seed,
        evidence: EvidenceSet::new(dim),
        model_evidence: EvidenceSet::new(dim),
        previous: None,
    };
    let mut steps = Vec::with_capacity(config.n0 + config.budget);
    let mut best = f64::INFINITY;
    for x in initial_design(dim, config.n0, seed) {
        let t = Instant::now();
        let y = state.observe(x.clone())?;
        best = best.min(y);
        steps.push(StepRecord {
            x,
            y,
            incumbent: best,
            ni: None,
            seconds: t.elapsed().as_secs_f64(),
        });
    }

    let kind = match method.acquisition {
        AcquisitionTag::Ei => AcquisitionKind::Ei,
        AcquisitionTag::Gwei => AcquisitionKind::Gwei,
        AcquisitionTag::Gkei => AcquisitionKind::Gkei,
        AcquisitionTag::Lcb => AcquisitionKind::Lcb {
            beta: config
                .lcb_beta
                .ok_or_else(|| Error::Config("LCB needs lcb_beta".into()))?,
        },
    };
    let mut acq_config = AcquisitionConfig::new(kind, dim, config.budget);
    acq_config.n_sobol = config.n_sobol;
    acq_config.n_heuristic = config.n_heuristic;
    acq_config.n_starts = config.n_starts;
    acq_config.noisy = config.noisy;
    if let Some(z) = config.zeta {
        acq_config.zeta = z;
    }
    let mut tr = method
        .trust_region
        .then(|| TrustRegionState::new(state.incumbent().0, config.trust_region.clone()));

    for step in 1..=config.budget {
        let t = Instant::now();
        let model = state.fit(step)?;
        let (x_best, _) = state.incumbent();
        let f_best = if config.noisy {
            state
                .model_evidence
                .inputs()
                .iter()
                .map(|x| model.predict(x).mean)
                .fold(f64::INFINITY, f64::min)
        } else {
            state.model_evidence.best().expect("non-empty").1
        };
        acq_config.prior_location = state.anchor();
        let region = tr
            .as_ref()
            .map(|t| t.region(model.hyperparams().lengthscales()));
        let candidates =
            generate_candidates(seed, step as u64, &x_best, region.as_ref(), &acq_config);
        let acq = Acquisition::new(&model, &acq_config, f_best, step);
        let result = maximize_acquisition(&acq, &candidates, region.as_ref());
        if result.all_runs_failed {
            log::warn!("seed {seed} step {step}: every acquisition refinement failed");
        }
        let y = state.observe(result.x.clone())?;
        if let Some(tr) = tr.as_mut() {
            tr.update(is_improvement(y, best), &state.incumbent().0);
        }
        best = best.min(y);
        steps.push(StepRecord {
            x: result.x,
            y,
            incumbent: best,
            ni: None,
            seconds: t.elapsed().as_secs_f64(),
        });
    }

    let mut ni_degenerate = false;
    if let Some(f_star) = objective.optimum() {
        let incumbents: Vec<f64> = steps[config.n0 - 1..].iter().map(|s| s.incumbent).collect();
        let ni = normalized_improvement(&incumbents, f_star);
        ni_degenerate = ni.degenerate;
        let initial = if ni.degenerate { 1.0 } else { 0.0 };
        for s in &mut steps[..config.n0 - 1] {
            s.ni = Some(initial);
        }
        for (s, v) in steps[config.n0 - 1..].iter_mut().zip(ni.values) {
            s.ni = Some(v);
        }
    }
    Ok(RunRecord {
        objective: objective.name(),
        dim,
        method,
        seed,
        config_hash: config.hash(),
        n0: config.n0,
        steps,
        ni_degenerate,
    })
}

/// Runs every seed in `config.seeds` concurrently.
pub fn run_all(config: &RunConfig) -> Result<Vec<RunRecord>> {
    config.validate()?;
    if config.seeds.is_empty() {
        return Err(Error::Config("no seeds given".into()));
    }
    let objective = config.objective()?;
    config
        .seeds
        .par_iter()
        .map(|&s| run_bo_objective(&objective, config, s))
        .collect()
}
