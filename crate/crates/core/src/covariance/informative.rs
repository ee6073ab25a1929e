//! Informative covariance: anchor-driven prior (co)variance and lengthscale warping
//! on top of a unit-variance Matérn-5/2.
//!
//! For anchors `x₀⁽ˡ⁾` with ratios `r_l ∈ (0, 1]`, a Gaussian kernel
//! `k(d) = exp(-d²/2)` and weighted Euclidean distance `d`:
//!
//! ```text
//! φ(x)     = 1 + 1/L Σ_l (1/r_l - 1) k(d(x, x₀⁽ˡ⁾))
//! u(x)     = 1 + 1/L Σ_l (r_l - 1)   k(d(x, x₀⁽ˡ⁾))
//! h(x)     = u(x)^(-1/2) Λ^(-1/2) x
//! C(xᵢ,xⱼ) = σ_p² √φ(xᵢ) √φ(xⱼ) M52(‖h(xᵢ) - h(xⱼ)‖)
//! ```
//!
//! With every ratio equal to 1 both `φ` and `u` are identically 1 and the
//! kernel reduces to `σ_p²` times the stationary Matérn.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{gaussian_kernel, matern52_profile, Features, InputGradient};
use crate::error::{Error, Result};

/// Anchors with their ratios `r_l = 1/w_l`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AnchorSet {
    pub locations: Vec<Vec<f64>>,
    pub ratios: Vec<f64>,
}

impl AnchorSet {
    pub fn new(locations: Vec<Vec<f64>>, ratios: Vec<f64>) -> Result<Self> {
        let set = Self { locations, ratios };
        set.validate()?;
        Ok(set)
    }

    /// Anchors sharing one ratio.
    pub fn tied(locations: Vec<Vec<f64>>, ratio: f64) -> Result<Self> {
        let ratios = vec![ratio; locations.len()];
        Self::new(locations, ratios)
    }

    pub fn single(location: Vec<f64>, ratio: f64) -> Result<Self> {
        Self::tied(vec![location], ratio)
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.locations.is_empty() {
            return Err(Error::Config("anchor set must contain at least one anchor".into()));
        }
        if self.ratios.len() != self.locations.len() {
            return Err(Error::Config("one ratio per anchor is required".into()));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::Config(format!("anchor ratio {r} outside (0, 1]")));
        }
        let dim = self.locations[0].len();
        for loc in &self.locations {
            if loc.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: loc.len(),
                });
            }
            if loc.iter().any(|v| !(-1.0..=1.0).contains(v)) {
                return Err(Error::Config("anchors must lie inside [-1, 1]^D".into()));
            }
        }
        Ok(())
    }

    /// Mean kernel activation per anchor weight: returns `(Σ (1/r_l-1) k_l / L, Σ (r_l-1) k_l / L)`.
    fn mixtures(&self, x: &[f64], distance_lengthscales: &[f64]) -> (f64, f64) {
        let l = self.len() as f64;
        let mut shape = 0.0;
        let mut warp = 0.0;
        for (loc, r) in self.locations.iter().zip(&self.ratios) {
            let k = gaussian_kernel(sq_dist(x, loc, distance_lengthscales));
            shape += (1.0 / r - 1.0) * k;
            warp += (r - 1.0) * k;
        }
        (shape / l, warp / l)
    }
}

/// Prior scaling `σ_p²` and the lengthscales shared by `Λ` and the shaping distance.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ShapingConfig {
    pub variance: f64,
    pub lengthscales: Vec<f64>,
    /// Separate fixed lengthscales for the shaping distance; `None` shares `lengthscales`.
    pub distance_lengthscales: Option<Vec<f64>>,
}

impl ShapingConfig {
    fn distance(&self) -> &[f64] {
        self.distance_lengthscales
            .as_deref()
            .unwrap_or(&self.lengthscales)
    }
}

fn sq_dist(x: &[f64], y: &[f64], lengthscales: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .zip(lengthscales)
        .map(|((a, b), l)| ((a - b) / l).powi(2))
        .sum()
}

/// `√v` computed as `exp(½ ln v)`.
#[inline]
fn sqrt_via_log(v: f64) -> f64 {
    (0.5 * v.ln()).exp()
}

/// Shaping function `φ(x)`.
pub fn shaping_phi(x: &[f64], anchors: &AnchorSet, distance_lengthscales: &[f64]) -> f64 {
    1.0 + anchors.mixtures(x, distance_lengthscales).0
}

/// Warp factor `u(x)`; the local lengthscale at `x` is `√u(x) λ_d`.
pub fn warp_factor(x: &[f64], anchors: &AnchorSet, distance_lengthscales: &[f64]) -> f64 {
    1.0 + anchors.mixtures(x, distance_lengthscales).1
}

/// Warped input `h(x) = u(x)^(-1/2) Λ^(-1/2) x`.
pub fn warp_input(x: &[f64], anchors: &AnchorSet, shaping: &ShapingConfig) -> Vec<f64> {
    let u = warp_factor(x, anchors, shaping.distance());
    let su = sqrt_via_log(u);
    x.iter()
        .zip(&shaping.lengthscales)
        .map(|(v, l)| v / (l * su))
        .collect()
}

/// Spatially varying prior covariance `σ_p² √φ(xᵢ) √φ(xⱼ)`.
pub fn prior_covariance(
    xi: &[f64],
    xj: &[f64],
    shaping: &ShapingConfig,
    anchors: &AnchorSet,
) -> f64 {
    let d = shaping.distance();
    shaping.variance
        * (sqrt_via_log(shaping_phi(xi, anchors, d)) * sqrt_via_log(shaping_phi(xj, anchors, d)))
}

/// Informative covariance `σ₀²(xᵢ, xⱼ) M52(h(xᵢ), h(xⱼ))` with a unit-variance Matérn base.
pub fn informative_cov(
    xi: &[f64],
    xj: &[f64],
    shaping: &ShapingConfig,
    anchors: &AnchorSet,
) -> f64 {
    let hi = warp_input(xi, anchors, shaping);
    let hj = warp_input(xj, anchors, shaping);
    let r2: f64 = hi.iter().zip(&hj).map(|(a, b)| (a - b).powi(2)).sum();
    prior_covariance(xi, xj, shaping, anchors) * matern52_profile(r2).0
}

/// Informative covariance with a single tied ratio across anchors, as used in model fitting.
///
/// Parameters (in order): `variance` (σ_p²), `lengthscales`, `ratio` (r₀).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Informative {
    pub variance: f64,
    pub lengthscales: Vec<f64>,
    pub ratio: f64,
    pub anchors: Vec<Vec<f64>>,
    /// Fixed shaping-distance lengthscales; `None` shares `lengthscales`.
    pub distance_lengthscales: Option<Vec<f64>>,
}

/// Per-point quantities needed by the gradients.
struct PointState {
    /// Mean Gaussian activation `E = 1/L Σ_l k_l`.
    act: f64,
    phi: f64,
    u: f64,
    s: f64,
    h: Vec<f64>,
}

impl Informative {
    pub fn new(variance: f64, lengthscales: Vec<f64>, ratio: f64, anchors: Vec<Vec<f64>>) -> Self {
        Self {
            variance,
            lengthscales,
            ratio,
            anchors,
            distance_lengthscales: None,
        }
    }

    pub fn with_distance_lengthscales(mut self, ls: Vec<f64>) -> Self {
        self.distance_lengthscales = Some(ls);
        self
    }

    pub fn shaping(&self) -> ShapingConfig {
        ShapingConfig {
            variance: self.variance,
            lengthscales: self.lengthscales.clone(),
            distance_lengthscales: self.distance_lengthscales.clone(),
        }
    }

    pub fn anchor_set(&self) -> Result<AnchorSet> {
        AnchorSet::tied(self.anchors.clone(), self.ratio)
    }

    fn distance(&self) -> &[f64] {
        self.distance_lengthscales
            .as_deref()
            .unwrap_or(&self.lengthscales)
    }

    fn shares_distance(&self) -> bool {
        self.distance_lengthscales.is_none()
    }

    /// Activation `E(x)` and, when `with_grad`, `∂E/∂λ_d` (shared distances only).
    fn activation(&self, x: &[f64], dlambda: Option<&mut [f64]>) -> f64 {
        let dist = self.distance();
        let l = self.anchors.len() as f64;
        let mut act = 0.0;
        match dlambda {
            Some(dl) => {
                dl.iter_mut().for_each(|v| *v = 0.0);
                for a in &self.anchors {
                    let k = gaussian_kernel(sq_dist(x, a, dist));
                    act += k;
                    if self.shares_distance() && k > 0.0 {
                        for d in 0..x.len() {
                            let diff = x[d] - a[d];
                            dl[d] += k * diff * diff / dist[d].powi(3);
                        }
                    }
                }
                dl.iter_mut().for_each(|v| *v /= l);
            }
            None => {
                for a in &self.anchors {
                    act += gaussian_kernel(sq_dist(x, a, dist));
                }
            }
        }
        act / l
    }

    fn state(&self, x: &[f64], act: f64) -> PointState {
        let phi = 1.0 + (1.0 / self.ratio - 1.0) * act;
        let u = 1.0 + (self.ratio - 1.0) * act;
        let s = sqrt_via_log(phi);
        let su = sqrt_via_log(u);
        let h = x
            .iter()
            .zip(&self.lengthscales)
            .map(|(v, l)| v / (l * su))
            .collect();
        PointState { act, phi, u, s, h }
    }

    pub(super) fn features(&self, x: &[f64]) -> Features {
        let st = self.state(x, self.activation(x, None));
        Features {
            scale: st.s,
            coords: st.h,
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
        self.variance * (a.scale * b.scale) * matern52_profile(r2).0
    }

    pub(super) fn param_gradient(&self, xs: &[Vec<f64>], w: &DMatrix<f64>) -> Vec<f64> {
        let d = self.lengthscales.len();
        let n = xs.len();
        let r = self.ratio;
        let mut states = Vec::with_capacity(n);
        // ∂E/∂λ_d per point, row-major n × d
        let mut d_act = vec![0.0; n * d];
        for (i, x) in xs.iter().enumerate() {
            let act = self.activation(x, Some(&mut d_act[i * d..(i + 1) * d]));
            states.push(self.state(x, act));
        }
        // ∂s/∂λ_d and ∂u/∂λ_d per point
        let mut ds = vec![0.0; n * d];
        let mut du = vec![0.0; n * d];
        for i in 0..n {
            for k in 0..d {
                let de = d_act[i * d + k];
                ds[i * d + k] = (1.0 / r - 1.0) * de / (2.0 * states[i].s);
                du[i * d + k] = (r - 1.0) * de;
            }
        }
        let ds_r: Vec<f64> = states
            .iter()
            .map(|st| -st.act / (r * r) / (2.0 * st.s))
            .collect();

        let mut grad = vec![0.0; d + 2];
        let mut p = vec![0.0; d];
        for i in 0..n {
            let si = &states[i];
            for j in 0..=i {
                let weight = if i == j { w[(i, i)] } else { 2.0 * w[(i, j)] };
                if weight == 0.0 {
                    continue;
                }
                let sj = &states[j];
                let mut r2 = 0.0;
                let mut ph_i = 0.0;
                let mut ph_j = 0.0;
                for k in 0..d {
                    p[k] = si.h[k] - sj.h[k];
                    r2 += p[k] * p[k];
                    ph_i += p[k] * si.h[k];
                    ph_j += p[k] * sj.h[k];
                }
                let (m, g) = matern52_profile(r2);
                let a_i = -ph_i / si.u;
                let a_j = ph_j / sj.u;
                let ss = si.s * sj.s;
                grad[0] += weight * ss * m;
                let wv = weight * self.variance;
                for k in 0..d {
                    let dss = ds[i * d + k] * sj.s + si.s * ds[j * d + k];
                    let dr2 = -2.0 * p[k] * p[k] / self.lengthscales[k]
                        + a_i * du[i * d + k]
                        + a_j * du[j * d + k];
                    grad[1 + k] += wv * (dss * m + ss * g * dr2);
                }
                let dss_r = ds_r[i] * sj.s + si.s * ds_r[j];
                let dr2_r = a_i * si.act + a_j * sj.act;
                grad[d + 1] += wv * (dss_r * m + ss * g * dr2_r);
            }
        }
        grad
    }

    pub(super) fn cross_with_input_grad(&self, x: &[f64], train: &[Features]) -> InputGradient {
        let d = x.len();
        let r = self.ratio;
        let dist = self.distance();
        let l = self.anchors.len() as f64;
        let mut act = 0.0;
        let mut d_act = vec![0.0; d];
        for a in &self.anchors {
            let k = gaussian_kernel(sq_dist(x, a, dist));
            act += k;
            if k > 0.0 {
                for k_ in 0..d {
                    d_act[k_] -= k * (x[k_] - a[k_]) / (dist[k_] * dist[k_]);
                }
            }
        }
        act /= l;
        d_act.iter_mut().for_each(|v| *v /= l);
        let st = self.state(x, act);
        let dphi: Vec<f64> = d_act.iter().map(|v| (1.0 / r - 1.0) * v).collect();
        let du: Vec<f64> = d_act.iter().map(|v| (r - 1.0) * v).collect();
        let dsx: Vec<f64> = dphi.iter().map(|v| v / (2.0 * st.s)).collect();
        let su = sqrt_via_log(st.u);

        let n = train.len();
        let mut cross = DVector::zeros(n);
        let mut jac = DMatrix::zeros(n, d);
        let mut p = vec![0.0; d];
        for (j, t) in train.iter().enumerate() {
            let mut r2 = 0.0;
            let mut ph = 0.0;
            for k in 0..d {
                p[k] = st.h[k] - t.coords[k];
                r2 += p[k] * p[k];
                ph += p[k] * st.h[k];
            }
            let (m, g) = matern52_profile(r2);
            cross[j] = self.variance * st.s * t.scale * m;
            let a_x = -ph / st.u;
            let c = self.variance * t.scale;
            for k in 0..d {
                let dr2 = 2.0 * p[k] / (self.lengthscales[k] * su) + a_x * du[k];
                jac[(j, k)] = c * (dsx[k] * m + st.s * g * dr2);
            }
        }
        InputGradient {
            cross,
            cross_jacobian: jac,
            diag: self.variance * st.phi,
            diag_grad: DVector::from_iterator(d, dphi.iter().map(|v| self.variance * v)),
        }
    }
}
