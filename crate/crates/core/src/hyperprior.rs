//! Hyperprior densities for penalized marginal-likelihood fitting.
//!
//! Densities are evaluated on the constrained (natural) value of a parameter.
//! Values outside the support give `-inf`, which the optimizer treats as a
//! rejected step.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub enum Hyperprior {
    /// Improper flat density on the whole real line (log density 0).
    Flat,
    Uniform { lo: f64, hi: f64 },
    Kumaraswamy { a: f64, b: f64 },
    HalfCauchy { scale: f64 },
    /// Half-horseshoe `HS⁺(scale)`, approximated by the normalized midpoint of
    /// its classical lower and upper density bounds.
    HalfHorseshoe { scale: f64 },
    /// `ln v ~ N(mu, sigma²)`.
    LogNormal { mu: f64, sigma: f64 },
    /// Equal mixture of a point mass at 1 and a uniform slab on `ln v ∈ [log_lo, log_hi]`.
    /// The fitting routine resolves the mixture by trying each branch.
    SpikeSlabLog { log_lo: f64, log_hi: f64 },
    Dirac(f64),
}

/// Ratio of the log-uniform sampling threshold: uniform priors wider than this
/// (relative to a positive lower bound) are sampled log-uniformly for restarts.
const WIDE_UNIFORM_RATIO: f64 = 1e3;

/// `½ ln(1 + 4/θ²) + ln(1 + 2/θ²)`; integrates to `π(1 + √2)` over `θ > 0`.
fn horseshoe_mid(theta: f64) -> f64 {
    let t2 = theta * theta;
    0.5 * (4.0 / t2).ln_1p() + (2.0 / t2).ln_1p()
}

fn horseshoe_mid_grad(theta: f64) -> f64 {
    let t2 = theta * theta;
    let term = |c: f64| -2.0 * c / (theta * (t2 + c));
    0.5 * term(4.0) + term(2.0)
}

impl Hyperprior {
    /// Closed support of the density in constrained space.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Hyperprior::Flat => (f64::NEG_INFINITY, f64::INFINITY),
            Hyperprior::Uniform { lo, hi } => (lo, hi),
            Hyperprior::Kumaraswamy { .. } => (0.0, 1.0),
            Hyperprior::HalfCauchy { .. } | Hyperprior::HalfHorseshoe { .. } => (0.0, f64::INFINITY),
            Hyperprior::LogNormal { .. } => (0.0, f64::INFINITY),
            Hyperprior::SpikeSlabLog { log_lo, log_hi } => (log_lo.exp(), log_hi.exp()),
            Hyperprior::Dirac(v) => (v, v),
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, Hyperprior::Dirac(_))
    }

    /// Log density at `v` (the slab branch for spike-and-slab priors).
    pub fn log_density(&self, v: f64) -> f64 {
        if v.is_nan() {
            return f64::NEG_INFINITY;
        }
        match *self {
            Hyperprior::Flat => 0.0,
            Hyperprior::Uniform { lo, hi } => {
                if (lo..=hi).contains(&v) {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Hyperprior::Kumaraswamy { a, b } => {
                if v <= 0.0 || v >= 1.0 {
                    return f64::NEG_INFINITY;
                }
                a.ln() + b.ln() + (a - 1.0) * v.ln() + (b - 1.0) * (-v.powf(a)).ln_1p()
            }
            Hyperprior::HalfCauchy { scale } => {
                if v < 0.0 {
                    return f64::NEG_INFINITY;
                }
                (2.0 / (PI * scale)).ln() - (v / scale).powi(2).ln_1p()
            }
            Hyperprior::HalfHorseshoe { scale } => {
                if v <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                horseshoe_mid(v / scale).ln() - (scale * PI * (1.0 + SQRT_2)).ln()
            }
            Hyperprior::LogNormal { mu, sigma } => {
                if v <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let z = (v.ln() - mu) / sigma;
                -0.5 * z * z - v.ln() - sigma.ln() - 0.5 * (2.0 * PI).ln()
            }
            Hyperprior::SpikeSlabLog { log_lo, log_hi } => {
                let lv = v.ln();
                if v > 0.0 && (log_lo..=log_hi).contains(&lv) {
                    0.5_f64.ln() - (log_hi - log_lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Hyperprior::Dirac(c) => {
                if v == c {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// Log weight of the spike branch of a spike-and-slab prior.
    pub fn spike_log_weight(&self) -> Option<f64> {
        match self {
            Hyperprior::SpikeSlabLog { .. } => Some(0.5_f64.ln()),
            _ => None,
        }
    }

    /// `d log p(v) / dv` inside the support.
    pub fn grad_log_density(&self, v: f64) -> f64 {
        match *self {
            Hyperprior::Flat
            | Hyperprior::Uniform { .. }
            | Hyperprior::SpikeSlabLog { .. }
            | Hyperprior::Dirac(_) => 0.0,
            Hyperprior::Kumaraswamy { a, b } => {
                let va = v.powf(a);
                (a - 1.0) / v - (b - 1.0) * a * va / (v * (1.0 - va))
            }
            Hyperprior::HalfCauchy { scale } => -2.0 * v / (scale * scale + v * v),
            Hyperprior::HalfHorseshoe { scale } => {
                let t = v / scale;
                horseshoe_mid_grad(t) / (scale * horseshoe_mid(t))
            }
            Hyperprior::LogNormal { mu, sigma } => -((v.ln() - mu) / (sigma * sigma) + 1.0) / v,
        }
    }

    /// Draws an initialization value for a fitting restart.
    ///
    /// Wide positive uniforms are drawn log-uniformly so restarts cover every scale.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match *self {
            Hyperprior::Flat => StandardNormal.sample(rng),
            Hyperprior::Uniform { lo, hi } => {
                if lo > 0.0 && hi / lo > WIDE_UNIFORM_RATIO {
                    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
                } else {
                    lo + u * (hi - lo)
                }
            }
            Hyperprior::Kumaraswamy { a, b } => {
                let v = (1.0 - (1.0 - u).powf(1.0 / b)).powf(1.0 / a);
                v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
            }
            Hyperprior::HalfCauchy { scale } => scale * (0.5 * PI * u).tan(),
            Hyperprior::HalfHorseshoe { scale } => {
                let local = (0.5 * PI * u).tan();
                let z: f64 = StandardNormal.sample(rng);
                (scale * local * z).abs()
            }
            Hyperprior::LogNormal { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                (mu + sigma * z).exp()
            }
            Hyperprior::SpikeSlabLog { log_lo, log_hi } => (log_lo + u * (log_hi - log_lo)).exp(),
            Hyperprior::Dirac(v) => v,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Composite Simpson rule on `[a, b]`.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn uniform_is_flat() {
        let p = Hyperprior::Uniform {
            lo: (-12.0f64).exp(),
            hi: 20.0f64.exp(),
        };
        assert_eq!(p.log_density(1.0), p.log_density(1e6));
        assert_eq!(p.log_density(1e-9), f64::NEG_INFINITY);
    }

    #[test]
    fn kumaraswamy_peaks_near_a_tenth() {
        let p = Hyperprior::Kumaraswamy { a: 3.164, b: 1000.0 };
        assert!(p.log_density(0.1) > p.log_density(0.5));
        assert!(p.log_density(0.1) > p.log_density(0.01));
    }

    #[test]
    fn kumaraswamy_matches_closed_form() {
        let (a, b) = (2.253, 100.0);
        let p = Hyperprior::Kumaraswamy { a, b };
        for i in 1..100 {
            let r = i as f64 / 100.0;
            let direct = (a * b * r.powf(a - 1.0) * (1.0 - r.powf(a)).powf(b - 1.0)).ln();
            if direct.is_finite() {
                assert!((p.log_density(r) - direct).abs() < 1e-12 * direct.abs().max(1.0));
            }
        }
    }

    #[test]
    fn dirac_only_supports_its_value() {
        let p = Hyperprior::Dirac(0.1);
        assert!(p.is_fixed());
        assert_eq!(p.log_density(0.1), 0.0);
        assert_eq!(p.log_density(0.2), f64::NEG_INFINITY);
    }

    #[test]
    fn densities_integrate_to_one() {
        let kuma = Hyperprior::Kumaraswamy { a: 1.467, b: 10.0 };
        let m = simpson(|r| kuma.log_density(r).exp(), 1e-12, 1.0 - 1e-12, 20_000);
        assert!((m - 1.0).abs() < 1e-3, "{m}");

        // half-line families: substitute v = s·tan(t)
        for p in [
            Hyperprior::HalfCauchy { scale: 0.1 },
            Hyperprior::HalfHorseshoe { scale: 2.0 },
            Hyperprior::LogNormal { mu: 0.0, sigma: 2.0 },
        ] {
            let s = 1.0;
            let f = |t: f64| {
                let v = s * t.tan();
                let jac = s / t.cos().powi(2);
                p.log_density(v).exp() * jac
            };
            let m = simpson(f, 1e-9, PI / 2.0 - 1e-9, 200_000);
            assert!((m - 1.0).abs() < 1e-3, "{p:?}: {m}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cases = [
            (Hyperprior::Kumaraswamy { a: 3.164, b: 1000.0 }, 0.08),
            (Hyperprior::HalfCauchy { scale: 0.01 }, 0.3),
            (Hyperprior::HalfHorseshoe { scale: 2.0 }, 0.7),
            (Hyperprior::LogNormal { mu: 0.0, sigma: 2.0 }, 1.9),
        ];
        for (p, v) in cases {
            let h = 1e-6 * v;
            let fd = (p.log_density(v + h) - p.log_density(v - h)) / (2.0 * h);
            let g = p.grad_log_density(v);
            assert!((fd - g).abs() < 1e-5 * g.abs().max(1.0), "{p:?}: {g} vs {fd}");
        }
    }

    #[test]
    fn samples_lie_in_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let priors = [
            Hyperprior::Uniform { lo: (-12.0f64).exp(), hi: 20.0f64.exp() },
            Hyperprior::Uniform { lo: -3.0, hi: 2.0 },
            Hyperprior::Kumaraswamy { a: 3.164, b: 1000.0 },
            Hyperprior::HalfCauchy { scale: 0.1 },
            Hyperprior::HalfHorseshoe { scale: 2.0 },
            Hyperprior::LogNormal { mu: 0.0, sigma: 2.0 },
            Hyperprior::SpikeSlabLog { log_lo: 0.5f64.ln(), log_hi: 0.0 },
        ];
        for p in priors {
            let (lo, hi) = p.support();
            for _ in 0..1000 {
                let v = p.sample(&mut rng);
                assert!(v >= lo && v <= hi, "{p:?}: {v}");
            }
        }
    }
}
