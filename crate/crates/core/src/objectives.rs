//! Benchmark objectives on `[-1, 1]^D`, normalized so that `f(x*) = 0` and `f(0) = 100`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default offset added before taking logs of observations.
pub const LOG_OFFSET: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    QBranin,
    SQBranin,
    SSQBranin,
    Rosenbrock,
    S35Rosenbrock,
    S50Rosenbrock,
    S65Rosenbrock,
    Levy,
    StyblinskiTang,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::QBranin,
        Family::SQBranin,
        Family::SSQBranin,
        Family::Rosenbrock,
        Family::S35Rosenbrock,
        Family::S50Rosenbrock,
        Family::S65Rosenbrock,
        Family::Levy,
        Family::StyblinskiTang,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::QBranin => "QBranin",
            Family::SQBranin => "SQBranin",
            Family::SSQBranin => "SSQBranin",
            Family::Rosenbrock => "Rosenbrock",
            Family::S35Rosenbrock => "S35Rosenbrock",
            Family::S50Rosenbrock => "S50Rosenbrock",
            Family::S65Rosenbrock => "S65Rosenbrock",
            Family::Levy => "Levy",
            Family::StyblinskiTang => "StyblinskiTang",
        }
    }

    fn base(self) -> Base {
        match self {
            Family::QBranin | Family::SQBranin | Family::SSQBranin => Base::QBranin,
            Family::Rosenbrock
            | Family::S35Rosenbrock
            | Family::S50Rosenbrock
            | Family::S65Rosenbrock => Base::Rosenbrock,
            Family::Levy => Base::Levy,
            Family::StyblinskiTang => Base::StyblinskiTang,
        }
    }

    /// Per-coordinate shift of the minimizer in transformed coordinates.
    fn shift(self, d: usize) -> Vec<f64> {
        match self {
            // original-space input shift x + s moves the minimizer by −s
            Family::SQBranin => vec![-2.0 / QBRANIN_HALF_WIDTH; d],
            Family::SSQBranin => vec![-3.0 / QBRANIN_HALF_WIDTH; d],
            Family::S35Rosenbrock => vec![0.35 - ROSENBROCK_MIN; d],
            Family::S50Rosenbrock => vec![0.50 - ROSENBROCK_MIN; d],
            Family::S65Rosenbrock => vec![0.65 - ROSENBROCK_MIN; d],
            _ => vec![0.0; d],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown objective family `{s}`")))
    }
}

const QBRANIN_HALF_WIDTH: f64 = 7.5;
/// Rosenbrock minimizer in transformed coordinates.
const ROSENBROCK_MIN: f64 = -0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
enum Base {
    QBranin,
    Rosenbrock,
    Levy,
    StyblinskiTang,
}

/// Maps `t ∈ [-1, 1]` to `[lo, hi]`.
fn to_original(t: f64, lo: f64, hi: f64) -> f64 {
    lo + 0.5 * (t + 1.0) * (hi - lo)
}

fn to_transformed(x: f64, lo: f64, hi: f64) -> f64 {
    2.0 * (x - lo) / (hi - lo) - 1.0
}

fn qbranin_raw(x1: f64, x2: f64) -> f64 {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let s = 10.0 * (1.0 - 1.0 / (8.0 * PI));
    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + s * x1.cos() + 10.0 + 5.0 * x1 * x1
}

/// Largest-magnitude negative root of `x³ − 8x + 1.25`, the per-coordinate minimizer.
fn styblinski_tang_root() -> f64 {
    let mut x = -2.9_f64;
    for _ in 0..50 {
        let f = 4.0 * x.powi(3) - 32.0 * x + 5.0;
        let df = 12.0 * x * x - 32.0;
        let step = f / df;
        x -= step;
        if step.abs() < 1e-16 {
            break;
        }
    }
    x
}

impl Base {
    fn raw(self, t: &[f64]) -> f64 {
        match self {
            Base::QBranin => t
                .chunks(2)
                .map(|p| qbranin_raw(to_original(p[0], -5.0, 10.0), to_original(p[1], 0.0, 15.0)))
                .sum(),
            Base::Rosenbrock => {
                let x: Vec<f64> = t.iter().map(|v| to_original(*v, -5.0, 10.0)).collect();
                x.windows(2)
                    .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (w[0] - 1.0).powi(2))
                    .sum()
            }
            Base::Levy => {
                let w: Vec<f64> = t
                    .iter()
                    .map(|v| 1.0 + (to_original(*v, -10.0, 10.0) - 1.0) / 4.0)
                    .collect();
                let last = w[w.len() - 1];
                let head: f64 = w[..w.len() - 1]
                    .iter()
                    .map(|wd| (wd - 1.0).powi(2) * (1.0 + 10.0 * (PI * wd + 1.0).sin().powi(2)))
                    .sum();
                (PI * w[0]).sin().powi(2)
                    + head
                    + (last - 1.0).powi(2) * (1.0 + (2.0 * PI * last).sin().powi(2))
            }
            Base::StyblinskiTang => {
                0.5 * t
                    .iter()
                    .map(|v| {
                        let x = to_original(*v, -5.0, 5.0);
                        x.powi(4) - 16.0 * x * x + 5.0 * x
                    })
                    .sum::<f64>()
            }
        }
    }

    fn minimizer(self, d: usize) -> Vec<f64> {
        match self {
            Base::QBranin => (0..d)
                .map(|i| {
                    if i % 2 == 0 {
                        to_transformed(0.0, -5.0, 10.0)
                    } else {
                        to_transformed(6.0, 0.0, 15.0)
                    }
                })
                .collect(),
            Base::Rosenbrock => vec![ROSENBROCK_MIN; d],
            Base::Levy => vec![to_transformed(1.0, -10.0, 10.0); d],
            Base::StyblinskiTang => vec![to_transformed(styblinski_tang_root(), -5.0, 5.0); d],
        }
    }

    fn check_dim(self, d: usize) -> Result<()> {
        let ok = match self {
            Base::QBranin => d >= 2 && d % 2 == 0,
            Base::Rosenbrock => d >= 2,
            Base::Levy | Base::StyblinskiTang => d >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("{self:?} is not defined in {d} dimensions")))
        }
    }
}

/// A normalized built-in objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub family: Family,
    pub dim: usize,
    /// Minimizer shift in transformed coordinates.
    pub shift: Vec<f64>,
    pub minimizer: Vec<f64>,
    /// Raw value at the minimizer.
    pub raw_min: f64,
    /// `100 / (raw(0) − raw_min)`.
    pub scale: f64,
}

impl ObjectiveSpec {
    pub fn new(family: Family, dim: usize) -> Result<Self> {
        shift_variant(family, family.shift(dim))
    }

    fn raw(&self, x: &[f64]) -> f64 {
        let t: Vec<f64> = x.iter().zip(&self.shift).map(|(v, s)| v - s).collect();
        self.family.base().raw(&t)
    }

    /// Normalized objective value.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(self.scale * (self.raw(x) - self.raw_min))
    }

    pub fn name(&self) -> String {
        self.family.name().to_string()
    }
}

/// Builds `family`'s base function with its minimizer moved by `shift` (transformed coordinates).
pub fn shift_variant(family: Family, shift: Vec<f64>) -> Result<ObjectiveSpec> {
    let dim = shift.len();
    let base = family.base();
    base.check_dim(dim)?;
    let minimizer: Vec<f64> = base
        .minimizer(dim)
        .iter()
        .zip(&shift)
        .map(|(m, s)| m + s)
        .collect();
    if minimizer.iter().any(|v| !(-1.0..=1.0).contains(v)) {
        return Err(Error::Config(format!(
            "shifted minimizer of {family} leaves the domain"
        )));
    }
    let mut spec = ObjectiveSpec {
        family,
        dim,
        shift,
        minimizer,
        raw_min: 0.0,
        scale: 1.0,
    };
    spec.raw_min = spec.raw(&spec.minimizer);
    let at_origin = spec.raw(&vec![0.0; dim]);
    if at_origin <= spec.raw_min {
        return Err(Error::Config(format!(
            "{family} cannot be normalized: the origin is optimal"
        )));
    }
    spec.scale = 100.0 / (at_origin - spec.raw_min);
    Ok(spec)
}

/// `log(y + offset)` for non-negative `y`.
pub fn log_transform(y: f64, offset: f64) -> Result<f64> {
    if y < 0.0 || y.is_nan() {
        return Err(Error::Precondition(format!("log transform of negative value {y}")));
    }
    Ok((y + offset).ln())
}

/// A user-supplied objective on `[-1, 1]^D`.
pub trait ExternalObjective: Send + Sync {
    fn dim(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> f64;
    /// Known optimal value; NI is only defined when this is present.
    fn optimum(&self) -> Option<f64> {
        None
    }
    fn name(&self) -> String {
        "External".into()
    }
}

/// Either a built-in benchmark or an external plug-in.
#[derive(Clone)]
pub enum Objective {
    Builtin(ObjectiveSpec),
    External(Arc<dyn ExternalObjective>),
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Builtin(s) => f.debug_tuple("Builtin").field(s).finish(),
            Objective::External(e) => write!(f, "External({}, {}D)", e.name(), e.dim()),
        }
    }
}

impl Objective {
    pub fn dim(&self) -> usize {
        match self {
            Objective::Builtin(s) => s.dim,
            Objective::External(e) => e.dim(),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        match self {
            Objective::Builtin(s) => s.evaluate(x),
            Objective::External(e) => {
                if x.len() != e.dim() {
                    return Err(Error::Dimension {
                        expected: e.dim(),
                        found: x.len(),
                    });
                }
                Ok(e.evaluate(x))
            }
        }
    }

    pub fn optimum(&self) -> Option<f64> {
        match self {
            Objective::Builtin(_) => Some(0.0),
            Objective::External(e) => e.optimum(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Objective::Builtin(s) => s.name(),
            Objective::External(e) => e.name(),
        }
    }
}
