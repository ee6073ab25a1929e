//! Normalized improvement and its aggregates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// NI series `NI_0..NI_N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NiSeries {
    pub values: Vec<f64>,
    /// The initial incumbent was already optimal; every value is then 1.
    pub degenerate: bool,
}

/// NI from the incumbent trajectory `incumbents[n] = f(x_best^{(n₀+n)})`.
///
/// Values are clipped to `[0, 1]` so that rounding below `f_star` cannot exceed 1.
pub fn normalized_improvement(incumbents: &[f64], f_star: f64) -> NiSeries {
    let Some(&initial) = incumbents.first() else {
        return NiSeries {
            values: Vec::new(),
            degenerate: false,
        };
    };
    let gap = initial - f_star;
    if !(gap > 0.0) {
        return NiSeries {
            values: vec![1.0; incumbents.len()],
            degenerate: true,
        };
    }
    let values = incumbents
        .iter()
        .map(|f| ((initial - f) / gap).clamp(0.0, 1.0))
        .collect();
    NiSeries {
        values,
        degenerate: false,
    }
}

/// Mean of `NI_1..NI_N` for one run.
pub fn run_mean_ni(ni: &[f64]) -> Result<f64> {
    if ni.len() < 2 {
        return Err(Error::Precondition("mean NI needs at least one acquisition".into()));
    }
    Ok(ni[1..].iter().sum::<f64>() / (ni.len() - 1) as f64)
}

/// Mean NI over steps, then over runs. All series must have the same length.
pub fn mean_ni(series: &[&[f64]]) -> Result<f64> {
    let Some(first) = series.first() else {
        return Err(Error::Precondition("mean NI of no runs".into()));
    };
    if series.iter().any(|s| s.len() != first.len()) {
        return Err(Error::Precondition("runs have different budgets".into()));
    }
    let per_run = series
        .iter()
        .map(|s| run_mean_ni(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_run.iter().sum::<f64>() / per_run.len() as f64)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}
