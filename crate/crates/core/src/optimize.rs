//! Bounded limited-memory quasi-Newton minimization.
//!
//! Projected L-BFGS: the two-loop recursion is applied on the free variables
//! (those not pinned at a bound by the gradient), and a backtracking Armijo
//! search runs along the projected path `P(x + t d)`. Non-finite objective
//! values are treated as rejected steps.

use std::collections::VecDeque;

/// Options mirroring the usual L-BFGS-B defaults.
#[derive(Clone, Debug)]
pub struct LbfgsbOptions {
    pub max_iters: usize,
    /// History size.
    pub memory: usize,
    /// Relative reduction tolerance on the objective.
    pub ftol: f64,
    /// Tolerance on the infinity norm of the projected gradient.
    pub pgtol: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsbOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            memory: 10,
            ftol: 2.220446049250313e-9,
            pgtol: 1e-5,
            max_line_search: 30,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    ProjectedGradient,
    RelativeReduction,
    MaxIterations,
    LineSearchFailed,
    NonFiniteStart,
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

/// Box constraints; each coordinate has `lower[i] <= x[i] <= upper[i]`.
#[derive(Clone, Debug)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        debug_assert!(lower.iter().zip(&upper).all(|(l, u)| l <= u));
        Self { lower, upper }
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    fn projected_gradient_norm(&self, x: &[f64], g: &[f64]) -> f64 {
        let mut norm = 0.0_f64;
        for i in 0..x.len() {
            let moved = (x[i] - g[i]).clamp(self.lower[i], self.upper[i]);
            norm = norm.max((moved - x[i]).abs());
        }
        norm
    }

    /// Whether coordinate `i` is pinned: at a bound with the descent direction pointing out.
    fn pinned(&self, x: &[f64], g: &[f64], i: usize) -> bool {
        (x[i] <= self.lower[i] && g[i] > 0.0) || (x[i] >= self.upper[i] && g[i] < 0.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` within `bounds`, starting at `x0` (projected first).
///
/// `f` returns the objective value and writes the gradient into its second argument.
pub fn minimize<F>(mut f: F, x0: &[f64], bounds: &Bounds, opts: &LbfgsbOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evaluations = 1;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Minimum {
            x,
            value: f64::INFINITY,
            iterations: 0,
            evaluations,
            termination: Termination::NonFiniteStart,
        };
    }

    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        if bounds.projected_gradient_norm(&x, &g) <= opts.pgtol {
            termination = Termination::ProjectedGradient;
            break;
        }
        iterations += 1;

        let free: Vec<bool> = (0..n).map(|i| !bounds.pinned(&x, &g, i)).collect();
        let mut d = two_loop(&g, &history, &free);
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            history.clear();
            d = (0..n).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
            slope = dot(&d, &g);
            if !(slope < 0.0) {
                termination = Termination::ProjectedGradient;
                break;
            }
        }

        let mut step = if history.is_empty() {
            let dn = dot(&d, &d).sqrt();
            (1.0 / dn).min(1.0)
        } else {
            1.0
        };

        let mut accepted = false;
        let mut f_new = f64::INFINITY;
        for _ in 0..opts.max_line_search {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            bounds.project(&mut x_new);
            let decrease: f64 = (0..n).map(|i| g[i] * (x_new[i] - x[i])).sum();
            f_new = f(&x_new, &mut g_new);
            evaluations += 1;
            if f_new.is_finite()
                && g_new.iter().all(|v| v.is_finite())
                && f_new <= fx + 1e-4 * decrease
            {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            termination = Termination::LineSearchFailed;
            break;
        }

        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > f64::EPSILON * dot(&y, &y) {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        let f_old = fx;
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_new;

        if (f_old - fx) <= opts.ftol * f_old.abs().max(fx.abs()).max(1.0) {
            termination = Termination::RelativeReduction;
            break;
        }
    }

    Minimum {
        x,
        value: fx,
        iterations,
        evaluations,
        termination,
    }
}

/// L-BFGS two-loop recursion restricted to the free coordinates.
fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, free: &[bool]) -> Vec<f64> {
    let mask = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .zip(free)
            .map(|(x, f)| if *f { *x } else { 0.0 })
            .collect()
    };
    let mut q = mask(g);
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let s = mask(s);
        let y = mask(y);
        let a = rho * dot(&s, &q);
        for i in 0..q.len() {
            q[i] -= a * y[i];
        }
        alphas.push((a, s, y, *rho));
    }
    if let Some((s, y, _)) = history.back() {
        let s = mask(s);
        let y = mask(y);
        let yy = dot(&y, &y);
        if yy > 0.0 {
            let gamma = dot(&s, &y) / yy;
            if gamma > 0.0 {
                q.iter_mut().for_each(|v| *v *= gamma);
            }
        }
    }
    for (a, s, y, rho) in alphas.into_iter().rev() {
        let b = rho * dot(&y, &q);
        for i in 0..q.len() {
            q[i] += (a - b) * s[i];
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}
