//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Failures are reported but only change the exit status when
//! `NSBO_ACCEPTANCE_STRICT=1` is set.

use std::collections::HashSet;
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nsbo::acquisition::{expected_improvement, TrustRegionConfig, TrustRegionState};
use nsbo::covariance::{
    informative_cov, AnchorSet, Covariance, Cylindrical, CylindricalParams, Informative, Matern52,
    ShapingConfig,
};
use nsbo::gp::{
    fit_saas_selection, EvidenceSet, FitOptions, GpHyperparams, GpModel, ModelSpec, SAAS_TAUS,
};
use nsbo::harness::{run_all, run_bo, run_mean_ni, write_record, RunConfig, RunRecord};
use nsbo::hyperprior::Hyperprior;
use nsbo::mean::MeanFunction;
use nsbo::objectives::{Family, ObjectiveSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// Reference formulas, written out independently of the library.

fn ref_matern(r2: f64, variance: f64) -> f64 {
    let r = r2.sqrt();
    let s = 5f64.sqrt() * r;
    variance * (1.0 + s + 5.0 * r2 / 3.0) * (-s).exp()
}

fn scaled_sq(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    a.iter().zip(b).zip(ls).map(|((p, q), l)| ((p - q) / l).powi(2)).sum()
}

fn ref_informative(a: &[f64], b: &[f64], k: &Informative) -> f64 {
    let dist = k.distance_lengthscales.as_deref().unwrap_or(&k.lengthscales);
    let l = k.anchors.len() as f64;
    let shape = |x: &[f64]| {
        let (mut phi, mut u) = (1.0, 1.0);
        for anchor in &k.anchors {
            let g = (-0.5 * scaled_sq(x, anchor, dist)).exp();
            phi += (1.0 / k.ratio - 1.0) * g / l;
            u += (k.ratio - 1.0) * g / l;
        }
        (phi, u)
    };
    let (pa, ua) = shape(a);
    let (pb, ub) = shape(b);
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(&k.lengthscales)
        .map(|((p, q), l)| (p / (l * ua.sqrt()) - q / (l * ub.sqrt())).powi(2))
        .sum();
    k.variance * pa.sqrt() * pb.sqrt() * ref_matern(r2, 1.0)
}

fn ref_cylindrical(a: &[f64], b: &[f64], k: &Cylindrical) -> f64 {
    let d = a.len() as f64;
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    let warp = |n: f64| {
        let r = (n / d.sqrt()).min(1.0);
        1.0 - (1.0 - r.powf(k.angular.alpha)).powf(k.angular.beta)
    };
    let t = (warp(na) - warp(nb)) / k.lengthscale;
    let cos = a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() / (na * nb);
    let total: f64 = k.angular.weights.iter().sum();
    let ang: f64 = (0..4).map(|p| k.angular.weights[p] / total * cos.powi(p as i32)).sum();
    ref_matern(t * t, k.variance) * ang
}

fn ref_kernel(cov: &Covariance, a: &[f64], b: &[f64]) -> f64 {
    match cov {
        Covariance::Stationary(m) => ref_matern(scaled_sq(a, b, &m.lengthscales), m.variance),
        Covariance::Informative(k) => ref_informative(a, b, k),
        Covariance::Cylindrical(k) => ref_cylindrical(a, b, k),
    }
}

fn ref_mean(m: &MeanFunction, x: &[f64]) -> f64 {
    match m {
        MeanFunction::Zero => 0.0,
        MeanFunction::Constant(b) => *b,
        MeanFunction::Quadratic(q) => {
            q.offset
                + x.iter()
                    .zip(&q.center)
                    .zip(&q.weights)
                    .map(|((v, c), w)| w * (v - c).powi(2))
                    .sum::<f64>()
        }
    }
}

// ---------------------------------------------------------------------------
// Random model states.

fn rand_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn rand_covariance(rng: &mut ChaCha8Rng, kind: usize, d: usize) -> Covariance {
    let var = rng.random_range(0.3..3.0);
    let scale = (d as f64).sqrt();
    let ls: Vec<f64> = (0..d).map(|_| scale * rng.random_range(0.2..1.5)).collect();
    match kind {
        0 => Covariance::Stationary(Matern52::new(var, ls)),
        1 => {
            let n_anchors = rng.random_range(1..=3);
            let anchors = (0..n_anchors).map(|_| rand_point(rng, d)).collect();
            let ratio = 1.0 - rng.random_range(0.0..0.99);
            Covariance::Informative(Informative::new(var, ls, ratio, anchors))
        }
        _ => Covariance::Cylindrical(Cylindrical::new(
            d,
            var,
            rng.random_range(0.1..1.0),
            CylindricalParams {
                weights: [0, 1, 2, 3].map(|_| rng.random_range(0.05..1.0)),
                alpha: rng.random_range(0.5..2.0),
                beta: rng.random_range(1.0..5.0),
            },
        )),
    }
}

fn rand_mean(rng: &mut ChaCha8Rng, kind: usize, d: usize) -> MeanFunction {
    match kind {
        0 => MeanFunction::Zero,
        1 => MeanFunction::Constant(rng.random_range(-1.0..1.0)),
        _ => MeanFunction::quadratic(
            rng.random_range(-1.0..1.0),
            (0..d).map(|_| rng.random_range(0.0..2.0)).collect(),
            rand_point(rng, d),
        ),
    }
}

fn rand_evidence(rng: &mut ChaCha8Rng, d: usize, n: usize) -> EvidenceSet {
    let xs: Vec<Vec<f64>> = (0..n).map(|_| rand_point(rng, d)).collect();
    let ys = xs
        .iter()
        .map(|x| x.iter().enumerate().map(|(i, v)| (v * (i as f64 + 1.3)).sin()).sum::<f64>() + rng.random_range(-0.1..0.1))
        .collect();
    EvidenceSet::from_parts(d, xs, ys).unwrap()
}

// ---------------------------------------------------------------------------
// Criteria.

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for inst in 0..100 {
        let (ck, mk) = (inst % 3, (inst / 3) % 3);
        let d = rng.random_range(1..=20);
        let n = rng.random_range(1..=50);
        let hyper = GpHyperparams::new(rand_mean(&mut rng, mk, d), rand_covariance(&mut rng, ck, d), 1e-3);
        let ev = rand_evidence(&mut rng, d, n);
        let model = GpModel::new(hyper.clone(), &ev).unwrap();
        let xs = ev.inputs();
        let noise = hyper.noise_variance + model.jitter();
        let k = DMatrix::from_fn(n, n, |i, j| {
            ref_kernel(&hyper.covariance, &xs[i], &xs[j]) + if i == j { noise } else { 0.0 }
        });
        let kinv = k.try_inverse().expect("invertible");
        let resid = DVector::from_iterator(n, xs.iter().zip(ev.outputs()).map(|(x, y)| y - ref_mean(&hyper.mean, x)));
        let weights = &kinv * &resid;
        let y_scale = ev.outputs().iter().fold(0.0f64, |m, y| m.max(y.abs())).max(1.0);
        for _ in 0..5 {
            let t = rand_point(&mut rng, d);
            let kx = DVector::from_iterator(n, xs.iter().map(|x| ref_kernel(&hyper.covariance, &t, x)));
            let mean = ref_mean(&hyper.mean, &t) + kx.dot(&weights);
            let prior = ref_kernel(&hyper.covariance, &t, &t);
            let var = prior - kx.dot(&(&kinv * &kx));
            let p = model.predict(&t);
            worst = worst
                .max((p.mean - mean).abs() / (mean.abs() + y_scale))
                .max((p.variance - var).abs() / (var.abs() + prior));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-8 && elapsed < Duration::from_secs(60),
        format!("worst relative error {worst:.2e} over 100 instances, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn psd_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let d = rng.random_range(1..=20);
        let n = rng.random_range(5..=60);
        let n_anchors = rng.random_range(1..=4);
        let anchors = AnchorSet::new(
            (0..n_anchors).map(|_| rand_point(&mut rng, d)).collect(),
            (0..n_anchors).map(|_| 1.0 - rng.random_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let shaping = ShapingConfig {
            variance: rng.random_range(0.1..5.0),
            lengthscales: (0..d).map(|_| rng.random_range(0.05..2.0 * (d as f64).sqrt())).collect(),
            distance_lengthscales: rng.random_bool(0.5).then(|| vec![0.1 * (d as f64).sqrt(); d]),
        };
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                // some points sit right on an anchor
                if i < n_anchors { anchors.locations[i].clone() } else { rand_point(&mut rng, d) }
            })
            .collect();
        let g = DMatrix::from_fn(n, n, |i, j| informative_cov(&xs[i], &xs[j], &shaping, &anchors));
        let trace = g.trace();
        let min = SymmetricEigen::new(g).eigenvalues.min();
        worst = worst.min(min / trace);
    }
    let elapsed = start.elapsed();
    outcome(
        worst >= -1e-8 && elapsed < Duration::from_secs(60),
        format!("min eigenvalue/trace {worst:.2e}, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn stationarity_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(1..=20);
        let var = rng.random_range(0.1..5.0);
        let ls: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..3.0)).collect();
        let anchors = AnchorSet::tied((0..3).map(|_| rand_point(&mut rng, d)).collect(), 1.0).unwrap();
        let shaping = ShapingConfig {
            variance: var,
            lengthscales: ls.clone(),
            distance_lengthscales: None,
        };
        let xs: Vec<Vec<f64>> = (0..20).map(|_| rand_point(&mut rng, d)).collect();
        for a in &xs {
            for b in &xs {
                let inf = informative_cov(a, b, &shaping, &anchors);
                worst = worst.max((inf - ref_matern(scaled_sq(a, b, &ls), var)).abs());
            }
        }
    }
    outcome(worst <= 1e-12, format!("max elementwise difference {worst:.2e}"))
}

fn ei_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut worst = f64::NEG_INFINITY;
    for state in 0..10_000 {
        let d = rng.random_range(1..=6);
        let n = rng.random_range(1..=15);
        let hyper = GpHyperparams::new(
            rand_mean(&mut rng, (state / 3) % 3, d),
            rand_covariance(&mut rng, state % 3, d),
            1e-3,
        );
        let model = GpModel::new(hyper, &rand_evidence(&mut rng, d, n)).unwrap();
        let tests: Vec<Vec<f64>> = (0..8).map(|_| rand_point(&mut rng, d)).collect();
        let posts: Vec<_> = tests.iter().map(|t| model.predict(t)).collect();
        let f_best = posts.iter().map(|p| p.mean).fold(f64::INFINITY, f64::min);
        for p in &posts {
            worst = worst.max(expected_improvement(p, f_best) - p.std() * inv_sqrt_2pi);
        }
    }
    outcome(worst <= 1e-12, format!("max EI - σ/√(2π) = {worst:.2e} over 10^4 states"))
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut where_ = String::new();
    for ck in 0..3 {
        for mk in 0..3 {
            for _ in 0..4 {
                let d = rng.random_range(1..=5);
                let hyper = GpHyperparams::new(rand_mean(&mut rng, mk, d), rand_covariance(&mut rng, ck, d), 1e-2);
                let n = rng.random_range(3..=15);
                let ev = rand_evidence(&mut rng, d, n);
                let model = GpModel::new(hyper.clone(), &ev).unwrap();
                let grad = model.log_marginal_likelihood_grad();
                let p0 = hyper.params();
                let lml = |p: &[f64]| {
                    let mut h = hyper.clone();
                    h.set_params(p);
                    GpModel::new(h, &ev).unwrap().log_marginal_likelihood()
                };
                for (i, g) in grad.iter().enumerate() {
                    let h = 1e-5 * p0[i].abs().max(1e-2);
                    let (mut up, mut dn) = (p0.clone(), p0.clone());
                    up[i] += h;
                    dn[i] -= h;
                    let fd = (lml(&up) - lml(&dn)) / (2.0 * h);
                    let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1.0);
                    if rel > worst {
                        worst = rel;
                        where_ = format!("{:?}/{}", ck, hyper.param_names()[i]);
                    }
                }
            }
        }
    }
    outcome(worst <= 1e-4, format!("worst relative error {worst:.2e} ({where_})"))
}

fn objective_pins() -> Outcome {
    let mut failures = Vec::new();
    let mut checked = 0;
    for fam in Family::ALL {
        for d in [2, 20, 50, 100] {
            let spec = ObjectiveSpec::new(fam, d).unwrap();
            let f0 = spec.evaluate(&vec![0.0; d]).unwrap();
            let fstar = spec.evaluate(&spec.minimizer).unwrap();
            if (f0 - 100.0).abs() > 1e-6 || fstar.abs() > 1e-6 {
                failures.push(format!("{fam} {d}D: f(0)={f0}, f(x*)={fstar}"));
            }
            checked += 1;
        }
    }
    let expected = [
        (Family::Rosenbrock, -0.2, 1e-12),
        (Family::Levy, 0.1, 1e-12),
        (Family::StyblinskiTang, -0.58, 5e-3),
        (Family::S35Rosenbrock, 0.35, 1e-12),
        (Family::S50Rosenbrock, 0.50, 1e-12),
        (Family::S65Rosenbrock, 0.65, 1e-12),
    ];
    for (fam, v, tol) in expected {
        for d in [2, 20, 50, 100] {
            let spec = ObjectiveSpec::new(fam, d).unwrap();
            if spec.minimizer.iter().any(|m| (m - v).abs() > tol) {
                failures.push(format!("{fam} {d}D minimizer {:?}", &spec.minimizer[..2]));
            }
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{checked} objective/dimension pairs and 6 minimizer pins")
        } else {
            failures.join("; ")
        },
    )
}

/// Reference trust-region machine kept deliberately naive.
#[derive(Clone, Copy, PartialEq, Debug)]
struct RefRegion {
    side: f64,
    successes: u32,
    failures: u32,
}

fn ref_step(s: RefRegion, improved: bool, cfg: &TrustRegionConfig) -> RefRegion {
    let mut n = s;
    if improved {
        n.successes += 1;
        n.failures = 0;
        if n.successes == cfg.success_tolerance {
            n.side = f64::min(2.0 * n.side, cfg.max_side);
            n.successes = 0;
        }
    } else {
        n.failures += 1;
        n.successes = 0;
        if n.failures == cfg.failure_tolerance {
            n.side = f64::max(n.side / 2.0, cfg.min_side);
            n.failures = 0;
        }
    }
    n
}

fn trust_region_machine() -> Outcome {
    let cfg = TrustRegionConfig::default();
    let mut problems = Vec::new();
    let mut sequences = 0u64;
    let start_sides = [cfg.min_side, 0.1, cfg.init_side / 4.0, cfg.max_side];
    let len = 16;
    for &side in &start_sides {
        for bits in 0u32..(1 << len) {
            let mut tr = TrustRegionState::new(vec![0.0; 2], cfg.clone());
            tr.side = side;
            let mut r = RefRegion { side, successes: 0, failures: 0 };
            for k in 0..len {
                let improved = bits >> k & 1 == 1;
                tr.update(improved, &[0.1, -0.1]);
                r = ref_step(r, improved, &cfg);
                if (tr.side, tr.success_count, tr.failure_count) != (r.side, r.successes, r.failures) {
                    problems.push(format!("start {side}, outcomes {bits:016b}, step {k}"));
                    break;
                }
            }
            sequences += 1;
        }
    }
    // spot checks stated directly
    let mut tr = TrustRegionState::new(vec![0.0], cfg.clone());
    tr.side = 0.4;
    for _ in 0..cfg.failure_tolerance {
        tr.update(false, &[0.0]);
    }
    if tr.side != 0.2 {
        problems.push(format!("{} failures left side {}", cfg.failure_tolerance, tr.side));
    }
    for _ in 0..cfg.success_tolerance {
        tr.update(true, &[0.0]);
    }
    if tr.side != 0.4 {
        problems.push(format!("{} successes left side {}", cfg.success_tolerance, tr.side));
    }
    for i in 0..200 {
        tr.update(i % 2 == 0, &[0.0]);
    }
    if tr.side != 0.4 {
        problems.push("alternating outcomes changed the side".into());
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!("{sequences} outcome sequences match the reference machine")
        } else {
            problems.into_iter().take(3).collect::<Vec<_>>().join("; ")
        },
    )
}

fn desk_config(objective: Family, method: &str) -> RunConfig {
    RunConfig {
        objective,
        dim: 20,
        method: method.parse().unwrap(),
        n0: 16,
        budget: 50,
        seeds: (0..5).collect(),
        ..RunConfig::default()
    }
}

fn desk_runs(objective: Family, method: &str) -> (Vec<f64>, Duration) {
    let start = Instant::now();
    let records = run_all(&desk_config(objective, method)).unwrap();
    let per_trial = start.elapsed() / records.len() as u32;
    let means = records
        .iter()
        .map(|r| run_mean_ni(&r.ni().expect("built-in objectives report NI")).unwrap())
        .collect();
    (means, per_trial)
}

fn fmt_series(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
}

fn qbranin_ordering() -> Outcome {
    let (s, ts) = desk_runs(Family::QBranin, "S");
    let (i, ti) = desk_runs(Family::QBranin, "I+X0");
    let wins = s.iter().zip(&i).filter(|(a, b)| b > a).count();
    let slowest = ts.max(ti);
    outcome(
        wins >= 4 && slowest <= Duration::from_secs(600),
        format!(
            "I+X0 beats S in {wins}/5 seeds (S: {}; I+X0: {}), {:.1}s/trial",
            fmt_series(&s),
            fmt_series(&i),
            slowest.as_secs_f64()
        ),
    )
}

fn anchor_adaptivity() -> Outcome {
    let (fixed, _) = desk_runs(Family::StyblinskiTang, "I+X0");
    let (adaptive, _) = desk_runs(Family::StyblinskiTang, "I+XA");
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (a, b) = (mean(&adaptive), mean(&fixed));
    outcome(a > b, format!("mean NI I+XA {a:.3} vs I+X0 {b:.3}"))
}

fn saas_sanity() -> Outcome {
    let d = 20;
    let pts = nsbo::qmc::scrambled_sobol(d, 40, 11, 0);
    let xs: Vec<Vec<f64>> = pts.iter().map(|u| u.iter().map(|v| 2.0 * v - 1.0).collect()).collect();
    let ys = xs.iter().map(|x| x[0] * x[0] + x[1] * x[1]).collect();
    let ev = EvidenceSet::from_parts(d, xs, ys).unwrap();
    let template = GpHyperparams::new(
        MeanFunction::Constant(0.5),
        Covariance::Stationary(Matern52::new(1.0, vec![(d as f64).sqrt() * 0.5; d])),
        1e-3,
    );
    let spec = ModelSpec::with_default_priors(template, &ev, Hyperprior::Uniform { lo: 0.0, hi: 1.0 });
    let sel = fit_saas_selection(&spec, &ev, &SAAS_TAUS, &FitOptions::default()).unwrap();
    let inv: Vec<f64> = sel.model.hyperparams().lengthscales().unwrap().iter().map(|l| 1.0 / (l * l)).collect();
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        if v.len() % 2 == 0 { 0.5 * (v[m - 1] + v[m]) } else { v[m] }
    };
    let active = median(inv[..2].to_vec());
    let inactive = median(inv[2..].to_vec());
    outcome(
        inactive < active,
        format!("τ = {}, median 1/λ² active {active:.3e}, inactive {inactive:.3e}", sel.tau),
    )
}

fn reproducibility() -> Outcome {
    let config = RunConfig {
        objective: Family::SQBranin,
        dim: 10,
        method: "I+XA+TR".parse().unwrap(),
        n0: 8,
        budget: 15,
        ..RunConfig::default()
    };
    let write = |rec: &RunRecord| {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_record(rec, Some(&config), dir.path()).unwrap();
        (fs::read(&paths.csv).unwrap(), fs::read(&paths.manifest).unwrap())
    };
    let a = write(&run_bo(&config, 3).unwrap());
    let b = write(&run_bo(&config, 3).unwrap());
    let rows = String::from_utf8_lossy(&a.0).lines().count() - 1;
    outcome(a == b, format!("{rows} CSV rows, csv and manifest byte-identical: {}", a == b))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("oracle equivalence", oracle_equivalence),
        ("PSD suite", psd_suite),
        ("stationarity recovery", stationarity_recovery),
        ("EI bound", ei_bound),
        ("gradient checks", gradient_checks),
        ("test-function pins", objective_pins),
        ("trust-region state machine", trust_region_machine),
        ("desk QBranin 20D: I+X0 over S", qbranin_ordering),
        ("desk Styblinski-Tang 20D: I+XA over I+X0", anchor_adaptivity),
        ("SAAS sanity", saas_sanity),
        ("reproducibility", reproducibility),
    ];
    let filter: HashSet<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let o = check();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        return ExitCode::SUCCESS;
    }
    println!("{failed} criterion(s) failed");
    if std::env::var("NSBO_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
