use nalgebra::SymmetricEigen;
use proptest::prelude::*;

use nsbo::acquisition::{
    expected_improvement, generate_candidates, maximize_acquisition, Acquisition,
    AcquisitionConfig, AcquisitionKind, SearchBox, TrustRegionConfig, TrustRegionState,
};
use nsbo::covariance::{kumaraswamy_cdf, Covariance, Cylindrical, CylindricalParams, Informative, Matern52};
use nsbo::gp::{EvidenceSet, GpHyperparams, GpModel};
use nsbo::harness::normalized_improvement;
use nsbo::mean::MeanFunction;
use nsbo::objectives::{Family, ObjectiveSpec};

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, d)
}

fn points(d: usize, n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(point(d), n)
}

fn covariance(kind: u8, d: usize, seed: &[f64]) -> Covariance {
    let ls: Vec<f64> = seed.iter().take(d).map(|s| 0.2 + 1.5 * s).collect();
    let var = 0.5 + seed[d];
    match kind % 3 {
        0 => Covariance::Stationary(Matern52::new(var, ls)),
        1 => {
            let anchor: Vec<f64> = seed[..d].iter().map(|s| 2.0 * s - 1.0).collect();
            Covariance::Informative(Informative::new(var, ls, 0.05 + 0.95 * seed[d + 1], vec![anchor]))
        }
        _ => Covariance::Cylindrical(Cylindrical::new(
            d,
            var,
            0.1 + seed[d + 1],
            CylindricalParams {
                weights: [seed[0] + 0.01, seed[1] + 0.01, 0.3, 0.2],
                alpha: 0.5 + 0.5 * seed[d],
                beta: 1.0 + seed[d + 1],
            },
        )),
    }
}

fn mean(kind: u8, d: usize) -> MeanFunction {
    match kind % 3 {
        0 => MeanFunction::Zero,
        1 => MeanFunction::Constant(0.3),
        _ => MeanFunction::quadratic(0.1, vec![0.5; d], vec![0.2; d]),
    }
}

fn hyper(ck: u8, mk: u8, d: usize, seed: &[f64], noise: f64) -> GpHyperparams {
    GpHyperparams::new(mean(mk, d), covariance(ck, d, seed), noise)
}

fn seed_vec(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, d + 2)
}

fn outputs(xs: &[Vec<f64>]) -> Vec<f64> {
    xs.iter()
        .map(|x| x.iter().enumerate().map(|(i, v)| (v * (i as f64 + 1.0)).sin()).sum())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernels_are_symmetric(ck in 0u8..3, d in 1usize..6, s in seed_vec(5), a in point(5), b in point(5)) {
        let k = covariance(ck, d, &s);
        prop_assert_eq!(k.eval(&a[..d], &b[..d]), k.eval(&b[..d], &a[..d]));
    }

    #[test]
    fn gram_matrices_are_psd(ck in 0u8..3, s in seed_vec(4), xs in points(4, 2..25)) {
        // the origin is excluded: it carries no direction for the cylindrical kernel
        prop_assume!(xs.iter().all(|x| x.iter().any(|v| v.abs() > 1e-6)));
        let g = covariance(ck, 4, &s).gram(&xs);
        let trace = g.trace();
        let min = SymmetricEigen::new(g).eigenvalues.min();
        prop_assert!(min >= -1e-8 * trace, "min eigenvalue {min}, trace {trace}");
    }

    #[test]
    fn posterior_variance_below_prior(ck in 0u8..3, mk in 0u8..3, s in seed_vec(3), xs in points(3, 1..20), t in point(3)) {
        let h = hyper(ck, mk, 3, &s, 1e-3);
        let ev = EvidenceSet::from_parts(3, xs.clone(), outputs(&xs)).unwrap();
        let m = GpModel::new(h, &ev).unwrap();
        let p = m.predict(&t);
        prop_assert!(p.variance >= 0.0);
        prop_assert!(p.variance <= m.prior_variance_at(&t) + 1e-8);
    }

    #[test]
    fn predictions_ignore_evidence_order(ck in 0u8..3, mk in 0u8..3, s in seed_vec(3), xs in points(3, 2..15), t in point(3), rot in 0usize..15) {
        let ys = outputs(&xs);
        let h = hyper(ck, mk, 3, &s, 1e-3);
        let a = GpModel::new(h.clone(), &EvidenceSet::from_parts(3, xs.clone(), ys.clone()).unwrap()).unwrap();
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.rotate_left(rot % xs.len());
        order.reverse();
        let xs2 = order.iter().map(|&i| xs[i].clone()).collect();
        let ys2 = order.iter().map(|&i| ys[i]).collect();
        let b = GpModel::new(h, &EvidenceSet::from_parts(3, xs2, ys2).unwrap()).unwrap();
        let (pa, pb) = (a.predict(&t), b.predict(&t));
        prop_assert!((pa.mean - pb.mean).abs() <= 1e-10 * (1.0 + pa.mean.abs()));
        prop_assert!((pa.variance - pb.variance).abs() <= 1e-10 * (1.0 + pa.variance.abs()));
    }

    #[test]
    fn duplicate_noise_free_observation_keeps_mean(s in seed_vec(2), xs in points(2, 2..8), dup in 0usize..8, t in point(2)) {
        let h = GpHyperparams::new(MeanFunction::Zero, covariance(0, 2, &s), 0.0);
        let ys = outputs(&xs);
        let a = GpModel::new(h.clone(), &EvidenceSet::from_parts(2, xs.clone(), ys.clone()).unwrap()).unwrap();
        prop_assume!(a.jitter() < 1e-9);
        let i = dup % xs.len();
        let mut xs2 = xs.clone();
        let mut ys2 = ys.clone();
        xs2.push(xs[i].clone());
        ys2.push(ys[i]);
        let b = GpModel::new(h, &EvidenceSet::from_parts(2, xs2, ys2).unwrap()).unwrap();
        prop_assert!((a.predict(&t).mean - b.predict(&t).mean).abs() <= 1e-6);
    }

    #[test]
    fn kumaraswamy_is_monotone(a in 0.5..1.0f64, b in 1.0..2.0f64, r1 in 0.0..1.0f64, r2 in 0.0..1.0f64) {
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        prop_assert!(kumaraswamy_cdf(lo, a, b) <= kumaraswamy_cdf(hi, a, b));
        prop_assert_eq!(kumaraswamy_cdf(0.0, a, b), 0.0);
        prop_assert!((kumaraswamy_cdf(1.0, a, b) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ei_is_non_negative_and_grows_with_uncertainty(m in -3.0..3.0f64, s1 in 0.0..2.0f64, s2 in 0.0..2.0f64, best in -3.0..3.0f64) {
        use nsbo::gp::PosteriorPredictive;
        let ei = |s: f64| expected_improvement(&PosteriorPredictive { mean: m, variance: s * s }, best);
        prop_assert!(ei(s1) >= 0.0);
        if m >= best {
            let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            prop_assert!(ei(lo) <= ei(hi) + 1e-15);
        }
    }

    #[test]
    fn quadratic_mean_is_convex(w in prop::collection::vec(0.0..3.0f64, 3), a in point(3), b in point(3), t in 0.0..1.0f64) {
        let m = MeanFunction::quadratic(0.2, w, vec![0.1, -0.3, 0.0]);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(p, q)| t * p + (1.0 - t) * q).collect();
        prop_assert!(m.eval(&mid) <= t * m.eval(&a) + (1.0 - t) * m.eval(&b) + 1e-12);
    }

    #[test]
    fn trust_region_sides_are_powers_of_two(outcomes in prop::collection::vec(any::<bool>(), 0..120)) {
        let cfg = TrustRegionConfig::default();
        let mut tr = TrustRegionState::new(vec![0.0; 3], cfg.clone());
        for o in outcomes {
            tr.update(o, &[0.1, 0.2, 0.3]);
            let k = (tr.side / cfg.init_side).log2();
            let clamped = tr.side == cfg.min_side || tr.side == cfg.max_side;
            prop_assert!(clamped || (k - k.round()).abs() < 1e-12, "side {}", tr.side);
            prop_assert!(tr.side >= cfg.min_side && tr.side <= cfg.max_side);
        }
    }

    #[test]
    fn normalized_improvement_is_monotone_and_bounded(drops in prop::collection::vec(0.0..5.0f64, 1..40), start in 1.0..100.0f64) {
        let mut inc = vec![start];
        for d in drops {
            let last = *inc.last().unwrap();
            inc.push((last - d).max(0.0));
        }
        let ni = normalized_improvement(&inc, 0.0);
        prop_assert_eq!(ni.values[0], 0.0);
        prop_assert!(ni.values.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(ni.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn objectives_are_deterministic_and_non_negative(fam in 0usize..9, x in point(4)) {
        let spec = ObjectiveSpec::new(Family::ALL[fam], 4).unwrap();
        let a = spec.evaluate(&x).unwrap();
        prop_assert_eq!(a, spec.evaluate(&x).unwrap());
        prop_assert!(a >= -1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn candidates_are_reproducible(seed in any::<u64>(), step in 1u64..500, inc in point(3)) {
        let mut cfg = AcquisitionConfig::new(AcquisitionKind::Ei, 3, 50);
        cfg.n_sobol = 64;
        let a = generate_candidates(seed, step, &inc, None, &cfg);
        prop_assert_eq!(&a, &generate_candidates(seed, step, &inc, None, &cfg));
        prop_assert!(a.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn acquisition_stays_inside_trust_region(ck in 0u8..3, s in seed_vec(3), xs in points(3, 3..10), c in point(3), side in 0.05..1.6f64) {
        let h = hyper(ck, 1, 3, &s, 1e-3);
        let ys = outputs(&xs);
        let ev = EvidenceSet::from_parts(3, xs, ys.clone()).unwrap();
        let model = GpModel::new(h, &ev).unwrap();
        let mut cfg = AcquisitionConfig::new(AcquisitionKind::Ei, 3, 50);
        cfg.n_sobol = 128;
        cfg.n_starts = 3;
        cfg.max_iters = 30;
        let mut tr = TrustRegionState::new(c.clone(), TrustRegionConfig::default());
        tr.side = side;
        let region = tr.region(model.hyperparams().lengthscales());
        let best = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let acq = Acquisition::new(&model, &cfg, best, 1);
        let cands = generate_candidates(7, 1, &c, Some(&region), &cfg);
        let r = maximize_acquisition(&acq, &cands, Some(&region));
        prop_assert!(region.contains(&r.x));
        prop_assert!(SearchBox::unit(3).contains(&r.x));
    }
}
