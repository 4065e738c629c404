use proptest::prelude::*;
use riskscape::datagen::{generate, GenConfig, NoiseSpec};
use riskscape::experiments::stats::trimmed_mean;
use riskscape::landscape::{
    certify_strong_morse, find_critical_points, match_critical_points, spread, CriticalPoint, GridSpec, Region,
    SearchConfig,
};
use riskscape::math::{sym_eigen, SymMatrix};
use riskscape::models::{gmm_swap, EmpiricalRisk, Family, FnObjective, ModelSpec, RobustLoss};
use riskscape::optim::{minimize, IterateStorage, OptConfig};
use riskscape::par::Execution;
use riskscape::{Dataset, Objective, ParamVec};

fn dataset(family: Family, n: usize, d: usize, seed: u64) -> Dataset {
    let cfg = match family {
        Family::Gmm2 => GenConfig::new(family, n, d, seed).with_separation(1.0),
        _ => GenConfig::new(family, n, d, seed).with_noise(NoiseSpec::Contaminated { delta: 0.2, var: 25.0 }),
    };
    generate(&cfg).unwrap().0
}

/// Largest eigenvalue of `X^T X / n`.
fn gram_max(data: &Dataset) -> f64 {
    let x = data.features();
    let gram = SymMatrix::new(x.tr_mul(x) / data.n() as f64).unwrap();
    sym_eigen(&gram).unwrap().max()
}

fn point(v: &[f64]) -> ParamVec {
    ParamVec::from_column_slice(v)
}

/// `sum_i s_i (x_i - c_i)^2 / 2`, a nondegenerate quadratic with a chosen signature.
fn signed_quadratic(center: Vec<f64>, curv: Vec<f64>) -> FnObjective {
    let dim = center.len();
    let (c1, c2, k1, k2) = (center.clone(), center, curv.clone(), curv.clone());
    FnObjective::new(
        dim,
        move |t| t.iter().zip(&c1).zip(&k1).map(|((x, c), k)| 0.5 * k * (x - c).powi(2)).sum(),
        move |t| ParamVec::from_fn(t.len(), |i, _| k2[i] * (t[i] - c2[i])),
        move |_| SymMatrix::from_diagonal(&curv),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projected_gd_descends_below_the_smoothness_step(seed in 0u64..1000, d in 1usize..6) {
        let data = dataset(Family::RobustRegression, 20 * d, d, seed);
        let spec = ModelSpec::robust_regression(RobustLoss::huber(), 5.0);
        // the Huber loss has curvature at most one
        let h = 1.0 / gram_max(&data);
        let obj = EmpiricalRisk::new(&spec, &data).unwrap();
        let cfg = OptConfig::gd(h, 200).with_radius(5.0).with_storage(IterateStorage::FinalOnly);
        let t = minimize(&obj, &ParamVec::from_element(d, 1.0), &cfg).unwrap();
        for w in t.risks.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn prox_gd_objective_never_increases(seed in 0u64..1000, d in 2usize..8, lambda in 0.0f64..0.2) {
        let data = dataset(Family::Classification, 15 * d, d, seed);
        let spec = ModelSpec::classification(4.0).with_lambda(lambda);
        // |d^2/du^2 (y - sigma(u))^2| <= 2/16 + 2 * 0.0962 < 0.35
        let h = 1.0 / (0.35 * gram_max(&data));
        let obj = EmpiricalRisk::new(&spec, &data).unwrap();
        let cfg = OptConfig::proxgd(h, 200, lambda).with_radius(4.0).with_storage(IterateStorage::FinalOnly);
        let t = minimize(&obj, &ParamVec::from_element(d, 0.5), &cfg).unwrap();
        for w in t.objective.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn trust_region_risk_never_increases(seed in 0u64..1000) {
        let data = dataset(Family::Gmm2, 200, 1, seed);
        let spec = ModelSpec::gmm2(10.0);
        let obj = EmpiricalRisk::new(&spec, &data).unwrap();
        let t = minimize(&obj, &point(&[2.0, 0.3]), &OptConfig::trust_region(100)).unwrap();
        for w in t.risks.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn gmm_risk_is_exchange_symmetric(seed in 0u64..1000, d in 1usize..5, scale in 0.1f64..3.0) {
        let data = dataset(Family::Gmm2, 40, d, seed);
        let spec = ModelSpec::gmm2(20.0);
        let obj = EmpiricalRisk::new(&spec, &data).unwrap();
        let theta = ParamVec::from_fn(2 * d, |i, _| scale * ((i as f64 + seed as f64).sin()));
        let swapped = gmm_swap(&theta);
        prop_assert_eq!(obj.value(&theta).unwrap(), obj.value(&swapped).unwrap());
        let g = obj.gradient(&theta).unwrap();
        let gs = obj.gradient(&swapped).unwrap();
        prop_assert!((gmm_swap(&g) - gs).norm() <= 1e-12 * (1.0 + g.norm()));
    }

    #[test]
    fn bounded_risks_stay_in_unit_interval(seed in 0u64..1000, d in 1usize..8, r in 0.0f64..10.0) {
        let theta = ParamVec::from_fn(d, |i, _| r * ((i + 1) as f64 * 0.7 + seed as f64).cos() / (d as f64).sqrt());
        let cls = dataset(Family::Classification, 30, d, seed);
        let reg = dataset(Family::RobustRegression, 30, d, seed);
        let a = EmpiricalRisk::new(&ModelSpec::classification(20.0), &cls).unwrap().value(&theta).unwrap();
        let tukey = ModelSpec::robust_regression(RobustLoss::default(), 20.0);
        let b = EmpiricalRisk::new(&tukey, &reg).unwrap().value(&theta).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((0.0..=1.0).contains(&b));
    }

    #[test]
    fn generation_is_a_function_of_config_and_seed(seed in 0u64..u64::MAX, d in 1usize..6) {
        let a = dataset(Family::Classification, 10, d, seed);
        let b = dataset(Family::Classification, 10, d, seed);
        let c = dataset(Family::Classification, 10, d, seed ^ 1);
        prop_assert_eq!(&a, &b);
        prop_assert_ne!(&a, &c);
    }

    #[test]
    fn reported_critical_points_reverify(
        center in prop::collection::vec(-0.5f64..0.5, 1..4),
        signs in prop::collection::vec(prop::bool::ANY, 3),
        mags in prop::collection::vec(0.5f64..3.0, 3),
    ) {
        let dim = center.len();
        let curv: Vec<f64> = (0..dim).map(|i| if signs[i] { mags[i] } else { -mags[i] }).collect();
        let f = signed_quadratic(center, curv.clone());
        let pts = find_critical_points(&f, &Region::origin_ball(dim, 1.5), &SearchConfig::new(6, 3)).unwrap();
        prop_assert_eq!(pts.len(), 1);
        for p in &pts {
            prop_assert!(f.gradient(&p.location).unwrap().norm() <= 1e-8);
            prop_assert_eq!(p.index, curv.iter().filter(|k| **k < 0.0).count());
        }
    }

    #[test]
    fn morse_certificate_is_monotone(
        center in prop::collection::vec(-0.5f64..0.5, 2),
        k in prop::collection::vec(0.2f64..2.0, 2),
        eps in 0.01f64..0.5,
        eta in 0.1f64..2.5,
        shrink in 0.1f64..1.0,
    ) {
        let f = signed_quadratic(center, vec![k[0], -k[1]]);
        let ball = Region::origin_ball(2, 1.0);
        let grid = GridSpec { per_axis: 21, boundary: 100, ..GridSpec::default() };
        let big = certify_strong_morse(&f, &ball, &grid, eps, eta, Execution::Sequential).unwrap();
        let small = certify_strong_morse(&f, &ball, &grid, eps * shrink, eta * shrink, Execution::Sequential).unwrap();
        prop_assert!(!big.holds || small.holds);
        prop_assert!(small.violations <= big.violations);
    }

    #[test]
    fn spread_ignores_the_order_of_inits(
        pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..10),
        rot in 0usize..10,
    ) {
        let a: Vec<ParamVec> = pts.iter().map(|p| point(p)).collect();
        let mut b = a.clone();
        b.rotate_left(rot % a.len());
        b.reverse();
        prop_assert!((spread(&a) - spread(&b)).abs() <= 1e-10 * (1.0 + spread(&a)));
    }

    #[test]
    fn trimmed_mean_is_order_free_and_bounded(mut xs in prop::collection::vec(-1e3f64..1e3, 1..50)) {
        let m = trimmed_mean(&xs, 0.05, 0.95);
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(m >= lo - 1e-9 && m <= hi + 1e-9);
        xs.reverse();
        prop_assert!((trimmed_mean(&xs, 0.05, 0.95) - m).abs() <= 1e-9 * (1.0 + m.abs()));
    }
}

proptest! {
    #[test]
    fn matching_is_symmetric(
        a in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 0..6),
        b in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 0..6),
    ) {
        let f = signed_quadratic(vec![0.0, 0.0], vec![1.0, 1.0]);
        let cps = |v: &[Vec<f64>]| -> Vec<CriticalPoint> {
            v.iter().map(|p| CriticalPoint::at(&f, &point(p)).unwrap()).collect()
        };
        let (ca, cb) = (cps(&a), cps(&b));
        let ab = match_critical_points(&ca, &cb);
        let ba = match_critical_points(&cb, &ca);
        let mut fwd: Vec<(usize, usize)> = ab.pairs.iter().map(|m| (m.a, m.b)).collect();
        let mut rev: Vec<(usize, usize)> = ba.pairs.iter().map(|m| (m.b, m.a)).collect();
        fwd.sort();
        rev.sort();
        prop_assert_eq!(fwd, rev);
        prop_assert_eq!(ab.unmatched_a, ba.unmatched_b);
        prop_assert_eq!(ab.unmatched_b, ba.unmatched_a);
    }
}
