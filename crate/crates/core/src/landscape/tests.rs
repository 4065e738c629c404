use super::*;
use crate::datagen::GenConfig;
use crate::math::SymMatrix;
use crate::models::{gmm_join, gmm_swap, Family, FnObjective, ModelSpec};
use crate::optim::OptConfig;
use crate::oracle::PopulationOracle;

fn saddle() -> FnObjective {
    FnObjective::new(
        2,
        |t| t[0] * t[0] - t[1] * t[1],
        |t| ParamVec::from_vec(vec![2.0 * t[0], -2.0 * t[1]]),
        |_| SymMatrix::from_diagonal(&[2.0, -2.0]),
    )
}

fn constant(dim: usize) -> FnObjective {
    FnObjective::new(dim, |_| 1.0, move |_| ParamVec::zeros(dim), move |_| SymMatrix::zeros(dim))
}

fn cp(loc: &[f64], index: usize) -> CriticalPoint {
    CriticalPoint {
        location: ParamVec::from_column_slice(loc),
        value: 0.0,
        grad_norm: 0.0,
        eigenvalues: vec![1.0],
        index,
        kind: PointKind::Minimum,
    }
}

#[test]
fn quadratic_has_one_minimum() {
    let c = ParamVec::from_vec(vec![0.3, -0.2, 0.1]);
    let f = FnObjective::quadratic(c.clone());
    let pts = find_critical_points(&f, &Region::origin_ball(3, 1.0), &SearchConfig::new(10, 1)).unwrap();
    assert_eq!(pts.len(), 1);
    assert_eq!(pts[0].index, 0);
    assert_eq!(pts[0].kind, PointKind::Minimum);
    assert!((&pts[0].location - c).norm() < 1e-12);
}

#[test]
fn saddle_has_index_one() {
    let pts = find_critical_points(&saddle(), &Region::origin_ball(2, 1.0), &SearchConfig::new(8, 2)).unwrap();
    assert_eq!(pts.len(), 1);
    assert_eq!(pts[0].index, 1);
    assert_eq!(pts[0].kind, PointKind::Saddle { index: 1 });
    assert!(pts[0].location.norm() < 1e-12);
}

#[test]
fn classification_of_spectra() {
    assert_eq!(classify(&[1.0, 2.0]), (0, PointKind::Minimum));
    assert_eq!(classify(&[-1.0, 2.0]), (1, PointKind::Saddle { index: 1 }));
    assert_eq!(classify(&[-2.0, -1.0]), (2, PointKind::Maximum));
    assert_eq!(classify(&[-1.0, 1e-9]), (1, PointKind::Degenerate));
    assert_eq!(classify(&[0.0]).1, PointKind::Degenerate);
}

#[test]
fn gmm_population_has_three_critical_points() {
    let law = GenConfig::new(Family::Gmm2, 0, 1, 3).with_separation(1.5).law().unwrap();
    let (c1, c2) = law.centers().unwrap();
    let plus = gmm_join(c1, c2);
    let oracle = PopulationOracle::quadrature(ModelSpec::gmm2(10.0), law).unwrap();
    let pts = find_critical_points(&oracle, &Region::origin_ball(2, 4.0), &SearchConfig::new(40, 4)).unwrap();
    assert_eq!(pts.len(), 3, "{pts:?}");
    let minima: Vec<_> = pts.iter().filter(|p| p.index == 0).collect();
    assert_eq!(minima.len(), 2);
    assert!(pts[2].index >= 1);
    let near = |a: &ParamVec, b: &ParamVec| (a - b).norm() < 1e-6;
    assert!(minima.iter().any(|m| near(&m.location, &plus)));
    assert!(minima.iter().any(|m| near(&m.location, &gmm_swap(&plus))));
    assert!(pts[2].location.norm() < 1e-6);
}

#[test]
fn morse_holds_for_quadratic() {
    let f = FnObjective::quadratic(ParamVec::zeros(2));
    let cert =
        certify_strong_morse(&f, &Region::origin_ball(2, 1.0), &GridSpec::default(), 0.1, 0.5, Execution::Sequential).unwrap();
    assert!(cert.holds);
    assert!(cert.witnesses.is_empty());
    assert!(cert.near_critical > 0);
    assert_eq!(cert.measured_eta, Some(1.0));
    assert_eq!(cert.min_boundary_grad.map(|g| (g - 1.0).abs() < 1e-12), Some(true));
}

#[test]
fn morse_fails_for_constant() {
    let grid = GridSpec {
        per_axis: 21,
        boundary: 50,
        ..GridSpec::default()
    };
    let cert = certify_strong_morse(&constant(2), &Region::origin_ball(2, 1.0), &grid, 0.1, 0.5, Execution::Sequential).unwrap();
    assert!(!cert.holds);
    assert_eq!(cert.violations, cert.interior_points + cert.boundary_points);
    assert_eq!(cert.witnesses.len(), MAX_WITNESSES);
    assert!(cert.witnesses.iter().all(|w| w.grad_norm == 0.0));
    assert_eq!(cert.measured_eta, Some(0.0));
}

#[test]
fn morse_budget_rejected() {
    let grid = GridSpec {
        per_axis: 1000,
        ..GridSpec::default()
    };
    let r = certify_strong_morse(&constant(2), &Region::origin_ball(2, 1.0), &grid, 0.1, 0.5, Execution::Sequential);
    assert!(matches!(r, Err(Error::InvalidInput(_))));
}

#[test]
fn morse_holds_for_saddle_in_high_dimension_sampling() {
    let d = 5;
    let f = FnObjective::new(
        d,
        |t| t.iter().enumerate().map(|(i, v)| if i == 0 { -v * v } else { v * v }).sum(),
        |t| ParamVec::from_fn(t.len(), |i, _| if i == 0 { -2.0 * t[0] } else { 2.0 * t[i] }),
        move |_| SymMatrix::from_diagonal(&[-2.0, 2.0, 2.0, 2.0, 2.0]),
    );
    let grid = GridSpec {
        samples: 2000,
        boundary: 200,
        ..GridSpec::default()
    };
    let cert = certify_strong_morse(&f, &Region::origin_ball(d, 1.0), &grid, 0.5, 1.0, Execution::Parallel).unwrap();
    assert!(cert.holds, "{cert:?}");
    assert_eq!(cert.interior_points, 2000);
}

#[test]
fn matching_identical_and_shifted() {
    let a = vec![cp(&[0.0, 0.0], 0), cp(&[1.0, 0.0], 1), cp(&[0.0, 2.0], 0)];
    let p = match_critical_points(&a, &a);
    assert!(p.is_perfect() && p.indices_agree());
    assert_eq!(p.max_distance(), 0.0);
    assert!(p.pairs.iter().all(|m| m.a == m.b));

    let shift = ParamVec::from_vec(vec![0.01, -0.02]);
    let b: Vec<_> = a
        .iter()
        .map(|c| CriticalPoint {
            location: &c.location + &shift,
            ..c.clone()
        })
        .collect();
    let p = match_critical_points(&a, &b);
    assert!(p.is_perfect());
    for m in &p.pairs {
        assert_eq!(m.a, m.b);
        assert!((m.distance - shift.norm()).abs() < 1e-15);
    }
}

#[test]
fn matching_reports_leftovers() {
    let a = vec![cp(&[0.0], 0), cp(&[5.0], 1)];
    let b = vec![cp(&[0.1], 1)];
    let p = match_critical_points(&a, &b);
    assert_eq!(p.pairs.len(), 1);
    assert!(!p.pairs[0].index_agrees);
    assert_eq!(p.unmatched_a, vec![1]);
    assert!(p.unmatched_b.is_empty());
}

fn classification_data(n: usize, d: usize, seed: u64) -> (ModelSpec, crate::models::Dataset) {
    let (data, theta0) = crate::datagen::generate(&GenConfig::new(Family::Classification, n, d, seed)).unwrap();
    (ModelSpec::classification(3.0 * theta0.norm().max(1.0)), data)
}

#[test]
fn identical_inits_have_zero_spread() {
    let (spec, data) = classification_data(100, 3, 5);
    let law = InitLaw::Fixed {
        points: vec![vec![0.1, 0.2, 0.3]],
    };
    let cfg = OptConfig::gd(1.0, 50);
    let stats = basin_spread(&spec, &data, &cfg, &law, 2, 0, Execution::Sequential).unwrap();
    assert_eq!(stats.spread, Some(0.0));
    assert!(stats.success);
    let curve = init_spread_curve(&spec, &data, &cfg, &law, 3, 0, Execution::Sequential).unwrap();
    assert!(!curve.std.is_empty());
    assert!(curve.std.iter().all(|&s| s == 0.0));
}

#[test]
fn well_posed_instance_has_tiny_spread() {
    let (spec, data) = classification_data(400, 3, 6);
    let cfg = OptConfig::gd(1.0, 20_000);
    let stats = basin_spread(&spec, &data, &cfg, &InitLaw::default(), 6, 7, Execution::Parallel).unwrap();
    assert!(stats.spread.unwrap() <= 1e-6, "{stats:?}");
    assert_eq!(stats.diverged, 0);
}

#[test]
fn split_gmm_inits_do_not_succeed() {
    let cfg = GenConfig::new(Family::Gmm2, 4000, 1, 8).with_separation(1.5);
    let (data, truth) = crate::datagen::generate(&cfg).unwrap();
    let spec = ModelSpec::gmm2(10.0);
    let t = truth.as_slice();
    let law = InitLaw::Fixed {
        points: vec![vec![t[0] * 0.8, t[1] * 0.8], vec![t[1] * 0.8, t[0] * 0.8]],
    };
    let opt = OptConfig::gd(1.0, 5000).with_halving();
    let stats = basin_spread(&spec, &data, &opt, &law, 2, 0, Execution::Sequential).unwrap();
    let (a, b) = (&stats.limits[0], &stats.limits[1]);
    assert!((gmm_swap(a) - b).norm() < 1e-6);
    // two points: S = |a - b| / sqrt(2)
    let s = stats.spread.unwrap();
    assert!((s - (a - b).norm() / 2f64.sqrt()).abs() < 1e-12);
    assert!(!stats.success);
}

#[test]
fn spread_matches_covariance_trace() {
    let pts: Vec<ParamVec> = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0]]
        .iter()
        .map(|p| ParamVec::from_column_slice(p))
        .collect();
    // each coordinate has variance 1/3
    assert!((spread(&pts) - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
}

#[test]
fn constants_on_quadratic() {
    let t0 = ParamVec::from_vec(vec![0.5, 0.0]);
    let f = FnObjective::quadratic(t0.clone());
    let c = measure_constants(&f, &t0, 3.0, 400, 1, Execution::Sequential).unwrap();
    assert_eq!(c.eps0, 1.0);
    assert_eq!(c.kappa_lower, 1.0);
    assert_eq!(c.kappa_upper, 1.0);
    assert!((c.t0 - 1.0).abs() < 1e-12);
    assert!(c.l_lower >= 1.0 && c.l_upper <= 3.5 + 1e-12);
}

#[test]
fn absorbing_ball_for_quadratic() {
    let f = FnObjective::quadratic(ParamVec::zeros(2));
    let region = Region::BallProduct {
        centers: vec![vec![0.0], vec![0.0]],
        radius: 1.0,
    };
    let chk = check_absorbing(&f, &region, 100, 0, Execution::Sequential).unwrap();
    assert!(chk.holds && (chk.min_outward_gradient - 1.0).abs() < 1e-12);
    let off = FnObjective::quadratic(ParamVec::from_vec(vec![2.0, 0.0]));
    assert!(!check_absorbing(&off, &region, 100, 0, Execution::Sequential).unwrap().holds);
}

#[test]
fn report_round_trips() {
    let report = LandscapeReport::new(vec![cp(&[1.0, 2.0], 0)]).with_reference(vec![cp(&[1.0, 2.1], 0)]);
    let mut buf = Vec::new();
    report.write_json(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.contains("\"criticalpoints\""));
    let back = LandscapeReport::from_json(&text).unwrap();
    assert_eq!(back, report);
    let bumped = text.replace("\"schema_version\": 1", "\"schema_version\": 99");
    assert!(LandscapeReport::from_json(&bumped).is_err());
}
