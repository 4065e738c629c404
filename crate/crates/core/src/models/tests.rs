use super::*;
use crate::math::{fd_gradient, fd_hessian, fd_jacobian_sym, StreamRng};

fn random_data(family: Family, n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = StreamRng::new(seed, 0);
    let x = DMatrix::from_fn(n, d, |_, _| rng.normal());
    let y = match family {
        Family::Classification => Some(DVector::from_fn(n, |_, _| f64::from(u8::from(rng.bernoulli(0.5))))),
        Family::RobustRegression => Some(DVector::from_fn(n, |_, _| 2.0 * rng.normal())),
        Family::Gmm2 => None,
    };
    Dataset::new(family, x, y).unwrap()
}

fn spec_for(family: Family) -> ModelSpec {
    match family {
        Family::Classification => ModelSpec::classification(10.0),
        Family::RobustRegression => ModelSpec::robust_regression(RobustLoss::default(), 10.0),
        Family::Gmm2 => ModelSpec::gmm2(10.0),
    }
}

#[test]
fn classification_risk_at_origin_is_one_quarter() {
    let data = random_data(Family::Classification, 37, 4, 1);
    let spec = spec_for(Family::Classification);
    let r = risk(&spec, &data, &ParamVec::zeros(4)).unwrap();
    assert!((r - 0.25).abs() < 1e-15);
}

#[test]
fn noiseless_regression_has_zero_risk_at_truth() {
    let mut rng = StreamRng::new(2, 0);
    let x = DMatrix::from_fn(20, 3, |_, _| rng.normal());
    let theta0 = ParamVec::from_vec(vec![0.5, -1.0, 0.25]);
    let y = &x * &theta0;
    let data = Dataset::new(Family::RobustRegression, x, Some(y)).unwrap();
    let spec = spec_for(Family::RobustRegression);
    assert!(risk(&spec, &data, &theta0).unwrap().abs() < 1e-20);
}

#[test]
fn gmm_collapses_to_single_gaussian() {
    let data = random_data(Family::Gmm2, 25, 1, 3);
    let spec = spec_for(Family::Gmm2);
    let m = 0.37;
    let theta = ParamVec::from_vec(vec![m, m]);
    let z = data.features().column(0);
    let direct = z.iter().map(|zi| 0.5 * (zi - m).powi(2)).sum::<f64>() / 25.0 + 0.5 * LN_2PI;
    assert!((risk(&spec, &data, &theta).unwrap() - direct).abs() < 1e-13);
}

#[test]
fn gmm_posterior_is_half_on_the_diagonal() {
    let z = ParamVec::from_vec(vec![1.3, -0.2]);
    let t = ParamVec::from_vec(vec![0.4, 0.4]);
    assert_eq!(gmm_posterior(&z, &t, &t), 0.5);
    let far = ParamVec::from_vec(vec![5.0, 0.0]);
    let p = gmm_posterior(&far, &t, &ParamVec::from_vec(vec![-3.0, 0.0]));
    assert!(p > 0.0 && p < 1.0);
}

#[test]
fn gmm_gradient_and_hessian_on_the_diagonal() {
    let data = random_data(Family::Gmm2, 40, 2, 4);
    let spec = spec_for(Family::Gmm2);
    let t = ParamVec::from_vec(vec![0.3, -0.1]);
    let theta = gmm_join(&t, &t);
    let g = gradient(&spec, &data, &theta).unwrap();
    let mean = data.features().row_mean().transpose();
    let half = (&t - &mean) * 0.5;
    assert!((g.rows(0, 2) - &half).amax() < 1e-14);
    assert!((g.rows(2, 2) - &half).amax() < 1e-14);
    // With w12 = 1/4: H11 = I/2 - (1/4n) sum (z - t)(z - t)^T, and H12 = +(1/4n) sum (...)
    let h = hessian(&spec, &data, &theta).unwrap();
    let x = data.features();
    let mut s = DMatrix::zeros(2, 2);
    for i in 0..40 {
        let e = x.row(i).transpose() - &t;
        s += &e * e.transpose();
    }
    s *= 0.25 / 40.0;
    let want11 = DMatrix::identity(2, 2) * 0.5 - &s;
    assert!((h.as_matrix().view((0, 0), (2, 2)) - want11).amax() < 1e-13);
    assert!((h.as_matrix().view((0, 2), (2, 2)) - &s).amax() < 1e-13);
}

#[test]
fn huber_hessian_is_gram_matrix_inside_quadratic_zone() {
    let mut rng = StreamRng::new(5, 0);
    let x = DMatrix::from_fn(30, 3, |_, _| 0.1 * rng.normal());
    let y = DVector::from_fn(30, |_, _| 0.1 * rng.normal());
    let data = Dataset::new(Family::RobustRegression, x.clone(), Some(y)).unwrap();
    let spec = ModelSpec::robust_regression(RobustLoss::huber(), 10.0);
    let h = hessian(&spec, &data, &ParamVec::from_vec(vec![0.1, 0.2, -0.1])).unwrap();
    let gram = x.tr_mul(&x) / 30.0;
    assert!((h.as_matrix() - gram).amax() < 1e-15);
}

#[test]
fn classification_hessian_on_handcrafted_data() {
    let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 2.0, 0.7, -1.1]);
    let y = DVector::from_vec(vec![1.0, 0.0, 1.0]);
    let data = Dataset::new(Family::Classification, x, Some(y)).unwrap();
    let spec = spec_for(Family::Classification);
    let theta = ParamVec::from_vec(vec![0.4, -0.9]);
    let obj = EmpiricalRisk::new(&spec, &data).unwrap();
    let fd = fd_hessian(|t: &ParamVec| obj.value(t).unwrap(), &theta, None).unwrap();
    let h = obj.hessian(&theta).unwrap();
    let rel = h.sub(&fd).op_norm().unwrap() / h.op_norm().unwrap();
    assert!(rel < 1e-4, "rel = {rel}");
}

#[test]
fn per_sample_gradients_average_to_full_gradient() {
    for family in [Family::Classification, Family::RobustRegression, Family::Gmm2] {
        let data = random_data(family, 17, 3, 6);
        let spec = spec_for(family);
        let mut rng = StreamRng::new(7, 0);
        let theta = rng.normal_vec(data.param_dim(), 0.8);
        let g = gradient(&spec, &data, &theta).unwrap();
        let mut acc = ParamVec::zeros(theta.len());
        for i in 0..17 {
            acc += per_sample_grad(&spec, &data, i, &theta).unwrap();
        }
        acc /= 17.0;
        assert!((acc - g).amax() < 1e-12, "{family:?}");
        assert!(per_sample_grad(&spec, &data, 17, &theta).is_err());
    }
}

#[test]
fn singleton_per_sample_equals_gradient() {
    let data = random_data(Family::RobustRegression, 1, 2, 8);
    let spec = spec_for(Family::RobustRegression);
    let theta = ParamVec::from_vec(vec![0.2, 0.1]);
    assert_eq!(
        per_sample_grad(&spec, &data, 0, &theta).unwrap(),
        gradient(&spec, &data, &theta).unwrap()
    );
}

#[test]
fn zero_residual_sample_has_zero_gradient() {
    // logistic(40) rounds to exactly 1.0
    let x = DMatrix::from_row_slice(1, 1, &[40.0]);
    let data = Dataset::new(Family::Classification, x, Some(DVector::from_vec(vec![1.0]))).unwrap();
    let spec = spec_for(Family::Classification);
    let g = per_sample_grad(&spec, &data, 0, &ParamVec::from_vec(vec![1.0])).unwrap();
    assert_eq!(g[0], 0.0);
}

#[test]
fn dimension_mismatch_is_rejected() {
    let data = random_data(Family::Gmm2, 5, 2, 9);
    let spec = spec_for(Family::Gmm2);
    assert!(matches!(risk(&spec, &data, &ParamVec::zeros(2)), Err(Error::InvalidInput(_))));
    let wrong = spec_for(Family::Classification);
    assert!(risk(&wrong, &data, &ParamVec::zeros(4)).is_err());
}

#[test]
fn gmm_exchange_symmetry() {
    let data = random_data(Family::Gmm2, 33, 3, 10);
    let spec = spec_for(Family::Gmm2);
    let mut rng = StreamRng::new(11, 0);
    for _ in 0..10 {
        let theta = rng.normal_vec(6, 1.5);
        let swapped = gmm_swap(&theta);
        assert_eq!(risk(&spec, &data, &theta).unwrap(), risk(&spec, &data, &swapped).unwrap());
        let g = gradient(&spec, &data, &theta).unwrap();
        let gs = gradient(&spec, &data, &swapped).unwrap();
        assert!((gmm_swap(&g) - gs).amax() < 1e-15);
    }
}

#[test]
fn bounded_risks() {
    let mut rng = StreamRng::new(12, 0);
    for seed in 0..10 {
        let c = random_data(Family::Classification, 20, 3, seed);
        let r = random_data(Family::RobustRegression, 20, 3, seed);
        let theta = rng.normal_vec(3, 3.0);
        let rc = risk(&spec_for(Family::Classification), &c, &theta).unwrap();
        let rr = risk(&spec_for(Family::RobustRegression), &r, &theta).unwrap();
        assert!((0.0..=1.0).contains(&rc));
        assert!((0.0..=1.0).contains(&rr));
    }
}

#[test]
fn derivatives_match_finite_differences() {
    for family in [Family::Classification, Family::RobustRegression, Family::Gmm2] {
        for seed in 0..10u64 {
            let d = 1 + (seed as usize % 6);
            let data = random_data(family, 25, d, 100 + seed);
            let spec = spec_for(family);
            let obj = EmpiricalRisk::new(&spec, &data).unwrap();
            let mut rng = StreamRng::new(seed, 9);
            let theta = rng.normal_vec(data.param_dim(), 0.7);
            let g = obj.gradient(&theta).unwrap();
            let fdg = fd_gradient(|t: &ParamVec| obj.value(t).unwrap(), &theta, None).unwrap();
            let rel = (&g - &fdg).norm() / g.norm().max(1e-12);
            assert!(rel < 1e-5, "{family:?} seed {seed}: grad rel {rel}");
            let h = obj.hessian(&theta).unwrap();
            let fdh = fd_jacobian_sym(|t: &ParamVec| obj.gradient(t).unwrap(), &theta, None).unwrap();
            let rel = h.sub(&fdh).op_norm().unwrap() / h.op_norm().unwrap().max(1e-12);
            assert!(rel < 1e-5, "{family:?} seed {seed}: hess rel {rel}");
        }
    }
}

#[test]
fn spec_validation() {
    let ok = ModelSpec::classification(9.0).with_theta0(ParamVec::from_vec(vec![3.0, 0.0]));
    assert!(ok.validate().is_ok());
    let too_far = ModelSpec::classification(8.0).with_theta0(ParamVec::from_vec(vec![3.0, 0.0]));
    assert!(too_far.validate().is_err());
    let sparse = ModelSpec::classification(8.0)
        .with_lambda(0.1)
        .with_theta0(ParamVec::from_vec(vec![4.0, 0.0]));
    assert!(sparse.validate().is_ok());
    assert!(ModelSpec::classification(-1.0).validate().is_err());
    assert!(ModelSpec::classification(1.0).with_lambda(-0.1).validate().is_err());
}

#[test]
fn spec_serde() {
    let spec = ModelSpec::robust_regression(RobustLoss::huber(), 10.0).with_theta0(ParamVec::from_vec(vec![1.0]));
    let json = serde_json::to_string(&spec).unwrap();
    let back: ModelSpec = serde_json::from_str(&json).unwrap();
    assert_eq!(back.theta0.unwrap()[0], 1.0);
    assert_eq!(back.loss.name(), "huber");
    let minimal: ModelSpec = toml::from_str("family = \"gmm2\"\nradius = 5.0\n").unwrap();
    assert_eq!(minimal.family, Family::Gmm2);
}
