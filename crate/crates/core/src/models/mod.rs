//! Loss families and their empirical risk, gradient and Hessian.
//!
//! Three families share the interface:
//!
//! - classification: `(y - sigma(<theta, x>))^2`
//! - robust regression: `rho(y - <theta, x>)`
//! - gmm2: negative log-likelihood of an equal-weight, identity-covariance
//!   two-component Gaussian mixture, `theta = (theta1, theta2)`
//!
//! The gmm2 loss is the full negative log-density, i.e. it keeps both the
//! `(d/2) log(2 pi)` normalization and the `log 2` from the 1/2 mixture
//! weights, so empirical values are directly comparable to exact
//! population integrals.

pub mod activation;
pub mod dataset;
pub mod robust;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use activation::{logistic, Activation, ActivationFn};
pub use dataset::{Dataset, Family, ResponseKind};
pub use robust::{RobustLoss, ScoreFn, HUBER_C, TUKEY_T0};

use crate::error::{Error, Result};
use crate::math::linalg::vec_serde;
use crate::math::{ParamVec, SymMatrix};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Something with a value, gradient and Hessian at every point.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, theta: &ParamVec) -> Result<f64>;
    fn gradient(&self, theta: &ParamVec) -> Result<ParamVec>;
    fn hessian(&self, theta: &ParamVec) -> Result<SymMatrix>;

    fn value_and_gradient(&self, theta: &ParamVec) -> Result<(f64, ParamVec)> {
        Ok((self.value(theta)?, self.gradient(theta)?))
    }
}

type ValueFn = Box<dyn Fn(&ParamVec) -> f64 + Send + Sync>;
type GradFn = Box<dyn Fn(&ParamVec) -> ParamVec + Send + Sync>;
type HessFn = Box<dyn Fn(&ParamVec) -> SymMatrix + Send + Sync>;

/// An objective assembled from closures, for analytic test functions.
pub struct FnObjective {
    dim: usize,
    value: ValueFn,
    grad: GradFn,
    hess: HessFn,
}

impl FnObjective {
    pub fn new(
        dim: usize,
        value: impl Fn(&ParamVec) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&ParamVec) -> ParamVec + Send + Sync + 'static,
        hess: impl Fn(&ParamVec) -> SymMatrix + Send + Sync + 'static,
    ) -> Self {
        FnObjective {
            dim,
            value: Box::new(value),
            grad: Box::new(grad),
            hess: Box::new(hess),
        }
    }

    /// `||theta - center||^2 / 2`.
    pub fn quadratic(center: ParamVec) -> Self {
        let dim = center.len();
        let c1 = center.clone();
        FnObjective::new(
            dim,
            move |t| 0.5 * (t - &center).norm_squared(),
            move |t| t - &c1,
            move |_| SymMatrix::identity(dim),
        )
    }

    fn check(&self, theta: &ParamVec) -> Result<()> {
        if theta.len() != self.dim {
            return Err(Error::invalid(format!("expected dimension {}, got {}", self.dim, theta.len())));
        }
        Ok(())
    }
}

impl Objective for FnObjective {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, theta: &ParamVec) -> Result<f64> {
        self.check(theta)?;
        Ok((self.value)(theta))
    }
    fn gradient(&self, theta: &ParamVec) -> Result<ParamVec> {
        self.check(theta)?;
        Ok((self.grad)(theta))
    }
    fn hessian(&self, theta: &ParamVec) -> Result<SymMatrix> {
        self.check(theta)?;
        Ok((self.hess)(theta))
    }
}

/// Which loss to use, plus its hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub loss: RobustLoss,
    /// Radius of the constraint ball.
    pub radius: f64,
    #[serde(default, with = "vec_serde::option", skip_serializing_if = "Option::is_none")]
    pub theta0: Option<ParamVec>,
    /// l1 weight; zero means unregularized.
    #[serde(default)]
    pub lambda: f64,
}

impl ModelSpec {
    pub fn classification(radius: f64) -> Self {
        ModelSpec {
            family: Family::Classification,
            activation: Activation::Logistic,
            loss: RobustLoss::default(),
            radius,
            theta0: None,
            lambda: 0.0,
        }
    }

    pub fn robust_regression(loss: RobustLoss, radius: f64) -> Self {
        ModelSpec {
            family: Family::RobustRegression,
            loss,
            ..ModelSpec::classification(radius)
        }
    }

    pub fn gmm2(radius: f64) -> Self {
        ModelSpec {
            family: Family::Gmm2,
            ..ModelSpec::classification(radius)
        }
    }

    pub fn with_theta0(mut self, theta0: ParamVec) -> Self {
        self.theta0 = Some(theta0);
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::invalid(format!("radius must be positive, got {}", self.radius)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if let RobustLoss::Tukey { t0: c } | RobustLoss::Huber { c } = self.loss {
            if !(c > 0.0) {
                return Err(Error::invalid("robust loss cutoff must be positive"));
            }
        }
        if let (Some(t0), true) = (&self.theta0, self.family != Family::Gmm2) {
            let limit = if self.lambda > 0.0 { self.radius / 2.0 } else { self.radius / 3.0 };
            if t0.norm() > limit * (1.0 + 1e-12) {
                return Err(Error::invalid(format!(
                    "||theta0|| = {} exceeds the admissible {limit}",
                    t0.norm()
                )));
            }
        }
        Ok(())
    }
}

/// Empirical risk of a dataset under a model.
#[derive(Debug, Clone, Copy)]
pub struct EmpiricalRisk<'a> {
    pub spec: &'a ModelSpec,
    pub data: &'a Dataset,
}

impl<'a> EmpiricalRisk<'a> {
    pub fn new(spec: &'a ModelSpec, data: &'a Dataset) -> Result<Self> {
        if spec.family != data.family() {
            return Err(Error::invalid(format!(
                "model family {} does not match dataset family {}",
                spec.family.name(),
                data.family().name()
            )));
        }
        Ok(EmpiricalRisk { spec, data })
    }

    fn check(&self, theta: &ParamVec) -> Result<()> {
        let p = self.data.param_dim();
        if theta.len() != p {
            return Err(Error::invalid(format!("theta has dimension {}, expected {p}", theta.len())));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("theta has non-finite entries"));
        }
        if self.data.n() == 0 {
            return Err(Error::invalid("dataset is empty"));
        }
        Ok(())
    }

    fn inv_n(&self) -> f64 {
        1.0 / self.data.n() as f64
    }
}

/// Per-sample loss of the linear-index families as a function of
/// `u = <theta, x>`: value, d/du and d^2/du^2.
pub(crate) fn linear_index_terms(spec: &ModelSpec, y: f64, u: f64) -> (f64, f64, f64) {
    match spec.family {
        Family::Classification => {
            let (s, d1, d2) = spec.activation.eval2(u);
            let resid = y - s;
            (resid * resid, -2.0 * resid * d1, 2.0 * (d1 * d1 - resid * d2))
        }
        Family::RobustRegression => {
            let (rho, psi, dpsi) = spec.loss.eval(y - u);
            (rho, -psi, dpsi)
        }
        Family::Gmm2 => unreachable!("gmm2 has no linear index"),
    }
}

/// Half squared distances from sample `i` to both centers.
fn gmm_half_dists(x: &DMatrix<f64>, i: usize, theta: &ParamVec) -> (f64, f64) {
    let d = x.ncols();
    let mut a1 = 0.0;
    let mut a2 = 0.0;
    for j in 0..d {
        let z = x[(i, j)];
        let e1 = z - theta[j];
        let e2 = z - theta[d + j];
        a1 += e1 * e1;
        a2 += e2 * e2;
    }
    (0.5 * a1, 0.5 * a2)
}

/// Negative log mixture density from half squared distances, plus the
/// posterior weights of both components.
pub(crate) fn gmm_loss_from_dists(a1: f64, a2: f64, d: usize) -> (f64, f64, f64) {
    let m = a1.min(a2);
    let loss = 0.5 * d as f64 * LN_2PI + std::f64::consts::LN_2 + m - (-(a1 - a2).abs()).exp().ln_1p();
    (loss, logistic(a2 - a1), logistic(a1 - a2))
}

fn split(theta: &ParamVec) -> (nalgebra::DVectorView<'_, f64>, nalgebra::DVectorView<'_, f64>) {
    let d = theta.len() / 2;
    (theta.rows(0, d), theta.rows(d, d))
}

impl EmpiricalRisk<'_> {
    fn linear_index(&self, theta: &ParamVec) -> DVector<f64> {
        self.data.features() * theta
    }

    /// Per-sample losses and posterior weights of both components.
    fn gmm_terms(&self, theta: &ParamVec) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let x = self.data.features();
        let n = self.data.n();
        let mut loss = DVector::zeros(n);
        let mut w1 = DVector::zeros(n);
        let mut w2 = DVector::zeros(n);
        for i in 0..n {
            let (a1, a2) = gmm_half_dists(x, i, theta);
            (loss[i], w1[i], w2[i]) = gmm_loss_from_dists(a1, a2, self.data.d());
        }
        (loss, w1, w2)
    }

    fn gmm_gradient(&self, theta: &ParamVec, w1: &DVector<f64>, w2: &DVector<f64>) -> ParamVec {
        let x = self.data.features();
        let d = self.data.d();
        let inv_n = self.inv_n();
        let (t1, t2) = split(theta);
        let mut g = ParamVec::zeros(2 * d);
        let zw1 = x.tr_mul(w1);
        let zw2 = x.tr_mul(w2);
        let s1 = w1.sum();
        let s2 = w2.sum();
        g.rows_mut(0, d).copy_from(&((t1 * s1 - zw1) * inv_n));
        g.rows_mut(d, d).copy_from(&((t2 * s2 - zw2) * inv_n));
        g
    }
}

impl Objective for EmpiricalRisk<'_> {
    fn dim(&self) -> usize {
        self.data.param_dim()
    }

    fn value(&self, theta: &ParamVec) -> Result<f64> {
        self.check(theta)?;
        let v = match self.spec.family {
            Family::Gmm2 => self.gmm_terms(theta).0.mean(),
            _ => {
                let u = self.linear_index(theta);
                let y = self.data.y()?;
                u.iter()
                    .zip(y.iter())
                    .map(|(&u, &y)| linear_index_terms(self.spec, y, u).0)
                    .sum::<f64>()
                    * self.inv_n()
            }
        };
        Ok(v)
    }

    fn gradient(&self, theta: &ParamVec) -> Result<ParamVec> {
        Ok(self.value_and_gradient(theta)?.1)
    }

    fn value_and_gradient(&self, theta: &ParamVec) -> Result<(f64, ParamVec)> {
        self.check(theta)?;
        match self.spec.family {
            Family::Gmm2 => {
                let (loss, w1, w2) = self.gmm_terms(theta);
                Ok((loss.mean(), self.gmm_gradient(theta, &w1, &w2)))
            }
            _ => {
                let u = self.linear_index(theta);
                let y = self.data.y()?;
                let mut value = 0.0;
                let mut alpha = DVector::zeros(u.len());
                for i in 0..u.len() {
                    let (l, a, _) = linear_index_terms(self.spec, y[i], u[i]);
                    value += l;
                    alpha[i] = a;
                }
                let g = self.data.features().tr_mul(&alpha) * self.inv_n();
                Ok((value * self.inv_n(), g))
            }
        }
    }

    fn hessian(&self, theta: &ParamVec) -> Result<SymMatrix> {
        self.check(theta)?;
        let x = self.data.features();
        let inv_n = self.inv_n();
        let m = match self.spec.family {
            Family::Gmm2 => {
                let d = self.data.d();
                let (_, w1, w2) = self.gmm_terms(theta);
                let (t1, t2) = split(theta);
                let n = self.data.n();
                // rows z_i - theta_a, each scaled by sqrt(w12_i)
                let mut r1 = x.clone();
                let mut r2 = x.clone();
                for i in 0..n {
                    let s = (w1[i] * w2[i]).sqrt();
                    for j in 0..d {
                        r1[(i, j)] = s * (x[(i, j)] - t1[j]);
                        r2[(i, j)] = s * (x[(i, j)] - t2[j]);
                    }
                }
                let mean_w1 = w1.mean();
                let mean_w2 = w2.mean();
                let mut h = DMatrix::zeros(2 * d, 2 * d);
                let b11 = r1.tr_mul(&r1) * inv_n;
                let b22 = r2.tr_mul(&r2) * inv_n;
                let b12 = r1.tr_mul(&r2) * inv_n;
                h.view_mut((0, 0), (d, d))
                    .copy_from(&(DMatrix::identity(d, d) * mean_w1 - b11));
                h.view_mut((d, d), (d, d))
                    .copy_from(&(DMatrix::identity(d, d) * mean_w2 - b22));
                h.view_mut((0, d), (d, d)).copy_from(&b12);
                h.view_mut((d, 0), (d, d)).copy_from(&b12.transpose());
                h
            }
            _ => {
                let u = self.linear_index(theta);
                let y = self.data.y()?;
                let beta = DVector::from_fn(u.len(), |i, _| linear_index_terms(self.spec, y[i], u[i]).2);
                let mut weighted = x.clone();
                for (mut row, b) in weighted.row_iter_mut().zip(beta.iter()) {
                    row *= *b;
                }
                x.tr_mul(&weighted) * inv_n
            }
        };
        let h = SymMatrix::symmetrized(m);
        if !h.is_finite() {
            return Err(Error::Eval("non-finite Hessian".into()));
        }
        Ok(h)
    }
}

pub fn risk(spec: &ModelSpec, data: &Dataset, theta: &ParamVec) -> Result<f64> {
    EmpiricalRisk::new(spec, data)?.value(theta)
}

pub fn gradient(spec: &ModelSpec, data: &Dataset, theta: &ParamVec) -> Result<ParamVec> {
    EmpiricalRisk::new(spec, data)?.gradient(theta)
}

pub fn hessian(spec: &ModelSpec, data: &Dataset, theta: &ParamVec) -> Result<SymMatrix> {
    EmpiricalRisk::new(spec, data)?.hessian(theta)
}

/// Gradient of the `i`-th summand of the empirical risk.
pub fn per_sample_grad(spec: &ModelSpec, data: &Dataset, i: usize, theta: &ParamVec) -> Result<ParamVec> {
    let obj = EmpiricalRisk::new(spec, data)?;
    obj.check(theta)?;
    if i >= data.n() {
        return Err(Error::invalid(format!("sample index {i} out of range for n = {}", data.n())));
    }
    let x = data.features().row(i).transpose();
    match spec.family {
        Family::Gmm2 => {
            let (t1, t2) = split(theta);
            let (a1, a2) = gmm_half_dists(data.features(), i, theta);
            let (_, w1, w2) = gmm_loss_from_dists(a1, a2, data.d());
            let d = data.d();
            let mut g = ParamVec::zeros(2 * d);
            g.rows_mut(0, d).copy_from(&((t1 - &x) * w1));
            g.rows_mut(d, d).copy_from(&((t2 - &x) * w2));
            Ok(g)
        }
        _ => {
            let u = x.dot(theta);
            let (_, alpha, _) = linear_index_terms(spec, data.y()?[i], u);
            Ok(x * alpha)
        }
    }
}

/// Posterior probability that `z` came from the first component.
pub fn gmm_posterior(z: &ParamVec, theta1: &ParamVec, theta2: &ParamVec) -> f64 {
    let a1 = 0.5 * (z - theta1).norm_squared();
    let a2 = 0.5 * (z - theta2).norm_squared();
    logistic(a2 - a1)
}

/// Swaps the two centers of a gmm2 parameter.
pub fn gmm_swap(theta: &ParamVec) -> ParamVec {
    let d = theta.len() / 2;
    let mut out = theta.clone();
    out.rows_mut(0, d).copy_from(&theta.rows(d, d));
    out.rows_mut(d, d).copy_from(&theta.rows(0, d));
    out
}

/// Concatenates two centers into a gmm2 parameter.
pub fn gmm_join(theta1: &ParamVec, theta2: &ParamVec) -> ParamVec {
    let mut v = theta1.as_slice().to_vec();
    v.extend_from_slice(theta2.as_slice());
    ParamVec::from_vec(v)
}

#[cfg(test)]
mod tests;
