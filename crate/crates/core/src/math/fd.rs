//! Central finite differences, used as an oracle for analytic derivatives.

use nalgebra::DMatrix;

use super::linalg::{ParamVec, SymMatrix};
use crate::error::{Error, Result};

/// Default gradient step: cbrt(eps) scaled by the iterate magnitude.
pub fn default_grad_step(x: &ParamVec) -> f64 {
    f64::EPSILON.cbrt() * x.amax().max(1.0)
}

/// Default Hessian step: eps^(1/4) scaled by the iterate magnitude.
pub fn default_hess_step(x: &ParamVec) -> f64 {
    f64::EPSILON.powf(0.25) * x.amax().max(1.0)
}

fn eval<F: Fn(&ParamVec) -> f64>(f: &F, x: &ParamVec) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Eval(format!("f = {v} during finite differencing")))
    }
}

fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("finite-difference step must be positive, got {h}")))
    }
}

pub fn fd_gradient<F: Fn(&ParamVec) -> f64>(f: F, x: &ParamVec, h: Option<f64>) -> Result<ParamVec> {
    let h = h.unwrap_or_else(|| default_grad_step(x));
    check_step(h)?;
    let mut g = ParamVec::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = eval(&f, &probe)?;
        probe[i] = x[i] - h;
        let fm = eval(&f, &probe)?;
        probe[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

pub fn fd_hessian<F: Fn(&ParamVec) -> f64>(f: F, x: &ParamVec, h: Option<f64>) -> Result<SymMatrix> {
    let h = h.unwrap_or_else(|| default_hess_step(x));
    check_step(h)?;
    let n = x.len();
    let f0 = eval(&f, x)?;
    let mut m = DMatrix::zeros(n, n);
    let mut probe = x.clone();
    for i in 0..n {
        probe[i] = x[i] + h;
        let fp = eval(&f, &probe)?;
        probe[i] = x[i] - h;
        let fm = eval(&f, &probe)?;
        probe[i] = x[i];
        m[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                probe[i] = x[i] + si * h;
                probe[j] = x[j] + sj * h;
                let v = eval(&f, &probe);
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            let pp = corner(1.0, 1.0)?;
            let pm = corner(1.0, -1.0)?;
            let mp = corner(-1.0, 1.0)?;
            let mm = corner(-1.0, -1.0)?;
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(SymMatrix::symmetrized(m))
}

/// Jacobian of a vector field by central differences, symmetrized.
///
/// Applied to an analytic gradient this gives a far tighter Hessian check
/// than second differences of the function value.
pub fn fd_jacobian_sym<G: Fn(&ParamVec) -> ParamVec>(g: G, x: &ParamVec, h: Option<f64>) -> Result<SymMatrix> {
    let h = h.unwrap_or_else(|| default_grad_step(x));
    check_step(h)?;
    let n = x.len();
    let mut m = DMatrix::zeros(n, n);
    let mut probe = x.clone();
    for j in 0..n {
        probe[j] = x[j] + h;
        let gp = g(&probe);
        probe[j] = x[j] - h;
        let gm = g(&probe);
        probe[j] = x[j];
        if gp.iter().chain(gm.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Eval("non-finite gradient during finite differencing".into()));
        }
        m.set_column(j, &((gp - gm) / (2.0 * h)));
    }
    Ok(SymMatrix::symmetrized(m))
}
