use log::debug;

use super::{check_init, eval_or_diverge, OptConfig, StopReason, Trajectory};
use crate::error::Result;
use crate::math::{project_ball, soft_threshold, ParamVec};
use crate::models::Objective;

fn l1(theta: &ParamVec) -> f64 {
    theta.iter().map(|v| v.abs()).sum()
}

/// Projected gradient descent: `theta <- P_r(theta - h grad)`.
pub fn run_gd<O: Objective + ?Sized>(obj: &O, init: &ParamVec, cfg: &OptConfig) -> Result<Trajectory> {
    descend(obj, init, cfg, None)
}

/// Proximal gradient: `theta <- P_r(soft_threshold(theta - h grad, h lambda))`.
pub fn run_prox_gd<O: Objective + ?Sized>(obj: &O, init: &ParamVec, cfg: &OptConfig) -> Result<Trajectory> {
    descend(obj, init, cfg, Some(cfg.lambda.unwrap_or(0.0)))
}

fn descend<O: Objective + ?Sized>(
    obj: &O,
    init: &ParamVec,
    cfg: &OptConfig,
    lambda: Option<f64>,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_init(init, obj.dim(), cfg.radius)?;
    let lam = lambda.unwrap_or(0.0);
    let penalty = |t: &ParamVec| if lam > 0.0 { lam * l1(t) } else { 0.0 };
    let update = |theta: &ParamVec, g: &ParamVec, h: f64| {
        let mut next = theta - g * h;
        if lambda.is_some() {
            next = soft_threshold(&next, h * lam);
        }
        match cfg.radius {
            Some(r) => project_ball(&next, r),
            None => next,
        }
    };

    let mut h = cfg.step;
    let mut slot = Some(Trajectory::new(init));
    let mut theta = init.clone();
    let (mut risk, mut g) = eval_or_diverge(obj, &theta, &mut slot)?;
    let mut fval = risk + penalty(&theta);
    slot.as_mut().unwrap().record(cfg.storage, &theta, risk, fval);

    loop {
        let mut next = update(&theta, &g, h);
        let stat = (&theta - &next).norm() / h;
        let traj = slot.as_mut().unwrap();
        traj.grad_norms.push(stat);
        if stat <= cfg.grad_tol * risk.abs().max(1.0) {
            return Ok(slot.unwrap().finish(StopReason::Tolerance, h));
        }
        if traj.iterations() >= cfg.max_iters {
            return Ok(slot.unwrap().finish(StopReason::MaxIters, h));
        }
        let (mut r2, mut g2) = eval_or_diverge(obj, &next, &mut slot)?;
        let mut f2 = r2 + penalty(&next);
        if cfg.step_halving {
            while f2 > fval {
                let traj = slot.as_mut().unwrap();
                if traj.halvings >= cfg.max_halvings {
                    debug!("step halving exhausted at h = {h}");
                    return Ok(slot.unwrap().finish(StopReason::Stalled, h));
                }
                traj.halvings += 1;
                h *= 0.5;
                next = update(&theta, &g, h);
                (r2, g2) = eval_or_diverge(obj, &next, &mut slot)?;
                f2 = r2 + penalty(&next);
            }
        }
        let moved = (&next - &theta).norm();
        theta = next;
        risk = r2;
        g = g2;
        fval = f2;
        slot.as_mut().unwrap().record(cfg.storage, &theta, risk, fval);
        if moved <= cfg.move_tol {
            let next = update(&theta, &g, h);
            slot.as_mut().unwrap().grad_norms.push((&theta - &next).norm() / h);
            return Ok(slot.unwrap().finish(StopReason::Stalled, h));
        }
    }
}
