use log::debug;

use super::{check_init, diverged, eval_or_diverge, OptConfig, StopReason, Trajectory};
use crate::error::{Error, Result};
use crate::math::{sym_eigen, EigenDecomp, ParamVec, SymMatrix};
use crate::models::Objective;

/// Global minimizer of `<g, s> + s^T H s / 2` over `||s|| <= delta`.
#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub step: ParamVec,
    /// Shift `mu` with `(H + mu I) s = -g`.
    pub mu: f64,
    /// Predicted decrease `-(<g, s> + s^T H s / 2)`, never negative.
    pub decrease: f64,
    pub on_boundary: bool,
    /// The gradient had no component along the bottom eigenspace and the
    /// step was completed along the smallest eigenvector.
    pub hard_case: bool,
}

pub fn solve_trust_subproblem(g: &ParamVec, h: &SymMatrix, delta: f64) -> Result<SubproblemSolution> {
    if g.len() != h.dim() {
        return Err(Error::invalid("gradient and Hessian dimensions differ"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!("trust radius must be positive, got {delta}")));
    }
    let eig = sym_eigen(h)?;
    Ok(solve_with_eigen(g, h, &eig, delta))
}

fn solve_with_eigen(g: &ParamVec, h: &SymMatrix, eig: &EigenDecomp, delta: f64) -> SubproblemSolution {
    let n = g.len();
    let lam = &eig.values;
    let ghat = eig.vectors.tr_mul(g);
    let lmin = eig.min();
    let gnorm = g.norm();
    let scale = lam.amax().max(1.0);

    let step_norm = |mu: f64| -> f64 {
        (0..n)
            .map(|i| {
                let den = lam[i] + mu;
                if ghat[i] == 0.0 {
                    0.0
                } else {
                    (ghat[i] / den).powi(2)
                }
            })
            .sum::<f64>()
            .sqrt()
    };
    let assemble = |mu: f64| -> ParamVec {
        let coef = ParamVec::from_fn(n, |i, _| if ghat[i] == 0.0 { 0.0 } else { -ghat[i] / (lam[i] + mu) });
        &eig.vectors * coef
    };
    let finish = |step: ParamVec, mu: f64, on_boundary: bool, hard_case: bool| {
        let decrease = -(g.dot(&step) + 0.5 * h.quad_form(&step));
        SubproblemSolution {
            step,
            mu,
            decrease: decrease.max(0.0),
            on_boundary,
            hard_case,
        }
    };

    // interior Newton step
    if lmin > 0.0 && step_norm(0.0) <= delta {
        return finish(assemble(0.0), 0.0, false, false);
    }

    let lo0 = (-lmin).max(0.0);
    // components along the bottom eigenspace that are numerically zero
    let bottom_tol = 1e-12 * scale;
    let in_bottom = |i: usize| lam[i] - lmin <= bottom_tol;
    let g_bottom: f64 = (0..n).filter(|&i| in_bottom(i)).map(|i| ghat[i].powi(2)).sum::<f64>().sqrt();
    if g_bottom <= 1e-14 * gnorm.max(f64::MIN_POSITIVE) || gnorm == 0.0 {
        let coef = ParamVec::from_fn(n, |i, _| {
            if in_bottom(i) || ghat[i] == 0.0 {
                0.0
            } else {
                -ghat[i] / (lam[i] + lo0)
            }
        });
        let s_perp = &eig.vectors * coef;
        let pn = s_perp.norm();
        if pn <= delta {
            if lmin >= 0.0 && pn < delta && lo0 == 0.0 && lmin > 0.0 {
                return finish(s_perp, 0.0, false, false);
            }
            let tau = (delta * delta - pn * pn).max(0.0).sqrt();
            let v = eig.min_vector();
            // pick the sign that does not increase the linear term
            let sign = if g.dot(&v) > 0.0 { -1.0 } else { 1.0 };
            return finish(s_perp + v * (sign * tau), lo0, true, true);
        }
    }

    // easy case: ||s(mu)|| = delta has a root in (lo, hi]
    let mut lo = lo0;
    let mut hi = lo0 + gnorm / delta;
    let phi = |mu: f64| 1.0 / step_norm(mu) - 1.0 / delta;
    let mut mu = hi;
    for _ in 0..200 {
        let sn = step_norm(mu);
        let f = phi(mu);
        if (sn - delta).abs() <= 1e-13 * delta {
            break;
        }
        if f < 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        let d3: f64 = (0..n)
            .filter(|&i| ghat[i] != 0.0)
            .map(|i| ghat[i] * ghat[i] / (lam[i] + mu).powi(3))
            .sum();
        let dphi = d3 / sn.powi(3);
        let newton = mu - f / dphi;
        mu = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-16 * hi.max(1.0) {
            break;
        }
    }
    let mut step = assemble(mu);
    let sn = step.norm();
    if sn > delta {
        step *= delta / sn;
    }
    finish(step, mu, true, false)
}

/// Trust-region Newton method with exact subproblem solves.
pub fn run_trust_region<O: Objective + ?Sized>(obj: &O, init: &ParamVec, cfg: &OptConfig) -> Result<Trajectory> {
    cfg.validate()?;
    check_init(init, obj.dim(), None)?;
    let tp = cfg.trust;
    let mut delta = tp.initial_radius;
    let mut slot = Some(Trajectory::new(init));
    let mut theta = init.clone();
    let (mut f, mut g) = eval_or_diverge(obj, &theta, &mut slot)?;
    slot.as_mut().unwrap().record(cfg.storage, &theta, f, f);

    loop {
        let h = match obj.hessian(&theta) {
            Ok(h) if h.is_finite() => h,
            Ok(_) | Err(Error::Eval(_)) => return Err(diverged(slot.take().unwrap())),
            Err(e) => return Err(e),
        };
        let eig = sym_eigen(&h)?;
        let gn = g.norm();
        let traj = slot.as_mut().unwrap();
        traj.grad_norms.push(gn);
        if gn <= cfg.grad_tol * f.abs().max(1.0) && eig.min() >= -tp.curvature_tol {
            return Ok(slot.unwrap().finish(StopReason::SecondOrder, delta));
        }
        if traj.iterations() >= cfg.max_iters {
            return Ok(slot.unwrap().finish(StopReason::MaxIters, delta));
        }
        loop {
            let sol = solve_with_eigen(&g, &h, &eig, delta);
            let cand = &theta + &sol.step;
            let (f2, g2) = eval_or_diverge(obj, &cand, &mut slot)?;
            let actual = f - f2;
            let rho = if sol.decrease > 0.0 { actual / sol.decrease } else { f64::NEG_INFINITY };
            let snorm = sol.step.norm();
            if rho < 0.25 {
                delta = tp.shrink * snorm.min(delta);
            } else if rho > 0.75 && sol.on_boundary {
                delta = (tp.grow * delta).min(tp.max_radius);
            }
            if rho >= tp.eta_accept && actual > 0.0 {
                theta = cand;
                f = f2;
                g = g2;
                slot.as_mut().unwrap().record(cfg.storage, &theta, f, f);
                if snorm <= cfg.move_tol {
                    slot.as_mut().unwrap().grad_norms.push(g.norm());
                    return Ok(slot.unwrap().finish(StopReason::Stalled, delta));
                }
                break;
            }
            if delta <= 1e-15 * theta.norm().max(1.0) {
                debug!("trust radius collapsed at risk {f}");
                return Ok(slot.unwrap().finish(StopReason::Stalled, delta));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::StreamRng;
    use crate::models::FnObjective;
    use nalgebra::DMatrix;

    fn random_sym(n: usize, rng: &mut StreamRng) -> SymMatrix {
        let a = DMatrix::from_fn(n, n, |_, _| rng.normal());
        SymMatrix::new(&a + a.transpose()).unwrap()
    }

    #[test]
    fn interior_newton_step() {
        let h = SymMatrix::from_diagonal(&[2.0, 4.0]);
        let g = ParamVec::from_vec(vec![2.0, 4.0]);
        let s = solve_trust_subproblem(&g, &h, 10.0).unwrap();
        assert!(!s.on_boundary);
        assert!((s.step - ParamVec::from_vec(vec![-1.0, -1.0])).amax() < 1e-15);
    }

    #[test]
    fn hard_case_uses_bottom_eigenvector() {
        let h = SymMatrix::from_diagonal(&[1.0, -2.0]);
        let g = ParamVec::from_vec(vec![1.0, 0.0]);
        let s = solve_trust_subproblem(&g, &h, 2.0).unwrap();
        assert!(s.hard_case);
        assert!((s.step.norm() - 2.0).abs() < 1e-12);
        assert!((s.step[0] + 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.mu, 2.0);
    }

    #[test]
    fn zero_gradient_negative_curvature() {
        let h = SymMatrix::from_diagonal(&[1.0, -1.0]);
        let s = solve_trust_subproblem(&ParamVec::zeros(2), &h, 0.5).unwrap();
        assert!((s.step[1].abs() - 0.5).abs() < 1e-15);
        assert!((s.decrease - 0.125).abs() < 1e-15);
    }

    #[test]
    fn subproblem_bound_and_cauchy_decrease() {
        let mut rng = StreamRng::new(3, 0);
        for trial in 0..200 {
            let n = 1 + trial % 7;
            let h = random_sym(n, &mut rng);
            let g = rng.normal_vec(n, 1.0);
            let delta = 0.05 + 2.0 * rng.uniform();
            let s = solve_trust_subproblem(&g, &h, delta).unwrap();
            assert!(s.step.norm() <= delta * (1.0 + 1e-10));
            let gn = g.norm();
            let ghg = h.quad_form(&g);
            let t = if ghg <= 0.0 { delta / gn } else { (gn * gn / ghg).min(delta / gn) };
            let cauchy = t * gn * gn - 0.5 * t * t * ghg;
            assert!(s.decrease >= 0.5 * cauchy - 1e-12, "trial {trial}");
            // optimality: (H + mu I) s = -g with H + mu I psd
            let resid = h.mul_vec(&s.step) + &s.step * s.mu + &g;
            assert!(resid.norm() <= 1e-8 * (1.0 + gn), "trial {trial}: {}", resid.norm());
        }
    }

    #[test]
    fn matches_brute_force_in_two_dimensions() {
        let mut rng = StreamRng::new(4, 0);
        for _ in 0..30 {
            let h = random_sym(2, &mut rng);
            let g = rng.normal_vec(2, 1.0);
            let delta = 1.0;
            let s = solve_trust_subproblem(&g, &h, delta).unwrap();
            let model = |x: &ParamVec| g.dot(x) + 0.5 * h.quad_form(x);
            let mut best = f64::INFINITY;
            for i in 0..=200 {
                for j in 0..=200 {
                    let x = ParamVec::from_vec(vec![-1.0 + i as f64 / 100.0, -1.0 + j as f64 / 100.0]);
                    if x.norm() <= delta {
                        best = best.min(model(&x));
                    }
                }
            }
            assert!(model(&s.step) <= best + 1e-9);
        }
    }

    #[test]
    fn convex_quadratic_in_few_steps() {
        let a = ParamVec::from_vec(vec![0.3, -0.4, 0.2]);
        let obj = FnObjective::quadratic(a.clone());
        let t = run_trust_region(&obj, &ParamVec::zeros(3), &OptConfig::trust_region(50)).unwrap();
        assert!((&t.final_point - &a).norm() < 1e-12);
        assert!(t.iterations() <= 3);
        assert_eq!(t.stop, Some(StopReason::SecondOrder));
    }

    #[test]
    fn escapes_saddle() {
        // f = x^2/2 + (y^2 - 1)^2 / 4 has minima at y = +-1 and a saddle at 0
        let obj = FnObjective::new(
            2,
            |t| 0.5 * t[0] * t[0] + 0.25 * (t[1] * t[1] - 1.0).powi(2),
            |t| ParamVec::from_vec(vec![t[0], t[1] * (t[1] * t[1] - 1.0)]),
            |t| SymMatrix::from_diagonal(&[1.0, 3.0 * t[1] * t[1] - 1.0]),
        );
        let t = run_trust_region(&obj, &ParamVec::zeros(2), &OptConfig::trust_region(100)).unwrap();
        assert!((t.final_point[1].abs() - 1.0).abs() < 1e-8);
        assert!(t.risks.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn strict_minimum_terminates_at_once() {
        let a = ParamVec::from_vec(vec![1.0]);
        let obj = FnObjective::quadratic(a.clone());
        let t = run_trust_region(&obj, &a, &OptConfig::trust_region(10)).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.stop, Some(StopReason::SecondOrder));
    }
}
