//! Projected gradient descent, proximal gradient and trust-region
//! minimizers. Every run records a full [`Trajectory`].
//!
//! The `run_*` functions work on any [`Objective`]; the `gd_projected`,
//! `prox_gd` and `trust_region` wrappers bind a model spec and dataset and
//! take the ball radius and l1 weight from the spec unless the config
//! overrides them.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::ParamVec;
use crate::models::{Dataset, EmpiricalRisk, ModelSpec, Objective};

mod gd;
mod trust;

pub use gd::{run_gd, run_prox_gd};
pub use trust::{run_trust_region, solve_trust_subproblem, SubproblemSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Gd,
    Proxgd,
    TrustRegion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrustParams {
    pub initial_radius: f64,
    pub max_radius: f64,
    pub eta_accept: f64,
    pub shrink: f64,
    pub grow: f64,
    /// Smallest admissible Hessian eigenvalue at termination is `-curvature_tol`.
    pub curvature_tol: f64,
}

impl Default for TrustParams {
    fn default() -> Self {
        TrustParams {
            initial_radius: 1.0,
            max_radius: 100.0,
            eta_accept: 0.1,
            shrink: 0.25,
            grow: 2.0,
            curvature_tol: 1e-8,
        }
    }
}

/// Which iterates a trajectory keeps. Scalars are always kept for every step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum IterateStorage {
    /// Every iterate up to step 1000, then every 10th.
    #[default]
    Strided,
    All,
    FinalOnly,
}

impl IterateStorage {
    fn keeps(self, k: usize) -> bool {
        match self {
            IterateStorage::Strided => k <= 1000 || k.is_multiple_of(10),
            IterateStorage::All => true,
            IterateStorage::FinalOnly => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptConfig {
    pub method: Method,
    /// Step size h.
    pub step: f64,
    pub max_iters: usize,
    /// Stop once the stationarity measure is at most `grad_tol * max(1, |risk|)`.
    pub grad_tol: f64,
    pub move_tol: f64,
    /// Ball radius; `None` defers to the model spec (or no constraint for bare objectives).
    pub radius: Option<f64>,
    /// l1 weight for proxgd; `None` defers to the model spec.
    pub lambda: Option<f64>,
    /// Halve the step (persistently) whenever it would increase the objective.
    pub step_halving: bool,
    pub max_halvings: u32,
    pub trust: TrustParams,
    pub storage: IterateStorage,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            method: Method::Gd,
            step: 1.0,
            max_iters: 10_000,
            grad_tol: 1e-8,
            move_tol: 1e-12,
            radius: None,
            lambda: None,
            step_halving: false,
            max_halvings: 30,
            trust: TrustParams::default(),
            storage: IterateStorage::Strided,
        }
    }
}

impl OptConfig {
    pub fn gd(step: f64, max_iters: usize) -> Self {
        OptConfig {
            step,
            max_iters,
            ..OptConfig::default()
        }
    }

    pub fn proxgd(step: f64, max_iters: usize, lambda: f64) -> Self {
        OptConfig {
            method: Method::Proxgd,
            lambda: Some(lambda),
            ..OptConfig::gd(step, max_iters)
        }
    }

    pub fn trust_region(max_iters: usize) -> Self {
        OptConfig {
            method: Method::TrustRegion,
            max_iters,
            ..OptConfig::default()
        }
    }

    pub fn with_radius(mut self, r: f64) -> Self {
        self.radius = Some(r);
        self
    }

    pub fn with_halving(mut self) -> Self {
        self.step_halving = true;
        self
    }

    pub fn with_storage(mut self, storage: IterateStorage) -> Self {
        self.storage = storage;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid(format!("step size must be positive, got {}", self.step)));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.grad_tol >= 0.0 && self.move_tol >= 0.0) {
            return Err(Error::invalid("tolerances must be nonnegative"));
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return Err(Error::invalid(format!("radius must be positive, got {r}")));
            }
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::invalid(format!("lambda must be nonnegative, got {l}")));
            }
        }
        let t = &self.trust;
        if !(t.initial_radius > 0.0
            && t.max_radius >= t.initial_radius
            && (0.0..1.0).contains(&t.eta_accept)
            && t.shrink > 0.0
            && t.shrink < 1.0
            && t.grow > 1.0
            && t.curvature_tol >= 0.0)
        {
            return Err(Error::invalid("inconsistent trust-region parameters"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// Stationarity measure fell below tolerance.
    Tolerance,
    /// Trust region: small gradient and no negative curvature beyond tolerance.
    SecondOrder,
    /// Iterates stopped moving.
    Stalled,
    MaxIters,
}

/// Per-step record of an optimizer run. Index `k = 0` is the initial point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    /// Stored iterates, paired with `iterate_steps`.
    #[serde(skip)]
    pub iterates: Vec<ParamVec>,
    pub iterate_steps: Vec<usize>,
    /// Unpenalized risk at every step.
    pub risks: Vec<f64>,
    /// Risk plus the l1 penalty (equal to `risks` when lambda is zero).
    pub objective: Vec<f64>,
    /// Stationarity measure: gradient-mapping norm for gd/proxgd, gradient norm for trust region.
    pub grad_norms: Vec<f64>,
    pub stop: Option<StopReason>,
    #[serde(with = "crate::math::vec_serde")]
    pub final_point: ParamVec,
    /// Number of step halvings performed.
    pub halvings: u32,
    /// Step size in effect at the end of the run.
    pub final_step: f64,
}

impl Trajectory {
    fn new(init: &ParamVec) -> Self {
        Trajectory {
            iterates: Vec::new(),
            iterate_steps: Vec::new(),
            risks: Vec::new(),
            objective: Vec::new(),
            grad_norms: Vec::new(),
            stop: None,
            final_point: init.clone(),
            halvings: 0,
            final_step: 0.0,
        }
    }

    fn record(&mut self, storage: IterateStorage, theta: &ParamVec, risk: f64, objective: f64) {
        let k = self.risks.len();
        if storage.keeps(k) {
            self.iterates.push(theta.clone());
            self.iterate_steps.push(k);
        }
        self.risks.push(risk);
        self.objective.push(objective);
        self.final_point.clone_from(theta);
    }

    fn finish(mut self, reason: StopReason, step: f64) -> Self {
        let k = self.risks.len() - 1;
        if self.iterate_steps.last() != Some(&k) {
            self.iterates.push(self.final_point.clone());
            self.iterate_steps.push(k);
        }
        self.stop = Some(reason);
        self.final_step = step;
        self
    }

    /// Number of recorded steps, including the initial point.
    pub fn len(&self) -> usize {
        self.risks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.risks.is_empty()
    }

    /// Number of iterations performed.
    pub fn iterations(&self) -> usize {
        self.risks.len().saturating_sub(1)
    }

    pub fn converged(&self) -> bool {
        matches!(
            self.stop,
            Some(StopReason::Tolerance | StopReason::SecondOrder | StopReason::Stalled)
        )
    }

    pub fn final_risk(&self) -> f64 {
        *self.risks.last().unwrap_or(&f64::NAN)
    }

    pub fn final_grad_norm(&self) -> f64 {
        *self.grad_norms.last().unwrap_or(&f64::NAN)
    }

    /// The iterate at step `k`, if it was stored. Steps past the end of the
    /// run resolve to the final point, which is where the iteration rests.
    pub fn iterate_at(&self, k: usize) -> Option<&ParamVec> {
        if k + 1 >= self.len() {
            return Some(&self.final_point);
        }
        self.iterate_steps
            .binary_search(&k)
            .ok()
            .map(|i| &self.iterates[i])
    }

    /// Writes `k,risk,grad_norm,dist_to_reference`; the distance column is
    /// empty where the iterate was not stored or no reference is given.
    pub fn write_csv<W: Write>(&self, mut w: W, reference: Option<&ParamVec>) -> Result<()> {
        writeln!(w, "k,risk,grad_norm,dist_to_reference")?;
        let mut stored = self.iterate_steps.iter().zip(&self.iterates).peekable();
        for k in 0..self.len() {
            let mut dist = String::new();
            if let Some((&sk, it)) = stored.peek() {
                if sk == k {
                    if let Some(r) = reference {
                        dist = format!("{:?}", (*it - r).norm());
                    }
                    stored.next();
                }
            }
            writeln!(w, "{},{:?},{:?},{}", k, self.risks[k], self.grad_norms[k], dist)?;
        }
        Ok(())
    }
}

fn diverged(traj: Trajectory) -> Error {
    Error::Divergence(Box::new(traj))
}

/// Evaluates the objective, mapping non-finite values and evaluation
/// failures to divergence with the partial trajectory attached.
fn eval_or_diverge<O: Objective + ?Sized>(
    obj: &O,
    theta: &ParamVec,
    traj: &mut Option<Trajectory>,
) -> Result<(f64, ParamVec)> {
    match obj.value_and_gradient(theta) {
        Ok((v, g)) if v.is_finite() && g.iter().all(|x| x.is_finite()) => Ok((v, g)),
        Ok(_) | Err(Error::Eval(_)) => Err(diverged(traj.take().expect("trajectory present"))),
        Err(e) => Err(e),
    }
}

fn check_init(init: &ParamVec, dim: usize, radius: Option<f64>) -> Result<()> {
    if init.len() != dim {
        return Err(Error::invalid(format!("init has length {}, objective dimension is {dim}", init.len())));
    }
    if !init.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("init has non-finite entries"));
    }
    if let Some(r) = radius {
        if init.norm() > r * (1.0 + 1e-12) {
            return Err(Error::invalid(format!("init norm {} exceeds radius {r}", init.norm())));
        }
    }
    Ok(())
}

/// Runs the method named in the config on an arbitrary objective.
pub fn minimize<O: Objective + ?Sized>(obj: &O, init: &ParamVec, cfg: &OptConfig) -> Result<Trajectory> {
    match cfg.method {
        Method::Gd => run_gd(obj, init, cfg),
        Method::Proxgd => run_prox_gd(obj, init, cfg),
        Method::TrustRegion => run_trust_region(obj, init, cfg),
    }
}

fn bind(spec: &ModelSpec, cfg: &OptConfig) -> OptConfig {
    let mut cfg = cfg.clone();
    cfg.radius = cfg.radius.or(Some(spec.radius));
    cfg.lambda = cfg.lambda.or(Some(spec.lambda));
    cfg
}

pub fn gd_projected(spec: &ModelSpec, data: &Dataset, init: &ParamVec, cfg: &OptConfig) -> Result<Trajectory> {
    run_gd(&EmpiricalRisk::new(spec, data)?, init, &bind(spec, cfg))
}

pub fn prox_gd(spec: &ModelSpec, data: &Dataset, init: &ParamVec, cfg: &OptConfig) -> Result<Trajectory> {
    run_prox_gd(&EmpiricalRisk::new(spec, data)?, init, &bind(spec, cfg))
}

/// Trust region on the empirical risk. The ball constraint does not apply.
pub fn trust_region(spec: &ModelSpec, data: &Dataset, init: &ParamVec, cfg: &OptConfig) -> Result<Trajectory> {
    run_trust_region(&EmpiricalRisk::new(spec, data)?, init, cfg)
}

/// Dispatches on `cfg.method` with the spec's radius and lambda as defaults.
pub fn fit(spec: &ModelSpec, data: &Dataset, init: &ParamVec, cfg: &OptConfig) -> Result<Trajectory> {
    match cfg.method {
        Method::Gd => gd_projected(spec, data, init, cfg),
        Method::Proxgd => prox_gd(spec, data, init, cfg),
        Method::TrustRegion => trust_region(spec, data, init, cfg),
    }
}
