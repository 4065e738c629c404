//! Population risk, gradient and Hessian.
//!
//! The quadrature oracle exploits rotational invariance of the standard
//! Gaussian: every expectation collapses onto at most two coordinates, so it
//! is exact up to quadrature error in any dimension. Each reduced axis is
//! integrated piecewise, with pieces narrow enough to resolve the logistic
//! or loss breakpoints they contain. The Monte-Carlo oracle
//! averages the empirical objective over a fixed stream of fresh samples and
//! handles every law the data generator supports.

use serde::{Deserialize, Serialize};

use crate::datagen::PopulationLaw;
use crate::error::{Error, Result};
use crate::math::{derive_seed, gauss_legendre, ParamVec, QuadratureRule, SymMatrix};
use crate::models::{Dataset, EmpiricalRisk, Family, ModelSpec, Objective};
use crate::par::Execution;

mod reduced;

pub const DEFAULT_NODES: usize = 20;
pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum OracleMethod {
    /// Piecewise Gauss-Legendre with `nodes` points per piece on each
    /// reduced axis.
    Quadrature { nodes: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for OracleMethod {
    fn default() -> Self {
        OracleMethod::Quadrature { nodes: DEFAULT_NODES }
    }
}

#[derive(Debug, Clone)]
enum Rules {
    Pieces(QuadratureRule),
    None,
}

#[derive(Debug, Clone)]
pub struct PopulationOracle {
    spec: ModelSpec,
    law: PopulationLaw,
    method: OracleMethod,
    rules: Rules,
    exec: Execution,
}

/// Population value with a standard error (zero for quadrature).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl PopulationOracle {
    pub fn new(spec: ModelSpec, law: PopulationLaw, method: OracleMethod) -> Result<Self> {
        if spec.family != law.family {
            return Err(Error::invalid(format!(
                "model family {} does not match data law family {}",
                spec.family.name(),
                law.family.name()
            )));
        }
        let rules = match method {
            OracleMethod::Quadrature { nodes } => {
                if law.chol.is_some() {
                    return Err(Error::Unsupported(
                        "quadrature oracle needs identity-covariance features; use monte-carlo".into(),
                    ));
                }
                Rules::Pieces(gauss_legendre(nodes)?)
            }
            OracleMethod::MonteCarlo { samples, .. } => {
                if samples == 0 {
                    return Err(Error::invalid("monte-carlo oracle needs at least one sample"));
                }
                Rules::None
            }
        };
        Ok(PopulationOracle {
            spec,
            law,
            method,
            rules,
            exec: Execution::default(),
        })
    }

    pub fn quadrature(spec: ModelSpec, law: PopulationLaw) -> Result<Self> {
        Self::new(spec, law, OracleMethod::default())
    }

    pub fn monte_carlo(spec: ModelSpec, law: PopulationLaw, samples: usize, seed: u64) -> Result<Self> {
        Self::new(spec, law, OracleMethod::MonteCarlo { samples, seed })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn law(&self) -> &PopulationLaw {
        &self.law
    }

    pub fn method(&self) -> OracleMethod {
        self.method
    }

    fn check(&self, theta: &ParamVec) -> Result<()> {
        let p = self.dim();
        if theta.len() != p {
            return Err(Error::invalid(format!("theta has dimension {}, expected {p}", theta.len())));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("theta has non-finite entries"));
        }
        Ok(())
    }

    fn reduced(&self, theta: &ParamVec, want_hess: bool) -> reduced::Moments {
        match (&self.rules, self.law.family) {
            (Rules::Pieces(rule), Family::Classification) => reduced::classification(
                &self.spec,
                &self.law.activation,
                self.law.theta0().expect("linear law"),
                theta,
                rule,
                want_hess,
            ),
            (Rules::Pieces(rule), Family::Gmm2) => reduced::gmm2(&self.law, theta, rule, want_hess),
            (Rules::Pieces(rule), Family::RobustRegression) => reduced::robust_regression(
                &self.spec,
                &self.law.noise,
                self.law.theta0().expect("linear law"),
                theta,
                rule,
                want_hess,
            ),
            (Rules::None, _) => unreachable!("quadrature only"),
        }
    }

    fn mc_chunks(&self) -> Vec<(u64, usize)> {
        let OracleMethod::MonteCarlo { samples, seed } = self.method else {
            unreachable!("monte-carlo only");
        };
        let chunk = samples.div_ceil(20).clamp(1, 10_000);
        (0..samples.div_ceil(chunk))
            .map(|c| (derive_seed(seed, &[c as u64]), chunk.min(samples - c * chunk)))
            .collect()
    }

    fn mc_map<R: Send>(&self, f: impl Fn(&EmpiricalRisk<'_>) -> Result<R> + Sync + Send) -> Result<Vec<(usize, R)>> {
        let chunks = self.mc_chunks();
        self.exec
            .map(chunks, |(seed, len)| {
                let data: Dataset = self.law.sample(len, seed)?;
                let obj = EmpiricalRisk::new(&self.spec, &data)?;
                Ok((len, f(&obj)?))
            })
            .into_iter()
            .collect()
    }

    /// Risk with its Monte-Carlo standard error (zero for quadrature).
    pub fn risk_estimate(&self, theta: &ParamVec) -> Result<Estimate> {
        self.check(theta)?;
        if !matches!(self.rules, Rules::None) {
            let value = self.reduced(theta, false).value;
            return Ok(Estimate { value, std_error: 0.0 });
        }
        let parts = self.mc_map(|obj| obj.value(theta))?;
        let total: usize = parts.iter().map(|(n, _)| n).sum();
        let mean = parts.iter().map(|(n, v)| *n as f64 * v).sum::<f64>() / total as f64;
        let k = parts.len();
        let std_error = if k > 1 {
            let var = parts.iter().map(|(_, v)| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        } else {
            f64::NAN
        };
        Ok(Estimate { value: mean, std_error })
    }
}

impl Objective for PopulationOracle {
    fn dim(&self) -> usize {
        self.law.family.param_dim(self.law.d)
    }

    fn value(&self, theta: &ParamVec) -> Result<f64> {
        Ok(self.risk_estimate(theta)?.value)
    }

    fn gradient(&self, theta: &ParamVec) -> Result<ParamVec> {
        Ok(self.value_and_gradient(theta)?.1)
    }

    fn value_and_gradient(&self, theta: &ParamVec) -> Result<(f64, ParamVec)> {
        self.check(theta)?;
        if !matches!(self.rules, Rules::None) {
            let m = self.reduced(theta, false);
            return Ok((m.value, m.grad));
        }
        let parts = self.mc_map(|obj| obj.value_and_gradient(theta))?;
        let total = parts.iter().map(|(n, _)| n).sum::<usize>() as f64;
        let mut value = 0.0;
        let mut grad = ParamVec::zeros(theta.len());
        for (n, (v, g)) in parts {
            let w = n as f64 / total;
            value += w * v;
            grad.axpy(w, &g, 1.0);
        }
        Ok((value, grad))
    }

    fn hessian(&self, theta: &ParamVec) -> Result<SymMatrix> {
        self.check(theta)?;
        if !matches!(self.rules, Rules::None) {
            return Ok(self.reduced(theta, true).hess.expect("requested"));
        }
        let parts = self.mc_map(|obj| obj.hessian(theta))?;
        let total = parts.iter().map(|(n, _)| n).sum::<usize>() as f64;
        let p = theta.len();
        let mut acc = nalgebra::DMatrix::zeros(p, p);
        for (n, h) in parts {
            acc += h.into_matrix() * (n as f64 / total);
        }
        SymMatrix::new(acc)
    }
}

pub fn pop_risk(oracle: &PopulationOracle, theta: &ParamVec) -> Result<f64> {
    oracle.value(theta)
}

pub fn pop_grad(oracle: &PopulationOracle, theta: &ParamVec) -> Result<ParamVec> {
    oracle.gradient(theta)
}

pub fn pop_hessian(oracle: &PopulationOracle, theta: &ParamVec) -> Result<SymMatrix> {
    oracle.hessian(theta)
}

/// Largest empirical-vs-population gaps over a finite parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub sup_grad_gap: f64,
    pub sup_hess_gap: f64,
    /// Grid indices where the suprema are attained.
    pub grad_argmax: usize,
    pub hess_argmax: usize,
    pub grid_size: usize,
}

/// Population gradients and Hessians cached on a parameter grid, so that
/// many datasets can be compared against the same reference.
#[derive(Debug, Clone)]
pub struct PopulationGrid {
    thetas: Vec<ParamVec>,
    grads: Vec<ParamVec>,
    hessians: Vec<SymMatrix>,
}

impl PopulationGrid {
    pub fn new(oracle: &PopulationOracle, thetas: Vec<ParamVec>) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::invalid("parameter grid is empty"));
        }
        let evals = oracle.exec.map(thetas.iter().collect(), |t| Ok((oracle.gradient(t)?, oracle.hessian(t)?)));
        let (grads, hessians) = evals.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
        Ok(PopulationGrid { thetas, grads, hessians })
    }

    pub fn thetas(&self) -> &[ParamVec] {
        &self.thetas
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    /// Largest gradient and Hessian gaps between `data` and the cached values.
    pub fn gap(&self, spec: &ModelSpec, data: &Dataset, exec: Execution) -> Result<GapReport> {
        if data.n() == 0 {
            return Err(Error::invalid("dataset is empty"));
        }
        let emp = EmpiricalRisk::new(spec, data)?;
        let gaps: Vec<Result<(f64, f64)>> = exec.map_range(self.len(), |i| {
            let theta = &self.thetas[i];
            let g = (emp.gradient(theta)? - &self.grads[i]).norm();
            let h = emp.hessian(theta)?.sub(&self.hessians[i]).op_norm()?;
            Ok((g, h))
        });
        let mut report = GapReport {
            sup_grad_gap: f64::NEG_INFINITY,
            sup_hess_gap: f64::NEG_INFINITY,
            grad_argmax: 0,
            hess_argmax: 0,
            grid_size: self.len(),
        };
        for (i, gap) in gaps.into_iter().enumerate() {
            let (g, h) = gap?;
            if g > report.sup_grad_gap {
                report.sup_grad_gap = g;
                report.grad_argmax = i;
            }
            if h > report.sup_hess_gap {
                report.sup_hess_gap = h;
                report.hess_argmax = i;
            }
        }
        Ok(report)
    }
}

pub fn mc_pop_gap(
    spec: &ModelSpec,
    data: &Dataset,
    oracle: &PopulationOracle,
    thetas: &[ParamVec],
) -> Result<GapReport> {
    if data.n() == 0 {
        return Err(Error::invalid("dataset is empty"));
    }
    PopulationGrid::new(oracle, thetas.to_vec())?.gap(spec, data, oracle.exec)
}
