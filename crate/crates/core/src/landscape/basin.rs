use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Region;
use crate::error::{Error, Result};
use crate::math::{derive_seed, ParamVec, StreamRng};
use crate::models::{Dataset, ModelSpec};
use crate::optim::{fit, IterateStorage, OptConfig, Trajectory};
use crate::par::Execution;

/// Default success threshold on the spread.
pub const SUCCESS_EPS: f64 = 1e-2;
/// A run ending at `||theta|| >= BOUNDARY_FRACTION * r` counts as a boundary hit.
pub const BOUNDARY_FRACTION: f64 = 0.999;

/// Law of the optimizer's starting points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InitLaw {
    /// `N(0, var_factor * I / p)` with `p` the parameter dimension.
    Gaussian { var_factor: f64 },
    UniformBall { radius: f64 },
    Region { region: Region },
    /// Cycles through the given points.
    Fixed { points: Vec<Vec<f64>> },
}

impl Default for InitLaw {
    fn default() -> Self {
        InitLaw::Gaussian { var_factor: 1.0 }
    }
}

impl InitLaw {
    /// The `i`-th start; each start has its own derived stream.
    pub fn sample(&self, dim: usize, i: usize, seed: u64) -> Result<ParamVec> {
        let mut rng = StreamRng::new(derive_seed(seed, &[i as u64]), 0);
        match self {
            InitLaw::Gaussian { var_factor } => {
                if !(*var_factor >= 0.0) {
                    return Err(Error::invalid("init variance factor must be nonnegative"));
                }
                Ok(rng.normal_vec(dim, (var_factor / dim as f64).sqrt()))
            }
            InitLaw::UniformBall { radius } => Ok(rng.in_ball(&ParamVec::zeros(dim), *radius)),
            InitLaw::Region { region } => {
                region.validate()?;
                if region.dim() != dim {
                    return Err(Error::invalid(format!("init region has dimension {}, expected {dim}", region.dim())));
                }
                Ok(region.sample(&mut rng))
            }
            InitLaw::Fixed { points } => {
                if points.is_empty() {
                    return Err(Error::invalid("fixed init law has no points"));
                }
                let p = &points[i % points.len()];
                if p.len() != dim {
                    return Err(Error::invalid(format!("fixed init has dimension {}, expected {dim}", p.len())));
                }
                Ok(ParamVec::from_column_slice(p))
            }
        }
    }
}

/// Square root of the trace of the sample covariance (divisor `n - 1`).
/// Deviations are taken about the first point before averaging, so equal
/// points give exactly zero.
pub fn spread(points: &[ParamVec]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let shifted: Vec<ParamVec> = points.iter().map(|p| p - &points[0]).collect();
    let mut mean = ParamVec::zeros(points[0].len());
    for s in &shifted {
        mean += s;
    }
    mean /= n as f64;
    let ss: f64 = shifted.iter().map(|s| (s - &mean).norm_squared()).sum();
    (ss / (n - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinStats {
    /// `None` when fewer than two runs finished.
    pub spread: Option<f64>,
    pub success: bool,
    pub epsilon: f64,
    pub n_inits: usize,
    pub diverged: usize,
    pub boundary_hits: usize,
    pub final_risks: Vec<f64>,
    #[serde(skip)]
    pub limits: Vec<ParamVec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessRate {
    pub successes: usize,
    pub total: usize,
    pub rate: f64,
}

pub fn success_rate(stats: &[BasinStats]) -> SuccessRate {
    let successes = stats.iter().filter(|s| s.success).count();
    let total = stats.len();
    SuccessRate {
        successes,
        total,
        rate: if total == 0 { 0.0 } else { successes as f64 / total as f64 },
    }
}

/// Fits from `n_inits` seeded starts; diverged runs come back as `None`.
pub fn run_from_inits(
    spec: &ModelSpec,
    data: &Dataset,
    cfg: &OptConfig,
    law: &InitLaw,
    n_inits: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Option<Trajectory>>> {
    if n_inits < 2 {
        return Err(Error::invalid(format!("need at least 2 inits, got {n_inits}")));
    }
    let dim = data.param_dim();
    let inits = (0..n_inits).map(|i| law.sample(dim, i, seed)).collect::<Result<Vec<_>>>()?;
    exec.map(inits, |init| match fit(spec, data, &init, cfg) {
        Ok(t) => Ok(Some(t)),
        Err(Error::Divergence(t)) => {
            log::debug!("run diverged after {} steps", t.len());
            Ok(None)
        }
        Err(e) => Err(e),
    })
    .into_iter()
    .collect()
}

/// Fits from `n_inits` seeded starts and measures the spread of the limits.
/// Any diverged run makes the instance a failure.
pub fn basin_spread(
    spec: &ModelSpec,
    data: &Dataset,
    cfg: &OptConfig,
    law: &InitLaw,
    n_inits: usize,
    seed: u64,
    exec: Execution,
) -> Result<BasinStats> {
    let mut cfg = cfg.clone();
    cfg.storage = IterateStorage::FinalOnly;
    let runs = run_from_inits(spec, data, &cfg, law, n_inits, seed, exec)?;
    Ok(basin_stats(&runs, cfg.radius.unwrap_or(spec.radius)))
}

/// Spread statistics of finished runs; `None` entries count as diverged.
pub fn basin_stats(runs: &[Option<Trajectory>], radius: f64) -> BasinStats {
    let limits: Vec<ParamVec> = runs.iter().flatten().map(|t| t.final_point.clone()).collect();
    let diverged = runs.len() - limits.len();
    let spread_value = (limits.len() >= 2).then(|| spread(&limits));
    BasinStats {
        spread: spread_value,
        success: diverged == 0 && spread_value.is_some_and(|s| s <= SUCCESS_EPS),
        epsilon: SUCCESS_EPS,
        n_inits: runs.len(),
        diverged,
        boundary_hits: limits.iter().filter(|p| p.norm() >= BOUNDARY_FRACTION * radius).count(),
        final_risks: runs.iter().flatten().map(|t| t.final_risk()).collect(),
        limits,
    }
}

/// `std(k) = sqrt(tr Var(theta_k))` across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SpreadCurve {
    pub steps: Vec<usize>,
    pub std: Vec<f64>,
}

impl SpreadCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,std")?;
        for (k, s) in self.steps.iter().zip(&self.std) {
            writeln!(w, "{k},{s:e}")?;
        }
        Ok(())
    }
}

/// Spread of the iterates at every step. Runs that stop early are held at
/// their final point; diverged runs are dropped.
pub fn init_spread_curve(
    spec: &ModelSpec,
    data: &Dataset,
    cfg: &OptConfig,
    law: &InitLaw,
    n_inits: usize,
    seed: u64,
    exec: Execution,
) -> Result<SpreadCurve> {
    let mut cfg = cfg.clone();
    cfg.storage = IterateStorage::All;
    let runs: Vec<Trajectory> = run_from_inits(spec, data, &cfg, law, n_inits, seed, exec)?.into_iter().flatten().collect();
    spread_curve(&runs)
}

/// Per-step spread of runs that stored every iterate. Shorter runs are held
/// at their last iterate.
pub fn spread_curve(runs: &[Trajectory]) -> Result<SpreadCurve> {
    if runs.len() < 2 {
        return Err(Error::invalid(format!("spread needs at least 2 finished runs, got {}", runs.len())));
    }
    if runs.iter().any(|t| t.iterates.is_empty()) {
        return Err(Error::invalid("runs did not store their iterates"));
    }
    let len = runs.iter().map(|t| t.iterates.len()).max().unwrap_or(0);
    let mut curve = SpreadCurve::default();
    for k in 0..len {
        let pts: Vec<ParamVec> = runs.iter().map(|t| t.iterates[k.min(t.iterates.len() - 1)].clone()).collect();
        curve.steps.push(k);
        curve.std.push(spread(&pts));
    }
    Ok(curve)
}
