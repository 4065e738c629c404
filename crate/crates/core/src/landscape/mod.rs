//! Critical points, Morse indices and basin statistics.
//!
//! Critical points are found by multi-start damped Newton on the gradient
//! field. Certificates, constants and spreads are all measured on finite
//! samples, so every result here is relative to the grid or the starts used.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{derive_seed, sym_eigen, vec_serde, ParamVec, StreamRng};
use crate::models::Objective;
use crate::par::Execution;

mod basin;
mod constants;
mod morse;
mod region;

pub use basin::{
    basin_spread, basin_stats, init_spread_curve, run_from_inits, spread, spread_curve, success_rate, BasinStats, InitLaw,
    SpreadCurve, SuccessRate, BOUNDARY_FRACTION, SUCCESS_EPS,
};
pub use constants::{check_absorbing, measure_constants, AbsorbingCheck, LandscapeConstants};
pub use morse::{certify_strong_morse, GridSpec, MorseCertificate, Violation, Witness, DEFAULT_BUDGET, MAX_WITNESSES};
pub use region::Region;

/// Gradient norm every reported critical point must meet.
pub const CRITICAL_TOL: f64 = 1e-8;
/// Eigenvalues with `|l| <= DEGENERACY_TOL * max(1, max |l|)` count as zero.
pub const DEGENERACY_TOL: f64 = 1e-8;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PointKind {
    Minimum,
    Saddle { index: usize },
    Maximum,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    #[serde(with = "vec_serde")]
    pub location: ParamVec,
    pub value: f64,
    pub grad_norm: f64,
    /// Hessian eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    pub index: usize,
    pub kind: PointKind,
}

impl CriticalPoint {
    /// Evaluates the objective at `x` and classifies it by its Hessian
    /// spectrum. No check is made that `x` is actually critical.
    pub fn at<O: Objective + ?Sized>(obj: &O, x: &ParamVec) -> Result<Self> {
        let (value, g) = obj.value_and_gradient(x)?;
        let eig = sym_eigen(&obj.hessian(x)?)?;
        let mut eigenvalues: Vec<f64> = eig.values.iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        let (index, kind) = classify(&eigenvalues);
        Ok(CriticalPoint {
            location: x.clone(),
            value,
            grad_norm: g.norm(),
            eigenvalues,
            index,
            kind,
        })
    }

    pub fn min_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min)
    }
}

/// Morse index and kind from a spectrum.
pub fn classify(eigenvalues: &[f64]) -> (usize, PointKind) {
    let scale = eigenvalues.iter().map(|l| l.abs()).fold(1.0, f64::max);
    let tol = DEGENERACY_TOL * scale;
    let index = eigenvalues.iter().filter(|&&l| l < -tol).count();
    let kind = if eigenvalues.iter().any(|l| l.abs() <= tol) {
        PointKind::Degenerate
    } else if index == 0 {
        PointKind::Minimum
    } else if index == eigenvalues.len() {
        PointKind::Maximum
    } else {
        PointKind::Saddle { index }
    };
    (index, kind)
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub n_starts: usize,
    pub seed: u64,
    pub max_newton_iters: usize,
    /// Points closer than `dedup_tol * region.scale()` are merged.
    pub dedup_tol: f64,
    /// Starts tried in addition to the random ones.
    pub extra_starts: Vec<ParamVec>,
    pub exec: Execution,
}

impl SearchConfig {
    pub fn new(n_starts: usize, seed: u64) -> Self {
        SearchConfig {
            n_starts,
            seed,
            max_newton_iters: 200,
            dedup_tol: 1e-6,
            extra_starts: Vec::new(),
            exec: Execution::default(),
        }
    }

    pub fn with_starts(mut self, starts: Vec<ParamVec>) -> Self {
        self.extra_starts = starts;
        self
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }
}

/// Levenberg-damped Newton on `grad F = 0`: `s = -(H^2 + mu I)^{-1} H g`,
/// with `mu` raised until `||grad F||` decreases.
pub fn newton_polish<O: Objective + ?Sized>(obj: &O, start: &ParamVec, max_iters: usize) -> Result<ParamVec> {
    let mut x = start.clone();
    let mut g = obj.gradient(&x)?;
    let mut gn = g.norm();
    let mut mu = 0.0;
    for _ in 0..max_iters {
        if gn == 0.0 {
            break;
        }
        let eig = sym_eigen(&obj.hessian(&x)?)?;
        let proj = eig.vectors.transpose() * &g;
        let top = eig.values.iter().map(|l| l * l).fold(0.0, f64::max);
        let floor = 1e-14 * top.max(f64::MIN_POSITIVE);
        let mut accepted = false;
        for _ in 0..60 {
            let coef = eig.values.zip_map(&proj, |l, p| {
                let den = l * l + mu;
                if den > 0.0 {
                    -l * p / den
                } else {
                    0.0
                }
            });
            let trial = &x + &eig.vectors * coef;
            let tg = match obj.gradient(&trial) {
                Ok(tg) if tg.iter().all(|v| v.is_finite()) => tg,
                _ => {
                    mu = (mu * 10.0).max(floor);
                    continue;
                }
            };
            let tn = tg.norm();
            if tn < gn {
                x = trial;
                g = tg;
                gn = tn;
                mu *= 0.1;
                if mu < floor {
                    mu = 0.0;
                }
                accepted = true;
                break;
            }
            mu = (mu * 10.0).max(floor);
        }
        if !accepted {
            break;
        }
    }
    Ok(x)
}

/// Multi-start search for critical points inside `region`.
///
/// Starts that fail to reach `||grad F|| <= CRITICAL_TOL` or that leave the
/// region are dropped with a debug log. The survivors are deduplicated,
/// classified and sorted by value.
pub fn find_critical_points<O: Objective + ?Sized>(obj: &O, region: &Region, cfg: &SearchConfig) -> Result<Vec<CriticalPoint>> {
    region.validate()?;
    if region.dim() != obj.dim() {
        return Err(Error::invalid(format!(
            "region has dimension {}, objective {}",
            region.dim(),
            obj.dim()
        )));
    }
    if cfg.n_starts == 0 && cfg.extra_starts.is_empty() {
        return Err(Error::invalid("critical point search needs at least one start"));
    }
    let mut starts: Vec<ParamVec> = (0..cfg.n_starts)
        .map(|i| region.sample(&mut StreamRng::new(derive_seed(cfg.seed, &[i as u64]), 0)))
        .collect();
    starts.extend(cfg.extra_starts.iter().cloned());
    let polished = cfg.exec.map(starts.into_iter().enumerate().collect(), |(i, s)| -> Result<Option<CriticalPoint>> {
        let x = newton_polish(obj, &s, cfg.max_newton_iters)?;
        if !region.contains(&x, 1e-9) {
            log::debug!("start {i} left the region");
            return Ok(None);
        }
        let cp = CriticalPoint::at(obj, &x)?;
        if cp.grad_norm > CRITICAL_TOL || !cp.grad_norm.is_finite() {
            log::debug!("start {i} stalled at gradient norm {:.3e}", cp.grad_norm);
            return Ok(None);
        }
        Ok(Some(cp))
    });
    let tol = cfg.dedup_tol * region.scale();
    let mut found: Vec<CriticalPoint> = Vec::new();
    for cp in polished {
        let Some(cp) = cp? else { continue };
        match found.iter_mut().find(|f| (&f.location - &cp.location).norm() <= tol) {
            Some(f) => {
                if cp.grad_norm < f.grad_norm {
                    *f = cp;
                }
            }
            None => found.push(cp),
        }
    }
    found.sort_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then_with(|| a.location.iter().zip(b.location.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(found)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub index_agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Pairing {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
}

impl Pairing {
    pub fn is_perfect(&self) -> bool {
        self.unmatched_a.is_empty() && self.unmatched_b.is_empty()
    }

    pub fn max_distance(&self) -> f64 {
        self.pairs.iter().map(|p| p.distance).fold(0.0, f64::max)
    }

    pub fn indices_agree(&self) -> bool {
        self.pairs.iter().all(|p| p.index_agrees)
    }
}

/// Greedy nearest-pair matching: repeatedly pairs the closest unused points.
pub fn match_critical_points(a: &[CriticalPoint], b: &[CriticalPoint]) -> Pairing {
    let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, pa) in a.iter().enumerate() {
        for (j, pb) in b.iter().enumerate() {
            if pa.location.len() == pb.location.len() {
                cand.push(((&pa.location - &pb.location).norm(), i, j));
            }
        }
    }
    cand.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::new();
    for (distance, i, j) in cand {
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        pairs.push(MatchedPair {
            a: i,
            b: j,
            distance,
            index_agrees: a[i].index == b[j].index,
        });
    }
    pairs.sort_by_key(|p| p.a);
    Pairing {
        pairs,
        unmatched_a: (0..a.len()).filter(|&i| !used_a[i]).collect(),
        unmatched_b: (0..b.len()).filter(|&j| !used_b[j]).collect(),
    }
}

/// Everything a landscape run measured, as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeReport {
    pub schema_version: u32,
    #[serde(rename = "criticalpoints")]
    pub critical_points: Vec<CriticalPoint>,
    /// Critical points of a second objective that `pairing` refers to.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference_points: Vec<CriticalPoint>,
    pub pairing: Vec<MatchedPair>,
    #[serde(default)]
    pub unmatched: Unmatched,
    pub constants: Option<LandscapeConstants>,
    pub certificate: Option<MorseCertificate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Unmatched {
    pub criticalpoints: Vec<usize>,
    pub reference: Vec<usize>,
}

impl LandscapeReport {
    pub fn new(critical_points: Vec<CriticalPoint>) -> Self {
        LandscapeReport {
            schema_version: REPORT_SCHEMA_VERSION,
            critical_points,
            reference_points: Vec::new(),
            pairing: Vec::new(),
            unmatched: Unmatched::default(),
            constants: None,
            certificate: None,
        }
    }

    /// Matches the report's points against `reference` and stores both.
    pub fn with_reference(mut self, reference: Vec<CriticalPoint>) -> Self {
        let p = match_critical_points(&self.critical_points, &reference);
        self.pairing = p.pairs;
        self.unmatched = Unmatched {
            criticalpoints: p.unmatched_a,
            reference: p.unmatched_b,
        };
        self.reference_points = reference;
        self
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let report: LandscapeReport = serde_json::from_str(s)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "landscape report schema {} is not supported (expected {REPORT_SCHEMA_VERSION})",
                report.schema_version
            )));
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests;
