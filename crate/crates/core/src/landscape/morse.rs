use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::Region;
use crate::error::{Error, Result};
use crate::math::{sym_eigen, vec_serde, ParamVec, StreamRng};
use crate::models::Objective;
use crate::par::Execution;

pub const DEFAULT_BUDGET: usize = 100_000;
pub const MAX_WITNESSES: usize = 100;

/// Sample points used by a certificate: a tensor grid on the bounding box
/// (clipped to the region) up to three dimensions, Latin-hypercube samples
/// beyond that, plus random boundary points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub per_axis: usize,
    pub samples: usize,
    pub boundary: usize,
    pub seed: u64,
    pub budget: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            per_axis: 41,
            samples: 20_000,
            boundary: 1_000,
            seed: 0,
            budget: DEFAULT_BUDGET,
        }
    }
}

impl GridSpec {
    pub fn uses_tensor(dim: usize) -> bool {
        dim <= 3
    }

    /// Number of interior candidates plus boundary points.
    pub fn total(&self, dim: usize) -> Option<usize> {
        let interior = if Self::uses_tensor(dim) {
            self.per_axis.checked_pow(dim as u32)?
        } else {
            self.samples
        };
        interior.checked_add(self.boundary)
    }

    fn check(&self, dim: usize) -> Result<()> {
        if Self::uses_tensor(dim) && self.per_axis < 2 {
            return Err(Error::invalid("tensor grid needs at least 2 points per axis"));
        }
        match self.total(dim) {
            Some(t) if t <= self.budget => Ok(()),
            t => Err(Error::invalid(format!(
                "grid needs {} points, budget is {}",
                t.map_or_else(|| "too many".to_string(), |t| t.to_string()),
                self.budget
            ))),
        }
    }

    fn interior(&self, region: &Region, rng: &mut StreamRng) -> Vec<ParamVec> {
        let dim = region.dim();
        if Self::uses_tensor(dim) {
            let (lo, hi) = region.bounds();
            let m = self.per_axis;
            let total = m.pow(dim as u32);
            (0..total)
                .map(|mut flat| {
                    ParamVec::from_fn(dim, |i, _| {
                        let k = flat % m;
                        flat /= m;
                        lo[i] + (hi[i] - lo[i]) * k as f64 / (m - 1) as f64
                    })
                })
                .filter(|x| region.contains(x, 0.0))
                .collect()
        } else {
            let width = lhs_width(region);
            latin_hypercube(self.samples, width, rng).iter().map(|u| from_unit(region, u)).collect()
        }
    }
}

fn lhs_width(region: &Region) -> usize {
    match region {
        Region::Ball { center, .. } => center.len() + 1,
        Region::BallProduct { centers, .. } => centers.len() * (centers[0].len() + 1),
        Region::Box { lo, .. } => lo.len(),
    }
}

/// `n` points in `[0,1)^m`, one per stratum along every axis.
fn latin_hypercube(n: usize, m: usize, rng: &mut StreamRng) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; m]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..m {
        for i in (1..n).rev() {
            perm.swap(i, rng.below(i + 1));
        }
        for (i, row) in out.iter_mut().enumerate() {
            row[j] = (perm[i] as f64 + rng.uniform()) / n as f64;
        }
    }
    out
}

fn ball_point(center: &[f64], radius: f64, u: &[f64]) -> Vec<f64> {
    let std = Normal::standard();
    let d = center.len();
    let z: Vec<f64> = u[..d].iter().map(|p| std.inverse_cdf(p.clamp(1e-16, 1.0 - 1e-16))).collect();
    let n = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rad = radius * u[d].powf(1.0 / d as f64);
    center
        .iter()
        .enumerate()
        .map(|(i, c)| c + if n > 0.0 { rad * z[i] / n } else if i == 0 { rad } else { 0.0 })
        .collect()
}

/// Maps a point of the unit cube onto the region so that uniform input
/// gives uniform output.
fn from_unit(region: &Region, u: &[f64]) -> ParamVec {
    match region {
        Region::Ball { center, radius } => ParamVec::from_vec(ball_point(center.as_slice(), *radius, u)),
        Region::BallProduct { centers, radius } => {
            let w = centers[0].len() + 1;
            let v: Vec<f64> = centers
                .iter()
                .enumerate()
                .flat_map(|(j, c)| ball_point(c, *radius, &u[j * w..(j + 1) * w]))
                .collect();
            ParamVec::from_vec(v)
        }
        Region::Box { lo, hi } => ParamVec::from_fn(lo.len(), |i, _| lo[i] + (hi[i] - lo[i]) * u[i]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Violation {
    /// A near-critical point with a Hessian eigenvalue below `eta` in magnitude.
    SmallEigenvalue,
    /// A boundary point with gradient norm at most `epsilon`.
    BoundaryGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(with = "vec_serde")]
    pub location: ParamVec,
    pub grad_norm: f64,
    pub min_abs_eigenvalue: Option<f64>,
    pub violation: Violation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorseCertificate {
    pub region: Region,
    pub grid: GridSpec,
    pub epsilon: f64,
    pub eta: f64,
    pub holds: bool,
    pub interior_points: usize,
    pub boundary_points: usize,
    /// Interior points with gradient norm at most `epsilon`.
    pub near_critical: usize,
    /// Smallest `min_i |lambda_i|` over near-critical points; the largest
    /// `eta` for which the interior condition holds on this grid.
    pub measured_eta: Option<f64>,
    pub min_boundary_grad: Option<f64>,
    pub violations: usize,
    /// At most [`MAX_WITNESSES`] violating points, in grid order.
    pub witnesses: Vec<Witness>,
}

enum Probe {
    Far,
    Near { grad_norm: f64, min_abs: f64, location: ParamVec },
    Boundary { grad_norm: f64, location: ParamVec },
}

/// Checks the `(epsilon, eta)` strong-Morse condition on a sample of
/// `region`. Hessians are only computed at near-critical points.
pub fn certify_strong_morse<O: Objective + ?Sized>(
    obj: &O,
    region: &Region,
    grid: &GridSpec,
    epsilon: f64,
    eta: f64,
    exec: Execution,
) -> Result<MorseCertificate> {
    region.validate()?;
    let dim = region.dim();
    if dim != obj.dim() {
        return Err(Error::invalid(format!("region has dimension {dim}, objective {}", obj.dim())));
    }
    if !(epsilon >= 0.0 && eta >= 0.0) {
        return Err(Error::invalid("epsilon and eta must be nonnegative"));
    }
    grid.check(dim)?;
    let mut rng = StreamRng::new(grid.seed, 0);
    let interior = grid.interior(region, &mut rng);
    let mut brng = StreamRng::new(grid.seed, 1);
    let boundary: Vec<ParamVec> = (0..grid.boundary).map(|_| region.sample_boundary(&mut brng).0).collect();
    let (n_int, n_bdy) = (interior.len(), boundary.len());
    let jobs: Vec<(bool, ParamVec)> = interior.into_iter().map(|x| (false, x)).chain(boundary.into_iter().map(|x| (true, x))).collect();
    let probes = exec.map(jobs, |(on_boundary, x)| -> Result<Probe> {
        let grad_norm = obj.gradient(&x)?.norm();
        if on_boundary {
            return Ok(Probe::Boundary { grad_norm, location: x });
        }
        if grad_norm > epsilon {
            return Ok(Probe::Far);
        }
        let eig = sym_eigen(&obj.hessian(&x)?)?;
        let min_abs = eig.values.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
        Ok(Probe::Near { grad_norm, min_abs, location: x })
    });
    let mut cert = MorseCertificate {
        region: region.clone(),
        grid: grid.clone(),
        epsilon,
        eta,
        holds: true,
        interior_points: n_int,
        boundary_points: n_bdy,
        near_critical: 0,
        measured_eta: None,
        min_boundary_grad: None,
        violations: 0,
        witnesses: Vec::new(),
    };
    for probe in probes {
        let witness = match probe? {
            Probe::Far => None,
            Probe::Near { grad_norm, min_abs, location } => {
                cert.near_critical += 1;
                cert.measured_eta = Some(cert.measured_eta.map_or(min_abs, |m| m.min(min_abs)));
                (min_abs < eta).then_some(Witness {
                    location,
                    grad_norm,
                    min_abs_eigenvalue: Some(min_abs),
                    violation: Violation::SmallEigenvalue,
                })
            }
            Probe::Boundary { grad_norm, location } => {
                cert.min_boundary_grad = Some(cert.min_boundary_grad.map_or(grad_norm, |m| m.min(grad_norm)));
                (grad_norm <= epsilon).then_some(Witness {
                    location,
                    grad_norm,
                    min_abs_eigenvalue: None,
                    violation: Violation::BoundaryGradient,
                })
            }
        };
        if let Some(w) = witness {
            cert.holds = false;
            cert.violations += 1;
            if cert.witnesses.len() < MAX_WITNESSES {
                cert.witnesses.push(w);
            }
        }
    }
    Ok(cert)
}
