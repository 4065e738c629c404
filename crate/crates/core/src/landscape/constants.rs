use serde::{Deserialize, Serialize};

use super::Region;
use crate::error::{Error, Result};
use crate::math::{derive_seed, sym_eigen, vec_serde, ParamVec, StreamRng};
use crate::models::Objective;
use crate::par::Execution;

/// Curvature and gradient bounds measured on a random sample of `B(0, r)`.
///
/// `eps0` is half the distance from `theta0` to the nearest sampled point
/// without positive curvature, capped at `r / 3`. The lower bounds with a
/// `_lower` suffix other than `kappa_lower` are taken over sample points at
/// distance more than `eps0` from `theta0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeConstants {
    pub eps0: f64,
    /// Smallest Hessian eigenvalue on `B(theta0, eps0)`.
    pub kappa_lower: f64,
    /// Largest Hessian operator norm on the ball.
    pub kappa_upper: f64,
    pub l_lower: f64,
    pub l_upper: f64,
    /// Smallest `<theta - theta0, grad> / ||theta - theta0||^2`.
    pub t0: f64,
    pub radius: f64,
    #[serde(with = "vec_serde")]
    pub theta0: ParamVec,
    pub points: usize,
    pub seed: u64,
}

struct Probe {
    dist: f64,
    lmin: f64,
    op: f64,
    gnorm: f64,
    ratio: f64,
}

/// Half the points are uniform on `B(0, r)`, half uniform on
/// `B(theta0, r / 3)`, so the neighbourhood of `theta0` is well covered.
pub fn measure_constants<O: Objective + ?Sized>(
    obj: &O,
    theta0: &ParamVec,
    radius: f64,
    points: usize,
    seed: u64,
    exec: Execution,
) -> Result<LandscapeConstants> {
    if theta0.len() != obj.dim() {
        return Err(Error::invalid("theta0 dimension does not match the objective"));
    }
    if !(radius > 0.0) || points < 4 {
        return Err(Error::invalid("need a positive radius and at least 4 points"));
    }
    let cap = radius / 3.0;
    let sample: Vec<ParamVec> = (0..points)
        .map(|i| {
            let mut rng = StreamRng::new(derive_seed(seed, &[i as u64]), 0);
            if i % 2 == 0 {
                rng.in_ball(&ParamVec::zeros(theta0.len()), radius)
            } else {
                rng.in_ball(theta0, cap)
            }
        })
        .collect();
    let probes = exec.map(sample, |x| -> Result<Probe> {
        let g = obj.gradient(&x)?;
        let eig = sym_eigen(&obj.hessian(&x)?)?;
        let diff = &x - theta0;
        let dist = diff.norm();
        Ok(Probe {
            dist,
            lmin: eig.min(),
            op: eig.max().abs().max(eig.min().abs()),
            gnorm: g.norm(),
            ratio: if dist > 0.0 { diff.dot(&g) / (dist * dist) } else { f64::INFINITY },
        })
    });
    let probes = probes.into_iter().collect::<Result<Vec<_>>>()?;
    let bad = probes.iter().filter(|p| p.lmin <= 0.0).map(|p| p.dist).fold(f64::INFINITY, f64::min);
    let eps0 = (0.5 * bad).min(cap);
    let fold_min = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::INFINITY, f64::min);
    let fold_max = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::NEG_INFINITY, f64::max);
    let inner = || probes.iter().filter(|p| p.dist <= eps0);
    let outer = || probes.iter().filter(|p| p.dist > eps0);
    Ok(LandscapeConstants {
        eps0,
        kappa_lower: fold_min(&mut inner().map(|p| p.lmin)),
        kappa_upper: fold_max(&mut probes.iter().map(|p| p.op)),
        l_lower: fold_min(&mut outer().map(|p| p.gnorm)),
        l_upper: fold_max(&mut probes.iter().map(|p| p.gnorm)),
        t0: fold_min(&mut outer().map(|p| p.ratio)),
        radius,
        theta0: theta0.clone(),
        points,
        seed,
    })
}

/// Whether the negative gradient points into the region everywhere on a
/// sample of its boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorbingCheck {
    pub holds: bool,
    /// Smallest `<grad F, n>` over the sample, `n` the outward normal.
    pub min_outward_gradient: f64,
    pub samples: usize,
}

pub fn check_absorbing<O: Objective + ?Sized>(
    obj: &O,
    region: &Region,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<AbsorbingCheck> {
    region.validate()?;
    if samples == 0 {
        return Err(Error::invalid("absorbing check needs at least one sample"));
    }
    let mut rng = StreamRng::new(seed, 0);
    let pts: Vec<(ParamVec, ParamVec)> = (0..samples).map(|_| region.sample_boundary(&mut rng)).collect();
    let dots = exec.map(pts, |(x, n)| obj.gradient(&x).map(|g| g.dot(&n)));
    let mut min = f64::INFINITY;
    for d in dots {
        min = min.min(d?);
    }
    Ok(AbsorbingCheck {
        holds: min > 0.0,
        min_outward_gradient: min,
        samples,
    })
}
