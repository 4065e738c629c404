use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{vec_serde, ParamVec, StreamRng};

/// A compact search or certification region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Region {
    Ball {
        #[serde(with = "vec_serde")]
        center: ParamVec,
        radius: f64,
    },
    /// Cartesian product of equal-radius balls, one per block of
    /// coordinates (the blocks have equal length).
    BallProduct { centers: Vec<Vec<f64>>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Region {
    pub fn ball(center: ParamVec, radius: f64) -> Self {
        Region::Ball { center, radius }
    }

    pub fn origin_ball(dim: usize, radius: f64) -> Self {
        Region::Ball {
            center: ParamVec::zeros(dim),
            radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Region::Ball { center, radius } => *radius > 0.0 && !center.is_empty(),
            Region::BallProduct { centers, radius } => {
                *radius > 0.0 && !centers.is_empty() && centers.iter().all(|c| !c.is_empty() && c.len() == centers[0].len())
            }
            Region::Box { lo, hi } => !lo.is_empty() && lo.len() == hi.len() && lo.iter().zip(hi).all(|(a, b)| a < b),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("degenerate region {self:?}")))
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::Ball { center, .. } => center.len(),
            Region::BallProduct { centers, .. } => centers.len() * centers[0].len(),
            Region::Box { lo, .. } => lo.len(),
        }
    }

    /// Characteristic length used for tolerances.
    pub fn scale(&self) -> f64 {
        match self {
            Region::Ball { radius, .. } | Region::BallProduct { radius, .. } => *radius,
            Region::Box { lo, hi } => 0.5 * lo.iter().zip(hi).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt(),
        }
    }

    fn blocks(&self) -> Option<(usize, &[Vec<f64>], f64)> {
        match self {
            Region::BallProduct { centers, radius } => Some((centers[0].len(), centers, *radius)),
            _ => None,
        }
    }

    /// Membership with relative slack `tol * scale`.
    pub fn contains(&self, x: &ParamVec, tol: f64) -> bool {
        let slack = tol * self.scale();
        match self {
            Region::Ball { center, radius } => (x - center).norm() <= radius + slack,
            Region::BallProduct { .. } => {
                let (k, centers, r) = self.blocks().unwrap();
                centers.iter().enumerate().all(|(j, c)| {
                    let d2: f64 = (0..k).map(|i| (x[j * k + i] - c[i]).powi(2)).sum();
                    d2.sqrt() <= r + slack
                })
            }
            Region::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *v >= a - slack && *v <= b + slack),
        }
    }

    /// Uniform sample from the region.
    pub fn sample(&self, rng: &mut StreamRng) -> ParamVec {
        match self {
            Region::Ball { center, radius } => rng.in_ball(center, *radius),
            Region::BallProduct { .. } => {
                let (k, centers, r) = self.blocks().unwrap();
                let mut out = Vec::with_capacity(k * centers.len());
                for c in centers {
                    out.extend(rng.in_ball(&ParamVec::from_column_slice(c), r).iter());
                }
                ParamVec::from_vec(out)
            }
            Region::Box { lo, hi } => ParamVec::from_fn(lo.len(), |i, _| lo[i] + (hi[i] - lo[i]) * rng.uniform()),
        }
    }

    /// A random boundary point with its outward unit normal.
    pub fn sample_boundary(&self, rng: &mut StreamRng) -> (ParamVec, ParamVec) {
        match self {
            Region::Ball { center, radius } => {
                let u = rng.unit_vec(center.len());
                (center + &u * *radius, u)
            }
            Region::BallProduct { .. } => {
                let (k, centers, r) = self.blocks().unwrap();
                let face = rng.below(centers.len());
                let mut x = self.sample(rng);
                let u = rng.unit_vec(k);
                let mut normal = ParamVec::zeros(x.len());
                for i in 0..k {
                    x[face * k + i] = centers[face][i] + r * u[i];
                    normal[face * k + i] = u[i];
                }
                (x, normal)
            }
            Region::Box { lo, hi } => {
                let mut x = self.sample(rng);
                let i = rng.below(lo.len());
                let upper = rng.bernoulli(0.5);
                x[i] = if upper { hi[i] } else { lo[i] };
                let mut normal = ParamVec::zeros(lo.len());
                normal[i] = if upper { 1.0 } else { -1.0 };
                (x, normal)
            }
        }
    }

    /// Axis-aligned bounding box.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Region::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            Region::BallProduct { .. } => {
                let (_, centers, r) = self.blocks().unwrap();
                let lo = centers.iter().flat_map(|c| c.iter().map(move |v| v - r)).collect();
                let hi = centers.iter().flat_map(|c| c.iter().map(move |v| v + r)).collect();
                (lo, hi)
            }
            Region::Box { lo, hi } => (lo.clone(), hi.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn regions() -> Vec<Region> {
        vec![
            Region::ball(ParamVec::from_vec(vec![1.0, -1.0, 0.5]), 2.0),
            Region::BallProduct {
                centers: vec![vec![0.0, 1.0], vec![2.0, 0.0]],
                radius: 0.5,
            },
            Region::Box {
                lo: vec![-1.0, 0.0],
                hi: vec![1.0, 3.0],
            },
        ]
    }

    #[test]
    fn samples_are_inside_and_boundary_is_on_the_edge() {
        let mut rng = StreamRng::new(1, 0);
        for region in regions() {
            region.validate().unwrap();
            for _ in 0..200 {
                let x = region.sample(&mut rng);
                assert!(region.contains(&x, 1e-12));
                let (b, n) = region.sample_boundary(&mut rng);
                assert!(region.contains(&b, 1e-12));
                assert!((n.norm() - 1.0).abs() < 1e-12);
                assert!(!region.contains(&(&b + &n * (1e-3 * region.scale())), 1e-9));
            }
        }
    }

    #[test]
    fn bounding_boxes_contain_samples() {
        let mut rng = StreamRng::new(2, 0);
        for region in regions() {
            let (lo, hi) = region.bounds();
            for _ in 0..100 {
                let x = region.sample(&mut rng);
                assert!(x.iter().zip(lo.iter().zip(&hi)).all(|(v, (a, b))| v >= a && v <= b));
            }
        }
    }

    #[test]
    fn degenerate_regions_rejected() {
        assert!(Region::origin_ball(2, 0.0).validate().is_err());
        assert!(Region::Box { lo: vec![1.0], hi: vec![1.0] }.validate().is_err());
    }
}
