//! Gaussian quadrature rules.
//!
//! Nodes are found by Newton iteration on the orthonormal three-term
//! recurrences. Hermite starting guesses come from the Jacobi matrix
//! eigenvalues, Legendre ones from the usual cosine asymptotics.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub const MAX_NODES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    /// Weight function `exp(-x^2)` on the real line.
    GaussHermite,
    /// Unit weight on [-1, 1].
    GaussLegendre,
}

/// A one-dimensional rule: nodes ascending, weights positive.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub kind: RuleKind,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Product of two one-dimensional rules.
#[derive(Debug, Clone)]
pub struct TensorRule2d {
    pub nodes: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

fn check_count(m: usize) -> Result<()> {
    if (1..=MAX_NODES).contains(&m) {
        Ok(())
    } else {
        Err(Error::invalid(format!("node count must be in 1..={MAX_NODES}, got {m}")))
    }
}

pub fn gauss_hermite(m: usize) -> Result<QuadratureRule> {
    check_count(m)?;
    // Starting guesses: eigenvalues of the symmetric Jacobi matrix.
    let jacobi = DMatrix::from_fn(m, m, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut guesses: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    guesses.sort_by(f64::total_cmp);

    let pim4 = PI.powf(-0.25);
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for (i, &z0) in guesses.iter().enumerate().skip(m / 2) {
        let mut z = z0;
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=m {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * m as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        let mirror = m - 1 - i;
        x[i] = z;
        x[mirror] = -z;
        w[i] = 2.0 / (pp * pp);
        w[mirror] = w[i];
    }
    if m % 2 == 1 {
        x[m / 2] = 0.0;
    }
    Ok(QuadratureRule {
        kind: RuleKind::GaussHermite,
        nodes: x,
        weights: w,
    })
}

pub fn gauss_legendre(m: usize) -> Result<QuadratureRule> {
    check_count(m)?;
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    let half = m.div_ceil(2);
    for i in 0..half {
        let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 1..=m {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = m as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[m - 1 - i] = w[i];
    }
    if m % 2 == 1 {
        x[m / 2] = 0.0;
    }
    Ok(QuadratureRule {
        kind: RuleKind::GaussLegendre,
        nodes: x,
        weights: w,
    })
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Rescales a Gauss–Hermite rule into nodes/weights for `E f(Z)`,
    /// `Z ~ N(0, 1)`. Weights sum to one.
    pub fn standard_normal(&self) -> QuadratureRule {
        debug_assert_eq!(self.kind, RuleKind::GaussHermite);
        let s = 2.0_f64.sqrt();
        let c = 1.0 / PI.sqrt();
        QuadratureRule {
            kind: self.kind,
            nodes: self.nodes.iter().map(|x| s * x).collect(),
            weights: self.weights.iter().map(|w| c * w).collect(),
        }
    }

    /// Legendre rule mapped onto `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> QuadratureRule {
        debug_assert_eq!(self.kind, RuleKind::GaussLegendre);
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        QuadratureRule {
            kind: self.kind,
            nodes: self.nodes.iter().map(|x| mid + half * x).collect(),
            weights: self.weights.iter().map(|w| half * w).collect(),
        }
    }
}

impl TensorRule2d {
    pub fn product(a: &QuadratureRule, b: &QuadratureRule) -> Self {
        let mut nodes = Vec::with_capacity(a.len() * b.len());
        let mut weights = Vec::with_capacity(a.len() * b.len());
        for (&xa, &wa) in a.nodes.iter().zip(&a.weights) {
            for (&xb, &wb) in b.nodes.iter().zip(&b.weights) {
                nodes.push([xa, xb]);
                weights.push(wa * wb);
            }
        }
        TensorRule2d { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64, f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(p, &w)| w * f(p[0], p[1])).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_factorial_odd(k: u32) -> f64 {
        (1..=k).step_by(2).map(f64::from).product()
    }

    /// Exact value of the integral of x^k e^{-x^2} over the line.
    fn hermite_moment(k: u32) -> f64 {
        if k % 2 == 1 {
            0.0
        } else {
            double_factorial_odd(k.saturating_sub(1)) * PI.sqrt() / 2f64.powi((k / 2) as i32)
        }
    }

    #[test]
    fn one_point_rule() {
        let r = gauss_hermite(1).unwrap();
        assert_eq!(r.nodes, vec![0.0]);
        assert!((r.weights[0] - PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn weights_sum_to_sqrt_pi() {
        for m in [2, 5, 20, 60, 120, 200] {
            let r = gauss_hermite(m).unwrap();
            let s: f64 = r.weights.iter().sum();
            assert!((s - PI.sqrt()).abs() < 1e-12, "m={m}: {s}");
            assert!(r.weights.iter().all(|&w| w > 0.0));
            assert!(r.nodes.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn second_moment() {
        for m in [2, 7, 60] {
            let r = gauss_hermite(m).unwrap();
            assert!((r.integrate(|x| x * x) - PI.sqrt() / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fourth_moment_with_five_nodes() {
        let r = gauss_hermite(5).unwrap();
        assert!((r.integrate(|x| x.powi(4)) - 3.0 * PI.sqrt() / 4.0).abs() < 1e-12);
    }

    #[test]
    fn polynomial_exactness_up_to_degree_2m_minus_1() {
        for m in [1usize, 2, 3, 6, 10, 15] {
            let r = gauss_hermite(m).unwrap();
            for k in 0..(2 * m as u32) {
                let want = hermite_moment(k);
                let got = r.integrate(|x| x.powi(k as i32));
                let scale = r.integrate(|x| x.abs().powi(k as i32)).max(1.0);
                assert!((got - want).abs() <= 1e-10 * scale, "m={m} k={k}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn logistic_integrates_to_half_sqrt_pi() {
        // sigma(x) - 1/2 is odd, so only the constant survives.
        let r = gauss_hermite(40).unwrap();
        let got = r.integrate(|x| 1.0 / (1.0 + (-x).exp()));
        assert!((got - PI.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_counts() {
        assert!(gauss_hermite(0).is_err());
        assert!(gauss_hermite(201).is_err());
        assert!(gauss_legendre(0).is_err());
    }

    #[test]
    fn legendre_exactness() {
        let r = gauss_legendre(8).unwrap();
        assert!((r.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        assert!((r.integrate(|x| x.powi(14)) - 2.0 / 15.0).abs() < 1e-14);
        let s = r.on_interval(1.0, 3.0);
        assert!((s.integrate(|x| x * x) - 26.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn tensor_rule_moments() {
        let g = gauss_hermite(10).unwrap().standard_normal();
        let t = TensorRule2d::product(&g, &g);
        assert!((t.integrate(|_, _| 1.0) - 1.0).abs() < 1e-13);
        assert!((t.integrate(|a, b| a * a * b * b) - 1.0).abs() < 1e-12);
        assert!(t.integrate(|a, b| a * b).abs() < 1e-13);
    }
}
