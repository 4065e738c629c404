//! Population integrals reduced to one or two Gaussian coordinates.

use nalgebra::{DMatrix, Matrix2, Vector2};

use crate::datagen::{NoiseSpec, PopulationLaw};
use crate::math::{ParamVec, QuadratureRule, SymMatrix};
use crate::models::{logistic, Activation, ModelSpec, LN_2PI};

/// Orthonormal basis (as the two columns of a `d x 2` matrix) of the span
/// of `a` and `b`, with the first column along `a` when `a` is nonzero.
/// Columns beyond the rank are zero.
pub(crate) fn span_basis(a: &ParamVec, b: &ParamVec) -> DMatrix<f64> {
    let d = a.len();
    let mut u = DMatrix::zeros(d, 2);
    let mut col = 0;
    for v in [a, b] {
        let mut w = v.clone();
        let scale = v.norm();
        for j in 0..col {
            let e = u.column(j);
            let c = e.dot(&w);
            w.axpy(-c, &e, 1.0);
        }
        let wn = w.norm();
        if wn > 1e-13 * scale && wn > 0.0 {
            u.set_column(col, &(w / wn));
            col += 1;
        }
    }
    u
}

fn coords(u: &DMatrix<f64>, v: &ParamVec) -> Vector2<f64> {
    Vector2::new(u.column(0).dot(v), u.column(1).dot(v))
}

fn lift(u: &DMatrix<f64>, v: &Vector2<f64>) -> ParamVec {
    u.column(0) * v[0] + u.column(1) * v[1]
}

/// `U M U^T + c (I - U U^T)`.
fn lift_matrix(u: &DMatrix<f64>, m: &Matrix2<f64>, c: f64) -> DMatrix<f64> {
    let d = u.nrows();
    let uut = u * u.transpose();
    let mut out = u * DMatrix::from_column_slice(2, 2, m.as_slice()) * u.transpose();
    out += (DMatrix::identity(d, d) - uut) * c;
    out
}

pub(crate) struct Moments {
    pub value: f64,
    pub grad: ParamVec,
    pub hess: Option<SymMatrix>,
}

/// Standard normal mass beyond this many deviations is below 1e-18.
const TAIL: f64 = 9.0;

/// Feeds `(t, weight)` pairs that integrate against the standard normal
/// density: Gauss-Legendre on pieces of at most `width`, split at `breaks`.
fn std_normal_pieces(breaks: &[f64], width: f64, rule: &QuadratureRule, mut f: impl FnMut(f64, f64)) {
    let mut cuts = [-TAIL, TAIL, 0.0, 0.0, 0.0, 0.0];
    let mut len = 2;
    for &b in breaks.iter().take(4) {
        if b.abs() < TAIL {
            cuts[len] = b;
            len += 1;
        }
    }
    let cuts = &mut cuts[..len];
    cuts.sort_by(f64::total_cmp);
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    for piece in cuts.windows(2) {
        let (a, b) = (piece[0], piece[1]);
        if b <= a {
            continue;
        }
        let parts = ((b - a) / width).ceil().max(1.0) as usize;
        let half = 0.5 * (b - a) / parts as f64;
        for k in 0..parts {
            let mid = a + (2 * k + 1) as f64 * half;
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let t = mid + half * x;
                f(t, w * half * norm * (-0.5 * t * t).exp());
            }
        }
    }
}

/// Piece width resolving a logistic-type transition of slope `scale`.
fn width_for(scale: f64) -> f64 {
    if scale > 1.0 {
        4.0 / scale
    } else {
        4.0
    }
}

/// The square loss is affine in the label, so each outer node only needs
/// `E[p]`, `E[p a2]` and `E[p a2^2]` over the inner coordinate.
pub(crate) fn classification(
    spec: &ModelSpec,
    truth_activation: &Activation,
    theta0: &ParamVec,
    theta: &ParamVec,
    rule: &QuadratureRule,
    want_hess: bool,
) -> Moments {
    let u = span_basis(theta, theta0);
    let t = coords(&u, theta);
    let t0 = coords(&u, theta0);
    // theta lies on the first axis, so <theta, X> = t[0] a1
    let (tn, al, be) = (t[0], t0[0], t0[1]);
    let outer_width = width_for(tn.abs().max(al.abs()));
    let inner_width = width_for(be.abs());
    let mut value = 0.0;
    let mut g = Vector2::zeros();
    let mut m = Matrix2::zeros();
    let mut beta_mean = 0.0;
    std_normal_pieces(&[0.0], outer_width, rule, |a1, w1| {
        let (s, s1, s2) = spec.activation.eval2(tn * a1);
        let (mut p0, mut p1, mut p2) = (0.0, 0.0, 0.0);
        if be == 0.0 {
            p0 = truth_activation.value(al * a1);
            p2 = p0;
        } else {
            std_normal_pieces(&[-al * a1 / be], inner_width, rule, |a2, w2| {
                let p = truth_activation.value(al * a1 + be * a2);
                p0 += w2 * p;
                p1 += w2 * p * a2;
                p2 += w2 * p * a2 * a2;
            });
        }
        value += w1 * (p0 * (1.0 - 2.0 * s) + s * s);
        let ga = -2.0 * s1;
        g[0] += w1 * ga * (p0 - s) * a1;
        g[1] += w1 * ga * p1;
        if want_hess {
            // beta = c - 2 s'' p, moments of a2 against 1 are (1, 0, 1)
            let c = 2.0 * (s1 * s1 + s * s2);
            let b0 = c - 2.0 * s2 * p0;
            let b1 = -2.0 * s2 * p1;
            let b2 = c - 2.0 * s2 * p2;
            beta_mean += w1 * b0;
            m[(0, 0)] += w1 * b0 * a1 * a1;
            m[(0, 1)] += w1 * b1 * a1;
            m[(1, 1)] += w1 * b2;
        }
    });
    m[(1, 0)] = m[(0, 1)];
    Moments {
        value,
        grad: lift(&u, &g),
        hess: want_hess.then(|| SymMatrix::symmetrized(lift_matrix(&u, &m, beta_mean))),
    }
}

pub(crate) fn robust_regression(
    spec: &ModelSpec,
    noise: &NoiseSpec,
    theta0: &ParamVec,
    theta: &ParamVec,
    rule: &QuadratureRule,
    want_hess: bool,
) -> Moments {
    let d = theta.len();
    let diff = theta0 - theta;
    let s = diff.norm();
    let s2 = s * s;
    let breaks = spec.loss.breakpoints();
    let mut value = 0.0;
    let mut g_coef = 0.0;
    let mut curv_perp = 0.0;
    let mut curv_par = 0.0;
    for (weight, var) in noise.components() {
        if weight == 0.0 {
            continue;
        }
        let v = var + s2;
        let sd = v.sqrt();
        let mut body = |r: f64, w: f64| {
            let (rho, psi, dpsi) = spec.loss.eval(r);
            let w = w * weight;
            value += w * rho;
            if v > 0.0 {
                g_coef += w * psi * s * r / v;
            }
            if want_hess {
                curv_perp += w * dpsi;
                let ea2 = if v > 0.0 { var / v + s2 * r * r / (v * v) } else { 1.0 };
                curv_par += w * dpsi * ea2;
            }
        };
        if v == 0.0 {
            body(0.0, 1.0);
        } else {
            let scaled: Vec<f64> = breaks.iter().map(|b| b / sd).collect();
            std_normal_pieces(&scaled, 2.0, rule, |t, w| body(sd * t, w));
        }
    }
    let (grad, hess) = if s > 0.0 {
        let u = &diff / s;
        let grad = &u * (-g_coef);
        let hess = want_hess.then(|| {
            let uut = &u * u.transpose();
            let m = (DMatrix::identity(d, d) - &uut) * curv_perp + uut * curv_par;
            SymMatrix::symmetrized(m)
        });
        (grad, hess)
    } else {
        (ParamVec::zeros(d), want_hess.then(|| SymMatrix::symmetrized(DMatrix::identity(d, d) * curv_perp)))
    };
    Moments { value, grad, hess }
}

pub(crate) fn gmm2(law: &PopulationLaw, theta: &ParamVec, rule: &QuadratureRule, want_hess: bool) -> Moments {
    let (c1, c2) = law.centers().expect("gmm2 law has centers");
    let d = law.d;
    let t1 = theta.rows(0, d).into_owned();
    let t2 = theta.rows(d, d).into_owned();
    // The posterior weights depend on z only through t = <z - c, v>.
    let sep = &t1 - &t2;
    let delta = sep.norm();
    let v = if delta > 0.0 { sep / delta } else { ParamVec::zeros(d) };
    let width = width_for(delta);
    let eye = DMatrix::<f64>::identity(d, d);
    let vvt = &v * v.transpose();
    let mut value = 0.0;
    let mut grad = ParamVec::zeros(2 * d);
    let mut hess = DMatrix::zeros(2 * d, 2 * d);
    for c in [c1, c2] {
        let b1 = c - &t1;
        let b2 = c - &t2;
        let kappa = 0.5 * (b1.norm_squared() - b2.norm_squared());
        let centre = if delta > 0.0 { kappa / delta } else { 0.0 };
        // moments of t against softplus(kappa - delta t), w1, w2 and w1 w2
        let mut soft = 0.0;
        let (mut w1, mut w1t, mut w2, mut w2t) = (0.0, 0.0, 0.0, 0.0);
        let (mut q, mut qt, mut qtt) = (0.0, 0.0, 0.0);
        std_normal_pieces(&[centre], width, rule, |t, w| {
            let x = kappa - delta * t;
            soft += w * softplus(x);
            let p1 = logistic(-x);
            let p2 = logistic(x);
            w1 += w * p1;
            w1t += w * p1 * t;
            w2 += w * p2;
            w2t += w * p2 * t;
            if want_hess {
                let pq = w * p1 * p2;
                q += pq;
                qt += pq * t;
                qtt += pq * t * t;
            }
        });
        let base = 0.5 * d as f64 * LN_2PI + std::f64::consts::LN_2 + 0.5 * (d as f64 + b1.norm_squared());
        value += 0.5 * (base - soft);
        grad.rows_mut(0, d).axpy(-0.5, &(&v * w1t + &b1 * w1), 1.0);
        grad.rows_mut(d, d).axpy(-0.5, &(&v * w2t + &b2 * w2), 1.0);
        if want_hess {
            // E[w1 w2 (g + bi)(g + bj)^T] with g = t v + g_perp
            let cross = |bi: &ParamVec, bj: &ParamVec| {
                &vvt * (qtt - q) + &eye * q + (&v * bj.transpose() + bi * v.transpose()) * qt + bi * bj.transpose() * q
            };
            let h11 = &eye * w1 - cross(&b1, &b1);
            let h22 = &eye * w2 - cross(&b2, &b2);
            let h12 = cross(&b1, &b2);
            let mut view = hess.view_mut((0, 0), (d, d));
            view += h11 * 0.5;
            let mut view = hess.view_mut((d, d), (d, d));
            view += h22 * 0.5;
            let mut view = hess.view_mut((0, d), (d, d));
            view += &h12 * 0.5;
            let mut view = hess.view_mut((d, 0), (d, d));
            view += h12.transpose() * 0.5;
        }
    }
    Moments {
        value,
        grad,
        hess: want_hess.then(|| SymMatrix::symmetrized(hess)),
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
