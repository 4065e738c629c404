use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// A user-supplied robust loss with odd, twice-differentiable score.
pub trait ScoreFn: Send + Sync {
    fn rho(&self, t: f64) -> f64;
    fn psi(&self, t: f64) -> f64;
    fn psi_prime(&self, t: f64) -> f64;
    fn psi_second(&self, t: f64) -> f64;
    /// Points where the loss switches pieces (used by quadrature oracles).
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

pub const TUKEY_T0: f64 = 4.685;
pub const HUBER_C: f64 = 1.345;

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum RobustLoss {
    /// Bisquare loss scaled to saturate at 1 beyond the cutoff `t0`.
    Tukey { t0: f64 },
    /// Quadratic within `c`, linear outside; curvature at most 1.
    Huber { c: f64 },
    #[serde(skip)]
    Custom(Arc<dyn ScoreFn>),
}

impl Default for RobustLoss {
    fn default() -> Self {
        RobustLoss::Tukey { t0: TUKEY_T0 }
    }
}

impl fmt::Debug for RobustLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RobustLoss::Tukey { t0 } => write!(f, "Tukey(t0={t0})"),
            RobustLoss::Huber { c } => write!(f, "Huber(c={c})"),
            RobustLoss::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl RobustLoss {
    pub fn huber() -> Self {
        RobustLoss::Huber { c: HUBER_C }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RobustLoss::Tukey { .. } => "tukey",
            RobustLoss::Huber { .. } => "huber",
            RobustLoss::Custom(_) => "custom",
        }
    }

    pub fn cutoff(&self) -> Option<f64> {
        match self {
            RobustLoss::Tukey { t0 } => Some(*t0),
            RobustLoss::Huber { c } => Some(*c),
            RobustLoss::Custom(_) => None,
        }
    }

    pub fn rho(&self, t: f64) -> f64 {
        self.eval(t).0
    }

    pub fn psi(&self, t: f64) -> f64 {
        self.eval(t).1
    }

    pub fn psi_prime(&self, t: f64) -> f64 {
        self.eval(t).2
    }

    /// `(rho, psi, psi')` at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        match self {
            RobustLoss::Tukey { t0 } => {
                let u = t / t0;
                if u.abs() >= 1.0 {
                    (1.0, 0.0, 0.0)
                } else {
                    let v = 1.0 - u * u;
                    (
                        1.0 - v * v * v,
                        6.0 * u * v * v / t0,
                        6.0 * v * (1.0 - 5.0 * u * u) / (t0 * t0),
                    )
                }
            }
            RobustLoss::Huber { c } => {
                if t.abs() <= *c {
                    (0.5 * t * t, t, 1.0)
                } else {
                    (c * t.abs() - 0.5 * c * c, c * t.signum(), 0.0)
                }
            }
            RobustLoss::Custom(s) => (s.rho(t), s.psi(t), s.psi_prime(t)),
        }
    }

    pub fn psi_second(&self, t: f64) -> f64 {
        match self {
            RobustLoss::Tukey { t0 } => {
                let u = t / t0;
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    6.0 * (20.0 * u * u * u - 12.0 * u) / (t0 * t0 * t0)
                }
            }
            RobustLoss::Huber { .. } => 0.0,
            RobustLoss::Custom(s) => s.psi_second(t),
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            RobustLoss::Tukey { t0 } => vec![-t0, *t0],
            RobustLoss::Huber { c } => vec![-c, *c],
            RobustLoss::Custom(s) => s.breakpoints(),
        }
    }
}
