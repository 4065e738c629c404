use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

/// A monotone link into [0, 1] with three bounded derivatives.
pub trait ActivationFn: Send + Sync {
    fn value(&self, z: f64) -> f64;
    fn first(&self, z: f64) -> f64;
    fn second(&self, z: f64) -> f64;
    fn third(&self, z: f64) -> f64;
}

#[derive(Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Logistic,
    Probit,
    #[serde(skip)]
    Custom(Arc<dyn ActivationFn>),
}

impl fmt::Debug for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn std_normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Logistic => "logistic",
            Activation::Probit => "probit",
            Activation::Custom(_) => "custom",
        }
    }

    pub fn value(&self, z: f64) -> f64 {
        match self {
            Activation::Logistic => logistic(z),
            Activation::Probit => std_normal_cdf(z),
            Activation::Custom(a) => a.value(z),
        }
    }

    /// Value and first two derivatives in one pass.
    pub fn eval2(&self, z: f64) -> (f64, f64, f64) {
        match self {
            Activation::Logistic => {
                let s = logistic(z);
                let d1 = s * (1.0 - s);
                (s, d1, d1 * (1.0 - 2.0 * s))
            }
            Activation::Probit => {
                let p = std_normal_pdf(z);
                (std_normal_cdf(z), p, -z * p)
            }
            Activation::Custom(a) => (a.value(z), a.first(z), a.second(z)),
        }
    }

    pub fn first(&self, z: f64) -> f64 {
        self.eval2(z).1
    }

    pub fn second(&self, z: f64) -> f64 {
        self.eval2(z).2
    }

    pub fn third(&self, z: f64) -> f64 {
        match self {
            Activation::Logistic => {
                let s = logistic(z);
                s * (1.0 - s) * (1.0 - 6.0 * s + 6.0 * s * s)
            }
            Activation::Probit => (z * z - 1.0) * std_normal_pdf(z),
            Activation::Custom(a) => a.third(z),
        }
    }
}
