//! Seeded synthetic data for every experiment protocol.
//!
//! A [`GenConfig`] first resolves the ground truth (theta0 or the two mixture
//! centers) into a [`PopulationLaw`], then draws `n` i.i.d. samples from it.
//! Three independent streams are derived from the seed: one for the ground
//! truth, one for features, one for labels/noise. Samples are drawn in row
//! order, so the first `n` rows of a larger draw equal a draw of size `n`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ParamVec, StreamRng};
use crate::models::{Activation, Dataset, Family};

const STREAM_TRUTH: u64 = 0;
const STREAM_FEATURES: u64 = 1;
const STREAM_RESPONSES: u64 = 2;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Theta0Spec {
    Explicit { values: Vec<f64> },
    /// Uniformly random direction with unit norm.
    RandomUnit,
    /// Random direction scaled to the given norm.
    Norm { norm: f64 },
    /// `s0` nonzero entries of equal magnitude `1/sqrt(s0)` on a random support.
    Sparse { s0: usize },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum NoiseSpec {
    None,
    Gaussian { var: f64 },
    /// `(1 - delta) N(0, 1) + delta N(0, var)`.
    Contaminated { delta: f64, var: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FeatureLaw {
    #[default]
    StandardGaussian,
    /// Row-major `d x d` covariance matrix.
    Covariance { matrix: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenConfig {
    pub family: Family,
    pub n: usize,
    pub d: usize,
    #[serde(default = "default_theta0")]
    pub theta0: Theta0Spec,
    #[serde(default = "default_noise")]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub features: FeatureLaw,
    #[serde(default)]
    pub activation: Activation,
    /// Half the distance between the mixture centers (gmm2 only).
    #[serde(default)]
    pub separation: f64,
    /// Explicit mixture centers, overriding `separation`.
    #[serde(default)]
    pub centers: Option<(Vec<f64>, Vec<f64>)>,
    pub seed: u64,
}

fn default_theta0() -> Theta0Spec {
    Theta0Spec::RandomUnit
}

fn default_noise() -> NoiseSpec {
    NoiseSpec::Gaussian { var: 1.0 }
}

impl GenConfig {
    pub fn new(family: Family, n: usize, d: usize, seed: u64) -> Self {
        GenConfig {
            family,
            n,
            d,
            theta0: Theta0Spec::RandomUnit,
            noise: default_noise(),
            features: FeatureLaw::StandardGaussian,
            activation: Activation::Logistic,
            separation: 0.0,
            centers: None,
            seed,
        }
    }

    pub fn with_theta0(mut self, theta0: Theta0Spec) -> Self {
        self.theta0 = theta0;
        self
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_separation(mut self, separation: f64) -> Self {
        self.separation = separation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        match &self.theta0 {
            Theta0Spec::Explicit { values } if values.len() != self.d => {
                return Err(Error::invalid(format!("theta0 has {} entries, d = {}", values.len(), self.d)));
            }
            Theta0Spec::Sparse { s0 } if *s0 == 0 || *s0 > self.d => {
                return Err(Error::invalid(format!("sparsity {s0} not in 1..={}", self.d)));
            }
            Theta0Spec::Norm { norm } if !(*norm >= 0.0) => {
                return Err(Error::invalid("theta0 norm must be nonnegative"));
            }
            _ => {}
        }
        match self.noise {
            NoiseSpec::Gaussian { var } if !(var >= 0.0) => {
                return Err(Error::invalid("noise variance must be nonnegative"));
            }
            NoiseSpec::Contaminated { delta, var } if !((0.0..=1.0).contains(&delta) && var >= 0.0) => {
                return Err(Error::invalid("contamination needs delta in [0, 1] and var >= 0"));
            }
            _ => {}
        }
        if let FeatureLaw::Covariance { matrix } = &self.features {
            if matrix.len() != self.d * self.d {
                return Err(Error::invalid("covariance must be d x d"));
            }
        }
        if self.family == Family::Gmm2 {
            if let Some((c1, c2)) = &self.centers {
                if c1.len() != self.d || c2.len() != self.d {
                    return Err(Error::invalid("mixture centers must have length d"));
                }
            } else if !(self.separation >= 0.0 && self.separation.is_finite()) {
                return Err(Error::invalid("separation must be nonnegative"));
            }
        }
        Ok(())
    }

    fn resolve_theta0(&self, rng: &mut StreamRng) -> ParamVec {
        let d = self.d;
        match &self.theta0 {
            Theta0Spec::Explicit { values } => ParamVec::from_column_slice(values),
            Theta0Spec::RandomUnit => rng.unit_vec(d),
            Theta0Spec::Norm { norm } => rng.unit_vec(d) * *norm,
            Theta0Spec::Sparse { s0 } => {
                // partial Fisher-Yates for the support
                let mut idx: Vec<usize> = (0..d).collect();
                for k in 0..*s0 {
                    let j = k + rng.below(d - k);
                    idx.swap(k, j);
                }
                let mut v = ParamVec::zeros(d);
                let mag = 1.0 / (*s0 as f64).sqrt();
                for &i in &idx[..*s0] {
                    v[i] = mag;
                }
                v
            }
        }
    }

    /// Ground truth and sampling law implied by this configuration.
    pub fn law(&self) -> Result<PopulationLaw> {
        self.validate()?;
        let mut rng = StreamRng::new(self.seed, STREAM_TRUTH);
        let truth = match self.family {
            Family::Gmm2 => {
                let (c1, c2) = match &self.centers {
                    Some((a, b)) => (ParamVec::from_column_slice(a), ParamVec::from_column_slice(b)),
                    None => {
                        let u = rng.unit_vec(self.d);
                        (&u * self.separation, &u * (-self.separation))
                    }
                };
                Truth::Centers(c1, c2)
            }
            _ => Truth::Theta0(self.resolve_theta0(&mut rng)),
        };
        let chol = match &self.features {
            FeatureLaw::StandardGaussian => None,
            FeatureLaw::Covariance { matrix } => {
                let m = DMatrix::from_row_slice(self.d, self.d, matrix);
                let c = m
                    .cholesky()
                    .ok_or_else(|| Error::invalid("covariance is not positive definite"))?;
                Some(c.l())
            }
        };
        Ok(PopulationLaw {
            family: self.family,
            d: self.d,
            truth,
            noise: self.noise,
            activation: self.activation.clone(),
            chol,
        })
    }
}

#[derive(Debug, Clone)]
pub enum Truth {
    Theta0(ParamVec),
    Centers(ParamVec, ParamVec),
}

/// The distribution samples are drawn from.
#[derive(Debug, Clone)]
pub struct PopulationLaw {
    pub family: Family,
    pub d: usize,
    pub truth: Truth,
    pub noise: NoiseSpec,
    pub activation: Activation,
    /// Lower Cholesky factor of the feature covariance; `None` is identity.
    pub chol: Option<DMatrix<f64>>,
}

impl NoiseSpec {
    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Gaussian { var } => var.sqrt() * rng.normal(),
            NoiseSpec::Contaminated { delta, var } => {
                let outlier = rng.bernoulli(delta);
                let z = rng.normal();
                if outlier {
                    var.sqrt() * z
                } else {
                    z
                }
            }
        }
    }

    /// Mixture of centered Gaussians as `(weight, variance)` pairs.
    pub fn components(&self) -> Vec<(f64, f64)> {
        match *self {
            NoiseSpec::None => vec![(1.0, 0.0)],
            NoiseSpec::Gaussian { var } => vec![(1.0, var)],
            NoiseSpec::Contaminated { delta, var } => vec![(1.0 - delta, 1.0), (delta, var)],
        }
    }

    pub fn variance(&self) -> f64 {
        self.components().iter().map(|(w, v)| w * v).sum()
    }

    pub fn is_symmetric(&self) -> bool {
        true
    }
}

impl PopulationLaw {
    pub fn theta0(&self) -> Option<&ParamVec> {
        match &self.truth {
            Truth::Theta0(t) => Some(t),
            Truth::Centers(..) => None,
        }
    }

    pub fn centers(&self) -> Option<(&ParamVec, &ParamVec)> {
        match &self.truth {
            Truth::Centers(a, b) => Some((a, b)),
            Truth::Theta0(_) => None,
        }
    }

    /// Fills `row` with one feature vector and returns its response
    /// (NaN-free; zero for gmm2).
    pub fn draw(&self, rx: &mut StreamRng, ry: &mut StreamRng, row: &mut [f64]) -> f64 {
        let d = self.d;
        match &self.truth {
            Truth::Centers(c1, c2) => {
                let first = ry.bernoulli(0.5);
                let c = if first { c1 } else { c2 };
                for (j, v) in row.iter_mut().enumerate() {
                    *v = c[j] + rx.normal();
                }
                0.0
            }
            Truth::Theta0(theta0) => {
                match &self.chol {
                    None => row.iter_mut().for_each(|v| *v = rx.normal()),
                    Some(l) => {
                        let g = rx.normal_vec(d, 1.0);
                        let x = l * g;
                        row.copy_from_slice(x.as_slice());
                    }
                }
                let u: f64 = row.iter().zip(theta0.iter()).map(|(a, b)| a * b).sum();
                match self.family {
                    Family::Classification => f64::from(u8::from(ry.bernoulli(self.activation.value(u)))),
                    _ => u + self.noise.sample(ry),
                }
            }
        }
    }

    /// Draws `n` samples with the given seed's feature and response streams.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        let mut rx = StreamRng::new(seed, STREAM_FEATURES);
        let mut ry = StreamRng::new(seed, STREAM_RESPONSES);
        let d = self.d;
        let mut buf = vec![0.0; n * d];
        let mut y = Vec::with_capacity(n);
        for row in buf.chunks_exact_mut(d) {
            y.push(self.draw(&mut rx, &mut ry, row));
        }
        let x = DMatrix::from_row_slice(n, d, &buf);
        let responses = (self.family != Family::Gmm2).then(|| DVector::from_vec(y));
        Dataset::new(self.family, x, responses)
    }
}

fn expect_family(cfg: &GenConfig, family: Family) -> Result<()> {
    if cfg.family != family {
        return Err(Error::invalid(format!(
            "config family {} used with the {} generator",
            cfg.family.name(),
            family.name()
        )));
    }
    Ok(())
}

pub fn gen_classification(cfg: &GenConfig) -> Result<(Dataset, ParamVec)> {
    expect_family(cfg, Family::Classification)?;
    let law = cfg.law()?;
    let data = law.sample(cfg.n, cfg.seed)?;
    Ok((data, law.theta0().expect("linear family").clone()))
}

pub fn gen_regression(cfg: &GenConfig) -> Result<(Dataset, ParamVec)> {
    expect_family(cfg, Family::RobustRegression)?;
    let law = cfg.law()?;
    let data = law.sample(cfg.n, cfg.seed)?;
    Ok((data, law.theta0().expect("linear family").clone()))
}

pub fn gen_gmm2(cfg: &GenConfig) -> Result<(Dataset, (ParamVec, ParamVec))> {
    expect_family(cfg, Family::Gmm2)?;
    let law = cfg.law()?;
    let data = law.sample(cfg.n, cfg.seed)?;
    let (a, b) = law.centers().expect("mixture family");
    Ok((data, (a.clone(), b.clone())))
}

/// Dispatches on the configured family; the ground truth comes back as a
/// flat vector (`theta0`, or both centers concatenated).
pub fn generate(cfg: &GenConfig) -> Result<(Dataset, ParamVec)> {
    match cfg.family {
        Family::Classification => gen_classification(cfg),
        Family::RobustRegression => gen_regression(cfg),
        Family::Gmm2 => {
            let (data, (a, b)) = gen_gmm2(cfg)?;
            Ok((data, crate::models::gmm_join(&a, &b)))
        }
    }
}
