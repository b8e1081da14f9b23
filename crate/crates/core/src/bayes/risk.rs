//! Dwell-time laws and the risk functionals evaluated on them.

use serde::{Deserialize, Serialize};

use super::BayesError;
use crate::smdp::DwellDistribution;

/// Posterior predictive of an exponential dwell time under a
/// `Gamma(shape, rate)` prior on its rate: a Lomax law with survival
/// `(1 + t/scale)^-shape`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lomax {
    pub shape: f64,
    pub scale: f64,
}

/// What a risk functional needs from a dwell-time law.
pub trait DwellLaw {
    fn mean(&self) -> Result<f64, BayesError>;
    fn variance(&self) -> Result<f64, BayesError>;
    /// `P(τ > t)`.
    fn survival(&self, t: f64) -> f64;
    /// `inf { t | P(τ > t) < alpha }`.
    fn survival_quantile(&self, alpha: f64) -> f64;
}

impl DwellLaw for Lomax {
    fn mean(&self) -> Result<f64, BayesError> {
        if self.shape > 1.0 {
            Ok(self.scale / (self.shape - 1.0))
        } else {
            Err(BayesError::MomentUndefined { moment: "mean", shape: self.shape })
        }
    }

    fn variance(&self) -> Result<f64, BayesError> {
        if self.shape > 2.0 {
            let a = self.shape;
            Ok(self.scale * self.scale * a / ((a - 1.0) * (a - 1.0) * (a - 2.0)))
        } else {
            Err(BayesError::MomentUndefined { moment: "variance", shape: self.shape })
        }
    }

    fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            1.0
        } else {
            (1.0 + t / self.scale).powf(-self.shape)
        }
    }

    fn survival_quantile(&self, alpha: f64) -> f64 {
        self.scale * (alpha.powf(-1.0 / self.shape) - 1.0)
    }
}

impl DwellLaw for DwellDistribution {
    fn mean(&self) -> Result<f64, BayesError> {
        Ok(match self {
            DwellDistribution::Exponential { rate } => 1.0 / rate,
            DwellDistribution::Empirical { samples } => samples.iter().sum::<f64>() / samples.len() as f64,
        })
    }

    fn variance(&self) -> Result<f64, BayesError> {
        Ok(match self {
            DwellDistribution::Exponential { rate } => 1.0 / (rate * rate),
            DwellDistribution::Empirical { samples } => {
                let m = self.mean()?;
                samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / samples.len() as f64
            }
        })
    }

    fn survival(&self, t: f64) -> f64 {
        match self {
            DwellDistribution::Exponential { rate } => {
                if t <= 0.0 {
                    1.0
                } else {
                    (-rate * t).exp()
                }
            }
            DwellDistribution::Empirical { samples } => {
                samples.iter().filter(|&&x| x > t).count() as f64 / samples.len() as f64
            }
        }
    }

    fn survival_quantile(&self, alpha: f64) -> f64 {
        match self {
            DwellDistribution::Exponential { rate } => -alpha.ln() / rate,
            DwellDistribution::Empirical { samples } => {
                let mut xs = samples.clone();
                xs.sort_by(f64::total_cmp);
                let n = xs.len();
                // S(t) = (n - i)/n on [x_(i), x_(i+1)); the first i with (n - i)/n < alpha
                let i = ((n as f64 * (1.0 - alpha)).floor() as usize + 1).min(n);
                xs[i - 1]
            }
        }
    }
}

/// `f` in `Risk(s,a,s') = f(D(s,a,s'))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskFunctional {
    /// `inf { t | d(τ > t) < alpha }`, `alpha ∈ (0, 1]`.
    Quantile(f64),
    /// `μ + λσ`, `λ ∈ [0, 1]`.
    MeanPlusSigma(f64),
}

impl RiskFunctional {
    pub fn validate(&self) -> Result<(), BayesError> {
        match *self {
            RiskFunctional::Quantile(a) if !(a > 0.0 && a <= 1.0) => {
                Err(BayesError::InvalidFunctional(format!("quantile level {a} outside (0, 1]")))
            }
            RiskFunctional::MeanPlusSigma(l) if !(0.0..=1.0).contains(&l) => {
                Err(BayesError::InvalidFunctional(format!("sigma weight {l} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

pub fn risk_of(dist: &impl DwellLaw, f: RiskFunctional) -> Result<f64, BayesError> {
    f.validate()?;
    match f {
        RiskFunctional::Quantile(alpha) => Ok(dist.survival_quantile(alpha)),
        RiskFunctional::MeanPlusSigma(lambda) => {
            let mu = dist.mean()?;
            if lambda == 0.0 {
                return Ok(mu);
            }
            Ok(mu + lambda * dist.variance()?.sqrt())
        }
    }
}
