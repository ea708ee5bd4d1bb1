use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability clipping bound shared by fitting and metrics.
pub const PROB_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    BernoulliLogit,
    GammaLog,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::BernoulliLogit => "bernoulli_logit",
            Family::GammaLog => "gamma_log",
        }
    }

    #[inline]
    pub fn link(self, mu: f64) -> f64 {
        match self {
            Family::BernoulliLogit => (mu / (1.0 - mu)).ln(),
            Family::GammaLog => mu.ln(),
        }
    }

    #[inline]
    pub fn linkinv(self, eta: f64) -> f64 {
        match self {
            Family::BernoulliLogit => (1.0 / (1.0 + (-eta).exp())).clamp(PROB_CLIP, 1.0 - PROB_CLIP),
            Family::GammaLog => eta.exp(),
        }
    }

    /// `d mu / d eta` at the (clipped) mean.
    #[inline]
    pub fn mu_eta(self, mu: f64) -> f64 {
        match self {
            Family::BernoulliLogit => mu * (1.0 - mu),
            Family::GammaLog => mu,
        }
    }

    #[inline]
    pub fn variance(self, mu: f64) -> f64 {
        match self {
            Family::BernoulliLogit => mu * (1.0 - mu),
            Family::GammaLog => mu * mu,
        }
    }

    /// Unit deviance `d(y, mu)`; the deviance is its weighted sum.
    #[inline]
    pub fn unit_deviance(self, y: f64, mu: f64) -> f64 {
        match self {
            Family::BernoulliLogit => {
                let mu = mu.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
                -2.0 * (y * mu.ln() + (1.0 - y) * (1.0 - mu).ln())
            }
            Family::GammaLog => 2.0 * ((y - mu) / mu - (y / mu).ln()),
        }
    }

    pub fn validate_targets(self, y: &[f64]) -> Result<()> {
        let bad = match self {
            Family::BernoulliLogit => y.iter().position(|&v| v != 0.0 && v != 1.0),
            Family::GammaLog => y.iter().position(|&v| !(v > 0.0) || !v.is_finite()),
        };
        match bad {
            Some(i) => Err(Error::invalid(format!(
                "{} target at row {i} is {} (expected {})",
                self.as_str(),
                y[i],
                if self == Family::BernoulliLogit { "0 or 1" } else { "> 0" }
            ))),
            None => Ok(()),
        }
    }
}

/// Weighted deviance `sum w_i d(y_i, mu_i)`; `weights = None` means unit weights.
pub fn deviance(family: Family, y: &[f64], mu: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    if y.len() != mu.len() || weights.is_some_and(|w| w.len() != y.len()) {
        return Err(Error::invalid("deviance: length mismatch"));
    }
    if family == Family::GammaLog {
        if let Some(i) = mu.iter().position(|m| !(*m > 0.0)) {
            return Err(Error::invalid(format!("gamma deviance: fitted mean {} <= 0 at row {i}", mu[i])));
        }
    }
    let mut total = 0.0;
    for i in 0..y.len() {
        let w = weights.map_or(1.0, |w| w[i]);
        if w != 0.0 {
            total += w * family.unit_deviance(y[i], mu[i]);
        }
    }
    Ok(total.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_deviance_examples() {
        assert_eq!(deviance(Family::GammaLog, &[3.0, 4.0], &[3.0, 4.0], None).unwrap(), 0.0);
        let d = deviance(Family::GammaLog, &[2.0], &[1.0], None).unwrap();
        assert!((d - 2.0 * (1.0 - 2f64.ln())).abs() < 1e-15);
        assert!((d - 0.6137).abs() < 1e-4);
        assert!(deviance(Family::GammaLog, &[2.0], &[0.0], None).is_err());
    }

    #[test]
    fn links_invert() {
        for f in [Family::BernoulliLogit, Family::GammaLog] {
            for eta in [-3.0, -0.2, 0.0, 1.5] {
                assert!((f.link(f.linkinv(eta)) - eta).abs() < 1e-12);
            }
        }
    }
}
