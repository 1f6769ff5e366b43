//! Scalar parameters of the two-sector economy on the circle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The seven primitive parameters. Effective kernel decay rates are derived
/// on demand so they can never disagree with the primitives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Expenditure share of manufactured goods, in (0, 1).
    pub mu: f64,
    /// Elasticity of substitution between manufactured varieties, > 1.
    pub sigma: f64,
    /// Elasticity of substitution between agricultural varieties, > 1.
    pub eta: f64,
    /// Agricultural transport cost rate per unit length, >= 0.
    pub tau_a: f64,
    /// Manufacturing transport cost rate per unit length, >= 0.
    pub tau_m: f64,
    /// Radius of the circle, > 0.
    pub rho: f64,
    /// Migration speed, > 0.
    pub gamma: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            mu: 0.5,
            sigma: 3.0,
            eta: 2.0,
            tau_a: 2.0,
            tau_m: 4.0,
            rho: 1.0,
            gamma: 1.0,
        }
    }
}

impl ModelParams {
    pub fn new(mu: f64, sigma: f64, eta: f64, tau_a: f64, tau_m: f64, rho: f64, gamma: f64) -> Result<Self> {
        let p = Self {
            mu,
            sigma,
            eta,
            tau_a,
            tau_m,
            rho,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        fn finite(name: &'static str, v: f64) -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be finite, got {v}")))
            }
        }
        finite("mu", self.mu)?;
        finite("sigma", self.sigma)?;
        finite("eta", self.eta)?;
        finite("tau_a", self.tau_a)?;
        finite("tau_m", self.tau_m)?;
        finite("rho", self.rho)?;
        finite("gamma", self.gamma)?;
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(Error::invalid("mu", format!("must lie in (0, 1), got {}", self.mu)));
        }
        if self.sigma <= 1.0 {
            return Err(Error::invalid(
                "sigma",
                format!("must satisfy sigma > 1, got {}", self.sigma),
            ));
        }
        if self.eta <= 1.0 {
            return Err(Error::invalid("eta", format!("must satisfy eta > 1, got {}", self.eta)));
        }
        if self.tau_a < 0.0 {
            return Err(Error::invalid("tau_a", format!("must be >= 0, got {}", self.tau_a)));
        }
        if self.tau_m < 0.0 {
            return Err(Error::invalid("tau_m", format!("must be >= 0, got {}", self.tau_m)));
        }
        if self.rho <= 0.0 {
            return Err(Error::invalid("rho", format!("must be > 0, got {}", self.rho)));
        }
        if self.gamma <= 0.0 {
            return Err(Error::invalid("gamma", format!("must be > 0, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Decay rate of the agricultural trade kernel, `tau_a * (eta - 1)`.
    pub fn alpha(&self) -> f64 {
        self.tau_a * (self.eta - 1.0)
    }

    /// Decay rate of the manufacturing trade kernel, `tau_m * (sigma - 1)`.
    pub fn beta(&self) -> f64 {
        self.tau_m * (self.sigma - 1.0)
    }

    /// `(sigma - 1) / sigma > mu`: the uniform state is stable for very high
    /// manufacturing transport costs.
    pub fn no_black_hole(&self) -> bool {
        (self.sigma - 1.0) / self.sigma > self.mu
    }

    pub fn with_tau_m(mut self, tau_m: f64) -> Self {
        self.tau_m = tau_m;
        self
    }

    pub fn with_tau_a(mut self, tau_a: f64) -> Self {
        self.tau_a = tau_a;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    /// Uniform density `1 / (2 pi rho)` of either worker type.
    pub fn uniform_density(&self) -> f64 {
        1.0 / (std::f64::consts::TAU * self.rho)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_rates() {
        let p = ModelParams::default().with_tau_a(2.5).with_tau_m(5.0);
        assert_eq!(p.alpha(), 2.5);
        assert_eq!(p.beta(), 10.0);
        assert!(p.no_black_hole());
    }

    #[test]
    fn rejects_out_of_range() {
        let base = ModelParams::default();
        let bad = [
            ModelParams { mu: 1.0, ..base },
            ModelParams { sigma: 0.5, ..base },
            ModelParams { eta: 1.0, ..base },
            ModelParams { tau_a: -1.0, ..base },
            ModelParams { rho: 0.0, ..base },
            ModelParams {
                gamma: f64::NAN,
                ..base
            },
        ];
        for p in bad {
            assert!(matches!(p.validate(), Err(Error::InvalidParameter { .. })), "{p:?}");
        }
        let err = ModelParams { sigma: 0.5, ..base }.validate().unwrap_err();
        assert!(err.to_string().contains("sigma > 1"));
    }

    #[test]
    fn black_hole_flag() {
        let p = ModelParams {
            mu: 0.8,
            sigma: 3.0,
            ..Default::default()
        };
        assert!(!p.no_black_hole());
    }
}
