use std::fmt;
use std::str::FromStr;

use crate::data::CovariateRoles;
use crate::error::{PacsError, Result};

/// Data-generating process family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Separate linear potential outcomes per arm; pooled linear model is
    /// misspecified.
    S1Heterogeneous,
    /// `Y = X'beta + D mu + eps`.
    S2Linear,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::S1Heterogeneous => "s1",
            Scenario::S2Linear => "s2",
        })
    }
}

impl FromStr for Scenario {
    type Err = PacsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s1" | "S1" | "s1_heterogeneous" => Ok(Scenario::S1Heterogeneous),
            "s2" | "S2" | "s2_linear" => Ok(Scenario::S2Linear),
            other => Err(PacsError::Config(format!(
                "unknown scenario `{other}` (expected s1|s2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub scenario: Scenario,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub alpha: Vec<f64>,
    /// S1 treated-arm coefficients.
    pub beta_t: Vec<f64>,
    /// S1 control-arm coefficients.
    pub beta_c: Vec<f64>,
    /// S2 outcome coefficients.
    pub beta: Vec<f64>,
    /// S2 treatment effect.
    pub mu: f64,
    pub roles: CovariateRoles,
    pub seed: u64,
    /// Outcome noise standard deviation; 1 in every preset, 0 for noiseless
    /// debugging.
    pub noise_sd: f64,
}

/// Default master seed for presets and the CLI.
pub const DEFAULT_SEED: u64 = 20_190_601;

pub const WEAK_CONFOUNDING: [f64; 8] = [0.4, 0.4, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
pub const STRONG_CONFOUNDING: [f64; 8] = [1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
pub const LINEAR_BETA: [f64; 4] = [0.6, 0.6, 0.6, 0.6];

/// S1 `(beta_t, beta_c)` leading entries for heterogeneity levels 1..3.
pub const HETEROGENEITY: [([f64; 4], [f64; 4]); 3] = [
    ([0.6, 0.6, 0.8, 0.8], [0.8, 0.8, 0.6, 0.6]),
    ([0.6, 0.6, 1.2, 1.2], [1.2, 1.2, 0.6, 0.6]),
    ([0.6, 0.6, 2.4, 2.4], [2.4, 2.4, 0.6, 0.6]),
];

/// Names of the twelve built-in cells.
pub const PRESET_NAMES: [&str; 12] = [
    "s1-weak-1",
    "s1-weak-2",
    "s1-weak-3",
    "s1-strong-1",
    "s1-strong-2",
    "s1-strong-3",
    "s2-weak-small",
    "s2-weak-many",
    "s2-weak-large",
    "s2-strong-small",
    "s2-strong-many",
    "s2-strong-large",
];

fn padded(lead: &[f64], p: usize) -> Vec<f64> {
    let mut v = vec![0.0; p];
    v[..lead.len()].copy_from_slice(lead);
    v
}

impl ScenarioConfig {
    /// Scenario-1 cell with heterogeneity level 1..=3.
    pub fn s1(strong: bool, level: usize, n: usize, p: usize) -> Result<Self> {
        let (bt, bc) = HETEROGENEITY
            .get(level.wrapping_sub(1))
            .ok_or_else(|| PacsError::Config(format!("heterogeneity level {level} not in 1..3")))?;
        let strength = if strong { "strong" } else { "weak" };
        let cfg = Self {
            name: format!("s1-{strength}-{level}"),
            scenario: Scenario::S1Heterogeneous,
            n,
            p,
            m: 200,
            alpha: padded(if strong { &STRONG_CONFOUNDING } else { &WEAK_CONFOUNDING }, p),
            beta_t: padded(bt, p),
            beta_c: padded(bc, p),
            beta: vec![0.0; p],
            mu: 0.0,
            roles: CovariateRoles::standard_layout(p)?,
            seed: DEFAULT_SEED,
            noise_sd: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Scenario-2 cell.
    pub fn s2(strong: bool, n: usize, p: usize) -> Result<Self> {
        let strength = if strong { "strong" } else { "weak" };
        let size = match (n, p) {
            (500, 20) => "small",
            (500, 100) => "many",
            (1000, 20) => "large",
            _ => "custom",
        };
        let cfg = Self {
            name: format!("s2-{strength}-{size}"),
            scenario: Scenario::S2Linear,
            n,
            p,
            m: 200,
            alpha: padded(if strong { &STRONG_CONFOUNDING } else { &WEAK_CONFOUNDING }, p),
            beta_t: vec![0.0; p],
            beta_c: vec![0.0; p],
            beta: padded(&LINEAR_BETA, p),
            mu: 0.0,
            roles: CovariateRoles::standard_layout(p)?,
            seed: DEFAULT_SEED,
            noise_sd: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// One of [`PRESET_NAMES`].
    pub fn preset(name: &str) -> Result<Self> {
        let parts: Vec<&str> = name.split('-').collect();
        let (scenario, strength, tail) = match parts.as_slice() {
            [a, b, c] => (*a, *b, *c),
            _ => return Err(PacsError::Config(format!("unknown preset `{name}`"))),
        };
        let strong = match strength {
            "weak" => false,
            "strong" => true,
            _ => return Err(PacsError::Config(format!("unknown preset `{name}`"))),
        };
        let cfg = match (scenario, tail) {
            ("s1", "1") => Self::s1(strong, 1, 500, 20),
            ("s1", "2") => Self::s1(strong, 2, 500, 20),
            ("s1", "3") => Self::s1(strong, 3, 500, 20),
            ("s2", "small") => Self::s2(strong, 500, 20),
            ("s2", "many") => Self::s2(strong, 500, 100),
            ("s2", "large") => Self::s2(strong, 1000, 20),
            _ => Err(PacsError::Config(format!("unknown preset `{name}`"))),
        }?;
        Ok(cfg)
    }

    /// True average treatment effect of the DGP.
    pub fn true_ate(&self) -> f64 {
        match self.scenario {
            // E[X] = 0, so E[Y^T - Y^C] = 0.
            Scenario::S1Heterogeneous => 0.0,
            Scenario::S2Linear => self.mu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p;
        if p < 8 {
            return Err(PacsError::Config(format!("p must be at least 8, got {p}")));
        }
        if self.n < 2 {
            return Err(PacsError::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if self.m == 0 {
            return Err(PacsError::Config("m must be positive".into()));
        }
        for (field, v) in [
            ("alpha", &self.alpha),
            ("beta_t", &self.beta_t),
            ("beta_c", &self.beta_c),
            ("beta", &self.beta),
        ] {
            if v.len() != p {
                return Err(PacsError::Config(format!(
                    "{field} has length {}, expected p = {p}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(PacsError::Config(format!("{field} has non-finite entries")));
            }
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(PacsError::Config("noise_sd must be finite and non-negative".into()));
        }
        self.roles.validate(p)?;
        for &j in self.roles.outcome_predictors.iter().chain(&self.roles.spurious) {
            if self.alpha[j] != 0.0 {
                return Err(PacsError::Config(format!(
                    "alpha must vanish on outcome predictors and spurious covariates (x{})",
                    j + 1
                )));
            }
        }
        for &j in self.roles.instruments.iter().chain(&self.roles.spurious) {
            if self.beta_t[j] != 0.0 || self.beta_c[j] != 0.0 || self.beta[j] != 0.0 {
                return Err(PacsError::Config(format!(
                    "outcome coefficients must vanish on instruments and spurious covariates (x{})",
                    j + 1
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_resolve() {
        for name in PRESET_NAMES {
            let cfg = ScenarioConfig::preset(name).unwrap();
            assert_eq!(cfg.name, name);
            assert_eq!(cfg.m, 200);
        }
        let c = ScenarioConfig::preset("s2-strong-large").unwrap();
        assert_eq!((c.n, c.p), (1000, 20));
        assert_eq!(&c.alpha[..8], &STRONG_CONFOUNDING);
        let c = ScenarioConfig::preset("s1-weak-3").unwrap();
        assert_eq!(&c.beta_t[..4], &[0.6, 0.6, 2.4, 2.4]);
        assert_eq!(&c.beta_c[..4], &[2.4, 2.4, 0.6, 0.6]);
        assert!(ScenarioConfig::preset("s3-weak-1").is_err());
        assert!(ScenarioConfig::preset("s1-weak-4").is_err());
    }

    #[test]
    fn role_restrictions_are_enforced() {
        let mut c = ScenarioConfig::preset("s2-weak-small").unwrap();
        c.alpha[2] = 0.5;
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::preset("s2-weak-small").unwrap();
        c.beta[5] = 0.5;
        assert!(c.validate().is_err());
    }
}
