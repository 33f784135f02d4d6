//! System, economic and tagged-server parameters, plus the JSON config document.

use serde::{Deserialize, Serialize};

use crate::cost::{CostFunction, CostSpec};
use crate::error::{domain, invalid, Result};
use crate::numeric::logspace;

/// Arrival rate and staffing level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub lambda: f64,
    pub n: usize,
}

impl SystemConfig {
    pub fn new(lambda: f64, n: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("arrival rate must be positive, got {lambda}")));
        }
        if n == 0 {
            return Err(invalid("staffing level must be at least 1"));
        }
        Ok(SystemConfig { lambda, n })
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    /// `λ/N`, the lower edge of the symmetric strategy space.
    pub fn min_rate(&self) -> f64 {
        self.lambda / self.nf()
    }

    /// Offered load `λ/μ` at common rate `mu`.
    pub fn load(&self, mu: f64) -> f64 {
        self.lambda / mu
    }
}

/// Staffing cost per server and waiting cost per customer, both per unit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconomicParams {
    pub c_s: f64,
    pub w: f64,
}

impl Default for EconomicParams {
    fn default() -> Self {
        EconomicParams { c_s: 1.0, w: 1.0 }
    }
}

impl EconomicParams {
    pub fn new(c_s: f64, w: f64) -> Result<Self> {
        if !(c_s > 0.0 && c_s.is_finite()) {
            return Err(invalid(format!("staffing cost must be positive, got {c_s}")));
        }
        if !(w > 0.0 && w.is_finite()) {
            return Err(invalid(format!("waiting cost must be positive, got {w}")));
        }
        Ok(EconomicParams { c_s, w })
    }
}

/// One tagged server at `mu1` against `N − 1` servers at a common `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggedProfile {
    pub mu1: f64,
    pub mu: f64,
}

impl TaggedProfile {
    pub fn new(mu1: f64, mu: f64) -> Self {
        TaggedProfile { mu1, mu }
    }

    pub fn symmetric(mu: f64) -> Self {
        TaggedProfile { mu1: mu, mu }
    }

    /// Checks the profile against `cfg`: background stable and tagged rate above its floor.
    pub fn check(&self, cfg: &SystemConfig) -> Result<()> {
        if !(self.mu > 0.0 && self.mu1 > 0.0) {
            return Err(domain(format!(
                "service rates must be positive (mu1 = {}, mu = {})",
                self.mu1, self.mu
            )));
        }
        if self.mu <= cfg.min_rate() {
            return Err(domain(format!(
                "common rate {} must exceed lambda/N = {}",
                self.mu,
                cfg.min_rate()
            )));
        }
        let floor = tagged_floor(cfg, self.mu);
        if self.mu1 <= floor {
            return Err(domain(format!(
                "tagged rate {} is at or below the stability floor {floor}",
                self.mu1
            )));
        }
        Ok(())
    }
}

/// Stability floor `(λ − (N−1)μ)⁺` for the tagged rate.
pub fn tagged_floor(cfg: &SystemConfig, mu: f64) -> f64 {
    (cfg.lambda - (cfg.nf() - 1.0) * mu).max(0.0)
}

/// Default validation grid: 64 log-spaced points on `[λ/(2N), 4]`.
pub fn default_grid(cfg: &SystemConfig) -> Vec<f64> {
    let lo = cfg.min_rate() / 2.0;
    let hi = 4.0_f64.max(2.0 * lo);
    logspace(lo, hi, 64)
}

/// Cost and economics as read from a JSON document, e.g.
/// `{"family": "polynomial", "c_E": 1, "p": 2, "c_S": 1, "w": 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(flatten)]
    pub cost: CostSpec,
    #[serde(rename = "c_S", default = "one")]
    pub c_s: f64,
    #[serde(default = "one")]
    pub w: f64,
}

fn one() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn cost(&self) -> Result<CostFunction> {
        CostFunction::from_spec(self.cost)
    }

    pub fn econ(&self) -> Result<EconomicParams> {
        EconomicParams::new(self.c_s, self.w)
    }
}
