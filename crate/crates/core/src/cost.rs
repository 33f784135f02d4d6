//! Effort-cost functions `c(μ)` and their validation.
//!
//! A cost is a bundle of `c`, `c′`, `c″`, `c‴`. Two families are built in:
//! the polynomial family `c_E μ^p` and the price-of-anarchy family `μ^q / q`.
//! Anything else can be plugged in through [`EffortCost`].

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A user-supplied effort cost with derivatives up to third order.
pub trait EffortCost: Send + Sync + fmt::Debug {
    fn value(&self, mu: f64) -> f64;
    fn d1(&self, mu: f64) -> f64;
    fn d2(&self, mu: f64) -> f64;
    fn d3(&self, mu: f64) -> f64;
}

/// Serializable description of a built-in cost family.
///
/// This is the JSON shape of a cost in a config document:
/// `{"family": "polynomial", "c_E": 1, "p": 2}` or `{"family": "poa", "q": 1.5}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum CostSpec {
    Polynomial {
        #[serde(rename = "c_E")]
        c_e: f64,
        p: f64,
    },
    Poa {
        q: f64,
    },
}

/// Effort cost `c(μ)`: increasing, convex, evaluated for `μ ≥ 0`.
#[derive(Clone, Debug)]
pub enum CostFunction {
    /// `c_E μ^p` with `c_E > 0`, `p ≥ 1`.
    Polynomial {
        c_e: f64,
        p: f64,
    },
    /// `μ^q / q` with `q > 1`.
    Poa {
        q: f64,
    },
    Custom(Arc<dyn EffortCost>),
}

impl CostFunction {
    pub fn polynomial(c_e: f64, p: f64) -> Result<Self> {
        if !(c_e > 0.0 && c_e.is_finite()) {
            return Err(invalid(format!("polynomial cost needs c_E > 0, got {c_e}")));
        }
        if !(p >= 1.0 && p.is_finite()) {
            return Err(invalid(format!("polynomial cost needs p >= 1, got {p}")));
        }
        Ok(CostFunction::Polynomial { c_e, p })
    }

    pub fn poa(q: f64) -> Result<Self> {
        if !(q > 1.0 && q.is_finite()) {
            return Err(invalid(format!("poa cost needs q > 1, got {q}")));
        }
        Ok(CostFunction::Poa { q })
    }

    pub fn custom(cost: impl EffortCost + 'static) -> Self {
        CostFunction::Custom(Arc::new(cost))
    }

    pub fn from_spec(spec: CostSpec) -> Result<Self> {
        match spec {
            CostSpec::Polynomial { c_e, p } => Self::polynomial(c_e, p),
            CostSpec::Poa { q } => Self::poa(q),
        }
    }

    /// Parses the CLI mini-grammar `poly:<c_E>:<p>` or `poa:<q>`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| invalid(format!("bad number {s:?} in cost spec {text:?}")))
        };
        match parts.as_slice() {
            ["poly", c_e, p] => Self::polynomial(num(c_e)?, num(p)?),
            ["poa", q] => Self::poa(num(q)?),
            _ => Err(invalid(format!(
                "cost spec {text:?} is not poly:<c_E>:<p> or poa:<q>"
            ))),
        }
    }

    pub fn spec(&self) -> Option<CostSpec> {
        match *self {
            CostFunction::Polynomial { c_e, p } => Some(CostSpec::Polynomial { c_e, p }),
            CostFunction::Poa { q } => Some(CostSpec::Poa { q }),
            CostFunction::Custom(_) => None,
        }
    }

    pub fn value(&self, mu: f64) -> f64 {
        match self {
            CostFunction::Polynomial { c_e, p } => c_e * mu.powf(*p),
            CostFunction::Poa { q } => mu.powf(*q) / q,
            CostFunction::Custom(c) => c.value(mu),
        }
    }

    /// `c′(μ)`
    pub fn d1(&self, mu: f64) -> f64 {
        match self {
            CostFunction::Polynomial { c_e, p } => c_e * p * mu.powf(p - 1.0),
            CostFunction::Poa { q } => mu.powf(q - 1.0),
            CostFunction::Custom(c) => c.d1(mu),
        }
    }

    /// `c″(μ)`
    pub fn d2(&self, mu: f64) -> f64 {
        match self {
            CostFunction::Polynomial { c_e, p } => scaled_power(c_e * p * (p - 1.0), mu, p - 2.0),
            CostFunction::Poa { q } => scaled_power(q - 1.0, mu, q - 2.0),
            CostFunction::Custom(c) => c.d2(mu),
        }
    }

    /// `c‴(μ)`
    pub fn d3(&self, mu: f64) -> f64 {
        match self {
            CostFunction::Polynomial { c_e, p } => scaled_power(c_e * p * (p - 1.0) * (p - 2.0), mu, p - 3.0),
            CostFunction::Poa { q } => scaled_power((q - 1.0) * (q - 2.0), mu, q - 3.0),
            CostFunction::Custom(c) => c.d3(mu),
        }
    }
}

impl fmt::Display for CostFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostFunction::Polynomial { c_e, p } => write!(f, "poly:{c_e}:{p}"),
            CostFunction::Poa { q } => write!(f, "poa:{q}"),
            CostFunction::Custom(c) => write!(f, "custom({c:?})"),
        }
    }
}

// coef * mu^exp, with an exact zero when the coefficient vanishes
// (avoids 0 * inf at mu = 0 for p = 1).
fn scaled_power(coef: f64, mu: f64, exp: f64) -> f64 {
    if coef == 0.0 {
        0.0
    } else {
        coef * mu.powf(exp)
    }
}

/// Outcome of [`validate_cost`].
#[derive(Debug, Clone, Serialize)]
pub struct CostValidation {
    /// Grid points where `c′ ≤ 0`.
    pub monotonicity_violations: Vec<f64>,
    /// Grid points where `c″ < 0`.
    pub convexity_violations: Vec<f64>,
    /// Grid points where `c‴ < 0`.
    pub third_derivative_violations: Vec<f64>,
    /// Max relative mismatch between `c′` and a central difference of `c`.
    pub d1_mismatch: f64,
    /// Same for `c″` against a central difference of `c′`.
    pub d2_mismatch: f64,
    /// Same for `c‴` against a central difference of `c″`.
    pub d3_mismatch: f64,
    pub max_abs_d2: f64,
    pub max_abs_d3: f64,
}

impl CostValidation {
    pub const MISMATCH_TOL: f64 = 1e-5;

    pub fn passed(&self) -> bool {
        self.monotonicity_violations.is_empty()
            && self.convexity_violations.is_empty()
            && self.third_derivative_violations.is_empty()
            && self.d1_mismatch < Self::MISMATCH_TOL
            && self.d2_mismatch < Self::MISMATCH_TOL
            && self.d3_mismatch < Self::MISMATCH_TOL
    }
}

/// Relative error with a small absolute floor so an exact zero compares cleanly.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(1e-12)
}

fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = 1e-5 * x.abs().max(1.0);
    let h = h.min(0.5 * x);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Samples the cost on `grid` and checks monotonicity, convexity, `c‴ ≥ 0`
/// and consistency of each supplied derivative with finite differences.
pub fn validate_cost(cf: &CostFunction, grid: &[f64]) -> Result<CostValidation> {
    if grid.is_empty() {
        return Err(invalid("validation grid is empty"));
    }
    if let Some(bad) = grid.iter().find(|&&m| !(m > 0.0 && m.is_finite())) {
        return Err(invalid(format!("grid rates must be positive, got {bad}")));
    }
    let mut out = CostValidation {
        monotonicity_violations: Vec::new(),
        convexity_violations: Vec::new(),
        third_derivative_violations: Vec::new(),
        d1_mismatch: 0.0,
        d2_mismatch: 0.0,
        d3_mismatch: 0.0,
        max_abs_d2: 0.0,
        max_abs_d3: 0.0,
    };
    for &mu in grid {
        let (d1, d2, d3) = (cf.d1(mu), cf.d2(mu), cf.d3(mu));
        if !(d1 > 0.0) {
            out.monotonicity_violations.push(mu);
        }
        if d2 < 0.0 {
            out.convexity_violations.push(mu);
        }
        if d3 < 0.0 {
            out.third_derivative_violations.push(mu);
        }
        out.max_abs_d2 = out.max_abs_d2.max(d2.abs());
        out.max_abs_d3 = out.max_abs_d3.max(d3.abs());
        out.d1_mismatch = out.d1_mismatch.max(rel_err(d1, central(|x| cf.value(x), mu)));
        out.d2_mismatch = out.d2_mismatch.max(rel_err(d2, central(|x| cf.d1(x), mu)));
        out.d3_mismatch = out.d3_mismatch.max(rel_err(d3, central(|x| cf.d2(x), mu)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{linspace, logspace};

    #[derive(Debug)]
    struct Decreasing;

    impl EffortCost for Decreasing {
        fn value(&self, mu: f64) -> f64 {
            -mu
        }
        fn d1(&self, _: f64) -> f64 {
            -1.0
        }
        fn d2(&self, _: f64) -> f64 {
            0.0
        }
        fn d3(&self, _: f64) -> f64 {
            0.0
        }
    }

    #[test]
    fn quadratic_passes() {
        let cf = CostFunction::polynomial(1.0, 2.0).unwrap();
        let grid = linspace(0.1, 2.0, 20);
        let v = validate_cost(&cf, &grid).unwrap();
        assert!(v.passed(), "{v:?}");
        assert!(v.d1_mismatch < 1e-8);
    }

    #[test]
    fn linear_cost_has_zero_higher_derivatives() {
        let cf = CostFunction::polynomial(1.0, 1.0).unwrap();
        let v = validate_cost(&cf, &logspace(0.01, 10.0, 30)).unwrap();
        assert!(v.passed(), "{v:?}");
        assert_eq!(v.max_abs_d2, 0.0);
        assert_eq!(v.max_abs_d3, 0.0);
        assert_eq!(cf.d2(0.0), 0.0);
    }

    #[test]
    fn negative_derivative_fails_monotonicity() {
        let cf = CostFunction::custom(Decreasing);
        let v = validate_cost(&cf, &[0.5, 1.0]).unwrap();
        assert!(!v.passed());
        assert_eq!(v.monotonicity_violations, vec![0.5, 1.0]);
    }

    #[test]
    fn empty_grid_is_an_error() {
        let cf = CostFunction::polynomial(1.0, 2.0).unwrap();
        assert!(validate_cost(&cf, &[]).is_err());
        assert!(validate_cost(&cf, &[0.0]).is_err());
    }

    #[test]
    fn poa_family_below_two_has_negative_third_derivative() {
        // μ^q/q with 1 < q < 2: c‴ = (q-1)(q-2)μ^(q-3) < 0.
        let cf = CostFunction::poa(1.5).unwrap();
        let v = validate_cost(&cf, &linspace(0.2, 3.0, 10)).unwrap();
        assert_eq!(v.third_derivative_violations.len(), 10);
        assert!(v.d1_mismatch < 1e-6 && v.d2_mismatch < 1e-6 && v.d3_mismatch < 1e-6);
    }

    #[test]
    fn polynomial_reproduces_closed_form() {
        let cf = CostFunction::polynomial(0.5, 3.0).unwrap();
        for mu in [0.05, 0.7, 2.0] {
            assert_eq!(cf.value(mu), 0.5 * mu.powf(3.0));
        }
    }

    #[test]
    fn parse_grammar() {
        let cf = CostFunction::parse("poly:1:2").unwrap();
        assert_eq!(cf.spec(), Some(CostSpec::Polynomial { c_e: 1.0, p: 2.0 }));
        let cf = CostFunction::parse("poa:1.01").unwrap();
        assert_eq!(cf.spec(), Some(CostSpec::Poa { q: 1.01 }));
        assert!(CostFunction::parse("poly:1").is_err());
        assert!(CostFunction::parse("poly:0:2").is_err());
        assert!(CostFunction::parse("exp:1").is_err());
    }

    #[test]
    fn spec_json_shape() {
        let s: CostSpec = serde_json::from_str(r#"{"family":"polynomial","c_E":2,"p":1.5}"#).unwrap();
        assert_eq!(s, CostSpec::Polynomial { c_e: 2.0, p: 1.5 });
        let s: CostSpec = serde_json::from_str(r#"{"family":"poa","q":1.1}"#).unwrap();
        assert_eq!(s, CostSpec::Poa { q: 1.1 });
    }
}
