//! Erlang C, the standard normal, the safety-staffing constant `y*` and the
//! M/M/N mean wait.

use libm::erfc;
use serde::Serialize;

use crate::error::{domain, Result};
use crate::numeric::{bisect, golden_min};
use crate::params::{EconomicParams, SystemConfig};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Erlang B blocking probability `B(N, ρ)` by the forward recurrence.
pub fn erlang_b(n: usize, rho: f64) -> f64 {
    let mut b = 1.0;
    for k in 1..=n {
        let rb = rho * b;
        b = rb / (k as f64 + rb);
    }
    b
}

/// Erlang C: probability that an arrival to an M/M/N queue with offered
/// load `rho` has to wait.
pub fn erlang_c(n: usize, rho: f64) -> Result<f64> {
    if n == 0 {
        return Err(domain("Erlang C needs at least one server"));
    }
    if !(rho >= 0.0) || rho >= n as f64 {
        return Err(domain(format!(
            "offered load {rho} is not in [0, {n}); the system is unstable"
        )));
    }
    Ok(erlang_c_unchecked(n, rho))
}

pub(crate) fn erlang_c_unchecked(n: usize, rho: f64) -> f64 {
    let b = erlang_b(n, rho);
    let nf = n as f64;
    nf * b / (nf - rho * (1.0 - b))
}

/// `(φ(x), Φ(x))` for the standard normal.
pub fn normal_pdf_cdf(x: f64) -> (f64, f64) {
    (normal_pdf(x), normal_cdf(x))
}

pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Hazard rate `φ(x) / (1 − Φ(x))` of the standard normal.
pub fn normal_hazard(x: f64) -> f64 {
    normal_pdf(x) / (0.5 * erfc(x / std::f64::consts::SQRT_2))
}

/// `α(y) = (1 + yΦ(y)/φ(y))⁻¹`, written as `φ / (φ + yΦ)` so large `y` does
/// not overflow.
pub fn alpha(y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(domain(format!("alpha needs y > 0, got {y}")));
    }
    Ok(alpha_unchecked(y))
}

pub(crate) fn alpha_unchecked(y: f64) -> f64 {
    let (pdf, cdf) = normal_pdf_cdf(y);
    pdf / (pdf + y * cdf)
}

/// `α(y)` through the hazard rate, `(1 + y / h(−y))⁻¹`.
pub fn alpha_via_hazard(y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(domain(format!("alpha needs y > 0, got {y}")));
    }
    Ok(1.0 / (1.0 + y / normal_hazard(-y)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BmrConstants {
    pub y_star: f64,
    pub alpha_y_star: f64,
    /// `c_S y* + w α(y*)/y*`
    pub objective: f64,
    /// The objective slope is negative at the left end of the search bracket
    /// and positive at the right end.
    pub interior: bool,
}

pub(crate) const Y_LO: f64 = 1e-6;
pub(crate) const Y_HI: f64 = 10.0;

/// `c_S y + w α(y)/y`.
pub fn safety_objective(y: f64, econ: &EconomicParams) -> f64 {
    econ.c_s * y + econ.w * alpha_unchecked(y) / y
}

/// Derivative of [`safety_objective`]: `c_S − w (α/y)((2 + y² − α)/y)`.
pub fn safety_objective_slope(y: f64, econ: &EconomicParams) -> f64 {
    let a = alpha_unchecked(y);
    econ.c_s - econ.w * (a / y) * ((2.0 + y * y - a) / y)
}

/// Minimizes `c_S y + w α(y)/y` over `(0, 10]`.
///
/// Golden section locates the basin; the stationary point is then polished by
/// bisection on the analytic slope, since the objective itself is too flat
/// near the minimum to resolve `y` below `1e-8`.
pub fn y_star(econ: &EconomicParams) -> BmrConstants {
    let g = |y: f64| safety_objective(y, econ);
    let slope = |y: f64| safety_objective_slope(y, econ);
    let interior = slope(Y_LO) < 0.0 && slope(Y_HI) > 0.0;
    let (mut y, _) = golden_min(g, Y_LO, Y_HI, 1e-9);
    if interior {
        let lo = (y - 1e-6).max(Y_LO);
        let hi = (y + 1e-6).min(Y_HI);
        if let Ok(root) = bisect(slope, lo, hi, 1e-15) {
            y = root;
        }
    }
    BmrConstants {
        y_star: y,
        alpha_y_star: alpha_unchecked(y),
        objective: g(y),
        interior,
    }
}

/// Steady-state mean wait in queue for M/M/N at common rate `mu`.
pub fn mean_wait(cfg: &SystemConfig, mu: f64) -> Result<f64> {
    let capacity = cfg.nf() * mu;
    if !(capacity > cfg.lambda) {
        return Err(domain(format!(
            "N mu = {capacity} must exceed lambda = {}",
            cfg.lambda
        )));
    }
    let c = erlang_c(cfg.n, cfg.lambda / mu)?;
    Ok(c / (capacity - cfg.lambda))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    // Direct Erlang C summation, only usable for small N.
    fn erlang_c_sum(n: usize, rho: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..n {
            term *= rho / k as f64;
            sum += term;
        }
        let last = term * rho / n as f64 * n as f64 / (n as f64 - rho);
        last / (sum + last)
    }

    #[test]
    fn erlang_c_small_cases() {
        assert!(close(erlang_c(1, 0.5).unwrap(), 0.5, 1e-15));
        assert!(close(erlang_c(2, 1.0).unwrap(), 1.0 / 3.0, 1e-15));
        assert_eq!(erlang_c(7, 0.0).unwrap(), 0.0);
        for (n, rho) in [(3, 2.2), (5, 0.7), (10, 9.5), (12, 3.3)] {
            let a = erlang_c(n, rho).unwrap();
            let b = erlang_c_sum(n, rho);
            assert!((a - b).abs() < 1e-13 * b.max(1e-300), "{n} {rho}: {a} vs {b}");
        }
    }

    #[test]
    fn erlang_c_unstable() {
        assert!(erlang_c(2, 2.0).is_err());
        assert!(erlang_c(2, -0.1).is_err());
        assert!(erlang_c(0, 0.1).is_err());
    }

    #[test]
    fn erlang_c_large_n_finite() {
        let c = erlang_c(10_000, 9_900.0).unwrap();
        assert!(c > 0.0 && c < 1.0);
    }

    #[test]
    fn normal_values() {
        let (pdf, cdf) = normal_pdf_cdf(0.0);
        assert!(close(pdf, 0.398_942_280_401_432_7, 1e-16));
        assert_eq!(cdf, 0.5);
        assert!(close(normal_cdf(1.0), 0.841_344_746_068_542_9, 1e-15));
        for x in [-3.0, -0.4, 0.8, 2.5] {
            assert!(close(normal_cdf(x) + normal_cdf(-x), 1.0, 1e-15));
        }
    }

    #[test]
    fn alpha_values() {
        assert!(close(alpha(1.0).unwrap(), 0.223_361_274_798_260_76, 1e-14));
        assert!(alpha(1e-9).unwrap() > 1.0 - 1e-8);
        assert!(alpha(8.0).unwrap() < 1e-6);
        assert!(alpha(8.5).unwrap() < alpha(8.0).unwrap());
        assert!(alpha(0.0).is_err());
    }

    #[test]
    fn y_star_unit_costs() {
        let b = y_star(&EconomicParams::default());
        assert!(close(b.y_star, 0.841_990_909_497_448_4, 1e-12));
        assert!(close(b.alpha_y_star, 0.293_506_833_678_915_3, 1e-12));
        assert!(close(b.objective, 1.190_577_610_812_428_4, 1e-12));
        assert!(b.interior);
        assert!(safety_objective_slope(b.y_star, &EconomicParams::default()).abs() < 1e-12);
    }

    #[test]
    fn slope_matches_finite_difference() {
        let e = EconomicParams::new(0.7, 2.0).unwrap();
        for y in [0.2, 0.9, 3.0] {
            let h = 1e-6;
            let fd = (safety_objective(y + h, &e) - safety_objective(y - h, &e)) / (2.0 * h);
            assert!((fd - safety_objective_slope(y, &e)).abs() < 1e-7);
        }
    }

    #[test]
    fn mean_wait_values() {
        let cfg = SystemConfig::new(1.0, 2).unwrap();
        assert!(close(mean_wait(&cfg, 1.0).unwrap(), 1.0 / 3.0, 1e-15));
        assert!(mean_wait(&cfg, 0.5).is_err());
        let tiny = SystemConfig::new(1e-9, 3).unwrap();
        assert!(mean_wait(&tiny, 1.0).unwrap() < 1e-20);
    }
}
