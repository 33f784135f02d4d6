//! Limiting price of anarchy.
//!
//! With `β = √μ c′(μ)` the strategic servers' safety coefficient, the limiting
//! normalised cost of the strategic system is `C₂(μ) = γ(β)/√μ`, where
//! `γ(β) = c_S β + w α(β)/β`. The conventional optimum uses `y*` in place of
//! `β`, so `f_PoA(β) = γ(β)/γ(y*)`. The minimum price of anarchy for a cost
//! family is `f_PoA` at the rate that minimises `C₂`.

use serde::Serialize;

use crate::cost::CostFunction;
use crate::error::{domain, invalid, Result};
use crate::numeric::{bisect, golden_min};
use crate::params::EconomicParams;
use crate::special::{safety_objective, safety_objective_slope, y_star};

/// Search bracket for the minimising rate.
pub const MU_LO: f64 = 1e-6;
pub const MU_HI: f64 = 50.0;
/// Exponents of the `μ^q/q` table.
pub const TABLE_Q: [f64; 3] = [1.001, 1.01, 1.1];

/// `γ(β) = c_S β + w α(β)/β`.
pub fn gamma(beta: f64, econ: &EconomicParams) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(domain(format!("gamma needs beta > 0, got {beta}")));
    }
    Ok(safety_objective(beta, econ))
}

/// `γ′(β) = c_S − w (α/β)((2 + β²)/β − α/β)`.
pub fn gamma_prime(beta: f64, econ: &EconomicParams) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(domain(format!("gamma needs beta > 0, got {beta}")));
    }
    Ok(safety_objective_slope(beta, econ))
}

/// `β = √μ c′(μ)`.
pub fn beta_of_mu(mu: f64, cf: &CostFunction) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(domain(format!("rate must be positive, got {mu}")));
    }
    Ok(mu.sqrt() * cf.d1(mu))
}

/// Inverts [`beta_of_mu`], which is increasing for convex costs.
pub fn mu_of_beta(beta: f64, cf: &CostFunction) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(domain(format!("beta must be positive, got {beta}")));
    }
    if let CostFunction::Poa { q } = *cf {
        return Ok(beta.powf(1.0 / (q - 0.5)));
    }
    let f = |mu: f64| mu.sqrt() * cf.d1(mu) - beta;
    let mut lo = 1e-12;
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(domain(format!("no rate reaches beta = {beta}")));
        }
    }
    while f(lo) > 0.0 {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(domain(format!("no rate reaches beta = {beta}")));
        }
    }
    bisect(f, lo, hi, 1e-15 * hi)
}

/// `γ(β)/γ(y*)`.
pub fn f_poa(beta: f64, econ: &EconomicParams) -> Result<f64> {
    Ok(gamma(beta, econ)? / y_star(econ).objective)
}

/// `C₂(μ) = γ(√μ c′(μ))/√μ`.
pub fn strategic_cost(mu: f64, cf: &CostFunction, econ: &EconomicParams) -> Result<f64> {
    Ok(gamma(beta_of_mu(mu, cf)?, econ)? / mu.sqrt())
}

/// `C₁(μ) = γ(y*)/√μ`.
pub fn conventional_cost(mu: f64, econ: &EconomicParams) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(domain(format!("rate must be positive, got {mu}")));
    }
    Ok(y_star(econ).objective / mu.sqrt())
}

// γ′(β) − γ(β)/(β(1 + 2μc″/c′)); zero at the minimiser of C₂.
fn foc_gap(mu: f64, cf: &CostFunction, econ: &EconomicParams) -> f64 {
    let beta = mu.sqrt() * cf.d1(mu);
    let elasticity = mu * cf.d2(mu) / cf.d1(mu);
    safety_objective_slope(beta, econ) - safety_objective(beta, econ) / (beta * (1.0 + 2.0 * elasticity))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoaMinimum {
    pub mu: f64,
    pub beta: f64,
    pub f_poa: f64,
    pub strategic_cost: f64,
    /// `|γ′(β) − γ(β)/(β(1 + 2μc″/c′))|` at the minimiser.
    pub foc_residual: f64,
    /// The minimiser lies strictly inside the search bracket.
    pub interior: bool,
}

/// Minimises `C₂` over `μ ∈ (1e-6, 50]` and reports `f_PoA` there.
pub fn min_poa(cf: &CostFunction, econ: &EconomicParams) -> Result<PoaMinimum> {
    let c2 = |log_mu: f64| {
        let mu = log_mu.exp();
        safety_objective(mu.sqrt() * cf.d1(mu), econ) / mu.sqrt()
    };
    let (lo, hi) = (MU_LO.ln(), MU_HI.ln());
    let (mut log_mu, _) = golden_min(c2, lo, hi, 1e-10);
    let gap = |l: f64| foc_gap(l.exp(), cf, econ);
    let (a, b) = ((log_mu - 1e-4).max(lo), (log_mu + 1e-4).min(hi));
    if gap(a) < 0.0 && gap(b) > 0.0 {
        log_mu = bisect(gap, a, b, 1e-15)?;
    }
    let mu = log_mu.exp();
    let beta = beta_of_mu(mu, cf)?;
    Ok(PoaMinimum {
        mu,
        beta,
        f_poa: f_poa(beta, econ)?,
        strategic_cost: strategic_cost(mu, cf, econ)?,
        foc_residual: foc_gap(mu, cf, econ).abs(),
        interior: log_mu - lo > 1e-6 && hi - log_mu > 1e-6,
    })
}

/// [`min_poa`] for `c(μ) = μ^q/q`.
pub fn min_poa_for_q(q: f64, econ: &EconomicParams) -> Result<PoaMinimum> {
    if !(q > 1.0) {
        return Err(domain(format!("q must exceed 1, got {q}")));
    }
    min_poa(&CostFunction::poa(q)?, econ)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TableRow {
    pub q: f64,
    #[serde(flatten)]
    pub minimum: PoaMinimum,
}

pub fn q_table(qs: &[f64], econ: &EconomicParams) -> Result<Vec<TableRow>> {
    qs.iter()
        .map(|&q| min_poa_for_q(q, econ).map(|minimum| TableRow { q, minimum }))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PoaCurve {
    pub mu: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub f_poa: Vec<f64>,
    pub strategic_cost: Vec<f64>,
    pub conventional_cost: Vec<f64>,
    pub y_star: f64,
    pub minimum: PoaMinimum,
}

/// The price of anarchy and both limiting costs along a grid of rates.
pub fn poa_curve(mu_grid: &[f64], cf: &CostFunction, econ: &EconomicParams) -> Result<PoaCurve> {
    if mu_grid.is_empty() {
        return Err(invalid("rate grid is empty"));
    }
    let reference = y_star(econ);
    let beta = mu_grid
        .iter()
        .map(|&m| beta_of_mu(m, cf))
        .collect::<Result<Vec<_>>>()?;
    let gamma = beta.iter().map(|&b| gamma(b, econ)).collect::<Result<Vec<_>>>()?;
    let f_poa = gamma.iter().map(|g| g / reference.objective).collect();
    let strategic_cost = gamma.iter().zip(mu_grid).map(|(g, m)| g / m.sqrt()).collect();
    let conventional_cost = mu_grid.iter().map(|m| reference.objective / m.sqrt()).collect();
    Ok(PoaCurve {
        mu: mu_grid.to_vec(),
        beta,
        gamma,
        f_poa,
        strategic_cost,
        conventional_cost,
        y_star: reference.y_star,
        minimum: min_poa(cf, econ)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::logspace;

    fn econ() -> EconomicParams {
        EconomicParams::default()
    }

    #[test]
    fn gamma_at_one() {
        let a = crate::special::alpha(1.0).unwrap();
        assert!((gamma(1.0, &econ()).unwrap() - (1.0 + a)).abs() < 1e-15);
        assert!((gamma(1.0, &econ()).unwrap() - 1.22335).abs() < 5e-5);
        assert!(gamma(0.0, &econ()).is_err());
    }

    #[test]
    fn gamma_prime_matches_finite_difference() {
        for beta in [0.2, 0.5, 1.0, 2.5, 6.0] {
            let h = 1e-6 * beta;
            let fd = (gamma(beta + h, &econ()).unwrap() - gamma(beta - h, &econ()).unwrap()) / (2.0 * h);
            let an = gamma_prime(beta, &econ()).unwrap();
            assert!(((fd - an) / an).abs() < 1e-6, "{beta}: {fd} vs {an}");
        }
    }

    #[test]
    fn beta_examples() {
        let sq = CostFunction::polynomial(1.0, 2.0).unwrap();
        assert_eq!(beta_of_mu(1.0, &sq).unwrap(), 2.0);
        let lin = CostFunction::polynomial(1.0, 1.0).unwrap();
        assert_eq!(beta_of_mu(4.0, &lin).unwrap(), 2.0);
        assert!(beta_of_mu(0.0, &lin).is_err());
        for q in [1.001, 1.5, 3.0] {
            let cf = CostFunction::poa(q).unwrap();
            for beta in [0.1, 0.9, 4.0] {
                let mu = mu_of_beta(beta, &cf).unwrap();
                assert!((beta_of_mu(mu, &cf).unwrap() - beta).abs() < 1e-10);
            }
        }
        let mu = mu_of_beta(2.0, &sq).unwrap();
        assert!((mu - 1.0).abs() < 1e-12);
    }

    #[test]
    fn f_poa_at_least_one() {
        let y = y_star(&econ()).y_star;
        assert!((f_poa(y, &econ()).unwrap() - 1.0).abs() < 1e-15);
        for b in logspace(1e-3, 1e3, 200) {
            assert!(f_poa(b, &econ()).unwrap() >= 1.0);
        }
        assert!(f_poa(1e-6, &econ()).unwrap() > 1e3);
        assert!(f_poa(1e6, &econ()).unwrap() > 1e3);
    }

    #[test]
    fn gamma_convex_on_grid() {
        let g: Vec<f64> = logspace(0.05, 6.0, 400)
            .into_iter()
            .map(|b| gamma(b, &econ()).unwrap())
            .collect();
        let grid = logspace(0.05, 6.0, 400);
        for i in 1..grid.len() - 1 {
            let (h0, h1) = (grid[i] - grid[i - 1], grid[i + 1] - grid[i]);
            let second = (g[i + 1] - g[i]) / h1 - (g[i] - g[i - 1]) / h0;
            assert!(second > 0.0, "at {}", grid[i]);
        }
    }

    #[test]
    fn near_linear_table_entries() {
        let a = min_poa_for_q(1.001, &econ()).unwrap();
        assert!((a.f_poa - 2.517).abs() < 0.01, "{}", a.f_poa);
        let b = min_poa_for_q(1.01, &econ()).unwrap();
        assert!((b.f_poa - 1.931).abs() < 0.01, "{}", b.f_poa);
        assert!(min_poa_for_q(1.0, &econ()).is_err());
    }

    #[test]
    fn minimiser_structure() {
        let y = y_star(&econ()).y_star;
        let mut last = f64::INFINITY;
        let mut last_beta = f64::INFINITY;
        for q in [1.001, 1.01, 1.1, 2.0, 5.0] {
            let m = min_poa_for_q(q, &econ()).unwrap();
            assert!(m.interior);
            assert!(m.beta > y);
            assert!(m.f_poa < last && m.beta < last_beta);
            assert!(m.foc_residual < 1e-6);
            last = m.f_poa;
            last_beta = m.beta;
        }
        let far = min_poa_for_q(50.0, &econ()).unwrap();
        assert!((far.f_poa - 1.0).abs() < 1e-3);
    }

    #[test]
    fn curve_fields_line_up() {
        let cf = CostFunction::polynomial(1.0, 2.0).unwrap();
        let grid = logspace(0.01, 10.0, 50);
        let c = poa_curve(&grid, &cf, &econ()).unwrap();
        assert_eq!(c.beta.len(), 50);
        assert!(c.f_poa.iter().all(|&f| f >= 1.0));
        assert!(c
            .strategic_cost
            .iter()
            .zip(&c.conventional_cost)
            .all(|(s, k)| s >= k));
        assert!(poa_curve(&[], &cf, &econ()).is_err());
    }
}
