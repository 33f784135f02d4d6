//! Staffing with strategic servers: the limiting first-order condition, the
//! optimal slope `a*`, the rule `N = ⌈λ/a*⌉`, exact finite-λ optimisation and
//! the square-root safety staffing comparison.

use serde::Serialize;

use crate::cost::CostFunction;
use crate::equilibrium::{self, EquilibriumReport};
use crate::error::{invalid, Error, Result};
use crate::numeric::{bisect, expand_upper, golden_max};
use crate::params::{EconomicParams, SystemConfig};
use crate::special::{mean_wait, y_star};

/// Residual `a(μ − a) − μ³c′(μ)` of the limiting first-order condition.
pub fn limiting_residual(a: f64, mu: f64, cf: &CostFunction) -> f64 {
    a * (mu - a) - mu.powi(3) * cf.d1(mu)
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitingFocRoots {
    pub a: f64,
    pub roots: Vec<f64>,
    pub tangency: bool,
}

/// Residual magnitude below which the peak of the limiting condition counts
/// as touching zero.
pub const TANGENCY_TOL: f64 = 1e-12;

/// Solves `1/a − 1/μ = (μ²/a²)c′(μ)` for `μ > a`.
///
/// The left side is concave increasing and the right side convex increasing,
/// so their difference is concave: it is maximised first and each side of the
/// peak is bisected.
pub fn limiting_foc_roots(a: f64, cf: &CostFunction) -> Result<LimitingFocRoots> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(invalid(format!("staffing slope must be positive, got {a}")));
    }
    let g = |mu: f64| 1.0 / a - 1.0 / mu - mu * mu / (a * a) * cf.d1(mu);
    let hi = expand_upper(2.0 * a, |mu| mu * mu / (a * a) * cf.d1(mu) > 1.0 / a)?;
    let (peak, _) = golden_max(g, a, hi, 1e-14 * hi);
    let top = limiting_residual(a, peak, cf);

    let mut out = LimitingFocRoots {
        a,
        roots: Vec::new(),
        tangency: false,
    };
    if top.abs() <= TANGENCY_TOL {
        out.roots.push(peak);
        out.tangency = true;
    } else if top > 0.0 {
        let tol = 1e-15 * hi;
        out.roots.push(bisect(g, a, peak, tol)?);
        out.roots.push(bisect(g, peak, hi, tol)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AStar {
    pub a_star: f64,
    /// Rate at which the limiting condition is tangent.
    pub mu_star: f64,
}

/// Largest slope `a` for which the limiting first-order condition has a root.
///
/// Every root pair `(a, μ)` has `a = μ/2 · (1 + √(1 − 4μc′(μ)))` on the branch
/// with `4μc′(μ) ≤ 1`; that curve is maximised and its peak polished with the
/// tangency condition `a = 3μ²c′(μ) + μ³c″(μ)`.
pub fn a_star(cf: &CostFunction) -> Result<AStar> {
    let disc = |mu: f64| 1.0 - 4.0 * mu * cf.d1(mu);
    let cap_hi = expand_upper(1e-3, |mu| disc(mu) < 0.0)?;
    let mut cap_lo = cap_hi / 2.0;
    while disc(cap_lo) < 0.0 {
        cap_lo /= 2.0;
        if cap_lo < 1e-300 {
            return Err(Error::Numerical("no rate with 4 mu c'(mu) <= 1".into()));
        }
    }
    let mu_max = bisect(disc, cap_lo, cap_hi, 1e-15 * cap_hi)?;
    let branch = |mu: f64| 0.5 * mu * (1.0 + disc(mu).max(0.0).sqrt());
    let (mut mu, _) = golden_max(branch, 0.0, mu_max, 1e-12 * mu_max);

    let slope = |mu: f64| 3.0 * mu * mu * cf.d1(mu) + mu.powi(3) * cf.d2(mu);
    let tangent = |mu: f64| {
        let a = slope(mu);
        a * (mu - a) - mu.powi(3) * cf.d1(mu)
    };
    let width = 1e-4 * mu;
    if let Ok(root) = bisect(tangent, mu - width, (mu + width).min(mu_max), 1e-16 * mu) {
        mu = root;
    }
    Ok(AStar {
        a_star: branch(mu),
        mu_star: mu,
    })
}

/// Closed form of `a*` and its tangency rate for `c(μ) = c_E μ^p`.
pub fn a_star_polynomial(c_e: f64, p: f64) -> AStar {
    let inner = (1.0 / (c_e * p * (p + 2.0))).powf(1.0 / (p + 1.0));
    let a = ((p + 1.0) / (p + 2.0) * inner).powf((p + 1.0) / p);
    let mu = ((p + 1.0) / (c_e * p * (p + 2.0) * (p + 2.0))).powf(1.0 / p);
    AStar {
        a_star: a,
        mu_star: mu,
    }
}

/// `N = ⌈λ/a*⌉`.
pub fn staff_ao(lambda: f64, cf: &CostFunction) -> Result<usize> {
    if !(lambda > 0.0) {
        return Err(invalid(format!("arrival rate must be positive, got {lambda}")));
    }
    let a = a_star(cf)?.a_star;
    Ok(staff_with_slope(lambda, a))
}

pub fn staff_with_slope(lambda: f64, a: f64) -> usize {
    ((lambda / a).ceil() as usize).max(1)
}

/// How to pick among several verified equilibria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    #[default]
    LargestRate,
    LowestCost,
}

/// Rates above this are treated as unbounded when judging admissibility.
pub const ADMISSIBLE_RATE_CAP: f64 = 10.0;

#[derive(Debug, Clone, Serialize)]
pub struct StaffingResult {
    pub n: usize,
    pub lambda: f64,
    /// `c_S N + w λ W̄`; `None` when no equilibrium verifies.
    pub cost: Option<f64>,
    pub mu: Option<f64>,
    pub mean_wait: Option<f64>,
    pub selection: Selection,
    /// A verified equilibrium exists and its rate is at most 10.
    pub admissible: bool,
    pub report: EquilibriumReport,
}

impl StaffingResult {
    pub fn feasible(&self) -> bool {
        self.cost.is_some()
    }
}

/// Total cost at staffing `n`, using the selected equilibrium.
pub fn cost_of(
    n: usize,
    lambda: f64,
    cf: &CostFunction,
    econ: &EconomicParams,
    selection: Selection,
) -> Result<StaffingResult> {
    if n < 2 {
        return Err(Error::Precondition("staffing cost needs N >= 2".into()));
    }
    let cfg = SystemConfig::new(lambda, n)?;
    let report = equilibrium::solve(&cfg, cf)?;
    let mut best: Option<(f64, f64, f64)> = None;
    for eq in &report.equilibria {
        let w = mean_wait(&cfg, eq.mu)?;
        let cost = econ.c_s * n as f64 + econ.w * lambda * w;
        best = match (selection, best) {
            (_, None) => Some((eq.mu, w, cost)),
            (Selection::LargestRate, Some(b)) if eq.mu > b.0 => Some((eq.mu, w, cost)),
            (Selection::LowestCost, Some(b)) if cost < b.2 => Some((eq.mu, w, cost)),
            (_, keep) => keep,
        };
    }
    Ok(StaffingResult {
        n,
        lambda,
        cost: best.map(|b| b.2),
        mu: best.map(|b| b.0),
        mean_wait: best.map(|b| b.1),
        selection,
        admissible: best.is_some_and(|b| b.0 <= ADMISSIBLE_RATE_CAP),
        report,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StaffingSearch {
    pub lambda: f64,
    /// Minimiser of the total cost, if any staffing level is feasible.
    pub best: Option<StaffingResult>,
    pub smallest_feasible: Option<usize>,
    pub n_max: usize,
    /// Staffing levels whose equilibria were actually solved.
    pub evaluated: usize,
}

/// `⌈3λ/a*⌉ + 10`
pub fn scan_limit(lambda: f64, a_star: f64) -> usize {
    (3.0 * lambda / a_star).ceil() as usize + 10
}

/// Exact minimiser of the total cost over `N ∈ [2, ⌈3λ/a*⌉ + 10]`.
///
/// Levels where `c′(λ/N) ≥ N/λ` are skipped without a solve, since the left
/// side of the first-order condition is below `N/λ` on the whole strategy
/// space. The scan stops once `c_S N` alone reaches the best cost found.
pub fn n_opt_search(lambda: f64, cf: &CostFunction, econ: &EconomicParams) -> Result<StaffingSearch> {
    n_opt_search_with(lambda, cf, econ, Selection::LowestCost)
}

pub fn n_opt_search_with(
    lambda: f64,
    cf: &CostFunction,
    econ: &EconomicParams,
    selection: Selection,
) -> Result<StaffingSearch> {
    if !(lambda > 0.0) {
        return Err(invalid(format!("arrival rate must be positive, got {lambda}")));
    }
    let n_max = scan_limit(lambda, a_star(cf)?.a_star);
    let mut best: Option<StaffingResult> = None;
    let mut smallest_feasible = None;
    let mut evaluated = 0;
    for n in 2..=n_max {
        let nf = n as f64;
        if let Some(cost) = best.as_ref().and_then(|b| b.cost) {
            if econ.c_s * nf >= cost {
                break;
            }
        }
        if cf.d1(lambda / nf) >= nf / lambda {
            continue;
        }
        evaluated += 1;
        let res = cost_of(n, lambda, cf, econ, selection)?;
        let Some(cost) = res.cost else { continue };
        smallest_feasible.get_or_insert(n);
        if best.as_ref().and_then(|b| b.cost).is_none_or(|b| cost < b) {
            best = Some(res);
        }
    }
    Ok(StaffingSearch {
        lambda,
        best,
        smallest_feasible,
        n_max,
        evaluated,
    })
}

/// Square-root safety staffing `λ/μ + y*√(λ/μ)` for servers at a fixed rate.
pub fn bmr_staffing(lambda: f64, mu: f64, econ: &EconomicParams) -> Result<f64> {
    if !(lambda >= 0.0 && mu > 0.0) {
        return Err(invalid(format!(
            "square-root staffing needs lambda >= 0 and mu > 0, got {lambda}, {mu}"
        )));
    }
    let load = lambda / mu;
    Ok(load + y_star(econ).y_star * load.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin() -> CostFunction {
        CostFunction::polynomial(1.0, 1.0).unwrap()
    }

    #[test]
    fn two_roots_of_cubic() {
        // c = μ: 0.1(μ − 0.1) = μ³, i.e. μ³ − 0.1μ + 0.01 = 0.
        let r = limiting_foc_roots(0.1, &lin()).unwrap();
        assert_eq!(r.roots.len(), 2);
        for &m in &r.roots {
            assert!(m > 0.1 && m < 1.0);
            assert!((m.powi(3) - 0.1 * m + 0.01).abs() < 1e-14);
        }
    }

    #[test]
    fn tangency_at_a_star_linear() {
        let r = limiting_foc_roots(4.0 / 27.0, &lin()).unwrap();
        assert!(r.tangency);
        assert_eq!(r.roots.len(), 1);
        assert!((r.roots[0] - 2.0 / 9.0).abs() < 1e-6);
        assert!(limiting_residual(4.0 / 27.0, r.roots[0], &lin()).abs() < 1e-12);
    }

    #[test]
    fn no_roots_above_a_star() {
        assert!(limiting_foc_roots(0.5, &lin()).unwrap().roots.is_empty());
        assert!(limiting_foc_roots(0.0, &lin()).is_err());
    }

    #[test]
    fn a_star_closed_forms() {
        let s = a_star(&lin()).unwrap();
        assert!((s.a_star - 4.0 / 27.0).abs() < 1e-12);
        assert!((s.mu_star - 2.0 / 9.0).abs() < 1e-10);
        let q = a_star(&CostFunction::polynomial(1.0, 2.0).unwrap()).unwrap();
        assert!((q.a_star - 0.375_f64.powf(1.5)).abs() < 1e-12);
        assert!((q.mu_star - (3.0_f64 / 32.0).sqrt()).abs() < 1e-10);
        let c = a_star_polynomial(1.0, 1.0);
        assert!((c.a_star - 4.0 / 27.0).abs() < 1e-15);
    }

    #[test]
    fn ao_staffing_examples() {
        let quad = CostFunction::polynomial(1.0, 2.0).unwrap();
        assert_eq!(staff_ao(2.0, &quad).unwrap(), 9);
        assert_eq!(staff_ao(27.0, &lin()).unwrap(), 183);
    }

    #[test]
    fn bmr_examples() {
        let e = EconomicParams::default();
        let y = y_star(&e).y_star;
        assert!((bmr_staffing(100.0, 1.0, &e).unwrap() - (100.0 + 10.0 * y)).abs() < 1e-12);
        assert_eq!(bmr_staffing(0.0, 1.0, &e).unwrap(), 0.0);
    }

    #[test]
    fn cost_of_needs_two_servers() {
        let e = EconomicParams::default();
        assert!(cost_of(1, 1.0, &lin(), &e, Selection::LargestRate).is_err());
    }
}
