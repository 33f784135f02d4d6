//! Symmetric Nash equilibria of the N-server game under Random routing.
//!
//! Every server's utility is its idle probability minus its effort cost. A
//! symmetric equilibrium is a root of the symmetric first-order condition that
//! also beats the deviation to the bottom of the strategy space.

use serde::Serialize;

use crate::cost::CostFunction;
use crate::error::{domain, invalid, Error, Result};
use crate::idle::idle_probability;
use crate::numeric::{bisect, expand_upper, linspace};
use crate::params::{tagged_floor, SystemConfig, TaggedProfile};
use crate::special::erlang_c_unchecked;

/// Grid points used to bracket roots of the first-order condition.
pub const FOC_GRID: usize = 2048;
/// Clearance above `λ/N`, relative to `λ/N`.
pub const FOC_CLEARANCE: f64 = 1e-9;
/// Roots closer than this are reported once.
pub const ROOT_MERGE: f64 = 1e-8;

/// Left side of the symmetric first-order condition,
/// `λ/(N²μ²) · (N − ρ + C(N, ρ))`.
fn foc_lhs(mu: f64, cfg: &SystemConfig) -> f64 {
    let nf = cfg.nf();
    let rho = cfg.load(mu);
    cfg.lambda / (nf * nf * mu * mu) * (nf - rho + erlang_c_unchecked(cfg.n, rho))
}

// Upper bound of `foc_lhs` from C(N, ρ) < ρ/N.
fn foc_lhs_bound(mu: f64, cfg: &SystemConfig) -> f64 {
    let nf = cfg.nf();
    let rho = cfg.load(mu);
    cfg.lambda / (nf * nf * mu * mu) * (nf - rho + rho / nf)
}

/// `∂I/∂μ1` at the symmetric point minus `c′(μ)`.
pub fn foc_residual(mu: f64, cfg: &SystemConfig, cf: &CostFunction) -> Result<f64> {
    if !(mu > cfg.min_rate()) {
        return Err(domain(format!(
            "rate {mu} must exceed lambda/N = {}",
            cfg.min_rate()
        )));
    }
    Ok(foc_lhs(mu, cfg) - cf.d1(mu))
}

/// Symmetric utility `1 − λ/(Nμ) − c(μ)`.
pub fn symmetric_utility(mu: f64, cfg: &SystemConfig, cf: &CostFunction) -> f64 {
    1.0 - cfg.lambda / (cfg.nf() * mu) - cf.value(mu)
}

/// Utility of a tagged server at `mu1` against `N − 1` servers at `mu`.
pub fn tagged_utility(mu1: f64, mu: f64, cfg: &SystemConfig, cf: &CostFunction) -> Result<f64> {
    Ok(idle_probability(&TaggedProfile::new(mu1, mu), cfg)? - cf.value(mu1))
}

/// Right end of the root scan. Beyond it `c′` exceeds an upper bound on the
/// left side of the first-order condition, so no root can lie further out.
pub fn foc_upper_bound(cfg: &SystemConfig, cf: &CostFunction) -> Result<f64> {
    let nf = cfg.nf();
    let lambda = cfg.lambda;
    expand_upper(2.0 * cfg.min_rate(), |mu| {
        cf.d1(mu) > lambda * (nf + 1.0) / (nf * nf * mu * mu)
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FocScan {
    pub roots: Vec<f64>,
    pub grid_points: usize,
    pub brackets: usize,
    pub mu_hi: f64,
    /// Largest `|residual|` over the refined roots.
    pub max_residual: f64,
}

/// Roots of the symmetric first-order condition in `(λ/N, ∞)`, ascending.
pub fn find_foc_roots(cfg: &SystemConfig, cf: &CostFunction) -> Result<Vec<f64>> {
    Ok(scan_foc(cfg, cf, FOC_GRID)?.roots)
}

/// Root scan with an explicit grid size.
///
/// The grid is log-spaced in the offset `μ − λ/N`, since roots can sit very
/// close to the lower edge.
pub fn scan_foc(cfg: &SystemConfig, cf: &CostFunction, grid_points: usize) -> Result<FocScan> {
    if grid_points < 2 {
        return Err(invalid("root scan needs at least two grid points"));
    }
    let base = cfg.min_rate();
    let mu_hi = foc_upper_bound(cfg, cf)?;
    let eps = FOC_CLEARANCE * base;
    let (lo, hi) = (eps.ln(), (mu_hi - base).ln());
    let grid: Vec<f64> = linspace(lo, hi, grid_points)
        .into_iter()
        .map(|t| base + t.exp())
        .collect();

    // Points where even the upper bound of the left side is below c′ are
    // certainly negative; skip the Erlang C evaluation there.
    let residual = |mu: f64| foc_lhs(mu, cfg) - cf.d1(mu);
    let sign_at = |mu: f64| {
        let d1 = cf.d1(mu);
        if foc_lhs_bound(mu, cfg) - d1 < 0.0 {
            -1.0
        } else {
            foc_lhs(mu, cfg) - d1
        }
    };

    let mut brackets = 0;
    let mut roots: Vec<f64> = Vec::new();
    let mut prev = (grid[0], sign_at(grid[0]));
    for &mu in &grid[1..] {
        let cur = (mu, sign_at(mu));
        if prev.1 == 0.0 {
            roots.push(prev.0);
        } else if prev.1.signum() != cur.1.signum() && cur.1 != 0.0 {
            brackets += 1;
            roots.push(bisect(residual, prev.0, cur.0, 1e-10 * prev.0)?);
        }
        prev = cur;
    }
    if prev.1 == 0.0 {
        roots.push(prev.0);
    }

    roots.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = Vec::with_capacity(roots.len());
    for r in roots {
        match merged.last() {
            Some(&last) if (r - last).abs() < ROOT_MERGE => {}
            _ => merged.push(r),
        }
    }
    let max_residual = merged.iter().map(|&m| residual(m).abs()).fold(0.0, f64::max);
    Ok(FocScan {
        roots: merged,
        grid_points,
        brackets,
        mu_hi,
        max_residual,
    })
}

/// Outcome of the equilibrium inequality at a first-order-condition root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verification {
    pub passed: bool,
    /// `U(μ*, μ*) − U(λ/N, μ*)`; non-negative for an equilibrium.
    pub slack: f64,
    pub foc_residual: f64,
}

/// Relative tolerance on the first-order condition for a candidate rate.
pub const FOC_TOL: f64 = 1e-8;

/// Checks that the FOC root `mu` is an equilibrium: it must not lose to the
/// deviation `μ1 → λ/N`.
pub fn verify_equilibrium(mu: f64, cfg: &SystemConfig, cf: &CostFunction) -> Result<Verification> {
    if cfg.n < 2 {
        return Err(Error::Precondition(
            "the equilibrium inequality needs N >= 2; use the M/M/1 utility for one server".into(),
        ));
    }
    let foc = foc_residual(mu, cfg, cf)?;
    let nf = cfg.nf();
    let rho = cfg.load(mu);
    let util = 1.0 - rho / nf;
    let c = erlang_c_unchecked(cfg.n, rho);
    let deviation = util / (1.0 + 1.0 / (util + c / (nf - 1.0)));
    let slack = cf.value(cfg.min_rate()) + deviation - cf.value(mu);
    Ok(Verification {
        passed: slack >= 0.0,
        slack,
        foc_residual: foc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Equilibrium {
    pub mu: f64,
    pub utility: f64,
    /// `1 − λ/(Nμ)`
    pub idle: f64,
    pub foc_residual: f64,
    pub foc_satisfied: bool,
    pub slack: f64,
    pub verification_satisfied: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub lambda: f64,
    pub n: usize,
    /// Verified equilibria, ascending in `μ`.
    pub equilibria: Vec<Equilibrium>,
    /// First-order-condition roots that fail the equilibrium inequality.
    pub rejected: Vec<Equilibrium>,
    pub grid_points: usize,
    pub brackets: usize,
    pub max_residual: f64,
}

impl EquilibriumReport {
    /// The equilibrium with the largest rate.
    pub fn largest(&self) -> Option<&Equilibrium> {
        self.equilibria.last()
    }

    /// With two or more equilibria, whether utility increases with the rate.
    pub fn dominance_holds(&self) -> Option<bool> {
        if self.equilibria.len() < 2 {
            return None;
        }
        Some(self.equilibria.windows(2).all(|w| w[1].utility > w[0].utility))
    }
}

/// Finds every root of the first-order condition and verifies each.
pub fn solve(cfg: &SystemConfig, cf: &CostFunction) -> Result<EquilibriumReport> {
    solve_with_grid(cfg, cf, FOC_GRID)
}

pub fn solve_with_grid(
    cfg: &SystemConfig,
    cf: &CostFunction,
    grid_points: usize,
) -> Result<EquilibriumReport> {
    if cfg.n < 2 {
        return Err(Error::Precondition("the N-server game needs N >= 2".into()));
    }
    let scan = scan_foc(cfg, cf, grid_points)?;
    let mut equilibria = Vec::new();
    let mut rejected = Vec::new();
    for &mu in &scan.roots {
        let v = verify_equilibrium(mu, cfg, cf)?;
        let eq = Equilibrium {
            mu,
            utility: symmetric_utility(mu, cfg, cf),
            idle: 1.0 - cfg.lambda / (cfg.nf() * mu),
            foc_residual: v.foc_residual,
            foc_satisfied: v.foc_residual.abs() <= FOC_TOL * cf.d1(mu).max(1.0),
            slack: v.slack,
            verification_satisfied: v.passed,
        };
        if v.passed {
            equilibria.push(eq);
        } else {
            rejected.push(eq);
        }
    }
    Ok(EquilibriumReport {
        lambda: cfg.lambda,
        n: cfg.n,
        equilibria,
        rejected,
        grid_points: scan.grid_points,
        brackets: scan.brackets,
        max_residual: scan.max_residual,
    })
}

/// Lower end of the best-response scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScanFloor {
    /// The strategy space `(λ/N, ∞)`.
    StrategySpace,
    /// The stability floor `(λ − (N−1)μ)⁺` of the tagged server.
    Stability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BestResponse {
    pub argmax: f64,
    pub utility: f64,
    /// Spacing of the scan grid.
    pub cell: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Grid search for the tagged server's best response to `mu_others`.
///
/// The upper end is where `c(μ1)` exceeds `c(μ_others) + 1`: idle probability
/// never exceeds one, so nothing past it can beat staying at `mu_others`.
pub fn best_response_scan(
    mu_others: f64,
    cfg: &SystemConfig,
    cf: &CostFunction,
    grid: usize,
    floor: ScanFloor,
) -> Result<BestResponse> {
    if !(mu_others > cfg.min_rate()) {
        return Err(domain(format!(
            "background rate {mu_others} must exceed lambda/N = {}",
            cfg.min_rate()
        )));
    }
    if grid < 2 {
        return Err(invalid("best-response scan needs at least two grid points"));
    }
    let base = match floor {
        ScanFloor::StrategySpace => cfg.min_rate(),
        ScanFloor::Stability => tagged_floor(cfg, mu_others),
    };
    let target = cf.value(mu_others) + 1.0;
    let hi = expand_upper(2.0 * mu_others.max(base), |m| cf.value(m) >= target)?;
    let span = hi - base;
    let lo = base + 1e-4 * span / grid as f64;
    let pts = linspace(lo, hi, grid);
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for &m in &pts {
        let u = tagged_utility(m, mu_others, cfg, cf)?;
        if u > best.1 {
            best = (m, u);
        }
    }
    Ok(BestResponse {
        argmax: best.0,
        utility: best.1,
        cell: (hi - lo) / (grid - 1) as f64,
        lo,
        hi,
    })
}
