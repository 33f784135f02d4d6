//! Two-server routing: probabilistic and rate-based (`r`-routing) policies,
//! the equilibrium map `φ`, its bounds, and why FSF and SSF have no symmetric
//! equilibrium.

use serde::Serialize;

use crate::cost::CostFunction;
use crate::error::{domain, invalid, Error, Result};
use crate::numeric::{bisect, expand_upper, linspace};
use crate::params::SystemConfig;
use crate::special::mean_wait;

/// How a job arriving to an empty two-server system picks a server.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mm2Policy {
    /// Server 1 with probability `p`.
    Probabilistic { p: f64 },
    /// Server `i` with probability `μ_i^r / (μ_1^r + μ_2^r)`.
    Rate { r: f64 },
    /// Fastest server first; ties split evenly.
    Fsf,
    /// Slowest server first; ties split evenly.
    Ssf,
}

impl Mm2Policy {
    /// Probability that an arrival to an empty system goes to server 1.
    pub fn p(&self, mu1: f64, mu2: f64) -> f64 {
        match *self {
            Mm2Policy::Probabilistic { p } => p,
            Mm2Policy::Rate { r } => rate_split(mu1, mu2, r),
            Mm2Policy::Fsf => branch(mu1, mu2),
            Mm2Policy::Ssf => branch(mu2, mu1),
        }
    }
}

/// `μ1^r / (μ1^r + μ2^r)`, stable for large `|r|`.
pub fn rate_split(mu1: f64, mu2: f64, r: f64) -> f64 {
    1.0 / (1.0 + (r * (mu2 / mu1).ln()).exp())
}

fn branch(a: f64, b: f64) -> f64 {
    if a > b {
        1.0
    } else if a < b {
        0.0
    } else {
        0.5
    }
}

/// Stationary law of the two-server chain with empty-system split `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mm2SteadyState {
    pub pi0: f64,
    /// One job, at server 1.
    pub pi1_1: f64,
    /// One job, at server 2.
    pub pi1_2: f64,
    /// Two jobs; `π_k = π_2 ρ^(k−2)` beyond.
    pub pi2: f64,
    /// `ρ = λ/(μ1 + μ2)`
    pub tail_ratio: f64,
}

impl Mm2SteadyState {
    /// `π_k` for `k ≥ 2`.
    pub fn pi(&self, k: usize) -> f64 {
        assert!(k >= 2, "pi(k) is for k >= 2");
        self.pi2 * self.tail_ratio.powi(k as i32 - 2)
    }

    /// Mass of all states with two or more jobs.
    pub fn busy_mass(&self) -> f64 {
        self.pi2 / (1.0 - self.tail_ratio)
    }

    pub fn total_mass(&self) -> f64 {
        self.pi0 + self.pi1_1 + self.pi1_2 + self.busy_mass()
    }

    pub fn idle1(&self) -> f64 {
        self.pi0 + self.pi1_2
    }

    pub fn idle2(&self) -> f64 {
        self.pi0 + self.pi1_1
    }
}

fn check_stable(lambda: f64, mu1: f64, mu2: f64) -> Result<()> {
    if !(lambda >= 0.0 && mu1 > 0.0 && mu2 > 0.0) {
        return Err(invalid(format!(
            "need lambda >= 0 and positive rates, got {lambda}, {mu1}, {mu2}"
        )));
    }
    if !(mu1 + mu2 > lambda) {
        return Err(domain(format!(
            "mu1 + mu2 = {} must exceed lambda = {lambda}",
            mu1 + mu2
        )));
    }
    Ok(())
}

/// Closed-form stationary probabilities under probabilistic routing.
pub fn mm2_steady_state(lambda: f64, mu1: f64, mu2: f64, p: f64) -> Result<Mm2SteadyState> {
    check_stable(lambda, mu1, mu2)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("routing probability must be in [0, 1], got {p}")));
    }
    let s = mu1 + mu2;
    let q = 1.0 - p;
    let num = mu1 * mu2 * (s - lambda) * (s + 2.0 * lambda);
    let den = mu1 * mu2 * s * s
        + lambda * s * (mu2 * mu2 + 2.0 * mu1 * mu2 + q * (mu1 * mu1 - mu2 * mu2))
        + lambda * lambda * (mu1 * mu1 + mu2 * mu2);
    let pi0 = num / den;
    let pi1_1 = lambda * (lambda + p * s) * pi0 / (mu1 * (s + 2.0 * lambda));
    let pi1_2 = lambda * (lambda + q * s) * pi0 / (mu2 * (s + 2.0 * lambda));
    let pi2 = ((lambda + mu1) * pi1_1 - lambda * p * pi0) / mu2;
    Ok(Mm2SteadyState {
        pi0,
        pi1_1,
        pi1_2,
        pi2,
        tail_ratio: lambda / s,
    })
}

/// `I1(μ1, μ2; p)` as a single rational expression.
pub fn idle1_p(lambda: f64, mu1: f64, mu2: f64, p: f64) -> Result<f64> {
    check_stable(lambda, mu1, mu2)?;
    let s = mu1 + mu2;
    let q = 1.0 - p;
    let num = mu1 * (s - lambda) * ((lambda + mu2).powi(2) + mu1 * mu2 + q * lambda * s);
    let den = mu1 * mu2 * s * s
        + lambda * s * (mu2 * mu2 + 2.0 * mu1 * mu2 + q * (mu1 * mu1 - mu2 * mu2))
        + lambda * lambda * (mu1 * mu1 + mu2 * mu2);
    Ok(num / den)
}

/// Idle probabilities `(I1, I2)` under `r`-routing.
pub fn idle_r(lambda: f64, mu1: f64, mu2: f64, r: f64) -> Result<(f64, f64)> {
    Ok((idle1_r(lambda, mu1, mu2, r)?, idle1_r(lambda, mu2, mu1, r)?))
}

fn idle1_r(lambda: f64, mu1: f64, mu2: f64, r: f64) -> Result<f64> {
    check_stable(lambda, mu1, mu2)?;
    let s = mu1 + mu2;
    let w1 = rate_split(mu1, mu2, r);
    let w2 = 1.0 - w1;
    let num = mu1 * (s - lambda) * ((lambda + mu2).powi(2) + mu1 * mu2 + w2 * lambda * s);
    let den = mu1 * mu2 * s * s
        + lambda * s * (mu1 * mu1 + 2.0 * mu1 * mu2 - w1 * (mu1 * mu1 - mu2 * mu2))
        + (lambda * mu1).powi(2)
        + (lambda * mu2).powi(2);
    Ok(num / den)
}

/// Idle probabilities `(I1, I2)` under any two-server policy.
pub fn idle_policy(lambda: f64, mu1: f64, mu2: f64, policy: Mm2Policy) -> Result<(f64, f64)> {
    match policy {
        Mm2Policy::Rate { r } => idle_r(lambda, mu1, mu2, r),
        _ => {
            let ss = mm2_steady_state(lambda, mu1, mu2, policy.p(mu1, mu2))?;
            Ok((ss.idle1(), ss.idle2()))
        }
    }
}

fn above_half(mu: f64, lambda: f64) -> Result<()> {
    if !(mu > lambda / 2.0) {
        return Err(domain(format!(
            "rate {mu} must exceed lambda/2 = {}",
            lambda / 2.0
        )));
    }
    Ok(())
}

/// `∂I1^r/∂μ1` at `μ1 = μ2 = μ`.
pub fn symmetric_foc_derivative(mu: f64, lambda: f64, r: f64) -> Result<f64> {
    above_half(mu, lambda)?;
    Ok(lambda * (4.0 * lambda + 4.0 * mu + lambda * r - 2.0 * mu * r)
        / (4.0 * mu * (lambda + mu) * (lambda + 2.0 * mu)))
}

fn check_validity(lambda: f64, cf: &CostFunction, strict: bool) -> Result<()> {
    let slope = cf.d1(lambda / 2.0);
    let ok = if strict {
        slope < 1.0 / lambda
    } else {
        slope <= 1.0 / lambda
    };
    if !ok {
        return Err(Error::Precondition(format!(
            "c'(lambda/2) = {slope} must be below 1/lambda = {}",
            1.0 / lambda
        )));
    }
    Ok(())
}

/// The policy parameter `r` whose symmetric first-order condition is solved
/// at `μ`: `φ(μ) = 4(λ+μ)/(λ(λ−2μ)) · (μ(λ+2μ)c′(μ) − λ)`.
///
/// Rejects costs with `c′(λ/2) > 1/λ`, where `φ` stops being monotone. The
/// boundary case `c′(λ/2) = 1/λ` is still evaluated.
pub fn phi(mu: f64, lambda: f64, cf: &CostFunction) -> Result<f64> {
    above_half(mu, lambda)?;
    check_validity(lambda, cf, false)?;
    Ok(phi_unchecked(mu, lambda, cf))
}

fn phi_unchecked(mu: f64, lambda: f64, cf: &CostFunction) -> f64 {
    4.0 * (lambda + mu) / (lambda * (lambda - 2.0 * mu)) * (mu * (lambda + 2.0 * mu) * cf.d1(mu) - lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mm2EquilibriumBounds {
    /// Solves `μ²c′(μ) = λ/2`.
    pub mu_dagger: f64,
    /// Largest rate that can be a symmetric equilibrium.
    pub mu_bar: f64,
    /// `φ(μ̄)`; smaller `r` admit no symmetric equilibrium.
    pub r_low: f64,
}

/// Rates above which no `r`-routing equilibrium can exist, and the matching `r̲`.
pub fn bounds(lambda: f64, cf: &CostFunction) -> Result<Mm2EquilibriumBounds> {
    if !(lambda > 0.0) {
        return Err(invalid(format!("arrival rate must be positive, got {lambda}")));
    }
    check_validity(lambda, cf, true)?;
    let half = lambda / 2.0;
    let tol = 1e-10;
    let stat = |mu: f64| mu * mu * cf.d1(mu) - half;
    let hi = expand_upper(lambda, |mu| stat(mu) > 0.0)?;
    let mu_dagger = bisect(stat, half, hi, tol)?;

    let gain = |mu: f64| 1.0 - half / mu - cf.value(mu) + cf.value(half);
    let hi = expand_upper(2.0 * mu_dagger, |mu| gain(mu) < 0.0)?;
    let mu_bar = bisect(gain, mu_dagger, hi, 1e-14)?;
    Ok(Mm2EquilibriumBounds {
        mu_dagger,
        mu_bar,
        r_low: phi_unchecked(mu_bar, lambda, cf),
    })
}

/// Utility of server 1 under `r`-routing.
pub fn utility_r(mu1: f64, mu2: f64, lambda: f64, r: f64, cf: &CostFunction) -> Result<f64> {
    Ok(idle1_r(lambda, mu1, mu2, r)? - cf.value(mu1))
}

/// Grid size of the global best-response check.
pub const BEST_RESPONSE_GRID: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoutingEquilibrium {
    pub r: f64,
    pub mu: f64,
    pub utility: f64,
    pub mean_response: f64,
    /// Best utility a deviating server finds on the check grid.
    pub best_deviation: f64,
    pub best_deviation_at: f64,
}

/// Symmetric equilibrium of the two-server game under `r`-routing, if one exists.
///
/// `φ` is inverted by bisection; the candidate is then accepted only if no
/// point of a 10⁴-point grid over `(λ/2, μ̄ + 1]` beats it.
pub fn equilibrium_for_r(r: f64, lambda: f64, cf: &CostFunction) -> Result<Option<RoutingEquilibrium>> {
    let b = bounds(lambda, cf)?;
    if !r.is_finite() || r < b.r_low {
        return Ok(None);
    }
    let half = lambda / 2.0;
    let top = b.mu_bar + 1.0;
    let f = |mu: f64| phi_unchecked(mu, lambda, cf) - r;
    let mut lo = half + 1e-9 * half;
    while f(lo) < 0.0 {
        lo = half + (lo - half) * 1e-3;
        if lo <= half {
            return Ok(None);
        }
    }
    let mu = bisect(f, lo, top, 1e-12)?;
    let utility = utility_r(mu, mu, lambda, r, cf)?;

    let grid = linspace(half + (top - half) * 1e-6, top, BEST_RESPONSE_GRID);
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for &m in &grid {
        let u = utility_r(m, mu, lambda, r, cf)?;
        if u > best.1 {
            best = (m, u);
        }
    }
    if best.1 > utility + 1e-12 {
        return Ok(None);
    }
    Ok(Some(RoutingEquilibrium {
        r,
        mu,
        utility,
        mean_response: mean_response(mu, lambda)?,
        best_deviation: best.1,
        best_deviation_at: best.0,
    }))
}

/// `I1(μ, μ; p = 0) − I1(μ, μ; p = 1/2)`: what server 1 gains from being
/// skipped by arrivals to an empty system.
pub fn fsf_ssf_gap(mu: f64, lambda: f64) -> Result<f64> {
    above_half(mu, lambda)?;
    Ok(idle1_p(lambda, mu, mu, 0.0)? - idle1_p(lambda, mu, mu, 0.5)?)
}

/// `λ(2μ − λ) / ((μ + λ)(2μ + λ))`.
///
/// This is twice [`fsf_ssf_gap`]: reducing `I1(μ, μ; p)` gives
/// `(2μ − λ)((λ+μ)² + μ² + 2(1−p)λμ) / (2μ(μ+λ)(2μ+λ))`, so moving `p` from
/// `1/2` to `0` adds `λ(2μ − λ) / (2(μ+λ)(2μ+λ))`.
pub fn fsf_ssf_gap_closed_form(mu: f64, lambda: f64) -> Result<f64> {
    above_half(mu, lambda)?;
    Ok(lambda * (2.0 * mu - lambda) / ((mu + lambda) * (2.0 * mu + lambda)))
}

/// Mean sojourn time in the symmetric two-server system.
pub fn mean_response(mu: f64, lambda: f64) -> Result<f64> {
    let cfg = SystemConfig::new(lambda, 2)?;
    Ok(mean_wait(&cfg, mu)? + 1.0 / mu)
}
