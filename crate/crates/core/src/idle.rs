//! Idle probability of a tagged server under Random routing, with one server
//! at `μ1` and the remaining `N − 1` at a common `μ`.

use serde::Serialize;

use crate::cost::CostFunction;
use crate::error::{domain, invalid, Result};
use crate::numeric::linspace;
use crate::params::{tagged_floor, SystemConfig, TaggedProfile};
use crate::special::erlang_c_unchecked;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdleDerivatives {
    pub idle: f64,
    /// `∂I/∂μ1`
    pub d1: f64,
    /// `∂²I/∂μ1²`
    pub d2: f64,
}

// Shared pieces of the closed form: ρ = λ/μ, x = μ1/μ, C = C(N, ρ) and
// D = N − (ρ + 1 − x), which is positive exactly when the system is stable.
struct Parts {
    rho: f64,
    x: f64,
    c: f64,
    d: f64,
    nf: f64,
}

fn parts(profile: &TaggedProfile, cfg: &SystemConfig) -> Result<Parts> {
    profile.check(cfg)?;
    let rho = cfg.load(profile.mu);
    let x = profile.mu1 / profile.mu;
    let nf = cfg.nf();
    let d = nf - (rho + 1.0 - x);
    if !(d > 0.0) {
        return Err(domain("tagged system is unstable"));
    }
    Ok(Parts {
        rho,
        x,
        c: erlang_c_unchecked(cfg.n, rho),
        d,
        nf,
    })
}

fn idle_from(p: &Parts) -> f64 {
    let util = p.rho / p.nf;
    if p.x == 1.0 {
        return 1.0 - util;
    }
    let tilt = util * (1.0 - 1.0 / p.x) * (1.0 + p.c / p.d);
    (1.0 - util) / (1.0 - tilt)
}

/// Steady-state probability that the tagged server is idle.
pub fn idle_probability(profile: &TaggedProfile, cfg: &SystemConfig) -> Result<f64> {
    Ok(idle_from(&parts(profile, cfg)?))
}

/// Idle probability together with its first two derivatives in `μ1`.
pub fn idle_derivatives(profile: &TaggedProfile, cfg: &SystemConfig) -> Result<IdleDerivatives> {
    let p = parts(profile, cfg)?;
    let idle = idle_from(&p);
    let mu1 = profile.mu1;
    let scale = cfg.lambda / (p.nf - p.rho);
    let (x, c, d) = (p.x, p.c, p.d);
    let cd = c / d;

    let d1 = idle * idle / (mu1 * mu1) * scale * (1.0 + cd + (1.0 - x) * x * c / (d * d));
    let bracket =
        (1.0 - p.rho * c / (d * d)) * (1.0 + cd) + (p.nf - (1.0 - x) * (1.0 - x)) * x * c / (d * d * d);
    let d2 = -2.0 * idle.powi(3) / mu1.powi(3) * scale * bracket;
    Ok(IdleDerivatives { idle, d1, d2 })
}

/// Where the second derivative changes sign on the scanned range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Threshold {
    /// `∂²I/∂μ1² < 0` at every grid point.
    ConcaveThroughout,
    /// The sign flips from `+` to `−` between these two grid points.
    Bracket { lo: f64, hi: f64 },
    /// Still convex at the right end of the grid.
    ConvexThroughout,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShapeScan {
    pub grid: Vec<f64>,
    pub d2: Vec<f64>,
    /// `+1`, `0` or `-1` per grid point.
    pub signs: Vec<i8>,
    /// Number of sign changes between consecutive grid points.
    pub sign_changes: usize,
    pub threshold: Threshold,
    /// Where `∂²I/∂μ1² > 0`, the next grid value is smaller.
    pub convex_part_decreasing: bool,
}

/// Lower clearance of the scan above the stability floor, relative to `μ`.
pub const SCAN_CLEARANCE: f64 = 1e-4;
/// Scan range above the floor, in units of `μ`.
pub const SCAN_SPAN: f64 = 10.0;

/// Scans `∂²I/∂μ1²` over `μ1 ∈ (μ̲1 + ε, μ̲1 + 10μ]` on a uniform grid.
pub fn shape_scan(cfg: &SystemConfig, mu: f64, grid_size: usize) -> Result<ShapeScan> {
    if grid_size < 16 {
        return Err(invalid(format!(
            "shape scan needs at least 16 points, got {grid_size}"
        )));
    }
    if !(mu > cfg.min_rate()) {
        return Err(domain(format!(
            "common rate {mu} must exceed lambda/N = {}",
            cfg.min_rate()
        )));
    }
    let floor = tagged_floor(cfg, mu);
    let grid = linspace(floor + SCAN_CLEARANCE * mu, floor + SCAN_SPAN * mu, grid_size);
    let d2 = grid
        .iter()
        .map(|&mu1| idle_derivatives(&TaggedProfile::new(mu1, mu), cfg).map(|v| v.d2))
        .collect::<Result<Vec<_>>>()?;
    let signs: Vec<i8> = d2.iter().map(|&v| sign(v)).collect();
    let sign_changes = signs.windows(2).filter(|w| w[0] != w[1]).count();

    let threshold = match signs.iter().position(|&s| s <= 0) {
        Some(0) => Threshold::ConcaveThroughout,
        Some(i) => Threshold::Bracket {
            lo: grid[i - 1],
            hi: grid[i],
        },
        None => Threshold::ConvexThroughout,
    };
    let convex_part_decreasing = d2.windows(2).all(|w| !(w[0] > 0.0) || w[1] < w[0]);
    Ok(ShapeScan {
        grid,
        d2,
        signs,
        sign_changes,
        threshold,
        convex_part_decreasing,
    })
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Utility `1 − λ/μ − c(μ)` of a single strategic server.
pub fn mm1_utility(mu: f64, lambda: f64, cf: &CostFunction) -> Result<f64> {
    if !(mu > lambda) {
        return Err(domain(format!("M/M/1 needs mu > lambda, got {mu} <= {lambda}")));
    }
    Ok(1.0 - lambda / mu - cf.value(mu))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lambda: f64, n: usize) -> SystemConfig {
        SystemConfig::new(lambda, n).unwrap()
    }

    #[test]
    fn symmetric_point_collapses() {
        let v = idle_probability(&TaggedProfile::symmetric(1.0), &cfg(1.0, 2)).unwrap();
        assert_eq!(v, 0.5);
        let c = cfg(3.7, 5);
        let v = idle_probability(&TaggedProfile::symmetric(0.9), &c).unwrap();
        assert!((v - (1.0 - 3.7 / 4.5)).abs() < 1e-12);
    }

    #[test]
    fn two_server_heterogeneous() {
        let v = idle_probability(&TaggedProfile::new(1.0, 2.0), &cfg(1.0, 2)).unwrap();
        assert!((v - 10.0 / 17.0).abs() < 1e-14);
    }

    #[test]
    fn single_server_reduces_to_mm1() {
        let v = idle_probability(&TaggedProfile::new(1.5, 2.0), &cfg(1.0, 1)).unwrap();
        assert!((v - (1.0 - 1.0 / 1.5)).abs() < 1e-14);
    }

    #[test]
    fn floor_is_rejected() {
        let c = cfg(2.5, 3);
        assert!(idle_probability(&TaggedProfile::new(0.5, 1.0), &c).is_err());
        assert!(idle_probability(&TaggedProfile::new(1.0, 0.8), &c).is_err());
    }

    #[test]
    fn symmetric_first_derivative() {
        let (lambda, n, mu) = (1.7, 4, 0.8);
        let c = cfg(lambda, n);
        let rho = lambda / mu;
        let erl = crate::special::erlang_c(n, rho).unwrap();
        let want = lambda / ((n * n) as f64 * mu * mu) * (n as f64 - rho + erl);
        let got = idle_derivatives(&TaggedProfile::symmetric(mu), &c).unwrap().d1;
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let c = cfg(1.5, 3);
        let (mu1, mu): (f64, f64) = (1.3, 1.0);
        let h = 1e-5 * mu1.max(1.0);
        let f = |x: f64| idle_probability(&TaggedProfile::new(x, mu), &c).unwrap();
        let v = idle_derivatives(&TaggedProfile::new(mu1, mu), &c).unwrap();
        let fd1 = (f(mu1 + h) - f(mu1 - h)) / (2.0 * h);
        let fd2 = (f(mu1 + h) - 2.0 * f(mu1) + f(mu1 - h)) / (h * h);
        assert!(((v.d1 - fd1) / v.d1).abs() < 1e-6);
        assert!(((v.d2 - fd2) / v.d2).abs() < 1e-4);
    }

    #[test]
    fn shape_scan_two_servers() {
        let s = shape_scan(&cfg(1.0, 2), 1.0, 256).unwrap();
        let plus_to_minus = s.signs.windows(2).filter(|w| w[0] > 0 && w[1] <= 0).count();
        assert!(plus_to_minus <= 1);
        assert!(s.sign_changes <= 1);
        assert!(s.convex_part_decreasing);
    }

    #[test]
    fn shape_scan_low_load() {
        let s = shape_scan(&cfg(0.1, 5), 1.0, 64).unwrap();
        assert!(s.sign_changes <= 1);
        assert!(shape_scan(&cfg(0.1, 5), 1.0, 8).is_err());
    }

    #[test]
    fn mm1_utility_values() {
        let cf = CostFunction::polynomial(1.0, 1.0).unwrap();
        assert!((mm1_utility(1.0, 0.5, &cf).unwrap() + 0.5).abs() < 1e-15);
        let m = 0.5_f64.sqrt();
        let h = 1e-6;
        let slope =
            (mm1_utility(m + h, 0.5, &cf).unwrap() - mm1_utility(m - h, 0.5, &cf).unwrap()) / (2.0 * h);
        assert!(slope.abs() < 1e-8);
        assert!((mm1_utility(0.5 + 1e-12, 0.5, &cf).unwrap() + 0.5).abs() < 1e-9);
        assert!(mm1_utility(0.5, 0.5, &cf).is_err());
    }
}
