//! Closed forms checked against the exact chains and against each other.

use strategic_queue::ctmc::{generator_solve, idle_fraction_of, product_form};
use strategic_queue::equilibrium::{best_response_scan, solve, ScanFloor};
use strategic_queue::idle::idle_probability;
use strategic_queue::routing::{equilibrium_for_r, idle1_p, idle_r, mm2_steady_state, phi};
use strategic_queue::special::mean_wait;
use strategic_queue::{CostFunction, IdleOrderPolicy, Routing, SystemConfig, TaggedProfile};

fn quad() -> CostFunction {
    CostFunction::polynomial(1.0, 2.0).unwrap()
}

#[test]
fn ctmc_idle_matches_tagged_formula_three_servers() {
    for &(lambda, mu1, mu) in &[(2.0, 1.1, 0.9), (1.0, 0.7, 0.6), (2.5, 1.5, 1.0)] {
        let cfg = SystemConfig::new(lambda, 3).unwrap();
        let want = idle_probability(&TaggedProfile::new(mu1, mu), &cfg).unwrap();
        let ss = product_form(&[mu1, mu, mu], lambda).unwrap();
        assert!((idle_fraction_of(&ss, 0).unwrap() - want).abs() < 1e-10);
        let gen = generator_solve(&[mu1, mu, mu], lambda, &Routing::random()).unwrap();
        assert!((idle_fraction_of(&gen, 0).unwrap() - want).abs() < 1e-10);
    }
}

#[test]
fn ctmc_mean_wait_matches_erlang_c() {
    let cfg = SystemConfig::new(1.0, 3).unwrap();
    let want = mean_wait(&cfg, 1.0).unwrap();
    let ss = generator_solve(&[1.0; 3], 1.0, &IdleOrderPolicy::Lisf.into()).unwrap();
    assert!((ss.mean_wait - want).abs() < 1e-10);
}

#[test]
fn probabilistic_routing_matches_generator() {
    let (lambda, mu1, mu2, p) = (1.0, 1.2, 0.8, 0.7);
    let closed = idle1_p(lambda, mu1, mu2, p).unwrap();
    // With two servers, rate routing with the right exponent is probabilistic
    // routing with split p.
    let r = (p / (1.0 - p)).ln() / (mu1 / mu2).ln();
    let ss = generator_solve(&[mu1, mu2], lambda, &Routing::Rate { r }).unwrap();
    assert!((idle_fraction_of(&ss, 0).unwrap() - closed).abs() < 1e-10);
    let chain = mm2_steady_state(lambda, mu1, mu2, p).unwrap();
    assert!((chain.idle1() - closed).abs() < 1e-12);
}

#[test]
fn rate_routing_matches_generator() {
    for r in [-2.0, -0.5, 0.0, 1.0, 3.0] {
        let (i1, i2) = idle_r(1.0, 1.2, 0.8, r).unwrap();
        let ss = generator_solve(&[1.2, 0.8], 1.0, &Routing::Rate { r }).unwrap();
        assert!((ss.idle_fractions[0] - i1).abs() < 1e-10, "r = {r}");
        assert!((ss.idle_fractions[1] - i2).abs() < 1e-10, "r = {r}");
    }
}

#[test]
fn zero_r_equilibrium_is_the_random_equilibrium() {
    let lambda = 0.25;
    let cf = quad();
    let routed = equilibrium_for_r(0.0, lambda, &cf).unwrap().unwrap();
    let cfg = SystemConfig::new(lambda, 2).unwrap();
    let report = solve(&cfg, &cf).unwrap();
    let mu = report.largest().unwrap().mu;
    assert!((routed.mu - mu).abs() < 1e-8);
}

#[test]
fn phi_inverts_equilibrium_map() {
    let cf = quad();
    for r in [-5.0, -3.0, -2.0, -1.0, 0.0, 0.5, 1.0, 2.0] {
        if let Some(eq) = equilibrium_for_r(r, 0.25, &cf).unwrap() {
            assert!((phi(eq.mu, 0.25, &cf).unwrap() - r).abs() < 1e-8, "r = {r}");
        }
    }
}

#[test]
fn verified_equilibria_are_best_responses() {
    let cf = quad();
    for &(lambda, n) in &[(2.0, 8), (2.0, 12), (4.0, 20), (1.0, 20)] {
        let cfg = SystemConfig::new(lambda, n).unwrap();
        for eq in &solve(&cfg, &cf).unwrap().equilibria {
            let br = best_response_scan(eq.mu, &cfg, &cf, 20_000, ScanFloor::StrategySpace).unwrap();
            assert!(
                (br.argmax - eq.mu).abs() <= br.cell,
                "lambda={lambda} n={n}: {} vs {}",
                br.argmax,
                eq.mu
            );
        }
    }
}
