//! Exact stationary analysis of a heterogeneous M/M/N queue under an arbitrary
//! dispatch rule, on the chain whose states are ordered idle vectors.
//!
//! State `B` is the empty idle vector: every server busy and nobody waiting.
//! Above it sit the queue levels `m = 1, 2, …`, which behave like an M/M/1
//! queue with service rate `Σμ`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{domain, invalid, Error, Result};
use crate::policy::Routing;

/// Largest number of servers accepted.
pub const MAX_SERVERS: usize = 8;
/// Queue truncation for the generator solve: `(λ/Σμ)^K < TAIL_EPS`.
pub const TAIL_EPS: f64 = 1e-12;
/// Chains up to this size are solved by dense LU; larger ones by Gauss-Seidel.
pub const DENSE_LIMIT: usize = 1500;
/// Deviation below which `collapse_check` passes.
pub const COLLAPSE_TOL: f64 = 1e-9;

const GS_TOL: f64 = 1e-15;
const GS_MAX_SWEEPS: usize = 200_000;

/// All ordered idle vectors for a given set of rates, with `B` at index 0.
#[derive(Debug, Clone)]
pub struct OrderedStateSpace {
    pub rates: Vec<f64>,
    pub lambda: f64,
    /// `λ / Σμ`.
    pub tail_ratio: f64,
    states: Vec<Vec<usize>>,
    index: HashMap<u64, usize>,
}

fn key(s: &[usize]) -> u64 {
    s.iter().rev().fold(0u64, |acc, &i| (acc << 4) | (i as u64 + 1))
}

/// `Σ_{k=0..N} N!/(N−k)!`.
pub fn expected_state_count(n: usize) -> usize {
    let mut total = 0;
    let mut term = 1;
    for k in 0..=n {
        total += term;
        term *= n - k;
    }
    total
}

impl OrderedStateSpace {
    pub fn new(rates: &[f64], lambda: f64) -> Result<Self> {
        let n = rates.len();
        if n == 0 {
            return Err(invalid("need at least one server"));
        }
        if n > MAX_SERVERS {
            return Err(invalid(format!("at most {MAX_SERVERS} servers, got {n}")));
        }
        if rates.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(domain("service rates must be positive and finite"));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(domain(format!("arrival rate must be positive, got {lambda}")));
        }
        let total: f64 = rates.iter().sum();
        if !(total > lambda) {
            return Err(domain(format!(
                "unstable: sum of rates {total} <= lambda {lambda}"
            )));
        }

        let mut states: Vec<Vec<usize>> = vec![Vec::new()];
        let mut level_start = 0;
        for _ in 0..n {
            let level_end = states.len();
            for idx in level_start..level_end {
                for i in 0..n {
                    if !states[idx].contains(&i) {
                        let mut next = states[idx].clone();
                        next.push(i);
                        states.push(next);
                    }
                }
            }
            level_start = level_end;
        }
        let index = states.iter().enumerate().map(|(i, s)| (key(s), i)).collect();
        Ok(Self {
            rates: rates.to_vec(),
            lambda,
            tail_ratio: lambda / total,
            states,
            index,
        })
    }

    pub fn n(&self) -> usize {
        self.rates.len()
    }

    /// Number of ordered idle vectors, `B` included.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<usize>] {
        &self.states
    }

    pub fn index_of(&self, s: &[usize]) -> Option<usize> {
        self.index.get(&key(s)).copied()
    }

    fn total_rate(&self) -> f64 {
        self.rates.iter().sum()
    }

    /// Queue depth used by the generator solve.
    pub fn truncation(&self) -> usize {
        ((TAIL_EPS.ln() / self.tail_ratio.ln()).floor() as usize + 1).max(1)
    }
}

/// Probabilities of the queue levels `m ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QueueTail {
    /// `π_m = ratio^m · π_B` for every `m ≥ 1`.
    Geometric { pi_b: f64, ratio: f64 },
    /// `probs[m − 1] = π_m` up to the truncation level.
    Truncated { probs: Vec<f64> },
}

impl QueueTail {
    pub fn prob(&self, m: usize) -> f64 {
        match self {
            QueueTail::Geometric { pi_b, ratio } if m >= 1 => pi_b * ratio.powi(m as i32),
            QueueTail::Truncated { probs } if m >= 1 => probs.get(m - 1).copied().unwrap_or(0.0),
            _ => 0.0,
        }
    }

    pub fn mass(&self) -> f64 {
        match self {
            QueueTail::Geometric { pi_b, ratio } => pi_b * ratio / (1.0 - ratio),
            QueueTail::Truncated { probs } => probs.iter().sum(),
        }
    }

    /// Mean number waiting.
    pub fn mean_length(&self) -> f64 {
        match self {
            QueueTail::Geometric { pi_b, ratio } => pi_b * ratio / ((1.0 - ratio) * (1.0 - ratio)),
            QueueTail::Truncated { probs } => probs.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub space: OrderedStateSpace,
    /// Probability of each ordered idle vector, aligned with `space.states()`.
    pub probs: Vec<f64>,
    pub queue: QueueTail,
    pub idle_fractions: Vec<f64>,
    pub mean_queue: f64,
    pub mean_wait: f64,
}

impl SteadyState {
    fn assemble(space: OrderedStateSpace, probs: Vec<f64>, queue: QueueTail) -> Self {
        let mut idle_fractions = vec![0.0; space.n()];
        for (s, p) in space.states.iter().zip(&probs) {
            for &i in s {
                idle_fractions[i] += p;
            }
        }
        let mean_queue = queue.mean_length();
        let mean_wait = mean_queue / space.lambda;
        Self {
            space,
            probs,
            queue,
            idle_fractions,
            mean_queue,
            mean_wait,
        }
    }

    pub fn pi_b(&self) -> f64 {
        self.probs[0]
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.queue.mass()
    }

    pub fn prob_of(&self, s: &[usize]) -> Option<f64> {
        self.space.index_of(s).map(|i| self.probs[i])
    }

    /// Probability that an arrival has to wait.
    pub fn wait_probability(&self) -> f64 {
        self.pi_b() + self.queue.mass()
    }
}

/// The stationary law from the product form `π_s = π_B ∏_{i∈s} μ_i/λ`.
pub fn product_form(rates: &[f64], lambda: f64) -> Result<SteadyState> {
    let space = OrderedStateSpace::new(rates, lambda)?;
    let weights: Vec<f64> = space
        .states
        .iter()
        .map(|s| s.iter().map(|&i| rates[i] / lambda).product())
        .collect();
    let rho = space.tail_ratio;
    let total: f64 = weights.iter().sum::<f64>() + rho / (1.0 - rho);
    let pi_b = 1.0 / total;
    let probs = weights.into_iter().map(|w| w * pi_b).collect();
    Ok(SteadyState::assemble(
        space,
        probs,
        QueueTail::Geometric { pi_b, ratio: rho },
    ))
}

struct Chain {
    /// Outgoing `(target, rate)` per state.
    out: Vec<Vec<(usize, f64)>>,
    n_idle: usize,
}

impl Chain {
    fn size(&self) -> usize {
        self.out.len()
    }
}

fn build_chain(space: &OrderedStateSpace, routing: &Routing) -> Result<Chain> {
    let n_idle = space.len();
    let depth = space.truncation();
    let lambda = space.lambda;
    let total_rate = space.total_rate();
    let mut out: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n_idle + depth);

    for s in &space.states {
        let mut edges = Vec::new();
        if s.is_empty() {
            edges.push((n_idle, lambda));
        } else {
            let p = routing.position_probs(s, &space.rates)?;
            for (j, &pj) in p.iter().enumerate() {
                if pj > 0.0 {
                    let mut next = s.clone();
                    next.remove(j);
                    edges.push((space.index_of(&next).expect("sub-vector exists"), lambda * pj));
                }
            }
        }
        for i in 0..space.n() {
            if !s.contains(&i) {
                let mut next = s.clone();
                next.push(i);
                edges.push((space.index_of(&next).expect("extension exists"), space.rates[i]));
            }
        }
        out.push(edges);
    }
    for m in 1..=depth {
        let mut edges = vec![(if m == 1 { 0 } else { n_idle + m - 2 }, total_rate)];
        if m < depth {
            edges.push((n_idle + m, lambda));
        }
        out.push(edges);
    }
    Ok(Chain { out, n_idle })
}

/// Solves global balance on the chain with the queue truncated at
/// [`OrderedStateSpace::truncation`].
pub fn generator_solve(rates: &[f64], lambda: f64, routing: &Routing) -> Result<SteadyState> {
    let space = OrderedStateSpace::new(rates, lambda)?;
    let chain = build_chain(&space, routing)?;
    let pi = if chain.size() <= DENSE_LIMIT {
        solve_dense(&chain)?
    } else {
        solve_gauss_seidel(&chain)?
    };
    if pi.iter().any(|&v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite stationary vector".into()));
    }
    let pi: Vec<f64> = pi.into_iter().map(|v| v.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    let pi: Vec<f64> = pi.into_iter().map(|v| v / total).collect();
    let probs = pi[..chain.n_idle].to_vec();
    let queue = QueueTail::Truncated {
        probs: pi[chain.n_idle..].to_vec(),
    };
    Ok(SteadyState::assemble(space, probs, queue))
}

fn solve_dense(chain: &Chain) -> Result<Vec<f64>> {
    let n = chain.size();
    // Rows of `a` are the balance equations `Σ_i π_i q_ij = 0`.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (i, edges) in chain.out.iter().enumerate() {
        for &(j, rate) in edges {
            a[(j, i)] += rate;
            a[(i, i)] -= rate;
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical("singular generator".into()))?;
    Ok(x.iter().copied().collect())
}

fn solve_gauss_seidel(chain: &Chain) -> Result<Vec<f64>> {
    let n = chain.size();
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut exit = vec![0.0; n];
    for (i, edges) in chain.out.iter().enumerate() {
        for &(j, rate) in edges {
            incoming[j].push((i, rate));
            exit[i] += rate;
        }
    }
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..GS_MAX_SWEEPS {
        let mut change: f64 = 0.0;
        for j in 0..n {
            let inflow: f64 = incoming[j].iter().map(|&(i, r)| pi[i] * r).sum();
            let next = inflow / exit[j];
            change = change.max((next - pi[j]).abs());
            pi[j] = next;
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|v| *v /= total);
        if change / total < GS_TOL {
            return Ok(pi);
        }
    }
    Err(Error::Numerical("Gauss-Seidel did not converge".into()))
}

/// Largest residuals of the two partial-balance families at every idle state:
/// inflow by arrivals against outflow by departures, and inflow by a
/// departure against outflow by arrivals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BalanceResiduals {
    pub arrival_family: f64,
    pub departure_family: f64,
}

pub fn partial_balance(ss: &SteadyState, routing: &Routing) -> Result<BalanceResiduals> {
    let space = &ss.space;
    let lambda = space.lambda;
    let mut arrival_family: f64 = 0.0;
    let mut departure_family: f64 = 0.0;
    for (idx, s) in space.states.iter().enumerate() {
        let pi_s = ss.probs[idx];
        let mut arrivals_in = 0.0;
        let mut departures_out = 0.0;
        for other in 0..space.n() {
            if s.contains(&other) {
                continue;
            }
            departures_out += space.rates[other] * pi_s;
            for j in 0..=s.len() {
                let mut from = s.clone();
                from.insert(j, other);
                let p = routing.position_probs(&from, &space.rates)?;
                let from_idx = space.index_of(&from).expect("state exists");
                arrivals_in += lambda * ss.probs[from_idx] * p[j];
            }
        }
        arrival_family = arrival_family.max((arrivals_in - departures_out).abs());

        let departure_in = match s.split_last() {
            Some((&last, rest)) => space.rates[last] * ss.probs[space.index_of(rest).expect("state exists")],
            None => space.total_rate() * ss.queue.prob(1),
        };
        departure_family = departure_family.max((departure_in - lambda * pi_s).abs());
    }
    Ok(BalanceResiduals {
        arrival_family,
        departure_family,
    })
}

/// Largest gap between two stationary laws over idle states and queue levels.
pub fn max_deviation(a: &SteadyState, b: &SteadyState) -> Result<f64> {
    if a.space.rates != b.space.rates || a.space.lambda != b.space.lambda {
        return Err(invalid("steady states describe different systems"));
    }
    let idle = a
        .probs
        .iter()
        .zip(&b.probs)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let depth = a.space.truncation();
    let queue = (1..=depth)
        .map(|m| (a.queue.prob(m) - b.queue.prob(m)).abs())
        .fold(0.0, f64::max);
    Ok(idle.max(queue))
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyDeviation {
    pub policy: String,
    pub max_deviation: f64,
    pub idle_fractions: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CollapseReport {
    pub product_form_idle: Vec<f64>,
    pub policies: Vec<PolicyDeviation>,
    pub max_deviation: f64,
    pub passed: bool,
}

/// Compares the generator solve under each policy against the product form.
pub fn collapse_check(rates: &[f64], lambda: f64, policies: &[Routing]) -> Result<CollapseReport> {
    let reference = product_form(rates, lambda)?;
    let mut rows = Vec::with_capacity(policies.len());
    for policy in policies {
        let ss = generator_solve(rates, lambda, policy)?;
        rows.push(PolicyDeviation {
            policy: policy.to_string(),
            max_deviation: max_deviation(&ss, &reference)?,
            idle_fractions: ss.idle_fractions,
        });
    }
    let max_deviation = rows.iter().map(|r| r.max_deviation).fold(0.0, f64::max);
    Ok(CollapseReport {
        product_form_idle: reference.idle_fractions,
        policies: rows,
        max_deviation,
        passed: max_deviation < COLLAPSE_TOL,
    })
}

/// Fraction of time `server` is idle.
pub fn idle_fraction_of(ss: &SteadyState, server: usize) -> Result<f64> {
    ss.idle_fractions.get(server).copied().ok_or_else(|| {
        invalid(format!(
            "server index {server} out of range for {} servers",
            ss.space.n()
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::IdleOrderPolicy;

    fn idle_order() -> Vec<Routing> {
        vec![
            IdleOrderPolicy::Random.into(),
            IdleOrderPolicy::Lisf.into(),
            IdleOrderPolicy::Sisf.into(),
            IdleOrderPolicy::WeightedRandom.into(),
        ]
    }

    #[test]
    fn state_counts() {
        for n in 1..=5 {
            let rates = vec![1.0; n];
            let space = OrderedStateSpace::new(&rates, 0.5).unwrap();
            assert_eq!(space.len(), expected_state_count(n));
        }
        assert_eq!(expected_state_count(8), 109_601);
        assert!(OrderedStateSpace::new(&[1.0; 9], 1.0).is_err());
        assert!(OrderedStateSpace::new(&[1.0, 1.0], 2.0).is_err());
    }

    #[test]
    fn two_server_hand_normalisation() {
        let ss = product_form(&[1.0, 2.0], 1.0).unwrap();
        assert!((ss.pi_b() - 2.0 / 17.0).abs() < 1e-15);
        assert!((idle_fraction_of(&ss, 0).unwrap() - 10.0 / 17.0).abs() < 1e-15);
        assert!((ss.total_mass() - 1.0).abs() < 1e-12);
        assert!(idle_fraction_of(&ss, 2).is_err());
    }

    #[test]
    fn homogeneous_idle_fraction() {
        for n in 1..=6 {
            let ss = product_form(&vec![0.7; n], 0.4 * n as f64).unwrap();
            for f in &ss.idle_fractions {
                assert!((f - (1.0 - 0.4 / 0.7)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn idle_fractions_sum_to_spare_capacity() {
        let rates = [1.0, 1.5, 2.3];
        let ss = product_form(&rates, 2.0).unwrap();
        let busy: f64 = rates
            .iter()
            .zip(&ss.idle_fractions)
            .map(|(m, f)| m * (1.0 - f))
            .sum();
        assert!((busy - 2.0).abs() < 1e-12);
    }

    #[test]
    fn generator_matches_product_form_two_servers() {
        let pf = product_form(&[1.0, 2.0], 1.0).unwrap();
        for policy in idle_order() {
            let ss = generator_solve(&[1.0, 2.0], 1.0, &policy).unwrap();
            assert!(max_deviation(&ss, &pf).unwrap() < 1e-10, "{policy}");
            assert!((ss.total_mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_server_is_mm1() {
        let ss = generator_solve(&[2.0], 1.5, &Routing::random()).unwrap();
        assert!((ss.idle_fractions[0] - 0.25).abs() < 1e-12);
        assert!((ss.pi_b() - 0.75 * 0.25).abs() < 1e-12);
        let pf = product_form(&[2.0], 1.5).unwrap();
        assert!((pf.idle_fractions[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn three_server_collapse() {
        let report = collapse_check(&[1.0, 1.5, 2.3], 2.0, &idle_order()).unwrap();
        assert!(report.passed, "{}", report.max_deviation);
        let single = collapse_check(&[1.0, 1.5, 2.3], 2.0, &[Routing::random()]).unwrap();
        assert!(single.passed);
    }

    #[test]
    fn rate_based_breaks_collapse() {
        let report = collapse_check(&[1.0, 2.0], 1.0, &[Routing::Rate { r: 1.0 }]).unwrap();
        assert!(report.max_deviation > 1e-3);
        assert!(!report.passed);
    }

    #[test]
    fn gauss_seidel_large_chain() {
        let rates = [0.8, 1.0, 1.1, 1.3, 1.7, 2.0];
        let pf = product_form(&rates, 5.0).unwrap();
        let ss = generator_solve(&rates, 5.0, &IdleOrderPolicy::WeightedRandom.into()).unwrap();
        assert!(ss.space.len() + ss.space.truncation() > DENSE_LIMIT);
        assert!(max_deviation(&ss, &pf).unwrap() < 1e-10);
    }

    #[test]
    fn product_form_balances() {
        let ss = product_form(&[1.0, 1.5, 2.3, 0.6], 2.5).unwrap();
        for policy in idle_order() {
            let r = partial_balance(&ss, &policy).unwrap();
            assert!(r.arrival_family < 1e-10 && r.departure_family < 1e-10);
        }
        let r = partial_balance(&ss, &Routing::Fsf).unwrap();
        assert!(r.arrival_family > 1e-6);
    }

    #[test]
    fn order_does_not_matter() {
        let ss = product_form(&[1.0, 1.5, 2.3], 2.0).unwrap();
        let a = ss.prob_of(&[0, 1, 2]).unwrap();
        for perm in [[0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
            assert!((ss.prob_of(&perm).unwrap() - a).abs() < 1e-15);
        }
    }

    #[test]
    fn mean_wait_matches_erlang() {
        let cfg = crate::params::SystemConfig::new(1.0, 3).unwrap();
        let want = crate::special::mean_wait(&cfg, 1.0).unwrap();
        let pf = product_form(&[1.0; 3], 1.0).unwrap();
        assert!((pf.mean_wait - want).abs() < 1e-12);
        let ss = generator_solve(&[1.0; 3], 1.0, &Routing::random()).unwrap();
        assert!((ss.mean_wait - want).abs() < 1e-10);
    }

    #[test]
    fn heavy_traffic_idle_vanishes() {
        let ss = product_form(&[1.0, 2.0], 3.0 - 1e-6).unwrap();
        assert!(ss.idle_fractions.iter().all(|&f| f < 1e-5));
    }
}
