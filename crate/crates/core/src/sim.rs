//! Discrete-event simulation of a heterogeneous M/M/N queue with FIFO waiting
//! and a pluggable dispatch rule.
//!
//! Each replication draws from three ChaCha streams seeded with `seed + i`:
//! inter-arrival times, job sizes (`Exp(1)` work, so the service time is
//! `work / μ_i`), and dispatch decisions. Different policies run on the same
//! seed therefore see the same arrivals and job sizes.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{domain, invalid, Result};
use crate::policy::Routing;

const ARRIVAL_STREAM: u64 = 0;
const WORK_STREAM: u64 = 1;
const ROUTING_STREAM: u64 = 2;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub lambda: f64,
    pub rates: Vec<f64>,
    pub routing: Routing,
    /// Simulated time per replication.
    pub horizon: f64,
    /// Fraction of the horizon discarded before measuring.
    pub warmup: f64,
    pub replications: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(lambda: f64, rates: Vec<f64>, routing: Routing) -> Self {
        Self {
            lambda,
            rates,
            routing,
            horizon: 1e5,
            warmup: 0.1,
            replications: 10,
            seed: 0,
        }
    }

    pub fn horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn warmup(mut self, warmup: f64) -> Self {
        self.warmup = warmup;
        self
    }

    pub fn replications(mut self, replications: usize) -> Self {
        self.replications = replications;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() {
            return Err(invalid("need at least one server"));
        }
        if self.rates.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(domain("service rates must be positive and finite"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(domain(format!(
                "arrival rate must be non-negative, got {}",
                self.lambda
            )));
        }
        let total: f64 = self.rates.iter().sum();
        if !(total > self.lambda) {
            return Err(domain(format!(
                "unstable: sum of rates {total} <= lambda {}",
                self.lambda
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(0.0..1.0).contains(&self.warmup) {
            return Err(invalid(format!(
                "warm-up fraction must lie in [0, 1), got {}",
                self.warmup
            )));
        }
        if self.replications == 0 {
            return Err(invalid("need at least one replication"));
        }
        Ok(())
    }
}

/// Sample mean across replications and the half-width of its 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub mean: f64,
    pub half_width: f64,
}

impl Interval {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Self {
                mean,
                half_width: f64::INFINITY,
            };
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("degrees of freedom are positive")
            .inverse_cdf(0.975);
        Self {
            mean,
            half_width: t * (var / n as f64).sqrt(),
        }
    }

    pub fn contains(&self, x: f64, widths: f64) -> bool {
        (x - self.mean).abs() <= widths * self.half_width
    }

    pub fn lo(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.mean + self.half_width
    }
}

/// Measurements from one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    pub idle_fractions: Vec<f64>,
    /// Average wait of jobs that arrived after warm-up and started service.
    pub mean_wait: f64,
    /// Time-average number of jobs waiting.
    pub mean_queue: f64,
    /// Jobs that arrived after warm-up and started service before the horizon.
    pub served: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimEstimate {
    pub idle_fractions: Vec<Interval>,
    pub mean_wait: Interval,
    pub mean_queue: Interval,
    pub served: u64,
    pub replications: Vec<Replication>,
}

impl SimEstimate {
    /// Whether `L_q ≈ λ W` holds within the combined interval widths.
    pub fn littles_law_holds(&self, lambda: f64, widths: f64) -> bool {
        let gap = (self.mean_queue.mean - lambda * self.mean_wait.mean).abs();
        gap <= widths * (self.mean_queue.half_width + lambda * self.mean_wait.half_width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    time: f64,
    /// `None` for an arrival.
    server: Option<usize>,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then_with(|| match (self.server, other.server) {
                (None, Some(_)) => Ordering::Less,
                (Some(_), None) => Ordering::Greater,
                (a, b) => a.cmp(&b),
            })
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Runs one replication with the given seed.
pub fn replicate(cfg: &SimConfig, index: usize, seed: u64) -> Result<Replication> {
    let n = cfg.rates.len();
    let mut arrivals = stream(seed, ARRIVAL_STREAM);
    let mut work = stream(seed, WORK_STREAM);
    let mut dispatch = stream(seed, ROUTING_STREAM);

    let start = cfg.warmup * cfg.horizon;
    let end = cfg.horizon;
    let span = end - start;

    let mut heap = BinaryHeap::new();
    if cfg.lambda > 0.0 {
        let gap: f64 = arrivals.sample(Exp1);
        heap.push(Reverse(Event {
            time: gap / cfg.lambda,
            server: None,
        }));
    }

    // Longest idle first; the initial order is by index.
    let mut idle: Vec<usize> = (0..n).collect();
    let mut waiting: VecDeque<(f64, f64)> = VecDeque::new();
    let mut idle_time = vec![0.0; n];
    let mut queue_area = 0.0;
    let mut wait_sum = 0.0;
    let mut served = 0u64;
    let mut now: f64 = 0.0;

    let mut advance = |to: f64, idle: &[usize], queue_len: usize| {
        let dt = (to.min(end) - now.max(start)).max(0.0);
        if dt > 0.0 {
            for &i in idle {
                idle_time[i] += dt;
            }
            queue_area += dt * queue_len as f64;
        }
        now = to;
    };

    while let Some(Reverse(ev)) = heap.pop() {
        if ev.time > end {
            break;
        }
        advance(ev.time, &idle, waiting.len());
        match ev.server {
            None => {
                let size: f64 = work.sample(Exp1);
                if idle.is_empty() {
                    waiting.push_back((ev.time, size));
                } else {
                    let u: f64 = dispatch.random();
                    let pos = cfg.routing.choose(&idle, &cfg.rates, u)?;
                    let server = idle.remove(pos);
                    heap.push(Reverse(Event {
                        time: ev.time + size / cfg.rates[server],
                        server: Some(server),
                    }));
                    if ev.time >= start {
                        served += 1;
                    }
                }
                let gap: f64 = arrivals.sample(Exp1);
                heap.push(Reverse(Event {
                    time: ev.time + gap / cfg.lambda,
                    server: None,
                }));
            }
            Some(server) => match waiting.pop_front() {
                Some((arrived, size)) => {
                    heap.push(Reverse(Event {
                        time: ev.time + size / cfg.rates[server],
                        server: Some(server),
                    }));
                    if arrived >= start {
                        wait_sum += ev.time - arrived;
                        served += 1;
                    }
                }
                None => idle.push(server),
            },
        }
    }
    advance(end, &idle, waiting.len());

    Ok(Replication {
        index,
        seed,
        idle_fractions: idle_time.iter().map(|t| t / span).collect(),
        mean_wait: if served > 0 { wait_sum / served as f64 } else { 0.0 },
        mean_queue: queue_area / span,
        served,
    })
}

/// Runs all replications, in parallel, and pools them in replication order.
pub fn run(cfg: &SimConfig) -> Result<SimEstimate> {
    cfg.validate()?;
    let reps = (0..cfg.replications)
        .into_par_iter()
        .map(|i| replicate(cfg, i, cfg.seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let n = cfg.rates.len();
    let idle_fractions = (0..n)
        .map(|j| {
            let xs: Vec<f64> = reps.iter().map(|r| r.idle_fractions[j]).collect();
            Interval::from_samples(&xs)
        })
        .collect();
    let waits: Vec<f64> = reps.iter().map(|r| r.mean_wait).collect();
    let queues: Vec<f64> = reps.iter().map(|r| r.mean_queue).collect();
    Ok(SimEstimate {
        idle_fractions,
        mean_wait: Interval::from_samples(&waits),
        mean_queue: Interval::from_samples(&queues),
        served: reps.iter().map(|r| r.served).sum(),
        replications: reps,
    })
}

/// Runs `base` once per policy with the same seeds.
pub fn compare_policies(base: &SimConfig, policies: &[Routing]) -> Result<Vec<(Routing, SimEstimate)>> {
    policies
        .iter()
        .map(|p| {
            let cfg = SimConfig {
                routing: p.clone(),
                ..base.clone()
            };
            run(&cfg).map(|est| (p.clone(), est))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::IdleOrderPolicy;

    #[test]
    fn no_arrivals_means_always_idle() {
        let cfg = SimConfig::new(0.0, vec![1.0, 2.0], Routing::random()).horizon(100.0);
        let est = run(&cfg).unwrap();
        for f in &est.idle_fractions {
            assert_eq!(f.mean, 1.0);
            assert_eq!(f.half_width, 0.0);
        }
        assert_eq!(est.served, 0);
    }

    #[test]
    fn reproducible() {
        let cfg = SimConfig::new(1.0, vec![1.2, 0.8], Routing::Rate { r: 1.0 })
            .horizon(2e3)
            .replications(4)
            .seed(7);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.replications, b.replications);
        let c = run(&cfg.clone().seed(8)).unwrap();
        assert_ne!(a.replications, c.replications);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = SimConfig::new(1.0, vec![0.5, 0.5], Routing::random());
        assert!(run(&base).is_err());
        let ok = SimConfig::new(0.5, vec![0.5, 0.5], Routing::random());
        assert!(run(&ok.clone().horizon(0.0)).is_err());
        assert!(run(&ok.clone().replications(0)).is_err());
        assert!(run(&ok.clone().warmup(1.0)).is_err());
    }

    #[test]
    fn heap_order_puts_arrivals_first() {
        let a = Event {
            time: 1.0,
            server: None,
        };
        let d = Event {
            time: 1.0,
            server: Some(0),
        };
        assert!(a < d);
        assert!(
            Event {
                time: 0.5,
                server: Some(3)
            } < a
        );
    }

    #[test]
    fn single_replication_interval_is_unbounded() {
        let i = Interval::from_samples(&[0.3]);
        assert_eq!(i.mean, 0.3);
        assert!(i.half_width.is_infinite());
        let i = Interval::from_samples(&[1.0, 2.0, 3.0]);
        assert!((i.half_width - 4.302652729749464 / 3f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn lisf_two_server_idle() {
        let cfg = SimConfig::new(1.0, vec![1.0, 2.0], IdleOrderPolicy::Lisf.into())
            .horizon(5e4)
            .seed(3);
        let est = run(&cfg).unwrap();
        assert!(est.idle_fractions[0].contains(10.0 / 17.0, 3.0));
        assert!(est.littles_law_holds(1.0, 3.0));
    }
}
