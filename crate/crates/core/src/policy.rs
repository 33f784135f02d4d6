//! Dispatch rules for a job that finds several idle servers.
//!
//! Idle vectors are ordered longest-idle first: position 0 has been idle the
//! longest and a server that just finished service sits at the end.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};

/// Per-position weights for a custom idle-order policy. The argument is the
/// idle set in increasing server index; the result has one entry per position
/// of the idle vector and must sum to one.
pub type PositionWeights = Arc<dyn Fn(&[usize]) -> Vec<f64> + Send + Sync>;

/// A policy that only looks at the order in which servers became idle.
#[derive(Clone)]
pub enum IdleOrderPolicy {
    Random,
    /// Longest idle server first.
    Lisf,
    /// Shortest idle server first.
    Sisf,
    /// Position `j` (1-based) of `k` idle servers gets weight `k + 1 − j`.
    WeightedRandom,
    Custom {
        name: String,
        weights: PositionWeights,
    },
}

impl IdleOrderPolicy {
    pub fn custom(name: impl Into<String>, weights: PositionWeights) -> Self {
        IdleOrderPolicy::Custom {
            name: name.into(),
            weights,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            IdleOrderPolicy::Random => "random",
            IdleOrderPolicy::Lisf => "lisf",
            IdleOrderPolicy::Sisf => "sisf",
            IdleOrderPolicy::WeightedRandom => "weighted",
            IdleOrderPolicy::Custom { name, .. } => name,
        }
    }

    /// `p^S(j)` for every position `j` of an idle set of size `set.len()`.
    pub fn distribution(&self, set: &[usize]) -> Result<Vec<f64>> {
        let k = set.len();
        if k == 0 {
            return Err(invalid("idle set is empty"));
        }
        let p = match self {
            IdleOrderPolicy::Random => vec![1.0 / k as f64; k],
            IdleOrderPolicy::Lisf => one_hot(k, 0),
            IdleOrderPolicy::Sisf => one_hot(k, k - 1),
            IdleOrderPolicy::WeightedRandom => {
                let total = (k * (k + 1) / 2) as f64;
                (0..k).map(|j| (k - j) as f64 / total).collect()
            }
            IdleOrderPolicy::Custom { name, weights } => {
                let p = weights(set);
                check_distribution(name, &p, k)?;
                p
            }
        };
        Ok(p)
    }
}

impl fmt::Debug for IdleOrderPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IdleOrderPolicy({})", self.name())
    }
}

fn one_hot(k: usize, at: usize) -> Vec<f64> {
    let mut p = vec![0.0; k];
    p[at] = 1.0;
    p
}

fn check_distribution(name: &str, p: &[f64], k: usize) -> Result<()> {
    if p.len() != k {
        return Err(invalid(format!(
            "policy {name} returned {} weights for {k} idle servers",
            p.len()
        )));
    }
    if p.iter().any(|&v| !(v >= 0.0)) {
        return Err(invalid(format!("policy {name} returned a negative weight")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("policy {name} weights sum to {sum}")));
    }
    Ok(())
}

/// Any dispatch rule the simulator and the generator solve understand.
#[derive(Clone, Debug)]
pub enum Routing {
    IdleOrder(IdleOrderPolicy),
    /// Idle server `i` with probability `μ_i^r / Σ μ_j^r`.
    Rate {
        r: f64,
    },
    /// Fastest idle server; ties split evenly.
    Fsf,
    /// Slowest idle server; ties split evenly.
    Ssf,
}

impl From<IdleOrderPolicy> for Routing {
    fn from(p: IdleOrderPolicy) -> Self {
        Routing::IdleOrder(p)
    }
}

impl Routing {
    pub fn random() -> Self {
        Routing::IdleOrder(IdleOrderPolicy::Random)
    }

    pub fn is_idle_order(&self) -> bool {
        matches!(self, Routing::IdleOrder(_))
    }

    /// Probability of each position of the ordered idle vector `idle`.
    pub fn position_probs(&self, idle: &[usize], rates: &[f64]) -> Result<Vec<f64>> {
        if idle.is_empty() {
            return Err(invalid("idle vector is empty"));
        }
        match self {
            Routing::IdleOrder(p) => {
                let probs = p.distribution(&sorted(idle))?;
                Ok(probs)
            }
            Routing::Rate { r } => {
                let logs: Vec<f64> = idle.iter().map(|&i| r * rates[i].ln()).collect();
                let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = logs.iter().map(|&l| (l - top).exp()).collect();
                let total: f64 = w.iter().sum();
                Ok(w.into_iter().map(|v| v / total).collect())
            }
            Routing::Fsf => Ok(extreme(idle, rates, f64::max)),
            Routing::Ssf => Ok(extreme(idle, rates, f64::min)),
        }
    }

    /// Picks a position of `idle` given a uniform draw `u ∈ [0, 1)`.
    pub fn choose(&self, idle: &[usize], rates: &[f64], u: f64) -> Result<usize> {
        let k = idle.len();
        match self {
            Routing::IdleOrder(IdleOrderPolicy::Random) => Ok(((u * k as f64) as usize).min(k - 1)),
            Routing::IdleOrder(IdleOrderPolicy::Lisf) => Ok(0),
            Routing::IdleOrder(IdleOrderPolicy::Sisf) => Ok(k - 1),
            _ => {
                let p = self.position_probs(idle, rates)?;
                let mut acc = 0.0;
                for (j, &pj) in p.iter().enumerate() {
                    acc += pj;
                    if u < acc {
                        return Ok(j);
                    }
                }
                Ok(p.iter().rposition(|&v| v > 0.0).unwrap_or(k - 1))
            }
        }
    }
}

fn sorted(idle: &[usize]) -> Vec<usize> {
    let mut s = idle.to_vec();
    s.sort_unstable();
    s
}

fn extreme(idle: &[usize], rates: &[f64], pick: fn(f64, f64) -> f64) -> Vec<f64> {
    let target = idle.iter().map(|&i| rates[i]).reduce(pick).unwrap_or(f64::NAN);
    let hits = idle.iter().filter(|&&i| rates[i] == target).count() as f64;
    idle.iter()
        .map(|&i| if rates[i] == target { 1.0 / hits } else { 0.0 })
        .collect()
}

impl fmt::Display for Routing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Routing::IdleOrder(p) => f.write_str(p.name()),
            Routing::Rate { r } => write!(f, "r:{r}"),
            Routing::Fsf => f.write_str("fsf"),
            Routing::Ssf => f.write_str("ssf"),
        }
    }
}

impl FromStr for Routing {
    type Err = Error;

    /// `random`, `lisf`, `sisf`, `weighted`, `fsf`, `ssf` or `r:<value>`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let parsed = match t.as_str() {
            "random" => IdleOrderPolicy::Random.into(),
            "lisf" => IdleOrderPolicy::Lisf.into(),
            "sisf" => IdleOrderPolicy::Sisf.into(),
            "weighted" | "weighted_random" => IdleOrderPolicy::WeightedRandom.into(),
            "fsf" => Routing::Fsf,
            "ssf" => Routing::Ssf,
            other => {
                let r = other
                    .strip_prefix("r:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|r| r.is_finite())
                    .ok_or_else(|| invalid(format!("unknown routing policy '{s}'")))?;
                Routing::Rate { r }
            }
        };
        Ok(parsed)
    }
}
