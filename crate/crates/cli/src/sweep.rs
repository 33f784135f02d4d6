use std::str::FromStr;

use anyhow::{anyhow, bail, Context};
use serde::Serialize;

/// A list of real values: `x`, `x1,x2,…` or `lo:hi:steps` (inclusive, evenly
/// spaced, at least two steps).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub text: String,
    pub values: Vec<f64>,
}

impl Sweep {
    pub fn single(x: f64) -> Self {
        Self {
            text: x.to_string(),
            values: vec![x],
        }
    }
}

impl FromStr for Sweep {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        let text = s.trim().to_string();
        let values = if text.contains(':') {
            let parts: Vec<&str> = text.split(':').collect();
            let [lo, hi, steps] = parts[..] else {
                bail!("range '{text}' must look like lo:hi:steps");
            };
            let lo: f64 = parse_real(lo)?;
            let hi: f64 = parse_real(hi)?;
            let steps: usize = steps
                .trim()
                .parse()
                .with_context(|| format!("bad step count in '{text}'"))?;
            if steps < 2 {
                bail!("range '{text}' needs at least 2 steps");
            }
            if lo == hi {
                bail!("range '{text}' is empty");
            }
            strategic_queue::numeric::linspace(lo, hi, steps)
        } else {
            text.split(',')
                .map(parse_real)
                .collect::<anyhow::Result<Vec<_>>>()?
        };
        if values.is_empty() {
            bail!("empty sweep");
        }
        Ok(Self { text, values })
    }
}

fn parse_real(s: &str) -> anyhow::Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| anyhow!("'{s}' is not a number"))?;
    if !v.is_finite() {
        bail!("'{s}' is not finite");
    }
    Ok(v)
}

/// Staffing levels: `n`, `n1,n2,…` or `lo:hi` (inclusive, step 1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntSweep {
    pub text: String,
    pub values: Vec<usize>,
}

impl FromStr for IntSweep {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        let text = s.trim().to_string();
        let int = |t: &str| -> anyhow::Result<usize> {
            t.trim()
                .parse()
                .map_err(|_| anyhow!("'{t}' is not a staffing level"))
        };
        let values = match text.split_once(':') {
            Some((lo, hi)) => {
                let (lo, hi) = (int(lo)?, int(hi)?);
                if hi <= lo {
                    bail!("range '{text}' needs lo < hi");
                }
                (lo..=hi).collect()
            }
            None => text.split(',').map(int).collect::<anyhow::Result<Vec<_>>>()?,
        };
        Ok(Self { text, values })
    }
}
