use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, WalkRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExactDp,
    NaiveMc,
    Fait0Mc,
    Fait0Bridge,
    /// Range-stratified importance sampling (see [`crate::walk::strata`]).
    Fait0Range,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Self::ExactDp => "exact-dp",
            Self::NaiveMc => "naive-mc",
            Self::Fait0Mc => "fait0-mc",
            Self::Fait0Bridge => "fait0-bridge",
            Self::Fait0Range => "fait0-range",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Self::ExactDp, Self::NaiveMc, Self::Fait0Mc, Self::Fait0Bridge, Self::Fait0Range]
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

/// One return-probability estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnEstimate {
    pub n: u64,
    pub estimate: f64,
    pub stderr: f64,
    pub method: Method,
    pub samples: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl ReturnEstimate {
    pub fn exact(n: u64, value: f64) -> Self {
        Self {
            n,
            estimate: value,
            stderr: 0.0,
            method: Method::ExactDp,
            samples: 0,
            seed: 0,
            config_hash: None,
        }
    }

    pub fn from_stats(n: u64, stats: &Welford, method: Method, seed: u64) -> Self {
        Self {
            n,
            estimate: stats.mean(),
            stderr: stats.stderr(),
            method,
            samples: stats.count(),
            seed,
            config_hash: None,
        }
    }

    pub fn with_hash(mut self, hash: impl Into<String>) -> Self {
        self.config_hash = Some(hash.into());
        self
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("estimate serializes")
    }
}

/// Parses JSON-lines estimate records, skipping blank lines.
pub fn parse_estimates(text: &str) -> Result<Vec<ReturnEstimate>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: ReturnEstimate = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if !e.estimate.is_finite() || !(0.0..=1.0).contains(&e.estimate) || !(e.stderr >= 0.0) {
            return Err(Error::Parse {
                line: i + 1,
                msg: "estimate outside [0, 1] or negative stderr".into(),
            });
        }
        out.push(e);
    }
    Ok(out)
}

/// Running mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * self.n as f64 * other.n as f64 / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Draws `samples` values of `f` in fixed chunks, chunk `i` seeded from
/// stream `i` of `seed`, and merges the chunk statistics in chunk order.
/// The result does not depend on the number of worker threads.
pub fn run_chunks<F>(samples: usize, seed: u64, f: F) -> Result<Welford>
where
    F: Fn(&mut WalkRng, usize) -> Result<Vec<f64>> + Sync,
{
    let parts: Vec<Result<Welford>> = rng::chunks(samples)
        .into_par_iter()
        .map(|(idx, len)| {
            let mut r = rng::stream(seed, idx);
            let mut w = Welford::new();
            for x in f(&mut r, len)? {
                w.push(x);
            }
            Ok(w)
        })
        .collect();
    let mut total = Welford::new();
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

/// [`run_chunks`] for a per-sample closure.
pub fn run_samples<F>(samples: usize, seed: u64, f: F) -> Result<Welford>
where
    F: Fn(&mut WalkRng) -> Result<f64> + Sync,
{
    run_chunks(samples, seed, |r, len| (0..len).map(|_| f(r)).collect())
}
