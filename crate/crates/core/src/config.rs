//! Plain-text `key = value` experiment configuration.
//!
//! Files hold one assignment per line; `#` starts a comment. Keys not
//! present keep their defaults. [`ExperimentConfig::to_text`] writes every
//! key in a fixed order, so parsing its output gives back the same config.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::walk::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    ReturnProb,
    Folner,
    Coulhon,
    Partition,
    Percolation,
    Verify,
    Fit,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Self::ReturnProb,
        Self::Folner,
        Self::Coulhon,
        Self::Partition,
        Self::Percolation,
        Self::Verify,
        Self::Fit,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Self::ReturnProb => "return-prob",
            Self::Folner => "folner",
            Self::Coulhon => "coulhon",
            Self::Partition => "partition",
            Self::Percolation => "percolation",
            Self::Verify => "verify",
            Self::Fit => "fit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Ordinary wreath product over the line, fibers grown from `alpha`.
    Wreath,
    /// Generalized wreath product over the line, lamps shared by partition class.
    Genwreath,
    /// Percolation cluster of the origin.
    Cluster,
    Cycle,
    Line,
}

impl Family {
    pub const ALL: [Family; 5] = [Self::Wreath, Self::Genwreath, Self::Cluster, Self::Cycle, Self::Line];

    pub fn tag(self) -> &'static str {
        match self {
            Self::Wreath => "wreath",
            Self::Genwreath => "genwreath",
            Self::Cluster => "cluster",
            Self::Cycle => "cycle",
            Self::Line => "line",
        }
    }
}

macro_rules! tagged {
    ($t:ty, $what:literal) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.tag())
            }
        }

        impl FromStr for $t {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                Self::ALL
                    .into_iter()
                    .find(|c| c.tag() == s)
                    .ok_or_else(|| Error::InvalidParameter(format!(concat!("unknown ", $what, " {:?}"), s)))
            }
        }
    };
}

tagged!(Command, "command");
tagged!(Family, "family");

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub family: Family,
    pub alpha: f64,
    /// Exponent of the partition growth function `round(x^beta)`.
    pub beta: f64,
    /// Partition levels `S`; the built range is `[-2^S, 2^S]`.
    pub levels: u32,
    pub d: usize,
    pub p: f64,
    pub lambda: f64,
    pub n_grid: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    pub exact: bool,
    /// Estimator for Monte Carlo runs; `None` picks one per family.
    pub method: Option<Method>,
    /// Fiber size for the generalized product and the cycle length for `cycle`.
    pub fiber: u64,
    pub k_max: u64,
    pub clusters: usize,
    pub box_radius: i64,
    /// 0 means the rayon default.
    pub workers: usize,
    pub out: Option<String>,
    pub input: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            command: Command::ReturnProb,
            family: Family::Wreath,
            alpha: 1.0 / 3.0,
            beta: 0.5,
            levels: 16,
            d: 2,
            p: 0.7,
            lambda: 1.0,
            n_grid: vec![16],
            samples: 10_000,
            seed: 1,
            exact: false,
            method: None,
            fiber: 2,
            k_max: 10,
            clusters: 6,
            box_radius: 40,
            workers: 0,
            out: None,
            input: None,
        }
    }
}

const KEYS: [&str; 20] = [
    "command", "family", "alpha", "beta", "levels", "d", "p", "lambda", "n_grid", "samples", "seed", "exact", "method",
    "fiber", "k_max", "clusters", "box_radius", "workers", "out", "input",
];

fn bad(key: &str, value: &str, why: impl fmt::Display) -> Error {
    Error::InvalidParameter(format!("{key} = {value:?}: {why}"))
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

/// Parses `16,32,64` or a dyadic range `2^4..2^11`, or a mix of both.
pub fn parse_n_grid(value: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim) {
        if let Some((a, b)) = part.split_once("..") {
            let exp = |s: &str| -> Result<u32> {
                let e = s.trim().strip_prefix("2^").ok_or_else(|| bad("n_grid", part, "ranges are written 2^a..2^b"))?;
                let e: u32 = num("n_grid", e)?;
                if e > 40 {
                    return Err(bad("n_grid", part, "exponent above 40"));
                }
                Ok(e)
            };
            let (a, b) = (exp(a)?, exp(b)?);
            if a > b {
                return Err(bad("n_grid", part, "empty range"));
            }
            out.extend((a..=b).map(|e| 1usize << e));
        } else {
            out.push(num("n_grid", part)?);
        }
    }
    if out.is_empty() {
        return Err(bad("n_grid", value, "empty grid"));
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Sets one key from its textual value without validating the whole config.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let opt = |v: &str| if v.is_empty() { None } else { Some(v.to_string()) };
        match key {
            "command" => self.command = value.parse()?,
            "family" => self.family = value.parse()?,
            "alpha" => self.alpha = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "levels" => self.levels = num(key, value)?,
            "d" => self.d = num(key, value)?,
            "p" => self.p = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "n_grid" => self.n_grid = parse_n_grid(value)?,
            "samples" => self.samples = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "exact" => self.exact = num(key, value)?,
            "method" => self.method = if value.is_empty() { None } else { Some(value.parse()?) },
            "fiber" => self.fiber = num(key, value)?,
            "k_max" => self.k_max = num(key, value)?,
            "clusters" => self.clusters = num(key, value)?,
            "box_radius" => self.box_radius = num(key, value)?,
            "workers" => self.workers = num(key, value)?,
            "out" => self.out = opt(value),
            "input" => self.input = opt(value),
            _ => return Err(Error::InvalidParameter(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let range = |key: &str, ok: bool, v: String, want: &str| if ok { Ok(()) } else { Err(bad(key, &v, want)) };
        range("alpha", (0.0..=1.0).contains(&self.alpha), self.alpha.to_string(), "must lie in [0, 1]")?;
        range("beta", self.beta > 0.0 && self.beta <= 1.0, self.beta.to_string(), "must lie in (0, 1]")?;
        range("levels", (1..=30).contains(&self.levels), self.levels.to_string(), "must lie in 1..=30")?;
        range("d", (1..=3).contains(&self.d), self.d.to_string(), "must lie in 1..=3")?;
        range("p", self.p > 0.0 && self.p <= 1.0, self.p.to_string(), "must lie in (0, 1]")?;
        range("lambda", self.lambda >= 0.0 && self.lambda.is_finite(), self.lambda.to_string(), "must be finite and >= 0")?;
        range("samples", self.samples >= 1, self.samples.to_string(), "must be positive")?;
        range("fiber", self.fiber >= 1, self.fiber.to_string(), "must be positive")?;
        range("k_max", (1..=1 << 20).contains(&self.k_max), self.k_max.to_string(), "must lie in 1..=2^20")?;
        range("clusters", self.clusters >= 1, self.clusters.to_string(), "must be positive")?;
        range("box_radius", (1..=512).contains(&self.box_radius), self.box_radius.to_string(), "must lie in 1..=512")?;
        range("n_grid", !self.n_grid.is_empty(), String::new(), "must not be empty")?;
        for (key, v) in [("out", &self.out), ("input", &self.input)] {
            if let Some(v) = v {
                range(key, !v.contains(['\n', '#']) && v.trim() == v, v.clone(), "must be one line without '#' or surrounding spaces")?;
            }
        }
        Ok(())
    }

    /// Every key in a fixed order, one per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            s.push_str(key);
            s.push_str(" = ");
            s.push_str(&self.value_of(key));
            s.push('\n');
        }
        s
    }

    /// [`Self::to_text`] without the keys that cannot change results
    /// (`workers`, `out`).
    pub fn canonical_text(&self) -> String {
        self.to_text()
            .lines()
            .filter(|l| !l.starts_with("workers ") && !l.starts_with("out "))
            .map(|l| format!("{l}\n"))
            .collect()
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "command" => self.command.to_string(),
            "family" => self.family.to_string(),
            "alpha" => self.alpha.to_string(),
            "beta" => self.beta.to_string(),
            "levels" => self.levels.to_string(),
            "d" => self.d.to_string(),
            "p" => self.p.to_string(),
            "lambda" => self.lambda.to_string(),
            "n_grid" => self.n_grid.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","),
            "samples" => self.samples.to_string(),
            "seed" => self.seed.to_string(),
            "exact" => self.exact.to_string(),
            "method" => self.method.map(|m| m.to_string()).unwrap_or_default(),
            "fiber" => self.fiber.to_string(),
            "k_max" => self.k_max.to_string(),
            "clusters" => self.clusters.to_string(),
            "box_radius" => self.box_radius.to_string(),
            "workers" => self.workers.to_string(),
            "out" => self.out.clone().unwrap_or_default(),
            "input" => self.input.clone().unwrap_or_default(),
            _ => unreachable!("unknown key {key}"),
        }
    }
}

/// Parses a config file over the defaults. Unknown or repeated keys are
/// errors; the result is validated.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut seen: Vec<String> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = value".into()))?;
        let key = key.trim();
        if seen.iter().any(|k| k == key) {
            return Err(err(format!("duplicate key {key:?}")));
        }
        cfg.apply(key, value).map_err(|e| err(e.to_string()))?;
        seen.push(key.to_string());
    }
    cfg.validate()?;
    Ok(cfg)
}
