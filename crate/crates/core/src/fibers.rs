//! Cyclic fibers `Z/l(z)Z` and return probabilities of the lazy walk on them.
//!
//! Fiber sizes follow the growth profile `F(x) = exp(x^beta)` with
//! `beta = 2 alpha / (1 - alpha)`: `l(z) = F(|z| + 1) / F(|z|)`, rounded
//! half-up and clamped below at 2.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::graph::cycle_degree;
use crate::prob::Prob;

/// Default cap on a single fiber size.
pub const DEFAULT_SIZE_LIMIT: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthProfile {
    pub alpha: f64,
    pub beta: f64,
}

impl GrowthProfile {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!("alpha must lie in [0, 1), got {alpha}")));
        }
        Ok(Self {
            alpha,
            beta: 2.0 * alpha / (1.0 - alpha),
        })
    }

    /// `ln F(x) = x^beta`, with `F(0) = 1`.
    pub fn log_f(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            x.powf(self.beta)
        }
    }

    pub fn f(&self, x: f64) -> f64 {
        self.log_f(x).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FiberRule {
    Profile(GrowthProfile),
    Constant(u64),
    /// Explicit sizes per site, `default` elsewhere.
    Table { sizes: BTreeMap<i64, u64>, default: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiberFamily {
    pub rule: FiberRule,
    pub limit: u64,
}

impl FiberFamily {
    pub fn from_alpha(alpha: f64) -> Result<Self> {
        Ok(Self {
            rule: FiberRule::Profile(GrowthProfile::new(alpha)?),
            limit: DEFAULT_SIZE_LIMIT,
        })
    }

    pub fn constant(l: u64) -> Self {
        assert!(l >= 1, "fiber size must be positive");
        Self {
            rule: FiberRule::Constant(l),
            limit: DEFAULT_SIZE_LIMIT,
        }
    }

    pub fn table(sizes: BTreeMap<i64, u64>, default: u64) -> Self {
        Self {
            rule: FiberRule::Table { sizes, default },
            limit: DEFAULT_SIZE_LIMIT,
        }
    }

    pub fn with_limit(mut self, limit: u64) -> Self {
        self.limit = limit;
        self
    }

    fn log_ratio(p: &GrowthProfile, z: i64) -> f64 {
        let a = z.unsigned_abs() as f64;
        p.log_f(a + 1.0) - p.log_f(a)
    }

    pub fn fiber_size(&self, z: i64) -> Result<u64> {
        match &self.rule {
            FiberRule::Constant(l) => Ok(*l),
            FiberRule::Table { sizes, default } => Ok(*sizes.get(&z).unwrap_or(default)),
            FiberRule::Profile(p) => {
                let lr = Self::log_ratio(p, z);
                if lr > (self.limit as f64).ln() {
                    return Err(Error::Overflow { site: z, limit: self.limit });
                }
                Ok(((lr.exp() + 0.5).floor() as u64).max(2))
            }
        }
    }

    /// `min(fiber_size(z), cap)`, never failing. Cycles longer than the
    /// number of steps taken cannot wrap, so all sizes `>= cap` behave alike
    /// once `cap` exceeds the step horizon.
    pub fn saturated_size(&self, z: i64, cap: u64) -> u64 {
        match &self.rule {
            FiberRule::Profile(p) if Self::log_ratio(p, z) > (cap as f64).ln() + 1.0 => cap,
            _ => self.fiber_size(z).map(|l| l.min(cap)).unwrap_or(cap),
        }
    }
}

/// `P(Y_m = 0)` for the lazy walk on the `l`-cycle started at 0, by DP.
pub fn fiber_return_prob<P: Prob>(l: u64, m: u64) -> P {
    if l == 1 {
        return P::one();
    }
    let l = l as usize;
    let w = P::recip_of(cycle_degree(l as u64) + 1);
    let mut cur = vec![P::zero(); l];
    cur[0] = P::one();
    for _ in 0..m {
        let mut next = vec![P::zero(); l];
        for (v, p) in cur.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            let q = p.clone() * w.clone();
            next[v] += q.clone();
            if l == 2 {
                next[1 - v] += q;
            } else {
                next[(v + 1) % l] += q.clone();
                next[(v + l - 1) % l] += q;
            }
        }
        cur = next;
    }
    cur.swap_remove(0)
}

/// Spectral form `(1/l) sum_k lambda_k^m` of [`fiber_return_prob`].
pub fn fiber_return_spectral(l: u64, m: u64) -> f64 {
    match l {
        1 => 1.0,
        2 => {
            if m == 0 {
                1.0
            } else {
                0.5
            }
        }
        _ => {
            let lf = l as f64;
            (0..l)
                .map(|k| ((1.0 + 2.0 * (2.0 * PI * k as f64 / lf).cos()) / 3.0).powi(m as i32))
                .sum::<f64>()
                / lf
        }
    }
}

/// Memoized return-probability tables over `m in 0..=m_max`.
#[derive(Debug, Clone)]
pub struct FiberTables {
    m_max: u64,
    tables: BTreeMap<u64, Vec<f64>>,
}

impl FiberTables {
    pub fn new(m_max: u64) -> Self {
        Self {
            m_max,
            tables: BTreeMap::new(),
        }
    }

    /// Sizes at or above this value share one table.
    pub fn cap(&self) -> u64 {
        self.m_max + 1
    }

    pub fn m_max(&self) -> u64 {
        self.m_max
    }

    pub fn ensure(&mut self, l: u64) {
        let key = l.min(self.cap());
        if self.tables.contains_key(&key) {
            return;
        }
        let table = if key == self.cap() {
            line_return_table(self.m_max)
        } else {
            cycle_return_table(key, self.m_max)
        };
        self.tables.insert(key, table);
    }

    /// Looks up `P(Y_m = 0)` on the `l`-cycle. Panics if `l` was never
    /// [`ensure`](Self::ensure)d or `m > m_max`.
    pub fn get(&self, l: u64, m: u64) -> f64 {
        if l == 1 || m == 0 {
            return 1.0;
        }
        self.tables[&l.min(self.cap())][m as usize]
    }

    pub fn sizes(&self) -> impl Iterator<Item = &u64> {
        self.tables.keys()
    }
}

fn cycle_return_table(l: u64, m_max: u64) -> Vec<f64> {
    let l = l as usize;
    let mut out = Vec::with_capacity(m_max as usize + 1);
    if l == 1 {
        return vec![1.0; m_max as usize + 1];
    }
    let w = 1.0 / (cycle_degree(l as u64) + 1) as f64;
    let mut cur = vec![0.0; l];
    cur[0] = 1.0;
    out.push(1.0);
    for _ in 0..m_max {
        let mut next = vec![0.0; l];
        for v in 0..l {
            let q = cur[v] * w;
            next[v] += q;
            if l == 2 {
                next[1 - v] += q;
            } else {
                next[(v + 1) % l] += q;
                next[(v + l - 1) % l] += q;
            }
        }
        cur = next;
        out.push(cur[0]);
    }
    out
}

fn line_return_table(m_max: u64) -> Vec<f64> {
    let width = 2 * m_max as usize + 1;
    let mid = m_max as usize;
    let mut cur = vec![0.0; width];
    cur[mid] = 1.0;
    let mut out = vec![1.0];
    for step in 1..=m_max as usize {
        let mut next = vec![0.0; width];
        for v in mid - (step - 1)..=mid + (step - 1) {
            let q = cur[v] / 3.0;
            next[v] += q;
            next[v - 1] += q;
            next[v + 1] += q;
        }
        cur = next;
        out.push(cur[mid]);
    }
    out
}

/// Per-size outcome of [`fiber_return_lower_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct FiberCheck {
    pub size: u64,
    /// `P(Y_n = 0) >= 1/l` for every `n <= n_max`.
    pub floor_holds: bool,
    pub min_excess: f64,
    pub monotone: bool,
    /// Fitted exponential rate of `P(Y_n = 0) - 1/l`, when it is visible.
    pub decay_rate: Option<f64>,
    /// `-ln` of the second-largest eigenvalue modulus of the lazy cycle.
    pub spectral_rate: Option<f64>,
}

/// Checks the stationary floor and monotone decay of fiber return
/// probabilities for every distinct size on sites `|z| <= z_max`.
pub fn fiber_return_lower_check(fam: &FiberFamily, z_max: i64, n_max: u64) -> Result<Vec<FiberCheck>> {
    let mut sizes: Vec<u64> = Vec::new();
    for z in 0..=z_max {
        let l = fam.fiber_size(z)?;
        if !sizes.contains(&l) {
            sizes.push(l);
        }
    }
    sizes.sort_unstable();
    Ok(sizes.into_iter().map(|l| check_size(l, n_max)).collect())
}

fn check_size(l: u64, n_max: u64) -> FiberCheck {
    let table = cycle_return_table(l, n_max);
    let floor = 1.0 / l as f64;
    let mut min_excess = f64::INFINITY;
    let mut monotone = true;
    for (n, p) in table.iter().enumerate() {
        min_excess = min_excess.min(p - floor);
        if n > 0 && *p > table[n - 1] + 1e-15 {
            monotone = false;
        }
    }
    // Tail fit of ln(P_n - 1/l) against n.
    let pts: Vec<(f64, f64)> = table
        .iter()
        .enumerate()
        .skip(n_max as usize / 2)
        .filter(|(_, p)| **p - floor > 1e-12)
        .map(|(n, p)| (n as f64, (p - floor).ln()))
        .collect();
    let decay_rate = (pts.len() >= 3).then(|| -least_squares_slope(&pts));
    let spectral_rate = (l >= 3).then(|| {
        let lam = (1..l)
            .map(|k| ((1.0 + 2.0 * (2.0 * PI * k as f64 / l as f64).cos()) / 3.0).abs())
            .fold(0.0f64, f64::max);
        -lam.ln()
    });
    FiberCheck {
        size: l,
        floor_holds: min_excess >= -1e-12,
        min_excess,
        monotone,
        decay_rate,
        spectral_rate,
    }
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
