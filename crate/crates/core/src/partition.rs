//! Recursive dyadic partition of the integers with a prescribed number of
//! classes on every dyadic block.
//!
//! The partition is built on `[1, 2^S]` one doubling at a time: when
//! extending to `]2^s, 2^{s+1}]`, existing classes are ranked by decreasing
//! size (ties by ascending index) and `j` copies the class of `j - 2^s`
//! unless that class ranks among the first `g(2^{s+1}) - g(2^s)`, in which
//! case `j` opens the class `g(2^s) + rank`. Non-positive `j` take the class
//! of `1 - j`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Class-count target `g`, with `g(1) = 1`, non-decreasing and
/// `g(2n) <= 2 g(n)`. `g(0)` is taken as 0.
#[derive(Clone)]
pub struct GrowthFunction {
    name: String,
    f: Arc<dyn Fn(u64) -> u64 + Send + Sync>,
}

impl fmt::Debug for GrowthFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GrowthFunction({})", self.name)
    }
}

impl GrowthFunction {
    pub fn new(name: impl Into<String>, f: impl Fn(u64) -> u64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    /// `g(x) = max(1, round(x^beta))`.
    pub fn power(beta: f64) -> Self {
        Self::new(format!("round(x^{beta})"), move |x| {
            if x == 0 {
                0
            } else {
                ((x as f64).powf(beta) + 0.5).floor().max(1.0) as u64
            }
        })
    }

    pub fn identity() -> Self {
        Self::new("x", |x| x)
    }

    /// Tabulated values `g(1), g(2), ...`; beyond the table the last value repeats.
    pub fn table(values: Vec<u64>) -> Self {
        Self::new(format!("table{values:?}"), move |x| {
            if x == 0 {
                0
            } else {
                values[(x as usize - 1).min(values.len() - 1)]
            }
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: u64) -> u64 {
        if x == 0 {
            0
        } else {
            (self.f)(x)
        }
    }

    /// Checks `g(1) = 1`, monotonicity and doubling on `[1, upto]`.
    pub fn validate(&self, upto: u64) -> Result<()> {
        if self.eval(1) != 1 {
            return Err(Error::InvalidGrowth(format!("g(1) = {} (must be 1)", self.eval(1))));
        }
        let mut prev = 1;
        for x in 2..=upto {
            let v = self.eval(x);
            if v < prev {
                return Err(Error::InvalidGrowth(format!("g({x}) = {v} < g({}) = {prev}", x - 1)));
            }
            prev = v;
        }
        for x in 1..=upto / 2 {
            if self.eval(2 * x) > 2 * self.eval(x) {
                return Err(Error::InvalidGrowth(format!("g({}) > 2 g({x})", 2 * x)));
            }
        }
        Ok(())
    }
}

/// A class assignment on `[-2^S + 1, 2^S]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DyadicPartition {
    levels: u32,
    /// `classes[j - 1]` is the class of `j` for `j` in `[1, 2^S]`.
    classes: Vec<u32>,
    num_classes: u32,
}

impl DyadicPartition {
    pub fn build(g: &GrowthFunction, levels: u32) -> Result<Self> {
        if levels > 30 {
            return Err(Error::InvalidParameter(format!("levels {levels} too large")));
        }
        let top = 1u64 << levels;
        g.validate(top)?;
        let mut classes: Vec<u32> = vec![0];
        let mut sizes: Vec<u64> = vec![1];
        for s in 0..levels {
            let half = 1u64 << s;
            let (g_lo, g_hi) = (g.eval(half), g.eval(2 * half));
            let fresh = g_hi - g_lo;
            // Rank: decreasing size, ties by ascending index.
            let mut order: Vec<u32> = (0..sizes.len() as u32).collect();
            order.sort_by(|a, b| sizes[*b as usize].cmp(&sizes[*a as usize]).then(a.cmp(b)));
            let mut rank = vec![0u64; sizes.len()];
            for (k, c) in order.iter().enumerate() {
                rank[*c as usize] = k as u64 + 1;
            }
            sizes.resize(g_hi as usize, 0);
            for j in half + 1..=2 * half {
                let src = classes[(j - half - 1) as usize];
                let k = rank[src as usize];
                let c = if k > fresh { src } else { (g_lo + k - 1) as u32 };
                classes.push(c);
                sizes[c as usize] += 1;
            }
        }
        let num_classes = sizes.len() as u32;
        Ok(Self {
            levels,
            classes,
            num_classes,
        })
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn lo(&self) -> i64 {
        1 - (1i64 << self.levels)
    }

    pub fn hi(&self) -> i64 {
        1i64 << self.levels
    }

    pub fn class_of(&self, j: i64) -> Result<u32> {
        if j < self.lo() || j > self.hi() {
            return Err(Error::OutOfRange {
                what: "partition index",
                value: j,
                lo: self.lo(),
                hi: self.hi(),
            });
        }
        let k = if j >= 1 { j } else { 1 - j };
        Ok(self.classes[(k - 1) as usize])
    }

    /// Statistics of the closed window `[lo, hi]`.
    pub fn window_stats(&self, lo: i64, hi: i64) -> Result<WindowStats> {
        if hi < lo {
            return Err(Error::InvalidParameter(format!("empty window [{lo}, {hi}]")));
        }
        self.class_of(lo)?;
        self.class_of(hi)?;
        let mut sizes = BTreeMap::new();
        for j in lo..=hi {
            *sizes.entry(self.class_of(j)?).or_insert(0u64) += 1;
        }
        Ok(WindowStats { lo, hi, sizes })
    }

    /// Text table `j<TAB>class`, one line per index of the covered range.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for j in self.lo()..=self.hi() {
            out.push_str(&format!("{j}\t{}\n", self.class_of(j).expect("in range")));
        }
        out
    }

    /// Parses a [`dump`](Self::dump) table. The table must cover exactly
    /// `[-2^S + 1, 2^S]` in order and respect the reflection rule.
    pub fn load(text: &str) -> Result<Self> {
        let mut rows: Vec<(i64, u32)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split('\t');
            let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "expected `j<TAB>class`".into(),
                });
            };
            let j = a.trim().parse::<i64>().map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
            let c = b.trim().parse::<u32>().map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
            rows.push((j, c));
        }
        let n = rows.len();
        if n < 2 || !n.is_power_of_two() || n > (1 << 31) {
            return Err(Error::Parse {
                line: 0,
                msg: format!("table has {n} rows, expected 2^(S+1)"),
            });
        }
        let top = (n / 2) as i64;
        let levels = top.trailing_zeros();
        for (k, (j, _)) in rows.iter().enumerate() {
            if *j != 1 - top + k as i64 {
                return Err(Error::Parse {
                    line: k + 1,
                    msg: format!("index {j} out of sequence"),
                });
            }
        }
        let classes: Vec<u32> = rows[top as usize..].iter().map(|r| r.1).collect();
        for (k, (j, c)) in rows[..top as usize].iter().enumerate() {
            if classes[(1 - j - 1) as usize] != *c {
                return Err(Error::Parse {
                    line: k + 1,
                    msg: format!("index {j} breaks the reflection rule"),
                });
            }
        }
        let num_classes = classes.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; num_classes as usize];
        for c in &classes {
            seen[*c as usize] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Parse {
                line: 0,
                msg: "class indices are not dense".into(),
            });
        }
        Ok(Self {
            levels,
            classes,
            num_classes,
        })
    }
}

/// Class sizes within a closed window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowStats {
    pub lo: i64,
    pub hi: i64,
    pub sizes: BTreeMap<u32, u64>,
}

impl WindowStats {
    /// Number of classes meeting the window.
    pub fn class_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn max_ratio(&self) -> f64 {
        let max = self.sizes.values().max().copied().unwrap_or(1);
        let min = self.sizes.values().min().copied().unwrap_or(1);
        max as f64 / min as f64
    }

    /// Sorted multiset of class sizes.
    pub fn size_profile(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self.sizes.values().copied().collect();
        v.sort_unstable();
        v
    }
}

/// Incremental class counter used by the window scans.
struct Counter {
    count: Vec<u64>,
    by_size: BTreeMap<u64, usize>,
}

impl Counter {
    fn new(classes: u32) -> Self {
        Self {
            count: vec![0; classes as usize],
            by_size: BTreeMap::new(),
        }
    }

    fn add(&mut self, c: u32) {
        let old = self.count[c as usize];
        if old > 0 {
            let e = self.by_size.get_mut(&old).expect("tracked size");
            *e -= 1;
            if *e == 0 {
                self.by_size.remove(&old);
            }
        }
        self.count[c as usize] = old + 1;
        *self.by_size.entry(old + 1).or_insert(0) += 1;
    }

    fn classes(&self) -> usize {
        self.by_size.values().sum()
    }

    fn ratio(&self) -> f64 {
        match (self.by_size.keys().next(), self.by_size.keys().next_back()) {
            (Some(lo), Some(hi)) => *hi as f64 / *lo as f64,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioReport {
    pub windows: u64,
    /// Largest `S_i / S_j` over scanned half-open windows `[k, k + m[`.
    pub max_ratio: f64,
    pub worst: (i64, u64),
    /// Largest ratio on dyadic blocks `[A 2^s + 1, (A + 1) 2^s]`.
    pub max_dyadic_ratio: f64,
}

impl RatioReport {
    pub fn passes(&self) -> bool {
        self.max_ratio <= 10.0 && self.max_dyadic_ratio <= 2.0
    }
}

/// Scans half-open windows `[k, k + m[` for `|k| <= k_max`, `1 <= m <= m_max`,
/// plus every dyadic block of the built range.
pub fn check_ratio(p: &DyadicPartition, k_max: i64, m_max: u64) -> Result<RatioReport> {
    let mut windows = 0;
    let mut max_ratio = 1.0f64;
    let mut worst = (0, 0);
    for k in -k_max..=k_max {
        let mut ctr = Counter::new(p.num_classes());
        for m in 1..=m_max {
            ctr.add(p.class_of(k + m as i64 - 1)?);
            windows += 1;
            let r = ctr.ratio();
            if r > max_ratio {
                max_ratio = r;
                worst = (k, m);
            }
        }
    }
    let mut max_dyadic_ratio = 1.0f64;
    for s in 0..=p.levels() {
        let len = 1i64 << s;
        let mut a = p.lo().div_euclid(len);
        while a * len + 1 >= p.lo() && (a + 1) * len <= p.hi() {
            let w = p.window_stats(a * len + 1, (a + 1) * len)?;
            max_dyadic_ratio = max_dyadic_ratio.max(w.max_ratio());
            a += 1;
        }
    }
    Ok(RatioReport {
        windows,
        max_ratio,
        worst,
        max_dyadic_ratio,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub windows: u64,
    /// Windows violating `g(floor(m/4)) <= N(k, k+m) <= 2 g(2m)`.
    pub violations: Vec<(i64, u64, u64)>,
    /// `N(1, 2^s) == g(2^s)` for every level.
    pub dyadic_exact: bool,
    pub min_lower_slack: i64,
    pub min_upper_slack: i64,
}

impl GrowthReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty() && self.dyadic_exact
    }
}

/// Checks the class-count bounds on closed windows `[k, k + m]`.
pub fn check_growth_bounds(p: &DyadicPartition, g: &GrowthFunction, k_max: i64, m_max: u64) -> Result<GrowthReport> {
    let dyadic_exact = (0..=p.levels()).all(|s| {
        p.window_stats(1, 1 << s)
            .map(|w| w.class_count() as u64 == g.eval(1 << s))
            .unwrap_or(false)
    });
    let mut violations = Vec::new();
    let mut windows = 0;
    let (mut lo_slack, mut hi_slack) = (i64::MAX, i64::MAX);
    for k in -k_max..=k_max {
        let mut ctr = Counter::new(p.num_classes());
        ctr.add(p.class_of(k)?);
        for m in 1..=m_max {
            ctr.add(p.class_of(k + m as i64)?);
            windows += 1;
            let n = ctr.classes() as u64;
            let (lo, hi) = (g.eval(m / 4), 2 * g.eval(2 * m));
            lo_slack = lo_slack.min(n as i64 - lo as i64);
            hi_slack = hi_slack.min(hi as i64 - n as i64);
            if n < lo || n > hi {
                violations.push((k, m, n));
            }
        }
    }
    Ok(GrowthReport {
        windows,
        violations,
        dyadic_exact,
        min_lower_slack: lo_slack,
        min_upper_slack: hi_slack,
    })
}
