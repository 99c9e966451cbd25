//! Fiber factorization of wreath-product return probabilities.
//!
//! For the switch-walk-switch chain `Z` started at `o = (0, f_0)`,
//!
//! `P(Z_n = o) = E[ prod_x P(Y^{l(x)}_{m_x} = 0) ; X_n = 0 ]`
//!
//! where `X` is the simple random walk on the base and `m_x` is the number
//! of lamp moves made at `x`. The lazy walk on the wreath graph itself
//! factorizes the same way once its holding steps are read as lamp moves;
//! [`Dynamics::Lazy`] selects that reading.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::fibers::{fiber_return_prob, FiberFamily, FiberTables};
use crate::graph::{cycle_degree, sample_step, AdjacencyGraph, Graph, IntegerLine, Site};
use crate::prob::Prob;
use crate::walk::estimate::{run_samples, Method, ReturnEstimate, Welford};
use crate::walk::product::{exact_product_return, product_step, ProductKernel};
use crate::walk::strata;
use crate::wreath::{LampLayout, WreathGraph, WreathVertex};

/// Default state budget for exact DP.
pub const DEFAULT_BUDGET: usize = 4_000_000;

/// Candidate rules turning a base path's local times into lamp step counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Convention {
    /// `m_x = L_{x,n}`.
    LocalTime,
    /// `m_x = L_{x,n} - 1{x = X_n}`, the departures from `x`.
    VisitsBeforeEnd,
    /// `m_x = 2 L_{x,n}`.
    DoubleLocalTime,
    /// `m_x = 2 L_{x,n} - 1{x = X_0} - 1{x = X_n}`.
    DeparturesPlusArrivals,
}

impl Convention {
    pub const ALL: [Convention; 4] = [
        Self::LocalTime,
        Self::VisitsBeforeEnd,
        Self::DoubleLocalTime,
        Self::DeparturesPlusArrivals,
    ];

    pub fn count(self, local: u64, is_start: bool, is_end: bool) -> u64 {
        match self {
            Self::LocalTime => local,
            Self::VisitsBeforeEnd => local - is_end as u64,
            Self::DoubleLocalTime => 2 * local,
            Self::DeparturesPlusArrivals => 2 * local - is_start as u64 - is_end as u64,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Self::LocalTime => "local-time",
            Self::VisitsBeforeEnd => "visits-before-end",
            Self::DoubleLocalTime => "double-local-time",
            Self::DeparturesPlusArrivals => "departures-plus-arrivals",
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.tag() == s)
            .ok_or_else(|| Error::InvalidConvention(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dynamics {
    /// The product chain `Z`: lamp move, non-lazy base move, lamp move.
    SwitchWalkSwitch,
    /// The lazy walk on the wreath graph.
    Lazy,
}

/// One base transition together with the lamps it moves.
#[derive(Debug, Clone)]
pub(crate) struct Move<V> {
    pub to: V,
    pub num: u64,
    pub den: u64,
    pub bumps: [Option<i64>; 2],
}

/// Number of lamp moves worth tracking exactly: `P(Y^l_m = 0)` is constant
/// for `m >= 1` when `l <= 3`.
fn count_cap(l: u64) -> u64 {
    match l {
        1 => 0,
        2 | 3 => 1,
        _ => u64::MAX,
    }
}

/// A wreath product over `base` together with the dynamics to factorize.
#[derive(Debug, Clone)]
pub struct Fait0Model<G> {
    pub base: G,
    pub lamps: LampLayout,
    pub dynamics: Dynamics,
}

impl<G: Graph> Fait0Model<G>
where
    G::Vertex: Site,
{
    pub fn new(base: G, lamps: LampLayout, dynamics: Dynamics) -> Self {
        Self { base, lamps, dynamics }
    }

    /// Fiber length of `lamp`, with every size above `cap` folded onto `cap`.
    pub(crate) fn len_capped(&self, lamp: i64, cap: u64) -> u64 {
        self.lamps.fiber_len_capped(lamp, cap)
    }

    /// Lamp-count horizon after `n` steps; fibers longer than this cannot wrap.
    pub(crate) fn horizon(&self, n: usize) -> u64 {
        match self.dynamics {
            Dynamics::SwitchWalkSwitch => 2 * n as u64,
            Dynamics::Lazy => n as u64,
        }
    }

    pub(crate) fn moves(&self, x: &G::Vertex, cap: u64) -> Result<Vec<Move<G::Vertex>>> {
        let nb = self.base.neighbors(x)?;
        let here = self.lamps.lamp_of(x.site())?;
        match self.dynamics {
            Dynamics::SwitchWalkSwitch => {
                if nb.is_empty() {
                    return Err(Error::IsolatedVertex);
                }
                let d = nb.len() as u64;
                nb.into_iter()
                    .map(|y| {
                        let there = self.lamps.lamp_of(y.site())?;
                        Ok(Move { to: y, num: 1, den: d, bumps: [Some(here), Some(there)] })
                    })
                    .collect()
            }
            Dynamics::Lazy => {
                let fd = cycle_degree(self.len_capped(here, cap));
                let d = nb.len() as u64 + fd + 1;
                let mut out = vec![Move { to: x.clone(), num: fd + 1, den: d, bumps: [Some(here), None] }];
                out.extend(nb.into_iter().map(|y| Move { to: y, num: 1, den: d, bumps: [None, None] }));
                Ok(out)
            }
        }
    }

    /// Exact return probability by DP over `(position, lamp counts)`, with
    /// counts saturated where the fiber factor stops depending on them.
    pub fn exact_return<P: Prob>(&self, origin: &G::Vertex, n: usize, budget: usize) -> Result<P> {
        let cap = self.horizon(n) + 3;
        type State<V> = (V, Vec<(i64, u64)>);
        let mut cur: BTreeMap<State<G::Vertex>, P> = BTreeMap::new();
        cur.insert((origin.clone(), Vec::new()), P::one());
        let mut lens: HashMap<i64, u64> = HashMap::new();
        let mut len_of = |lamp: i64| *lens.entry(lamp).or_insert_with(|| self.len_capped(lamp, cap));
        for _ in 0..n {
            let mut next: BTreeMap<State<G::Vertex>, P> = BTreeMap::new();
            for ((x, counts), p) in &cur {
                for mv in self.moves(x, cap)? {
                    let mut c = counts.clone();
                    for lamp in mv.bumps.iter().flatten() {
                        let sat = count_cap(len_of(*lamp));
                        if sat == 0 {
                            continue;
                        }
                        match c.binary_search_by_key(lamp, |e| e.0) {
                            Ok(i) => c[i].1 = (c[i].1 + 1).min(sat),
                            Err(i) => c.insert(i, (*lamp, 1)),
                        }
                    }
                    *next.entry((mv.to, c)).or_insert_with(P::zero) += p.clone() * P::ratio(mv.num, mv.den);
                    if next.len() > budget {
                        return Err(Error::BudgetExceeded { budget });
                    }
                }
            }
            cur = next;
        }
        let mut memo: HashMap<(u64, u64), P> = HashMap::new();
        let mut total = P::zero();
        for ((x, counts), p) in cur {
            if &x != origin {
                continue;
            }
            let mut term = p;
            for (lamp, m) in counts {
                let l = len_of(lamp);
                term = term * memo.entry((l, m)).or_insert_with(|| fiber_return_prob::<P>(l, m)).clone();
            }
            total += term;
        }
        Ok(total)
    }

    /// Monte Carlo of the full chain, counting returns to `o`.
    pub fn naive_estimate(&self, origin: &G::Vertex, n: usize, samples: usize, seed: u64) -> Result<ReturnEstimate> {
        let o = WreathVertex::origin(origin.clone());
        let stats = match self.dynamics {
            Dynamics::SwitchWalkSwitch => {
                let k = ProductKernel::new(&self.base, self.lamps.clone());
                run_samples(samples, seed, |r| {
                    let mut v = o.clone();
                    for _ in 0..n {
                        v = product_step(&k, &v, r)?;
                    }
                    Ok((v == o) as u8 as f64)
                })?
            }
            Dynamics::Lazy => {
                let w = WreathGraph { base: &self.base, lamps: self.lamps.clone() };
                run_samples(samples, seed, |r| {
                    let mut v = o.clone();
                    for _ in 0..n {
                        v = sample_step(&w, &v, r)?;
                    }
                    Ok((v == o) as u8 as f64)
                })?
            }
        };
        Ok(ReturnEstimate::from_stats(n as u64, &stats, Method::NaiveMc, seed))
    }

    /// Plain fiber-factorized Monte Carlo on any base: simulate the base
    /// skeleton and average `prod_x P(Y_{m_x} = 0) 1{X_n = 0}`.
    pub fn plain_estimate(&self, origin: &G::Vertex, n: usize, samples: usize, seed: u64) -> Result<ReturnEstimate> {
        let cap = self.horizon(n) + 3;
        let mut tables = FiberTables::new(self.horizon(n));
        for l in [1, 2, 3, cap] {
            tables.ensure(l);
        }
        let stats = run_samples(samples, seed, |r| {
            let mut counts: HashMap<i64, u64> = HashMap::new();
            let mut x = origin.clone();
            for _ in 0..n {
                let mv = self.moves(&x, cap)?;
                let u = r.gen_range(0..mv[0].den);
                let mut acc = 0;
                let pick = mv
                    .into_iter()
                    .find(|m| {
                        acc += m.num;
                        u < acc
                    })
                    .expect("move weights sum to the denominator");
                for lamp in pick.bumps.iter().flatten() {
                    *counts.entry(*lamp).or_insert(0) += 1;
                }
                x = pick.to;
            }
            if &x != origin {
                return Ok(0.0);
            }
            let mut v = 1.0;
            for (lamp, m) in counts {
                let l = self.len_capped(lamp, cap);
                v *= if l <= 3 || l == cap {
                    tables.get(l, m)
                } else {
                    fiber_return_prob::<f64>(l, m)
                };
            }
            Ok(v)
        })?;
        Ok(ReturnEstimate::from_stats(n as u64, &stats, Method::Fait0Mc, seed))
    }
}

/// The factorized side read literally: enumerate base paths of the simple
/// random walk, derive each lamp's step count from local times by `conv`,
/// and sum path probability times fiber factors over returning paths.
pub fn fait0_rhs_exact<G, P>(base: &G, lamps: &LampLayout, origin: &G::Vertex, n: usize, conv: Convention, budget: usize) -> Result<P>
where
    G: Graph,
    G::Vertex: Site,
    P: Prob,
{
    struct Walk<'a, G: Graph, P> {
        base: &'a G,
        lamps: &'a LampLayout,
        origin: &'a G::Vertex,
        n: usize,
        conv: Convention,
        budget: usize,
        paths: usize,
        local: BTreeMap<G::Vertex, u64>,
        acc: P,
    }

    impl<G: Graph, P: Prob> Walk<'_, G, P>
    where
        G::Vertex: Site,
    {
        fn go(&mut self, x: &G::Vertex, depth: usize, prob: P) -> Result<()> {
            if depth == self.n {
                self.paths += 1;
                if self.paths > self.budget {
                    return Err(Error::BudgetExceeded { budget: self.budget });
                }
                if x != self.origin {
                    return Ok(());
                }
                let mut per_lamp: BTreeMap<i64, u64> = BTreeMap::new();
                for (v, &l) in &self.local {
                    let m = self.conv.count(l, v == self.origin, v == x);
                    *per_lamp.entry(self.lamps.lamp_of(v.site())?).or_insert(0) += m;
                }
                let mut term = prob;
                for (lamp, m) in per_lamp {
                    term = term * fiber_return_prob::<P>(self.lamps.fiber_len(lamp)?, m);
                }
                self.acc += term;
                return Ok(());
            }
            let nb = self.base.neighbors(x)?;
            if nb.is_empty() {
                return Err(Error::IsolatedVertex);
            }
            let step = P::recip_of(nb.len() as u64);
            for y in nb {
                *self.local.entry(y.clone()).or_insert(0) += 1;
                self.go(&y, depth + 1, prob.clone() * step.clone())?;
                let e = self.local.get_mut(&y).expect("just visited");
                *e -= 1;
                if *e == 0 {
                    self.local.remove(&y);
                }
            }
            Ok(())
        }
    }

    let mut w = Walk {
        base,
        lamps,
        origin,
        n,
        conv,
        budget,
        paths: 0,
        local: BTreeMap::from([(origin.clone(), 1)]),
        acc: P::zero(),
    };
    w.go(origin, 0, P::one())?;
    Ok(w.acc)
}

/// A tiny instance for convention calibration.
#[derive(Debug, Clone)]
pub struct CalibrationInstance {
    pub name: String,
    pub base: AdjacencyGraph,
    pub lamps: FiberFamily,
    pub origin: usize,
    pub n: usize,
}

/// Bases: single edge, `P_3` (from an end and from the middle), 4-cycle.
/// Fibers: sizes 1, 2, 3 and a mixed table of those sizes. Times `0..=6`.
///
/// For sizes up to 3 the fiber factor only sees whether a lamp moved at
/// all, so these instances cannot separate conventions that agree on which
/// lamps move; [`discriminating_battery`] adds longer fibers for that.
pub fn default_battery() -> Vec<CalibrationInstance> {
    battery(&[
        ("l1", FiberFamily::constant(1)),
        ("l2", FiberFamily::constant(2)),
        ("l3", FiberFamily::constant(3)),
        ("mixed", FiberFamily::table([(0, 3), (1, 2), (2, 1)].into_iter().collect(), 3)),
    ])
}

/// [`default_battery`] plus fibers of sizes 4 and 5, whose return
/// probabilities depend on the exact number of moves.
pub fn discriminating_battery() -> Vec<CalibrationInstance> {
    let mut out = default_battery();
    out.extend(battery(&[
        ("l4", FiberFamily::constant(4)),
        ("mixed45", FiberFamily::table([(0, 4), (1, 5), (2, 3)].into_iter().collect(), 2)),
    ]));
    out
}

fn battery(fibers: &[(&str, FiberFamily)]) -> Vec<CalibrationInstance> {
    let bases = [
        ("edge", AdjacencyGraph::path(2), 0),
        ("p3-end", AdjacencyGraph::path(3), 0),
        ("p3-mid", AdjacencyGraph::path(3), 1),
        ("c4", AdjacencyGraph::cycle(4), 0),
    ];
    let mut out = Vec::new();
    for (bn, g, o) in &bases {
        for (fname, fam) in fibers {
            for n in 0..=6 {
                out.push(CalibrationInstance {
                    name: format!("{bn}/{fname}/n{n}"),
                    base: g.clone(),
                    lamps: fam.clone(),
                    origin: *o,
                    n,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub instances: usize,
    /// Conventions that matched every instance.
    pub matches: Vec<Convention>,
    /// Per convention, the first instance where it failed.
    pub first_failure: Vec<(Convention, String)>,
}

impl Calibration {
    pub fn unique(&self) -> Result<Convention> {
        match self.matches.as_slice() {
            [] => Err(Error::NoConventionMatches),
            [c] => Ok(*c),
            many => Err(Error::InvalidConvention(format!(
                "ambiguous: {}",
                many.iter().map(|c| c.tag()).collect::<Vec<_>>().join(", ")
            ))),
        }
    }
}

/// Tries every [`Convention`] against exact propagation of `Z` on each
/// instance and keeps those that agree bit-exactly everywhere.
pub fn calibrate_fait0_convention(instances: &[CalibrationInstance], budget: usize) -> Result<Calibration> {
    use crate::prob::Exact;
    let mut alive: Vec<Convention> = Convention::ALL.to_vec();
    let mut first_failure = Vec::new();
    for inst in instances {
        let layout = LampLayout::Ordinary(inst.lamps.clone());
        let k = ProductKernel::new(&inst.base, layout.clone());
        let lhs: Exact = exact_product_return(&k, &inst.origin, inst.n, budget)?;
        let mut keep = Vec::new();
        for c in alive {
            let rhs: Exact = fait0_rhs_exact(&inst.base, &layout, &inst.origin, inst.n, c, budget)?;
            if rhs == lhs {
                keep.push(c);
            } else {
                first_failure.push((c, inst.name.clone()));
            }
        }
        alive = keep;
    }
    Ok(Calibration {
        instances: instances.len(),
        matches: alive,
        first_failure,
    })
}

/// Precomputed per-site data for fast sampling on the integer line over
/// sites `[-n, n]`.
#[derive(Debug, Clone)]
pub(crate) struct LinePrep {
    pub n: usize,
    pub dynamics: Dynamics,
    /// Dense lamp index of site `x`, stored at `x + n`.
    lamp_idx: Vec<usize>,
    /// Capped fiber length per dense lamp.
    lens: Vec<u64>,
    /// Holding probability of the base skeleton at `x`, stored at `x + n`.
    hold: Vec<f64>,
    pub tables: FiberTables,
}

impl LinePrep {
    pub fn new(model: &Fait0Model<IntegerLine>, n: usize) -> Result<Self> {
        let cap = model.horizon(n) + 3;
        let mut dense: BTreeMap<i64, usize> = BTreeMap::new();
        let mut lamp_idx = Vec::with_capacity(2 * n + 1);
        let mut lens = Vec::new();
        let mut hold = Vec::with_capacity(2 * n + 1);
        let mut tables = FiberTables::new(model.horizon(n));
        for x in -(n as i64)..=n as i64 {
            let lamp = model.lamps.lamp_of(x)?;
            let next = dense.len();
            let idx = *dense.entry(lamp).or_insert(next);
            if idx == lens.len() {
                let l = model.len_capped(lamp, cap);
                tables.ensure(l);
                lens.push(l);
            }
            lamp_idx.push(idx);
            hold.push(match model.dynamics {
                Dynamics::SwitchWalkSwitch => 0.0,
                Dynamics::Lazy => {
                    let fd = cycle_degree(lens[idx]) as f64;
                    (fd + 1.0) / (fd + 3.0)
                }
            });
        }
        Ok(Self { n, dynamics: model.dynamics, lamp_idx, lens, hold, tables })
    }

    pub fn hold(&self, x: i64) -> f64 {
        self.hold[(x + self.n as i64) as usize]
    }

    /// The common holding probability, if it is the same at every site.
    pub fn homogeneous_hold(&self) -> Option<f64> {
        let h = self.hold[0];
        self.hold.iter().all(|&g| g == h).then_some(h)
    }

    pub fn lamp(&self, x: i64) -> usize {
        self.lamp_idx[(x + self.n as i64) as usize]
    }

    pub fn len(&self, lamp: usize) -> u64 {
        self.lens[lamp]
    }

    /// `prod_lamps P(Y_{m} = 0)` along `path` (which starts at time 0).
    pub fn score(&self, path: &[i64], scratch: &mut Scratch) -> f64 {
        scratch.reset(self.lens.len());
        for w in path.windows(2) {
            let (x, y) = (w[0], w[1]);
            match self.dynamics {
                Dynamics::SwitchWalkSwitch => {
                    scratch.bump(self.lamp(x));
                    scratch.bump(self.lamp(y));
                }
                Dynamics::Lazy => {
                    if x == y {
                        scratch.bump(self.lamp(x));
                    }
                }
            }
        }
        let mut v = 1.0;
        for &k in &scratch.touched {
            v *= self.tables.get(self.lens[k], scratch.counts[k] as u64);
        }
        v
    }

    /// One step of the base skeleton from `x`.
    pub fn step<R: Rng + ?Sized>(&self, x: i64, r: &mut R) -> i64 {
        let u: f64 = r.gen();
        let h = self.hold(x);
        if u < h {
            x
        } else if u < h + (1.0 - h) / 2.0 {
            x - 1
        } else {
            x + 1
        }
    }
}

/// Reusable lamp-count buffers.
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    counts: Vec<u32>,
    touched: Vec<usize>,
}

impl Scratch {
    fn reset(&mut self, lamps: usize) {
        if self.counts.len() < lamps {
            self.counts.resize(lamps, 0);
        }
        for &k in &self.touched {
            self.counts[k] = 0;
        }
        self.touched.clear();
    }

    fn bump(&mut self, k: usize) {
        if self.counts[k] == 0 {
            self.touched.push(k);
        }
        self.counts[k] += 1;
    }
}

/// Backward table `B_t(j) = P_j(X_t = 0)` for `|j| <= t`, each row scaled
/// to max 1 with the log scale factors kept.
#[derive(Debug, Clone)]
pub(crate) struct BridgeTable {
    rows: Vec<Vec<f64>>,
    /// `ln P_0(X_n = 0)`, `-inf` when the endpoint is unreachable.
    pub ln_p0: f64,
}

impl BridgeTable {
    pub fn new(prep: &LinePrep) -> Self {
        let n = prep.n;
        let mut rows = Vec::with_capacity(n + 1);
        rows.push(vec![1.0]);
        let mut ln_scale = 0.0;
        for t in 1..=n {
            let prev = &rows[t - 1];
            let get = |j: i64| -> f64 {
                let tt = (t - 1) as i64;
                if j.abs() > tt {
                    0.0
                } else {
                    prev[(j + tt) as usize]
                }
            };
            let mut row = vec![0.0; 2 * t + 1];
            for (i, slot) in row.iter_mut().enumerate() {
                let j = i as i64 - t as i64;
                let h = prep.hold(j);
                *slot = h * get(j) + (1.0 - h) / 2.0 * (get(j - 1) + get(j + 1));
            }
            let m = row.iter().cloned().fold(0.0, f64::max);
            if m > 0.0 {
                row.iter_mut().for_each(|v| *v /= m);
                ln_scale += m.ln();
            }
            rows.push(row);
        }
        let mid = rows[n][n];
        let ln_p0 = if mid > 0.0 { mid.ln() + ln_scale } else { f64::NEG_INFINITY };
        Self { rows, ln_p0 }
    }

    fn at(&self, t: usize, j: i64) -> f64 {
        if j.unsigned_abs() as usize > t {
            0.0
        } else {
            self.rows[t][(j + t as i64) as usize]
        }
    }

    /// Samples a base path conditioned on `X_n = 0` into `path`.
    pub fn sample<R: Rng + ?Sized>(&self, prep: &LinePrep, r: &mut R, path: &mut Vec<i64>) {
        let n = prep.n;
        path.clear();
        path.push(0);
        let mut x = 0i64;
        for s in 0..n {
            let t = n - s - 1;
            let h = prep.hold(x);
            let w = [h * self.at(t, x), (1.0 - h) / 2.0 * self.at(t, x - 1), (1.0 - h) / 2.0 * self.at(t, x + 1)];
            let u = r.gen::<f64>() * (w[0] + w[1] + w[2]);
            x = if u < w[0] {
                x
            } else if u < w[0] + w[1] {
                x - 1
            } else {
                x + 1
            };
            path.push(x);
        }
    }
}

impl Fait0Model<IntegerLine> {
    pub fn on_line(lamps: LampLayout, dynamics: Dynamics) -> Self {
        Self::new(IntegerLine, lamps, dynamics)
    }

    /// Estimates `P(return at time n)` with the chosen method.
    pub fn estimate(&self, n: usize, samples: usize, method: Method, seed: u64) -> Result<ReturnEstimate> {
        match method {
            Method::ExactDp => Ok(ReturnEstimate::exact(n as u64, self.exact_return::<f64>(&0, n, DEFAULT_BUDGET)?)),
            Method::NaiveMc => self.naive_estimate(&0, n, samples, seed),
            Method::Fait0Mc => self.line_plain(n, samples, seed),
            Method::Fait0Bridge => self.line_bridge(n, samples, seed),
            Method::Fait0Range => strata::range_estimate(self, n, samples, seed),
        }
    }

    fn line_plain(&self, n: usize, samples: usize, seed: u64) -> Result<ReturnEstimate> {
        let prep = LinePrep::new(self, n)?;
        let stats = run_samples(samples, seed, |r| {
            let mut path = Vec::with_capacity(n + 1);
            path.push(0);
            let mut x = 0;
            for _ in 0..n {
                x = prep.step(x, r);
                path.push(x);
            }
            if x != 0 {
                return Ok(0.0);
            }
            Ok(prep.score(&path, &mut Scratch::default()))
        })?;
        Ok(ReturnEstimate::from_stats(n as u64, &stats, Method::Fait0Mc, seed))
    }

    fn line_bridge(&self, n: usize, samples: usize, seed: u64) -> Result<ReturnEstimate> {
        let prep = LinePrep::new(self, n)?;
        let table = BridgeTable::new(&prep);
        if table.ln_p0 == f64::NEG_INFINITY {
            return Ok(ReturnEstimate::from_stats(n as u64, &Welford::new(), Method::Fait0Bridge, seed));
        }
        let p0 = table.ln_p0.exp();
        let stats = crate::walk::estimate::run_chunks(samples, seed, |r, len| {
            let mut path = Vec::with_capacity(n + 1);
            let mut scratch = Scratch::default();
            Ok((0..len)
                .map(|_| {
                    table.sample(&prep, r, &mut path);
                    prep.score(&path, &mut scratch) * p0
                })
                .collect())
        })?;
        Ok(ReturnEstimate::from_stats(n as u64, &stats, Method::Fait0Bridge, seed))
    }
}

/// Exact `P(Z_n = o)` for `Z` on the integer line with two-element fibers
/// everywhere, by DP over `(position, visited interval)`: every visited
/// site has moved its lamp at least once, so the fiber product is
/// `2^-(range size)`.
pub fn line_z2_range_dp(n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if n % 2 == 1 {
        return 0.0;
    }
    // State (lo, hi, pos) with lo <= 0 <= hi, offsets by n.
    let w = n + 1;
    let idx = |lo: usize, hi: usize, pos: usize| (lo * w + hi) * (2 * n + 1) + pos;
    let size = w * w * (2 * n + 1);
    let mut cur = vec![0.0f64; size];
    cur[idx(0, 0, n)] = 1.0;
    for _ in 0..n {
        let mut next = vec![0.0f64; size];
        for lo in 0..w {
            for hi in 0..w {
                for pos in (n - lo)..=(n + hi) {
                    let p = cur[idx(lo, hi, pos)];
                    if p == 0.0 {
                        continue;
                    }
                    if pos > 0 {
                        let left = pos - 1;
                        let nlo = if left < n { lo.max(n - left) } else { lo };
                        if nlo < w {
                            next[idx(nlo, hi, left)] += p / 2.0;
                        }
                    }
                    let right = pos + 1;
                    let nhi = if right > n { hi.max(right - n) } else { hi };
                    if nhi < w && right <= 2 * n {
                        next[idx(lo, nhi, right)] += p / 2.0;
                    }
                }
            }
        }
        cur = next;
    }
    let mut total = 0.0;
    for lo in 0..w {
        for hi in 0..w {
            total += cur[idx(lo, hi, n)] * 0.5f64.powi((lo + hi + 1) as i32);
        }
    }
    total
}
