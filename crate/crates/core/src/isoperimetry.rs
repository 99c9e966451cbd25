//! Edge boundaries, Følner functions and the Coulhon ODE bound.
//!
//! `Fol(k)` is the least `|U|` with `|∂U| / |U| <= 1/k`, where `∂U` counts
//! directed edges leaving `U` in the host graph. The relative variant
//! restricts `U` to a finite window of a possibly infinite host; the window
//! is recorded in the result.
//!
//! The ODE `v' = -v / (8 F^{-1}(4/v)^2)`, `v(0) = 1/m0` is integrated in
//! `u = -ln v`, which turns it into `u' = 1 / (8 F^{-1}(4 e^u)^2)`.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fibers::FiberFamily;
use crate::graph::Graph;
use crate::wreath::{Configuration, WreathVertex};

/// Directed edges `(x, y)` with `x` in `u` and `y` outside it.
pub fn boundary<G: Graph>(g: &G, u: &BTreeSet<G::Vertex>) -> Result<Vec<(G::Vertex, G::Vertex)>> {
    let mut out = Vec::new();
    for x in u {
        for y in g.neighbors(x)? {
            if !u.contains(&y) {
                out.push((x.clone(), y));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FolnerMode {
    /// Every subset of the window; at most 20 window vertices.
    Exhaustive,
    /// Subsets connected in the host graph.
    ConnectedOnly,
    /// The smallest feasible set of a supplied family; an upper bound.
    WitnessFamily,
}

#[derive(Debug, Clone)]
pub struct FolnerQuery<'a, G: Graph> {
    pub graph: &'a G,
    /// Candidate vertices. Boundaries are still taken in `graph`.
    pub window: Vec<G::Vertex>,
    pub k: u64,
    /// Maximum number of candidate sets examined.
    pub budget: usize,
    pub mode: FolnerMode,
    /// Only read in [`FolnerMode::WitnessFamily`].
    pub witnesses: Vec<BTreeSet<G::Vertex>>,
}

impl<'a, G: Graph> FolnerQuery<'a, G> {
    pub fn new(graph: &'a G, window: Vec<G::Vertex>, k: u64, mode: FolnerMode) -> Self {
        Self {
            graph,
            window,
            k,
            budget: 1 << 24,
            mode,
            witnesses: Vec::new(),
        }
    }

    pub fn with_witnesses(mut self, witnesses: Vec<BTreeSet<G::Vertex>>) -> Self {
        self.witnesses = witnesses;
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FolnerValue<V> {
    pub size: usize,
    pub witness: BTreeSet<V>,
    pub boundary: usize,
    pub mode: FolnerMode,
    /// Set when only connected candidates were searched.
    pub connected_only: bool,
    /// Number of window vertices searched (witness mode: family size).
    pub window: usize,
}

pub fn folner_value<G: Graph>(q: &FolnerQuery<'_, G>) -> Result<FolnerValue<G::Vertex>> {
    if q.k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if q.budget == 0 {
        return Err(Error::InvalidParameter("budget must be positive".into()));
    }
    match q.mode {
        FolnerMode::WitnessFamily => witness_value(q),
        FolnerMode::Exhaustive | FolnerMode::ConnectedOnly => {
            let w = Window::new(q.graph, &q.window)?;
            let found = if q.mode == FolnerMode::Exhaustive {
                w.exhaustive(q.k, q.budget)?
            } else {
                w.connected(q.k, q.budget)?
            };
            let (set, bd) = found.ok_or(Error::EmptyFeasible)?;
            let witness: BTreeSet<G::Vertex> = set.iter().map(|&i| q.window[i].clone()).collect();
            Ok(FolnerValue {
                size: witness.len(),
                witness,
                boundary: bd,
                mode: q.mode,
                connected_only: q.mode == FolnerMode::ConnectedOnly,
                window: q.window.len(),
            })
        }
    }
}

fn witness_value<G: Graph>(q: &FolnerQuery<'_, G>) -> Result<FolnerValue<G::Vertex>> {
    let mut best: Option<(usize, usize)> = None;
    for (i, u) in q.witnesses.iter().enumerate() {
        if u.is_empty() || best.is_some_and(|(b, _)| q.witnesses[b].len() <= u.len()) {
            continue;
        }
        let bd = boundary(q.graph, u)?.len();
        if bd as u128 * q.k as u128 <= u.len() as u128 {
            best = Some((i, bd));
        }
    }
    let (i, bd) = best.ok_or(Error::EmptyFeasible)?;
    Ok(FolnerValue {
        size: q.witnesses[i].len(),
        witness: q.witnesses[i].clone(),
        boundary: bd,
        mode: q.mode,
        connected_only: false,
        window: q.witnesses.len(),
    })
}

/// `U_n = { (a, f) : |a| <= n, supp f in [-n, n] }` for an ordinary
/// wreath product over the line. Refuses sets above `limit` vertices.
pub fn box_witness(fibers: &FiberFamily, n: i64, limit: usize) -> Result<BTreeSet<WreathVertex<i64>>> {
    let sizes: Vec<u64> = (-n..=n).map(|z| fibers.fiber_size(z)).collect::<Result<_>>()?;
    let count = sizes
        .iter()
        .try_fold((2 * n + 1) as usize, |acc, l| acc.checked_mul(*l as usize))
        .filter(|c| *c <= limit)
        .ok_or(Error::BudgetExceeded { budget: limit })?;
    let mut configs = vec![Configuration::null()];
    for (z, l) in (-n..=n).zip(&sizes) {
        configs = configs
            .iter()
            .flat_map(|c| (0..*l).map(move |v| c.with(z, v)))
            .collect();
    }
    let out: BTreeSet<WreathVertex<i64>> = (-n..=n)
        .flat_map(|a| configs.iter().map(move |c| WreathVertex { base: a, config: c.clone() }))
        .collect();
    debug_assert_eq!(out.len(), count);
    Ok(out)
}

/// Window vertices by index, with host-graph edges leaving the window
/// folded into a per-vertex count.
struct Window {
    adj: Vec<Vec<usize>>,
    outside: Vec<usize>,
}

impl Window {
    fn new<G: Graph>(g: &G, window: &[G::Vertex]) -> Result<Self> {
        let index: std::collections::BTreeMap<&G::Vertex, usize> = window.iter().enumerate().map(|(i, v)| (v, i)).collect();
        if index.len() != window.len() {
            return Err(Error::InvalidParameter("window has repeated vertices".into()));
        }
        let mut adj = vec![Vec::new(); window.len()];
        let mut outside = vec![0; window.len()];
        for (i, v) in window.iter().enumerate() {
            for u in g.neighbors(v)? {
                match index.get(&u) {
                    Some(&j) => adj[i].push(j),
                    None => outside[i] += 1,
                }
            }
        }
        Ok(Self { adj, outside })
    }

    fn boundary_of(&self, set: &[usize], member: impl Fn(usize) -> bool) -> usize {
        set.iter()
            .map(|&i| self.outside[i] + self.adj[i].iter().filter(|&&j| !member(j)).count())
            .sum()
    }

    fn exhaustive(&self, k: u64, budget: usize) -> Result<Option<(Vec<usize>, usize)>> {
        let n = self.adj.len();
        if n > 20 || (1usize << n) > budget {
            return Err(Error::BudgetExceeded { budget });
        }
        let nb: Vec<u32> = self.adj.iter().map(|a| a.iter().fold(0u32, |m, &j| m | (1 << j))).collect();
        let mut best: Option<(u32, u32, usize)> = None;
        for mask in 1u32..(1u32 << n) {
            let size = mask.count_ones();
            if best.is_some_and(|(s, _, _)| size >= s) {
                continue;
            }
            let bd: usize = (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| self.outside[i] + (nb[i] & !mask).count_ones() as usize)
                .sum();
            if bd as u64 * k <= size as u64 {
                best = Some((size, mask, bd));
            }
        }
        Ok(best.map(|(_, mask, bd)| ((0..n).filter(|i| mask >> i & 1 == 1).collect(), bd)))
    }

    /// Any feasible set has a feasible connected component, since the
    /// components' boundaries are disjoint and the ratio of a union is a
    /// mediant of the parts. Sizes are tried in increasing order.
    fn connected(&self, k: u64, budget: usize) -> Result<Option<(Vec<usize>, usize)>> {
        let n = self.adj.len();
        let seen = AtomicUsize::new(0);
        for size in 1..=n {
            let hits: Vec<Result<Option<(Vec<usize>, usize)>>> = (0..n)
                .into_par_iter()
                .map(|v| {
                    let mut best = None;
                    let mut sub = vec![v];
                    let ext: Vec<usize> = self.adj[v].iter().copied().filter(|&u| u > v).collect();
                    self.extend(&mut sub, ext, v, size, k, budget, &seen, &mut best)?;
                    Ok(best)
                })
                .collect();
            let mut best: Option<(Vec<usize>, usize)> = None;
            for h in hits {
                if let Some(c) = h? {
                    if best.as_ref().is_none_or(|b| c.0 < b.0) {
                        best = Some(c);
                    }
                }
            }
            if best.is_some() {
                return Ok(best);
            }
        }
        Ok(None)
    }

    #[allow(clippy::too_many_arguments)]
    fn extend(
        &self,
        sub: &mut Vec<usize>,
        mut ext: Vec<usize>,
        root: usize,
        size: usize,
        k: u64,
        budget: usize,
        seen: &AtomicUsize,
        best: &mut Option<(Vec<usize>, usize)>,
    ) -> Result<()> {
        if sub.len() == size {
            if seen.fetch_add(1, Ordering::Relaxed) >= budget {
                return Err(Error::BudgetExceeded { budget });
            }
            let bd = self.boundary_of(sub, |j| sub.contains(&j));
            if bd as u64 * k <= size as u64 {
                let mut s = sub.clone();
                s.sort_unstable();
                if best.as_ref().is_none_or(|b| s < b.0) {
                    *best = Some((s, bd));
                }
            }
            return Ok(());
        }
        while let Some(w) = ext.pop() {
            let mut next = ext.clone();
            for &u in &self.adj[w] {
                if u > root && !sub.contains(&u) && !next.contains(&u) && !sub.iter().any(|&s| self.adj[s].contains(&u)) {
                    next.push(u);
                }
            }
            sub.push(w);
            self.extend(sub, next, root, size, k, budget, seen, best)?;
            sub.pop();
        }
        Ok(())
    }
}

/// A non-decreasing lower bound `F` on the Følner function, handled
/// through `ln F` so that exponential profiles do not overflow.
#[derive(Debug, Clone, PartialEq)]
pub enum FolnerProfile {
    /// `F(x) = c x^d`.
    Power { c: f64, d: f64 },
    /// `F(x) = exp(x^beta)`.
    StretchedExp { beta: f64 },
    /// `F(x) = 1` below `k0` and `N^(b x^d)` from `k0` on.
    Threshold { k0: f64, big_n: f64, b: f64, d: f64 },
    /// Piecewise-linear interpolation of sampled `(x, ln F(x))`.
    Sampled(Vec<(f64, f64)>),
}

impl FolnerProfile {
    pub fn ln_f(&self, x: f64) -> Result<f64> {
        Ok(match self {
            Self::Power { c, d } => c.ln() + d * x.ln(),
            Self::StretchedExp { beta } => x.powf(*beta),
            Self::Threshold { k0, big_n, b, d } => {
                if x < *k0 {
                    0.0
                } else {
                    b * x.powf(*d) * big_n.ln()
                }
            }
            Self::Sampled(pts) => {
                let (x0, y0) = pts[0];
                let x1 = pts[pts.len() - 1].0;
                if x <= x0 {
                    return Ok(if x < x0 { f64::NEG_INFINITY } else { y0 });
                }
                if x > x1 {
                    return Err(Error::InvalidParameter(format!("profile sampled up to {x1}, needed at {x}")));
                }
                let i = pts.partition_point(|p| p.0 < x);
                let (xa, ya) = pts[i - 1];
                let (xb, yb) = pts[i];
                ya + (yb - ya) * (x - xa) / (xb - xa)
            }
        })
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Power { c, d } => *c > 0.0 && *d > 0.0,
            Self::StretchedExp { beta } => *beta > 0.0,
            Self::Threshold { k0, big_n, b, d } => *k0 > 0.0 && *big_n > 1.0 && *b > 0.0 && *d > 0.0,
            Self::Sampled(pts) => {
                pts.len() >= 2
                    && pts.iter().all(|p| p.0.is_finite() && !p.1.is_nan())
                    && pts.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("profile {self:?} is not a non-decreasing lower bound")))
        }
    }

    /// `F^{-1}(y) = inf { x >= 0 : F(x) >= y }` by bisection, given `ln y`.
    pub fn inverse_ln(&self, ln_y: f64) -> Result<f64> {
        if self.ln_f(0.0)? >= ln_y {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        while self.ln_f(hi)? < ln_y {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::InvalidParameter("profile never reaches the requested level".into()));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.ln_f(mid)? >= ln_y {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeBoundSpec {
    pub profile: FolnerProfile,
    /// Infimum of the reversible measure, `min (deg + 1)`.
    pub m0: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub min_step: f64,
}

impl OdeBoundSpec {
    pub fn new(profile: FolnerProfile, m0: f64) -> Self {
        Self {
            profile,
            m0,
            rtol: 1e-9,
            atol: 1e-12,
            max_step: f64::INFINITY,
            min_step: 1e-10,
        }
    }

    fn rate(&self, u: f64) -> Result<f64> {
        let x = self.profile.inverse_ln(4f64.ln() + u)?;
        Ok(1.0 / (8.0 * x * x))
    }
}

/// `-ln v(t)` at each of the non-decreasing `times`.
pub fn coulhon_log_curve(spec: &OdeBoundSpec, times: &[f64]) -> Result<Vec<f64>> {
    spec.profile.validate()?;
    if !(spec.m0 > 0.0) || !(spec.rtol > 0.0) || !(spec.min_step > 0.0) || !(spec.max_step > 0.0) {
        return Err(Error::InvalidParameter("ODE spec needs positive m0, tolerances and step bounds".into()));
    }
    if times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("times must be non-negative and sorted".into()));
    }
    let mut t = 0.0;
    let mut u = spec.m0.ln();
    let mut k1 = spec.rate(u)?;
    if !k1.is_finite() {
        return Err(Error::StiffnessFailure { t });
    }
    let mut h = (1e-3 / k1).min(spec.max_step).max(spec.min_step);
    let mut out = Vec::with_capacity(times.len());
    // Bogacki-Shampine 3(2) with first-same-as-last.
    for &target in times {
        while t < target {
            let step = h.min(target - t);
            let k2 = spec.rate(u + 0.5 * step * k1)?;
            let k3 = spec.rate(u + 0.75 * step * k2)?;
            let u_new = u + step * (2.0 * k1 + 3.0 * k2 + 4.0 * k3) / 9.0;
            let k4 = spec.rate(u_new)?;
            let err = step * ((-5.0 * k1 + 6.0 * k2 + 8.0 * k3 - 9.0 * k4) / 72.0).abs();
            let tol = spec.atol + spec.rtol * u_new.abs().max(1.0);
            if !u_new.is_finite() || !k4.is_finite() {
                return Err(Error::StiffnessFailure { t });
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * (tol / err).cbrt()).clamp(0.2, 5.0) };
            if err <= tol {
                t += step;
                u = u_new;
                k1 = k4;
                h = (step * factor).min(spec.max_step);
            } else {
                h = step * factor;
                if h < spec.min_step {
                    return Err(Error::StiffnessFailure { t });
                }
            }
        }
        out.push(u);
    }
    Ok(out)
}

/// `v(n)`, the bound on `sup p_n(x, y)` up to the constants of the
/// isoperimetric comparison.
pub fn coulhon_bound(spec: &OdeBoundSpec, n: f64) -> Result<f64> {
    Ok((-coulhon_log_curve(spec, &[n])?[0]).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{propagate, AdjacencyGraph, CycleGraph, IntegerLine, LazyKernel, SparseDistribution};
    use crate::rng;
    use proptest::prelude::*;

    fn interval(a: i64, b: i64) -> BTreeSet<i64> {
        (a..=b).collect()
    }

    #[test]
    fn boundary_examples() {
        assert_eq!(boundary(&IntegerLine, &interval(1, 7)).unwrap(), vec![(1, 0), (7, 8)]);
        let c = AdjacencyGraph::cycle(6);
        assert!(boundary(&c, &(0..6).collect()).unwrap().is_empty());
    }

    #[test]
    fn line_window_is_two_k() {
        let window: Vec<i64> = (-50..=50).collect();
        for k in 1..=10 {
            let v = folner_value(&FolnerQuery::new(&IntegerLine, window.clone(), k, FolnerMode::ConnectedOnly)).unwrap();
            assert_eq!(v.size, 2 * k as usize);
            assert_eq!(v.boundary, 2);
            assert!(v.connected_only);
            assert_eq!(v.window, 101);
        }
    }

    #[test]
    fn cycle_fiber_values() {
        // An arc of length j has boundary 2, so Fol(k) = min(2k, l).
        for l in 3..=12u64 {
            let g = CycleGraph::new(l);
            let window: Vec<u64> = (0..l).collect();
            for k in 1..=8 {
                let v = folner_value(&FolnerQuery::new(&g, window.clone(), k, FolnerMode::Exhaustive)).unwrap();
                assert_eq!(v.size as u64, (2 * k).min(l), "l={l} k={k}");
            }
        }
        let g = CycleGraph::new(2);
        for k in 3..=6 {
            assert_eq!(folner_value(&FolnerQuery::new(&g, vec![0, 1], k, FolnerMode::Exhaustive)).unwrap().size, 2);
        }
    }

    #[test]
    fn empty_feasible_is_reported() {
        let window: Vec<i64> = (0..6).collect();
        let r = folner_value(&FolnerQuery::new(&IntegerLine, window, 4, FolnerMode::Exhaustive));
        assert_eq!(r, Err(Error::EmptyFeasible));
    }

    #[test]
    fn budgets() {
        let window: Vec<i64> = (0..21).collect();
        assert!(matches!(
            folner_value(&FolnerQuery::new(&IntegerLine, window.clone(), 2, FolnerMode::Exhaustive)),
            Err(Error::BudgetExceeded { .. })
        ));
        let g = AdjacencyGraph::from_edges(12, (0..12).flat_map(|i| (i + 1..12).map(move |j| (i, j)))).unwrap();
        let q = FolnerQuery::new(&g, (0..12).collect(), 100, FolnerMode::ConnectedOnly).with_budget(50);
        assert!(matches!(folner_value(&q), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn exhaustive_and_connected_agree_on_random_graphs() {
        let mut r = rng::master(11);
        for trial in 0..60 {
            let n = 4 + trial % 11;
            let g = AdjacencyGraph::random(n, 0.35, &mut r);
            let window: Vec<usize> = (0..n).collect();
            for k in 1..=3 {
                let a = folner_value(&FolnerQuery::new(&g, window.clone(), k, FolnerMode::Exhaustive));
                let b = folner_value(&FolnerQuery::new(&g, window.clone(), k, FolnerMode::ConnectedOnly));
                assert_eq!(a.map(|v| v.size), b.map(|v| v.size), "trial {trial} k={k}");
            }
        }
    }

    #[test]
    fn witness_family_bounds_exhaustive() {
        let window: Vec<i64> = (0..16).collect();
        let family: Vec<BTreeSet<i64>> = (0..8).map(|r| interval(0, 2 * r + 1)).collect();
        for k in 1..=7 {
            let q = FolnerQuery::new(&IntegerLine, window.clone(), k, FolnerMode::WitnessFamily).with_witnesses(family.clone());
            let w = folner_value(&q).unwrap();
            let e = folner_value(&FolnerQuery::new(&IntegerLine, window.clone(), k, FolnerMode::Exhaustive)).unwrap();
            assert!(w.size >= e.size);
        }
    }

    #[test]
    fn lamplighter_box_witness() {
        use crate::wreath::WreathGraph;
        let fam = FiberFamily::constant(2);
        let g = WreathGraph::ordinary(IntegerLine, fam.clone());
        let family: Vec<_> = (0..=4).map(|n| box_witness(&fam, n, 1 << 16).unwrap()).collect();
        for (n, u) in family.iter().enumerate() {
            let want = (2.0 * n as f64 + 1.0) + (2.0 * n as f64 + 1.0).log2();
            assert!(((u.len() as f64).log2() - want).abs() < 1e-12);
            // Only base moves at |a| = n leave the box.
            assert_eq!(boundary(&g, u).unwrap().len(), 2 << (2 * n + 1));
        }
        for k in 1..=4u64 {
            let q = FolnerQuery::new(&g, Vec::new(), k, FolnerMode::WitnessFamily).with_witnesses(family.clone());
            let v = folner_value(&q).unwrap();
            // 2 / (2n + 1) <= 1/k first holds at n = k.
            assert_eq!(v.size, family[k as usize].len());
        }
        assert!(box_witness(&fam, 10, 1000).is_err());
    }

    proptest! {
        #[test]
        fn non_decreasing_in_k(n in 3usize..11, p in 0.2f64..0.8, seed in 0u64..1000) {
            let g = AdjacencyGraph::random(n, p, &mut rng::master(seed));
            let window: Vec<usize> = (0..n).collect();
            let mut prev = 0;
            for k in 1..=6 {
                match folner_value(&FolnerQuery::new(&g, window.clone(), k, FolnerMode::Exhaustive)) {
                    Ok(v) => {
                        prop_assert!(v.size >= prev);
                        prev = v.size;
                    }
                    Err(Error::EmptyFeasible) => prev = usize::MAX,
                    Err(e) => return Err(TestCaseError::fail(e.to_string())),
                }
            }
        }
    }

    fn slope(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        sxy / sxx
    }

    fn grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
        (0..k).map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64)).collect()
    }

    #[test]
    fn power_profile_gives_polynomial_decay() {
        let ts = grid(1e2, 1e6, 17);
        for d in [1.0, 2.0, 3.0] {
            let spec = OdeBoundSpec::new(FolnerProfile::Power { c: 1.0, d }, 1.0);
            let u = coulhon_log_curve(&spec, &ts).unwrap();
            let lx: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
            let s = slope(&lx, &u.iter().map(|u| -u).collect::<Vec<_>>());
            assert!((s + d / 2.0).abs() < 0.05 * d / 2.0, "d={d}: {s}");
        }
    }

    #[test]
    fn power_profile_closed_form() {
        // F = x^d: e^{2u/d} = e^{2u0/d} + t / (4 d 4^{2/d}).
        for d in [1.0f64, 2.0, 3.0] {
            let spec = OdeBoundSpec::new(FolnerProfile::Power { c: 1.0, d }, 2.0);
            let ts = [0.0, 1.0, 50.0, 1e4];
            let u = coulhon_log_curve(&spec, &ts).unwrap();
            for (t, u) in ts.iter().zip(u) {
                let want = d / 2.0 * (2f64.powf(2.0 / d) + t / (4.0 * d * 4f64.powf(2.0 / d))).ln();
                assert!((u - want).abs() < 1e-6 * want.max(1.0), "d={d} t={t}: {u} vs {want}");
            }
        }
    }

    #[test]
    fn exponential_profile_gives_cube_root() {
        let ts = grid(1e3, 1e8, 21);
        let spec = OdeBoundSpec::new(FolnerProfile::StretchedExp { beta: 1.0 }, 1.0);
        let u = coulhon_log_curve(&spec, &ts).unwrap();
        let s = slope(&ts.iter().map(|t| t.ln()).collect::<Vec<_>>(), &u.iter().map(|u| u.ln()).collect::<Vec<_>>());
        assert!((s - 1.0 / 3.0).abs() < 0.05, "{s}");
        // (ln 4 + u)^3 - (ln 4)^3 = 3t/8.
        let l4 = 4f64.ln();
        for (t, u) in ts.iter().zip(&u) {
            let want = (l4.powi(3) + 3.0 * t / 8.0).cbrt() - l4;
            assert!((u - want).abs() < 1e-6 * want);
        }
    }

    /// Closed form for the threshold profile, derived separately for each
    /// regime of `F^{-1}(4 e^u)`.
    fn threshold_closed_form(k0: f64, big_n: f64, b: f64, d: f64, u0: f64, t: f64) -> f64 {
        let l4 = 4f64.ln();
        let s_switch = b * k0.powf(d) * big_n.ln();
        let t_switch = (s_switch - l4 - u0).max(0.0) * 8.0 * k0 * k0;
        if t <= t_switch {
            return u0 + t / (8.0 * k0 * k0);
        }
        let s0 = (l4 + u0).max(s_switch);
        let e = (d + 2.0) / d;
        let s = (s0.powf(e) + e * (b * big_n.ln()).powf(2.0 / d) / 8.0 * (t - t_switch)).powf(1.0 / e);
        s - l4
    }

    #[test]
    fn threshold_profile_matches_closed_form() {
        for (k0, big_n, d) in [(5.0, 3.0, 1.0), (8.0, 2.0, 2.0), (4.0, 10.0, 3.0)] {
            let profile = FolnerProfile::Threshold { k0, big_n, b: 0.5, d };
            let spec = OdeBoundSpec::new(profile, 3.0);
            let ts = grid(1.0, 1e7, 30);
            let u = coulhon_log_curve(&spec, &ts).unwrap();
            for (t, u) in ts.iter().zip(u) {
                let want = threshold_closed_form(k0, big_n, 0.5, d, 3f64.ln(), *t);
                assert!((u - want).abs() < 1e-5 * want.max(1.0), "k0={k0} d={d} t={t}: {u} vs {want}");
            }
        }
    }

    #[test]
    fn sampled_profile_matches_analytic() {
        let pts: Vec<(f64, f64)> = (1..=4000).map(|i| {
            let x = i as f64 * 0.05;
            (x, 2.0 * x.ln())
        }).collect();
        let a = OdeBoundSpec::new(FolnerProfile::Sampled(pts), 1.0);
        let b = OdeBoundSpec::new(FolnerProfile::Power { c: 1.0, d: 2.0 }, 1.0);
        let ua = coulhon_log_curve(&a, &[10.0, 1000.0]).unwrap();
        let ub = coulhon_log_curve(&b, &[10.0, 1000.0]).unwrap();
        for (x, y) in ua.iter().zip(&ub) {
            assert!((x - y).abs() < 1e-3);
        }
        let short = OdeBoundSpec::new(FolnerProfile::Sampled(vec![(1.0, 0.0), (2.0, 2.0)]), 1.0);
        assert!(coulhon_bound(&short, 1e6).is_err());
        assert!(coulhon_bound(&OdeBoundSpec::new(FolnerProfile::Sampled(vec![(1.0, 1.0), (2.0, 0.0)]), 1.0), 1.0).is_err());
    }

    #[test]
    fn step_halving_converges() {
        let ts = grid(10.0, 1e6, 9);
        for profile in [FolnerProfile::Power { c: 1.0, d: 2.0 }, FolnerProfile::StretchedExp { beta: 1.0 }] {
            let mut coarse = OdeBoundSpec::new(profile.clone(), 1.0);
            coarse.rtol = 1e-5;
            coarse.max_step = 1e4;
            let mut fine = coarse.clone();
            fine.rtol /= 2.0;
            fine.max_step /= 2.0;
            let a = coulhon_log_curve(&coarse, &ts).unwrap();
            let b = coulhon_log_curve(&fine, &ts).unwrap();
            let mut prev = f64::INFINITY;
            for (x, y) in a.iter().zip(&b) {
                let (va, vb) = ((-x).exp(), (-y).exp());
                assert!(va > 0.0 && va <= prev);
                assert!((va - vb).abs() < 1e-3 * vb);
                prev = va;
            }
        }
    }

    #[test]
    fn step_underflow_is_stiffness_failure() {
        let mut spec = OdeBoundSpec::new(FolnerProfile::Power { c: 1.0, d: 1.0 }, 1.0);
        spec.rtol = 1e-300;
        spec.atol = 0.0;
        spec.min_step = 1e-3;
        assert!(matches!(coulhon_bound(&spec, 10.0), Err(Error::StiffnessFailure { .. })));
    }

    #[test]
    fn line_bound_dominates_heat_kernel() {
        // Fol_Z(k) = 2k, m = 3 everywhere; compare p_n(0,0) / m(0).
        let spec = OdeBoundSpec::new(FolnerProfile::Power { c: 2.0, d: 1.0 }, 3.0);
        let times: Vec<f64> = (0..=200).map(|n| n as f64).collect();
        let u = coulhon_log_curve(&spec, &times).unwrap();
        let mut dist = SparseDistribution::<i64, f64>::dirac(0);
        for (n, u) in u.iter().enumerate() {
            if n > 0 {
                dist = propagate(&LazyKernel(&IntegerLine), &dist, 1, 1 << 16).unwrap();
            }
            assert!(dist.get(&0) / 3.0 <= (-u).exp() * (1.0 + 1e-9), "n={n}");
        }
    }
}
