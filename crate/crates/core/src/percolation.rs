//! Bernoulli bond percolation on a box of `Z^d`, the origin cluster, and
//! local-time functionals of the lazy walk on it.
//!
//! Local times count time 0, so `sum_x L_{x,n} = n + 1`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use num_traits::Zero;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyGraph, Graph};
use crate::prob::{Exact, Prob};
use crate::rng::{self, WalkRng};
use crate::walk::confine::confined_prob;
use crate::walk::estimate::Welford;
use crate::walk::fit::{fit_neg_log, StretchedFit};
use crate::walk::trace::LocalTimes;
use crate::wreath::ball;

/// One bit per edge of `[-radius, radius]^d`. Edge `v * d + dir` joins
/// vertex `v` to `v + e_dir`; it is always closed when that leaves the box.
#[derive(Debug, Clone, PartialEq)]
pub struct BondSample {
    pub d: usize,
    pub radius: i64,
    pub p: f64,
    pub seed: u64,
    bits: Vec<bool>,
}

impl BondSample {
    pub fn new(d: usize, radius: i64, p: f64, seed: u64) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidParameter(format!("dimension {d} not in 1..=3")));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidParameter(format!("retention probability {p} not in (0, 1]")));
        }
        if !(0..=512).contains(&radius) {
            return Err(Error::InvalidParameter(format!("box radius {radius} not in 0..=512")));
        }
        let side = (2 * radius + 1) as usize;
        let count = side.pow(d as u32);
        let mut r = rng::master(seed);
        let mut bits = Vec::with_capacity(count * d);
        for v in 0..count {
            for dir in 0..d {
                let x = Self::coords_in(d, radius, v);
                let open = r.gen::<f64>() < p;
                bits.push(open && x[dir] < radius);
            }
        }
        Ok(Self { d, radius, p, seed, bits })
    }

    fn coords_in(d: usize, radius: i64, mut v: usize) -> Vec<i64> {
        let side = (2 * radius + 1) as usize;
        (0..d)
            .map(|_| {
                let c = (v % side) as i64 - radius;
                v /= side;
                c
            })
            .collect()
    }

    pub fn vertex_count(&self) -> usize {
        ((2 * self.radius + 1) as usize).pow(self.d as u32)
    }

    pub fn coords(&self, v: usize) -> Vec<i64> {
        Self::coords_in(self.d, self.radius, v)
    }

    pub fn index(&self, x: &[i64]) -> Option<usize> {
        if x.len() != self.d || x.iter().any(|c| c.abs() > self.radius) {
            return None;
        }
        let side = 2 * self.radius + 1;
        Some(x.iter().rev().fold(0i64, |acc, c| acc * side + c + self.radius) as usize)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_open(&self, v: usize, dir: usize) -> bool {
        self.bits[v * self.d + dir]
    }

    /// Box neighbors of `v` across open edges.
    pub fn open_neighbors(&self, v: usize) -> Vec<usize> {
        let x = self.coords(v);
        let stride = |dir: usize| ((2 * self.radius + 1) as usize).pow(dir as u32);
        let mut out = Vec::with_capacity(2 * self.d);
        for dir in 0..self.d {
            if x[dir] > -self.radius && self.is_open(v - stride(dir), dir) {
                out.push(v - stride(dir));
            }
            if self.is_open(v, dir) {
                out.push(v + stride(dir));
            }
        }
        out
    }

    /// Breadth-first search from the origin over open edges.
    pub fn origin_cluster(&self) -> Result<ClusterGraph> {
        let origin = self.index(&vec![0; self.d]).expect("origin is in the box");
        let mut local: BTreeMap<usize, usize> = BTreeMap::from([(origin, 0)]);
        let mut order = vec![origin];
        let mut queue = VecDeque::from([origin]);
        let mut edges = Vec::new();
        while let Some(v) = queue.pop_front() {
            for u in self.open_neighbors(v) {
                let next = local.len();
                let j = *local.entry(u).or_insert_with(|| {
                    order.push(u);
                    queue.push_back(u);
                    next
                });
                edges.push((local[&v], j));
            }
        }
        let coords: Vec<Vec<i64>> = order.iter().map(|&v| self.coords(v)).collect();
        if coords.len() == 1 {
            return Err(Error::OriginIsolated);
        }
        ClusterGraph::build(self.d, coords, edges, Some(self.radius))
    }
}

/// Origin cluster of a bond sample; vertex 0 is the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGraph {
    pub d: usize,
    pub coords: Vec<Vec<i64>>,
    graph: AdjacencyGraph,
    /// Box the cluster was cut from, when known.
    pub box_radius: Option<i64>,
    /// Some vertex lies on the box boundary, so the cluster may continue
    /// outside it.
    pub touches_boundary: bool,
}

impl ClusterGraph {
    fn build(d: usize, coords: Vec<Vec<i64>>, edges: Vec<(usize, usize)>, box_radius: Option<i64>) -> Result<Self> {
        let graph = AdjacencyGraph::from_edges(coords.len(), edges)?;
        let touches_boundary = box_radius.is_some_and(|r| coords.iter().any(|x| x.iter().any(|c| c.abs() == r)));
        Ok(Self {
            d,
            coords,
            graph,
            box_radius,
            touches_boundary,
        })
    }

    /// The component of the origin in the graph spanned by `edges`, each a
    /// pair of lattice neighbors.
    pub fn from_lattice_edges(d: usize, edges: &[(Vec<i64>, Vec<i64>)], box_radius: Option<i64>) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidParameter(format!("dimension {d} not in 1..=3")));
        }
        let mut adj: BTreeMap<&[i64], Vec<&[i64]>> = BTreeMap::new();
        for (a, b) in edges {
            if a.len() != d || b.len() != d {
                return Err(Error::InvalidParameter("edge endpoint has the wrong dimension".into()));
            }
            if a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<i64>() != 1 {
                return Err(Error::InvalidParameter(format!("{a:?} and {b:?} are not lattice neighbors")));
            }
            if let Some(r) = box_radius {
                if a.iter().chain(b).any(|c| c.abs() > r) {
                    return Err(Error::InvalidParameter(format!("edge {a:?}-{b:?} leaves the box")));
                }
            }
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
        let origin = vec![0i64; d];
        if !adj.contains_key(origin.as_slice()) {
            return Err(Error::OriginIsolated);
        }
        let mut local: BTreeMap<&[i64], usize> = BTreeMap::from([(origin.as_slice(), 0)]);
        let mut order: Vec<&[i64]> = vec![origin.as_slice()];
        let mut queue = VecDeque::from([origin.as_slice()]);
        let mut out = Vec::new();
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                let next = local.len();
                let j = *local.entry(u).or_insert_with(|| {
                    order.push(u);
                    queue.push_back(u);
                    next
                });
                out.push((local[v], j));
            }
        }
        let coords = order.into_iter().map(<[i64]>::to_vec).collect();
        Self::build(d, coords, out, box_radius)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }
    /// Lexicographically least sorted edge list over relabelings that keep
    /// the origin at 0, with the dimension prepended as a loop `(d, d)`.
    fn rooted_form(&self) -> Vec<(usize, usize)> {
        let k = self.len();
        let mut perm: Vec<usize> = (0..k).collect();
        let mut best: Option<Vec<(usize, usize)>> = None;
        loop {
            let mut e: Vec<(usize, usize)> = self
                .edges()
                .map(|(a, b)| {
                    let (x, y) = (perm[a], perm[b]);
                    (x.min(y), x.max(y))
                })
                .collect();
            e.sort();
            if best.as_ref().map_or(true, |b| e < *b) {
                best = Some(e);
            }
            // next permutation of perm[1..]
            let tail = &mut perm[1..];
            let Some(i) = (1..tail.len()).rev().find(|&i| tail[i - 1] < tail[i]) else { break };
            let j = (i..tail.len()).rev().find(|&j| tail[j] > tail[i - 1]).unwrap();
            tail.swap(i - 1, j);
            tail[i..].reverse();
        }
        let mut out = vec![(self.d, self.d)];
        out.extend(best.unwrap_or_default());
        out
    }


    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn adjacency(&self, v: usize) -> &[usize] {
        self.graph.adjacency(v)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.graph.edges()
    }

    /// Graph distances from the origin.
    pub fn distances(&self) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.len()];
        dist[0] = 0;
        let mut queue = VecDeque::from([0]);
        while let Some(v) = queue.pop_front() {
            for &u in self.adjacency(v) {
                if dist[u] == usize::MAX {
                    dist[u] = dist[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        dist
    }

    /// `|B_m|`, the number of cluster vertices within graph distance `m`.
    pub fn ball_volume(&self, m: usize) -> usize {
        self.distances().iter().filter(|&&r| r <= m).count()
    }

    /// Edge-list text: a `d` line, an optional `box` line, then one edge
    /// per line as the `2d` coordinates of its endpoints.
    pub fn dump_edges(&self) -> String {
        let mut s = String::from("# origin cluster\n");
        let _ = writeln!(s, "d {}", self.d);
        if let Some(r) = self.box_radius {
            let _ = writeln!(s, "box {r}");
        }
        let mut lines: Vec<String> = self
            .edges()
            .map(|(a, b)| {
                let (a, b) = if self.coords[a] <= self.coords[b] { (a, b) } else { (b, a) };
                self.coords[a].iter().chain(&self.coords[b]).map(i64::to_string).collect::<Vec<_>>().join(" ")
            })
            .collect();
        lines.sort();
        for l in lines {
            s.push_str(&l);
            s.push('\n');
        }
        s
    }
}

impl Graph for ClusterGraph {
    type Vertex = usize;

    fn neighbors(&self, v: &usize) -> Result<Vec<usize>> {
        self.graph.neighbors(v)
    }

    fn valency_bound(&self) -> usize {
        2 * self.d
    }
}

/// Parses [`ClusterGraph::dump_edges`] output.
pub fn load_cluster_edges(text: &str) -> Result<ClusterGraph> {
    let mut d = None;
    let mut box_radius = None;
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut words = line.split_whitespace();
        match words.next() {
            Some("d") => {
                if d.is_some() || !edges.is_empty() {
                    return Err(err("misplaced d line".into()));
                }
                let v: usize = words.next().and_then(|w| w.parse().ok()).ok_or_else(|| err("bad dimension".into()))?;
                if !(1..=3).contains(&v) || words.next().is_some() {
                    return Err(err(format!("dimension {v} not in 1..=3")));
                }
                d = Some(v);
            }
            Some("box") => {
                if box_radius.is_some() || !edges.is_empty() {
                    return Err(err("misplaced box line".into()));
                }
                let v: i64 = words.next().and_then(|w| w.parse().ok()).ok_or_else(|| err("bad box radius".into()))?;
                if !(0..=1 << 20).contains(&v) || words.next().is_some() {
                    return Err(err(format!("box radius {v} out of range")));
                }
                box_radius = Some(v);
            }
            Some(_) => {
                let d = d.ok_or_else(|| err("edge before d line".into()))?;
                let nums: Vec<i64> = line
                    .split_whitespace()
                    .map(|w| w.parse::<i64>().ok().filter(|v| v.abs() <= 1 << 40))
                    .collect::<Option<_>>()
                    .ok_or_else(|| err("bad coordinate".into()))?;
                if nums.len() != 2 * d {
                    return Err(err(format!("expected {} coordinates, got {}", 2 * d, nums.len())));
                }
                edges.push((nums[..d].to_vec(), nums[d..].to_vec()));
            }
            None => unreachable!("blank lines are skipped"),
        }
    }
    let d = d.ok_or(Error::Parse { line: 0, msg: "missing d line".into() })?;
    ClusterGraph::from_lattice_edges(d, &edges, box_radius)
}

pub fn sample_cluster(d: usize, radius: i64, p: f64, seed: u64) -> Result<ClusterGraph> {
    BondSample::new(d, radius, p, seed)?.origin_cluster()
}

/// Samples clusters from successive seeds until one touches the box
/// boundary, a proxy for the origin lying in the infinite cluster.
/// Returns the cluster and the number of rejected samples.
pub fn sample_spanning_cluster(d: usize, radius: i64, p: f64, seed: u64, max_tries: usize) -> Result<(ClusterGraph, usize)> {
    let mut r = rng::master(seed);
    for tries in 0..max_tries {
        match sample_cluster(d, radius, p, r.gen()) {
            Ok(c) if c.touches_boundary => return Ok((c, tries)),
            Ok(_) | Err(Error::OriginIsolated) => {}
            Err(e) => return Err(e),
        }
    }
    Err(Error::InvalidParameter(format!("no spanning cluster in {max_tries} samples at p = {p}")))
}

/// Every origin cluster of `Z^d` with `2..=max_vertices` vertices, up to
/// isomorphism fixing the origin, in a deterministic order.
pub fn enumerable_clusters(d: usize, max_vertices: usize) -> Result<Vec<ClusterGraph>> {
    if !(1..=3).contains(&d) || max_vertices > 6 {
        return Err(Error::InvalidParameter(format!("enumeration needs d in 1..=3 and at most 6 vertices, got d = {d}, {max_vertices}")));
    }
    type Edge = (Vec<i64>, Vec<i64>);
    let unit = |x: &[i64], dir: usize, s: i64| {
        let mut y = x.to_vec();
        y[dir] += s;
        y
    };
    let mut seen: BTreeSet<Vec<Edge>> = BTreeSet::new();
    let mut stack: Vec<Vec<Edge>> = vec![Vec::new()];
    let mut shapes: BTreeMap<Vec<(usize, usize)>, ClusterGraph> = BTreeMap::new();
    while let Some(edges) = stack.pop() {
        let mut verts: BTreeSet<Vec<i64>> = edges.iter().flat_map(|(a, b)| [a.clone(), b.clone()]).collect();
        verts.insert(vec![0; d]);
        if !edges.is_empty() {
            let c = ClusterGraph::from_lattice_edges(d, &edges, None)?;
            shapes.entry(c.rooted_form()).or_insert(c);
        }
        for x in &verts {
            for dir in 0..d {
                for s in [-1, 1] {
                    let y = unit(x, dir, s);
                    let e = if *x < y { (x.clone(), y.clone()) } else { (y.clone(), x.clone()) };
                    if edges.contains(&e) || (!verts.contains(&y) && verts.len() == max_vertices) {
                        continue;
                    }
                    let mut next = edges.clone();
                    next.push(e);
                    next.sort();
                    if seen.insert(next.clone()) {
                        stack.push(next);
                    }
                }
            }
        }
    }
    Ok(shapes.into_values().collect())
}

/// `exp(-lambda sum_x L_x^alpha)` over visited `x`.
pub fn functional_sum_alpha<V: Eq + std::hash::Hash + Clone>(local: &LocalTimes<V>, alpha: f64, lambda: f64) -> f64 {
    (-lambda * local.values().map(|l| (l as f64).powf(alpha)).sum::<f64>()).exp()
}

/// `prod_x L_x^{-alpha}` over visited `x`.
pub fn functional_prod<V: Eq + std::hash::Hash + Clone>(local: &LocalTimes<V>, alpha: f64) -> f64 {
    local.values().map(|l| (l as f64).powf(-alpha)).product()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Functional {
    SumAlpha { alpha: f64, lambda: f64 },
    ProdAlpha { alpha: f64 },
    Visited { lambda: f64 },
}

impl Functional {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::SumAlpha { alpha, lambda } => (0.0..=1.0).contains(&alpha) && lambda >= 0.0 && lambda.is_finite(),
            Self::ProdAlpha { alpha } => alpha > 0.5 && alpha.is_finite(),
            Self::Visited { lambda } => lambda >= 0.0 && lambda.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("functional {self:?} outside its parameter range")))
        }
    }

    /// `ln` of the functional given the nonzero local times.
    pub fn ln_value(&self, counts: impl Iterator<Item = u64>) -> f64 {
        match *self {
            Self::SumAlpha { alpha, lambda } => -lambda * counts.map(|l| (l as f64).powf(alpha)).sum::<f64>(),
            Self::ProdAlpha { alpha } => -alpha * counts.map(|l| (l as f64).ln()).sum::<f64>(),
            Self::Visited { lambda } => -lambda * counts.count() as f64,
        }
    }

    /// The value when it does not depend on the path.
    fn constant(&self, n: usize) -> Option<f64> {
        match *self {
            Self::SumAlpha { lambda, .. } | Self::Visited { lambda } if lambda == 0.0 => Some(0.0),
            Self::SumAlpha { alpha, lambda } if alpha == 1.0 => Some(-lambda * (n + 1) as f64),
            _ => None,
        }
    }

    /// Lower bound on `ln` of the functional for paths of `n` steps that
    /// visit at most `v` sites, by concavity.
    fn ln_floor(&self, v: usize, n: usize) -> f64 {
        let t = (n + 1) as f64;
        let v = (v as f64).min(t);
        match *self {
            Self::SumAlpha { alpha, lambda } => -lambda * v.powf(1.0 - alpha) * t.powf(alpha),
            Self::Visited { lambda } => -lambda * v,
            Self::ProdAlpha { alpha } => {
                let k = v.min(t / std::f64::consts::E);
                -alpha * k * (t / k).ln()
            }
        }
    }
}

/// `eta = (d + alpha (2 - d)) / (2 + d (1 - alpha))`.
pub fn eta(d: usize, alpha: f64) -> f64 {
    let d = d as f64;
    (d + alpha * (2.0 - d)) / (2.0 + d * (1.0 - alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSpec {
    pub functional: Functional,
    /// Multiply by `1{X_n = 0}`.
    pub with_indicator: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalEstimate {
    pub functional: Functional,
    pub with_indicator: bool,
    pub n: u64,
    pub estimate: f64,
    pub ln_estimate: f64,
    pub stderr: f64,
    /// `stderr / estimate`, also the standard error of `ln_estimate`.
    pub rel_stderr: f64,
    pub samples: u64,
    pub seed: u64,
    pub cluster_size: usize,
    pub touches_boundary: bool,
    /// Ball radii of the confined proposals.
    pub radii: Vec<usize>,
}

/// Share of unconfined walks in the proposal.
const EPS: f64 = 0.05;
/// Share of the radius mixture spread uniformly.
const FLOOR: f64 = 0.2;

fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().filter(|x| *x > f64::NEG_INFINITY).collect();
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// The lazy walk killed on leaving a ball of the cluster.
struct Ball {
    members: Vec<usize>,
    /// Ball index of each cluster vertex, `usize::MAX` outside.
    local: Vec<usize>,
}

impl Ball {
    fn new(dist: &[usize], r: usize) -> Self {
        let members: Vec<usize> = (0..dist.len()).filter(|&v| dist[v] <= r).collect();
        let mut local = vec![usize::MAX; dist.len()];
        for (i, &v) in members.iter().enumerate() {
            local[v] = i;
        }
        Self { members, local }
    }

    /// One backward step: `h'(x) = (1/m(x)) sum_{y in N[x] and ball} h(y)`.
    fn step(&self, c: &ClusterGraph, h: &[f64]) -> Vec<f64> {
        self.members
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let nb = c.adjacency(v);
                let s: f64 = h[i] + nb.iter().filter_map(|&u| self.local.get(u).filter(|&&j| j != usize::MAX).map(|&j| h[j])).sum::<f64>();
                s / (nb.len() + 1) as f64
            })
            .collect()
    }

    /// `ln P_0(stay in the ball for n steps)`.
    fn ln_survival(&self, c: &ClusterGraph, n: usize) -> f64 {
        let mut h = vec![1.0; self.members.len()];
        let mut ln_scale = 0.0;
        for _ in 0..n {
            h = self.step(c, &h);
            let m = h.iter().cloned().fold(0.0, f64::max);
            if m == 0.0 {
                return f64::NEG_INFINITY;
            }
            h.iter_mut().for_each(|x| *x /= m);
            ln_scale += m.ln();
        }
        ln_scale + h[self.local[0]].ln()
    }

    /// Rows `h_s` for `s = 0..=n`, each scaled to max 1.
    fn table(&self, c: &ClusterGraph, n: usize) -> Vec<Vec<f64>> {
        let mut rows = vec![vec![1.0; self.members.len()]];
        for s in 1..=n {
            let mut h = self.step(c, &rows[s - 1]);
            let m = h.iter().cloned().fold(0.0, f64::max);
            if m > 0.0 {
                h.iter_mut().for_each(|x| *x /= m);
            }
            rows.push(h);
        }
        rows
    }
}

struct Confined {
    ball: Ball,
    rows: Vec<Vec<f64>>,
}

/// Radius-mixture importance sampler for walks of `n` steps from the origin.
struct RadiusSampler {
    radii: Vec<usize>,
    pi: Vec<f64>,
    confined: Vec<Confined>,
    /// `ln` of the importance weight for each path radius.
    ln_weight: Vec<f64>,
}

impl RadiusSampler {
    fn build(c: &ClusterGraph, dist: &[usize], f: &Functional, n: usize) -> Self {
        let max_r = dist.iter().copied().filter(|&r| r != usize::MAX).max().unwrap_or(0);
        let mut scores = Vec::new();
        let mut best = f64::NEG_INFINITY;
        let mut best_r = 0;
        for r in 0..=max_r {
            let ball = Ball::new(dist, r);
            let ln_z = ball.ln_survival(c, n);
            let s = ln_z + f.ln_floor(ball.members.len(), n);
            if s > best {
                best = s;
                best_r = r;
            }
            scores.push((r, ln_z, s));
            if r > 2 * best_r + 6 && s < best - 60.0 {
                break;
            }
        }
        let mut kept: Vec<(usize, f64, f64)> = scores.into_iter().filter(|t| t.1 > f64::NEG_INFINITY && t.2 >= best - 25.0).collect();
        kept.sort_by(|a, b| b.2.total_cmp(&a.2));
        kept.truncate(12);
        kept.sort_by_key(|t| t.0);
        let mass: f64 = kept.iter().map(|t| (t.2 - best).exp()).sum();
        let pi: Vec<f64> = kept
            .iter()
            .map(|t| (1.0 - FLOOR) * (t.2 - best).exp() / mass + FLOOR / kept.len() as f64)
            .collect();
        let ln_weight = (0..=max_r)
            .map(|radius| {
                let confined = log_sum_exp(kept.iter().zip(&pi).filter(|(t, _)| t.0 >= radius).map(|(t, p)| p.ln() - t.1));
                -log_sum_exp([EPS.ln(), (1.0 - EPS).ln() + confined])
            })
            .collect();
        let confined = kept
            .iter()
            .map(|t| {
                let ball = Ball::new(dist, t.0);
                let rows = ball.table(c, n);
                Confined { ball, rows }
            })
            .collect();
        Self {
            radii: kept.iter().map(|t| t.0).collect(),
            pi,
            confined,
            ln_weight,
        }
    }

    fn draw(&self, c: &ClusterGraph, n: usize, r: &mut WalkRng, path: &mut Vec<usize>) {
        path.clear();
        path.push(0);
        let mut x = 0;
        if r.gen::<f64>() < EPS || self.confined.is_empty() {
            for _ in 0..n {
                let nb = c.adjacency(x);
                let k = r.gen_range(0..=nb.len());
                if k < nb.len() {
                    x = nb[k];
                }
                path.push(x);
            }
            return;
        }
        let u: f64 = r.gen();
        let mut acc = 0.0;
        let mut pick = self.pi.len() - 1;
        for (i, p) in self.pi.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = i;
                break;
            }
        }
        let conf = &self.confined[pick];
        let mut cand: Vec<(usize, f64)> = Vec::with_capacity(2 * c.d + 1);
        for t in 0..n {
            let row = &conf.rows[n - t - 1];
            cand.clear();
            for &y in std::iter::once(&x).chain(c.adjacency(x)) {
                let j = conf.ball.local[y];
                if j != usize::MAX && row[j] > 0.0 {
                    cand.push((y, row[j]));
                }
            }
            let total: f64 = cand.iter().map(|p| p.1).sum();
            let mut u = r.gen::<f64>() * total;
            x = cand.last().expect("the ball survives").0;
            for &(y, w) in &cand {
                if u < w {
                    x = y;
                    break;
                }
                u -= w;
            }
            path.push(x);
        }
    }
}

/// Monte Carlo average of the functional over lazy walks of `n` steps from
/// the origin, using a radius-mixture proposal so that the rare confined
/// paths that dominate the mean are sampled.
pub fn estimate_functional(cluster: &ClusterGraph, spec: FunctionalSpec, n: usize, samples: usize, seed: u64) -> Result<FunctionalEstimate> {
    spec.functional.validate()?;
    if cluster.len() < 2 {
        return Err(Error::OriginIsolated);
    }
    let mut out = FunctionalEstimate {
        functional: spec.functional,
        with_indicator: spec.with_indicator,
        n: n as u64,
        estimate: 0.0,
        ln_estimate: f64::NEG_INFINITY,
        stderr: 0.0,
        rel_stderr: 0.0,
        samples: samples as u64,
        seed,
        cluster_size: cluster.len(),
        touches_boundary: cluster.touches_boundary,
        radii: Vec::new(),
    };
    if !spec.with_indicator {
        if let Some(c) = spec.functional.constant(n) {
            out.ln_estimate = c;
            out.estimate = c.exp();
            return Ok(out);
        }
    }
    let dist = cluster.distances();
    let sampler = RadiusSampler::build(cluster, &dist, &spec.functional, n);
    let parts: Vec<Vec<f64>> = rng::chunks(samples)
        .into_par_iter()
        .map(|(idx, len)| {
            let mut r = rng::stream(seed, idx);
            let mut path = Vec::with_capacity(n + 1);
            let mut counts = vec![0u64; cluster.len()];
            let mut touched = Vec::new();
            (0..len)
                .map(|_| {
                    sampler.draw(cluster, n, &mut r, &mut path);
                    if spec.with_indicator && *path.last().expect("nonempty") != 0 {
                        return f64::NEG_INFINITY;
                    }
                    touched.clear();
                    let mut radius = 0;
                    for &v in path.iter() {
                        if counts[v] == 0 {
                            touched.push(v);
                        }
                        counts[v] += 1;
                        radius = radius.max(dist[v]);
                    }
                    let ln_f = spec.functional.ln_value(touched.iter().map(|&v| counts[v]));
                    for &v in &touched {
                        counts[v] = 0;
                    }
                    ln_f + sampler.ln_weight[radius]
                })
                .collect()
        })
        .collect();
    let shift = parts.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    out.radii = sampler.radii.clone();
    if shift == f64::NEG_INFINITY {
        return Ok(out);
    }
    let mut total = Welford::new();
    for p in &parts {
        let mut w = Welford::new();
        p.iter().for_each(|v| w.push((v - shift).exp()));
        total.merge(&w);
    }
    out.ln_estimate = shift + total.mean().ln();
    out.estimate = out.ln_estimate.exp();
    out.rel_stderr = total.stderr() / total.mean();
    out.stderr = out.estimate * out.rel_stderr;
    Ok(out)
}

/// Joint law of the end point and the local times after `n` steps. Local
/// times are sorted `(vertex, count)` lists.
pub fn local_time_law<G: Graph, P: Prob>(
    g: &G,
    start: &G::Vertex,
    n: usize,
    budget: usize,
) -> Result<Vec<BTreeMap<(G::Vertex, Vec<(G::Vertex, u32)>), P>>> {
    let mut cur: BTreeMap<(G::Vertex, Vec<(G::Vertex, u32)>), P> = BTreeMap::from([((start.clone(), vec![(start.clone(), 1)]), P::one())]);
    let mut steps = vec![cur.clone()];
    let mut rows: BTreeMap<G::Vertex, (Vec<G::Vertex>, P)> = BTreeMap::new();
    for _ in 0..n {
        let mut next: BTreeMap<(G::Vertex, Vec<(G::Vertex, u32)>), P> = BTreeMap::new();
        for ((x, lt), p) in &cur {
            if !rows.contains_key(x) {
                let nb = g.neighbors(x)?;
                let w = P::recip_of(nb.len() as u64 + 1);
                rows.insert(x.clone(), (nb, w));
            }
            let (nb, w) = &rows[x];
            let q = p.clone() * w.clone();
            for y in std::iter::once(x).chain(nb) {
                let mut l = lt.clone();
                match l.binary_search_by(|e| e.0.cmp(y)) {
                    Ok(i) => l[i].1 += 1,
                    Err(i) => l.insert(i, (y.clone(), 1)),
                }
                *next.entry((y.clone(), l)).or_insert_with(P::zero) += q.clone();
            }
            if next.len() > budget {
                return Err(Error::BudgetExceeded { budget });
            }
        }
        cur = next;
        steps.push(cur.clone());
    }
    Ok(steps)
}

fn bucket(x: f64) -> u64 {
    (x + 1e-9).floor().max(0.0) as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiduleLevel {
    pub m: u64,
    /// `P(level of S_n = m)^2`.
    pub lhs: Exact,
    /// `2d (2m+1)^d P(level of S_2n <= cap, X_2n = 0)`.
    pub rhs: Exact,
    /// Largest level of `S_2n` admitted on the right.
    pub cap: u64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiduleReport {
    pub n: usize,
    pub alpha: f64,
    /// `S = sum_x L_x^alpha`.
    pub power: Vec<BiduleLevel>,
    /// `S = sum_x ln L_x`.
    pub log: Vec<BiduleLevel>,
}

impl BiduleReport {
    pub fn power_holds(&self) -> bool {
        self.power.iter().all(|l| l.holds)
    }

    pub fn log_holds(&self) -> bool {
        self.log.iter().all(|l| l.holds)
    }

    pub fn holds(&self) -> bool {
        self.power_holds() && self.log_holds()
    }

    /// Levels that fail, as `(variant, m)`.
    pub fn failures(&self) -> Vec<(&'static str, u64)> {
        let p = self.power.iter().filter(|l| !l.holds).map(|l| ("power", l.m));
        p.chain(self.log.iter().filter(|l| !l.holds).map(|l| ("log", l.m))).collect()
    }
}

/// Both sides of `P(S_n = m)^2 <= 2d (2m+1)^d P(S_2n <= 2m, X_2n = 0)` for
/// every achieved level `m`, exactly.
///
/// Irrational sums are bucketed to integer levels `floor(S)`. Two level-`m`
/// halves only give `S_2n < 2m + 2`, so the right side admits level
/// `2m + 1` unless the sums are integers (`alpha` in `{0, 1}`).
pub fn check_bidule(cluster: &ClusterGraph, n: usize, alpha: f64, budget: usize) -> Result<BiduleReport> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} not in [0, 1]")));
    }
    let steps = local_time_law::<_, Exact>(cluster, &0, 2 * n, budget)?;
    let integral = alpha == 0.0 || alpha == 1.0;
    let power = |l: u32| (l as f64).powf(alpha);
    let log = |l: u32| (l as f64).ln();
    let d = cluster.d as u32;
    let side = |f: &dyn Fn(u32) -> f64, integral: bool| -> Vec<BiduleLevel> {
        let mut first: BTreeMap<u64, Exact> = BTreeMap::new();
        for ((_, lt), p) in &steps[n] {
            *first.entry(bucket(lt.iter().map(|e| f(e.1)).sum())).or_insert_with(Exact::zero) += p.clone();
        }
        let mut back: BTreeMap<u64, Exact> = BTreeMap::new();
        for ((x, lt), p) in &steps[2 * n] {
            if *x == 0 {
                *back.entry(bucket(lt.iter().map(|e| f(e.1)).sum())).or_insert_with(Exact::zero) += p.clone();
            }
        }
        first
            .into_iter()
            .map(|(m, p)| {
                let cap = if integral { 2 * m } else { 2 * m + 1 };
                let tail = back.range(..=cap).fold(Exact::zero(), |a, (_, q)| a + q.clone());
                let c = 2 * d as u64 * (2 * m + 1).pow(d);
                let rhs = Exact::ratio(c, 1) * tail;
                let lhs = p.clone() * p;
                BiduleLevel {
                    m,
                    holds: lhs <= rhs,
                    lhs,
                    rhs,
                    cap,
                }
            })
            .collect()
    };
    Ok(BiduleReport {
        n,
        alpha,
        power: side(&power, integral),
        log: side(&log, false),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluation {
    /// Exact local-time law in floating point.
    Exact { budget: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub lambda: f64,
    /// `E[exp(-lambda sum L^alpha)]`.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// `|B_m|`.
    pub ball_volume: usize,
    /// `P(sup_i d(0, X_i) <= m)`.
    pub confinement: f64,
    /// `exp(-lambda |B_m|^{1-alpha} (n+1)^alpha) * confinement`.
    pub rhs: f64,
    /// `ln(lhs / rhs)`.
    pub slack: f64,
    pub holds: bool,
}

/// The confinement lower bound on `E[exp(-lambda sum L^alpha)]`.
pub fn check_lower_bound_sum(cluster: &ClusterGraph, n: usize, alpha: f64, lambda: f64, m: usize, eval: Evaluation) -> Result<LowerBoundReport> {
    let functional = Functional::SumAlpha { alpha, lambda };
    functional.validate()?;
    let ball_set: BTreeSet<usize> = ball(cluster, &0, m)?;
    let volume = ball_set.len();
    let confinement: f64 = confined_prob(cluster, &0, &ball_set, n)?;
    let rhs = (-lambda * (volume as f64).powf(1.0 - alpha) * ((n + 1) as f64).powf(alpha)).exp() * confinement;
    let (lhs, lhs_stderr) = match eval {
        Evaluation::Exact { budget } => {
            let law = local_time_law::<_, f64>(cluster, &0, n, budget)?;
            let e = law[n].iter().map(|((_, lt), p)| p * functional.ln_value(lt.iter().map(|e| e.1 as u64)).exp()).sum();
            (e, 0.0)
        }
        Evaluation::MonteCarlo { samples, seed } => {
            let spec = FunctionalSpec { functional, with_indicator: false };
            let e = estimate_functional(cluster, spec, n, samples, seed)?;
            (e.estimate, e.stderr)
        }
    };
    Ok(LowerBoundReport {
        n,
        m,
        alpha,
        lambda,
        lhs,
        lhs_stderr,
        ball_volume: volume,
        confinement,
        rhs,
        slack: (lhs / rhs).ln(),
        holds: lhs + 3.0 * lhs_stderr >= rhs * (1.0 - 1e-12),
    })
}

/// `m = round(n^{(1-alpha)/(2 + d(1-alpha))})`, at least 1.
pub fn paper_radius(n: usize, alpha: f64, d: usize) -> usize {
    let e = (1.0 - alpha) / (2.0 + d as f64 * (1.0 - alpha));
    ((n as f64).powf(e).round() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendConfig {
    pub d: usize,
    pub p: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub n_grid: Vec<usize>,
    pub clusters: usize,
    pub samples: usize,
    pub seed: u64,
    pub box_radius: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub n: usize,
    /// Mean over clusters of `-ln E[exp(-lambda sum L^alpha)]`.
    pub neg_log: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendReport {
    pub eta_hat: f64,
    pub stderr: f64,
    pub target: f64,
    pub points: Vec<TrendPoint>,
    pub fit: StretchedFit,
    /// Clusters rejected for not reaching the box boundary.
    pub rejected: usize,
}

/// Fits `-ln E[exp(-lambda sum L^alpha)] ~ c (n+1)^eta` over the grid,
/// averaging the log over spanning clusters.
pub fn exponent_trend(cfg: &TrendConfig) -> Result<TrendReport> {
    if cfg.clusters == 0 {
        return Err(Error::InvalidParameter("need at least one cluster".into()));
    }
    let functional = Functional::SumAlpha {
        alpha: cfg.alpha,
        lambda: cfg.lambda,
    };
    functional.validate()?;
    let mut clusters = Vec::with_capacity(cfg.clusters);
    let mut rejected = 0;
    for i in 0..cfg.clusters {
        let s: u64 = rng::stream(cfg.seed, i as u64).gen();
        let (c, r) = sample_spanning_cluster(cfg.d, cfg.box_radius, cfg.p, s, 1000)?;
        clusters.push(c);
        rejected += r;
    }
    let spec = FunctionalSpec {
        functional,
        with_indicator: false,
    };
    let mut points = Vec::with_capacity(cfg.n_grid.len());
    for (j, &n) in cfg.n_grid.iter().enumerate() {
        let mut sum = 0.0;
        let mut var = 0.0;
        for (i, c) in clusters.iter().enumerate() {
            let e = estimate_functional(c, spec, n, cfg.samples, cfg.seed ^ ((i as u64) << 32 | j as u64))?;
            sum -= e.ln_estimate;
            var += e.rel_stderr * e.rel_stderr;
        }
        let k = clusters.len() as f64;
        points.push(TrendPoint {
            n,
            neg_log: sum / k,
            stderr: var.sqrt() / k,
        });
    }
    let series: Vec<(f64, f64, f64)> = points.iter().map(|p| ((p.n + 1) as f64, p.neg_log, p.stderr)).collect();
    let fit = fit_neg_log(&series)?;
    Ok(TrendReport {
        eta_hat: fit.alpha_hat,
        stderr: fit.stderr,
        target: eta(cfg.d, cfg.alpha),
        points,
        fit,
        rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::trace::simulate;
    use num_traits::One;
    use proptest::prelude::*;

#[test]
    fn small_cluster_counts() {
        // On the line, a path of k vertices has ceil(k / 2) rooted shapes.
        let counts: Vec<usize> = (2..=4).map(|k| enumerable_clusters(1, k).unwrap().len()).collect();
        assert_eq!(counts, vec![1, 3, 5]);
        let two = enumerable_clusters(2, 4).unwrap();
        assert!(two.iter().all(|c| c.len() <= 4 && c.d == 2));
        let squares = two.iter().filter(|c| c.edges().count() == 4).count();
        assert_eq!(squares, 1);
        assert!(enumerable_clusters(4, 3).is_err());
    }

        fn line_cluster(lo: i64, hi: i64) -> ClusterGraph {
        let edges: Vec<(Vec<i64>, Vec<i64>)> = (lo..hi).map(|x| (vec![x], vec![x + 1])).collect();
        ClusterGraph::from_lattice_edges(1, &edges, None).unwrap()
    }

    struct UnionFind(Vec<usize>);

    impl UnionFind {
        fn find(&mut self, x: usize) -> usize {
            let p = self.0[x];
            if p == x {
                return x;
            }
            let r = self.find(p);
            self.0[x] = r;
            r
        }

        fn union(&mut self, a: usize, b: usize) {
            let (a, b) = (self.find(a), self.find(b));
            self.0[a] = b;
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let a = BondSample::new(2, 6, 0.6, 5).unwrap();
        assert_eq!(a, BondSample::new(2, 6, 0.6, 5).unwrap());
        assert_ne!(a.bits(), BondSample::new(2, 6, 0.6, 6).unwrap().bits());
        assert_eq!(a.bits().len(), 13 * 13 * 2);
    }

    #[test]
    fn full_retention_gives_whole_box() {
        for d in 1..=3 {
            let c = sample_cluster(d, 3, 1.0, 0).unwrap();
            assert_eq!(c.len(), 7usize.pow(d as u32));
            assert!(c.touches_boundary);
            assert_eq!(c.edges().count(), d * 6 * 7usize.pow(d as u32 - 1));
        }
    }

    #[test]
    fn line_cluster_is_retained_interval() {
        for seed in 0..40 {
            let s = BondSample::new(1, 20, 0.5, seed).unwrap();
            let o = s.index(&[0]).unwrap();
            let mut lo = o;
            while lo > 0 && s.is_open(lo - 1, 0) {
                lo -= 1;
            }
            let mut hi = o;
            while s.is_open(hi, 0) {
                hi += 1;
            }
            match s.origin_cluster() {
                Ok(c) => {
                    let mut xs: Vec<i64> = c.coords.iter().map(|x| x[0]).collect();
                    xs.sort();
                    assert_eq!(xs, (lo as i64 - 20..=hi as i64 - 20).collect::<Vec<_>>());
                }
                Err(Error::OriginIsolated) => assert_eq!(lo, hi),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn cluster_matches_union_find() {
        for seed in 0..100 {
            let d = 1 + (seed as usize % 3);
            let radius = [12, 5, 3][d - 1];
            let s = BondSample::new(d, radius, 0.55, seed).unwrap();
            let mut uf = UnionFind((0..s.vertex_count()).collect());
            for v in 0..s.vertex_count() {
                for dir in 0..d {
                    if s.is_open(v, dir) {
                        uf.union(v, v + ((2 * radius + 1) as usize).pow(dir as u32));
                    }
                }
            }
            let o = s.index(&vec![0; d]).unwrap();
            let root = uf.find(o);
            let want: BTreeSet<Vec<i64>> = (0..s.vertex_count()).filter(|&v| uf.find(v) == root).map(|v| s.coords(v)).collect();
            match s.origin_cluster() {
                Ok(c) => assert_eq!(c.coords.iter().cloned().collect::<BTreeSet<_>>(), want),
                Err(Error::OriginIsolated) => assert_eq!(want.len(), 1),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn edge_list_roundtrip() {
        let c = sample_cluster(2, 5, 0.7, 3).unwrap();
        let text = c.dump_edges();
        let back = load_cluster_edges(&text).unwrap();
        assert_eq!(back.dump_edges(), text);
        assert_eq!(back.len(), c.len());
        assert_eq!(back.touches_boundary, c.touches_boundary);
        assert!(load_cluster_edges("d 1\n0 2\n").is_err());
        assert!(load_cluster_edges("0 1\n").is_err());
        assert!(matches!(load_cluster_edges("d 1\n1 2\n"), Err(Error::OriginIsolated)));
        assert!(load_cluster_edges("d 2\n0 0 1\n").is_err());
    }

    #[test]
    fn functional_examples() {
        let c = line_cluster(0, 1);
        let mut r = rng::master(0);
        let t = simulate(&c, &0, 9, &mut r).unwrap();
        assert!((functional_sum_alpha(&t.local, 1.0, 0.3) - (-0.3f64 * 10.0).exp()).abs() < 1e-15);
        assert!((functional_sum_alpha(&t.local, 0.0, 0.7) - (-0.7 * t.local.visited() as f64).exp()).abs() < 1e-15);
        let mut single = LocalTimes::new();
        (0..4).for_each(|_| single.visit(&0usize));
        assert!((functional_sum_alpha(&single, 0.6, 1.0) - (-(4f64.powf(0.6))).exp()).abs() < 1e-15);
        assert!((functional_prod(&single, 0.6) - 4f64.powf(-0.6)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn prod_is_exp_of_log_sum(seed in 0u64..500, n in 1usize..60, alpha in 0.5f64..2.0) {
            let c = sample_cluster(2, 4, 0.8, 1).unwrap();
            let t = simulate(&c, &0, n, &mut rng::master(seed)).unwrap();
            let direct = functional_prod(&t.local, alpha);
            let via_log = Functional::ProdAlpha { alpha }.ln_value(t.local.values()).exp();
            prop_assert!((direct - via_log).abs() < 1e-12);
            prop_assert!(direct > 0.0 && direct <= 1.0);
            let s = functional_sum_alpha(&t.local, alpha.min(1.0), 0.5);
            prop_assert!(s > 0.0 && s <= 1.0);
        }
    }

    /// Every lazy path of `n` steps with its probability.
    fn all_paths(c: &ClusterGraph, n: usize) -> Vec<(Vec<usize>, f64)> {
        let mut out = vec![(vec![0], 1.0)];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|(p, w)| {
                    let x = *p.last().unwrap();
                    let nb = c.adjacency(x);
                    let q = w / (nb.len() + 1) as f64;
                    std::iter::once(x).chain(nb.iter().copied()).map(move |y| {
                        let mut p = p.clone();
                        p.push(y);
                        (p, q)
                    }).collect::<Vec<_>>()
                })
                .collect();
        }
        out
    }

    #[test]
    fn law_matches_path_enumeration() {
        let c = line_cluster(-1, 1);
        let paths = all_paths(&c, 4);
        assert!((paths.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-15);
        let exact: f64 = paths.iter().map(|(p, w)| {
            let visited: BTreeSet<_> = p.iter().collect();
            w * (-(visited.len() as f64)).exp()
        }).sum();
        let law = local_time_law::<_, f64>(&c, &0, 4, 1 << 20).unwrap();
        let dp: f64 = law[4].iter().map(|((_, lt), p)| p * (-(lt.len() as f64)).exp()).sum();
        assert!((exact - dp).abs() < 1e-14);
        let e = estimate_functional(&c, FunctionalSpec { functional: Functional::Visited { lambda: 1.0 }, with_indicator: false }, 4, 40_000, 2).unwrap();
        assert!((e.estimate - exact).abs() < 4.0 * e.stderr, "{} vs {exact} ({})", e.estimate, e.stderr);
        let s = estimate_functional(&c, FunctionalSpec { functional: Functional::SumAlpha { alpha: 0.0, lambda: 1.0 }, with_indicator: false }, 4, 40_000, 2).unwrap();
        assert_eq!(s.ln_estimate, e.ln_estimate);
    }

    #[test]
    fn indicator_variant_matches_exact() {
        let c = sample_cluster(2, 3, 0.75, 4).unwrap();
        let f = Functional::SumAlpha { alpha: 0.5, lambda: 0.7 };
        let law = local_time_law::<_, f64>(&c, &0, 8, 1 << 22).unwrap();
        let exact: f64 = law[8].iter().filter(|((x, _), _)| *x == 0).map(|((_, lt), p)| p * f.ln_value(lt.iter().map(|e| e.1 as u64)).exp()).sum();
        let e = estimate_functional(&c, FunctionalSpec { functional: f, with_indicator: true }, 8, 60_000, 9).unwrap();
        assert!((e.estimate - exact).abs() < 4.0 * e.stderr, "{} vs {exact} ({})", e.estimate, e.stderr);
    }

    #[test]
    fn trivial_functionals_are_exact() {
        let c = sample_cluster(2, 6, 0.7, 1).unwrap();
        let zero = estimate_functional(&c, FunctionalSpec { functional: Functional::SumAlpha { alpha: 0.4, lambda: 0.0 }, with_indicator: false }, 50, 100, 0).unwrap();
        assert_eq!((zero.estimate, zero.stderr), (1.0, 0.0));
        let one = estimate_functional(&c, FunctionalSpec { functional: Functional::SumAlpha { alpha: 1.0, lambda: 0.5 }, with_indicator: false }, 50, 100, 0).unwrap();
        assert_eq!(one.ln_estimate, -25.5);
        assert!(estimate_functional(&c, FunctionalSpec { functional: Functional::ProdAlpha { alpha: 0.4 }, with_indicator: false }, 5, 10, 0).is_err());
    }

    #[test]
    fn estimates_are_reproducible() {
        let c = sample_cluster(2, 8, 0.7, 2).unwrap();
        let spec = FunctionalSpec { functional: Functional::Visited { lambda: 1.0 }, with_indicator: false };
        let a = rng::with_workers(1, || estimate_functional(&c, spec, 64, 700, 3)).unwrap();
        let b = rng::with_workers(3, || estimate_functional(&c, spec, 64, 700, 3)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn monotone_in_lambda_and_n() {
        let c = line_cluster(-3, 3);
        let law = local_time_law::<_, f64>(&c, &0, 9, 1 << 22).unwrap();
        for alpha in [0.0, 0.3, 0.7, 1.0] {
            let mut prev_n = f64::INFINITY;
            for step in &law {
                let mut prev_l = f64::INFINITY;
                for lambda in [0.1, 0.5, 1.0, 2.0] {
                    let f = Functional::SumAlpha { alpha, lambda };
                    let e: f64 = step.iter().map(|((_, lt), p)| p * f.ln_value(lt.iter().map(|e| e.1 as u64)).exp()).sum();
                    assert!(e <= prev_l + 1e-15);
                    if lambda == 1.0 {
                        assert!(e <= prev_n + 1e-15);
                        prev_n = e;
                    }
                    prev_l = e;
                }
            }
        }
    }

    #[test]
    fn large_time_estimate_tracks_heavier_sampling() {
        let c = sample_cluster(2, 20, 0.7, 7).unwrap();
        let spec = FunctionalSpec { functional: Functional::Visited { lambda: 1.0 }, with_indicator: false };
        let a = estimate_functional(&c, spec, 256, 2000, 1).unwrap();
        let b = estimate_functional(&c, spec, 256, 8000, 2).unwrap();
        assert!(a.rel_stderr < 0.5, "{}", a.rel_stderr);
        assert!((a.ln_estimate - b.ln_estimate).abs() < 4.0 * (a.rel_stderr + b.rel_stderr), "{} vs {}", a.ln_estimate, b.ln_estimate);
    }

    #[test]
    fn bidule_on_single_edge() {
        let c = line_cluster(0, 1);
        let r = check_bidule(&c, 1, 0.0, 1 << 20).unwrap();
        assert!(r.power_holds());
        // n = 1: N_1 = 1 with prob 1/2, 2 with prob 1/2.
        assert_eq!(r.power[0].lhs, Exact::ratio(1, 4));
        let r = check_bidule(&c, 2, 0.5, 1 << 20).unwrap();
        let total = r.power.iter().fold(Exact::zero(), |a, l| a + l.lhs.clone());
        assert!(total <= Exact::one());
        assert!(r.holds());
    }

    #[test]
    fn bidule_on_small_clusters() {
        let path3 = line_cluster(-1, 1);
        for alpha in [0.0, 0.6, 1.0] {
            let r = check_bidule(&path3, 3, alpha, 1 << 22).unwrap();
            assert!(r.power_holds(), "alpha={alpha}: {:?}", r.power);
        }
        let corner = ClusterGraph::from_lattice_edges(2, &[(vec![0, 0], vec![1, 0]), (vec![0, 0], vec![0, 1]), (vec![0, 1], vec![-1, 1])], None).unwrap();
        assert!(check_bidule(&corner, 3, 0.3, 1 << 22).unwrap().power_holds());
    }

    #[test]
    fn log_variant_fails_at_level_zero() {
        // Level 0 of sum ln L means no revisits, but X_2n = 0 forces the
        // origin to be revisited, so the right side vanishes.
        let c = line_cluster(-1, 1);
        let r = check_bidule(&c, 1, 0.5, 1 << 20).unwrap();
        assert!(r.power_holds());
        assert_eq!(r.failures(), vec![("log", 0)]);
        assert_eq!(r.log[0].lhs, Exact::one());
        assert!(r.log[0].rhs < Exact::one());
        let r = check_bidule(&line_cluster(0, 3), 4, 0.0, 1 << 22).unwrap();
        assert_eq!(r.failures(), vec![("log", 0)]);
    }

    #[test]
    fn bidule_budget() {
        let c = sample_cluster(2, 3, 1.0, 0).unwrap();
        assert!(matches!(check_bidule(&c, 6, 0.5, 1000), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn lower_bound_exact_on_interval() {
        let c = line_cluster(-6, 6);
        for alpha in [0.0, 0.5, 1.0] {
            let r = check_lower_bound_sum(&c, 16, alpha, 1.0, 3, Evaluation::Exact { budget: 1 << 23 }).unwrap();
            assert!(r.holds, "{r:?}");
            assert_eq!(r.ball_volume, 7);
            if alpha == 1.0 {
                assert!((r.lhs / (-17f64).exp() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn lower_bound_monte_carlo_on_plane() {
        let (c, _) = sample_spanning_cluster(2, 24, 0.7, 8, 100).unwrap();
        let m = paper_radius(256, 0.0, 2);
        assert_eq!(m, 4);
        let r = check_lower_bound_sum(&c, 256, 0.0, 1.0, m, Evaluation::MonteCarlo { samples: 2000, seed: 1 }).unwrap();
        assert!(r.holds, "{r:?}");
        assert!(r.slack > 0.0);
    }

    #[test]
    fn eta_formula() {
        assert_eq!(eta(2, 0.0), 0.5);
        assert_eq!(eta(2, 1.0), 1.0);
        assert!((eta(2, 0.5) - 2.0 / 3.0).abs() < 1e-15);
        assert!((eta(1, 0.0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn linear_trend_is_exact() {
        let cfg = TrendConfig {
            d: 2,
            p: 0.7,
            alpha: 1.0,
            lambda: 1.0,
            n_grid: vec![16, 32, 64, 128, 256],
            clusters: 3,
            samples: 100,
            seed: 4,
            box_radius: 10,
        };
        let r = exponent_trend(&cfg).unwrap();
        assert!((r.eta_hat - 1.0).abs() < 1e-9);
        assert_eq!(r.target, 1.0);
    }
}
