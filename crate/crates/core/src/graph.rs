//! Bounded-valency graphs, the lazy transition kernel and exact propagation.
//!
//! The lazy kernel jumps uniformly over the current vertex and its
//! neighbors: `p(a, b) = (1{a ~ b} + 1{a = b}) / (deg(a) + 1)`. It is
//! reversible with respect to `m(x) = deg(x) + 1`.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::hash::Hash;

use rand::Rng;

use crate::error::{Error, Result};
use crate::prob::Prob;

/// A vertex that can be attached to a lamp. `site` is an integer coordinate
/// used to look up lamp indices and fiber sizes.
pub trait Site: Clone + Eq + Hash + Ord + Debug + Send + Sync {
    fn site(&self) -> i64;
}

impl Site for i64 {
    fn site(&self) -> i64 {
        *self
    }
}

impl Site for usize {
    fn site(&self) -> i64 {
        *self as i64
    }
}

/// Lazy neighbor enumeration. Neighbor lists are duplicate-free, symmetric
/// and never longer than [`Graph::valency_bound`].
pub trait Graph: Sync {
    type Vertex: Clone + Eq + Hash + Ord + Debug + Send + Sync;

    fn neighbors(&self, v: &Self::Vertex) -> Result<Vec<Self::Vertex>>;

    fn valency_bound(&self) -> usize;

    fn degree(&self, v: &Self::Vertex) -> Result<usize> {
        Ok(self.neighbors(v)?.len())
    }
}

impl<G: Graph> Graph for &G {
    type Vertex = G::Vertex;

    fn neighbors(&self, v: &Self::Vertex) -> Result<Vec<Self::Vertex>> {
        (**self).neighbors(v)
    }

    fn valency_bound(&self) -> usize {
        (**self).valency_bound()
    }
}

/// One row of a Markov kernel, listed as `(target, probability)` pairs.
pub trait Kernel {
    type State: Clone + Eq + Hash + Ord + Debug;

    fn transitions<P: Prob>(&self, s: &Self::State) -> Result<Vec<(Self::State, P)>>;
}

/// The lazy kernel of a graph.
#[derive(Debug, Clone, Copy)]
pub struct LazyKernel<'a, G>(pub &'a G);

impl<G: Graph> Kernel for LazyKernel<'_, G> {
    type State = G::Vertex;

    fn transitions<P: Prob>(&self, s: &G::Vertex) -> Result<Vec<(G::Vertex, P)>> {
        let nb = self.0.neighbors(s)?;
        let w = P::recip_of(nb.len() as u64 + 1);
        let mut out = Vec::with_capacity(nb.len() + 1);
        out.push((s.clone(), w.clone()));
        out.extend(nb.into_iter().map(|b| (b, w.clone())));
        Ok(out)
    }
}

pub fn lazy_step_prob<G: Graph, P: Prob>(g: &G, a: &G::Vertex, b: &G::Vertex) -> Result<P> {
    let nb = g.neighbors(a)?;
    let hit = a == b || nb.contains(b);
    Ok(if hit {
        P::recip_of(nb.len() as u64 + 1)
    } else {
        P::zero()
    })
}

/// Draws the next position of the lazy walk.
pub fn sample_step<G: Graph, R: Rng + ?Sized>(g: &G, a: &G::Vertex, rng: &mut R) -> Result<G::Vertex> {
    let nb = g.neighbors(a)?;
    let k = rng.gen_range(0..=nb.len());
    Ok(if k == nb.len() { a.clone() } else { nb[k].clone() })
}

pub fn reversible_measure<G: Graph>(g: &G, v: &G::Vertex) -> Result<usize> {
    Ok(g.degree(v)? + 1)
}

/// A finitely supported distribution with strictly positive entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDistribution<S: Ord, P> {
    entries: BTreeMap<S, P>,
}

impl<S: Ord + Clone, P: Prob> SparseDistribution<S, P> {
    pub fn dirac(s: S) -> Self {
        let mut entries = BTreeMap::new();
        entries.insert(s, P::one());
        Self { entries }
    }

    pub fn from_entries(it: impl IntoIterator<Item = (S, P)>) -> Self {
        let mut entries: BTreeMap<S, P> = BTreeMap::new();
        for (s, p) in it {
            if p.is_zero() {
                continue;
            }
            *entries.entry(s).or_insert_with(P::zero) += p;
        }
        Self { entries }
    }

    pub fn get(&self, s: &S) -> P {
        self.entries.get(s).cloned().unwrap_or_else(P::zero)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mass(&self) -> P {
        self.entries.values().fold(P::zero(), |acc, p| acc + p.clone())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&S, &P)> {
        self.entries.iter()
    }
}

/// Exact `steps`-step evolution of `start` under `kernel`.
///
/// Fails with [`Error::BudgetExceeded`] once the support would grow past
/// `budget` states.
pub fn propagate<K: Kernel, P: Prob>(
    kernel: &K,
    start: &SparseDistribution<K::State, P>,
    steps: usize,
    budget: usize,
) -> Result<SparseDistribution<K::State, P>> {
    if start.len() > budget {
        return Err(Error::BudgetExceeded { budget });
    }
    let mut cur = start.clone();
    for _ in 0..steps {
        let mut next: BTreeMap<K::State, P> = BTreeMap::new();
        for (s, p) in cur.iter() {
            for (t, q) in kernel.transitions::<P>(s)? {
                if q.is_zero() {
                    continue;
                }
                *next.entry(t).or_insert_with(P::zero) += p.clone() * q;
                if next.len() > budget {
                    return Err(Error::BudgetExceeded { budget });
                }
            }
        }
        cur = SparseDistribution { entries: next };
    }
    Ok(cur)
}

/// The integer line.
#[derive(Debug, Clone, Copy, Default)]
pub struct IntegerLine;

impl Graph for IntegerLine {
    type Vertex = i64;

    fn neighbors(&self, v: &i64) -> Result<Vec<i64>> {
        Ok(vec![v - 1, v + 1])
    }

    fn valency_bound(&self) -> usize {
        2
    }
}

/// The Cayley graph of `Z/lZ` with generator 1, as a simple graph:
/// one vertex for `l = 1`, a single edge for `l = 2`.
#[derive(Debug, Clone, Copy)]
pub struct CycleGraph {
    pub len: u64,
}

impl CycleGraph {
    pub fn new(len: u64) -> Self {
        assert!(len >= 1, "cycle length must be positive");
        Self { len }
    }
}

/// Neighbors of `v` in the `l`-cycle.
pub fn cycle_neighbors(l: u64, v: u64) -> Vec<u64> {
    match l {
        1 => Vec::new(),
        2 => vec![1 - v],
        _ => vec![(v + l - 1) % l, (v + 1) % l],
    }
}

pub fn cycle_degree(l: u64) -> u64 {
    match l {
        1 => 0,
        2 => 1,
        _ => 2,
    }
}

impl Graph for CycleGraph {
    type Vertex = u64;

    fn neighbors(&self, v: &u64) -> Result<Vec<u64>> {
        if *v >= self.len {
            return Err(Error::OutOfRange {
                what: "cycle vertex",
                value: *v as i64,
                lo: 0,
                hi: self.len as i64 - 1,
            });
        }
        Ok(cycle_neighbors(self.len, *v))
    }

    fn valency_bound(&self) -> usize {
        cycle_degree(self.len) as usize
    }
}

/// A finite simple graph stored as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    adj: Vec<Vec<usize>>,
}

impl AdjacencyGraph {
    pub fn empty(n: usize) -> Self {
        Self { adj: vec![Vec::new(); n] }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::empty(n);
        for (a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<()> {
        let n = self.adj.len();
        if a >= n || b >= n {
            return Err(Error::OutOfRange {
                what: "vertex",
                value: a.max(b) as i64,
                lo: 0,
                hi: n as i64 - 1,
            });
        }
        if a == b {
            return Err(Error::InvalidParameter(format!("self-loop at {a}")));
        }
        if let Err(pos) = self.adj[a].binary_search(&b) {
            self.adj[a].insert(pos, b);
            let pos = self.adj[b].binary_search(&a).unwrap_err();
            self.adj[b].insert(pos, a);
        }
        Ok(())
    }

    pub fn path(n: usize) -> Self {
        Self::from_edges(n, (1..n).map(|i| (i - 1, i))).expect("path edges are valid")
    }

    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "cycle needs at least 3 vertices");
        Self::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).expect("cycle edges are valid")
    }

    /// A uniformly random simple graph on `n` vertices with edge probability `p`.
    pub fn random<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Self {
        let mut g = Self::empty(n);
        for a in 0..n {
            for b in a + 1..n {
                if rng.gen::<f64>() < p {
                    g.add_edge(a, b).expect("indices in range");
                }
            }
        }
        g
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn adjacency(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(a, nb)| nb.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
    }
}

impl Graph for AdjacencyGraph {
    type Vertex = usize;

    fn neighbors(&self, v: &usize) -> Result<Vec<usize>> {
        self.adj.get(*v).cloned().ok_or(Error::OutOfRange {
            what: "vertex",
            value: *v as i64,
            lo: 0,
            hi: self.adj.len() as i64 - 1,
        })
    }

    fn valency_bound(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }
}
