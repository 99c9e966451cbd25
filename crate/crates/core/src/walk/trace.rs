use std::collections::HashMap;
use std::hash::Hash;

use rand::Rng;

use crate::error::Result;
use crate::graph::{sample_step, Graph};

/// Visit counts `L_{x,n}`, time 0 included.
#[derive(Debug, Clone)]
pub struct LocalTimes<V> {
    counts: HashMap<V, u64>,
    total: u64,
}

impl<V: Eq + Hash + Clone> Default for LocalTimes<V> {
    fn default() -> Self {
        Self::new()
    }
}

impl<V: Eq + Hash + Clone> LocalTimes<V> {
    pub fn new() -> Self {
        Self {
            counts: HashMap::new(),
            total: 0,
        }
    }

    pub fn visit(&mut self, v: &V) {
        *self.counts.entry(v.clone()).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn get(&self, v: &V) -> u64 {
        self.counts.get(v).copied().unwrap_or(0)
    }

    /// `N_n`, the number of distinct visited vertices.
    pub fn visited(&self) -> usize {
        self.counts.len()
    }

    /// `N_{n,2}`, vertices visited at least twice.
    pub fn visited_twice(&self) -> usize {
        self.counts.values().filter(|&&c| c >= 2).count()
    }

    /// Sum of all local times, `n + 1` for a trace of `n` steps.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn iter(&self) -> impl Iterator<Item = (&V, u64)> {
        self.counts.iter().map(|(v, c)| (v, *c))
    }

    pub fn values(&self) -> impl Iterator<Item = u64> + '_ {
        self.counts.values().copied()
    }
}

#[derive(Debug, Clone)]
pub struct WalkTrace<V> {
    pub path: Vec<V>,
    pub local: LocalTimes<V>,
}

impl<V: Eq + Hash + Clone> WalkTrace<V> {
    pub fn steps(&self) -> usize {
        self.path.len() - 1
    }

    pub fn end(&self) -> &V {
        self.path.last().expect("trace is never empty")
    }
}

/// Runs `n` steps of the lazy chain from `start`.
pub fn simulate<G, R>(g: &G, start: &G::Vertex, n: usize, rng: &mut R) -> Result<WalkTrace<G::Vertex>>
where
    G: Graph,
    R: Rng + ?Sized,
{
    let mut path = Vec::with_capacity(n + 1);
    let mut local = LocalTimes::new();
    let mut cur = start.clone();
    local.visit(&cur);
    path.push(cur.clone());
    for _ in 0..n {
        cur = sample_step(g, &cur, rng)?;
        local.visit(&cur);
        path.push(cur.clone());
    }
    Ok(WalkTrace { path, local })
}

/// Like [`simulate`] but keeps only the local times and the endpoint.
pub fn simulate_local_times<G, R>(g: &G, start: &G::Vertex, n: usize, rng: &mut R) -> Result<(LocalTimes<G::Vertex>, G::Vertex)>
where
    G: Graph,
    R: Rng + ?Sized,
{
    let mut local = LocalTimes::new();
    let mut cur = start.clone();
    local.visit(&cur);
    for _ in 0..n {
        cur = sample_step(g, &cur, rng)?;
        local.visit(&cur);
    }
    Ok((local, cur))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{AdjacencyGraph, IntegerLine};
    use crate::rng;

    #[test]
    fn empty_trace() {
        let t = simulate(&IntegerLine, &5, 0, &mut rng::master(1)).unwrap();
        assert_eq!(t.path, vec![5]);
        assert_eq!(t.local.get(&5), 1);
        assert_eq!(t.local.total(), 1);
    }

    #[test]
    fn line_moments() {
        let (n, reps) = (10_000usize, 1000usize);
        let mut r = rng::master(11);
        let ends: Vec<f64> = (0..reps)
            .map(|_| {
                let t = simulate(&IntegerLine, &0, n, &mut r).unwrap();
                assert_eq!(t.local.total(), n as u64 + 1);
                assert!(t.local.visited_twice() <= t.local.visited());
                *t.end() as f64
            })
            .collect();
        let mean = ends.iter().sum::<f64>() / reps as f64;
        let var = ends.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let expect = 2.0 / 3.0 * n as f64;
        assert!(mean.abs() < 4.0 * (expect / reps as f64).sqrt(), "mean {mean}");
        assert!((var / expect - 1.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn two_vertex_occupation() {
        let g = AdjacencyGraph::path(2);
        let t = simulate(&g, &0, 1000, &mut rng::master(4)).unwrap();
        let frac = t.local.get(&0) as f64 / 1000.0;
        assert!((frac - 0.5).abs() < 0.05, "{frac}");
        for w in t.path.windows(2) {
            assert!(w[0] == w[1] || g.adjacency(w[0]).contains(&w[1]));
        }
    }
}
