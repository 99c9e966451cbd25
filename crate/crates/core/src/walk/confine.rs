use std::collections::{BTreeMap, BTreeSet};

use crate::error::Result;
use crate::graph::Graph;
use crate::prob::Prob;

/// `P(|X_i| <= r for all i <= n)` for the lazy walk on the integer line
/// started at 0, by DP over the `2r + 1` allowed sites.
pub fn confinement_prob<P: Prob>(n: usize, r: usize) -> P {
    let w = 2 * r + 1;
    let third = P::recip_of(3);
    let mut cur = vec![P::zero(); w];
    cur[r] = P::one();
    for _ in 0..n {
        let mut next = vec![P::zero(); w];
        for (i, p) in cur.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            let q = p.clone() * third.clone();
            next[i] += q.clone();
            if i > 0 {
                next[i - 1] += q.clone();
            }
            if i + 1 < w {
                next[i + 1] += q;
            }
        }
        cur = next;
    }
    cur.into_iter().fold(P::zero(), |a, p| a + p)
}

/// `P(X_i in set for all i <= n)` for the lazy walk on `g` from `start`.
pub fn confined_prob<G: Graph, P: Prob>(g: &G, start: &G::Vertex, set: &BTreeSet<G::Vertex>, n: usize) -> Result<P> {
    if !set.contains(start) {
        return Ok(P::zero());
    }
    let mut rows: BTreeMap<G::Vertex, (Vec<G::Vertex>, P)> = BTreeMap::new();
    for v in set {
        let nb = g.neighbors(v)?;
        let w = P::recip_of(nb.len() as u64 + 1);
        rows.insert(v.clone(), (nb.into_iter().filter(|u| set.contains(u)).collect(), w));
    }
    let mut cur: BTreeMap<G::Vertex, P> = BTreeMap::from([(start.clone(), P::one())]);
    for _ in 0..n {
        let mut next: BTreeMap<G::Vertex, P> = BTreeMap::new();
        for (v, p) in &cur {
            let (nb, w) = &rows[v];
            let q = p.clone() * w.clone();
            *next.entry(v.clone()).or_insert_with(P::zero) += q.clone();
            for u in nb {
                *next.entry(u.clone()).or_insert_with(P::zero) += q.clone();
            }
        }
        cur = next;
    }
    Ok(cur.into_values().fold(P::zero(), |a, p| a + p))
}
