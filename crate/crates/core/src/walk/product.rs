//! The switch-walk-switch chain `Z` on a wreath product: the lamp under the
//! walker takes one lazy fiber step, the walker moves to a uniform neighbor
//! (no holding), and the lamp at the arrival site takes one lazy fiber step.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{cycle_degree, cycle_neighbors, propagate, Graph, Kernel, Site, SparseDistribution};
use crate::prob::Prob;
use crate::wreath::{Configuration, LampLayout, WreathVertex};

#[derive(Debug, Clone)]
pub struct ProductKernel<'a, G> {
    pub base: &'a G,
    pub lamps: LampLayout,
}

impl<'a, G: Graph> ProductKernel<'a, G>
where
    G::Vertex: Site,
{
    pub fn new(base: &'a G, lamps: LampLayout) -> Self {
        Self { base, lamps }
    }

    /// `m~(a, f) = nu(a)`.
    pub fn measure(&self, v: &WreathVertex<G::Vertex>) -> Result<usize> {
        self.base.degree(&v.base)
    }

    /// Lazy fiber moves of the lamp attached to `site`: `(new config, weight denominator)`.
    fn switch(&self, site: i64, config: &Configuration) -> Result<(Vec<Configuration>, u64)> {
        let lamp = self.lamps.lamp_of(site)?;
        let l = self.lamps.fiber_len(lamp)?;
        let cur = config.get(lamp);
        let mut out = vec![config.clone()];
        out.extend(cycle_neighbors(l, cur).into_iter().map(|u| config.with(lamp, u)));
        Ok((out, cycle_degree(l) + 1))
    }

    /// Evaluates `p~((a,f), (b,g))` from the closed form
    /// `chi / (nu(a) (nu_a(f(a)) + 1) (nu_b(f(b)) + 1))`.
    pub fn closed_form<P: Prob>(&self, x: &WreathVertex<G::Vertex>, y: &WreathVertex<G::Vertex>) -> Result<P> {
        let nb = self.base.neighbors(&x.base)?;
        if !nb.contains(&y.base) {
            return Ok(P::zero());
        }
        let (la, lb) = (self.lamps.lamp_of(x.base.site())?, self.lamps.lamp_of(y.base.site())?);
        if la == lb {
            // A shared lamp (generalized layout) moves twice; no closed form.
            let row = self.transitions::<P>(x)?;
            return Ok(row.into_iter().find(|(s, _)| s == y).map(|(_, p)| p).unwrap_or_else(P::zero));
        }
        let (fa, fb) = (self.lamps.fiber_len(la)?, self.lamps.fiber_len(lb)?);
        let close = |l: u64, u: u64, v: u64| u == v || cycle_neighbors(l, u).contains(&v);
        let lamps: BTreeSet<i64> = x.config.support().chain(y.config.support()).collect();
        let chi = lamps.into_iter().all(|k| {
            let (u, v) = (x.config.get(k), y.config.get(k));
            u == v || (k == la && close(fa, u, v)) || (k == lb && close(fb, u, v))
        });
        if !chi {
            return Ok(P::zero());
        }
        let den = nb.len() as u64 * (cycle_degree(fa) + 1) * (cycle_degree(fb) + 1);
        Ok(P::recip_of(den))
    }
}

impl<G: Graph> Kernel for ProductKernel<'_, G>
where
    G::Vertex: Site,
{
    type State = WreathVertex<G::Vertex>;

    fn transitions<P: Prob>(&self, s: &Self::State) -> Result<Vec<(Self::State, P)>> {
        let nb = self.base.neighbors(&s.base)?;
        if nb.is_empty() {
            return Err(Error::IsolatedVertex);
        }
        let (first, d1) = self.switch(s.base.site(), &s.config)?;
        let mut row: BTreeMap<Self::State, P> = BTreeMap::new();
        for b in &nb {
            for f in &first {
                let (second, d2) = self.switch(b.site(), f)?;
                let w = P::recip_of(nb.len() as u64 * d1 * d2);
                for g in second {
                    *row.entry(WreathVertex { base: b.clone(), config: g }).or_insert_with(P::zero) += w.clone();
                }
            }
        }
        Ok(row.into_iter().collect())
    }
}

fn lazy_fiber_move<R: Rng + ?Sized>(lamps: &LampLayout, site: i64, config: &mut Configuration, rng: &mut R) -> Result<()> {
    let lamp = lamps.lamp_of(site)?;
    let l = lamps.fiber_len(lamp)?;
    let nb = cycle_neighbors(l, config.get(lamp));
    let k = rng.gen_range(0..=nb.len());
    if k < nb.len() {
        config.set(lamp, nb[k]);
    }
    Ok(())
}

/// Samples one step of `Z`.
pub fn product_step<G, R>(k: &ProductKernel<'_, G>, v: &WreathVertex<G::Vertex>, rng: &mut R) -> Result<WreathVertex<G::Vertex>>
where
    G: Graph,
    G::Vertex: Site,
    R: Rng + ?Sized,
{
    let nb = k.base.neighbors(&v.base)?;
    if nb.is_empty() {
        return Err(Error::IsolatedVertex);
    }
    let mut config = v.config.clone();
    lazy_fiber_move(&k.lamps, v.base.site(), &mut config, rng)?;
    let b = nb[rng.gen_range(0..nb.len())].clone();
    lazy_fiber_move(&k.lamps, b.site(), &mut config, rng)?;
    Ok(WreathVertex { base: b, config })
}

/// `P(Z_n = o)` by exact propagation of the product chain.
pub fn exact_product_return<G, P>(k: &ProductKernel<'_, G>, origin: &G::Vertex, n: usize, budget: usize) -> Result<P>
where
    G: Graph,
    G::Vertex: Site,
    P: Prob,
{
    let o = WreathVertex::origin(origin.clone());
    let dist = propagate(k, &SparseDistribution::dirac(o.clone()), n, budget)?;
    Ok(dist.get(&o))
}
