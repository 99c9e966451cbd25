//! Ordinary and generalized wreath products over cyclic fibers.
//!
//! A vertex is a base position plus a finitely supported lamp
//! configuration. Two vertices are adjacent when either the configuration
//! is unchanged and the bases are adjacent, or the base is unchanged and
//! the configuration differs only at the lamp attached to the base, where
//! the two values are adjacent in that lamp's fiber. In the ordinary
//! product the lamp at `a` is `a` itself; in the generalized product it is
//! the partition class of `a`, so several base sites share one lamp.

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fibers::FiberFamily;
use crate::graph::{cycle_degree, cycle_neighbors, Graph, Site};
use crate::partition::DyadicPartition;

/// Finite-support lamp configuration, sorted by lamp index, with no entry
/// equal to the fiber origin 0.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration(Vec<(i64, u64)>);

impl Configuration {
    pub fn null() -> Self {
        Self(Vec::new())
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (i64, u64)>) -> Self {
        let mut c = Self::null();
        for (k, v) in pairs {
            c.set(k, v);
        }
        c
    }

    pub fn get(&self, lamp: i64) -> u64 {
        match self.0.binary_search_by_key(&lamp, |e| e.0) {
            Ok(i) => self.0[i].1,
            Err(_) => 0,
        }
    }

    pub fn set(&mut self, lamp: i64, value: u64) {
        match (self.0.binary_search_by_key(&lamp, |e| e.0), value) {
            (Ok(i), 0) => {
                self.0.remove(i);
            }
            (Ok(i), v) => self.0[i].1 = v,
            (Err(_), 0) => {}
            (Err(i), v) => self.0.insert(i, (lamp, v)),
        }
    }

    pub fn with(&self, lamp: i64, value: u64) -> Self {
        let mut c = self.clone();
        c.set(lamp, value);
        c
    }

    pub fn support(&self) -> impl Iterator<Item = i64> + '_ {
        self.0.iter().map(|e| e.0)
    }

    pub fn entries(&self) -> &[(i64, u64)] {
        &self.0
    }

    pub fn is_null(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WreathVertex<B> {
    pub base: B,
    pub config: Configuration,
}

impl<B> WreathVertex<B> {
    pub fn origin(base: B) -> Self {
        Self {
            base,
            config: Configuration::null(),
        }
    }
}

/// How base sites map to lamps and lamps to fibers.
#[derive(Debug, Clone)]
pub enum LampLayout {
    /// Lamp at every base site, fiber sizes from the family.
    Ordinary(FiberFamily),
    /// Lamp index `class_of(site)`, one constant fiber size.
    Generalized { partition: Arc<DyadicPartition>, fiber: u64 },
}

impl LampLayout {
    pub fn lamp_of(&self, site: i64) -> Result<i64> {
        match self {
            Self::Ordinary(_) => Ok(site),
            Self::Generalized { partition, .. } => Ok(partition.class_of(site)? as i64),
        }
    }

    pub fn fiber_len(&self, lamp: i64) -> Result<u64> {
        match self {
            Self::Ordinary(fam) => fam.fiber_size(lamp),
            Self::Generalized { fiber, .. } => Ok(*fiber),
        }
    }

    /// Fiber size capped at `cap` (see [`FiberFamily::saturated_size`]).
    pub fn fiber_len_capped(&self, lamp: i64, cap: u64) -> u64 {
        match self {
            Self::Ordinary(fam) => fam.saturated_size(lamp, cap),
            Self::Generalized { fiber, .. } => (*fiber).min(cap),
        }
    }
}

/// A wreath product exposed as a [`Graph`].
#[derive(Debug, Clone)]
pub struct WreathGraph<G> {
    pub base: G,
    pub lamps: LampLayout,
}

impl<G: Graph> WreathGraph<G>
where
    G::Vertex: Site,
{
    pub fn ordinary(base: G, fibers: FiberFamily) -> Self {
        Self {
            base,
            lamps: LampLayout::Ordinary(fibers),
        }
    }

    pub fn generalized(base: G, partition: Arc<DyadicPartition>, fiber: u64) -> Self {
        Self {
            base,
            lamps: LampLayout::Generalized { partition, fiber },
        }
    }

    /// Lamp index touched from base vertex `a`.
    pub fn lamp_at(&self, a: &G::Vertex) -> Result<i64> {
        self.lamps.lamp_of(a.site())
    }

    /// Base moves first, then lamp moves.
    pub fn wreath_neighbors(&self, v: &WreathVertex<G::Vertex>) -> Result<Vec<WreathVertex<G::Vertex>>> {
        let lamp = self.lamp_at(&v.base)?;
        let l = self.lamps.fiber_len(lamp)?;
        let cur = v.config.get(lamp);
        if cur >= l {
            return Err(Error::OutOfRange {
                what: "lamp value",
                value: cur as i64,
                lo: 0,
                hi: l as i64 - 1,
            });
        }
        let mut out = Vec::new();
        for b in self.base.neighbors(&v.base)? {
            out.push(WreathVertex {
                base: b,
                config: v.config.clone(),
            });
        }
        for u in cycle_neighbors(l, cur) {
            out.push(WreathVertex {
                base: v.base.clone(),
                config: v.config.with(lamp, u),
            });
        }
        Ok(out)
    }

    /// Membership test and log2-cardinality of the confinement set of radius `r`:
    /// base within graph distance `r` of `center` and lamps supported on lamps
    /// touched from that ball.
    pub fn confinement_set(&self, center: &G::Vertex, r: usize) -> Result<ConfinementSet<G::Vertex>> {
        let ball = ball(&self.base, center, r)?;
        let mut lamps = BTreeSet::new();
        for b in &ball {
            lamps.insert(self.lamp_at(b)?);
        }
        let mut log2 = (ball.len() as f64).log2();
        for k in &lamps {
            log2 += (self.lamps.fiber_len(*k)? as f64).log2();
        }
        Ok(ConfinementSet { ball, lamps, log2_size: log2 })
    }
}

impl<G: Graph> Graph for WreathGraph<G>
where
    G::Vertex: Site,
{
    type Vertex = WreathVertex<G::Vertex>;

    fn neighbors(&self, v: &Self::Vertex) -> Result<Vec<Self::Vertex>> {
        self.wreath_neighbors(v)
    }

    fn valency_bound(&self) -> usize {
        let fiber_bound = match &self.lamps {
            LampLayout::Ordinary(_) => 2,
            LampLayout::Generalized { fiber, .. } => cycle_degree(*fiber) as usize,
        };
        self.base.valency_bound() + fiber_bound
    }
}

/// The sets `{(a, f) : a in ball, supp f within lamps(ball)}`.
#[derive(Debug, Clone)]
pub struct ConfinementSet<B> {
    pub ball: BTreeSet<B>,
    pub lamps: BTreeSet<i64>,
    pub log2_size: f64,
}

impl<B: Ord> ConfinementSet<B> {
    pub fn contains(&self, v: &WreathVertex<B>) -> bool {
        self.ball.contains(&v.base) && v.config.support().all(|k| self.lamps.contains(&k))
    }
}

/// Vertices within graph distance `r` of `center`.
pub fn ball<G: Graph>(g: &G, center: &G::Vertex, r: usize) -> Result<BTreeSet<G::Vertex>> {
    let mut seen = BTreeSet::new();
    seen.insert(center.clone());
    let mut queue = VecDeque::from([(center.clone(), 0usize)]);
    while let Some((v, d)) = queue.pop_front() {
        if d == r {
            continue;
        }
        for w in g.neighbors(&v)? {
            if seen.insert(w.clone()) {
                queue.push_back((w, d + 1));
            }
        }
    }
    Ok(seen)
}

/// Byte key of an integer-based wreath vertex:
/// `base (i64 LE) | count (u32 LE) | count x (lamp i64 LE, value u64 LE)`.
pub fn encode_vertex<B: Site>(v: &WreathVertex<B>) -> Vec<u8> {
    let entries = v.config.entries();
    let mut out = Vec::with_capacity(12 + 16 * entries.len());
    out.extend_from_slice(&v.base.site().to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (k, x) in entries {
        out.extend_from_slice(&k.to_le_bytes());
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// Inverse of [`encode_vertex`]; rejects non-canonical keys.
pub fn decode_vertex(bytes: &[u8]) -> Result<WreathVertex<i64>> {
    let err = |msg: &str| Error::Parse { line: 0, msg: msg.to_string() };
    if bytes.len() < 12 {
        return Err(err("key shorter than header"));
    }
    let base = i64::from_le_bytes(bytes[0..8].try_into().expect("8 bytes"));
    let count = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[12..];
    if body.len() != count.checked_mul(16).ok_or_else(|| err("count overflow"))? {
        return Err(err("length does not match entry count"));
    }
    let mut entries = Vec::with_capacity(count);
    for chunk in body.chunks_exact(16) {
        let k = i64::from_le_bytes(chunk[0..8].try_into().expect("8 bytes"));
        let x = u64::from_le_bytes(chunk[8..16].try_into().expect("8 bytes"));
        if x == 0 {
            return Err(err("zero lamp value stored"));
        }
        if entries.last().is_some_and(|(p, _)| *p >= k) {
            return Err(err("lamp indices not strictly increasing"));
        }
        entries.push((k, x));
    }
    Ok(WreathVertex {
        base,
        config: Configuration(entries),
    })
}
