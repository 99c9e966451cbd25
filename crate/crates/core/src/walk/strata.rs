//! Range-mixture importance sampling for return probabilities on the line.
//!
//! Returning paths that keep few lamps busy dominate the fiber-factorized
//! expectation, and those paths have small range. The proposal picks a
//! width `w` from a mixture `pi`, then an interval `[a, a + w]` containing
//! 0 with probability proportional to
//! `Q(a, a + w) = P(confined to [a, a + w] up to n, X_n = 0)`, then a bridge
//! conditioned on that confinement. A path of range `r = max - min` is
//! proposed with density `p(path) c(r)` where
//! `c(r) = sum_{w >= r} pi_w (w - r + 1) / Z_w` and `Z_w = sum_a Q(a, a + w)`,
//! so the importance weight depends on the path only through `r`. A small
//! share `EPS` of unconfined bridges keeps the estimator unbiased for
//! ranges outside the mixture.
//!
//! Requires a holding probability that is the same at every site, so that
//! `Q` has the closed spectral form of a killed birth-death chain.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::IntegerLine;
use crate::walk::estimate::{run_chunks, Method, ReturnEstimate, Welford};
use crate::walk::fait0::{BridgeTable, Fait0Model, LinePrep, Scratch};

/// Share of unconfined bridge proposals.
pub const EPS: f64 = 0.05;

/// Share of the width mixture spread uniformly.
const FLOOR: f64 = 0.15;

fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().filter(|x| *x > f64::NEG_INFINITY).collect();
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Spectrum of the chain with holding `h` killed outside `w + 1` sites.
struct Killed {
    w: usize,
    n: usize,
    lam: Vec<f64>,
    /// `ln max |lambda|^n`.
    ln_top: f64,
}

impl Killed {
    fn new(h: f64, w: usize, n: usize) -> Self {
        let lam: Vec<f64> = (1..=w + 1)
            .map(|k| h + (1.0 - h) * (PI * k as f64 / (w + 2) as f64).cos())
            .map(|l| if l.abs() < 1e-12 { 0.0 } else { l })
            .collect();
        let top = lam.iter().map(|l| l.abs()).fold(0.0, f64::max);
        let ln_top = if n == 0 { 0.0 } else { n as f64 * top.ln() };
        Self { w, n, lam, ln_top }
    }

    /// `(lambda_k / top)^n`, signs kept.
    fn scaled_powers(&self) -> Vec<f64> {
        if self.ln_top == f64::NEG_INFINITY {
            return vec![0.0; self.lam.len()];
        }
        let top = (self.ln_top / self.n.max(1) as f64).exp();
        self.lam.iter().map(|l| (l / top).powi(self.n as i32)).collect()
    }

    /// `ln Z_w = ln trace(T^n)`.
    fn ln_trace(&self) -> f64 {
        if self.n == 0 {
            return ((self.w + 1) as f64).ln();
        }
        let s: f64 = self.scaled_powers().iter().sum();
        if s <= 1e-12 {
            f64::NEG_INFINITY
        } else {
            s.ln() + self.ln_top
        }
    }

    /// `Q_j = (T^n)_{jj}` for the origin at index `j`, scaled by `e^{-ln_top}`.
    fn diagonal(&self) -> Vec<f64> {
        let pw = self.scaled_powers();
        let m = (self.w + 2) as f64;
        (0..=self.w)
            .map(|j| {
                let s: f64 = pw
                    .iter()
                    .enumerate()
                    .map(|(k, p)| p * (PI * (k + 1) as f64 * (j + 1) as f64 / m).sin().powi(2))
                    .sum();
                (2.0 / m * s).max(0.0)
            })
            .collect()
    }
}

/// Backward table for bridges confined to `w + 1` sites ending at index `j0`.
struct ConfinedTable {
    w: usize,
    rows: Vec<Vec<f64>>,
}

impl ConfinedTable {
    fn new(h: f64, w: usize, j0: usize, n: usize) -> Self {
        let mut rows = Vec::with_capacity(n + 1);
        let mut first = vec![0.0; w + 1];
        first[j0] = 1.0;
        rows.push(first);
        for t in 1..=n {
            let prev = &rows[t - 1];
            let mut row = vec![0.0; w + 1];
            for i in 0..=w {
                let left = if i > 0 { prev[i - 1] } else { 0.0 };
                let right = if i < w { prev[i + 1] } else { 0.0 };
                row[i] = h * prev[i] + (1.0 - h) / 2.0 * (left + right);
            }
            let m = row.iter().cloned().fold(0.0, f64::max);
            if m > 0.0 {
                row.iter_mut().for_each(|v| *v /= m);
            }
            rows.push(row);
        }
        Self { w, rows }
    }

    /// Path in interval coordinates from `j0` back to `j0`.
    fn sample<R: Rng + ?Sized>(&self, h: f64, j0: usize, r: &mut R, path: &mut Vec<i64>) {
        let n = self.rows.len() - 1;
        path.clear();
        let mut i = j0;
        path.push(0);
        for s in 0..n {
            let row = &self.rows[n - s - 1];
            let stay = h * row[i];
            let left = if i > 0 { (1.0 - h) / 2.0 * row[i - 1] } else { 0.0 };
            let right = if i < self.w { (1.0 - h) / 2.0 * row[i + 1] } else { 0.0 };
            let u = r.gen::<f64>() * (stay + left + right);
            if u < stay {
            } else if u < stay + left {
                i -= 1;
            } else {
                i += 1;
            }
            path.push(i as i64 - j0 as i64);
        }
    }
}

/// The width mixture and the weight function `c(r)`.
#[derive(Debug, Clone)]
pub struct RangeMixture {
    pub widths: Vec<usize>,
    pub pi: Vec<f64>,
    pub ln_z: Vec<f64>,
    /// `ln c(r)` for `r = 0..=n`.
    ln_c: Vec<f64>,
}

impl RangeMixture {
    fn build(prep: &LinePrep, h: f64) -> Self {
        let n = prep.n;
        let kappa = match prep.dynamics {
            crate::walk::fait0::Dynamics::SwitchWalkSwitch => 2.0,
            crate::walk::fait0::Dynamics::Lazy => h,
        };
        // Heuristic log-contribution of width w: ln Z_w plus the fiber
        // factors of a centered window, each lamp moved about
        // kappa n / (w + 1) times per covering site.
        let mut score = Vec::with_capacity(n + 1);
        let mut ln_z = Vec::with_capacity(n + 1);
        let mut best = f64::NEG_INFINITY;
        let mut best_w = 0;
        for w in 0..=n {
            let lz = Killed::new(h, w, n).ln_trace();
            let lo = -((w / 2) as i64);
            let mut per_lamp: BTreeMap<usize, usize> = BTreeMap::new();
            for x in lo..=lo + w as i64 {
                *per_lamp.entry(prep.lamp(x)).or_insert(0) += 1;
            }
            let mut s = lz;
            for (lamp, sites) in per_lamp {
                let m = ((kappa * n as f64 * sites as f64 / (w + 1) as f64).round() as u64).clamp(1, prep.tables.m_max().max(1));
                s += prep.tables.get(prep.len(lamp), m).ln();
            }
            if s > best {
                best = s;
                best_w = w;
            }
            score.push(s);
            ln_z.push(lz);
            if w > 2 * best_w + 8 && s < best - 40.0 {
                break;
            }
        }
        let wmax = score.len() - 1;
        let widths: Vec<usize> = (0..=wmax).collect();
        let mut pi: Vec<f64> = score
            .iter()
            .zip(&ln_z)
            .map(|(s, lz)| if *lz == f64::NEG_INFINITY { 0.0 } else { (s - best).exp() })
            .collect();
        let mass: f64 = pi.iter().sum();
        let live = ln_z.iter().filter(|z| **z > f64::NEG_INFINITY).count() as f64;
        for (p, lz) in pi.iter_mut().zip(&ln_z) {
            *p = if *lz == f64::NEG_INFINITY { 0.0 } else { (1.0 - FLOOR) * *p / mass + FLOOR / live };
        }
        let ln_c = (0..=n)
            .map(|r| {
                log_sum_exp(
                    (r..=wmax)
                        .filter(|&w| pi[w] > 0.0)
                        .map(|w| pi[w].ln() + ((w - r + 1) as f64).ln() - ln_z[w]),
                )
            })
            .collect();
        Self { widths, pi, ln_z, ln_c }
    }

    fn draw_width<R: Rng + ?Sized>(&self, r: &mut R) -> usize {
        let u: f64 = r.gen();
        let mut acc = 0.0;
        for (w, p) in self.pi.iter().enumerate() {
            acc += p;
            if u < acc {
                return w;
            }
        }
        self.pi.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }
}

fn draw_index<R: Rng + ?Sized>(weights: &[f64], r: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = r.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Proposal for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Draw {
    Bridge,
    Confined { w: usize, j: usize },
}

/// Range-mixture estimate of the return probability at time `n`.
pub fn range_estimate(model: &Fait0Model<IntegerLine>, n: usize, samples: usize, seed: u64) -> Result<ReturnEstimate> {
    let prep = LinePrep::new(model, n)?;
    let h = prep
        .homogeneous_hold()
        .ok_or_else(|| Error::InvalidParameter("range sampling needs a site-independent holding probability".into()))?;
    let bridge = BridgeTable::new(&prep);
    if bridge.ln_p0 == f64::NEG_INFINITY {
        return Ok(ReturnEstimate::from_stats(n as u64, &Welford::new(), Method::Fait0Range, seed));
    }
    let mix = RangeMixture::build(&prep, h);
    let ln_weight = |range: usize| -> f64 {
        let a = EPS.ln() - bridge.ln_p0;
        let b = (1.0 - EPS).ln() + mix.ln_c.get(range).copied().unwrap_or(f64::NEG_INFINITY);
        -log_sum_exp([a, b])
    };
    let stats = run_chunks(samples, seed, |r, len| {
        let mut draws = Vec::with_capacity(len);
        let mut diag: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for _ in 0..len {
            if r.gen::<f64>() < EPS {
                draws.push(Draw::Bridge);
            } else {
                let w = mix.draw_width(r);
                let q = diag.entry(w).or_insert_with(|| Killed::new(h, w, n).diagonal());
                draws.push(Draw::Confined { w, j: draw_index(q, r) });
            }
        }
        draws.sort();
        let mut out = Vec::with_capacity(len);
        let mut path = Vec::with_capacity(n + 1);
        let mut scratch = Scratch::default();
        let mut table: Option<((usize, usize), ConfinedTable)> = None;
        for d in draws {
            match d {
                Draw::Bridge => bridge.sample(&prep, r, &mut path),
                Draw::Confined { w, j } => {
                    if table.as_ref().map(|(k, _)| *k) != Some((w, j)) {
                        table = Some(((w, j), ConfinedTable::new(h, w, j, n)));
                    }
                    table.as_ref().expect("just built").1.sample(h, j, r, &mut path);
                }
            }
            let lo = *path.iter().min().expect("nonempty");
            let hi = *path.iter().max().expect("nonempty");
            let f = prep.score(&path, &mut scratch);
            out.push(f * ln_weight((hi - lo) as usize).exp());
        }
        Ok(out)
    })?;
    Ok(ReturnEstimate::from_stats(n as u64, &stats, Method::Fait0Range, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fibers::FiberFamily;
    use crate::walk::fait0::{line_z2_range_dp, Dynamics};
    use crate::wreath::LampLayout;

    #[test]
    fn spectral_diagonal_matches_dp() {
        for (h, w, n) in [(0.6, 4, 9), (0.0, 5, 8), (0.5, 0, 3), (0.6, 7, 40)] {
            let k = Killed::new(h, w, n);
            let d = k.diagonal();
            for j in 0..=w {
                // Forward DP of the killed chain from j.
                let mut cur = vec![0.0; w + 1];
                cur[j] = 1.0;
                for _ in 0..n {
                    let mut next = vec![0.0; w + 1];
                    for i in 0..=w {
                        next[i] += h * cur[i];
                        if i > 0 {
                            next[i - 1] += (1.0 - h) / 2.0 * cur[i];
                        }
                        if i < w {
                            next[i + 1] += (1.0 - h) / 2.0 * cur[i];
                        }
                    }
                    cur = next;
                }
                let q = d[j] * k.ln_top.exp();
                assert!((q - cur[j]).abs() < 1e-12, "h={h} w={w} n={n} j={j}: {q} vs {}", cur[j]);
            }
            let z: f64 = d.iter().sum::<f64>() * k.ln_top.exp();
            let lt = k.ln_trace();
            if z > 1e-12 {
                assert!((lt.exp() - z).abs() < 1e-9 * z.max(1.0));
            }
        }
    }

    #[test]
    fn z2_switch_walk_switch_matches_range_dp() {
        let model = Fait0Model::on_line(LampLayout::Ordinary(FiberFamily::constant(2)), Dynamics::SwitchWalkSwitch);
        for n in [8, 16, 32] {
            let exact = line_z2_range_dp(n);
            let e = range_estimate(&model, n, 20_000, 7).unwrap();
            assert!((e.estimate - exact).abs() < 4.0 * e.stderr + 1e-15, "n={n}: {} vs {exact} ({})", e.estimate, e.stderr);
            assert!(e.stderr < 0.05 * exact);
        }
    }

    #[test]
    fn lazy_third_matches_exact_dp() {
        let model = Fait0Model::on_line(LampLayout::Ordinary(FiberFamily::from_alpha(1.0 / 3.0).unwrap()), Dynamics::Lazy);
        let exact: f64 = model.exact_return(&0, 14, 4_000_000).unwrap();
        let e = range_estimate(&model, 14, 40_000, 3).unwrap();
        assert!((e.estimate - exact).abs() < 4.0 * e.stderr, "{} vs {exact} ({})", e.estimate, e.stderr);
    }

    #[test]
    fn heterogeneous_holding_is_rejected() {
        let fam = FiberFamily::table([(0, 2)].into_iter().collect(), 3);
        let model = Fait0Model::on_line(LampLayout::Ordinary(fam), Dynamics::Lazy);
        assert!(matches!(range_estimate(&model, 8, 10, 0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn odd_time_bipartite_is_zero() {
        let model = Fait0Model::on_line(LampLayout::Ordinary(FiberFamily::constant(2)), Dynamics::SwitchWalkSwitch);
        assert_eq!(range_estimate(&model, 9, 100, 0).unwrap().estimate, 0.0);
    }
}
