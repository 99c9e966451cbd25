//! The oracle battery behind `wreathwalk verify`.

use num_traits::{One, Zero};
use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::graph::{lazy_step_prob, reversible_measure, AdjacencyGraph, Kernel, LazyKernel};
use crate::partition::{check_growth_bounds, check_ratio, DyadicPartition, GrowthFunction};
use crate::percolation::{check_bidule, enumerable_clusters};
use crate::prob::{Exact, Prob};
use crate::rng;
use crate::walk::fait0::{calibrate_fait0_convention, default_battery, discriminating_battery, DEFAULT_BUDGET};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub random_graphs: usize,
    pub betas: Vec<f64>,
    pub partition_levels: u32,
    pub window_k: i64,
    pub window_m: u64,
    pub cluster_vertices: usize,
    pub bidule_n: usize,
    pub bidule_alphas: Vec<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            random_graphs: 50,
            betas: vec![0.25, 0.5, 0.75],
            partition_levels: 12,
            window_k: 1 << 10,
            window_m: 1 << 8,
            cluster_vertices: 4,
            bidule_n: 6,
            bidule_alphas: vec![0.0, 1.0 / 3.0, 0.5, 1.0],
        }
    }
}

/// Row sums and detailed balance of the lazy kernel against `m = deg + 1`,
/// in rational arithmetic, on random graphs of 1 to 8 vertices.
pub fn kernel_check(seed: u64, graphs: usize) -> Result<Check> {
    let mut r = rng::master(seed);
    let mut rows = 0;
    let mut bad = Vec::new();
    for i in 0..graphs {
        let n = r.gen_range(1..=8);
        let p = r.gen_range(0.1..0.9);
        let g = AdjacencyGraph::random(n, p, &mut r);
        for a in 0..n {
            rows += 1;
            let sum = LazyKernel(&g).transitions::<Exact>(&a)?.into_iter().fold(Exact::zero(), |s, (_, q)| s + q);
            if sum != Exact::one() {
                bad.push(format!("graph {i} row {a} sums to {sum}"));
            }
            let ma = Exact::ratio(reversible_measure(&g, &a)? as u64, 1);
            for b in 0..n {
                let mb = Exact::ratio(reversible_measure(&g, &b)? as u64, 1);
                let ab: Exact = lazy_step_prob(&g, &a, &b)?;
                let ba: Exact = lazy_step_prob(&g, &b, &a)?;
                if ma.clone() * ab != mb * ba {
                    bad.push(format!("graph {i}: balance fails on ({a}, {b})"));
                }
            }
        }
    }
    let detail = if bad.is_empty() {
        format!("{graphs} graphs, {rows} rows exact")
    } else {
        bad.join("; ")
    };
    Ok(Check::new("row-sums", bad.is_empty(), detail))
}

/// The convention is unique on the discriminating battery and the identity
/// holds under it on every instance of the default battery.
pub fn calibration_check() -> Result<Check> {
    let cal = calibrate_fait0_convention(&discriminating_battery(), DEFAULT_BUDGET)?;
    let Ok(conv) = cal.unique() else {
        let tags: Vec<_> = cal.matches.iter().map(|c| c.tag()).collect();
        return Ok(Check::new("fait0-calibration", false, format!("matching conventions: [{}]", tags.join(", "))));
    };
    let base = calibrate_fait0_convention(&default_battery(), DEFAULT_BUDGET)?;
    let passed = base.matches.contains(&conv);
    Ok(Check::new(
        "fait0-calibration",
        passed,
        format!(
            "unique convention {} over {} instances; identity on {} tiny instances: {}",
            conv.tag(),
            cal.instances,
            base.instances,
            if passed { "exact" } else { "fails" }
        ),
    ))
}

/// Outcome of the exact lemma check over every enumerable cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct BiduleBattery {
    pub instances: usize,
    /// `(instance, failing level)` for `S = sum L^alpha`.
    pub power_failures: Vec<(String, u64)>,
    /// Same for `S = sum ln L`.
    pub log_failures: Vec<(String, u64)>,
}

pub fn bidule_battery(opts: &VerifyOptions) -> Result<BiduleBattery> {
    let mut out = BiduleBattery {
        instances: 0,
        power_failures: Vec::new(),
        log_failures: Vec::new(),
    };
    for d in 1..=3 {
        for (ci, c) in enumerable_clusters(d, opts.cluster_vertices)?.iter().enumerate() {
            for n in 1..=opts.bidule_n {
                for &alpha in &opts.bidule_alphas {
                    out.instances += 1;
                    let rep = check_bidule(c, n, alpha, DEFAULT_BUDGET)?;
                    let name = format!("d{d}/c{ci}({}v,{}e)/n{n}/a{alpha:.3}", c.len(), c.edges().count());
                    for (variant, m) in rep.failures() {
                        let list = if variant == "power" {
                            &mut out.power_failures
                        } else {
                            &mut out.log_failures
                        };
                        list.push((name.clone(), m));
                    }
                }
            }
        }
    }
    Ok(out)
}

fn failure_detail(instances: usize, fails: &[(String, u64)]) -> String {
    if fails.is_empty() {
        return format!("{instances} instances exact");
    }
    let mut levels: Vec<u64> = fails.iter().map(|f| f.1).collect();
    levels.sort();
    levels.dedup();
    format!(
        "{} failing levels over {instances} instances, at m in {levels:?}; first {}",
        fails.len(),
        fails[0].0
    )
}

/// The power and logarithmic variants as separate checks.
pub fn bidule_checks(opts: &VerifyOptions) -> Result<[Check; 2]> {
    let b = bidule_battery(opts)?;
    Ok([
        Check::new("bidule", b.power_failures.is_empty(), failure_detail(b.instances, &b.power_failures)),
        Check::new("bidule-log", b.log_failures.is_empty(), failure_detail(b.instances, &b.log_failures)),
    ])
}

/// Exact dyadic counts, dyadic ratio at most 2 and the class-count bounds
/// for `g = round(x^beta)`, then the all-window ratio bound as a second check.
pub fn partition_checks(opts: &VerifyOptions) -> Result<[Check; 2]> {
    let (mut blocks_ok, mut windows_ok) = (true, true);
    let (mut blocks, mut windows) = (Vec::new(), Vec::new());
    for &beta in &opts.betas {
        let g = GrowthFunction::power(beta);
        let p = DyadicPartition::build(&g, opts.partition_levels)?;
        let ratio = check_ratio(&p, opts.window_k, opts.window_m)?;
        let growth = check_growth_bounds(&p, &g, opts.window_k, opts.window_m)?;
        blocks_ok &= growth.passes() && ratio.max_dyadic_ratio <= 2.0;
        windows_ok &= ratio.max_ratio <= 10.0;
        blocks.push(format!(
            "beta {beta}: dyadic ratio {:.3}, dyadic counts {}, {} bound violations",
            ratio.max_dyadic_ratio,
            if growth.dyadic_exact { "exact" } else { "wrong" },
            growth.violations.len()
        ));
        windows.push(format!("beta {beta}: max {} at [{}, {}[", ratio.max_ratio, ratio.worst.0, ratio.worst.0 + ratio.worst.1 as i64));
    }
    Ok([
        Check::new("partition", blocks_ok, blocks.join("; ")),
        Check::new("partition-window-ratio", windows_ok, windows.join("; ")),
    ])
}

pub fn run_battery(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut out = vec![kernel_check(opts.seed, opts.random_graphs)?, calibration_check()?];
    out.extend(bidule_checks(opts)?);
    out.extend(partition_checks(opts)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> VerifyOptions {
        VerifyOptions {
            random_graphs: 10,
            betas: vec![0.5],
            partition_levels: 8,
            window_k: 64,
            window_m: 128,
            cluster_vertices: 3,
            bidule_n: 3,
            ..VerifyOptions::default()
        }
    }

    #[test]
    fn kernel_and_partition_pass() {
        assert!(kernel_check(3, 10).unwrap().passed);
        let [blocks, windows] = partition_checks(&small()).unwrap();
        assert!(blocks.passed, "{}", blocks.detail);
        // A window reaching one step into a fresh dyadic half holds a new
        // class once next to classes of size about 2^s / g(2^s).
        assert!(!windows.passed);
    }

    #[test]
    fn calibration_finds_one_convention() {
        let c = calibration_check().unwrap();
        assert!(c.passed, "{}", c.detail);
        assert!(c.detail.contains("departures-plus-arrivals"));
    }

    #[test]
    fn log_variant_fails_only_at_level_zero() {
        let b = bidule_battery(&small()).unwrap();
        assert!(b.power_failures.is_empty(), "{:?}", b.power_failures);
        assert!(!b.log_failures.is_empty());
        assert!(b.log_failures.iter().all(|f| f.1 == 0));
    }

    #[test]
    fn battery_is_deterministic() {
        let o = small();
        assert_eq!(run_battery(&o).unwrap(), run_battery(&o).unwrap());
    }
}
