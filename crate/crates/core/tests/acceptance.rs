//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Three criteria fail on defects of the claims themselves, not of the
//! implementation. Each of those must fail for exactly its known reason;
//! any other failure, or a known failure with a different shape, exits 1.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use wreathwalk::fibers::FiberFamily;
use wreathwalk::graph::{CycleGraph, IntegerLine};
use wreathwalk::isoperimetry::{coulhon_log_curve, folner_value, FolnerMode, FolnerProfile, FolnerQuery, OdeBoundSpec};
use wreathwalk::percolation::{
    check_lower_bound_sum, estimate_functional, exponent_trend, sample_spanning_cluster, BondSample, ClusterGraph, Evaluation,
    Functional, FunctionalSpec, TrendConfig,
};
use wreathwalk::rng::with_workers;
use wreathwalk::verify::{bidule_battery, kernel_check, partition_checks, run_battery, VerifyOptions};
use wreathwalk::walk::fait0::{default_battery, discriminating_battery, line_z2_range_dp, DEFAULT_BUDGET};
use wreathwalk::walk::fit::fit_estimates;
use wreathwalk::walk::{calibrate_fait0_convention, fit_neg_log, fit_stretched_exponent, Dynamics, Fait0Model, Method};
use wreathwalk::wreath::LampLayout;
use wreathwalk::Result;

struct Outcome {
    passed: bool,
    detail: String,
    /// For criteria with a known defect: the failure has exactly the known shape.
    known: Option<bool>,
}

impl Outcome {
    fn plain(passed: bool, detail: String) -> Self {
        Self { passed, detail, known: None }
    }
}

fn grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64)).collect()
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn kernel_exactness() -> Result<Outcome> {
    let c = kernel_check(2024, 50)?;
    Ok(Outcome::plain(c.passed, c.detail))
}

/// Known defect: a cycle of length `l` has a set of `2k` consecutive
/// vertices with boundary 2, so its Følner value is `min(2k, l)`, which
/// is `6 < l` for `l` in `{7, 8}` at `k = 3`.
fn folner_oracle() -> Result<Outcome> {
    let window: Vec<i64> = (-50..=50).collect();
    let mut line_bad = Vec::new();
    for k in 1..=10u64 {
        let v = folner_value(&FolnerQuery::new(&IntegerLine, window.clone(), k, FolnerMode::ConnectedOnly))?;
        if v.size as u64 != 2 * k {
            line_bad.push((k, v.size));
        }
    }
    let mut cycle_bad = Vec::new();
    let mut closed_form = true;
    for l in 1..=8u64 {
        let g = CycleGraph::new(l);
        for k in 3..=10u64 {
            let v = folner_value(&FolnerQuery::new(&g, (0..l).collect(), k, FolnerMode::Exhaustive))?;
            closed_form &= v.size as u64 == (2 * k).min(l);
            if v.size as u64 != l {
                cycle_bad.push((l, k, v.size));
            }
        }
    }
    let passed = line_bad.is_empty() && cycle_bad.is_empty();
    let known = line_bad.is_empty() && closed_form && cycle_bad == vec![(7, 3, 6), (8, 3, 6)];
    Ok(Outcome {
        passed,
        detail: format!("line mismatches {line_bad:?}; cycle (l, k, value) below l: {cycle_bad:?}; equals min(2k, l): {closed_form}"),
        known: Some(known),
    })
}

fn coulhon_ode() -> Result<Outcome> {
    let mut ok = true;
    let mut parts = Vec::new();
    let ts = grid(1e2, 1e6, 17);
    let lx: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    for d in [1.0, 2.0, 3.0] {
        let u = coulhon_log_curve(&OdeBoundSpec::new(FolnerProfile::Power { c: 1.0, d }, 1.0), &ts)?;
        let s = slope(&lx, &u.iter().map(|u| -u).collect::<Vec<_>>());
        ok &= (s + d / 2.0).abs() <= 0.05 * d / 2.0;
        parts.push(format!("d={d}: slope {s:.4}"));
    }
    let ts = grid(1e3, 1e8, 21);
    let u = coulhon_log_curve(&OdeBoundSpec::new(FolnerProfile::StretchedExp { beta: 1.0 }, 1.0), &ts)?;
    let series: Vec<(f64, f64, f64)> = ts.iter().zip(&u).map(|(t, u)| (*t, *u, 0.0)).collect();
    let fit = fit_neg_log(&series)?;
    ok &= (fit.alpha_hat - 1.0 / 3.0).abs() <= 0.05;
    parts.push(format!("e^x: stretched exponent {:.4}", fit.alpha_hat));
    Ok(Outcome::plain(ok, parts.join(", ")))
}

/// Known defect: the all-window ratio bound. A window ending one step into
/// a fresh dyadic half holds a class of size 1 next to classes of size
/// about `2^s / g(2^s)`, unbounded for `beta < 1`; it exceeds 10 on this
/// scan for `beta` in `{0.25, 0.5}`.
fn partition_invariants() -> Result<Outcome> {
    let mut blocks_ok = true;
    let mut over = Vec::new();
    let mut parts = Vec::new();
    for beta in [0.25, 0.5, 0.75] {
        let opts = VerifyOptions {
            betas: vec![beta],
            ..VerifyOptions::default()
        };
        let [blocks, windows] = partition_checks(&opts)?;
        blocks_ok &= blocks.passed;
        if !windows.passed {
            over.push(beta);
        }
        parts.push(format!("{} | {}", blocks.detail, windows.detail));
    }
    Ok(Outcome {
        passed: blocks_ok && over.is_empty(),
        detail: parts.join("; "),
        known: Some(blocks_ok && over == vec![0.25, 0.5]),
    })
}

fn fait0_identity() -> Result<Outcome> {
    let tiny = default_battery();
    let cal = calibrate_fait0_convention(&discriminating_battery(), DEFAULT_BUDGET)?;
    let conv = match cal.unique() {
        Ok(c) => c,
        Err(e) => return Ok(Outcome::plain(false, format!("calibration: {e}"))),
    };
    let base = calibrate_fait0_convention(&tiny, DEFAULT_BUDGET)?;
    let passed = tiny.len() >= 10 && base.matches.contains(&conv);
    Ok(Outcome::plain(
        passed,
        format!("unique convention {} over {} instances, identity exact on {} tiny instances", conv.tag(), cal.instances, tiny.len()),
    ))
}

fn estimator_consistency() -> Result<Outcome> {
    let model = Fait0Model::on_line(LampLayout::Ordinary(FiberFamily::constant(2)), Dynamics::SwitchWalkSwitch);
    let exact = line_z2_range_dp(32);
    let mut within = 0;
    for seed in 0..20 {
        let e = model.estimate(32, 4000, Method::Fait0Bridge, 1000 + seed)?;
        if (e.estimate - exact).abs() <= 3.0 * e.stderr {
            within += 1;
        }
    }
    Ok(Outcome::plain(within >= 18, format!("{within}/20 bridge runs within 3 stderr of {exact:.6e}")))
}

fn exponent_recovery() -> Result<Outcome> {
    let ns: Vec<usize> = (4..=11).map(|k| 1 << k).collect();
    let run = |alpha: f64| -> Result<Vec<_>> {
        let m = Fait0Model::on_line(LampLayout::Ordinary(FiberFamily::from_alpha(alpha)?), Dynamics::Lazy);
        ns.iter().map(|&n| m.estimate(n, 20_000, Method::Fait0Range, 11)).collect()
    };
    let third = run(1.0 / 3.0)?;
    let half = run(0.5)?;
    let a_hat = fit_estimates(&third)?.alpha_hat;
    let synthetic: Vec<(f64, f64, f64)> = ns
        .iter()
        .map(|&n| {
            let n = n as f64;
            (n, n.powf(-0.5) * (-n.powf(1.0 / 3.0)).exp(), 0.0)
        })
        .collect();
    let bias = fit_stretched_exponent(&synthetic)?.alpha_hat;
    let band = 0.23..=0.43;
    let mut ordered = true;
    let mut separated = true;
    for (a, b) in third.iter().zip(&half) {
        ordered &= b.estimate < a.estimate;
        if a.n >= 256 {
            separated &= a.estimate - b.estimate > 3.0 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        }
    }
    let passed = band.contains(&a_hat) && band.contains(&bias) && ordered && separated;
    Ok(Outcome::plain(
        passed,
        format!("fitted {a_hat:.4}, synthetic benchmark {bias:.4}, alpha 0.5 below at every n: {ordered}, separated from n = 256: {separated}"),
    ))
}

fn line_cluster(lo: i64, hi: i64) -> Result<ClusterGraph> {
    let edges: Vec<(Vec<i64>, Vec<i64>)> = (lo..hi).map(|x| (vec![x], vec![x + 1])).collect();
    ClusterGraph::from_lattice_edges(1, &edges, None)
}

/// Known defect: the logarithmic form of the local-time lemma fails at
/// level 0, where the right side needs a return to the origin without any
/// revisit. Every other part must pass.
fn percolation_battery() -> Result<Outcome> {
    let b = bidule_battery(&VerifyOptions::default())?;
    let log_levels: BTreeSet<u64> = b.log_failures.iter().map(|f| f.1).collect();

    let mut lower_ok = true;
    let mut lower = 0;
    for (lo, hi) in [(-3, 3), (-6, 6), (-2, 9)] {
        let c = line_cluster(lo, hi)?;
        for n in [4, 8, 16] {
            for alpha in [0.0, 0.5, 1.0] {
                for m in 1..=3 {
                    let r = check_lower_bound_sum(&c, n, alpha, 1.0, m, Evaluation::Exact { budget: 1 << 23 })?;
                    lower_ok &= r.holds;
                    lower += 1;
                }
            }
        }
    }

    let linear = exponent_trend(&TrendConfig {
        d: 2,
        p: 0.7,
        alpha: 1.0,
        lambda: 1.0,
        n_grid: vec![16, 32, 64, 128, 256],
        clusters: 3,
        samples: 100,
        seed: 4,
        box_radius: 10,
    })?;
    let trend = exponent_trend(&TrendConfig {
        d: 2,
        p: 0.7,
        alpha: 0.0,
        lambda: 1.0,
        n_grid: (4..=10).map(|k| 1 << k).collect(),
        clusters: 6,
        samples: 2000,
        seed: 5,
        box_radius: 40,
    })?;
    let linear_ok = (linear.eta_hat - 1.0).abs() <= 1e-6;
    let trend_ok = (0.3..=0.7).contains(&trend.eta_hat);
    let power_ok = b.power_failures.is_empty();
    let others = power_ok && lower_ok && linear_ok && trend_ok;
    Ok(Outcome {
        passed: others && b.log_failures.is_empty(),
        detail: format!(
            "lemma over {} instances: power failures {}, log failures {} at levels {log_levels:?}; lower bound {lower} cases hold: {lower_ok}; linear trend {:.9}; alpha 0 trend {:.4} (target {})",
            b.instances,
            b.power_failures.len(),
            b.log_failures.len(),
            linear.eta_hat,
            trend.eta_hat,
            trend.target
        ),
        known: Some(others && log_levels == BTreeSet::from([0])),
    })
}

fn reproducibility() -> Result<Outcome> {
    let opts = VerifyOptions {
        random_graphs: 10,
        betas: vec![0.5],
        partition_levels: 8,
        window_k: 64,
        window_m: 64,
        cluster_vertices: 3,
        bidule_n: 3,
        ..VerifyOptions::default()
    };
    let battery = run_battery(&opts)? == run_battery(&opts)?;

    let model = Fait0Model::on_line(LampLayout::Ordinary(FiberFamily::from_alpha(1.0 / 3.0)?), Dynamics::Lazy);
    let est = |w| with_workers(w, || model.estimate(64, 3000, Method::Fait0Range, 9));
    let walk = est(1)?.to_json_line() == est(4)?.to_json_line();

    let (c, _) = sample_spanning_cluster(2, 12, 0.7, 3, 100)?;
    let spec = FunctionalSpec {
        functional: Functional::SumAlpha { alpha: 0.5, lambda: 1.0 },
        with_indicator: false,
    };
    let f = |w| with_workers(w, || estimate_functional(&c, spec, 32, 1000, 9));
    let functional = serde_json::to_string(&f(1)?).unwrap() == serde_json::to_string(&f(3)?).unwrap();
    let bonds = BondSample::new(2, 12, 0.7, 3)?.bits() == BondSample::new(2, 12, 0.7, 3)?.bits();
    Ok(Outcome::plain(
        battery && walk && functional && bonds,
        format!("battery {battery}, walk estimate {walk}, functional estimate {functional}, bond sample {bonds}"),
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome>); 9] = [
        ("kernel exactness", kernel_exactness),
        ("Følner oracle", folner_oracle),
        ("isoperimetric ODE", coulhon_ode),
        ("partition invariants", partition_invariants),
        ("fiber factorization identity", fait0_identity),
        ("estimator consistency", estimator_consistency),
        ("exponent recovery", exponent_recovery),
        ("percolation battery", percolation_battery),
        ("reproducibility", reproducibility),
    ];
    let known_failures = [2, 4, 8];
    let mut unexpected = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        let t = Instant::now();
        let out = f().unwrap_or_else(|e| Outcome::plain(false, format!("error: {e}")));
        let secs = t.elapsed().max(Duration::from_millis(1)).as_secs_f64();
        let verdict = if out.passed { "PASS" } else { "FAIL" };
        println!("criterion {id} {verdict} {name} ({secs:.1} s): {}", out.detail);
        let expected = known_failures.contains(&id);
        if out.passed == expected || (expected && out.known != Some(true)) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected outcome on criteria {unexpected:?}");
        std::process::exit(1);
    }
    println!("all outcomes as expected; known failures {known_failures:?}");
}
