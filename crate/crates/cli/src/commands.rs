use std::sync::Arc;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use wreathwalk::config::{Command, ExperimentConfig, Family};
use wreathwalk::fibers::FiberFamily;
use wreathwalk::graph::{propagate, CycleGraph, Graph, IntegerLine, LazyKernel, SparseDistribution};
use wreathwalk::isoperimetry::{box_witness, coulhon_log_curve, folner_value, FolnerMode, FolnerProfile, FolnerQuery, OdeBoundSpec};
use wreathwalk::partition::{check_growth_bounds, check_ratio, DyadicPartition, GrowthFunction};
use wreathwalk::percolation::{estimate_functional, load_cluster_edges, sample_spanning_cluster, ClusterGraph, Functional, FunctionalSpec};
use wreathwalk::prob::{Exact, Prob};
use wreathwalk::verify::{run_battery, VerifyOptions};
use wreathwalk::walk::estimate::run_samples;
use wreathwalk::walk::fait0::DEFAULT_BUDGET;
use wreathwalk::walk::fit::fit_estimates;
use wreathwalk::walk::{fit_neg_log, parse_estimates, simulate, Dynamics, Fait0Model, Method, ReturnEstimate, StretchedFit};
use wreathwalk::wreath::{LampLayout, WreathGraph};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] wreathwalk::Error),
    #[error("io: {0}")]
    Io(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        use wreathwalk::Error as E;
        match self {
            Self::Io(_) => "io",
            Self::Usage(_) => "usage",
            Self::Core(e) => match e {
                E::BudgetExceeded { .. } => "budget-exceeded",
                E::Overflow { .. } => "overflow",
                E::InvalidGrowth(_) => "invalid-growth",
                E::OutOfRange { .. } => "out-of-range",
                E::IsolatedVertex => "isolated-vertex",
                E::NoConventionMatches => "no-convention-matches",
                E::InvalidConvention(_) => "invalid-convention",
                E::DegenerateSeries(_) => "degenerate-series",
                E::StiffnessFailure { .. } => "stiffness-failure",
                E::EmptyFeasible => "empty-feasible",
                E::OriginIsolated => "origin-isolated",
                E::InvalidParameter(_) => "invalid-parameter",
                E::Parse { .. } => "parse",
            },
        }
    }

    /// One JSON line describing the failure.
    pub fn record(&self) -> String {
        json!({"error": self.kind(), "message": self.to_string()}).to_string()
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub struct Output {
    pub body: String,
    pub ext: &'static str,
    pub hash: String,
    pub success: bool,
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(cfg.canonical_text().as_bytes()))
}

struct Records {
    hash: String,
    seed: u64,
    lines: Vec<String>,
}

impl Records {
    fn push(&mut self, method: &str, mut fields: Map<String, Value>) {
        fields.insert("config_hash".into(), json!(self.hash));
        fields.insert("seed".into(), json!(self.seed));
        fields.insert("method".into(), json!(method));
        self.lines.push(Value::Object(fields).to_string());
    }
}

fn object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("records are objects"),
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Output> {
    let hash = config_hash(cfg);
    let mut rec = Records {
        hash: hash.clone(),
        seed: cfg.seed,
        lines: Vec::new(),
    };
    let mut success = true;
    let mut ext = "jsonl";
    match cfg.command {
        Command::ReturnProb => return_prob(cfg, &mut rec)?,
        Command::Folner => folner(cfg, &mut rec)?,
        Command::Coulhon => {
            ext = "csv";
            rec.lines = coulhon(cfg, &hash)?;
        }
        Command::Partition => success = partition(cfg, &mut rec)?,
        Command::Percolation => percolation(cfg, &mut rec)?,
        Command::Verify => {
            let opts = VerifyOptions {
                seed: cfg.seed,
                ..VerifyOptions::default()
            };
            for c in run_battery(&opts)? {
                success &= c.passed;
                rec.push("verify", object(serde_json::to_value(&c).expect("check serializes")));
            }
        }
        Command::Fit => fit(cfg, &mut rec)?,
    }
    let mut body = rec.lines.join("\n");
    body.push('\n');
    Ok(Output { body, ext, hash, success })
}

fn line_model(cfg: &ExperimentConfig) -> Result<Fait0Model<IntegerLine>> {
    let layout = match cfg.family {
        Family::Wreath => LampLayout::Ordinary(FiberFamily::from_alpha(cfg.alpha)?),
        Family::Genwreath => LampLayout::Generalized {
            partition: Arc::new(DyadicPartition::build(&GrowthFunction::power(cfg.beta), cfg.levels)?),
            fiber: cfg.fiber,
        },
        _ => unreachable!("only wreath families have lamps"),
    };
    Ok(Fait0Model::on_line(layout, Dynamics::Lazy))
}

fn cluster(cfg: &ExperimentConfig) -> Result<ClusterGraph> {
    match &cfg.input {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
            Ok(load_cluster_edges(&text)?)
        }
        None => Ok(sample_spanning_cluster(cfg.d, cfg.box_radius, cfg.p, cfg.seed, 10_000)?.0),
    }
}

/// `P(X_n = start)` for the lazy walk on `g`, exactly or by plain simulation.
fn walk_return<G: Graph>(g: &G, start: &G::Vertex, n: usize, cfg: &ExperimentConfig) -> Result<(ReturnEstimate, Option<Exact>)> {
    if cfg.exact || cfg.method == Some(Method::ExactDp) {
        let dist = propagate(&LazyKernel(g), &SparseDistribution::dirac(start.clone()), n, DEFAULT_BUDGET)?;
        let p: Exact = dist.get(start);
        return Ok((ReturnEstimate::exact(n as u64, p.as_f64()), Some(p)));
    }
    if let Some(m) = cfg.method.filter(|m| *m != Method::NaiveMc) {
        return Err(CliError::Usage(format!("method {m} needs a wreath family")));
    }
    let stats = run_samples(cfg.samples, cfg.seed, |r| Ok(if simulate(g, start, n, r)?.end() == start { 1.0 } else { 0.0 }))?;
    Ok((ReturnEstimate::from_stats(n as u64, &stats, Method::NaiveMc, cfg.seed), None))
}

fn return_prob(cfg: &ExperimentConfig, rec: &mut Records) -> Result<()> {
    for &n in &cfg.n_grid {
        let (est, exact) = match cfg.family {
            Family::Wreath | Family::Genwreath => {
                let model = line_model(cfg)?;
                if cfg.exact || cfg.method == Some(Method::ExactDp) {
                    let p: Exact = model.exact_return(&0, n, DEFAULT_BUDGET)?;
                    (ReturnEstimate::exact(n as u64, p.as_f64()), Some(p))
                } else {
                    let method = cfg.method.unwrap_or(match cfg.family {
                        Family::Wreath => Method::Fait0Range,
                        _ => Method::Fait0Bridge,
                    });
                    (model.estimate(n, cfg.samples, method, cfg.seed)?, None)
                }
            }
            Family::Line => walk_return(&IntegerLine, &0, n, cfg)?,
            Family::Cycle => walk_return(&CycleGraph::new(cfg.fiber), &0, n, cfg)?,
            Family::Cluster => walk_return(&cluster(cfg)?, &0, n, cfg)?,
        };
        let method = est.method.tag();
        let mut fields = object(serde_json::to_value(&est).expect("estimate serializes"));
        fields.insert("family".into(), json!(cfg.family.tag()));
        if let Some(p) = exact {
            fields.insert("exact".into(), json!(p.to_string()));
        }
        rec.push(method, fields);
    }
    Ok(())
}

fn mode_tag(m: FolnerMode) -> &'static str {
    match m {
        FolnerMode::Exhaustive => "exhaustive",
        FolnerMode::ConnectedOnly => "connected-only",
        FolnerMode::WitnessFamily => "witness-family",
    }
}

fn folner(cfg: &ExperimentConfig, rec: &mut Records) -> Result<()> {
    let mut push = |k: u64, size: usize, boundary: usize, mode: FolnerMode, window: usize| {
        rec.push(
            mode_tag(mode),
            object(json!({"family": cfg.family.tag(), "k": k, "size": size, "boundary": boundary, "window": window})),
        );
    };
    match cfg.family {
        Family::Line => {
            let w = 50.max(2 * cfg.k_max as i64);
            let window: Vec<i64> = (-w..=w).collect();
            for k in 1..=cfg.k_max {
                let v = folner_value(&FolnerQuery::new(&IntegerLine, window.clone(), k, FolnerMode::ConnectedOnly))?;
                push(k, v.size, v.boundary, v.mode, v.window);
            }
        }
        Family::Cycle => {
            let g = CycleGraph::new(cfg.fiber);
            let mode = if cfg.fiber <= 20 { FolnerMode::Exhaustive } else { FolnerMode::ConnectedOnly };
            for k in 1..=cfg.k_max {
                let v = folner_value(&FolnerQuery::new(&g, (0..cfg.fiber).collect(), k, mode))?;
                push(k, v.size, v.boundary, v.mode, v.window);
            }
        }
        Family::Wreath => {
            let fibers = FiberFamily::from_alpha(cfg.alpha)?;
            let mut witnesses = Vec::new();
            for n in 0.. {
                match box_witness(&fibers, n, 1 << 16) {
                    Ok(u) => witnesses.push(u),
                    Err(wreathwalk::Error::BudgetExceeded { .. }) => break,
                    Err(e) => return Err(e.into()),
                }
            }
            let g = WreathGraph::ordinary(IntegerLine, fibers);
            for k in 1..=cfg.k_max {
                let q = FolnerQuery::new(&g, Vec::new(), k, FolnerMode::WitnessFamily).with_witnesses(witnesses.clone());
                match folner_value(&q) {
                    Ok(v) => push(k, v.size, v.boundary, v.mode, v.window),
                    Err(wreathwalk::Error::EmptyFeasible) => break,
                    Err(e) => return Err(e.into()),
                }
            }
        }
        f => return Err(CliError::Usage(format!("folner supports line, cycle and wreath, not {f}"))),
    }
    Ok(())
}

/// Columns: `t,neg_log_v,v,config_hash`.
fn coulhon(cfg: &ExperimentConfig, hash: &str) -> Result<Vec<String>> {
    let (profile, m0) = match cfg.family {
        Family::Line => (FolnerProfile::Power { c: 1.0, d: cfg.d as f64 }, (2 * cfg.d + 1) as f64),
        Family::Wreath => (
            FolnerProfile::StretchedExp {
                beta: 2.0 * cfg.alpha / (1.0 - cfg.alpha),
            },
            3.0,
        ),
        f => return Err(CliError::Usage(format!("coulhon supports line and wreath, not {f}"))),
    };
    let mut times: Vec<f64> = cfg.n_grid.iter().map(|&n| n as f64).collect();
    times.sort_by(f64::total_cmp);
    let us = coulhon_log_curve(&OdeBoundSpec::new(profile, m0), &times)?;
    let mut out = vec!["t,neg_log_v,v,config_hash".to_string()];
    out.extend(times.iter().zip(&us).map(|(t, u)| format!("{t},{u},{},{hash}", (-u).exp())));
    Ok(out)
}

/// Returns whether every scanned invariant holds.
fn partition(cfg: &ExperimentConfig, rec: &mut Records) -> Result<bool> {
    let (p, g) = match &cfg.input {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
            (DyadicPartition::load(&text)?, None)
        }
        None => {
            let g = GrowthFunction::power(cfg.beta);
            (DyadicPartition::build(&g, cfg.levels)?, Some(g))
        }
    };
    let half = 1i64 << p.levels();
    let m = 256.min(half as u64 / 2).max(1);
    let k = 1024.min(half - m as i64 - 1).max(0);
    let ratio = check_ratio(&p, k, m)?;
    let mut ok = ratio.passes();
    let mut fields = object(json!({
        "levels": p.levels(),
        "classes": p.num_classes(),
        "window_k": k,
        "window_m": m,
        "max_ratio": ratio.max_ratio,
        "worst": [ratio.worst.0, ratio.worst.1],
        "max_dyadic_ratio": ratio.max_dyadic_ratio,
    }));
    if let Some(g) = g {
        let growth = check_growth_bounds(&p, &g, k, m)?;
        ok &= growth.passes();
        fields.insert("dyadic_exact".into(), json!(growth.dyadic_exact));
        fields.insert("bound_violations".into(), json!(growth.violations.len()));
        fields.insert("min_lower_slack".into(), json!(growth.min_lower_slack));
        fields.insert("min_upper_slack".into(), json!(growth.min_upper_slack));
    }
    fields.insert("passes".into(), json!(ok));
    rec.push("window-scan", fields);
    Ok(ok)
}

fn percolation(cfg: &ExperimentConfig, rec: &mut Records) -> Result<()> {
    if cfg.input.is_none() && cfg.family != Family::Cluster {
        return Err(CliError::Usage("percolation runs on --family cluster or an --input edge list".into()));
    }
    let c = cluster(cfg)?;
    let spec = FunctionalSpec {
        functional: Functional::SumAlpha {
            alpha: cfg.alpha,
            lambda: cfg.lambda,
        },
        with_indicator: false,
    };
    for &n in &cfg.n_grid {
        let est = estimate_functional(&c, spec, n, cfg.samples, cfg.seed)?;
        rec.push("importance-mixture", object(serde_json::to_value(&est).expect("estimate serializes")));
    }
    Ok(())
}

fn fit_record(f: &StretchedFit) -> Map<String, Value> {
    object(json!({
        "alpha_hat": f.alpha_hat,
        "stderr": f.stderr,
        "intercept": f.intercept,
        "points": f.points,
        "polynomial_like": f.polynomial_like(),
    }))
}

/// Fits return-probability records, or functional records by `-ln` of the
/// estimate against `n + 1`.
fn fit(cfg: &ExperimentConfig, rec: &mut Records) -> Result<()> {
    let path = cfg.input.as_ref().ok_or_else(|| CliError::Usage("fit needs --input".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
    let functional = text.lines().find(|l| !l.trim().is_empty()).is_some_and(|l| l.contains("\"ln_estimate\""));
    let f = if functional {
        let mut series = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let v: Value = serde_json::from_str(line).map_err(|e| wreathwalk::Error::Parse { line: i + 1, msg: e.to_string() })?;
            let get = |k: &str| {
                v.get(k).and_then(Value::as_f64).ok_or_else(|| wreathwalk::Error::Parse {
                    line: i + 1,
                    msg: format!("missing number {k:?}"),
                })
            };
            series.push((get("n")? + 1.0, -get("ln_estimate")?, get("rel_stderr")?));
        }
        fit_neg_log(&series)?
    } else {
        fit_estimates(&parse_estimates(&text)?)?
    };
    rec.push("stretched-fit", fit_record(&f));
    Ok(())
}
