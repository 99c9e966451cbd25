use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

use commands::{run, CliError, Output};
use wreathwalk::config::{parse_config, Command, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "wreathwalk", version, about = "Return probabilities, Følner values and percolation functionals on wreath-product graphs")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Sub {
    /// Exact or Monte Carlo return probabilities (JSON lines).
    ReturnProb,
    /// Følner values of the line, a cycle or the wreath box family (JSON lines).
    Folner,
    /// The isoperimetric ODE bound on a time grid (CSV).
    Coulhon,
    /// Build a dyadic partition and scan its window invariants (JSON lines).
    Partition,
    /// Local-time functional estimates on a percolation cluster (JSON lines).
    Percolation,
    /// The oracle battery; exits 1 if any check fails (JSON lines).
    Verify,
    /// Stretched-exponent regression on a result file (JSON).
    Fit,
}

impl Sub {
    fn command(self) -> Command {
        match self {
            Self::ReturnProb => Command::ReturnProb,
            Self::Folner => Command::Folner,
            Self::Coulhon => Command::Coulhon,
            Self::Partition => Command::Partition,
            Self::Percolation => Command::Percolation,
            Self::Verify => Command::Verify,
            Self::Fit => Command::Fit,
        }
    }
}

/// Every flag overrides the matching key of the config file.
#[derive(Debug, Args)]
struct Flags {
    /// `key = value` config file applied before the flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "wreath|genwreath|cluster|cycle|line")]
    family: Option<String>,
    #[arg(long, global = true)]
    alpha: Option<String>,
    #[arg(long, global = true)]
    beta: Option<String>,
    /// Partition levels S.
    #[arg(long, global = true, value_name = "S")]
    levels: Option<String>,
    #[arg(long, global = true)]
    d: Option<String>,
    #[arg(long, global = true)]
    p: Option<String>,
    #[arg(long, global = true)]
    lambda: Option<String>,
    /// Comma list and/or dyadic ranges, e.g. `16,32` or `2^4..2^11`.
    #[arg(long, global = true, visible_alias = "n")]
    n_grid: Option<String>,
    #[arg(long, global = true)]
    samples: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Exact rational arithmetic where the command supports it.
    #[arg(long, global = true)]
    exact: bool,
    #[arg(long, global = true, value_name = "exact-dp|naive-mc|fait0-mc|fait0-bridge|fait0-range")]
    method: Option<String>,
    #[arg(long, global = true)]
    fiber: Option<String>,
    #[arg(long, global = true)]
    k_max: Option<String>,
    #[arg(long, global = true)]
    clusters: Option<String>,
    #[arg(long, global = true)]
    box_radius: Option<String>,
    #[arg(long, global = true)]
    workers: Option<String>,
    /// Result file; defaults to stdout, or a file under the output directory.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Input file (`fit`, `partition`, `percolation`).
    #[arg(long, global = true)]
    input: Option<String>,
    #[arg(long, global = true, env = "WREATHWALK_OUT_DIR")]
    out_dir: Option<PathBuf>,
}

impl Flags {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let pairs = [
            ("family", &self.family),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("levels", &self.levels),
            ("d", &self.d),
            ("p", &self.p),
            ("lambda", &self.lambda),
            ("n_grid", &self.n_grid),
            ("samples", &self.samples),
            ("seed", &self.seed),
            ("method", &self.method),
            ("fiber", &self.fiber),
            ("k_max", &self.k_max),
            ("clusters", &self.clusters),
            ("box_radius", &self.box_radius),
            ("workers", &self.workers),
            ("out", &self.out),
            ("input", &self.input),
        ];
        let mut out: Vec<_> = pairs.into_iter().filter_map(|(k, v)| v.clone().map(|v| (k, v))).collect();
        if self.exact {
            out.push(("exact", "true".into()));
        }
        out
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => ExperimentConfig::default(),
    };
    cfg.command = cli.command.command();
    for (k, v) in cli.flags.overrides() {
        cfg.apply(k, &v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(cfg: &ExperimentConfig, out_dir: Option<&PathBuf>, output: &Output) -> Result<(), CliError> {
    let target = match (&cfg.out, out_dir) {
        (Some(p), _) => Some(PathBuf::from(p)),
        (None, Some(dir)) => Some(dir.join(format!("{}-{}.{}", cfg.command, &output.hash[..12], output.ext))),
        (None, None) => None,
    };
    match target {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
            }
            std::fs::write(&path, &output.body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
        }
        None => {
            print!("{}", output.body);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|cfg| {
        let output = wreathwalk::rng::with_workers(cfg.workers, || run(&cfg))?;
        emit(&cfg, cli.flags.out_dir.as_ref(), &output)?;
        Ok(output.success)
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(2)
        }
    }
}
