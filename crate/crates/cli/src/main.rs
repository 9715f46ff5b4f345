mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rcurrent_core::exact::MeasureKind;

use crate::config::{Comparison, ExactQuantity, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] rcurrent_core::Error),
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}", path = .0.display(), source = .1)]
    Io(PathBuf, std::io::Error),
    #[error("usage error: {0}")]
    Usage(String),
}

/// Random-current experiments on the near-critical Curie-Weiss model.
#[derive(Debug, Parser)]
#[command(name = "rcurrent", version)]
struct Cli {
    /// TOML experiment file; flags override its keys.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct ModelArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    #[arg(long)]
    g: Option<f64>,
    /// Comma-separated source vertices, 1-based; an empty string means no sources.
    #[arg(long)]
    sources: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the Markov chain and write one CSV row per sample.
    Sample {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        burn_in: Option<u64>,
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        thinning: Option<u64>,
        /// Sample the sum of a current with the given sources and a sourceless one.
        #[arg(long)]
        double: bool,
        #[arg(long, value_enum)]
        compare: Option<Comparison>,
        /// Comparison report path; standard error when absent.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Exact enumerations and sector sums.
    Exact {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum)]
        what: Option<ExactQuantity>,
        #[arg(long)]
        max_multiplicity: Option<u32>,
        #[arg(long, value_parser = parse_kind)]
        kind: Option<MeasureKind>,
        /// Second source set of `--what rho`.
        #[arg(long)]
        second_sources: Option<String>,
    },
    /// Limit-law box probabilities.
    Limit {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<f64>,
        #[arg(long, value_parser = parse_kind)]
        kind: Option<MeasureKind>,
        /// Canonical partition, e.g. `12|34`; every partition when absent.
        #[arg(long)]
        partition: Option<String>,
        #[arg(long)]
        v_max: Option<usize>,
    },
    /// Enumerate backbone multigraphs as JSON lines.
    Backbone {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        v_max: Option<usize>,
        #[arg(long)]
        partition: Option<String>,
    },
    /// Both sides of the lattice switching identity for each configured case.
    Switch {
        #[arg(long)]
        truncation: Option<u32>,
    },
    /// Sector-sum comparisons of the magnetisation with its scaling limit.
    Gs {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Run the acceptance criteria and print a pass/fail table.
    Verify {
        #[arg(long)]
        seed: Option<u64>,
        /// Scale factor on Monte Carlo sample counts.
        #[arg(long)]
        budget: Option<f64>,
        /// Comma-separated criterion numbers; all when absent.
        #[arg(long)]
        criteria: Option<String>,
        /// Exit 0 when the only failures are the documented known gaps.
        #[arg(long)]
        allow_known_gaps: bool,
    },
}

fn parse_kind(s: &str) -> Result<MeasureKind, String> {
    match s {
        "single" => Ok(MeasureKind::Single),
        "double" => Ok(MeasureKind::Double),
        _ => Err(format!("expected `single` or `double`, got `{s}`")),
    }
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| CliError::Usage(format!("cannot parse list item `{t}`"))))
        .collect()
}

impl ModelArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
        let m = &mut cfg.model;
        if let Some(n) = self.n {
            m.n = n;
        }
        if let Some(l) = self.lambda {
            m.lambda = l;
        }
        if let Some(g) = self.g {
            m.g = g;
        }
        if let Some(s) = &self.sources {
            m.sources = parse_list(s)?;
        }
        Ok(())
    }
}

fn apply_overrides(command: &Command, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
    match command {
        Command::Sample { model, burn_in, samples, thinning, double, compare, .. } => {
            model.apply(cfg)?;
            let s = &mut cfg.sampler;
            s.burn_in = burn_in.unwrap_or(s.burn_in);
            s.samples = samples.unwrap_or(s.samples);
            s.thinning = thinning.unwrap_or(s.thinning);
            s.double |= *double;
            if compare.is_some() {
                s.compare = *compare;
            }
        }
        Command::Exact { model, what, max_multiplicity, kind, second_sources } => {
            model.apply(cfg)?;
            let e = &mut cfg.exact;
            e.quantity = what.unwrap_or(e.quantity);
            e.max_multiplicity = max_multiplicity.unwrap_or(e.max_multiplicity);
            e.kind = kind.unwrap_or(e.kind);
            if let Some(s) = second_sources {
                e.second_sources = parse_list(s)?;
            }
        }
        Command::Limit { k, lambda, kind, partition, v_max } => {
            cfg.model.lambda = lambda.unwrap_or(cfg.model.lambda);
            let l = &mut cfg.limit;
            l.k = k.unwrap_or(l.k);
            l.kind = kind.unwrap_or(l.kind);
            if partition.is_some() {
                l.partition.clone_from(partition);
                l.bounds = None;
            }
            if v_max.is_some() {
                l.v_max = *v_max;
            }
        }
        Command::Backbone { k, v_max, partition } => {
            let b = &mut cfg.backbone;
            b.k = k.unwrap_or(b.k);
            b.v_max = v_max.unwrap_or(b.v_max);
            if partition.is_some() {
                b.partition.clone_from(partition);
            }
        }
        Command::Switch { truncation } => {
            cfg.switch.truncation = truncation.unwrap_or(cfg.switch.truncation);
        }
        Command::Gs { n } => {
            cfg.gs.n = n.unwrap_or(cfg.gs.n);
        }
        Command::Verify { seed, budget, criteria, .. } => {
            let v = &mut cfg.verify;
            v.seed = seed.unwrap_or(v.seed);
            v.budget = budget.unwrap_or(v.budget);
            if let Some(c) = criteria {
                v.criteria = parse_list(c)?;
            }
        }
    }
    Ok(())
}

/// Exit status of a completed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    ToleranceFailure,
}

fn run(cli: Cli) -> Result<Status, CliError> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    apply_overrides(&cli.command, &mut cfg)?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::Sample { seed, report, .. } => commands::sample(&cfg, seed, out, report.as_deref()),
        Command::Exact { .. } => commands::exact(&cfg, out),
        Command::Limit { .. } => commands::limit(&cfg, out),
        Command::Backbone { .. } => commands::backbone(&cfg, out),
        Command::Switch { .. } => commands::switch(&cfg, out),
        Command::Gs { .. } => commands::gs(&cfg, out),
        Command::Verify { allow_known_gaps, .. } => commands::verify(&cfg, allow_known_gaps),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Status::Pass) => ExitCode::SUCCESS,
        Ok(Status::ToleranceFailure) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
