use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hetnet_cli::{write_all, Command, Invocation, Options};

#[derive(Parser)]
#[command(name = "hetnet", version, about = "Coverage analysis of interference nulling in two-tier networks")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Rate or SIR coverage along one sweep axis.
    CoverageCurve(Common),
    /// Coverage for every nulling order U and the best one per grid point.
    OptimizeU(Common),
    /// Iterated almost-blank-subframe share η.
    OptimizeEta(Common),
    /// IN, SO and ABS at the best bias, with per-user-type breakdown.
    CompareSchemes(Common),
    /// Offload-count distributions, approximate and simulated.
    Pmf(Common),
    /// Analytic results against simulation; writes a JSON report.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Config override applied to the analytic side only (key=value).
        #[arg(long = "analytic-set", value_name = "KEY=VALUE")]
        analytic_set: Vec<String>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment spec (TOML).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// System config file (key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config override, repeatable (key=value).
    #[arg(long, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo drops per point.
    #[arg(long)]
    drops: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated list of full, mla, mc.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    methods: Option<Vec<String>>,
    /// Sweep axis: tau, beta, u, eta, b.
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    grid: Option<Vec<f64>>,
    /// Experiment name; output file stem.
    #[arg(long)]
    name: Option<String>,
}

impl Common {
    fn options(self, analytic_set: Vec<String>) -> Options {
        Options {
            spec: self.spec,
            config: self.config,
            set: self.set,
            seed: self.seed,
            drops: self.drops,
            out: self.out,
            methods: self.methods,
            axis: self.axis,
            grid: self.grid,
            name: self.name,
            analytic_set,
        }
    }
}

fn main() -> ExitCode {
    let (command, opts) = match Cli::parse().command {
        Sub::CoverageCurve(c) => (Command::CoverageCurve, c.options(Vec::new())),
        Sub::OptimizeU(c) => (Command::OptimizeU, c.options(Vec::new())),
        Sub::OptimizeEta(c) => (Command::OptimizeEta, c.options(Vec::new())),
        Sub::CompareSchemes(c) => (Command::CompareSchemes, c.options(Vec::new())),
        Sub::Pmf(c) => (Command::Pmf, c.options(Vec::new())),
        Sub::Validate { common, analytic_set } => (Command::Validate, common.options(analytic_set)),
    };
    let inv = match Invocation::resolve(command, &opts) {
        Ok(inv) => inv,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if command == Command::Validate {
        let report = match inv.validation_report() {
            Ok(r) => r,
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(1);
            }
        };
        for c in &report.checks {
            let measured = c.measured.map_or_else(|| "n/a".to_string(), |m| format!("{m:.4}"));
            println!(
                "{} {} measured {measured} threshold {:.4}  {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.threshold,
                c.detail
            );
        }
        return match write_all(&inv.spec.out, &[inv.report_artifact(&report)]) {
            Ok(paths) => {
                for p in paths {
                    println!("{}", p.display());
                }
                if report.passed {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(3)
                }
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        };
    }
    match inv.execute().and_then(|arts| write_all(&inv.spec.out, &arts)) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
