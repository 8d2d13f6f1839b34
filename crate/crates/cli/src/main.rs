use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ftmg::harness::{self, Document, OutputBundle, RunOptions, ScenarioConfig};
use ftmg::resilience::Accounting;
use ftmg::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "ftmg", version, about = "Fault-tolerant multigrid experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// How recovery work is counted in k_faulty.
    #[arg(long, global = true, value_enum)]
    accounting: Option<AccountingArg>,

    /// Write a residual trace for every sweep run.
    #[arg(long, global = true)]
    trace_regions: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Baseline plus the configured faulty job.
    Run { config: PathBuf },
    /// Cross product of the sweep axes.
    Sweep { config: PathBuf },
    /// Fault-free solve only.
    Baseline { config: PathBuf },
    /// Check a config and print it with defaults filled in.
    Validate { config: PathBuf },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AccountingArg {
    Table1,
    Global,
}

impl From<AccountingArg> for Accounting {
    fn from(a: AccountingArg) -> Self {
        match a {
            AccountingArg::Table1 => Accounting::Table1,
            AccountingArg::Global => Accounting::Global,
        }
    }
}

fn options(cli: &Cli, cfg: &ScenarioConfig) -> RunOptions {
    let output_dir = cli
        .output_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    RunOptions {
        output_dir,
        jobs: cli.jobs,
    }
}

fn report(bundle: &OutputBundle) -> u8 {
    for row in &bundle.rows {
        match (row.kappa, &row.kappa_exact) {
            (Some(k), exact) => println!(
                "{}: {} {} k_free={} k_faulty={} kappa={} ({exact}) [{}]",
                row.run_id,
                row.scenario,
                row.strategy,
                row.k_free.unwrap_or_default(),
                row.k_faulty.unwrap_or_default(),
                k,
                row.status
            ),
            (None, _) => eprintln!("{}: {}", row.run_id, row.status),
        }
    }
    println!("wrote {}", bundle.dir.display());
    if bundle.converged() {
        0
    } else {
        eprintln!("solver did not reach the tolerance");
        EXIT_NOT_CONVERGED
    }
}

fn execute(cli: &Cli) -> Result<u8, Error> {
    let accounting = cli.accounting.map(Accounting::from);
    match &cli.command {
        Command::Run { config } => {
            let cfg = harness::with_accounting(harness::load_config(config)?, accounting);
            let bundle = harness::run_scenario(&cfg, &options(cli, &cfg))?;
            Ok(report(&bundle))
        }
        Command::Sweep { config } => {
            let mut spec = harness::load_sweep(config)?;
            spec.base = harness::with_accounting(spec.base, accounting);
            spec.trace_regions |= cli.trace_regions;
            let bundle = harness::run_sweep(&spec, &options(cli, &spec.base))?;
            Ok(report(&bundle))
        }
        Command::Baseline { config } => {
            let cfg = harness::load_config(config)?;
            let bundle = harness::run_baseline(&cfg, &options(cli, &cfg))?;
            match bundle.baseline.iterations {
                Some(k) => println!("k_free = {k}"),
                None => println!("no convergence in {} cycles", bundle.baseline.cycles),
            }
            Ok(report(&bundle))
        }
        Command::Validate { config } => {
            let doc = match harness::load_document(config)? {
                Document::Scenario(cfg) => {
                    Document::Scenario(harness::with_accounting(cfg, accounting))
                }
                Document::Sweep(mut spec) => {
                    spec.base = harness::with_accounting(spec.base, accounting);
                    Document::Sweep(spec)
                }
            };
            println!("{}", serde_json::to_string_pretty(&doc)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_FAILURE
            })
        }
    }
}
