//! Scenario front end: run a simulation and collect its artifacts, or
//! evaluate the closed-form cost models alone, or re-verify an exported
//! chain offline.
//!
//! Each failure mode has its own exit code so scripts can tell them
//! apart: 0 clean run or Accept verdict, 1 Reject verdict, 2 usage error,
//! 3 bad config, 4 the simulation itself failed, 5 unreadable or
//! malformed chain export, 6 the run ended with work still in flight,
//! 7 an artifact could not be written.

use clap::{Args, Parser, Subcommand, ValueEnum};
use robosim::ledger::{import_blocks, validate_chain, ChainVerdict, KeyedDigestScheme};
use robosim::{build_report, econ_section, run_scenario, ReportError, ScenarioConfig};
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_REJECT: u8 = 1;
const EXIT_CONFIG: u8 = 3;
const EXIT_FATAL: u8 = 4;
const EXIT_EXPORT: u8 = 5;
const EXIT_INCOMPLETE: u8 = 6;
const EXIT_ARTIFACT: u8 = 7;

#[derive(Parser)]
#[command(
    name = "robosim",
    version,
    about = "Deterministic robot service economy simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trace, chain export, and report.
    Run(RunArgs),
    /// Re-validate an exported chain, printing Accept or Reject.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config file (JSON).
    config: PathBuf,
    /// Override the config's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's proof-of-work difficulty.
    #[arg(long)]
    difficulty: Option<u32>,
    /// Evaluate the cost models only; nothing is simulated or written.
    #[arg(long)]
    econ_only: bool,
    /// What to print to stdout.
    #[arg(long, value_enum, default_value_t = ReportStyle::Table)]
    report: ReportStyle,
    /// Trace file path (defaults to <out-dir>/trace.jsonl).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Directory receiving trace.jsonl, chain.jsonl, and report.json.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportStyle {
    Json,
    Table,
    Both,
}

#[derive(Args)]
struct VerifyArgs {
    /// Chain export file (JSON lines, one block per line).
    chain: PathBuf,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Verify(args) => verify(&args.chain),
    }
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn load_config(args: &RunArgs) -> Result<ScenarioConfig, ExitCode> {
    let text = fs::read_to_string(&args.config).map_err(|e| {
        fail(
            EXIT_CONFIG,
            format_args!("cannot read {}: {e}", args.config.display()),
        )
    })?;
    let mut cfg = ScenarioConfig::from_json_str(&text).map_err(|e| fail(EXIT_CONFIG, e))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(difficulty) = args.difficulty {
        cfg.pow_difficulty = difficulty;
    }
    cfg.validate().map_err(|e| fail(EXIT_CONFIG, e))?;
    Ok(cfg)
}

fn run(args: RunArgs) -> ExitCode {
    let cfg = match load_config(&args) {
        Ok(cfg) => cfg,
        Err(code) => return code,
    };

    if args.econ_only {
        let Some(econ) = econ_section(&cfg) else {
            return fail(
                EXIT_CONFIG,
                "config has no econ section; nothing to evaluate with --econ-only",
            );
        };
        match args.report {
            ReportStyle::Table => print!("{}", robosim::report::render_budget_panels(&econ)),
            ReportStyle::Json => {
                println!("{}", serde_json::to_string_pretty(&econ).expect("serializes"))
            }
            ReportStyle::Both => {
                println!("{}", serde_json::to_string_pretty(&econ).expect("serializes"));
                print!("{}", robosim::report::render_budget_panels(&econ));
            }
        }
        return ExitCode::SUCCESS;
    }

    if let Err(e) = fs::create_dir_all(&args.out_dir) {
        return fail(
            EXIT_ARTIFACT,
            format_args!("cannot create {}: {e}", args.out_dir.display()),
        );
    }
    let trace_path = args
        .trace
        .clone()
        .unwrap_or_else(|| args.out_dir.join("trace.jsonl"));
    let trace_file = match fs::File::create(&trace_path) {
        Ok(f) => f,
        Err(e) => {
            return fail(
                EXIT_ARTIFACT,
                format_args!("cannot create {}: {e}", trace_path.display()),
            )
        }
    };
    let mut trace = BufWriter::new(trace_file);

    let out = match run_scenario(&cfg, Some(&mut trace)) {
        Ok(out) => out,
        Err(e) => return fail(EXIT_FATAL, e),
    };
    if let Err(e) = trace.flush() {
        return fail(EXIT_ARTIFACT, e);
    }

    let report = match build_report(&cfg, &out) {
        Ok(report) => report,
        Err(e @ ReportError::IncompleteTrace { .. }) => return fail(EXIT_INCOMPLETE, e),
    };

    let chain_path = args.out_dir.join("chain.jsonl");
    let report_path = args.out_dir.join("report.json");
    let written = (|| -> std::io::Result<()> {
        let mut chain_file = BufWriter::new(fs::File::create(&chain_path)?);
        out.chain.export_jsonl(&mut chain_file)?;
        chain_file.flush()?;
        fs::write(&report_path, report.to_json())?;
        Ok(())
    })();
    if let Err(e) = written {
        return fail(EXIT_ARTIFACT, e);
    }

    match args.report {
        ReportStyle::Table => print!("{}", report.render_table()),
        ReportStyle::Json => println!("{}", report.to_json()),
        ReportStyle::Both => {
            println!("{}", report.to_json());
            print!("{}", report.render_table());
        }
    }
    eprintln!(
        "wrote {}, {}, {}",
        trace_path.display(),
        chain_path.display(),
        report_path.display()
    );
    ExitCode::SUCCESS
}

fn verify(path: &Path) -> ExitCode {
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) => {
            return fail(
                EXIT_EXPORT,
                format_args!("cannot read {}: {e}", path.display()),
            )
        }
    };
    let blocks = match import_blocks(BufReader::new(file)) {
        Ok(blocks) => blocks,
        Err(e) => return fail(EXIT_EXPORT, e),
    };
    let verdict = validate_chain(&blocks, &KeyedDigestScheme);
    println!("{verdict}");
    match verdict {
        ChainVerdict::Accept => ExitCode::SUCCESS,
        ChainVerdict::Reject { .. } => ExitCode::from(EXIT_REJECT),
    }
}
