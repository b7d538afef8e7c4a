//! Scenario runner: validates a scenario, executes it deterministically, and
//! emits metrics, the event log, and a reproducible run manifest.

mod output;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use orchsim_core::netsim;
use orchsim_core::scenario::{self, Scenario, ValidatedScenario};
use output::OutputFormat;

const EXIT_VALIDATION: u8 = 1;
const EXIT_INTERNAL: u8 = 2;

#[derive(Parser)]
#[command(
    name = "orchsim",
    version,
    about = "QoS-aware gateway orchestration simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write metrics, events, and the run manifest.
    Run {
        /// Scenario JSON file.
        scenario: Option<PathBuf>,
        /// Use a built-in scenario instead of a file (`paper-poc`).
        #[arg(long, conflicts_with = "scenario")]
        builtin: Option<String>,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Metrics file format.
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
        /// Print a JSON summary to stdout at the end.
        #[arg(long)]
        summary: bool,
    },
    /// Validate a scenario file, reporting every violation.
    Validate { scenario: PathBuf },
    /// Write a built-in scenario as JSON (stdout, or --out FILE).
    ExportBuiltin {
        /// Built-in scenario name (`paper-poc`).
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run_cli(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}

fn run_cli(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run {
            scenario,
            builtin,
            seed,
            out,
            format,
            summary,
        } => {
            let raw = match (scenario, builtin) {
                (Some(path), None) => load_scenario_file(&path)?,
                (None, Some(name)) => builtin_scenario(&name)?,
                (None, None) => anyhow::bail!("pass a scenario file or --builtin <name>"),
                (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
            };
            let validated = match validate_or_report(&raw) {
                Some(v) => v,
                None => return Ok(ExitCode::from(EXIT_VALIDATION)),
            };
            // The effective seed is echoed into the manifest's scenario so a
            // rerun from the manifest needs no extra flags.
            let effective_seed = seed.unwrap_or(validated.scenario().sim.seed);
            let mut resolved = validated.scenario().clone();
            resolved.sim.seed = effective_seed;
            let validated = scenario::validate(&resolved)
                .expect("a validated scenario stays valid under a seed change");

            let run_out = netsim::run(&validated, effective_seed);
            output::write_all(&out, validated.scenario(), effective_seed, format, &run_out)?;
            if summary {
                println!("{}", serde_json::to_string_pretty(&run_out.summary)?);
            }
            if let Some(fatal) = &run_out.summary.fatal {
                eprintln!("internal assertion: {fatal}");
                return Ok(ExitCode::from(EXIT_INTERNAL));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { scenario } => {
            let raw = load_scenario_file(&scenario)?;
            match validate_or_report(&raw) {
                Some(v) => {
                    println!(
                        "ok: {} aggregators, {} links, {} events, ends at tick {}",
                        v.scenario().aggregators.len(),
                        v.scenario().topology.links.len(),
                        v.scenario().events.len(),
                        v.end_tick()
                    );
                    Ok(ExitCode::SUCCESS)
                }
                None => Ok(ExitCode::from(EXIT_VALIDATION)),
            }
        }
        Command::ExportBuiltin { name, out } => {
            let s = builtin_scenario(&name)?;
            let mut json = serde_json::to_string_pretty(&s)?;
            json.push('\n');
            match out {
                Some(path) => {
                    fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?
                }
                None => print!("{json}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn builtin_scenario(name: &str) -> anyhow::Result<Scenario> {
    match name {
        "paper-poc" => Ok(scenario::build_paper_poc()),
        other => anyhow::bail!("unknown builtin scenario `{other}` (available: paper-poc)"),
    }
}

fn load_scenario_file(path: &PathBuf) -> anyhow::Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {} (position is line:column)", path.display()))
}

// Prints every violation to stderr; a valid scenario comes back resolved.
fn validate_or_report(raw: &Scenario) -> Option<ValidatedScenario> {
    match scenario::validate(raw) {
        Ok(v) => Some(v),
        Err(issues) => {
            eprintln!("scenario invalid ({} problem(s)):", issues.len());
            for i in issues {
                eprintln!("  {i}");
            }
            None
        }
    }
}
