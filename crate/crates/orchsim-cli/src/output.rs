//! Stable file emission: metrics CSV/JSONL, event-log JSONL, run manifest.
//! All writers are deterministic byte-for-byte for a given run output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use orchsim_core::netsim::RunOutput;
use orchsim_core::scenario::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Jsonl,
}

impl OutputFormat {
    fn as_str(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Jsonl => "jsonl",
        }
    }
}

/// Resolved inputs echoed next to the outputs; feeding the embedded scenario
/// back through `run` reproduces the run byte-for-byte.
#[derive(Serialize)]
pub struct Manifest<'a> {
    pub tool: ToolInfo,
    pub format: &'static str,
    pub seed: u64,
    pub scenario: &'a Scenario,
}

#[derive(Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

pub fn write_all(
    dir: &Path,
    scenario: &Scenario,
    seed: u64,
    format: OutputFormat,
    out: &RunOutput,
) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    match format {
        OutputFormat::Csv => {
            fs::write(dir.join("metrics.csv"), metrics_csv(out))?;
            fs::write(dir.join("links.csv"), links_csv(out))?;
        }
        OutputFormat::Jsonl => {
            fs::write(dir.join("metrics.jsonl"), rows_jsonl(&out.metrics.rows)?)?;
            fs::write(dir.join("links.jsonl"), rows_jsonl(&out.metrics.links)?)?;
        }
    }
    fs::write(dir.join("events.jsonl"), events_jsonl(out)?)?;

    let manifest = Manifest {
        tool: ToolInfo {
            name: "orchsim",
            version: env!("CARGO_PKG_VERSION"),
        },
        format: format.as_str(),
        seed,
        scenario,
    };
    let mut manifest_json = serde_json::to_string_pretty(&manifest)?;
    manifest_json.push('\n');
    fs::write(dir.join("manifest.json"), manifest_json)?;
    Ok(())
}

pub fn metrics_csv(out: &RunOutput) -> String {
    let mut s = String::from("tick,agg_id,class,occupancy,rate,delivered,dropped\n");
    for r in &out.metrics.rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.tick, r.agg_id, r.class, r.occupancy, r.rate, r.delivered, r.dropped
        )
        .expect("writing to string");
    }
    s
}

pub fn links_csv(out: &RunOutput) -> String {
    let mut s = String::from("tick,link_id,utilization\n");
    for r in &out.metrics.links {
        writeln!(s, "{},{},{:.6}", r.tick, r.link_id, r.utilization).expect("writing to string");
    }
    s
}

fn rows_jsonl<T: Serialize>(rows: &[T]) -> anyhow::Result<String> {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn events_jsonl(out: &RunOutput) -> anyhow::Result<String> {
    let mut s = String::new();
    for r in out.log.iter() {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}
