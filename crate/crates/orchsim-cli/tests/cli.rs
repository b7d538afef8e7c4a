//! Command-line interface behavior: exit codes, file outputs, the shipped
//! builtin scenario, and manifest-based reproduction.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn orchsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orchsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

fn mini_scenario_json() -> String {
    // Hand-written scenario exercising defaults: bam bc and sources omitted.
    r#"{
        "name": "mini",
        "topology": {
            "nodes": [
                {"id": "ag1", "kind": "aggregator"},
                {"id": "c1", "kind": "consumer"}
            ],
            "links": [{"id": "l1", "a": "ag1", "b": "c1", "capacity": 1000000}],
            "routes": [{"src": "ag1", "dst": "c1", "links": ["l1"]}]
        },
        "aggregators": [{
            "id": "ag1",
            "topics": [{"name": "t1", "gen_rate": 20000, "msg_size": 500}],
            "buffer": {"capacity_per_class": 1000000, "overflow": "drop_oldest"}
        }],
        "consumers": [{"id": "c1"}],
        "orchestrator": {"channel_sink": "c1", "total_budget": 300000},
        "bam": [{"link_id": "l1", "model": "atcs"}],
        "events": [
            {"at": 0, "kind": "start_hosts"},
            {"at": 2, "kind": {"subscribe": {"consumer": "c1", "aggregator": "ag1", "topic": "t1", "qos": 1}}},
            {"at": 50, "kind": "end"}
        ]
    }"#
    .to_string()
}

#[test]
fn run_writes_all_output_files() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = tmp.path().join("mini.json");
    fs::write(&scenario, mini_scenario_json()).unwrap();
    let out_dir = tmp.path().join("out");
    let out = orchsim(&[
        "run",
        scenario.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--summary",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["metrics.csv", "links.csv", "events.jsonl", "manifest.json"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    let metrics = String::from_utf8(read(&out_dir, "metrics.csv")).unwrap();
    assert!(metrics.starts_with("tick,agg_id,class,occupancy,rate,delivered,dropped\n"));
    assert_eq!(metrics.lines().count(), 1 + 50 * 3);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["ticks"], 50);
}

#[test]
fn jsonl_format_swaps_metrics_files() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = tmp.path().join("mini.json");
    fs::write(&scenario, mini_scenario_json()).unwrap();
    let out_dir = tmp.path().join("out");
    let out = orchsim(&[
        "run",
        scenario.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--format",
        "jsonl",
    ]);
    assert!(out.status.success());
    assert!(out_dir.join("metrics.jsonl").exists());
    assert!(out_dir.join("links.jsonl").exists());
    assert!(!out_dir.join("metrics.csv").exists());
    let first = String::from_utf8(read(&out_dir, "metrics.jsonl")).unwrap();
    let row: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert_eq!(row["tick"], 0);
    assert_eq!(row["agg_id"], "ag1");
}

#[test]
fn identical_runs_produce_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = tmp.path().join("mini.json");
    fs::write(&scenario, mini_scenario_json()).unwrap();
    let d1 = tmp.path().join("r1");
    let d2 = tmp.path().join("r2");
    for d in [&d1, &d2] {
        let out = orchsim(&[
            "run",
            scenario.to_str().unwrap(),
            "--seed",
            "9",
            "--out",
            d.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    for f in ["metrics.csv", "links.csv", "events.jsonl", "manifest.json"] {
        assert_eq!(read(&d1, f), read(&d2, f), "{f} differs");
    }
}

#[test]
fn invalid_scenario_exits_one_without_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = tmp.path().join("bad.json");
    // Orchestrator split out of range and a dangling bam link.
    let bad = mini_scenario_json()
        .replace(
            "\"total_budget\": 300000",
            "\"total_budget\": 300000, \"class_split\": [0.6, 0.4, 0.2]",
        )
        .replace("\"link_id\": \"l1\"", "\"link_id\": \"nope\"");
    fs::write(&scenario, bad).unwrap();
    let out_dir = tmp.path().join("out");
    let out = orchsim(&[
        "run",
        scenario.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out_dir.exists(), "no outputs may be written");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("class_split"));
    assert!(stderr.contains("nope"));
}

#[test]
fn malformed_json_reports_position_and_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = tmp.path().join("broken.json");
    fs::write(&scenario, "{ \"name\": ").unwrap();
    let out = orchsim(&[
        "run",
        scenario.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
}

#[test]
fn validate_subcommand_reports_all_violations() {
    let tmp = tempfile::tempdir().unwrap();
    let good = tmp.path().join("good.json");
    fs::write(&good, mini_scenario_json()).unwrap();
    let out = orchsim(&["validate", good.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok:"));

    let bad_path = tmp.path().join("bad.json");
    let bad = mini_scenario_json()
        .replace("\"capacity\": 1000000", "\"capacity\": 0")
        .replace(
            "\"gen_rate\": 20000, \"msg_size\": 500",
            "\"gen_rate\": 20000, \"msg_size\": 0",
        );
    fs::write(&bad_path, bad).unwrap();
    let out = orchsim(&["validate", bad_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("capacity"), "{stderr}");
    assert!(stderr.contains("msg_size"), "{stderr}");
}

#[test]
fn shipped_builtin_file_matches_export() {
    let shipped: PathBuf =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/paper-poc.json");
    let out = orchsim(&["export-builtin", "paper-poc"]);
    assert!(out.status.success());
    let shipped_bytes = fs::read(&shipped).expect("scenarios/paper-poc.json is checked in");
    assert_eq!(
        out.stdout, shipped_bytes,
        "shipped paper-poc.json must equal the builtin serialization"
    );
}

#[test]
fn paper_poc_summary_shows_saturated_ag1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = orchsim(&[
        "run",
        "--builtin",
        "paper-poc",
        "--seed",
        "1",
        "--out",
        tmp.path().join("out").to_str().unwrap(),
        "--summary",
    ]);
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let ag1 = &summary["per_aggregator"]["ag1"];
    assert_eq!(ag1["max_occupancy"][2], 1_000_000);
    assert!(ag1["dropped_bytes"][2].as_u64().unwrap() > 0);
    assert!(
        summary["per_aggregator"]["ag2"]["dropped_bytes"][2]
            .as_u64()
            .unwrap()
            == 0
    );
    assert_eq!(summary["conservation_checked_ticks"], 1800);
}

#[test]
fn unknown_builtin_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = orchsim(&[
        "run",
        "--builtin",
        "nope",
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn manifest_alone_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = tmp.path().join("mini.json");
    fs::write(&scenario, mini_scenario_json()).unwrap();
    let d1 = tmp.path().join("r1");
    let out = orchsim(&[
        "run",
        scenario.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        d1.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    // Re-run from the scenario embedded in the manifest, with no extra flags.
    let manifest: serde_json::Value = serde_json::from_slice(&read(&d1, "manifest.json")).unwrap();
    let extracted = tmp.path().join("from-manifest.json");
    fs::write(
        &extracted,
        serde_json::to_string_pretty(&manifest["scenario"]).unwrap(),
    )
    .unwrap();
    let d2 = tmp.path().join("r2");
    let out = orchsim(&[
        "run",
        extracted.to_str().unwrap(),
        "--out",
        d2.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    for f in ["metrics.csv", "links.csv", "events.jsonl"] {
        assert_eq!(read(&d1, f), read(&d2, f), "{f} differs");
    }
}
