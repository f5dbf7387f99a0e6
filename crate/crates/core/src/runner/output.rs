//! On-disk artifacts, the run manifest, and replay verification.

use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use super::{read, simulate_run, RunConfig, RunError, RunResult, Simulation};
use crate::canonical::sha256_hex;
use crate::friction::{export_heatmap_json, export_phantoms_json, render_heatmap_image};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const OUTPUT_FILES: [&str; 4] = [
    "events.jsonl",
    "heatmap.json",
    "heatmap.pgm",
    "phantoms.json",
];

/// Serializes a simulation into its output files, in `OUTPUT_FILES` order.
pub fn render_outputs(sim: &Simulation) -> Vec<(&'static str, Vec<u8>)> {
    let mut events = String::new();
    for e in &sim.events {
        events.push_str(&e.to_line());
        events.push('\n');
    }
    vec![
        (OUTPUT_FILES[0], events.into_bytes()),
        (
            OUTPUT_FILES[1],
            export_heatmap_json(&sim.field, &sim.thresholds, &sim.classifications),
        ),
        (OUTPUT_FILES[2], render_heatmap_image(&sim.field)),
        (OUTPUT_FILES[3], export_phantoms_json(&sim.phantoms)),
    ]
}

fn agent_summaries(sim: &Simulation) -> Vec<Value> {
    sim.agents
        .iter()
        .map(|a| {
            let mine = sim.events.iter().filter(|e| e.agent == a.id);
            let (appraised, skipped) = mine.fold((0, 0), |(ap, sk), e| match e.appraisal() {
                Some(_) => (ap + 1, sk),
                None => (ap, sk + 1),
            });
            json!({
                "id": a.id,
                "profile": a.profile_id,
                "spawn": a.spawn.to_json(),
                "goal": a.goal.to_json(),
                "status": a.status.label(),
                "steps": a.steps.len(),
                "activations": a.activations().count(),
                "appraisals": appraised,
                "skipped": skipped,
            })
        })
        .collect()
}

/// Writes every output file into `dir`, then the manifest. Returns the manifest.
pub fn write_outputs(result: &RunResult, dir: &Path) -> Result<Value, RunError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut digests = Map::new();
    for (name, bytes) in render_outputs(&result.sim) {
        let path = dir.join(name);
        std::fs::write(&path, &bytes).map_err(io(&path))?;
        digests.insert(name.to_string(), Value::String(sha256_hex(&bytes)));
    }
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": result.config.to_json(),
        "inputs": result.inputs,
        "scene_hash": result.scene_hash,
        "provider": result.provider_identity,
        "started_at": result.started_at,
        "finished_at": result.finished_at,
        "agents": agent_summaries(&result.sim),
        "outputs": digests,
    });
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("json values serialize");
    text.push('\n');
    std::fs::write(&path, text).map_err(io(&path))?;
    Ok(manifest)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayReport {
    pub checked: Vec<String>,
    pub mismatches: Vec<String>,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn check_digest(report: &mut ReplayReport, label: &str, path: &Path, expected: Option<&str>) {
    report.checked.push(label.to_string());
    match (std::fs::read(path), expected) {
        (_, None) => report
            .mismatches
            .push(format!("{label}: no digest recorded")),
        (Err(e), _) => report
            .mismatches
            .push(format!("{label}: cannot read {}: {e}", path.display())),
        (Ok(bytes), Some(want)) => {
            let got = sha256_hex(&bytes);
            if got != want {
                report.mismatches.push(format!(
                    "{label}: sha256 {got} does not match recorded {want}"
                ));
            }
        }
    }
}

/// Verifies recorded inputs and outputs, then re-runs the simulation and
/// compares the regenerated bytes. Output files are looked up next to the
/// manifest.
pub fn replay_manifest(manifest_path: &Path) -> Result<ReplayReport, RunError> {
    let bytes = read(manifest_path)?;
    let manifest: Value = serde_json::from_slice(&bytes)
        .map_err(|e| RunError::Config(format!("{}: {e}", manifest_path.display())))?;
    let config: RunConfig = serde_json::from_value(manifest["config"].clone())
        .map_err(|e| RunError::Config(format!("manifest config: {e}")))?;
    let outputs = manifest["outputs"]
        .as_object()
        .ok_or_else(|| RunError::Config("manifest has no outputs".into()))?;
    let dir = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let mut report = ReplayReport::default();

    for name in OUTPUT_FILES {
        check_digest(
            &mut report,
            name,
            &dir.join(name),
            outputs.get(name).and_then(Value::as_str),
        );
    }

    let inputs = &manifest["inputs"];
    let mut recorded: Vec<(String, &Value)> = vec![("scene".into(), &inputs["scene"])];
    if let Some(list) = inputs["profiles"].as_array() {
        recorded.extend(
            list.iter()
                .enumerate()
                .map(|(i, v)| (format!("profiles[{i}]"), v)),
        );
    }
    if !inputs["rule_table"].is_null() {
        recorded.push(("rule_table".into(), &inputs["rule_table"]));
    }
    let inputs_before = report.mismatches.len();
    for (label, v) in recorded {
        let path = PathBuf::from(v["path"].as_str().unwrap_or_default());
        check_digest(
            &mut report,
            &format!("input {label}"),
            &path,
            v["sha256"].as_str(),
        );
    }
    if report.mismatches.len() > inputs_before {
        return Ok(report);
    }

    let rerun = simulate_run(&config)?;
    if rerun.scene_hash != manifest["scene_hash"].as_str().unwrap_or_default() {
        report
            .mismatches
            .push("scene_hash differs on replay".into());
    }
    for (name, bytes) in render_outputs(&rerun.sim) {
        report.checked.push(format!("replay {name}"));
        let want = outputs
            .get(name)
            .and_then(Value::as_str)
            .unwrap_or_default();
        let got = sha256_hex(&bytes);
        if got != want {
            report.mismatches.push(format!(
                "replay {name}: regenerated sha256 {got} differs from recorded {want}"
            ));
        }
    }
    Ok(report)
}
