//! Browser bindings for the cogfriction simulator.
//!
//! Every export takes and returns JSON strings so the page needs no glue
//! beyond `JSON.parse`.

use cogfriction::agent::AgentProfile;
use cogfriction::embed::{cosine_sim, embed_descriptor, Descriptor, EmbedConfig};
use cogfriction::episodic::{expected_embedding, generate_expectation, RuleTable};
use cogfriction::friction::Thresholds;
use cogfriction::runner::{simulate, SimParams};
use cogfriction::scene::{check_scene, Coord};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const SCENES: [(&str, &str); 4] = [
    (
        "glass",
        include_str!("../../core/fixtures/scenes/glass.json"),
    ),
    (
        "doorway",
        include_str!("../../core/fixtures/scenes/doorway.json"),
    ),
    (
        "lobby",
        include_str!("../../core/fixtures/scenes/lobby.json"),
    ),
    (
        "office",
        include_str!("../../core/fixtures/scenes/office.json"),
    ),
];
const PROFILE: &str = include_str!("../../core/fixtures/profiles/default.json");
const RULES: &str = include_str!("../../core/fixtures/rules/default.json");
const MAX_STEPS: u64 = 1_000;

pub fn scene_names() -> Vec<&'static str> {
    SCENES.iter().map(|(n, _)| *n).collect()
}

pub fn scene_source(name: &str) -> Option<&'static str> {
    SCENES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

fn xy(c: Coord) -> Value {
    json!([c.x, c.y])
}

/// Runs the default profile (with `tau` overridden) over a scene document.
pub fn run_scene(scene_json: &str, tau: f64, seed: u64) -> Result<Value, String> {
    let scene = match check_scene(scene_json.as_bytes()).map_err(|e| e.to_string())? {
        Ok(s) => s,
        Err(violations) => {
            let lines: Vec<String> = violations
                .iter()
                .map(|v| format!("{}: {}", v.path, v.message))
                .collect();
            return Err(lines.join("\n"));
        }
    };
    let profile = AgentProfile {
        tau,
        ..AgentProfile::from_json(PROFILE.as_bytes()).map_err(|e| e.to_string())?
    };
    profile.validate().map_err(|e| e.to_string())?;
    let table = RuleTable::from_json(RULES.as_bytes()).map_err(|e| e.to_string())?;
    let params = SimParams {
        embed: EmbedConfig::default(),
        seed,
        thresholds: Thresholds::default(),
        max_steps: MAX_STEPS,
    };
    let sim = simulate(&scene, &[profile], &table, &params);

    let cells: Vec<Value> = scene
        .cells
        .iter()
        .zip(sim.field.cells())
        .zip(&sim.classifications)
        .map(|((cell, stats), class)| {
            json!({
                "occ": cell.occupancy.as_str(),
                "boundary": cell.event_boundary,
                "count": stats.count,
                "mean_c_f": stats.mean_c_f,
                "class": class.map(|c| c.as_str()),
            })
        })
        .collect();
    let agents: Vec<Value> = sim
        .agents
        .iter()
        .map(|a| {
            let path: Vec<Value> = std::iter::once(xy(a.spawn))
                .chain(a.steps.iter().map(|s| xy(s.position)))
                .collect();
            let fired: Vec<Value> = a.activations().map(|s| xy(s.position)).collect();
            json!({"id": a.id, "status": a.status.label(), "path": path, "activations": fired})
        })
        .collect();
    let phantoms: Vec<Value> = sim
        .phantoms
        .iter()
        .map(|p| json!({"position": xy(p.position), "description": p.description()}))
        .collect();
    let narratives: Vec<&str> = sim.events.iter().map(|e| e.narrative.as_str()).collect();
    Ok(json!({
        "width": scene.width,
        "height": scene.height,
        "cells": cells,
        "agents": agents,
        "phantoms": phantoms,
        "narratives": narratives,
    }))
}

/// Friction at a glass partition when the glass rule predicts "passable"
/// with probability `p_passable`: the analytic limit and an `n`-sample draw.
pub fn glass_probe(p_passable: f64, n: usize, seed: u64) -> Result<Value, String> {
    if !(0.0..=1.0).contains(&p_passable) {
        return Err(format!("probability {p_passable} outside [0, 1]"));
    }
    let passable = json!({"entries": [["affordance", "passable", 1.0]], "p": p_passable});
    let blocked = json!({"entries": [["affordance", "blocked", 1.0], ["material", "transparent", 1.0]], "p": 1.0 - p_passable});
    let outcomes: Vec<Value> = [passable, blocked]
        .into_iter()
        .filter(|o| o["p"].as_f64() > Some(0.0))
        .collect();
    let doc = json!({"rules": [{"pattern": [["material", "glass", 0.5]], "priority": 1, "outcomes": outcomes}]});
    let table = RuleTable::from_json(doc.to_string().as_bytes()).map_err(|e| e.to_string())?;

    let cfg = EmbedConfig::default();
    let query =
        Descriptor::from_entries([("material", "glass", 0.9)]).map_err(|e| e.to_string())?;
    let truth = Descriptor::from_entries([
        ("affordance", "blocked", 1.0),
        ("material", "transparent", 1.0),
    ])
    .map_err(|e| e.to_string())?;
    let r_phys = embed_descriptor(&truth, &cfg).map_err(|e| e.to_string())?;
    let analytic = expected_embedding(&table, &query, &cfg).map_err(|e| e.to_string())?;

    let mut profile = AgentProfile::from_json(PROFILE.as_bytes()).map_err(|e| e.to_string())?;
    profile.n_samples = n.max(1);
    let sampled =
        generate_expectation(&table, &query, &profile, &cfg, seed).map_err(|e| e.to_string())?;
    let share = sampled
        .aggregate
        .iter()
        .find(|(t, _)| t.to_string() == "affordance:passable")
        .map_or(0.0, |(_, w)| w);
    let friction = |e| 1.0 - cosine_sim(e, &r_phys).unwrap_or(0.0);
    Ok(json!({
        "analytic_c_f": friction(&analytic),
        "sampled_c_f": friction(&sampled.e_gen),
        "sampled_passable_share": share,
        "n": profile.n_samples,
    }))
}

fn to_js(v: Result<Value, String>) -> Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = sceneNames)]
pub fn scene_names_js() -> String {
    json!(scene_names()).to_string()
}

#[wasm_bindgen(js_name = sceneSource)]
pub fn scene_source_js(name: &str) -> Result<String, JsError> {
    scene_source(name)
        .map(str::to_string)
        .ok_or_else(|| JsError::new(&format!("unknown scene {name}")))
}

#[wasm_bindgen(js_name = runScene)]
pub fn run_scene_js(scene_json: &str, tau: f64, seed: u32) -> Result<String, JsError> {
    to_js(run_scene(scene_json, tau, seed.into()))
}

#[wasm_bindgen(js_name = glassProbe)]
pub fn glass_probe_js(p_passable: f64, n: u32, seed: u32) -> Result<String, JsError> {
    to_js(glass_probe(p_passable, n as usize, seed.into()))
}
