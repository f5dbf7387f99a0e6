#![allow(dead_code)]

use std::path::PathBuf;

use cogfriction::agent::AgentProfile;
use cogfriction::episodic::RuleTable;
use cogfriction::runner::RunConfig;
use cogfriction::scene::{load_scene, Scene};

pub const SCENES: [&str; 4] = ["glass", "doorway", "lobby", "office"];
pub const CONFIGS: [&str; 5] = ["glass", "doorway", "lobby", "office", "office_skeptical"];
pub const RULE_TABLES: [&str; 2] = ["default", "skeptical"];

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(rel)
}

pub fn scene(name: &str) -> Scene {
    load_scene(&std::fs::read(fixture(&format!("scenes/{name}.json"))).unwrap()).unwrap()
}

pub fn profile(name: &str) -> AgentProfile {
    AgentProfile::from_json(&std::fs::read(fixture(&format!("profiles/{name}.json"))).unwrap())
        .unwrap()
}

pub fn rules(name: &str) -> RuleTable {
    RuleTable::from_json(&std::fs::read(fixture(&format!("rules/{name}.json"))).unwrap()).unwrap()
}

pub fn config(name: &str) -> RunConfig {
    RunConfig::load(&fixture(&format!("configs/{name}.json"))).unwrap()
}
