//! Full simulation runs: the autopilot/appraisal loop over every agent,
//! followed by heatmap accumulation and phantom detection.

mod output;

pub use output::{
    render_outputs, replay_manifest, write_outputs, ReplayReport, MANIFEST_FILE, OUTPUT_FILES,
};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::agent::{
    should_invoke_system2, step_autopilot, AgentError, AgentProfile, AgentState, Mode, Trigger,
};
use crate::canonical;
use crate::embed::{embed_descriptor, EmbedConfig};
use crate::episodic::{
    compose_narrative, generate_expectation, skipped_narrative, substream_seed, Appraisal,
    EpisodeEvent, EventOutcome, ExpectationProvider, NarrativeFields, RuleTable,
};
use crate::friction::{
    classify_field, classify_friction, cognitive_friction, detect_phantoms, FrictionClass,
    FrictionField, FrictionSample, PhantomAffordance, Thresholds,
};
use crate::scene::{cell_descriptor, ground_truth_descriptor, load_scene, Coord, Scene};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderConfig {
    RuleTable(PathBuf),
    Remote(String),
}

fn default_max_steps() -> u64 {
    10_000
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scene: PathBuf,
    pub profiles: Vec<PathBuf>,
    pub provider: ProviderConfig,
    #[serde(default)]
    pub embed: EmbedConfig,
    pub seed: u64,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl RunConfig {
    /// Reads a config file. Relative input paths resolve against its
    /// directory; `out` stays relative to the working directory.
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let bytes = read(path)?;
        let mut cfg: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let parent = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let base = std::fs::canonicalize(parent).unwrap_or_else(|_| parent.to_path_buf());
        cfg.resolve_paths(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                let joined = base.join(&*p);
                *p = std::fs::canonicalize(&joined).unwrap_or(joined);
            }
        };
        fix(&mut self.scene);
        self.profiles.iter_mut().for_each(fix);
        if let ProviderConfig::RuleTable(p) = &mut self.provider {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.max_steps == 0 {
            return Err(RunError::Config("max_steps must be at least 1".into()));
        }
        if self.profiles.is_empty() {
            return Err(RunError::Config("at least one profile is required".into()));
        }
        self.embed
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))?;
        self.thresholds.validate().map_err(RunError::Config)?;
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        let provider = match &self.provider {
            ProviderConfig::RuleTable(p) => json!({"rule_table": p.display().to_string()}),
            ProviderConfig::Remote(u) => json!({"remote": u}),
        };
        json!({
            "scene": self.scene.display().to_string(),
            "profiles": self.profiles.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "provider": provider,
            "embed": {"dimension": self.embed.dimension, "hash_seed": self.embed.hash_seed},
            "seed": self.seed,
            "thresholds": self.thresholds.to_json(),
            "max_steps": self.max_steps,
            "out": self.out.display().to_string(),
        })
    }
}

pub(crate) fn read(path: &Path) -> Result<Vec<u8>, RunError> {
    std::fs::read(path).map_err(|source| RunError::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// Numeric parameters of a simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub embed: EmbedConfig,
    pub seed: u64,
    pub thresholds: Thresholds,
    pub max_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentStatus {
    ReachedGoal,
    StepLimit,
    NoPath(String),
}

impl AgentStatus {
    pub fn label(&self) -> String {
        match self {
            AgentStatus::ReachedGoal => "reached_goal".into(),
            AgentStatus::StepLimit => "step_limit".into(),
            AgentStatus::NoPath(why) => format!("no_path: {why}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub position: Coord,
    pub surprisal: f64,
    pub trigger: Option<Trigger>,
}

/// Everything one agent did during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrace {
    pub id: String,
    pub profile_id: String,
    pub spawn: Coord,
    pub goal: Coord,
    pub status: AgentStatus,
    pub steps: Vec<StepRecord>,
}

impl AgentTrace {
    pub fn activations(&self) -> impl Iterator<Item = &StepRecord> {
        self.steps.iter().filter(|s| s.trigger.is_some())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub field: FrictionField,
    pub classifications: Vec<Option<FrictionClass>>,
    pub events: Vec<EpisodeEvent>,
    pub phantoms: Vec<PhantomAffordance>,
    pub agents: Vec<AgentTrace>,
    pub thresholds: Thresholds,
}

/// A finished run: the simulation plus the audit context that produced it.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub sim: Simulation,
    pub config: RunConfig,
    pub scene_hash: String,
    pub provider_identity: String,
    pub inputs: Value,
    pub started_at: String,
    pub finished_at: String,
}

/// Agent id: profile id and spawn index.
pub fn agent_id(profile: &AgentProfile, spawn_index: usize) -> String {
    format!("{}/{}", profile.id, spawn_index)
}

struct AgentRun {
    trace: AgentTrace,
    events: Vec<EpisodeEvent>,
    field: FrictionField,
}

/// Runs every (profile, spawn) agent. Spawn `i` walks to goal `i mod goals`.
pub fn simulate(
    scene: &Scene,
    profiles: &[AgentProfile],
    provider: &dyn ExpectationProvider,
    params: &SimParams,
) -> Simulation {
    let jobs: Vec<(&AgentProfile, usize)> = profiles
        .iter()
        .flat_map(|p| (0..scene.spawns.len()).map(move |i| (p, i)))
        .collect();

    let runs: Vec<AgentRun> = if cfg!(target_arch = "wasm32") || jobs.len() < 2 {
        jobs.iter()
            .map(|&(p, i)| run_agent(scene, p, i, provider, params))
            .collect()
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|&(p, i)| s.spawn(move || run_agent(scene, p, i, provider, params)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("agent thread panicked"))
                .collect()
        })
    };

    // Fixed merge order (profile order, then spawn order) keeps the
    // floating-point result independent of thread scheduling.
    let mut field = FrictionField::for_scene(scene);
    let mut events = Vec::new();
    let mut agents = Vec::with_capacity(runs.len());
    for run in runs {
        field = field
            .merge(&run.field)
            .expect("fields share the scene shape");
        events.extend(run.events);
        agents.push(run.trace);
    }
    events.sort_by_key(|e| e.step);
    let th = params.thresholds;
    let phantoms = detect_phantoms(&field, scene, &events, th.theta_p, th.sigma_min);
    Simulation {
        classifications: classify_field(&field, scene, th.theta_h),
        field,
        events,
        phantoms,
        agents,
        thresholds: th,
    }
}

fn run_agent(
    scene: &Scene,
    profile: &AgentProfile,
    spawn_index: usize,
    provider: &dyn ExpectationProvider,
    params: &SimParams,
) -> AgentRun {
    let id = agent_id(profile, spawn_index);
    let spawn = scene.spawns[spawn_index];
    let goal = scene.goals[spawn_index % scene.goals.len()];
    let mut trace = AgentTrace {
        id: id.clone(),
        profile_id: profile.id.clone(),
        spawn,
        goal,
        status: AgentStatus::ReachedGoal,
        steps: Vec::new(),
    };
    let mut events = Vec::new();
    let mut field = FrictionField::for_scene(scene);

    let mut state = match AgentState::new(scene, spawn, goal) {
        Ok(s) => s,
        Err(e) => {
            trace.status = AgentStatus::NoPath(e.to_string());
            return AgentRun {
                trace,
                events,
                field,
            };
        }
    };

    while !state.at_goal() {
        if state.step >= params.max_steps {
            trace.status = AgentStatus::StepLimit;
            break;
        }
        let (mut next, _percept, s) = match step_autopilot(scene, &state, profile, &params.embed) {
            Ok(r) => r,
            Err(AgentError::PathExhausted) => break,
            Err(e) => unreachable!("planned paths stay in bounds: {e}"),
        };
        let cell = scene.cell(next.position).expect("path cells are in bounds");
        let trigger = should_invoke_system2(s, profile, cell);
        if let Some(trigger) = trigger {
            next.mode = Mode::Episodic;
            appraise(
                scene,
                profile,
                provider,
                params,
                &id,
                &next,
                trigger,
                &mut events,
                &mut field,
            );
        }
        trace.steps.push(StepRecord {
            step: next.step,
            position: next.position,
            surprisal: s,
            trigger,
        });
        state = next;
    }
    AgentRun {
        trace,
        events,
        field,
    }
}

/// Cells a System 2 activation appraises: every cell in view that carries
/// a perceived signal, in row-major order.
pub fn salient_cells(scene: &Scene, pos: Coord, profile: &AgentProfile) -> Vec<Coord> {
    scene
        .neighborhood(pos, profile.percept_radius)
        .filter(|&c| cell_descriptor(scene, c, profile).is_ok_and(|d| !d.is_empty()))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn appraise(
    scene: &Scene,
    profile: &AgentProfile,
    provider: &dyn ExpectationProvider,
    params: &SimParams,
    agent: &str,
    state: &AgentState,
    trigger: Trigger,
    events: &mut Vec<EpisodeEvent>,
    field: &mut FrictionField,
) {
    let step = state.step;
    let here = state.position;
    let targets = salient_cells(scene, here, profile);
    if targets.is_empty() {
        let reason = "no salient signal in view";
        events.push(EpisodeEvent {
            agent: agent.to_string(),
            step,
            agent_position: here,
            position: here,
            trigger,
            narrative: skipped_narrative(step, here, trigger, reason),
            outcome: EventOutcome::Skipped {
                reason: reason.into(),
            },
        });
        return;
    }
    for pos in targets {
        let query = cell_descriptor(scene, pos, profile).expect("in bounds");
        let seed = substream_seed(params.seed, agent, step, pos);
        let mut event = EpisodeEvent {
            agent: agent.to_string(),
            step,
            agent_position: here,
            position: pos,
            trigger,
            narrative: String::new(),
            outcome: EventOutcome::Skipped {
                reason: String::new(),
            },
        };
        match generate_expectation(provider, &query, profile, &params.embed, seed) {
            Err(e) => {
                let reason = e.to_string();
                event.narrative = skipped_narrative(step, pos, trigger, &reason);
                event.outcome = EventOutcome::Skipped { reason };
            }
            Ok(exp) => {
                let found = ground_truth_descriptor(scene, pos).expect("in bounds");
                let r_phys =
                    embed_descriptor(&found, &params.embed).expect("ground truth is never empty");
                let c_f = cognitive_friction(&exp.e_gen, &r_phys).expect("shared dimension");
                let intent = scene.cell(pos).expect("in bounds").intended_friction;
                let classification = classify_friction(c_f, intent, params.thresholds.theta_h);
                let signal_strength = query.max_weight();
                event.narrative = compose_narrative(&NarrativeFields {
                    step,
                    position: pos,
                    trigger,
                    expected: &exp.aggregate,
                    found: &found,
                    c_f,
                    classification,
                });
                field
                    .accumulate(&FrictionSample {
                        position: pos,
                        c_f,
                        max_signal_strength: signal_strength,
                        trigger,
                    })
                    .expect("in bounds");
                event.outcome = EventOutcome::Appraised(Appraisal {
                    e_gen: exp.e_gen,
                    r_phys,
                    delta: c_f,
                    c_f,
                    classification,
                    samples_digest: exp.samples_digest,
                    expected: exp.aggregate,
                    found,
                    signal_strength,
                });
            }
        }
        events.push(event);
    }
}

/// Builds the provider named by a config.
pub fn build_provider(
    cfg: &ProviderConfig,
) -> Result<(Box<dyn ExpectationProvider>, Option<String>), RunError> {
    match cfg {
        ProviderConfig::RuleTable(path) => {
            let bytes = read(path)?;
            let table = RuleTable::from_json(&bytes)
                .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
            Ok((Box::new(table), Some(canonical::sha256_hex(&bytes))))
        }
        #[cfg(feature = "remote")]
        ProviderConfig::Remote(url) => Ok((
            Box::new(crate::episodic::RemoteProvider::new(url.clone())),
            None,
        )),
        #[cfg(not(feature = "remote"))]
        ProviderConfig::Remote(_) => Err(RunError::Config(
            "remote providers are not enabled in this build".into(),
        )),
    }
}

/// Loads every input named by `cfg` and runs the simulation.
pub fn simulate_run(cfg: &RunConfig) -> Result<RunResult, RunError> {
    cfg.validate()?;
    let started_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
    let scene_bytes = read(&cfg.scene)?;
    let scene = load_scene(&scene_bytes)
        .map_err(|e| RunError::Config(format!("{}: {e}", cfg.scene.display())))?;
    let mut profiles = Vec::with_capacity(cfg.profiles.len());
    let mut profile_inputs = Vec::new();
    for path in &cfg.profiles {
        let bytes = read(path)?;
        let p = AgentProfile::from_json(&bytes)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        if profiles.iter().any(|q: &AgentProfile| q.id == p.id) {
            return Err(RunError::Config(format!("duplicate profile id {}", p.id)));
        }
        profile_inputs.push(
            json!({"path": path.display().to_string(), "sha256": canonical::sha256_hex(&bytes)}),
        );
        profiles.push(p);
    }
    let (provider, table_digest) = build_provider(&cfg.provider)?;

    let params = SimParams {
        embed: cfg.embed,
        seed: cfg.seed,
        thresholds: cfg.thresholds,
        max_steps: cfg.max_steps,
    };
    let sim = simulate(&scene, &profiles, provider.as_ref(), &params);

    let mut inputs = json!({
        "scene": {"path": cfg.scene.display().to_string(), "sha256": canonical::sha256_hex(&scene_bytes)},
        "profiles": profile_inputs,
    });
    if let (ProviderConfig::RuleTable(path), Some(digest)) = (&cfg.provider, table_digest) {
        inputs["rule_table"] = json!({"path": path.display().to_string(), "sha256": digest});
    }
    Ok(RunResult {
        sim,
        config: cfg.clone(),
        scene_hash: scene.scene_hash.clone(),
        provider_identity: provider.identity(),
        inputs,
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
    })
}
