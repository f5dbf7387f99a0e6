//! System 1: the heuristic autopilot.
//!
//! Agents follow a shortest path over physically open cells and predict
//! that the next percept will look like the last one. The prediction
//! error between the two is the surprisal that gates System 2.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{cosine_sim, embed_descriptor, Descriptor, EmbedConfig};
use crate::scene::{percept_at, Cell, Channel, Coord, Percept, Scene, SceneError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("no path from {from} to {to}")]
    NoPath { from: Coord, to: Coord },
    #[error("invalid endpoint {0}: must be an in-bounds Open cell")]
    InvalidEndpoint(Coord),
    #[error("no previous percept to predict from")]
    NoHistory,
    #[error("path exhausted: agent is already at its goal")]
    PathExhausted,
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Per-channel perception weights. All five channels are required in files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelWeights {
    pub material: f64,
    pub signage: f64,
    pub lighting: f64,
    pub geometry: f64,
    pub affect: f64,
}

impl ChannelWeights {
    pub fn uniform(w: f64) -> Self {
        Self {
            material: w,
            signage: w,
            lighting: w,
            geometry: w,
            affect: w,
        }
    }

    pub fn get(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Material => self.material,
            Channel::Signage => self.signage,
            Channel::Lighting => self.lighting,
            Channel::Geometry => self.geometry,
            Channel::Affect => self.affect,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentProfile {
    pub id: String,
    pub channel_weights: ChannelWeights,
    pub tau: f64,
    pub n_samples: usize,
    pub percept_radius: usize,
}

impl AgentProfile {
    pub fn new(
        id: impl Into<String>,
        channel_weights: ChannelWeights,
        tau: f64,
        n_samples: usize,
        percept_radius: usize,
    ) -> Self {
        Self {
            id: id.into(),
            channel_weights,
            tau,
            n_samples,
            percept_radius,
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, AgentError> {
        let p: AgentProfile =
            serde_json::from_slice(bytes).map_err(|e| AgentError::InvalidProfile(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: String| Err(AgentError::InvalidProfile(m));
        if self.id.is_empty() {
            return bad("id must be non-empty".into());
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau {} out of [0,1]", self.tau));
        }
        if self.n_samples == 0 {
            return bad("n_samples must be at least 1".into());
        }
        for ch in Channel::ALL {
            let w = self.channel_weights.get(ch);
            if !(0.0..=1.0).contains(&w) {
                return bad(format!("channel weight {}={w} out of [0,1]", ch.as_str()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Autopilot,
    Episodic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub position: Coord,
    pub goal: Coord,
    pub path: VecDeque<Coord>,
    pub step: u64,
    pub prev_percept: Option<Percept>,
    pub mode: Mode,
}

impl AgentState {
    /// Places an agent at `start` with a planned path to `goal`.
    pub fn new(scene: &Scene, start: Coord, goal: Coord) -> Result<Self, AgentError> {
        let path = plan_path(scene, start, goal)?;
        Ok(Self {
            position: start,
            goal,
            path: path.into(),
            step: 0,
            prev_percept: None,
            mode: Mode::Autopilot,
        })
    }

    pub fn at_goal(&self) -> bool {
        self.path.is_empty()
    }
}

/// North, east, south, west. Fixed so that equal-length paths tie-break
/// identically on every platform.
const NEIGHBOR_ORDER: [(isize, isize); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];

pub fn open_neighbors(scene: &Scene, pos: Coord) -> impl Iterator<Item = Coord> + '_ {
    NEIGHBOR_ORDER.iter().filter_map(move |&(dx, dy)| {
        let x = pos.x.checked_add_signed(dx)?;
        let y = pos.y.checked_add_signed(dy)?;
        let c = Coord::new(x, y);
        (scene.in_bounds(c) && scene.cells[scene.index(c)].is_open()).then_some(c)
    })
}

/// Shortest 4-connected path over Open cells, excluding `start` and
/// including `goal`. Breadth-first; ties resolved by [`NEIGHBOR_ORDER`].
pub fn plan_path(scene: &Scene, start: Coord, goal: Coord) -> Result<Vec<Coord>, AgentError> {
    for c in [start, goal] {
        if !scene.in_bounds(c) || !scene.cells[scene.index(c)].is_open() {
            return Err(AgentError::InvalidEndpoint(c));
        }
    }
    if start == goal {
        return Ok(Vec::new());
    }
    let mut parent: Vec<Option<Coord>> = vec![None; scene.cells.len()];
    let mut seen = vec![false; scene.cells.len()];
    let mut queue = VecDeque::from([start]);
    seen[scene.index(start)] = true;
    while let Some(cur) = queue.pop_front() {
        if cur == goal {
            let mut path = vec![goal];
            let mut at = goal;
            while let Some(p) = parent[scene.index(at)] {
                if p == start {
                    break;
                }
                path.push(p);
                at = p;
            }
            path.reverse();
            return Ok(path);
        }
        for n in open_neighbors(scene, cur) {
            let i = scene.index(n);
            if !seen[i] {
                seen[i] = true;
                parent[i] = Some(cur);
                queue.push_back(n);
            }
        }
    }
    Err(AgentError::NoPath {
        from: start,
        to: goal,
    })
}

/// Persistence prediction: the next percept will equal the previous one.
///
/// `Ok(None)` means the previous percept was empty, which counts as no
/// prediction for [`surprisal`].
pub fn predict_next_percept(state: &AgentState) -> Result<Option<Descriptor>, AgentError> {
    let prev = state.prev_percept.as_ref().ok_or(AgentError::NoHistory)?;
    Ok((!prev.descriptor.is_empty()).then(|| prev.descriptor.clone()))
}

/// Prediction error `1 - sim`, with totalizing rules for empty inputs:
/// exactly one side empty gives 1, both empty gives 0.
pub fn surprisal(predicted: Option<&Descriptor>, actual: &Descriptor, cfg: &EmbedConfig) -> f64 {
    let predicted = predicted.filter(|d| !d.is_empty());
    match (predicted, actual.is_empty()) {
        (None, true) => 0.0,
        (None, false) | (Some(_), true) => 1.0,
        (Some(p), false) => {
            let (Ok(a), Ok(b)) = (embed_descriptor(p, cfg), embed_descriptor(actual, cfg)) else {
                return 1.0;
            };
            1.0 - cosine_sim(&a, &b).unwrap_or(0.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Trigger {
    Surprisal,
    Boundary,
}

impl Trigger {
    pub fn as_str(self) -> &'static str {
        match self {
            Trigger::Surprisal => "Surprisal",
            Trigger::Boundary => "Boundary",
        }
    }
}

/// `Surprisal` when `s > tau`, else `Boundary` on event-boundary cells.
pub fn should_invoke_system2(s: f64, profile: &AgentProfile, cell: &Cell) -> Option<Trigger> {
    if s > profile.tau {
        Some(Trigger::Surprisal)
    } else if cell.event_boundary {
        Some(Trigger::Boundary)
    } else {
        None
    }
}

/// Advances one cell along the path and measures surprisal at the new position.
pub fn step_autopilot(
    scene: &Scene,
    state: &AgentState,
    profile: &AgentProfile,
    cfg: &EmbedConfig,
) -> Result<(AgentState, Percept, f64), AgentError> {
    let mut next = state.clone();
    let pos = next.path.pop_front().ok_or(AgentError::PathExhausted)?;
    let prediction = match predict_next_percept(state) {
        Ok(p) => p,
        Err(AgentError::NoHistory) => None,
        Err(e) => return Err(e),
    };
    next.position = pos;
    next.step += 1;
    next.mode = Mode::Autopilot;
    let percept = Percept {
        descriptor: percept_at(scene, pos, profile.percept_radius, profile)?,
        position: pos,
        step: next.step,
    };
    let s = surprisal(prediction.as_ref(), &percept.descriptor, cfg);
    next.prev_percept = Some(percept.clone());
    Ok((next, percept, s))
}
