//! Annotated grid scenes: physical occupancy plus semiotic signal layers.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::agent::AgentProfile;
use crate::canonical::{self, FloatStyle};
use crate::embed::{Descriptor, Term};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error at {path}: {message}")]
    Validation { path: String, message: String },
    #[error("position ({x},{y}) out of bounds")]
    OutOfBounds { x: usize, y: usize },
}

/// Grid coordinate; origin top-left, x rightward, y downward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Coord {
    pub x: usize,
    pub y: usize,
}

impl Coord {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Coord) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    pub fn chebyshev(self, other: Coord) -> usize {
        self.x.abs_diff(other.x).max(self.y.abs_diff(other.y))
    }

    pub fn to_json(self) -> Value {
        json!([self.x, self.y])
    }
}

impl From<[usize; 2]> for Coord {
    fn from([x, y]: [usize; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Coord> for [usize; 2] {
    fn from(c: Coord) -> Self {
        [c.x, c.y]
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Material,
    Signage,
    Lighting,
    Geometry,
    Affect,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::Material,
        Channel::Signage,
        Channel::Lighting,
        Channel::Geometry,
        Channel::Affect,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Material => "material",
            Channel::Signage => "signage",
            Channel::Lighting => "lighting",
            Channel::Geometry => "geometry",
            Channel::Affect => "affect",
        }
    }

    pub fn parse(s: &str) -> Option<Channel> {
        Channel::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemioticSignal {
    pub channel: Channel,
    pub token: String,
    pub strength: f64,
}

impl SemioticSignal {
    pub fn term(&self) -> Term {
        Term::new(self.channel.as_str(), self.token.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occupancy {
    Open,
    Blocked,
    BlockedTransparent,
}

impl Occupancy {
    pub fn as_str(self) -> &'static str {
        match self {
            Occupancy::Open => "open",
            Occupancy::Blocked => "blocked",
            Occupancy::BlockedTransparent => "blocked_transparent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub occupancy: Occupancy,
    pub signals: Vec<SemioticSignal>,
    pub event_boundary: bool,
    pub intended_friction: f64,
}

impl Cell {
    pub fn open() -> Self {
        Self {
            occupancy: Occupancy::Open,
            signals: Vec::new(),
            event_boundary: false,
            intended_friction: 0.0,
        }
    }

    pub fn is_open(&self) -> bool {
        self.occupancy == Occupancy::Open
    }
}

/// Immutable, validated scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Cell>,
    pub spawns: Vec<Coord>,
    pub goals: Vec<Coord>,
    pub scene_hash: String,
}

/// What the agent perceives at one position and tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Percept {
    pub descriptor: Descriptor,
    pub position: Coord,
    pub step: u64,
}

// File-format documents.

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    name: String,
    width: i64,
    height: i64,
    cells: Vec<CellDoc>,
    spawns: Vec<[i64; 2]>,
    goals: Vec<[i64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellDoc {
    occ: Occupancy,
    #[serde(default)]
    signals: Vec<SignalDoc>,
    #[serde(default)]
    boundary: bool,
    #[serde(default)]
    intent: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SignalDoc {
    ch: String,
    tok: String,
    s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Parses and validates a scene document; returns the first violation.
pub fn load_scene(bytes: &[u8]) -> Result<Scene, SceneError> {
    match check_scene(bytes)? {
        Ok(scene) => Ok(scene),
        Err(mut violations) => {
            let v = violations.remove(0);
            Err(SceneError::Validation {
                path: v.path,
                message: v.message,
            })
        }
    }
}

/// Parses a scene document and reports every validation violation.
///
/// The outer error is a parse failure; the inner one lists violations.
pub fn check_scene(bytes: &[u8]) -> Result<Result<Scene, Vec<Violation>>, SceneError> {
    let doc: SceneDoc =
        serde_json::from_slice(bytes).map_err(|e| SceneError::Parse(e.to_string()))?;
    Ok(build_scene(doc))
}

fn build_scene(doc: SceneDoc) -> Result<Scene, Vec<Violation>> {
    let mut errs = Vec::new();
    let mut push = |path: String, message: &str| {
        errs.push(Violation {
            path,
            message: message.to_string(),
        })
    };

    if doc.width <= 0 {
        push("width".into(), "width must be positive");
    }
    if doc.height <= 0 {
        push("height".into(), "height must be positive");
    }
    let width = doc.width.max(0) as usize;
    let height = doc.height.max(0) as usize;
    if doc.cells.len() != width * height {
        push(
            "cells".into(),
            &format!(
                "dimension mismatch: expected {} cells, found {}",
                width * height,
                doc.cells.len()
            ),
        );
    }

    let mut cells = Vec::with_capacity(doc.cells.len());
    for (i, c) in doc.cells.into_iter().enumerate() {
        if !(0.0..=1.0).contains(&c.intent) {
            push(format!("cells[{i}].intent"), "intent out of range");
        }
        let mut signals: Vec<SemioticSignal> = Vec::with_capacity(c.signals.len());
        for (j, s) in c.signals.into_iter().enumerate() {
            let path = format!("cells[{i}].signals[{j}]");
            let channel = Channel::parse(&s.ch);
            if channel.is_none() {
                push(format!("{path}.ch"), "unknown channel");
            }
            if s.tok.is_empty() || s.tok.chars().any(|ch| ch.is_whitespace() || ch == ':') {
                push(
                    format!("{path}.tok"),
                    "token must be non-empty without whitespace or ':'",
                );
            }
            if !(0.0..=1.0).contains(&s.s) {
                push(format!("{path}.s"), "strength out of range");
            }
            if let Some(channel) = channel {
                if signals
                    .iter()
                    .any(|o| o.channel == channel && o.token == s.tok)
                {
                    push(path, "duplicate (channel, token) in cell");
                    continue;
                }
                signals.push(SemioticSignal {
                    channel,
                    token: s.tok,
                    strength: s.s,
                });
            }
        }
        cells.push(Cell {
            occupancy: c.occ,
            signals,
            event_boundary: c.boundary,
            intended_friction: c.intent,
        });
    }

    let dims_ok = width > 0 && height > 0 && cells.len() == width * height;
    let coords = |list: Vec<[i64; 2]>, what: &str, errs: &mut Vec<Violation>| -> Vec<Coord> {
        let mut out = Vec::with_capacity(list.len());
        for (k, [x, y]) in list.into_iter().enumerate() {
            let path = format!("{what}s[{k}]");
            if x < 0 || y < 0 || x as usize >= width || y as usize >= height {
                errs.push(Violation {
                    path,
                    message: format!("{what} out of bounds"),
                });
                continue;
            }
            let c = Coord::new(x as usize, y as usize);
            if dims_ok && !cells[c.y * width + c.x].is_open() {
                errs.push(Violation {
                    path,
                    message: format!("{what} not on Open cell"),
                });
            }
            out.push(c);
        }
        out
    };
    let spawns = coords(doc.spawns, "spawn", &mut errs);
    let goals = coords(doc.goals, "goal", &mut errs);
    if !spawns.is_empty() && goals.is_empty() {
        errs.push(Violation {
            path: "goals".into(),
            message: "scene with spawns needs at least one goal".into(),
        });
    }

    if !errs.is_empty() {
        return Err(errs);
    }
    let mut scene = Scene {
        name: doc.name,
        width,
        height,
        cells,
        spawns,
        goals,
        scene_hash: String::new(),
    };
    scene.scene_hash = canonical::sha256_hex(scene.serialize().as_bytes());
    Ok(scene)
}

impl Scene {
    /// Canonical document form; `load_scene(serialize())` reproduces `self`.
    pub fn serialize(&self) -> String {
        let cells: Vec<Value> = self
            .cells
            .iter()
            .map(|c| {
                let signals: Vec<Value> = c
                    .signals
                    .iter()
                    .map(|s| json!({"ch": s.channel.as_str(), "tok": s.token, "s": canonical::float(s.strength)}))
                    .collect();
                json!({
                    "occ": c.occupancy.as_str(),
                    "signals": signals,
                    "boundary": c.event_boundary,
                    "intent": canonical::float(c.intended_friction),
                })
            })
            .collect();
        let doc = json!({
            "name": self.name,
            "width": self.width,
            "height": self.height,
            "cells": cells,
            "spawns": self.spawns.iter().map(|c| c.to_json()).collect::<Vec<_>>(),
            "goals": self.goals.iter().map(|c| c.to_json()).collect::<Vec<_>>(),
        });
        canonical::to_string(&doc, FloatStyle::Shortest)
    }

    pub fn in_bounds(&self, pos: Coord) -> bool {
        pos.x < self.width && pos.y < self.height
    }

    pub fn cell(&self, pos: Coord) -> Result<&Cell, SceneError> {
        if !self.in_bounds(pos) {
            return Err(SceneError::OutOfBounds { x: pos.x, y: pos.y });
        }
        Ok(&self.cells[pos.y * self.width + pos.x])
    }

    pub fn index(&self, pos: Coord) -> usize {
        pos.y * self.width + pos.x
    }

    /// In-bounds cells within Chebyshev distance `radius`, row-major order.
    pub fn neighborhood(&self, pos: Coord, radius: usize) -> impl Iterator<Item = Coord> + '_ {
        let x0 = pos.x.saturating_sub(radius);
        let y0 = pos.y.saturating_sub(radius);
        let x1 = (pos.x + radius).min(self.width - 1);
        let y1 = (pos.y + radius).min(self.height - 1);
        (y0..=y1).flat_map(move |y| (x0..=x1).map(move |x| Coord::new(x, y)))
    }
}

/// Physical ground truth at `pos`: a fixed affordance descriptor merged
/// with the cell's geometry-channel signals.
pub fn ground_truth_descriptor(scene: &Scene, pos: Coord) -> Result<Descriptor, SceneError> {
    let cell = scene.cell(pos)?;
    let mut d = Descriptor::new();
    match cell.occupancy {
        Occupancy::Open => d.insert_max(Term::new("affordance", "passable"), 1.0),
        Occupancy::Blocked => d.insert_max(Term::new("affordance", "blocked"), 1.0),
        Occupancy::BlockedTransparent => {
            d.insert_max(Term::new("affordance", "blocked"), 1.0);
            d.insert_max(Term::new("material", "transparent"), 1.0);
        }
    }
    for s in cell
        .signals
        .iter()
        .filter(|s| s.channel == Channel::Geometry)
    {
        d.insert_max(s.term(), s.strength);
    }
    Ok(d)
}

/// Profile-weighted signals of a single cell.
pub fn cell_descriptor(
    scene: &Scene,
    pos: Coord,
    profile: &AgentProfile,
) -> Result<Descriptor, SceneError> {
    let cell = scene.cell(pos)?;
    let mut d = Descriptor::new();
    for s in &cell.signals {
        d.insert_max(
            s.term(),
            s.strength * profile.channel_weights.get(s.channel),
        );
    }
    Ok(d)
}

/// Union of weighted signals over the Chebyshev neighborhood, max-merged.
pub fn percept_at(
    scene: &Scene,
    pos: Coord,
    radius: usize,
    profile: &AgentProfile,
) -> Result<Descriptor, SceneError> {
    if !scene.in_bounds(pos) {
        return Err(SceneError::OutOfBounds { x: pos.x, y: pos.y });
    }
    let mut d = Descriptor::new();
    for c in scene.neighborhood(pos, radius) {
        d.merge_max(&cell_descriptor(scene, c, profile)?);
    }
    Ok(d)
}
