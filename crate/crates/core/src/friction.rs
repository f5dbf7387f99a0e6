//! Cognitive friction: the metric, its spatial accumulation into
//! heatmaps, phantom affordance detection and exports.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::agent::Trigger;
use crate::canonical::{self, FloatStyle};
use crate::embed::{cosine_sim, EmbedError, EmbeddingVector, Term};
use crate::episodic::{EpisodeEvent, EventOutcome};
use crate::scene::{Coord, Scene};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrictionError {
    #[error("position {0} out of bounds")]
    OutOfBounds(Coord),
    #[error("cannot merge fields of different shape")]
    ShapeMismatch,
    #[error("malformed heatmap document: {0}")]
    Malformed(String),
}

/// `1 - cosine_sim(e_gen, r_phys)`.
pub fn cognitive_friction(
    e_gen: &EmbeddingVector,
    r_phys: &EmbeddingVector,
) -> Result<f64, EmbedError> {
    Ok(1.0 - cosine_sim(e_gen, r_phys)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrictionClass {
    Productive,
    Hazardous,
    Negligible,
}

impl FrictionClass {
    pub fn as_str(self) -> &'static str {
        match self {
            FrictionClass::Productive => "Productive",
            FrictionClass::Hazardous => "Hazardous",
            FrictionClass::Negligible => "Negligible",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Productive, Self::Hazardous, Self::Negligible]
            .into_iter()
            .find(|c| c.as_str() == s)
    }
}

impl fmt::Display for FrictionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Friction below `theta_h` is negligible; above it, designer intent
/// (`intended_friction >= 0.5`) separates productive from hazardous.
pub fn classify_friction(mean_c_f: f64, intended_friction: f64, theta_h: f64) -> FrictionClass {
    if mean_c_f < theta_h {
        FrictionClass::Negligible
    } else if intended_friction >= 0.5 {
        FrictionClass::Productive
    } else {
        FrictionClass::Hazardous
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(default = "Thresholds::default_theta_p")]
    pub theta_p: f64,
    #[serde(default = "Thresholds::default_sigma_min")]
    pub sigma_min: f64,
    #[serde(default = "Thresholds::default_theta_h")]
    pub theta_h: f64,
}

impl Thresholds {
    fn default_theta_p() -> f64 {
        0.5
    }
    fn default_sigma_min() -> f64 {
        0.3
    }
    fn default_theta_h() -> f64 {
        0.3
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("theta_p", self.theta_p),
            ("sigma_min", self.sigma_min),
            ("theta_h", self.theta_h),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("threshold {name}={v} out of [0,1]"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "theta_p": canonical::float(self.theta_p),
            "sigma_min": canonical::float(self.sigma_min),
            "theta_h": canonical::float(self.theta_h),
        })
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            theta_p: Self::default_theta_p(),
            sigma_min: Self::default_sigma_min(),
            theta_h: Self::default_theta_h(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionSample {
    pub position: Coord,
    pub c_f: f64,
    pub max_signal_strength: f64,
    pub trigger: Trigger,
}

/// Running aggregate for one cell.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellStats {
    pub count: u64,
    pub mean_c_f: f64,
    pub max_c_f: f64,
    pub mean_signal_strength: f64,
}

impl CellStats {
    pub fn push(&mut self, c_f: f64, signal: f64) {
        self.count += 1;
        let n = self.count as f64;
        self.mean_c_f += (c_f - self.mean_c_f) / n;
        self.mean_signal_strength += (signal - self.mean_signal_strength) / n;
        self.max_c_f = if self.count == 1 {
            c_f
        } else {
            self.max_c_f.max(c_f)
        };
    }

    /// Combines two disjoint aggregates (weighted means, max of maxima).
    pub fn merge(&self, other: &CellStats) -> CellStats {
        if other.count == 0 {
            return *self;
        }
        if self.count == 0 {
            return *other;
        }
        let count = self.count + other.count;
        let w = other.count as f64 / count as f64;
        CellStats {
            count,
            mean_c_f: self.mean_c_f + (other.mean_c_f - self.mean_c_f) * w,
            max_c_f: self.max_c_f.max(other.max_c_f),
            mean_signal_strength: self.mean_signal_strength
                + (other.mean_signal_strength - self.mean_signal_strength) * w,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrictionField {
    pub width: usize,
    pub height: usize,
    cells: Vec<CellStats>,
}

impl FrictionField {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cells: vec![CellStats::default(); width * height],
        }
    }

    pub fn for_scene(scene: &Scene) -> Self {
        Self::new(scene.width, scene.height)
    }

    pub fn get(&self, pos: Coord) -> Option<&CellStats> {
        (pos.x < self.width && pos.y < self.height).then(|| &self.cells[pos.y * self.width + pos.x])
    }

    pub fn cells(&self) -> &[CellStats] {
        &self.cells
    }

    pub fn accumulate(&mut self, s: &FrictionSample) -> Result<(), FrictionError> {
        if s.position.x >= self.width || s.position.y >= self.height {
            return Err(FrictionError::OutOfBounds(s.position));
        }
        self.cells[s.position.y * self.width + s.position.x].push(s.c_f, s.max_signal_strength);
        Ok(())
    }

    pub fn merge(&self, other: &FrictionField) -> Result<FrictionField, FrictionError> {
        if self.width != other.width || self.height != other.height {
            return Err(FrictionError::ShapeMismatch);
        }
        Ok(FrictionField {
            width: self.width,
            height: self.height,
            cells: self
                .cells
                .iter()
                .zip(&other.cells)
                .map(|(a, b)| a.merge(b))
                .collect(),
        })
    }

    /// Coordinates in row-major order.
    pub fn coords(&self) -> impl Iterator<Item = Coord> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| Coord::new(x, y)))
    }
}

/// Per-cell class using each cell's designer intent; `None` for unsampled cells.
pub fn classify_field(
    field: &FrictionField,
    scene: &Scene,
    theta_h: f64,
) -> Vec<Option<FrictionClass>> {
    field
        .coords()
        .map(|pos| {
            let st = field.get(pos).copied().unwrap_or_default();
            let intent = scene.cell(pos).map(|c| c.intended_friction).unwrap_or(0.0);
            (st.count > 0).then(|| classify_friction(st.mean_c_f, intent, theta_h))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomAffordance {
    pub position: Coord,
    pub mean_c_f: f64,
    pub mean_signal_strength: f64,
    pub dominant_expected_token: String,
    pub dominant_actual_token: String,
    pub sample_count: u64,
    pub theta_p: f64,
    pub sigma_min: f64,
}

impl PhantomAffordance {
    /// Plain-language account of the phantom.
    pub fn description(&self) -> String {
        format!(
            "The cell at {} reads as '{}' but is physically '{}'; mean friction {:.3} over {} appraisal{} (signal strength {:.2}).",
            self.position,
            self.dominant_expected_token,
            self.dominant_actual_token,
            self.mean_c_f,
            self.sample_count,
            if self.sample_count == 1 { "" } else { "s" },
            self.mean_signal_strength,
        )
    }
}

fn dominant(weights: &BTreeMap<Term, f64>) -> String {
    // BTreeMap iteration is term-ordered, so `>` keeps the smallest term on ties.
    let mut best: Option<(&Term, f64)> = None;
    for (t, &w) in weights {
        if best.is_none_or(|(_, bw)| w > bw) {
            best = Some((t, w));
        }
    }
    best.map(|(t, _)| t.to_string()).unwrap_or_default()
}

/// Cells whose mean friction is at least `theta_p` and whose signals were
/// strong on average (`>= sigma_min`), most severe first.
pub fn detect_phantoms(
    field: &FrictionField,
    scene: &Scene,
    events: &[EpisodeEvent],
    theta_p: f64,
    sigma_min: f64,
) -> Vec<PhantomAffordance> {
    let mut out: Vec<PhantomAffordance> = field
        .coords()
        .filter(|&pos| scene.in_bounds(pos))
        .filter_map(|pos| {
            let st = field.get(pos)?;
            if st.count == 0 || st.mean_c_f < theta_p || st.mean_signal_strength < sigma_min {
                return None;
            }
            let mut expected: BTreeMap<Term, f64> = BTreeMap::new();
            let mut actual: BTreeMap<Term, f64> = BTreeMap::new();
            for ev in events.iter().filter(|e| e.position == pos) {
                if let EventOutcome::Appraised(a) = &ev.outcome {
                    for (t, w) in a.expected.iter() {
                        *expected.entry(t.clone()).or_default() += w;
                    }
                    for (t, w) in a.found.iter() {
                        *actual.entry(t.clone()).or_default() += w;
                    }
                }
            }
            Some(PhantomAffordance {
                position: pos,
                mean_c_f: st.mean_c_f,
                mean_signal_strength: st.mean_signal_strength,
                dominant_expected_token: dominant(&expected),
                dominant_actual_token: dominant(&actual),
                sample_count: st.count,
                theta_p,
                sigma_min,
            })
        })
        .collect();
    out.sort_by(|a, b| {
        b.mean_c_f
            .total_cmp(&a.mean_c_f)
            .then_with(|| (a.position.y, a.position.x).cmp(&(b.position.y, b.position.x)))
    });
    out
}

/// Canonical heatmap document (sorted keys, six-decimal floats).
pub fn export_heatmap_json(
    field: &FrictionField,
    thresholds: &Thresholds,
    classifications: &[Option<FrictionClass>],
) -> Vec<u8> {
    let cells: Vec<Value> = field
        .coords()
        .zip(field.cells())
        .enumerate()
        .map(|(i, (pos, st))| {
            let class = classifications.get(i).copied().flatten();
            let label = match (st.count, class) {
                (0, _) => "unsampled".to_string(),
                (_, Some(c)) => c.as_str().to_string(),
                (_, None) => "unclassified".to_string(),
            };
            json!({
                "x": pos.x,
                "y": pos.y,
                "count": st.count,
                "mean_c_f": canonical::float(st.mean_c_f),
                "max_c_f": canonical::float(st.max_c_f),
                "mean_signal_strength": canonical::float(st.mean_signal_strength),
                "class": label,
            })
        })
        .collect();
    let doc = json!({
        "width": field.width,
        "height": field.height,
        "thresholds": thresholds.to_json(),
        "legend": "mean_c_f is the average gap between what agents expected and what was physically there (0 = as expected, 1 = completely different). Productive friction was intended by the designer; Hazardous friction was not.",
        "cells": cells,
    });
    let mut bytes = canonical::to_bytes(&doc, FloatStyle::Fixed6);
    bytes.push(b'\n');
    bytes
}

/// Reads back a document written by [`export_heatmap_json`].
pub fn parse_heatmap_json(
    bytes: &[u8],
) -> Result<(FrictionField, Vec<Option<FrictionClass>>), FrictionError> {
    let bad = |m: &str| FrictionError::Malformed(m.to_string());
    let doc: Value =
        serde_json::from_slice(bytes).map_err(|e| FrictionError::Malformed(e.to_string()))?;
    let width = doc["width"].as_u64().ok_or_else(|| bad("width"))? as usize;
    let height = doc["height"].as_u64().ok_or_else(|| bad("height"))? as usize;
    let cells = doc["cells"].as_array().ok_or_else(|| bad("cells"))?;
    if cells.len() != width * height {
        return Err(bad("cell count does not match dimensions"));
    }
    let mut field = FrictionField::new(width, height);
    let mut classes = vec![None; width * height];
    for c in cells {
        let x = c["x"].as_u64().ok_or_else(|| bad("x"))? as usize;
        let y = c["y"].as_u64().ok_or_else(|| bad("y"))? as usize;
        if x >= width || y >= height {
            return Err(bad("cell out of bounds"));
        }
        let num = |k: &str| c[k].as_f64().ok_or_else(|| bad(k));
        let i = y * width + x;
        field.cells[i] = CellStats {
            count: c["count"].as_u64().ok_or_else(|| bad("count"))?,
            mean_c_f: num("mean_c_f")?,
            max_c_f: num("max_c_f")?,
            mean_signal_strength: num("mean_signal_strength")?,
        };
        classes[i] = c["class"].as_str().and_then(FrictionClass::parse);
    }
    Ok((field, classes))
}

pub fn export_phantoms_json(phantoms: &[PhantomAffordance]) -> Vec<u8> {
    let list: Vec<Value> = phantoms
        .iter()
        .map(|p| {
            json!({
                "position": p.position.to_json(),
                "mean_c_f": canonical::float(p.mean_c_f),
                "mean_signal_strength": canonical::float(p.mean_signal_strength),
                "dominant_expected_token": p.dominant_expected_token,
                "dominant_actual_token": p.dominant_actual_token,
                "sample_count": p.sample_count,
                "theta_p": canonical::float(p.theta_p),
                "sigma_min": canonical::float(p.sigma_min),
                "description": p.description(),
            })
        })
        .collect();
    let mut bytes = canonical::to_bytes(&Value::Array(list), FloatStyle::Fixed6);
    bytes.push(b'\n');
    bytes
}

/// Grey level for a mean friction value: `round(255 * c)`, halves rounded up.
pub fn grey_level(mean_c_f: f64) -> u8 {
    (255.0 * mean_c_f.clamp(0.0, 1.0) + 0.5).floor() as u8
}

/// Binary PGM (P5), maxval 255, one pixel per cell; unsampled cells are 0.
pub fn render_heatmap_image(field: &FrictionField) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", field.width, field.height).into_bytes();
    out.extend(field.cells().iter().map(|st| {
        if st.count == 0 {
            0
        } else {
            grey_level(st.mean_c_f)
        }
    }));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{embed_descriptor, Descriptor, EmbedConfig};
    use proptest::prelude::*;

    fn sample(x: usize, y: usize, c_f: f64) -> FrictionSample {
        FrictionSample {
            position: Coord::new(x, y),
            c_f,
            max_signal_strength: 0.5,
            trigger: Trigger::Surprisal,
        }
    }

    #[test]
    fn friction_examples() {
        let cfg = EmbedConfig::default();
        let a =
            embed_descriptor(&Descriptor::from_entries([("a", "1", 1.0)]).unwrap(), &cfg).unwrap();
        let b =
            embed_descriptor(&Descriptor::from_entries([("b", "1", 1.0)]).unwrap(), &cfg).unwrap();
        let ab = embed_descriptor(
            &Descriptor::from_entries([("a", "1", 1.0), ("b", "1", 1.0)]).unwrap(),
            &cfg,
        )
        .unwrap();
        assert_eq!(cognitive_friction(&a, &a).unwrap(), 0.0);
        assert_eq!(cognitive_friction(&a, &b).unwrap(), 1.0);
        assert!((cognitive_friction(&a, &ab).unwrap() - 0.29289).abs() < 1e-5);
    }

    #[test]
    fn accumulate_examples() {
        let mut f = FrictionField::new(2, 2);
        f.accumulate(&sample(1, 0, 0.4)).unwrap();
        let st = f.get(Coord::new(1, 0)).unwrap();
        assert_eq!((st.count, st.mean_c_f, st.max_c_f), (1, 0.4, 0.4));
        f.accumulate(&sample(1, 0, 0.8)).unwrap();
        let st = f.get(Coord::new(1, 0)).unwrap();
        assert_eq!(st.count, 2);
        assert!((st.mean_c_f - 0.6).abs() < 1e-15);
        assert_eq!(st.max_c_f, 0.8);
        assert_eq!(
            f.accumulate(&sample(2, 0, 0.1)),
            Err(FrictionError::OutOfBounds(Coord::new(2, 0)))
        );
    }

    #[test]
    fn accumulate_order_invariance() {
        let mut a = FrictionField::new(1, 1);
        let mut b = FrictionField::new(1, 1);
        for c in [0.2, 0.8] {
            a.accumulate(&sample(0, 0, c)).unwrap();
        }
        for c in [0.8, 0.2] {
            b.accumulate(&sample(0, 0, c)).unwrap();
        }
        let (sa, sb) = (
            a.get(Coord::new(0, 0)).unwrap(),
            b.get(Coord::new(0, 0)).unwrap(),
        );
        assert!((sa.mean_c_f - sb.mean_c_f).abs() < 1e-12);
        assert_eq!(sa.max_c_f, sb.max_c_f);
    }

    #[test]
    fn classification() {
        assert_eq!(classify_friction(0.1, 0.0, 0.3), FrictionClass::Negligible);
        assert_eq!(classify_friction(0.7, 0.9, 0.3), FrictionClass::Productive);
        assert_eq!(classify_friction(0.7, 0.0, 0.3), FrictionClass::Hazardous);
        assert_eq!(classify_friction(0.3, 0.5, 0.3), FrictionClass::Productive);
    }

    #[test]
    fn pgm_rendering() {
        let mut f = FrictionField::new(3, 1);
        assert_eq!(render_heatmap_image(&f), b"P5\n3 1\n255\n\0\0\0".to_vec());
        f.accumulate(&sample(0, 0, 1.0)).unwrap();
        f.accumulate(&sample(1, 0, 0.5)).unwrap();
        f.accumulate(&sample(2, 0, 0.0)).unwrap();
        let img = render_heatmap_image(&f);
        assert_eq!(&img[img.len() - 3..], &[255, 128, 0]);
        assert_eq!(grey_level(0.5), 128);
        assert_eq!(grey_level(127.4 / 255.0), 127);
    }

    #[test]
    fn empty_field_exports_unsampled_cell() {
        let f = FrictionField::new(1, 1);
        let bytes = export_heatmap_json(&f, &Thresholds::default(), &[None]);
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.contains(r#""class":"unsampled""#));
        assert!(text.contains(r#""mean_c_f":0.000000"#));
        let (g, classes) = parse_heatmap_json(&bytes).unwrap();
        assert_eq!(
            export_heatmap_json(&g, &Thresholds::default(), &classes),
            bytes
        );
    }

    #[test]
    fn merge_rejects_shape_mismatch() {
        assert_eq!(
            FrictionField::new(1, 2).merge(&FrictionField::new(2, 1)),
            Err(FrictionError::ShapeMismatch)
        );
    }

    fn samples_strategy() -> impl Strategy<Value = Vec<(usize, usize, f64, f64)>> {
        prop::collection::vec((0usize..3, 0usize..3, 0.0f64..=1.0, 0.0f64..=1.0), 0..60)
    }

    proptest! {
        #[test]
        fn field_matches_brute_force_and_merge(samples in samples_strategy(), split in 0usize..60) {
            let mut whole = FrictionField::new(3, 3);
            for &(x, y, c, s) in &samples {
                whole.accumulate(&FrictionSample { position: Coord::new(x, y), c_f: c, max_signal_strength: s, trigger: Trigger::Boundary }).unwrap();
            }
            let k = split.min(samples.len());
            let mut left = FrictionField::new(3, 3);
            let mut right = FrictionField::new(3, 3);
            for (i, &(x, y, c, s)) in samples.iter().enumerate() {
                let f = if i < k { &mut left } else { &mut right };
                f.accumulate(&FrictionSample { position: Coord::new(x, y), c_f: c, max_signal_strength: s, trigger: Trigger::Boundary }).unwrap();
            }
            let merged = left.merge(&right).unwrap();
            for pos in whole.coords().collect::<Vec<_>>() {
                let vals: Vec<f64> = samples.iter().filter(|s| (s.0, s.1) == (pos.x, pos.y)).map(|s| s.2).collect();
                let st = whole.get(pos).unwrap();
                let m = merged.get(pos).unwrap();
                prop_assert_eq!(st.count as usize, vals.len());
                prop_assert_eq!(m.count as usize, vals.len());
                if !vals.is_empty() {
                    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                    let max = vals.iter().copied().fold(0.0, f64::max);
                    prop_assert!((st.mean_c_f - mean).abs() < 1e-12);
                    prop_assert!((m.mean_c_f - mean).abs() < 1e-12);
                    prop_assert_eq!(st.max_c_f, max);
                    prop_assert_eq!(m.max_c_f, max);
                    prop_assert!(st.mean_c_f <= st.max_c_f + 1e-15);
                }
            }
        }

        #[test]
        fn classification_is_total(m in 0.0f64..=1.0, i in 0.0f64..=1.0, t in 0.0f64..=1.0) {
            let _ = classify_friction(m, i, t);
        }
    }
}
