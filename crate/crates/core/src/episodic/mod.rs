//! System 2: generative expectations of the proximal state and the
//! episode records built from them.

#[cfg(feature = "remote")]
mod remote;
mod rules;

#[cfg(feature = "remote")]
pub use remote::RemoteProvider;
pub use rules::{
    draw_outcome, expected_embedding, sample_expectations, uniform01, ExpectationRule, Matched,
    Outcome, PatternTerm, RuleError, RuleTable,
};

use serde_json::{json, Value};
use thiserror::Error;

use crate::agent::{AgentProfile, Trigger};
use crate::canonical::{self, FloatStyle};
use crate::embed::{
    aggregate_embeddings, embed_descriptor, stable_hash, Descriptor, EmbedConfig, EmbeddingVector,
    Term,
};
use crate::friction::FrictionClass;
use crate::scene::Coord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("provider returned HTTP status {0}")]
    Status(u16),
    #[error("malformed provider reply: {0}")]
    Malformed(String),
    #[error("provider returned {got} samples, expected {expected}")]
    SampleCount { expected: usize, got: usize },
    #[error("invalid sample {index}: {reason}")]
    InvalidSample { index: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationSample {
    pub descriptor: Descriptor,
    pub weight: f64,
}

/// Source of sampled expectations for a perceived descriptor.
pub trait ExpectationProvider: Send + Sync {
    /// Exactly `n` samples, reproducible for a given `seed`.
    fn samples(
        &self,
        query: &Descriptor,
        n: usize,
        seed: u64,
    ) -> Result<Vec<ExpectationSample>, ProviderError>;

    /// Stable identity recorded in run manifests.
    fn identity(&self) -> String;
}

/// Aggregated expectation for one appraisal.
#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    pub e_gen: EmbeddingVector,
    /// Sample-weighted sum of term weights across all samples.
    pub aggregate: Descriptor,
    pub samples_digest: String,
}

/// Samples `profile.n_samples` expectations and aggregates their embeddings.
pub fn generate_expectation(
    provider: &dyn ExpectationProvider,
    query: &Descriptor,
    profile: &AgentProfile,
    cfg: &EmbedConfig,
    seed: u64,
) -> Result<Expectation, ProviderError> {
    let n = profile.n_samples;
    let samples = provider.samples(query, n, seed)?;
    if samples.len() != n {
        return Err(ProviderError::SampleCount {
            expected: n,
            got: samples.len(),
        });
    }
    let mut vectors = Vec::with_capacity(n);
    let mut totals: std::collections::BTreeMap<Term, f64> = Default::default();
    for (index, s) in samples.iter().enumerate() {
        let v = embed_descriptor(&s.descriptor, cfg).map_err(|e| ProviderError::InvalidSample {
            index,
            reason: e.to_string(),
        })?;
        vectors.push(v);
        for (t, w) in s.descriptor.iter() {
            *totals.entry(t.clone()).or_default() += s.weight * w;
        }
    }
    let e_gen =
        aggregate_embeddings(&vectors).map_err(|e| ProviderError::Malformed(e.to_string()))?;
    let mut aggregate = Descriptor::new();
    for (t, w) in totals {
        aggregate.insert_max(t, w);
    }
    let listing = Value::Array(samples.iter().map(|s| s.descriptor.to_json()).collect());
    Ok(Expectation {
        e_gen,
        aggregate,
        samples_digest: canonical::sha256_hex(
            canonical::to_string(&listing, FloatStyle::Shortest).as_bytes(),
        ),
    })
}

/// Seed of the random substream for one appraisal.
///
/// Derived from the run seed, the agent id, the step and the appraised
/// cell, so an event's randomness does not depend on how many events
/// fired before it.
pub fn substream_seed(run_seed: u64, agent_id: &str, step: u64, position: Coord) -> u64 {
    let mut bytes = Vec::with_capacity(agent_id.len() + 25);
    bytes.extend_from_slice(agent_id.as_bytes());
    bytes.push(0);
    bytes.extend_from_slice(&step.to_le_bytes());
    bytes.extend_from_slice(&(position.x as u64).to_le_bytes());
    bytes.extend_from_slice(&(position.y as u64).to_le_bytes());
    stable_hash(&bytes, run_seed)
}

pub struct NarrativeFields<'a> {
    pub step: u64,
    pub position: Coord,
    pub trigger: Trigger,
    pub expected: &'a Descriptor,
    pub found: &'a Descriptor,
    pub c_f: f64,
    pub classification: FrictionClass,
}

fn token_list(d: &Descriptor, limit: usize) -> String {
    d.ranked()
        .into_iter()
        .take(limit)
        .map(|(t, _)| t.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn compose_narrative(f: &NarrativeFields<'_>) -> String {
    format!(
        "[step {}] at ({},{}) trigger={}: expected {}, found {}; C_f={:.3} ({})",
        f.step,
        f.position.x,
        f.position.y,
        f.trigger.as_str(),
        token_list(f.expected, 3),
        token_list(f.found, usize::MAX),
        f.c_f,
        f.classification,
    )
}

pub fn skipped_narrative(step: u64, position: Coord, trigger: Trigger, reason: &str) -> String {
    format!(
        "[step {step}] at ({},{}) trigger={}: skipped ({reason})",
        position.x,
        position.y,
        trigger.as_str()
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Appraisal {
    pub e_gen: EmbeddingVector,
    pub r_phys: EmbeddingVector,
    /// Equal to `c_f`.
    pub delta: f64,
    pub c_f: f64,
    pub classification: FrictionClass,
    pub samples_digest: String,
    pub expected: Descriptor,
    pub found: Descriptor,
    /// Strongest weighted signal of the appraised cell.
    pub signal_strength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventOutcome {
    Appraised(Appraisal),
    /// No measurement was taken; never contributes to heatmaps.
    Skipped {
        reason: String,
    },
}

/// One appraisal made during a System 2 activation.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeEvent {
    pub agent: String,
    pub step: u64,
    pub agent_position: Coord,
    /// The appraised cell.
    pub position: Coord,
    pub trigger: Trigger,
    pub narrative: String,
    pub outcome: EventOutcome,
}

impl EpisodeEvent {
    pub fn appraisal(&self) -> Option<&Appraisal> {
        match &self.outcome {
            EventOutcome::Appraised(a) => Some(a),
            EventOutcome::Skipped { .. } => None,
        }
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "agent": self.agent,
            "step": self.step,
            "agent_position": self.agent_position.to_json(),
            "position": self.position.to_json(),
            "trigger": self.trigger.as_str(),
            "narrative": self.narrative,
        });
        let obj = v.as_object_mut().expect("object literal");
        match &self.outcome {
            EventOutcome::Appraised(a) => {
                obj.insert("status".into(), "appraised".into());
                obj.insert("dimension".into(), a.e_gen.dimension().into());
                obj.insert("e_gen".into(), a.e_gen.to_sparse_json());
                obj.insert("r_phys".into(), a.r_phys.to_sparse_json());
                obj.insert("delta".into(), canonical::float(a.delta));
                obj.insert("c_f".into(), canonical::float(a.c_f));
                obj.insert("classification".into(), a.classification.as_str().into());
                obj.insert("samples_digest".into(), a.samples_digest.clone().into());
                obj.insert("expected".into(), a.expected.to_json());
                obj.insert("found".into(), a.found.to_json());
                obj.insert(
                    "signal_strength".into(),
                    canonical::float(a.signal_strength),
                );
            }
            EventOutcome::Skipped { reason } => {
                obj.insert("status".into(), "skipped".into());
                obj.insert("reason".into(), reason.clone().into());
            }
        }
        v
    }

    /// One canonical JSON line (no trailing newline).
    pub fn to_line(&self) -> String {
        canonical::to_string(&self.to_json(), FloatStyle::Shortest)
    }

    pub fn from_json(v: &Value) -> Result<Self, String> {
        let coord = |k: &str| -> Result<Coord, String> {
            serde_json::from_value::<[usize; 2]>(v[k].clone())
                .map(Coord::from)
                .map_err(|e| format!("{k}: {e}"))
        };
        let num = |k: &str| v[k].as_f64().ok_or_else(|| format!("missing {k}"));
        let text = |k: &str| {
            v[k].as_str()
                .map(str::to_string)
                .ok_or_else(|| format!("missing {k}"))
        };
        let trigger = match v["trigger"].as_str() {
            Some("Surprisal") => Trigger::Surprisal,
            Some("Boundary") => Trigger::Boundary,
            _ => return Err("bad trigger".into()),
        };
        let descriptor = |k: &str| -> Result<Descriptor, String> {
            let entries: Vec<(String, String, f64)> =
                serde_json::from_value(v[k].clone()).map_err(|e| format!("{k}: {e}"))?;
            Descriptor::from_entries(entries).map_err(|e| e.to_string())
        };
        let outcome = match v["status"].as_str() {
            Some("appraised") => {
                let dim = v["dimension"].as_u64().ok_or("missing dimension")? as usize;
                let vector = |k: &str| -> Result<EmbeddingVector, String> {
                    let pairs: Vec<(usize, f64)> =
                        serde_json::from_value(v[k].clone()).map_err(|e| format!("{k}: {e}"))?;
                    EmbeddingVector::from_sparse(dim, &pairs).map_err(|e| e.to_string())
                };
                EventOutcome::Appraised(Appraisal {
                    e_gen: vector("e_gen")?,
                    r_phys: vector("r_phys")?,
                    delta: num("delta")?,
                    c_f: num("c_f")?,
                    classification: FrictionClass::parse(&text("classification")?)
                        .ok_or("bad classification")?,
                    samples_digest: text("samples_digest")?,
                    expected: descriptor("expected")?,
                    found: descriptor("found")?,
                    signal_strength: num("signal_strength")?,
                })
            }
            Some("skipped") => EventOutcome::Skipped {
                reason: text("reason")?,
            },
            _ => return Err("bad status".into()),
        };
        Ok(EpisodeEvent {
            agent: text("agent")?,
            step: v["step"].as_u64().ok_or("missing step")?,
            agent_position: coord("agent_position")?,
            position: coord("position")?,
            trigger,
            narrative: text("narrative")?,
            outcome,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::ChannelWeights;
    use crate::embed::cosine_sim;

    fn d(entries: &[(&str, &str, f64)]) -> Descriptor {
        Descriptor::from_entries(entries.iter().copied()).unwrap()
    }

    fn glass_table() -> RuleTable {
        RuleTable::from_json(
            br#"{"rules":[{"pattern":[["material","glass",0.5]],"priority":10,"outcomes":[
                {"entries":[["affordance","passable",1.0]],"p":0.8},
                {"entries":[["affordance","blocked",1.0],["material","transparent",1.0]],"p":0.2}]},
              {"pattern":[["material","concrete",0.5]],"priority":5,"outcomes":[
                {"entries":[["affordance","blocked",1.0]],"p":1.0}]}]}"#,
        )
        .unwrap()
    }

    fn profile(n: usize) -> AgentProfile {
        AgentProfile::new("p", ChannelWeights::uniform(1.0), 0.3, n, 1)
    }

    struct Broken;

    impl ExpectationProvider for Broken {
        fn samples(
            &self,
            _: &Descriptor,
            n: usize,
            _: u64,
        ) -> Result<Vec<ExpectationSample>, ProviderError> {
            Ok(vec![
                ExpectationSample {
                    descriptor: d(&[("a", "b", 1.0)]),
                    weight: 1.0
                };
                n + 1
            ])
        }
        fn identity(&self) -> String {
            "broken".into()
        }
    }

    #[test]
    fn deterministic_rule_gives_point_embedding() {
        let cfg = EmbedConfig::default();
        let e = generate_expectation(
            &glass_table(),
            &d(&[("material", "concrete", 0.9)]),
            &profile(7),
            &cfg,
            1,
        )
        .unwrap();
        assert_eq!(
            e.e_gen,
            embed_descriptor(&d(&[("affordance", "blocked", 1.0)]), &cfg).unwrap()
        );
        assert!(
            (e.aggregate
                .weight(&Term::new("affordance", "blocked"))
                .unwrap()
                - 1.0)
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn large_n_converges_to_analytic() {
        let cfg = EmbedConfig::default();
        let t = glass_table();
        let q = d(&[("material", "glass", 0.9)]);
        let e = generate_expectation(&t, &q, &profile(1000), &cfg, 42).unwrap();
        let oracle = expected_embedding(&t, &q, &cfg).unwrap();
        assert!(cosine_sim(&e.e_gen, &oracle).unwrap() >= 0.999);
    }

    #[test]
    fn sample_count_mismatch_is_provider_error() {
        let cfg = EmbedConfig::default();
        let err = generate_expectation(&Broken, &d(&[("a", "b", 1.0)]), &profile(3), &cfg, 0)
            .unwrap_err();
        assert_eq!(
            err,
            ProviderError::SampleCount {
                expected: 3,
                got: 4
            }
        );
    }

    #[test]
    fn digest_tracks_samples() {
        let cfg = EmbedConfig::default();
        let t = glass_table();
        let q = d(&[("material", "glass", 0.9)]);
        let a = generate_expectation(&t, &q, &profile(20), &cfg, 5).unwrap();
        let b = generate_expectation(&t, &q, &profile(20), &cfg, 5).unwrap();
        let c = generate_expectation(&t, &q, &profile(20), &cfg, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.samples_digest, c.samples_digest);
    }

    #[test]
    fn substreams_differ_per_site() {
        let base = substream_seed(42, "a/0", 3, Coord::new(1, 1));
        assert_eq!(base, substream_seed(42, "a/0", 3, Coord::new(1, 1)));
        assert_ne!(base, substream_seed(42, "a/0", 4, Coord::new(1, 1)));
        assert_ne!(base, substream_seed(42, "a/1", 3, Coord::new(1, 1)));
        assert_ne!(base, substream_seed(42, "a/0", 3, Coord::new(1, 2)));
        assert_ne!(base, substream_seed(43, "a/0", 3, Coord::new(1, 1)));
    }

    #[test]
    fn zero_friction_narrative() {
        let p = d(&[("affordance", "passable", 1.0)]);
        let n = compose_narrative(&NarrativeFields {
            step: 4,
            position: Coord::new(2, 3),
            trigger: Trigger::Boundary,
            expected: &p,
            found: &p,
            c_f: 0.0,
            classification: FrictionClass::Negligible,
        });
        assert_eq!(
            n,
            "[step 4] at (2,3) trigger=Boundary: expected affordance:passable, found affordance:passable; C_f=0.000 (Negligible)"
        );
    }

    #[test]
    fn narrative_orders_and_truncates_tokens() {
        let expected = d(&[
            ("a", "z", 0.5),
            ("a", "y", 0.5),
            ("b", "x", 0.9),
            ("c", "w", 0.1),
        ]);
        let found = d(&[
            ("affordance", "blocked", 1.0),
            ("material", "transparent", 1.0),
        ]);
        let n = compose_narrative(&NarrativeFields {
            step: 1,
            position: Coord::new(0, 0),
            trigger: Trigger::Surprisal,
            expected: &expected,
            found: &found,
            c_f: 0.75757,
            classification: FrictionClass::Hazardous,
        });
        assert!(n.contains("expected b:x, a:y, a:z, found affordance:blocked, material:transparent; C_f=0.758 (Hazardous)"), "{n}");
    }

    #[test]
    fn event_json_round_trip() {
        let cfg = EmbedConfig::default();
        let e_gen = embed_descriptor(
            &d(&[
                ("affordance", "passable", 0.8),
                ("affordance", "blocked", 0.2),
            ]),
            &cfg,
        )
        .unwrap();
        let r_phys = embed_descriptor(&d(&[("affordance", "blocked", 1.0)]), &cfg).unwrap();
        let c_f = 1.0 - cosine_sim(&e_gen, &r_phys).unwrap();
        let ev = EpisodeEvent {
            agent: "p/0".into(),
            step: 3,
            agent_position: Coord::new(1, 1),
            position: Coord::new(1, 0),
            trigger: Trigger::Surprisal,
            narrative: "n".into(),
            outcome: EventOutcome::Appraised(Appraisal {
                e_gen,
                r_phys,
                delta: c_f,
                c_f,
                classification: FrictionClass::Hazardous,
                samples_digest: "abc".into(),
                expected: d(&[("affordance", "passable", 0.8)]),
                found: d(&[("affordance", "blocked", 1.0)]),
                signal_strength: 0.9,
            }),
        };
        let back = EpisodeEvent::from_json(&serde_json::from_str(&ev.to_line()).unwrap()).unwrap();
        let (a, b) = (ev.appraisal().unwrap(), back.appraisal().unwrap());
        assert_eq!(a.c_f, b.c_f);
        assert!((1.0 - cosine_sim(&b.e_gen, &b.r_phys).unwrap() - b.c_f).abs() < 1e-9);
        assert_eq!(back.to_line(), ev.to_line());

        let skipped = EpisodeEvent {
            outcome: EventOutcome::Skipped {
                reason: "timeout".into(),
            },
            ..ev
        };
        assert_eq!(
            EpisodeEvent::from_json(&skipped.to_json()).unwrap(),
            skipped
        );
    }
}
