//! Rule-table expectation model.
//!
//! Each rule matches a set of perceived terms (with minimum strengths) and
//! carries a categorical distribution over expected descriptors. Rules
//! encode systematic misreadings, e.g. glass read as an open passage.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::{ExpectationProvider, ExpectationSample, ProviderError};
use crate::canonical;
use crate::embed::{
    embed_descriptor, Descriptor, DescriptorEntries, EmbedConfig, EmbeddingVector, Term,
};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum RuleError {
    #[error("malformed rule table: {0}")]
    Parse(String),
    #[error("rules[{index}]: {message}")]
    Invalid { index: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternTerm {
    pub term: Term,
    pub min_strength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub descriptor: Descriptor,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationRule {
    pub pattern: Vec<PatternTerm>,
    pub outcomes: Vec<Outcome>,
    pub priority: i64,
}

impl ExpectationRule {
    pub fn matches(&self, percept: &Descriptor) -> bool {
        self.pattern
            .iter()
            .all(|p| percept.weight(&p.term).is_some_and(|w| w >= p.min_strength))
    }
}

/// The rule chosen for a percept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Matched<'a> {
    Rule(&'a ExpectationRule),
    /// No rule applies: expect exactly what is perceived.
    Fallback,
}

impl Matched<'_> {
    pub fn outcomes(&self, percept: &Descriptor) -> Vec<Outcome> {
        match self {
            Matched::Rule(r) => r.outcomes.clone(),
            Matched::Fallback => vec![Outcome {
                descriptor: percept.clone(),
                p: 1.0,
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleTable {
    /// Sorted by priority, highest first.
    rules: Vec<ExpectationRule>,
    digest: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableDoc {
    rules: Vec<RuleDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDoc {
    pattern: Vec<(String, String, f64)>,
    outcomes: Vec<OutcomeDoc>,
    priority: i64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OutcomeDoc {
    entries: DescriptorEntries,
    p: f64,
}

impl RuleTable {
    pub fn from_json(bytes: &[u8]) -> Result<Self, RuleError> {
        let doc: TableDoc =
            serde_json::from_slice(bytes).map_err(|e| RuleError::Parse(e.to_string()))?;
        let mut rules = Vec::with_capacity(doc.rules.len());
        for (index, r) in doc.rules.into_iter().enumerate() {
            let invalid = |message: String| RuleError::Invalid { index, message };
            let mut pattern = Vec::with_capacity(r.pattern.len());
            for (ch, tok, min) in r.pattern {
                if !(0.0..=1.0).contains(&min) {
                    return Err(invalid(format!("pattern minimum {min} out of [0,1]")));
                }
                pattern.push(PatternTerm {
                    term: Term::new(ch, tok),
                    min_strength: min,
                });
            }
            let mut outcomes = Vec::with_capacity(r.outcomes.len());
            for o in r.outcomes {
                let descriptor =
                    Descriptor::try_from(o.entries).map_err(|e| invalid(e.to_string()))?;
                outcomes.push(Outcome { descriptor, p: o.p });
            }
            rules.push(ExpectationRule {
                pattern,
                outcomes,
                priority: r.priority,
            });
        }
        Self::new(rules, canonical::sha256_hex(bytes))
    }

    pub fn new(mut rules: Vec<ExpectationRule>, digest: String) -> Result<Self, RuleError> {
        for (index, r) in rules.iter().enumerate() {
            let invalid = |message: &str| RuleError::Invalid {
                index,
                message: message.to_string(),
            };
            if r.pattern.is_empty() {
                return Err(invalid("pattern must be non-empty"));
            }
            if r.outcomes.is_empty() {
                return Err(invalid("outcomes must be non-empty"));
            }
            if r.outcomes.iter().any(|o| !(o.p.is_finite() && o.p > 0.0)) {
                return Err(invalid("outcome probabilities must be positive"));
            }
            let total: f64 = r.outcomes.iter().map(|o| o.p).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(invalid("outcome probabilities must sum to 1"));
            }
            if r.outcomes.iter().any(|o| o.descriptor.is_empty()) {
                return Err(invalid("outcome descriptors must be non-empty"));
            }
            for (i, a) in r.outcomes.iter().enumerate() {
                if r.outcomes[i + 1..]
                    .iter()
                    .any(|b| b.descriptor == a.descriptor)
                {
                    return Err(invalid("outcome descriptors must be distinct"));
                }
            }
            if rules[..index].iter().any(|o| o.priority == r.priority) {
                return Err(invalid("duplicate priority"));
            }
        }
        rules.sort_by_key(|r| std::cmp::Reverse(r.priority));
        Ok(Self { rules, digest })
    }

    pub fn rules(&self) -> &[ExpectationRule] {
        &self.rules
    }

    /// SHA-256 of the source bytes (or a caller-supplied identity).
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Highest-priority rule whose pattern is contained in `percept`.
    pub fn match_rule(&self, percept: &Descriptor) -> Matched<'_> {
        self.rules
            .iter()
            .find(|r| r.matches(percept))
            .map_or(Matched::Fallback, Matched::Rule)
    }
}

/// Uniform draw in `[0, 1)` from the top 53 bits of one output word.
pub fn uniform01(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Index of the outcome selected by one categorical draw.
pub fn draw_outcome(outcomes: &[Outcome], rng: &mut impl RngCore) -> usize {
    let u = uniform01(rng);
    let mut acc = 0.0;
    for (i, o) in outcomes.iter().enumerate() {
        acc += o.p;
        if u < acc {
            return i;
        }
    }
    outcomes.len() - 1
}

/// `n` independent draws from the matched rule's outcome table.
pub fn sample_expectations(
    table: &RuleTable,
    percept: &Descriptor,
    n: usize,
    rng: &mut impl RngCore,
) -> Vec<ExpectationSample> {
    let outcomes = table.match_rule(percept).outcomes(percept);
    let weight = 1.0 / n as f64;
    (0..n)
        .map(|_| ExpectationSample {
            descriptor: outcomes[draw_outcome(&outcomes, rng)].descriptor.clone(),
            weight,
        })
        .collect()
}

/// Probability-weighted mean of outcome embeddings, renormalized. The
/// analytic limit of sampled expectations.
pub fn expected_embedding(
    table: &RuleTable,
    percept: &Descriptor,
    cfg: &EmbedConfig,
) -> Result<EmbeddingVector, crate::embed::EmbedError> {
    let outcomes = table.match_rule(percept).outcomes(percept);
    let mut acc = vec![0.0; cfg.dimension];
    for o in &outcomes {
        let v = embed_descriptor(&o.descriptor, cfg)?;
        for (a, c) in acc.iter_mut().zip(v.components()) {
            *a += o.p * c;
        }
    }
    EmbeddingVector::normalized(acc)
}

impl ExpectationProvider for RuleTable {
    fn samples(
        &self,
        query: &Descriptor,
        n: usize,
        seed: u64,
    ) -> Result<Vec<ExpectationSample>, ProviderError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(sample_expectations(self, query, n, &mut rng))
    }

    fn identity(&self) -> String {
        format!("rule_table:sha256:{}", self.digest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GLASS: &str = r#"{"rules":[
        {"pattern":[["material","glass",0.5]],"priority":9,
         "outcomes":[{"entries":[["affordance","passable",1.0]],"p":0.8},
                     {"entries":[["affordance","blocked",1.0]],"p":0.2}]},
        {"pattern":[["material","glass",0.1]],"priority":5,
         "outcomes":[{"entries":[["affordance","blocked",1.0]],"p":1.0}]},
        {"pattern":[["geometry","corridor",0.5]],"priority":1,
         "outcomes":[{"entries":[["affordance","passable",1.0]],"p":1.0}]}
    ]}"#;

    fn table() -> RuleTable {
        RuleTable::from_json(GLASS.as_bytes()).unwrap()
    }

    fn d(entries: &[(&str, &str, f64)]) -> Descriptor {
        Descriptor::from_entries(entries.iter().copied()).unwrap()
    }

    #[test]
    fn matching() {
        let t = table();
        let glass = d(&[("material", "glass", 0.9)]);
        assert!(matches!(t.match_rule(&glass), Matched::Rule(r) if r.priority == 9));
        // Below the high-priority minimum, the weaker rule applies.
        let faint = d(&[("material", "glass", 0.3)]);
        assert!(matches!(t.match_rule(&faint), Matched::Rule(r) if r.priority == 5));
        let nothing = d(&[("material", "glass", 0.05)]);
        assert_eq!(t.match_rule(&nothing), Matched::Fallback);
    }

    #[test]
    fn single_rule_threshold_miss_is_fallback() {
        let only = RuleTable::from_json(
            br#"{"rules":[{"pattern":[["material","glass",0.5]],"priority":1,"outcomes":[{"entries":[["affordance","passable",1]],"p":1}]}]}"#,
        )
        .unwrap();
        assert_eq!(
            only.match_rule(&d(&[("material", "glass", 0.3)])),
            Matched::Fallback
        );
    }

    #[test]
    fn validation_errors() {
        let cases = [
            r#"{"rules":[{"pattern":[],"priority":1,"outcomes":[{"entries":[["a","b",1]],"p":1}]}]}"#,
            r#"{"rules":[{"pattern":[["a","b",0.5]],"priority":1,"outcomes":[{"entries":[["a","b",1]],"p":0.7}]}]}"#,
            r#"{"rules":[{"pattern":[["a","b",0.5]],"priority":1,"outcomes":[{"entries":[["a","b",1]],"p":1.2},{"entries":[["a","c",1]],"p":-0.2}]}]}"#,
            r#"{"rules":[{"pattern":[["a","b",0.5]],"priority":1,"outcomes":[{"entries":[["a","b",1]],"p":1}]},
                         {"pattern":[["a","c",0.5]],"priority":1,"outcomes":[{"entries":[["a","b",1]],"p":1}]}]}"#,
            r#"{"rules":[{"pattern":[["a","b",0.5]],"priority":1,"outcomes":[{"entries":[],"p":1}]}]}"#,
        ];
        for c in cases {
            assert!(RuleTable::from_json(c.as_bytes()).is_err(), "{c}");
        }
        assert!(matches!(
            RuleTable::from_json(b"[]"),
            Err(RuleError::Parse(_))
        ));
    }

    #[test]
    fn deterministic_rule_samples_identical() {
        let t = table();
        let corridor = d(&[("geometry", "corridor", 1.0)]);
        let s = t.samples(&corridor, 10, 3).unwrap();
        assert_eq!(s.len(), 10);
        assert!(s
            .iter()
            .all(|x| x.descriptor == d(&[("affordance", "passable", 1.0)])));
        assert!(s.iter().all(|x| (x.weight - 0.1).abs() < 1e-15));
    }

    #[test]
    fn fallback_samples_percept() {
        let t = table();
        let q = d(&[("signage", "exit", 0.4)]);
        assert!(t
            .samples(&q, 5, 0)
            .unwrap()
            .iter()
            .all(|x| x.descriptor == q));
    }

    #[test]
    fn glass_frequency_seed_42() {
        let t = table();
        let glass = d(&[("material", "glass", 0.9)]);
        let s = t.samples(&glass, 1000, 42).unwrap();
        let passable = d(&[("affordance", "passable", 1.0)]);
        let freq = s.iter().filter(|x| x.descriptor == passable).count() as f64 / 1000.0;
        assert!((0.75..=0.85).contains(&freq), "freq {freq}");
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let t = table();
        let glass = d(&[("material", "glass", 0.9)]);
        assert_eq!(
            t.samples(&glass, 50, 7).unwrap(),
            t.samples(&glass, 50, 7).unwrap()
        );
        assert_ne!(
            t.samples(&glass, 50, 7).unwrap(),
            t.samples(&glass, 50, 8).unwrap()
        );
    }

    #[test]
    fn expected_embedding_examples() {
        let t = table();
        let cfg = EmbedConfig::default();
        let corridor = d(&[("geometry", "corridor", 1.0)]);
        let point = expected_embedding(&t, &corridor, &cfg).unwrap();
        assert_eq!(
            point,
            embed_descriptor(&d(&[("affordance", "passable", 1.0)]), &cfg).unwrap()
        );

        let fifty = RuleTable::from_json(
            br#"{"rules":[{"pattern":[["x","y",0]],"priority":0,"outcomes":[
                {"entries":[["a","1",1]],"p":0.5},{"entries":[["b","1",1]],"p":0.5}]}]}"#,
        )
        .unwrap();
        let v = expected_embedding(&fifty, &d(&[("x", "y", 1.0)]), &cfg).unwrap();
        for (_, c) in v.sparse() {
            assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        }

        let q = d(&[("signage", "exit", 0.4), ("lighting", "dim", 0.2)]);
        let fallback = expected_embedding(&t, &q, &cfg).unwrap();
        let direct = embed_descriptor(&q, &cfg).unwrap();
        for (x, y) in fallback.components().iter().zip(direct.components()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn draws_respect_table_order() {
        let outcomes = vec![
            Outcome {
                descriptor: d(&[("a", "1", 1.0)]),
                p: 0.25,
            },
            Outcome {
                descriptor: d(&[("b", "1", 1.0)]),
                p: 0.75,
            },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 2];
        for _ in 0..4000 {
            counts[draw_outcome(&outcomes, &mut rng)] += 1;
        }
        assert!((counts[0] as f64 / 4000.0 - 0.25).abs() < 0.03);
    }
}
