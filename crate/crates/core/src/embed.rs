//! Feature-hashed embedding space shared by percepts, expectations and
//! ground truth.
//!
//! A [`Descriptor`] is a weighted set of `channel:token` terms. It is
//! embedded by hashing each term into one of `dimension` buckets, summing
//! weights per bucket, and L2-normalizing. All weights are positive, so
//! every embedding lives in the non-negative orthant and cosine
//! similarity between two embeddings is always in `[0, 1]`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::canonical;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("cannot embed an empty descriptor")]
    EmptyDescriptor,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cannot aggregate an empty list of embeddings")]
    EmptyList,
    #[error("embedding dimension must be at least 2, got {0}")]
    InvalidDimension(usize),
    #[error("invalid weight {weight} for {term}")]
    InvalidWeight { term: String, weight: f64 },
    #[error("duplicate term {0}")]
    DuplicateTerm(String),
    #[error("invalid embedding: {0}")]
    InvalidVector(&'static str),
}

/// A `channel:token` pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term {
    pub channel: String,
    pub token: String,
}

impl Term {
    pub fn new(channel: impl Into<String>, token: impl Into<String>) -> Self {
        Self {
            channel: channel.into(),
            token: token.into(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.channel, self.token)
    }
}

/// Weighted set of terms. Weights are finite and strictly positive.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Descriptor {
    entries: BTreeMap<Term, f64>,
}

impl Descriptor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a descriptor from `(channel, token, weight)` triples.
    ///
    /// Zero weights are dropped; negative or non-finite weights and
    /// repeated terms are rejected.
    pub fn from_entries<I, C, T>(entries: I) -> Result<Self, EmbedError>
    where
        I: IntoIterator<Item = (C, T, f64)>,
        C: Into<String>,
        T: Into<String>,
    {
        let mut d = Self::new();
        for (c, t, w) in entries {
            d.insert(Term::new(c, t), w)?;
        }
        Ok(d)
    }

    pub fn insert(&mut self, term: Term, weight: f64) -> Result<(), EmbedError> {
        if !weight.is_finite() || weight < 0.0 {
            return Err(EmbedError::InvalidWeight {
                term: term.to_string(),
                weight,
            });
        }
        if self.entries.contains_key(&term) {
            return Err(EmbedError::DuplicateTerm(term.to_string()));
        }
        if weight > 0.0 {
            self.entries.insert(term, weight);
        }
        Ok(())
    }

    /// Inserts `term`, keeping the larger weight if it is already present.
    /// Non-positive weights are ignored.
    pub fn insert_max(&mut self, term: Term, weight: f64) {
        if !(weight.is_finite() && weight > 0.0) {
            return;
        }
        let slot = self.entries.entry(term).or_insert(weight);
        if weight > *slot {
            *slot = weight;
        }
    }

    /// Union with max-merge on shared terms.
    pub fn merge_max(&mut self, other: &Descriptor) {
        for (term, &w) in &other.entries {
            self.insert_max(term.clone(), w);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn weight(&self, term: &Term) -> Option<f64> {
        self.entries.get(term).copied()
    }

    pub fn max_weight(&self) -> f64 {
        self.entries.values().copied().fold(0.0, f64::max)
    }

    /// Entries in term order.
    pub fn iter(&self) -> impl Iterator<Item = (&Term, f64)> {
        self.entries.iter().map(|(t, &w)| (t, w))
    }

    /// Entries sorted by weight descending, then term ascending.
    pub fn ranked(&self) -> Vec<(Term, f64)> {
        let mut v: Vec<(Term, f64)> = self.entries.iter().map(|(t, &w)| (t.clone(), w)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v
    }

    /// Wire form: `[["channel","token",weight],...]` in term order.
    pub fn to_json(&self) -> Value {
        Value::Array(
            self.entries
                .iter()
                .map(|(t, &w)| {
                    Value::Array(vec![
                        Value::String(t.channel.clone()),
                        Value::String(t.token.clone()),
                        canonical::float(w),
                    ])
                })
                .collect(),
        )
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(t, w)| format!("{t}={w}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Wire/file representation of a descriptor entry list.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(transparent)]
pub struct DescriptorEntries(pub Vec<(String, String, f64)>);

impl TryFrom<DescriptorEntries> for Descriptor {
    type Error = EmbedError;

    fn try_from(value: DescriptorEntries) -> Result<Self, Self::Error> {
        Descriptor::from_entries(value.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedConfig {
    #[serde(default = "EmbedConfig::default_dimension")]
    pub dimension: usize,
    #[serde(default)]
    pub hash_seed: u64,
}

impl EmbedConfig {
    fn default_dimension() -> usize {
        1024
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dimension < 2 {
            return Err(EmbedError::InvalidDimension(self.dimension));
        }
        Ok(())
    }
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            dimension: Self::default_dimension(),
            hash_seed: 0,
        }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Platform-independent 64-bit hash.
///
/// FNV-1a over the little-endian bytes of `seed` followed by `bytes`,
/// then passed through the SplitMix64 finalizer so that low bits are
/// well mixed before the modulo reduction.
pub fn stable_hash(bytes: &[u8], seed: u64) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Bucket index of a term: `stable_hash("channel:token", seed) mod dimension`.
pub fn term_index(term: &Term, cfg: &EmbedConfig) -> usize {
    let key = format!("{}:{}", term.channel, term.token);
    (stable_hash(key.as_bytes(), cfg.hash_seed) % cfg.dimension as u64) as usize
}

/// Non-negative unit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    components: Vec<f64>,
}

impl EmbeddingVector {
    /// Normalizes `raw` to unit length. Rejects negative, non-finite or
    /// all-zero input.
    pub fn normalized(raw: Vec<f64>) -> Result<Self, EmbedError> {
        if raw.len() < 2 {
            return Err(EmbedError::InvalidDimension(raw.len()));
        }
        if raw.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(EmbedError::InvalidVector(
                "components must be finite and non-negative",
            ));
        }
        let norm = raw.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(EmbedError::InvalidVector("zero vector"));
        }
        Ok(Self {
            components: raw.into_iter().map(|c| c / norm).collect(),
        })
    }

    /// Rebuilds a stored vector from sparse `(index, value)` pairs. Values
    /// are kept bit-exact; the norm must already be 1 within 1e-9.
    pub fn from_sparse(dimension: usize, pairs: &[(usize, f64)]) -> Result<Self, EmbedError> {
        if dimension < 2 {
            return Err(EmbedError::InvalidDimension(dimension));
        }
        let mut components = vec![0.0; dimension];
        for &(i, v) in pairs {
            if i >= dimension {
                return Err(EmbedError::InvalidVector("index out of range"));
            }
            if !v.is_finite() || v < 0.0 {
                return Err(EmbedError::InvalidVector(
                    "components must be finite and non-negative",
                ));
            }
            components[i] = v;
        }
        let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(EmbedError::InvalidVector("not a unit vector"));
        }
        Ok(Self { components })
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    /// Non-zero components as `(index, value)` in index order.
    pub fn sparse(&self) -> Vec<(usize, f64)> {
        self.components
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(i, &c)| (i, c))
            .collect()
    }

    pub fn to_sparse_json(&self) -> Value {
        Value::Array(
            self.sparse()
                .into_iter()
                .map(|(i, c)| Value::Array(vec![Value::from(i as u64), canonical::float(c)]))
                .collect(),
        )
    }
}

pub fn embed_descriptor(d: &Descriptor, cfg: &EmbedConfig) -> Result<EmbeddingVector, EmbedError> {
    cfg.validate()?;
    if d.is_empty() {
        return Err(EmbedError::EmptyDescriptor);
    }
    let mut raw = vec![0.0; cfg.dimension];
    for (term, w) in d.iter() {
        raw[term_index(term, cfg)] += w;
    }
    EmbeddingVector::normalized(raw)
}

/// Cosine similarity of two unit vectors, in `[0, 1]`.
pub fn cosine_sim(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dimension() != b.dimension() {
        return Err(EmbedError::DimensionMismatch(a.dimension(), b.dimension()));
    }
    let dot: f64 = a
        .components
        .iter()
        .zip(&b.components)
        .map(|(x, y)| x * y)
        .sum();
    // Rounding can push the dot product of identical unit vectors a few ulps past 1.
    Ok(dot.clamp(0.0, 1.0))
}

/// Component-wise mean of the inputs, renormalized.
pub fn aggregate_embeddings(vs: &[EmbeddingVector]) -> Result<EmbeddingVector, EmbedError> {
    let first = vs.first().ok_or(EmbedError::EmptyList)?;
    let dim = first.dimension();
    let mut sum = vec![0.0; dim];
    for v in vs {
        if v.dimension() != dim {
            return Err(EmbedError::DimensionMismatch(dim, v.dimension()));
        }
        for (s, c) in sum.iter_mut().zip(&v.components) {
            *s += c;
        }
    }
    let n = vs.len() as f64;
    EmbeddingVector::normalized(sum.into_iter().map(|s| s / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> EmbedConfig {
        EmbedConfig::default()
    }

    fn d(entries: &[(&str, &str, f64)]) -> Descriptor {
        Descriptor::from_entries(entries.iter().map(|&(c, t, w)| (c, t, w))).unwrap()
    }

    /// Asserts that the given terms hash to pairwise distinct buckets.
    fn assert_no_collision(terms: &[(&str, &str)], cfg: &EmbedConfig) {
        let idx: Vec<usize> = terms
            .iter()
            .map(|&(c, t)| term_index(&Term::new(c, t), cfg))
            .collect();
        for i in 0..idx.len() {
            for j in i + 1..idx.len() {
                assert_ne!(idx[i], idx[j], "fixture terms collide");
            }
        }
    }

    #[test]
    fn stable_hash_is_pinned() {
        // Frozen from an independent implementation; a change here moves every embedding.
        assert_eq!(stable_hash(b"", 0), 6603144262649002859);
        assert_eq!(stable_hash(b"signage:exit", 0), 13864381340105945647);
        assert_eq!(stable_hash(b"signage:exit", 1), 9340317252973510556);
        assert_eq!(term_index(&Term::new("affordance", "passable"), &cfg()), 7);
    }

    #[test]
    fn single_entry_is_one_hot() {
        let v = embed_descriptor(&d(&[("signage", "exit", 2.0)]), &cfg()).unwrap();
        let idx = term_index(&Term::new("signage", "exit"), &cfg());
        assert_eq!(v.sparse(), vec![(idx, 1.0)]);
    }

    #[test]
    fn three_four_five() {
        assert_no_collision(&[("a", "x"), ("b", "y")], &cfg());
        let v = embed_descriptor(&d(&[("a", "x", 3.0), ("b", "y", 4.0)]), &cfg()).unwrap();
        let ia = term_index(&Term::new("a", "x"), &cfg());
        let ib = term_index(&Term::new("b", "y"), &cfg());
        assert!((v.components()[ia] - 0.6).abs() < 1e-12);
        assert!((v.components()[ib] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn empty_descriptor_is_rejected() {
        assert_eq!(
            embed_descriptor(&Descriptor::new(), &cfg()),
            Err(EmbedError::EmptyDescriptor)
        );
    }

    #[test]
    fn zero_weights_are_omitted_and_duplicates_rejected() {
        let desc = d(&[("a", "x", 0.0), ("b", "y", 1.0)]);
        assert_eq!(desc.len(), 1);
        assert!(Descriptor::from_entries([("a", "x", 1.0), ("a", "x", 2.0)]).is_err());
        assert!(Descriptor::from_entries([("a", "x", -1.0)]).is_err());
    }

    #[test]
    fn cosine_examples() {
        let c = cfg();
        assert_no_collision(&[("a", "1"), ("b", "1")], &c);
        let v = embed_descriptor(&d(&[("a", "1", 1.0)]), &c).unwrap();
        let w = embed_descriptor(&d(&[("b", "1", 1.0)]), &c).unwrap();
        let vw = embed_descriptor(&d(&[("a", "1", 1.0), ("b", "1", 1.0)]), &c).unwrap();
        assert!((cosine_sim(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_sim(&v, &w).unwrap(), 0.0);
        assert!((cosine_sim(&vw, &v).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let a = embed_descriptor(
            &d(&[("a", "1", 1.0)]),
            &EmbedConfig {
                dimension: 8,
                hash_seed: 0,
            },
        )
        .unwrap();
        let b = embed_descriptor(
            &d(&[("a", "1", 1.0)]),
            &EmbedConfig {
                dimension: 16,
                hash_seed: 0,
            },
        )
        .unwrap();
        assert_eq!(
            cosine_sim(&a, &b),
            Err(EmbedError::DimensionMismatch(8, 16))
        );
        assert_eq!(
            aggregate_embeddings(&[a, b]).unwrap_err(),
            EmbedError::DimensionMismatch(8, 16)
        );
    }

    #[test]
    fn aggregate_examples() {
        let c = cfg();
        let v = embed_descriptor(&d(&[("a", "1", 1.0), ("b", "2", 0.5)]), &c).unwrap();
        let agg = aggregate_embeddings(&vec![v.clone(); 5]).unwrap();
        for (x, y) in agg.components().iter().zip(v.components()) {
            assert!((x - y).abs() < 1e-12);
        }
        let p = embed_descriptor(&d(&[("a", "1", 1.0)]), &c).unwrap();
        let q = embed_descriptor(&d(&[("b", "1", 1.0)]), &c).unwrap();
        let pq = aggregate_embeddings(&[p, q]).unwrap();
        let nz = pq.sparse();
        assert_eq!(nz.len(), 2);
        for (_, x) in nz {
            assert!((x - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        }
        assert_eq!(aggregate_embeddings(&[]), Err(EmbedError::EmptyList));
    }

    #[test]
    fn small_dimension_rejected() {
        let bad = EmbedConfig {
            dimension: 1,
            hash_seed: 0,
        };
        assert_eq!(
            embed_descriptor(&d(&[("a", "1", 1.0)]), &bad),
            Err(EmbedError::InvalidDimension(1))
        );
    }

    fn arb_descriptor() -> impl Strategy<Value = Vec<(String, String, f64)>> {
        prop::collection::btree_map(("[a-e]", "[a-z]{1,4}"), 0.01f64..10.0, 1..12)
            .prop_map(|m| m.into_iter().map(|((c, t), w)| (c, t, w)).collect())
    }

    proptest! {
        #[test]
        fn embedding_is_unit_and_nonnegative(entries in arb_descriptor(), seed in any::<u64>()) {
            let c = EmbedConfig { dimension: 64, hash_seed: seed };
            let v = embed_descriptor(&Descriptor::from_entries(entries).unwrap(), &c).unwrap();
            let norm: f64 = v.components().iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-9);
            prop_assert!(v.components().iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn embedding_is_scale_and_order_invariant(entries in arb_descriptor(), scale in 0.001f64..1000.0) {
            let c = EmbedConfig { dimension: 64, hash_seed: 7 };
            let base = embed_descriptor(&Descriptor::from_entries(entries.clone()).unwrap(), &c).unwrap();
            let scaled: Vec<_> = entries.iter().rev().map(|(ch, t, w)| (ch.clone(), t.clone(), w * scale)).collect();
            let other = embed_descriptor(&Descriptor::from_entries(scaled).unwrap(), &c).unwrap();
            for (x, y) in base.components().iter().zip(other.components()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn cosine_is_bounded_and_symmetric(a in arb_descriptor(), b in arb_descriptor()) {
            let c = EmbedConfig { dimension: 32, hash_seed: 0 };
            let va = embed_descriptor(&Descriptor::from_entries(a).unwrap(), &c).unwrap();
            let vb = embed_descriptor(&Descriptor::from_entries(b).unwrap(), &c).unwrap();
            let ab = cosine_sim(&va, &vb).unwrap();
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab, cosine_sim(&vb, &va).unwrap());
            let disjoint = va.components().iter().zip(vb.components()).all(|(x, y)| x * y == 0.0);
            prop_assert_eq!(disjoint, ab == 0.0);
        }

        #[test]
        fn aggregate_is_permutation_invariant(list in prop::collection::vec(arb_descriptor(), 1..6)) {
            let c = EmbedConfig { dimension: 32, hash_seed: 3 };
            let vs: Vec<_> = list.into_iter()
                .map(|e| embed_descriptor(&Descriptor::from_entries(e).unwrap(), &c).unwrap())
                .collect();
            let mut rev = vs.clone();
            rev.reverse();
            let a = aggregate_embeddings(&vs).unwrap();
            let b = aggregate_embeddings(&rev).unwrap();
            for (x, y) in a.components().iter().zip(b.components()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
