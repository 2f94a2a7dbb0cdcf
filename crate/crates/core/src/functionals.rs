//! Turing functionals as stage-stamped axiom tables.
//!
//! An axiom `(π, p, b, t)` says: any oracle extending `π` outputs bit `b`
//! at position `p`, from stage `t` on. A table is kept *consistent* — no
//! two axioms with comparable prefixes and the same position disagree on
//! the bit — so stagewise evaluation is automatically monotone in both the
//! oracle and the stage: once `Ψ^σ_s ↾ n` converges it never changes.
//!
//! Conflicting axioms are rejected eagerly at insertion rather than being
//! resolved by enumeration order.

use std::collections::{BTreeMap, HashMap};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bits::BitString;

/// A single output commitment: oracles extending `oracle_prefix` emit
/// `bit` at output `position`, visible from stage `enum_stage` on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Axiom {
    pub oracle_prefix: BitString,
    pub position: u32,
    pub bit: u8,
    pub enum_stage: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FunctionalError {
    #[error(
        "conflicting axiom at position {}: existing ({:?} -> {}) vs new ({:?} -> {})",
        new.position, existing.oracle_prefix, existing.bit, new.oracle_prefix, new.bit
    )]
    ConflictingAxiom { existing: Box<Axiom>, new: Box<Axiom> },
}

/// A consistent, stage-stamped axiom set with a name.
///
/// Tables are plain values: mutation happens through `add_axiom`, which
/// either extends the set or rejects the axiom. All evaluation is pure.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FunctionalTable {
    name: String,
    // (position, prefix length) -> prefix -> (bit, earliest stamp)
    index: BTreeMap<(u32, u32), HashMap<BitString, (u8, u32)>>,
    axiom_count: usize,
    max_prefix_len: u32,
}

impl FunctionalTable {
    pub fn new(name: impl Into<String>) -> Self {
        FunctionalTable { name: name.into(), ..FunctionalTable::default() }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn axiom_count(&self) -> usize {
        self.axiom_count
    }

    /// Longest oracle prefix appearing in any axiom. Evaluation on any
    /// oracle only ever reads this many bits.
    pub fn max_prefix_len(&self) -> u32 {
        self.max_prefix_len
    }

    /// Adds an axiom, rejecting it if it contradicts an existing one on a
    /// comparable prefix. A duplicate `(prefix, position, bit)` keeps the
    /// earlier stamp.
    pub fn add_axiom(&mut self, ax: Axiom) -> Result<(), FunctionalError> {
        debug_assert!(ax.bit <= 1);
        let plen = ax.oracle_prefix.len();
        for (&(_, len), bucket) in self.index.range((ax.position, 0)..=(ax.position, u32::MAX)) {
            if len <= plen {
                let key = ax.oracle_prefix.prefix(len);
                if let Some(&(bit, stamp)) = bucket.get(&key) {
                    if bit != ax.bit {
                        return Err(FunctionalError::ConflictingAxiom {
                            existing: Box::new(Axiom {
                                oracle_prefix: key,
                                position: ax.position,
                                bit,
                                enum_stage: stamp,
                            }),
                            new: Box::new(ax),
                        });
                    }
                }
            } else {
                for (key, &(bit, stamp)) in bucket.iter() {
                    if bit != ax.bit && ax.oracle_prefix.is_prefix_of(key) {
                        return Err(FunctionalError::ConflictingAxiom {
                            existing: Box::new(Axiom {
                                oracle_prefix: key.clone(),
                                position: ax.position,
                                bit,
                                enum_stage: stamp,
                            }),
                            new: Box::new(ax),
                        });
                    }
                }
            }
        }
        let bucket = self.index.entry((ax.position, plen)).or_default();
        match bucket.entry(ax.oracle_prefix) {
            std::collections::hash_map::Entry::Occupied(mut e) => {
                let slot = e.get_mut();
                slot.1 = slot.1.min(ax.enum_stage);
            }
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert((ax.bit, ax.enum_stage));
                self.axiom_count += 1;
                self.max_prefix_len = self.max_prefix_len.max(plen);
            }
        }
        Ok(())
    }

    pub fn from_axioms<I: IntoIterator<Item = Axiom>>(
        name: impl Into<String>,
        axioms: I,
    ) -> Result<Self, FunctionalError> {
        let mut t = FunctionalTable::new(name);
        for ax in axioms {
            t.add_axiom(ax)?;
        }
        Ok(t)
    }

    /// The length-bounded identity functional: for every nonempty string τ
    /// up to `max_len`, the axiom (τ, |τ|-1, τ(|τ|-1), |τ|). On an oracle σ
    /// at stage s it outputs σ ↾ min(|σ|, s, max_len).
    pub fn identity_schedule(name: impl Into<String>, max_len: u32) -> Self {
        let mut t = FunctionalTable::new(name);
        for len in 1..=max_len {
            for tau in BitString::all_of_length(len) {
                let bit = tau.get(len - 1);
                t.add_axiom(Axiom { oracle_prefix: tau, position: len - 1, bit, enum_stage: len })
                    .expect("identity schedule is consistent");
            }
        }
        t
    }

    // The output bit at `position` for `oracle` at `stage`, with the least
    // sufficient prefix length among the axioms visible at this stage.
    fn bit_at(&self, oracle: &BitString, stage: u32, position: u32) -> Option<(u8, u32)> {
        let max_len = self.max_prefix_len.min(oracle.len());
        for (&(_, len), bucket) in self.index.range((position, 0)..=(position, max_len)) {
            if let Some(&(bit, stamp)) = bucket.get(&oracle.prefix(len)) {
                if stamp <= stage {
                    return Some((bit, len));
                }
            }
        }
        None
    }

    /// The single output bit at `position`, if some applicable axiom is
    /// visible at this stage.
    pub fn output_bit(&self, oracle: &BitString, stage: u32, position: u32) -> Option<u8> {
        self.bit_at(oracle, stage, position).map(|(bit, _)| bit)
    }

    /// `Ψ^oracle_stage ↾ length`: the first `length` output bits, or `None`
    /// if any position below `length` lacks an applicable axiom visible at
    /// this stage. Output positions must be covered contiguously from 0.
    pub fn eval(&self, oracle: &BitString, stage: u32, length: u32) -> Option<BitString> {
        let mut out = BitString::empty();
        for p in 0..length {
            let (bit, _) = self.bit_at(oracle, stage, p)?;
            out.push(bit);
        }
        Some(out)
    }

    /// The maximum oracle use over the first `length` output positions, or
    /// `None` when the evaluation is undefined. Always at most `|oracle|`.
    pub fn use_of(&self, oracle: &BitString, stage: u32, length: u32) -> Option<u32> {
        let mut max_use = 0;
        for p in 0..length {
            let (_, used) = self.bit_at(oracle, stage, p)?;
            max_use = max_use.max(used);
        }
        Some(max_use)
    }

    /// Axioms in deterministic order: by position, then prefix length,
    /// then prefix.
    pub fn axioms(&self) -> Vec<Axiom> {
        let mut out = Vec::with_capacity(self.axiom_count);
        for (&(position, _), bucket) in &self.index {
            let mut items: Vec<_> = bucket.iter().collect();
            items.sort_by(|a, b| a.0.cmp(b.0));
            for (prefix, &(bit, stamp)) in items {
                out.push(Axiom { oracle_prefix: prefix.clone(), position, bit, enum_stage: stamp });
            }
        }
        out
    }
}

// Wire format: { "name": ..., "axioms": [[prefix, position, bit, stage], ...] }
#[derive(Serialize, Deserialize)]
struct TableWire {
    name: String,
    axioms: Vec<(String, u32, u8, u32)>,
}

impl Serialize for FunctionalTable {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let wire = TableWire {
            name: self.name.clone(),
            axioms: self
                .axioms()
                .into_iter()
                .map(|ax| (ax.oracle_prefix.to_string(), ax.position, ax.bit, ax.enum_stage))
                .collect(),
        };
        wire.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FunctionalTable {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = TableWire::deserialize(deserializer)?;
        let mut t = FunctionalTable::new(wire.name);
        for (prefix, position, bit, stage) in wire.axioms {
            if bit > 1 {
                return Err(D::Error::custom(format!("axiom bit must be 0 or 1, got {bit}")));
            }
            let oracle_prefix: BitString = prefix.parse().map_err(D::Error::custom)?;
            t.add_axiom(Axiom { oracle_prefix, position, bit, enum_stage: stage })
                .map_err(D::Error::custom)?;
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn ax(prefix: &str, position: u32, bit: u8, stage: u32) -> Axiom {
        Axiom { oracle_prefix: bs(prefix), position, bit, enum_stage: stage }
    }

    #[test]
    fn empty_prefix_axiom_applies_to_every_oracle() {
        let t = FunctionalTable::from_axioms("c", [ax("", 0, 1, 0)]).unwrap();
        assert_eq!(t.eval(&bs(""), 0, 1), Some(bs("1")));
        assert_eq!(t.eval(&bs("0101"), 7, 1), Some(bs("1")));
    }

    #[test]
    fn comparable_prefixes_with_different_bits_conflict() {
        let mut t = FunctionalTable::new("c");
        t.add_axiom(ax("0", 0, 0, 3)).unwrap();
        let err = t.add_axiom(ax("01", 0, 1, 5)).unwrap_err();
        match err {
            FunctionalError::ConflictingAxiom { existing, new } => {
                assert_eq!(existing.oracle_prefix, bs("0"));
                assert_eq!(new.oracle_prefix, bs("01"));
            }
        }
        // and the other direction: new prefix below an existing longer one
        let mut t = FunctionalTable::new("c");
        t.add_axiom(ax("01", 2, 1, 5)).unwrap();
        assert!(t.add_axiom(ax("0", 2, 0, 3)).is_err());
        // incomparable prefixes never conflict
        t.add_axiom(ax("10", 2, 0, 1)).unwrap();
        // same position, same bit, comparable: fine, stamps merge to min
        t.add_axiom(ax("01", 2, 1, 2)).unwrap();
        assert!(t.eval(&bs("011"), 2, 3).is_none());
        assert_eq!(t.bit_at(&bs("011"), 2, 2), Some((1, 2)));
    }

    #[test]
    fn identity_schedule_matches_spelled_out_family() {
        // the full redundant family { (σ, n, σ(n), |σ|) : n < |σ| } over
        // |σ| ≤ 5 is consistent and evaluates identically
        let mut redundant = FunctionalTable::new("idr");
        for len in 1..=5u32 {
            for sigma in BitString::all_of_length(len) {
                for n in 0..len {
                    let bit = sigma.get(n);
                    redundant
                        .add_axiom(Axiom {
                            oracle_prefix: sigma.clone(),
                            position: n,
                            bit,
                            enum_stage: len,
                        })
                        .expect("redundant identity family is consistent");
                }
            }
        }
        let minimal = FunctionalTable::identity_schedule("id", 5);
        for len in 0..=5u32 {
            for sigma in BitString::all_of_length(len) {
                for stage in 0..=6u32 {
                    for out_len in 0..=6u32 {
                        assert_eq!(
                            redundant.eval(&sigma, stage, out_len),
                            minimal.eval(&sigma, stage, out_len),
                            "σ={sigma:?} stage={stage} len={out_len}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn identity_eval_examples() {
        let id = FunctionalTable::identity_schedule("id", 6);
        assert_eq!(id.eval(&bs("101"), 3, 3), Some(bs("101")));
        assert_eq!(id.eval(&bs("101"), 3, 4), None);
        // stamp gating: position n needs stage ≥ n+1
        assert_eq!(id.eval(&bs("101"), 2, 3), None);
        assert_eq!(id.eval(&bs("101"), 2, 2), Some(bs("10")));
    }

    #[test]
    fn enum_stage_gates_definedness() {
        let t = FunctionalTable::from_axioms("c", [ax("", 0, 1, 4)]).unwrap();
        assert_eq!(t.eval(&bs("00"), 3, 1), None);
        assert_eq!(t.eval(&bs("00"), 4, 1), Some(bs("1")));
    }

    #[test]
    fn empty_table_is_everywhere_undefined_beyond_zero() {
        let t = FunctionalTable::new("empty");
        assert_eq!(t.eval(&bs("0101"), 9, 1), None);
        assert_eq!(t.eval(&bs("0101"), 9, 0), Some(BitString::empty()));
    }

    #[test]
    fn use_of_examples() {
        let t = FunctionalTable::from_axioms("c", [ax("", 0, 1, 0)]).unwrap();
        assert_eq!(t.use_of(&bs("0110"), 2, 1), Some(0));

        let id = FunctionalTable::identity_schedule("id", 6);
        assert_eq!(id.use_of(&bs("1010"), 6, 3), Some(3));
        assert_eq!(id.use_of(&bs("1010"), 6, 5), None);

        // the least sufficient prefix wins even when longer axioms exist
        let t = FunctionalTable::from_axioms("c", [ax("010", 0, 1, 1), ax("0", 0, 1, 5)]).unwrap();
        assert_eq!(t.use_of(&bs("0101"), 2, 1), Some(3));
        assert_eq!(t.use_of(&bs("0101"), 5, 1), Some(1));
    }

    #[test]
    fn json_roundtrip() {
        let t = FunctionalTable::from_axioms(
            "psi",
            [ax("", 1, 0, 2), ax("01", 0, 1, 0), ax("1", 0, 0, 3)],
        )
        .unwrap();
        let json = serde_json::to_string(&t).unwrap();
        let back: FunctionalTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        // conflicting wire data is rejected
        let bad = r#"{"name":"x","axioms":[["0",0,0,0],["01",0,1,0]]}"#;
        assert!(serde_json::from_str::<FunctionalTable>(bad).is_err());
    }

    fn arb_table() -> impl Strategy<Value = FunctionalTable> {
        proptest::collection::vec(
            (proptest::collection::vec(0u8..2, 0..4), 0u32..4, 0u8..2, 0u32..6),
            0..12,
        )
        .prop_map(|axioms| {
            let mut t = FunctionalTable::new("arb");
            for (prefix, position, bit, stage) in axioms {
                // skip axioms the consistency rule rejects
                let _ = t.add_axiom(Axiom {
                    oracle_prefix: BitString::from_bits(prefix),
                    position,
                    bit,
                    enum_stage: stage,
                });
            }
            t
        })
    }

    proptest! {
        // once defined, extending the oracle or the stage never changes
        // the value
        #[test]
        fn eval_is_monotone(
            t in arb_table(),
            oracle in proptest::collection::vec(0u8..2, 0..6),
            extra in proptest::collection::vec(0u8..2, 0..3),
            stage in 0u32..6,
            bump in 0u32..3,
            len in 0u32..5,
        ) {
            let oracle = BitString::from_bits(oracle);
            if let Some(v) = t.eval(&oracle, stage, len) {
                let mut longer = oracle.clone();
                for b in extra { longer.push(b); }
                prop_assert_eq!(t.eval(&longer, stage + bump, len), Some(v));
            }
        }

        // agreeing with the oracle up to the use reproduces the output
        #[test]
        fn use_bounds_the_relevant_oracle_part(
            t in arb_table(),
            oracle in proptest::collection::vec(0u8..2, 0..6),
            other in proptest::collection::vec(0u8..2, 0..6),
            stage in 0u32..6,
            len in 0u32..5,
        ) {
            let oracle = BitString::from_bits(oracle);
            let other = BitString::from_bits(other);
            if let (Some(v), Some(u)) = (t.eval(&oracle, stage, len), t.use_of(&oracle, stage, len)) {
                prop_assert!(u <= oracle.len());
                if u <= other.len() && other.prefix(u) == oracle.prefix(u) {
                    prop_assert_eq!(t.eval(&other, stage, len), Some(v));
                }
            }
        }
    }
}
