//! The length-of-agreement function and its bookkeeping.
//!
//! For a functional Ψ, a source class approximated by `src` and a target
//! class approximated by `tgt`, the stage-`s` length of agreement is the
//! least `y` such that some length-`s` member σ of the stage-`s` source
//! tree has `Ψ^σ_s ↾ (y+1)` undefined or outside the stage-`s` target
//! tree. Equivalently, it is the greatest `n` with `Ψ^σ_s ↾ n` defined and
//! in the target tree for *every* frontier σ.
//!
//! Outputs longer than the stage cannot be certified by the stage-`s`
//! target approximation (they lie beyond its horizon) and count as outside
//! it, so the length of agreement never exceeds the stage. Strategies act
//! only at *expansionary* stages, where the running maximum of the length
//! of agreement strictly increases.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::functionals::FunctionalTable;
use crate::trees::TreeSpec;

/// A stage value of the length of agreement.
///
/// When the source frontier is empty the μ-search has no witness and the
/// value is "infinite"; degenerate descriptions of empty classes are
/// tolerated and surfaced as [`Ell::EmptySource`], which callers replace
/// with a configured sentinel (the construction uses budget + 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ell {
    Finite(u32),
    EmptySource,
}

impl Ell {
    pub fn value_or(self, sentinel: u32) -> u32 {
        match self {
            Ell::Finite(v) => v,
            Ell::EmptySource => sentinel,
        }
    }

    pub fn is_empty_source(self) -> bool {
        matches!(self, Ell::EmptySource)
    }
}

/// Computes the stage-`stage` length of agreement.
///
/// Evaluation on a frontier string only reads as many oracle bits as the
/// longest axiom prefix in the table, so the frontier is enumerated only
/// up to that depth.
pub fn length_of_agreement(
    psi: &FunctionalTable,
    src: &TreeSpec,
    tgt: &TreeSpec,
    stage: u32,
) -> Ell {
    let depth = stage.min(psi.max_prefix_len());
    let prefixes = src.level_set(stage, depth).expect("depth is at most the stage");
    if prefixes.is_empty() {
        return Ell::EmptySource;
    }
    // min over frontier strings of the greatest certified output length,
    // capped by the stage horizon
    let mut min_good = stage;
    for rho in &prefixes {
        let mut out = BitString::empty();
        let mut good = 0;
        while good < min_good {
            let Some(bit) = psi.output_bit(rho, stage, good) else { break };
            out.push(bit);
            if !tgt.canonical_member(stage, &out).expect("output length is at most the stage") {
                break;
            }
            good += 1;
        }
        if good < min_good {
            min_good = good;
            if min_good == 0 {
                break;
            }
        }
    }
    Ell::Finite(min_good)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AgreementError {
    #[error("stage {got} recorded after stage {last}; stages must increase")]
    OutOfOrderStage { last: u32, got: u32 },
}

/// One history record: ℓ at the stage, the running maximum ℓ̄, and whether
/// the stage was expansionary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EllSample {
    pub stage: u32,
    pub ell: u32,
    pub ellbar: u32,
    pub expansionary: bool,
}

/// Append-only per-(functional, source, target) record of the length of
/// agreement across stages.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementHistory {
    functional: String,
    /// Value recorded in place of an infinite ℓ on an empty source frontier.
    sentinel: u32,
    samples: Vec<EllSample>,
    saw_empty_source: bool,
}

impl AgreementHistory {
    pub fn new(functional: impl Into<String>, sentinel: u32) -> Self {
        AgreementHistory {
            functional: functional.into(),
            sentinel,
            samples: Vec::new(),
            saw_empty_source: false,
        }
    }

    pub fn functional(&self) -> &str {
        &self.functional
    }

    pub fn samples(&self) -> &[EllSample] {
        &self.samples
    }

    pub fn last(&self) -> Option<&EllSample> {
        self.samples.last()
    }

    pub fn saw_empty_source(&self) -> bool {
        self.saw_empty_source
    }

    pub fn expansionary_stages(&self) -> impl Iterator<Item = u32> + '_ {
        self.samples.iter().filter(|s| s.expansionary).map(|s| s.stage)
    }

    /// Appends a precomputed ℓ value. Stage 0 (and more generally the first
    /// recorded stage) is never expansionary; afterwards a stage is
    /// expansionary exactly when ℓ̄ strictly increases.
    pub fn record(&mut self, stage: u32, ell: Ell) -> Result<EllSample, AgreementError> {
        if let Some(last) = self.samples.last() {
            if stage <= last.stage {
                return Err(AgreementError::OutOfOrderStage { last: last.stage, got: stage });
            }
        }
        if ell.is_empty_source() {
            self.saw_empty_source = true;
        }
        let value = ell.value_or(self.sentinel);
        let sample = match self.samples.last() {
            None => EllSample { stage, ell: value, ellbar: value, expansionary: false },
            Some(prev) => EllSample {
                stage,
                ell: value,
                ellbar: prev.ellbar.max(value),
                expansionary: value > prev.ellbar,
            },
        };
        self.samples.push(sample);
        Ok(sample)
    }

    /// Computes ℓ for the given stage and appends it.
    pub fn record_stage(
        &mut self,
        psi: &FunctionalTable,
        src: &TreeSpec,
        tgt: &TreeSpec,
        stage: u32,
    ) -> Result<EllSample, AgreementError> {
        self.record(stage, length_of_agreement(psi, src, tgt, stage))
    }

    /// One JSON record per stage, in stage order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("sample serializes"));
            out.push('\n');
        }
        out
    }
}

/// The Bad/Good split of the stage-0 source tree under a fixed output
/// length `n`: σ is *good* when `Ψ^σ_{|σ|} ↾ n` converges and lies in the
/// stage-|σ| target tree, *bad* otherwise.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BadGood {
    pub bad: BTreeSet<BitString>,
    pub good: BTreeSet<BitString>,
}

impl BadGood {
    /// Every prefix of a bad node is bad.
    pub fn is_bad_downward_closed(&self) -> bool {
        self.bad.iter().filter(|s| !s.is_empty()).all(|s| self.bad.contains(&s.prefix(s.len() - 1)))
    }

    /// Within the examined domain, every extension of a good node is good.
    pub fn is_good_upward_closed(&self) -> bool {
        self.good
            .iter()
            .all(|s| [s.extended(0), s.extended(1)].iter().all(|c| !self.bad.contains(c)))
    }
}

/// Partitions the stage-0 source tree members of length ≤ `depth` into
/// bad and good strings for output length `n`.
pub fn bad_good_partition(
    psi: &FunctionalTable,
    src: &TreeSpec,
    tgt: &TreeSpec,
    n: u32,
    depth: u32,
) -> BadGood {
    assert!(depth >= n, "partition depth must be at least the output length");
    let mut result = BadGood { bad: BTreeSet::new(), good: BTreeSet::new() };
    let mut frontier = vec![BitString::empty()];
    while let Some(sigma) = frontier.pop() {
        if !src.member_at_zero(&sigma) {
            continue;
        }
        let stage = sigma.len();
        let good = n <= stage
            && psi
                .eval(&sigma, stage, n)
                .map(|tau| {
                    tgt.canonical_member(stage, &tau).expect("output length is at most the stage")
                })
                .unwrap_or(false);
        if good {
            result.good.insert(sigma.clone());
        } else {
            result.bad.insert(sigma.clone());
        }
        if sigma.len() < depth {
            frontier.push(sigma.extended(0));
            frontier.push(sigma.extended(1));
        }
    }
    result
}

/// Tail classification of an ℓ trace against a threshold `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stabilization {
    /// ℓ ≥ n from the switch stage through the budget.
    EventuallyAbove,
    /// ℓ < n from the switch stage through the budget.
    EventuallyBelow,
    /// The comparison still flips inside the final quarter of the budget.
    /// A budget-relative verdict, not a disproof of eventual stability.
    Unstable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilizationReport {
    pub classification: Stabilization,
    /// Least stage from which the comparison against `n` never flips again
    /// within the budget.
    pub switch_stage: u32,
}

impl fmt::Display for StabilizationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} from stage {}", self.classification, self.switch_stage)
    }
}

/// Traces ℓ over stages `0..=budget` and locates the last stage at which
/// the comparison `ℓ(s) ≥ n` flips.
pub fn stabilization_probe(
    psi: &FunctionalTable,
    src: &TreeSpec,
    tgt: &TreeSpec,
    n: u32,
    budget: u32,
) -> StabilizationReport {
    assert!(budget >= 1);
    let ells: Vec<u32> =
        (0..=budget).map(|s| length_of_agreement(psi, src, tgt, s).value_or(budget + 1)).collect();
    let tail_above = ells[budget as usize] >= n;
    let mut switch_stage = 0;
    for s in (0..=budget).rev() {
        if (ells[s as usize] >= n) != tail_above {
            switch_stage = s + 1;
            break;
        }
    }
    let threshold = budget - budget / 4;
    let classification = if switch_stage > threshold {
        Stabilization::Unstable
    } else if tail_above {
        Stabilization::EventuallyAbove
    } else {
        Stabilization::EventuallyBelow
    };
    StabilizationReport { classification, switch_stage }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::Axiom;
    use crate::trees::{forbidden_spec, sep_spec, EnumSchedule};

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn ax(prefix: &str, position: u32, bit: u8, stage: u32) -> Axiom {
        Axiom { oracle_prefix: bs(prefix), position, bit, enum_stage: stage }
    }

    fn forb(entries: &[(&str, u32)]) -> TreeSpec {
        forbidden_spec(entries.iter().map(|(n, t)| (bs(n), *t)))
    }

    #[test]
    fn empty_table_has_zero_agreement() {
        let psi = FunctionalTable::new("empty");
        for s in 0..6 {
            assert_eq!(
                length_of_agreement(&psi, &TreeSpec::Full, &TreeSpec::Full, s),
                Ell::Finite(0)
            );
        }
    }

    #[test]
    fn identity_on_full_grows_with_the_stage() {
        let psi = FunctionalTable::identity_schedule("id", 8);
        for s in 0..=8 {
            assert_eq!(
                length_of_agreement(&psi, &TreeSpec::Full, &TreeSpec::Full, s),
                Ell::Finite(s)
            );
        }
    }

    #[test]
    fn forbidden_node_kills_agreement_at_its_appearance_stage() {
        let psi = FunctionalTable::from_axioms("c", [ax("", 0, 1, 0)]).unwrap();
        let tgt = forb(&[("1", 5)]);
        for s in 1..5 {
            assert_eq!(length_of_agreement(&psi, &TreeSpec::Full, &tgt, s), Ell::Finite(1));
        }
        for s in 5..=20 {
            assert_eq!(length_of_agreement(&psi, &TreeSpec::Full, &tgt, s), Ell::Finite(0));
        }
    }

    #[test]
    fn empty_source_is_flagged() {
        let src = forb(&[("", 0)]);
        let psi = FunctionalTable::new("empty");
        assert_eq!(length_of_agreement(&psi, &src, &TreeSpec::Full, 3), Ell::EmptySource);
        let mut hist = AgreementHistory::new("empty", 11);
        hist.record(0, Ell::EmptySource).unwrap();
        assert_eq!(hist.last().unwrap().ell, 11);
        assert!(hist.saw_empty_source());
    }

    #[test]
    fn record_folds_ellbar_and_detects_expansion() {
        let mut hist = AgreementHistory::new("f", 99);
        let trace = [0, 0, 2, 1, 3];
        for (stage, ell) in trace.iter().enumerate() {
            hist.record(stage as u32, Ell::Finite(*ell)).unwrap();
        }
        let ellbars: Vec<u32> = hist.samples().iter().map(|s| s.ellbar).collect();
        assert_eq!(ellbars, vec![0, 0, 2, 2, 3]);
        let exp: Vec<u32> = hist.expansionary_stages().collect();
        assert_eq!(exp, vec![2, 4]);
    }

    #[test]
    fn constant_trace_never_expands_and_increasing_always_does() {
        let mut hist = AgreementHistory::new("f", 99);
        for s in 0..5 {
            hist.record(s, Ell::Finite(7)).unwrap();
        }
        assert_eq!(hist.expansionary_stages().count(), 0);

        let mut hist = AgreementHistory::new("f", 99);
        for s in 0..5 {
            hist.record(s, Ell::Finite(s)).unwrap();
        }
        let exp: Vec<u32> = hist.expansionary_stages().collect();
        assert_eq!(exp, vec![1, 2, 3, 4]);
    }

    #[test]
    fn out_of_order_stages_are_rejected() {
        let mut hist = AgreementHistory::new("f", 99);
        hist.record(3, Ell::Finite(0)).unwrap();
        assert_eq!(
            hist.record(3, Ell::Finite(1)),
            Err(AgreementError::OutOfOrderStage { last: 3, got: 3 })
        );
    }

    #[test]
    fn jsonl_has_exactly_the_four_fields() {
        let mut hist = AgreementHistory::new("f", 99);
        hist.record(0, Ell::Finite(0)).unwrap();
        hist.record(1, Ell::Finite(2)).unwrap();
        let jsonl = hist.to_jsonl();
        let lines: Vec<&str> = jsonl.lines().collect();
        assert_eq!(
            lines,
            vec![
                r#"{"stage":0,"ell":0,"ellbar":0,"expansionary":false}"#,
                r#"{"stage":1,"ell":2,"ellbar":2,"expansionary":true}"#,
            ]
        );
    }

    #[test]
    fn bad_good_identity_splits_at_the_output_length() {
        let psi = FunctionalTable::identity_schedule("id", 6);
        let part = bad_good_partition(&psi, &TreeSpec::Full, &TreeSpec::Full, 2, 4);
        for sigma in part.bad.iter() {
            assert!(sigma.len() < 2, "unexpected bad node {sigma:?}");
        }
        for sigma in part.good.iter() {
            assert!(sigma.len() >= 2);
        }
        assert_eq!(part.bad.len() + part.good.len(), 31);
        assert!(part.is_bad_downward_closed());
        assert!(part.is_good_upward_closed());
    }

    #[test]
    fn bad_good_empty_table_has_no_good_nodes() {
        let psi = FunctionalTable::new("empty");
        let part = bad_good_partition(&psi, &TreeSpec::Full, &TreeSpec::Full, 1, 3);
        assert!(part.good.is_empty());
    }

    #[test]
    fn bad_good_zero_length_restriction_is_everywhere_good() {
        let psi = FunctionalTable::new("empty");
        let part = bad_good_partition(&psi, &TreeSpec::Full, &TreeSpec::Full, 0, 3);
        assert!(part.bad.is_empty());
        assert_eq!(part.good.len(), 15);
    }

    #[test]
    fn bad_good_closure_can_fail_when_the_target_dies_late() {
        // the constant output "1" is certified at shallow stages and dies
        // at stage 2, so deep nodes are bad while "0" is good
        let psi = FunctionalTable::from_axioms("c", [ax("", 0, 1, 0)]).unwrap();
        let tgt = forb(&[("1", 2)]);
        let part = bad_good_partition(&psi, &TreeSpec::Full, &tgt, 1, 4);
        assert!(part.good.contains(&bs("0")));
        assert!(part.bad.contains(&bs("00")));
        assert!(!part.is_bad_downward_closed());
        assert!(!part.is_good_upward_closed());
    }

    #[test]
    fn bad_good_respects_source_membership() {
        let src =
            sep_spec(EnumSchedule::from_entries([(0, 0)]), EnumSchedule::from_entries([])).unwrap();
        let psi = FunctionalTable::identity_schedule("id", 4);
        let part = bad_good_partition(&psi, &src, &TreeSpec::Full, 1, 3);
        for sigma in part.bad.iter().chain(part.good.iter()) {
            if !sigma.is_empty() {
                assert_eq!(sigma.get(0), 1, "strings starting 0 are outside the source");
            }
        }
    }

    #[test]
    fn probe_classifies_the_three_examples() {
        let id = FunctionalTable::identity_schedule("id", 8);
        let r = stabilization_probe(&id, &TreeSpec::Full, &TreeSpec::Full, 3, 20);
        assert_eq!(r.classification, Stabilization::EventuallyAbove);
        assert!(r.switch_stage <= 3);

        let psi = FunctionalTable::from_axioms("c", [ax("", 0, 1, 0)]).unwrap();
        let tgt = forb(&[("1", 5)]);
        let r = stabilization_probe(&psi, &TreeSpec::Full, &tgt, 1, 20);
        assert_eq!(r.classification, Stabilization::EventuallyBelow);
        assert_eq!(r.switch_stage, 5);

        let empty = FunctionalTable::new("empty");
        let r = stabilization_probe(&empty, &TreeSpec::Full, &TreeSpec::Full, 0, 8);
        assert_eq!(r.classification, Stabilization::EventuallyAbove);
        assert_eq!(r.switch_stage, 0);
    }

    #[test]
    fn probe_reports_instability_when_the_flip_is_late() {
        // output dies exactly inside the final quarter of the budget
        let psi = FunctionalTable::from_axioms("c", [ax("", 0, 1, 0)]).unwrap();
        let tgt = forb(&[("1", 19)]);
        let r = stabilization_probe(&psi, &TreeSpec::Full, &tgt, 1, 20);
        assert_eq!(r.classification, Stabilization::Unstable);
        assert_eq!(r.switch_stage, 19);
    }

    // the note after the μ-search definition: ℓ(s) ≥ n iff every frontier
    // string's restricted output is defined and in the target tree;
    // recomputed here directly from the brute-force frontier
    #[test]
    fn characterization_cross_check_on_small_instances() {
        let specs: Vec<TreeSpec> = vec![
            TreeSpec::Full,
            forb(&[("1", 2), ("001", 4)]),
            sep_spec(EnumSchedule::from_entries([(1, 2)]), EnumSchedule::from_entries([(0, 3)]))
                .unwrap(),
        ];
        let tables = vec![
            FunctionalTable::new("empty"),
            FunctionalTable::identity_schedule("id", 6),
            FunctionalTable::from_axioms("c", [ax("", 0, 1, 0), ax("1", 1, 0, 2)]).unwrap(),
        ];
        for psi in &tables {
            for src in &specs {
                for tgt in &specs {
                    for stage in 0..=6u32 {
                        let direct = {
                            let frontier = src.paths_oracle(stage, stage).unwrap();
                            if frontier.is_empty() {
                                Ell::EmptySource
                            } else {
                                let mut best = 0;
                                for n in (0..=stage).rev() {
                                    let all_good = frontier.iter().all(|sigma| {
                                        psi.eval(sigma, stage, n).is_some_and(|tau| {
                                            tgt.canonical_member(stage, &tau).unwrap()
                                        })
                                    });
                                    if all_good {
                                        best = n;
                                        break;
                                    }
                                }
                                Ell::Finite(best)
                            }
                        };
                        assert_eq!(
                            length_of_agreement(psi, src, tgt, stage),
                            direct,
                            "psi={} src={src:?} tgt={tgt:?} stage={stage}",
                            psi.name()
                        );
                    }
                }
            }
        }
    }
}
