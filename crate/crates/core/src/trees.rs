//! Finitely described, stage-indexed computable trees over binary strings.
//!
//! A [`TreeSpec`] is an intensional description of a family of downward
//! closed trees `T̂_s ⊆ 2^{<ω}`, one per stage `s`, nested so that later
//! stages only shrink. The stage-`s` *canonical* tree keeps exactly the
//! nodes that still extend to a node of length `s` inside `T̂_s`; its
//! members are the nodes the construction treats as alive at stage `s`.
//!
//! Trees are never materialized. Membership is decided from the finite
//! description, and [`TreeSpec::level_set`] materializes a single level on
//! demand. [`TreeSpec::paths_oracle`] is a deliberately naive enumeration
//! (exponential in the stage) kept as an independent ground truth for the
//! property suites; production paths go through `canonical_member` and
//! `level_set`.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::bits::BitString;

/// A c.e. set built in stages: the stage-`s` slice contains every element
/// whose entry stage is at most `s`. Entries only accumulate, so the
/// slices are increasing in `s`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EnumSchedule {
    // element -> earliest stage at which it appears
    by_element: BTreeMap<u32, u32>,
}

impl EnumSchedule {
    pub fn new() -> Self {
        EnumSchedule::default()
    }

    pub fn from_entries<I: IntoIterator<Item = (u32, u32)>>(entries: I) -> Self {
        let mut s = EnumSchedule::new();
        for (x, t) in entries {
            s.insert(x, t);
        }
        s
    }

    /// Adds `(element, stage)`. If the element is already scheduled, the
    /// earlier stage wins.
    pub fn insert(&mut self, element: u32, stage: u32) {
        self.by_element.entry(element).and_modify(|t| *t = (*t).min(stage)).or_insert(stage);
    }

    /// Is `element` in the stage-`stage` slice?
    pub fn contains_at(&self, element: u32, stage: u32) -> bool {
        self.by_element.get(&element).is_some_and(|&t| t <= stage)
    }

    pub fn contains_element(&self, element: u32) -> bool {
        self.by_element.contains_key(&element)
    }

    pub fn is_empty(&self) -> bool {
        self.by_element.is_empty()
    }

    pub fn len(&self) -> usize {
        self.by_element.len()
    }

    /// Entries as sorted `(element, stage)` pairs.
    pub fn entries(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.by_element.iter().map(|(&x, &t)| (x, t))
    }

    pub fn elements(&self) -> impl Iterator<Item = u32> + '_ {
        self.by_element.keys().copied()
    }

    /// The characteristic string of the stage-`stage` slice on `0..len`.
    pub fn characteristic(&self, len: u32, stage: u32) -> BitString {
        BitString::from_bits((0..len).map(|x| self.contains_at(x, stage) as u8))
    }
}

impl Serialize for EnumSchedule {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.entries())
    }
}

impl<'de> Deserialize<'de> for EnumSchedule {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let entries: Vec<(u32, u32)> = Vec::deserialize(deserializer)?;
        Ok(EnumSchedule::from_entries(entries))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TreeError {
    /// A stage-dependent tree was queried on a node longer than the stage
    /// horizon; membership there depends on schedule entries not yet known.
    #[error("horizon exceeded: node length {len} > stage {stage}")]
    HorizonExceeded { len: u32, stage: u32 },
    /// Both schedules of a separating class contain the same element.
    #[error("schedules overlap at element {0}")]
    SchedulesOverlap(u32),
}

/// Intensional description of a stage-indexed tree family.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum TreeSpec {
    /// The full binary tree at every stage.
    Full,
    /// The full tree minus the upward closure of each forbidden node, with
    /// each forbidden node taking effect only from its appearance stage on.
    /// This is the co-c.e. picture: nodes can die at late stages.
    ScheduledForbidden { entries: Vec<(BitString, u32)> },
    /// The separating class of two disjoint scheduled c.e. sets. A string
    /// σ is in the underlying tree when σ(n)=1 implies n is outside the
    /// stage-|σ| slice of `b` and σ(n)=0 implies n is outside the stage-|σ|
    /// slice of `a`.
    Sep { a: EnumSchedule, b: EnumSchedule },
    /// Interleaved product: even positions from `left`, odd from `right`.
    Join { left: Box<TreeSpec>, right: Box<TreeSpec> },
    /// Tagged union: `0⌢τ` for `τ` in `left`, `1⌢τ` for `τ` in `right`.
    Meet { left: Box<TreeSpec>, right: Box<TreeSpec> },
}

/// Builds the interleaved-product spec.
pub fn join_spec(a: TreeSpec, b: TreeSpec) -> TreeSpec {
    TreeSpec::Join { left: Box::new(a), right: Box::new(b) }
}

/// Builds the tagged-union spec.
pub fn meet_spec(a: TreeSpec, b: TreeSpec) -> TreeSpec {
    TreeSpec::Meet { left: Box::new(a), right: Box::new(b) }
}

/// Builds a separating-class spec, rejecting overlapping schedules.
pub fn sep_spec(a: EnumSchedule, b: EnumSchedule) -> Result<TreeSpec, TreeError> {
    for x in a.elements() {
        if b.contains_element(x) {
            return Err(TreeError::SchedulesOverlap(x));
        }
    }
    Ok(TreeSpec::Sep { a, b })
}

/// Builds a scheduled-forbidden spec from `(node, appear_stage)` pairs.
pub fn forbidden_spec<I: IntoIterator<Item = (BitString, u32)>>(entries: I) -> TreeSpec {
    let set: BTreeSet<(BitString, u32)> = entries.into_iter().collect();
    TreeSpec::ScheduledForbidden { entries: set.into_iter().collect() }
}

impl TreeSpec {
    /// Checks structural invariants (separating-class disjointness, at
    /// every nesting depth). Deserialized specs should be validated before
    /// use; the constructors above already are.
    pub fn validate(&self) -> Result<(), TreeError> {
        match self {
            TreeSpec::Full | TreeSpec::ScheduledForbidden { .. } => Ok(()),
            TreeSpec::Sep { a, b } => {
                for x in a.elements() {
                    if b.contains_element(x) {
                        return Err(TreeError::SchedulesOverlap(x));
                    }
                }
                Ok(())
            }
            TreeSpec::Join { left, right } | TreeSpec::Meet { left, right } => {
                left.validate()?;
                right.validate()
            }
        }
    }

    /// Membership in the stage-`stage` underlying tree `T̂_stage`.
    ///
    /// Stage-dependent variants refuse queries beyond the stage horizon:
    /// within a construction only strings of length ≤ s are ever inspected
    /// at stage s, and longer queries would need schedule entries not yet
    /// enumerated. `Full` has no horizon.
    pub fn hat_member(&self, stage: u32, node: &BitString) -> Result<bool, TreeError> {
        match self {
            TreeSpec::Full => Ok(true),
            TreeSpec::Sep { a, b } => {
                check_horizon(node, stage)?;
                Ok(sep_consistent(a, b, node, node.len()))
            }
            TreeSpec::ScheduledForbidden { entries } => {
                check_horizon(node, stage)?;
                Ok(!hits_forbidden(entries, stage, node))
            }
            TreeSpec::Join { left, right } => {
                check_horizon(node, stage)?;
                Ok(left.canonical_member(stage, &node.even_part())?
                    && right.canonical_member(stage, &node.odd_part())?)
            }
            TreeSpec::Meet { left, right } => {
                check_horizon(node, stage)?;
                if node.is_empty() {
                    Ok(left.nonempty_at(stage)? || right.nonempty_at(stage)?)
                } else if node.get(0) == 0 {
                    left.canonical_member(stage, &node.tail())
                } else {
                    right.canonical_member(stage, &node.tail())
                }
            }
        }
    }

    /// Membership in the stage-`stage` canonical tree: the node is in
    /// `T̂_stage` and extends to a length-`stage` node of `T̂_stage`.
    pub fn canonical_member(&self, stage: u32, node: &BitString) -> Result<bool, TreeError> {
        check_horizon(node, stage)?;
        match self {
            TreeSpec::Full => Ok(true),
            // Positions |node|..stage-1 are always fillable (the schedules
            // are disjoint), so survival reduces to consistency of the
            // node's own bits with the stage-`stage` slices.
            TreeSpec::Sep { a, b } => Ok(sep_consistent(a, b, node, stage)),
            TreeSpec::ScheduledForbidden { entries } => {
                if hits_forbidden(entries, stage, node) {
                    return Ok(false);
                }
                Ok(extends_to_level(entries, stage, node))
            }
            TreeSpec::Join { left, right } => Ok(left
                .canonical_member(stage, &node.even_part())?
                && right.canonical_member(stage, &node.odd_part())?),
            TreeSpec::Meet { left, right } => {
                if node.is_empty() {
                    Ok(left.nonempty_at(stage)? || right.nonempty_at(stage)?)
                } else if node.get(0) == 0 {
                    left.canonical_member(stage, &node.tail())
                } else {
                    right.canonical_member(stage, &node.tail())
                }
            }
        }
    }

    /// Does the stage-`stage` canonical tree have any node at all?
    pub fn nonempty_at(&self, stage: u32) -> Result<bool, TreeError> {
        self.canonical_member(stage, &BitString::empty())
    }

    /// The canonical-member strings of length `depth` at stage `stage`,
    /// in lexicographic order.
    pub fn level_set(&self, stage: u32, depth: u32) -> Result<BTreeSet<BitString>, TreeError> {
        if depth > stage {
            return Err(TreeError::HorizonExceeded { len: depth, stage });
        }
        match self {
            TreeSpec::Full => Ok(BitString::all_of_length(depth).into_iter().collect()),
            TreeSpec::Sep { a, b } => {
                let mut out = BTreeSet::new();
                let mut partial = vec![BitString::empty()];
                for pos in 0..depth {
                    let mut next = Vec::with_capacity(partial.len() * 2);
                    for s in &partial {
                        if !a.contains_at(pos, stage) {
                            next.push(s.extended(0));
                        }
                        if !b.contains_at(pos, stage) {
                            next.push(s.extended(1));
                        }
                    }
                    partial = next;
                }
                out.extend(partial);
                Ok(out)
            }
            TreeSpec::ScheduledForbidden { entries } => {
                let mael = max_active_len(entries, stage);
                let level = depth.max(mael).min(stage);
                let mut survivors = Vec::new();
                collect_survivors(entries, stage, &BitString::empty(), level, &mut survivors);
                Ok(survivors.into_iter().map(|s| s.prefix(depth)).collect())
            }
            TreeSpec::Join { left, right } => {
                let evens = left.level_set(stage, depth.div_ceil(2))?;
                let odds = right.level_set(stage, depth / 2)?;
                let mut out = BTreeSet::new();
                for e in &evens {
                    for o in &odds {
                        out.insert(BitString::interleave(e, o));
                    }
                }
                Ok(out)
            }
            TreeSpec::Meet { left, right } => {
                if depth == 0 {
                    let mut out = BTreeSet::new();
                    if self.nonempty_at(stage)? {
                        out.insert(BitString::empty());
                    }
                    return Ok(out);
                }
                let mut out = BTreeSet::new();
                for t in left.level_set(stage, depth - 1)? {
                    out.insert(t.prepended(0));
                }
                for t in right.level_set(stage, depth - 1)? {
                    out.insert(t.prepended(1));
                }
                Ok(out)
            }
        }
    }

    /// Brute-force ground truth: the length-`depth` prefixes of the
    /// length-`stage` members of the stage-`stage` tree, computed by naive
    /// enumeration. Exponential in `stage`; use only at small stages.
    pub fn paths_oracle(&self, depth: u32, stage: u32) -> Result<BTreeSet<BitString>, TreeError> {
        if depth > stage {
            return Err(TreeError::HorizonExceeded { len: depth, stage });
        }
        Ok(self.raw_frontier(stage)?.into_iter().map(|s| s.prefix(depth)).collect())
    }

    // Length-`stage` members of the stage-`stage` underlying tree, by
    // exhaustive enumeration on the leaf variants and by the textbook
    // set constructions on combinators.
    fn raw_frontier(&self, stage: u32) -> Result<BTreeSet<BitString>, TreeError> {
        match self {
            TreeSpec::Full => Ok(BitString::all_of_length(stage).into_iter().collect()),
            TreeSpec::Sep { a, b } => Ok(BitString::all_of_length(stage)
                .into_iter()
                .filter(|s| {
                    s.bits().enumerate().all(|(n, bit)| {
                        if bit == 1 {
                            !b.contains_at(n as u32, s.len())
                        } else {
                            !a.contains_at(n as u32, s.len())
                        }
                    })
                })
                .collect()),
            TreeSpec::ScheduledForbidden { entries } => Ok(BitString::all_of_length(stage)
                .into_iter()
                .filter(|s| {
                    !entries.iter().any(|(node, appear)| *appear <= stage && node.is_prefix_of(s))
                })
                .collect()),
            TreeSpec::Join { left, right } => {
                let evens: BTreeSet<BitString> = left
                    .raw_frontier(stage)?
                    .into_iter()
                    .map(|s| s.prefix(stage.div_ceil(2)))
                    .collect();
                let odds: BTreeSet<BitString> =
                    right.raw_frontier(stage)?.into_iter().map(|s| s.prefix(stage / 2)).collect();
                let mut out = BTreeSet::new();
                for e in &evens {
                    for o in &odds {
                        out.insert(BitString::interleave(e, o));
                    }
                }
                Ok(out)
            }
            TreeSpec::Meet { left, right } => {
                let ls = left.raw_frontier(stage)?;
                let rs = right.raw_frontier(stage)?;
                let mut out = BTreeSet::new();
                if stage == 0 {
                    if !ls.is_empty() || !rs.is_empty() {
                        out.insert(BitString::empty());
                    }
                    return Ok(out);
                }
                for t in ls {
                    out.insert(t.prefix(stage - 1).prepended(0));
                }
                for t in rs {
                    out.insert(t.prefix(stage - 1).prepended(1));
                }
                Ok(out)
            }
        }
    }

    /// Membership in the stage-0 canonical tree without a length horizon.
    ///
    /// Only meaningful as a post-hoc diagnostic over fully known
    /// descriptions (the stage-0 tree of a separating class reads its
    /// schedules at the node's own length, which a running construction
    /// would not yet know).
    pub(crate) fn member_at_zero(&self, node: &BitString) -> bool {
        match self {
            TreeSpec::Full => true,
            TreeSpec::Sep { a, b } => sep_consistent(a, b, node, node.len()),
            TreeSpec::ScheduledForbidden { entries } => !hits_forbidden(entries, 0, node),
            TreeSpec::Join { left, right } => {
                left.member_at_zero(&node.even_part()) && right.member_at_zero(&node.odd_part())
            }
            TreeSpec::Meet { left, right } => {
                if node.is_empty() {
                    left.member_at_zero(node) || right.member_at_zero(node)
                } else if node.get(0) == 0 {
                    left.member_at_zero(&node.tail())
                } else {
                    right.member_at_zero(&node.tail())
                }
            }
        }
    }
}

fn check_horizon(node: &BitString, stage: u32) -> Result<(), TreeError> {
    if node.len() > stage {
        Err(TreeError::HorizonExceeded { len: node.len(), stage })
    } else {
        Ok(())
    }
}

// σ(n)=1 demands n outside the stage-`lookup` slice of b, σ(n)=0 outside a.
fn sep_consistent(a: &EnumSchedule, b: &EnumSchedule, node: &BitString, lookup: u32) -> bool {
    node.bits().enumerate().all(|(n, bit)| {
        if bit == 1 {
            !b.contains_at(n as u32, lookup)
        } else {
            !a.contains_at(n as u32, lookup)
        }
    })
}

fn hits_forbidden(entries: &[(BitString, u32)], stage: u32, node: &BitString) -> bool {
    entries.iter().any(|(f, appear)| *appear <= stage && f.is_prefix_of(node))
}

fn max_active_len(entries: &[(BitString, u32)], stage: u32) -> u32 {
    entries.iter().filter(|(_, appear)| *appear <= stage).map(|(f, _)| f.len()).max().unwrap_or(0)
}

// Does `node` (assumed clean) extend to a clean node of length `stage`?
// Beyond the longest active forbidden node no new pruning can occur, so a
// clean node at level min(stage, max(|node|, longest)) settles it.
fn extends_to_level(entries: &[(BitString, u32)], stage: u32, node: &BitString) -> bool {
    let target = node.len().max(max_active_len(entries, stage)).min(stage);
    has_clean_descendant(entries, stage, node, target)
}

fn has_clean_descendant(
    entries: &[(BitString, u32)],
    stage: u32,
    node: &BitString,
    target: u32,
) -> bool {
    if hits_forbidden(entries, stage, node) {
        return false;
    }
    if node.len() >= target {
        return true;
    }
    has_clean_descendant(entries, stage, &node.extended(0), target)
        || has_clean_descendant(entries, stage, &node.extended(1), target)
}

fn collect_survivors(
    entries: &[(BitString, u32)],
    stage: u32,
    node: &BitString,
    target: u32,
    out: &mut Vec<BitString>,
) {
    if hits_forbidden(entries, stage, node) {
        return;
    }
    if node.len() == target {
        out.push(node.clone());
        return;
    }
    collect_survivors(entries, stage, &node.extended(0), target, out);
    collect_survivors(entries, stage, &node.extended(1), target, out);
}
