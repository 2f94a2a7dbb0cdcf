//! Post-hoc reduction extractors over a finished run.
//!
//! When a positive strategy keeps finding expansionary stages, its marker
//! table and restraints encode two families of reductions: the coding walk
//! Γ_j (read the marker's bit off an element of S_j, descend into the
//! surviving child of V's tree) and the preservation read-back Δ_i (A_i
//! below a restraint is frozen from the restraint's stage on). These
//! functions enact both at finite depth, plus their composition, which
//! feeds Γ and Δ through the strategy's own functional.

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::trees::{EnumSchedule, TreeError};

use super::{ReqKind, RunResult, StrategySlot};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("no strategy has priority {0}")]
    NoSuchStrategy(u32),
    #[error("strategy {0} is not a positive requirement")]
    NotAPositiveStrategy(u32),
    #[error("strategy {priority} does not code generator {index}")]
    IndexNotInRequirement { priority: u32, index: u32 },
    #[error("no marker at walk level {0} in the final state")]
    MarkerMissing(u32),
    #[error("oracle too short: bit {0} is needed")]
    OracleTooShort(u32),
    #[error("no post-quiescence expansionary stage reaches agreement {0}")]
    NoWitnessStage(u32),
    #[error("read-back of A_{index} below {len} changed after its witness stage {stage}")]
    UnstableReadback { index: u32, len: u32, stage: u32 },
    #[error("composed output undefined at position {0}")]
    InsufficientConvergence(u32),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

fn positive_slot(result: &RunResult, priority: u32) -> Result<&StrategySlot, ExtractError> {
    let slot =
        result.state.roster.get(priority as usize).ok_or(ExtractError::NoSuchStrategy(priority))?;
    if slot.requirement.kind != ReqKind::P {
        return Err(ExtractError::NotAPositiveStrategy(priority));
    }
    Ok(slot)
}

/// The Γ_j coding walk at finite depth: starting from the empty node,
/// repeatedly read the oracle bit at the current node's marker and descend
/// into the child it codes (bit 1 means the 0-child died, so go right).
///
/// If `x` respects the separating class of generator `j` at the walked
/// marker positions, every prefix of the output lies in the final
/// approximation of `V`. Oracles that do not are tolerated; the output
/// then carries no guarantee.
pub fn extract_gamma(
    result: &RunResult,
    priority: u32,
    j: u32,
    x: &BitString,
    depth: u32,
) -> Result<BitString, ExtractError> {
    let slot = positive_slot(result, priority)?;
    if !slot.requirement.j_set.contains(&j) {
        return Err(ExtractError::IndexNotInRequirement { priority, index: j });
    }
    let mut sigma = BitString::empty();
    for level in 0..depth {
        let marker = slot
            .state
            .markers
            .get(&(sigma.clone(), j))
            .ok_or(ExtractError::MarkerMissing(level))?;
        if marker.value >= x.len() {
            return Err(ExtractError::OracleTooShort(marker.value));
        }
        sigma.push(x.get(marker.value));
    }
    Ok(sigma)
}

/// The Δ_i read-back: `A_i ↾ len` frozen at the first expansionary stage
/// after the strategy's last initialization or injury whose agreement
/// reaches `len`. The witness-stage slice is checked against the final
/// schedule before being returned.
pub fn extract_delta(
    result: &RunResult,
    priority: u32,
    i: u32,
    len: u32,
) -> Result<BitString, ExtractError> {
    let slot = positive_slot(result, priority)?;
    if !slot.requirement.i_set.contains(&i) {
        return Err(ExtractError::IndexNotInRequirement { priority, index: i });
    }
    if len == 0 {
        return Ok(BitString::empty());
    }
    let quiescence = result
        .state
        .log
        .iter()
        .filter(|ev| match ev.kind {
            super::EventKind::Initialize { victim } => victim == priority,
            super::EventKind::Injury { victim, .. } => victim == priority,
            _ => false,
        })
        .map(|ev| ev.stage)
        .max()
        .unwrap_or(0);
    let witness = slot
        .history
        .samples()
        .iter()
        .find(|s| s.stage > quiescence && s.expansionary && s.ell >= len)
        .ok_or(ExtractError::NoWitnessStage(len))?
        .stage;
    let schedule = &result.state.schedules[i as usize].a;
    let at_witness = schedule.characteristic(len, witness);
    let at_end = schedule.characteristic(len, result.state.stage);
    if at_witness != at_end {
        return Err(ExtractError::UnstableReadback { index: i, len, stage: witness });
    }
    Ok(at_end)
}

/// Which case of the target's outer meet the composed output fell into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// First output bit 1: the tail is claimed to lie in `V` directly.
    ViaV,
    /// First output bit 0: the tail decodes through the join and the meet
    /// selector to an element of `S_j`, and the coding walk Γ_j applies.
    ViaGamma { j: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionReport {
    pub branch: Branch,
    pub output: BitString,
    /// Whether every prefix of `output` is in the final approximation of
    /// `V`.
    pub prefixes_in_v: bool,
}

/// Enacts the composed reduction at finite depth: feed `x` (joined with
/// the Δ-style read-backs of every `A_i`, `i ∈ I`) to the strategy's
/// functional; a leading 1 yields a claimed element of `V` directly, a
/// leading 0 is decoded through the join and meet structure to a `W ∈ S_j`
/// on which the Γ_j walk runs. Both outputs are membership-checked
/// against `V` at the final stage.
pub fn compose_contradiction(
    result: &RunResult,
    priority: u32,
    x: &BitString,
    depth: u32,
) -> Result<CompositionReport, ExtractError> {
    let slot = positive_slot(result, priority)?;
    let final_stage = result.state.stage;
    let psi = result.state.config.functional(&slot.requirement.functional).expect("validated name");

    let oracle = if slot.requirement.i_set.is_empty() {
        if x.len() < final_stage {
            return Err(ExtractError::OracleTooShort(final_stage.saturating_sub(1)));
        }
        x.prefix(final_stage)
    } else {
        let even_len = final_stage.div_ceil(2);
        if x.len() < even_len {
            return Err(ExtractError::OracleTooShort(even_len.saturating_sub(1)));
        }
        let schedules: Vec<&EnumSchedule> =
            slot.requirement.i_set.iter().map(|&i| &result.state.schedules[i as usize].a).collect();
        let folded = fold_characteristics(&schedules, final_stage / 2, final_stage);
        BitString::interleave(&x.prefix(even_len), &folded)
    };

    let out_bit = |position: u32| {
        psi.output_bit(&oracle, final_stage, position)
            .ok_or(ExtractError::InsufficientConvergence(position))
    };

    let first = out_bit(0)?;
    if first == 1 {
        let mut z = BitString::empty();
        for k in 0..depth {
            z.push(out_bit(1 + k)?);
        }
        let prefixes_in_v = prefixes_in_v(result, final_stage, &z)?;
        return Ok(CompositionReport { branch: Branch::ViaV, output: z, prefixes_in_v });
    }

    // 0⌢Z with Z = (U-part) ⊕ (meet part): the meet part is g(a) = Z(2a+1)
    // = out(2a+2). Peel the selector bits of the right-folded meet until a
    // 0 picks a generator (or the last one is reached), leaving W.
    let j_list: Vec<u32> = slot.requirement.j_set.iter().copied().collect();
    let mut offset = 0u32;
    let mut idx = 0usize;
    while idx + 1 < j_list.len() {
        let bit = out_bit(2 * offset + 2)?;
        offset += 1;
        if bit == 0 {
            break;
        }
        idx += 1;
    }
    let j = j_list[idx];
    let mut sigma = BitString::empty();
    for level in 0..depth {
        let marker = slot
            .state
            .markers
            .get(&(sigma.clone(), j))
            .ok_or(ExtractError::MarkerMissing(level))?;
        sigma.push(out_bit(2 * (offset + marker.value) + 2)?);
    }
    let prefixes_in_v = prefixes_in_v(result, final_stage, &sigma)?;
    Ok(CompositionReport { branch: Branch::ViaGamma { j }, output: sigma, prefixes_in_v })
}

fn prefixes_in_v(result: &RunResult, stage: u32, out: &BitString) -> Result<bool, ExtractError> {
    let v = &result.state.config.classes.v;
    for k in 0..=out.len() {
        if !v.canonical_member(stage, &out.prefix(k))? {
            return Ok(false);
        }
    }
    Ok(true)
}

// Characteristic string of a right-folded join of schedules, cut to `len`.
fn fold_characteristics(schedules: &[&EnumSchedule], len: u32, stage: u32) -> BitString {
    match schedules {
        [] => unreachable!("caller guarantees a nonempty list"),
        [only] => only.characteristic(len, stage),
        [head, rest @ ..] => {
            let even = head.characteristic(len.div_ceil(2), stage);
            let odd = fold_characteristics(rest, len / 2, stage);
            BitString::interleave(&even, &odd)
        }
    }
}
