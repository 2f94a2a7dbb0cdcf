//! Stage-bounded simulation and verification toolkit for finite-injury
//! priority constructions over Π⁰₁ subsets of Cantor space.
//!
//! The pieces:
//!
//! - [`bits`]: finite binary strings, interleaving and de-interleaving.
//! - [`trees`]: finitely described, stage-indexed computable trees
//!   (separating classes, scheduled forbidden sets, joins and meets) with
//!   the extendible-node canonical approximation.
//! - [`functionals`]: stage-stamped axiom tables modelling Turing
//!   functionals, with monotone stagewise evaluation.
//! - [`agreement`]: the length-of-agreement function, expansionary-stage
//!   histories, and stabilization diagnostics.
//! - [`construction`]: the priority scheduler itself — requirement
//!   rosters, restraints, coding markers, initialization and injury — plus
//!   the post-hoc reduction extractors and the event-log auditor.
//! - [`fdl`]: free distributive lattice terms over named generators,
//!   antichain normal forms, and the order decision procedure.
//!
//! Everything is deterministic: identical inputs produce bit-identical
//! event logs, which the auditor replays and checks.

pub mod agreement;
pub mod bits;
pub mod construction;
pub mod fdl;
pub mod functionals;
pub mod trees;

pub use bits::BitString;
pub use trees::{EnumSchedule, TreeSpec};
