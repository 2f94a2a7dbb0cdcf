//! The finite-injury priority scheduler.
//!
//! A run is configured with two fixed class approximations `U` and `V`, a
//! number of generator indices, a named functional table per requirement,
//! and a finite roster of requirements in priority order (index 0 is the
//! strongest). The scheduler builds, per generator index `i`, a pair of
//! disjoint scheduled c.e. sets whose separating class is `S_i`.
//!
//! Per stage, in priority order, each strategy recomputes its length of
//! agreement against its own source/target pair:
//!
//! - negative requirements watch `U ∨ ⋁_{i∈I} S_i → V`,
//! - positive requirements watch `U ∨ ⋁_{i∈I} S_i → (U ∨ ⋀_{j∈J} S_j) ∧ V`,
//!
//! and acts only at expansionary stages: restraints at level `s+1` on each
//! `A_i`, initialization of lower-priority positive strategies whose
//! markers fell below a new restraint, fresh large coding markers, and the
//! marker watchers that enumerate into `A_j` or `B_j` when a child of the
//! watched node falls out of `V`'s approximation. Enumerating below a
//! lower-priority restraint is an injury; both are logged.
//!
//! Every decision is logged as an [`Event`]; identical configs produce
//! bit-identical logs. [`audit::audit_log`] replays a log independently
//! and checks the priority discipline after the fact.

pub mod audit;
pub mod extract;
mod scheduler;

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::agreement::{AgreementError, AgreementHistory};
use crate::bits::BitString;
use crate::functionals::FunctionalTable;
use crate::trees::{EnumSchedule, TreeError, TreeSpec};

pub use audit::{audit_log, AuditReport, CheckResult};
pub use extract::{
    compose_contradiction, extract_delta, extract_gamma, Branch, CompositionReport, ExtractError,
};

/// Requirement kind tag: `N` (preservation) or `P` (coding).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReqKind {
    N,
    P,
}

/// One roster entry. `I` indexes the separating classes joined into the
/// source; for positive requirements `J` indexes the classes met into the
/// target, and must be disjoint from `I`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub kind: ReqKind,
    #[serde(rename = "I", default)]
    pub i_set: BTreeSet<u32>,
    #[serde(rename = "J", default, skip_serializing_if = "BTreeSet::is_empty")]
    pub j_set: BTreeSet<u32>,
    pub functional: String,
    pub priority: u32,
}

/// Fate of a coding marker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarkerStatus {
    Waiting,
    /// Enumerated into `A_j` at the recorded stage.
    FiredA(u32),
    /// Enumerated into `B_j` at the recorded stage.
    FiredB(u32),
}

/// A coding marker `m_{σ,j}`: a number reserved for the node σ whose
/// eventual side (`A_j` or `B_j`) codes which child of σ survives. A fired
/// marker never changes status again.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Marker {
    pub value: u32,
    pub status: MarkerStatus,
    pub assigned_stage: u32,
}

/// Mutable per-strategy state. Negative strategies use only `restraints`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyState {
    /// Restraint level per generator index: lower-priority strategies must
    /// not enumerate anything below this into `A_i`.
    pub restraints: BTreeMap<u32, u32>,
    /// The next marker level `n`.
    pub next_level: u32,
    /// Markers keyed by (node, generator index).
    #[serde(with = "marker_map")]
    pub markers: BTreeMap<(BitString, u32), Marker>,
    pub init_count: u32,
    /// Stage of the most recent initialization, if any. A strategy
    /// initialized earlier in the same stage does not act.
    pub last_initialized: Option<u32>,
}

mod marker_map {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct MarkerWire {
        sigma: BitString,
        j: u32,
        value: u32,
        status: MarkerStatus,
        assigned_stage: u32,
    }

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<(BitString, u32), Marker>,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(map.iter().map(|((sigma, j), m)| MarkerWire {
            sigma: sigma.clone(),
            j: *j,
            value: m.value,
            status: m.status,
            assigned_stage: m.assigned_stage,
        }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<BTreeMap<(BitString, u32), Marker>, D::Error> {
        let wires: Vec<MarkerWire> = Vec::deserialize(deserializer)?;
        Ok(wires
            .into_iter()
            .map(|w| {
                (
                    (w.sigma, w.j),
                    Marker { value: w.value, status: w.status, assigned_stage: w.assigned_stage },
                )
            })
            .collect())
    }
}

/// A logged scheduler decision. The log is stage-ordered and, within a
/// stage, actor priorities are nondecreasing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub stage: u32,
    pub actor: u32,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EventKind {
    /// The actor's running-maximum length of agreement rose to `level`.
    Expansionary {
        level: u32,
    },
    /// Restraint on `A_i` set to `level`.
    RestraintSet {
        i: u32,
        level: u32,
    },
    MarkerAssigned {
        sigma: BitString,
        j: u32,
        value: u32,
    },
    EnumerateA {
        j: u32,
        value: u32,
        sigma: BitString,
    },
    EnumerateB {
        j: u32,
        value: u32,
        sigma: BitString,
    },
    /// The actor initialized the lower-priority strategy `victim`.
    Initialize {
        victim: u32,
    },
    /// The actor's enumeration of `value` into `A_i` violated the
    /// lower-priority strategy `victim`'s restraint.
    Injury {
        victim: u32,
        i: u32,
        value: u32,
    },
}

/// The two fixed endpoint classes of a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classes {
    #[serde(rename = "U")]
    pub u: TreeSpec,
    #[serde(rename = "V")]
    pub v: TreeSpec,
}

/// A complete run description.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Number of generator indices; every index in a requirement must be
    /// below this.
    pub generators: u32,
    /// Number of stages to run (stage 0 is the initial snapshot).
    pub budget: u32,
    pub classes: Classes,
    pub functionals: Vec<FunctionalTable>,
    pub roster: Vec<Requirement>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("config error at {path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { path: path.into(), message: message.into() }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.classes.u.validate().map_err(|e| ConfigError::new("classes.U", e.to_string()))?;
        self.classes.v.validate().map_err(|e| ConfigError::new("classes.V", e.to_string()))?;
        let mut names = BTreeSet::new();
        for (idx, f) in self.functionals.iter().enumerate() {
            if !names.insert(f.name().to_string()) {
                return Err(ConfigError::new(
                    format!("functionals[{idx}].name"),
                    format!("duplicate functional name {:?}", f.name()),
                ));
            }
        }
        for (idx, req) in self.roster.iter().enumerate() {
            let path = |field: &str| format!("roster[{idx}].{field}");
            if req.priority as usize != idx {
                return Err(ConfigError::new(
                    path("priority"),
                    format!("priority {} must equal the roster position {idx}", req.priority),
                ));
            }
            if !names.contains(&req.functional) {
                return Err(ConfigError::new(
                    path("functional"),
                    format!("unknown functional {:?}", req.functional),
                ));
            }
            for &i in &req.i_set {
                if i >= self.generators {
                    return Err(ConfigError::new(
                        path("I"),
                        format!("index {i} out of range for {} generators", self.generators),
                    ));
                }
            }
            for &j in &req.j_set {
                if j >= self.generators {
                    return Err(ConfigError::new(
                        path("J"),
                        format!("index {j} out of range for {} generators", self.generators),
                    ));
                }
            }
            match req.kind {
                ReqKind::N => {
                    if !req.j_set.is_empty() {
                        return Err(ConfigError::new(
                            path("J"),
                            "negative requirements take no J indices",
                        ));
                    }
                }
                ReqKind::P => {
                    if req.j_set.is_empty() {
                        return Err(ConfigError::new(
                            path("J"),
                            "positive requirements need a nonempty J",
                        ));
                    }
                    if let Some(shared) = req.i_set.intersection(&req.j_set).next() {
                        return Err(ConfigError::new(
                            path("J"),
                            format!("I and J must be disjoint, both contain {shared}"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn functional(&self, name: &str) -> Option<&FunctionalTable> {
        self.functionals.iter().find(|f| f.name() == name)
    }
}

/// Scheduled enumerations for one generator index.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSchedules {
    pub a: EnumSchedule,
    pub b: EnumSchedule,
}

/// One roster slot: the requirement, its mutable strategy state, and its
/// agreement history.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategySlot {
    pub requirement: Requirement,
    pub state: StrategyState,
    pub history: AgreementHistory,
}

/// Full simulator state; serializing it yields `final_state.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionState {
    pub stage: u32,
    pub schedules: Vec<GeneratorSchedules>,
    pub roster: Vec<StrategySlot>,
    pub log: Vec<Event>,
    pub config: RunConfig,
    pub(crate) max_marker_ever: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StepError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Agreement(#[from] AgreementError),
    /// Would put one value on both sides of a separating class; indicates
    /// a scheduler bug and must be unreachable.
    #[error("disjointness violation: value {value} for generator {j} at stage {stage}")]
    DisjointnessViolation { j: u32, value: u32, stage: u32 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Step(#[from] StepError),
}

/// Runs a validated config for its full budget.
pub fn run(config: RunConfig) -> Result<RunResult, RunError> {
    let mut state = ConstructionState::initial(config)?;
    for _ in 0..state.config.budget {
        state.step()?;
    }
    Ok(RunResult { state })
}

/// A finished run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub state: ConstructionState,
}

impl RunResult {
    pub fn final_stage(&self) -> u32 {
        self.state.stage
    }

    /// The event log, one JSON object per line.
    pub fn events_jsonl(&self) -> String {
        let mut out = String::new();
        for ev in &self.state.log {
            out.push_str(&serde_json::to_string(ev).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    /// All agreement histories, one JSON object per (priority, stage).
    pub fn histories_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Line {
            priority: u32,
            stage: u32,
            ell: u32,
            ellbar: u32,
            expansionary: bool,
        }
        let mut out = String::new();
        for slot in &self.state.roster {
            for s in slot.history.samples() {
                let line = Line {
                    priority: slot.requirement.priority,
                    stage: s.stage,
                    ell: s.ell,
                    ellbar: s.ellbar,
                    expansionary: s.expansionary,
                };
                out.push_str(&serde_json::to_string(&line).expect("line serializes"));
                out.push('\n');
            }
        }
        out
    }

    pub fn final_state_json(&self) -> String {
        serde_json::to_string_pretty(&self.state).expect("state serializes")
    }

    /// Replays the log through the six audit checks.
    pub fn audit(&self) -> AuditReport {
        let reqs: Vec<Requirement> =
            self.state.roster.iter().map(|s| s.requirement.clone()).collect();
        audit_log(&reqs, &self.state.log)
    }
}
