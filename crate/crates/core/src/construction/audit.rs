//! Independent replay audit of a run's event log.
//!
//! The auditor sees only the requirement roster and the raw event stream —
//! not the scheduler's internal state — and re-derives everything it
//! checks. Six checks:
//!
//! 1. every injury's actor has strictly higher priority than its victim;
//! 2. every initialization's actor restrains an index the victim codes;
//! 3. actions happen only at their actor's expansionary stages;
//! 4. a restraint never subsequently injured is permanent: no
//!    lower-priority actor enumerates below it afterwards;
//! 5. markers are large at assignment: above the stage, every restraint
//!    in force, and every marker assigned before them;
//! 6. per-requirement injury and initialization counts (reported, always
//!    finite on a finite log).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Event, EventKind, ReqKind, Requirement};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub number: u8,
    pub name: String,
    pub passed: bool,
    pub violations: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub checks: Vec<CheckResult>,
    pub injuries_by_victim: BTreeMap<u32, u32>,
    pub initializations_by_victim: BTreeMap<u32, u32>,
}

impl AuditReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "check ({}) {}: {}",
                c.number,
                c.name,
                if c.passed { "PASS" } else { "FAIL" }
            )?;
            for v in &c.violations {
                writeln!(f, "  - {v}")?;
            }
        }
        writeln!(f, "injuries by victim: {:?}", self.injuries_by_victim)?;
        writeln!(f, "initializations by victim: {:?}", self.initializations_by_victim)
    }
}

/// Replays `log` against `roster` and reports on all six checks.
pub fn audit_log(roster: &[Requirement], log: &[Event]) -> AuditReport {
    let mut checks = Vec::new();

    // (1) injuries flow strictly downward in priority
    let mut v1 = Vec::new();
    for ev in log {
        if let EventKind::Injury { victim, .. } = ev.kind {
            if ev.actor >= victim {
                v1.push(format!(
                    "stage {}: injury by actor {} against victim {} does not flow downward",
                    ev.stage, ev.actor, victim
                ));
            }
        }
    }
    checks.push(result(1, "injury actor outranks victim", v1));

    // (2) initializations share an index: actor's I meets victim's J
    let mut v2 = Vec::new();
    for ev in log {
        if let EventKind::Initialize { victim } = ev.kind {
            let ok = match (roster.get(ev.actor as usize), roster.get(victim as usize)) {
                (Some(actor), Some(vic)) => {
                    vic.kind == ReqKind::P && !actor.i_set.is_disjoint(&vic.j_set)
                }
                _ => false,
            };
            if !ok {
                v2.push(format!(
                    "stage {}: initialization of {} by {} shares no coded index",
                    ev.stage, victim, ev.actor
                ));
            }
            if ev.actor >= victim {
                v2.push(format!(
                    "stage {}: initialization of {} by {} does not flow downward",
                    ev.stage, victim, ev.actor
                ));
            }
        }
    }
    checks.push(result(2, "initializations share a coded index", v2));

    // (3) actions only at the actor's expansionary stages
    let mut expansionary: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for ev in log {
        if let EventKind::Expansionary { .. } = ev.kind {
            expansionary.entry(ev.actor).or_default().insert(ev.stage);
        }
    }
    let mut v3 = Vec::new();
    for ev in log {
        let is_action = matches!(
            ev.kind,
            EventKind::RestraintSet { .. }
                | EventKind::MarkerAssigned { .. }
                | EventKind::EnumerateA { .. }
                | EventKind::EnumerateB { .. }
        );
        if is_action
            && !expansionary.get(&ev.actor).is_some_and(|stages| stages.contains(&ev.stage))
        {
            v3.push(format!(
                "stage {}: actor {} acted outside its expansionary stages: {:?}",
                ev.stage, ev.actor, ev.kind
            ));
        }
    }
    checks.push(result(3, "actions only at expansionary stages", v3));

    // (4) un-injured restraints are permanent against lower priorities
    let mut v4 = Vec::new();
    for (pos, ev) in log.iter().enumerate() {
        let EventKind::RestraintSet { i, level } = ev.kind else { continue };
        let injured_later = log[pos + 1..].iter().any(|later| {
            matches!(later.kind, EventKind::Injury { victim, i: vi, .. }
                if victim == ev.actor && vi == i)
        });
        if injured_later {
            continue;
        }
        for later in &log[pos + 1..] {
            if let EventKind::EnumerateA { j, value, .. } = later.kind {
                if j == i && value < level && later.actor > ev.actor {
                    v4.push(format!(
                        "stage {}: actor {} enumerated {} into A_{} below the level-{} restraint \
                         set by {} at stage {}",
                        later.stage, later.actor, value, j, level, ev.actor, ev.stage
                    ));
                }
            }
        }
    }
    checks.push(result(4, "un-injured restraints are permanent", v4));

    // (5) markers are large at assignment
    let mut v5 = Vec::new();
    let mut max_restraint = 0u32;
    let mut max_marker = 0u32;
    for ev in log {
        match ev.kind {
            EventKind::RestraintSet { level, .. } => max_restraint = max_restraint.max(level),
            EventKind::MarkerAssigned { value, .. } => {
                let floor = ev.stage.max(max_restraint).max(max_marker);
                if value <= floor {
                    v5.push(format!(
                        "stage {}: marker {} assigned by {} is not large (needs > {})",
                        ev.stage, value, ev.actor, floor
                    ));
                }
                max_marker = max_marker.max(value);
            }
            _ => {}
        }
    }
    checks.push(result(5, "markers are large at assignment", v5));

    // (6) per-requirement counts, reported
    let mut injuries_by_victim = BTreeMap::new();
    let mut initializations_by_victim = BTreeMap::new();
    for req in roster {
        injuries_by_victim.insert(req.priority, 0);
        initializations_by_victim.insert(req.priority, 0);
    }
    for ev in log {
        match ev.kind {
            EventKind::Injury { victim, .. } => {
                *injuries_by_victim.entry(victim).or_insert(0) += 1;
            }
            EventKind::Initialize { victim } => {
                *initializations_by_victim.entry(victim).or_insert(0) += 1;
            }
            _ => {}
        }
    }
    checks.push(result(6, "injury and initialization counts", Vec::new()));

    AuditReport { checks, injuries_by_victim, initializations_by_victim }
}

fn result(number: u8, name: &str, violations: Vec<String>) -> CheckResult {
    CheckResult { number, name: name.to_string(), passed: violations.is_empty(), violations }
}

#[cfg(test)]
mod tests {
    use super::super::{ReqKind, Requirement};
    use super::*;
    use crate::bits::BitString;
    use std::collections::BTreeSet;

    fn set(xs: &[u32]) -> BTreeSet<u32> {
        xs.iter().copied().collect()
    }

    fn roster() -> Vec<Requirement> {
        vec![
            Requirement {
                kind: ReqKind::P,
                i_set: set(&[0]),
                j_set: set(&[1]),
                functional: "psi".into(),
                priority: 0,
            },
            Requirement {
                kind: ReqKind::N,
                i_set: set(&[1]),
                j_set: set(&[]),
                functional: "phi".into(),
                priority: 1,
            },
            Requirement {
                kind: ReqKind::P,
                i_set: set(&[1]),
                j_set: set(&[0]),
                functional: "psi2".into(),
                priority: 2,
            },
        ]
    }

    fn ev(stage: u32, actor: u32, kind: EventKind) -> Event {
        Event { stage, actor, kind }
    }

    #[test]
    fn empty_log_passes_vacuously() {
        let report = audit_log(&roster(), &[]);
        assert!(report.all_passed());
        assert_eq!(report.injuries_by_victim.values().sum::<u32>(), 0);
    }

    #[test]
    fn upward_injury_is_flagged_by_check_one() {
        let log = vec![ev(4, 2, EventKind::Injury { victim: 1, i: 1, value: 3 })];
        let report = audit_log(&roster(), &log);
        let c1 = &report.checks[0];
        assert!(!c1.passed);
        assert!(c1.violations[0].contains("actor 2"));
        // a well-formed downward injury passes
        let log = vec![ev(4, 0, EventKind::Injury { victim: 1, i: 1, value: 3 })];
        assert!(audit_log(&roster(), &log).all_passed());
    }

    #[test]
    fn initialization_without_shared_index_is_flagged() {
        // actor 1 restrains index 1, victim 2 codes J = {0}: no overlap
        let log = vec![ev(3, 1, EventKind::Initialize { victim: 2 })];
        let report = audit_log(&roster(), &log);
        assert!(!report.checks[1].passed);
        // actor 0 restrains {0} and victim 2 codes {0}: fine
        let log = vec![ev(3, 0, EventKind::Initialize { victim: 2 })];
        assert!(audit_log(&roster(), &log).checks[1].passed);
    }

    #[test]
    fn actions_need_an_expansionary_stage() {
        let log = vec![ev(2, 0, EventKind::RestraintSet { i: 0, level: 3 })];
        let report = audit_log(&roster(), &log);
        assert!(!report.checks[2].passed);
        let log = vec![
            ev(2, 0, EventKind::Expansionary { level: 2 }),
            ev(2, 0, EventKind::RestraintSet { i: 0, level: 3 }),
        ];
        assert!(audit_log(&roster(), &log).checks[2].passed);
    }

    #[test]
    fn permanence_check_sees_low_priority_violations() {
        let sigma = BitString::empty();
        let log = vec![
            ev(2, 1, EventKind::Expansionary { level: 1 }),
            ev(2, 1, EventKind::RestraintSet { i: 1, level: 3 }),
            ev(5, 2, EventKind::Expansionary { level: 2 }),
            ev(5, 2, EventKind::EnumerateA { j: 1, value: 1, sigma: sigma.clone() }),
        ];
        let report = audit_log(&roster(), &log);
        assert!(!report.checks[3].passed, "{report}");

        // the same enumeration by the higher-priority actor 0 is an injury,
        // not a permanence violation, provided it is logged as one
        let log = vec![
            ev(2, 1, EventKind::Expansionary { level: 1 }),
            ev(2, 1, EventKind::RestraintSet { i: 1, level: 3 }),
            ev(5, 0, EventKind::Expansionary { level: 2 }),
            ev(5, 0, EventKind::EnumerateA { j: 1, value: 1, sigma }),
            ev(5, 0, EventKind::Injury { victim: 1, i: 1, value: 1 }),
        ];
        assert!(audit_log(&roster(), &log).all_passed());
    }

    #[test]
    fn small_markers_are_flagged() {
        let log = vec![
            ev(1, 0, EventKind::Expansionary { level: 1 }),
            ev(1, 0, EventKind::RestraintSet { i: 0, level: 2 }),
            ev(1, 0, EventKind::MarkerAssigned { sigma: BitString::empty(), j: 1, value: 2 }),
        ];
        let report = audit_log(&roster(), &log);
        assert!(!report.checks[4].passed);
        let log = vec![
            ev(1, 0, EventKind::Expansionary { level: 1 }),
            ev(1, 0, EventKind::RestraintSet { i: 0, level: 2 }),
            ev(1, 0, EventKind::MarkerAssigned { sigma: BitString::empty(), j: 1, value: 3 }),
        ];
        assert!(audit_log(&roster(), &log).checks[4].passed);
    }

    #[test]
    fn counts_are_tallied_per_victim() {
        let log = vec![
            ev(2, 0, EventKind::Injury { victim: 1, i: 1, value: 0 }),
            ev(3, 0, EventKind::Injury { victim: 1, i: 1, value: 1 }),
            ev(3, 0, EventKind::Initialize { victim: 2 }),
        ];
        let report = audit_log(&roster(), &log);
        assert_eq!(report.injuries_by_victim[&1], 2);
        assert_eq!(report.initializations_by_victim[&2], 1);
        assert_eq!(report.injuries_by_victim[&0], 0);
    }
}
