//! The per-stage scheduling loop.
//!
//! Within a stage strategies act in strict priority order and every effect
//! (enumeration, initialization) is visible to the strategies processed
//! after it. Marker values are chosen by a global freshness rule: one more
//! than the maximum of the current stage, every restraint level in force,
//! and every marker value ever assigned. That keeps new markers above all
//! live restraints and pairwise distinct across the whole run.

use crate::agreement::{self, AgreementHistory, EllSample};
use crate::bits::BitString;
use crate::trees::{meet_spec, TreeSpec};

use super::{
    ConstructionState, Event, EventKind, GeneratorSchedules, Marker, MarkerStatus, ReqKind,
    Requirement, RunConfig, RunError, StepError, StrategySlot, StrategyState,
};

enum Side {
    A,
    B,
}

impl ConstructionState {
    /// Stage-0 snapshot: empty schedules, empty log, and one agreement
    /// sample per strategy (stage 0 is never expansionary, so nothing
    /// acts).
    pub fn initial(config: RunConfig) -> Result<Self, RunError> {
        config.validate()?;
        let sentinel = config.budget + 1;
        let roster = config
            .roster
            .iter()
            .map(|req| StrategySlot {
                requirement: req.clone(),
                state: StrategyState::default(),
                history: AgreementHistory::new(req.functional.clone(), sentinel),
            })
            .collect();
        let mut state = ConstructionState {
            stage: 0,
            schedules: (0..config.generators).map(|_| GeneratorSchedules::default()).collect(),
            roster,
            log: Vec::new(),
            config,
            max_marker_ever: 0,
        };
        for p in 0..state.roster.len() {
            state.record_ell(p, 0)?;
        }
        Ok(state)
    }

    /// Advances one stage, letting each strategy observe and act in
    /// priority order.
    pub fn step(&mut self) -> Result<(), StepError> {
        let stage = self.stage + 1;
        self.stage = stage;
        for p in 0..self.roster.len() {
            let sample = self.record_ell(p, stage)?;
            if sample.expansionary {
                self.push_event(stage, p, EventKind::Expansionary { level: sample.ell });
            }
            if self.roster[p].state.last_initialized == Some(stage) {
                // initialized earlier this stage by a stronger strategy
                continue;
            }
            if !sample.expansionary {
                continue;
            }
            match self.roster[p].requirement.kind {
                ReqKind::N => {
                    self.impose_restraints(p, stage);
                }
                ReqKind::P => {
                    if sample.ell >= self.roster[p].state.next_level {
                        self.impose_restraints(p, stage);
                        self.assign_markers(p, stage);
                    }
                    self.check_watchers(p, stage)?;
                }
            }
        }
        Ok(())
    }

    /// The separating-class spec for generator `i` over the current
    /// schedules.
    pub fn separating_spec(&self, i: u32) -> TreeSpec {
        let sched = &self.schedules[i as usize];
        TreeSpec::Sep { a: sched.a.clone(), b: sched.b.clone() }
    }

    /// The (source, target) approximation pair a requirement measures its
    /// agreement against, over the current schedules.
    pub fn requirement_specs(&self, req: &Requirement) -> (TreeSpec, TreeSpec) {
        let src = self.join_over(self.config.classes.u.clone(), &req.i_set);
        let tgt = match req.kind {
            ReqKind::N => self.config.classes.v.clone(),
            ReqKind::P => {
                let met = self.meet_over(&req.j_set);
                meet_spec(
                    crate::trees::join_spec(self.config.classes.u.clone(), met),
                    self.config.classes.v.clone(),
                )
            }
        };
        (src, tgt)
    }

    // base ∨ S_{i1} ∨ S_{i2} ∨ …, folded to the right; just `base` when
    // the index set is empty.
    fn join_over(&self, base: TreeSpec, idxs: &std::collections::BTreeSet<u32>) -> TreeSpec {
        let mut seps: Vec<TreeSpec> = idxs.iter().map(|&i| self.separating_spec(i)).collect();
        match seps.pop() {
            None => base,
            Some(last) => {
                let folded =
                    seps.into_iter().rev().fold(last, |acc, s| crate::trees::join_spec(s, acc));
                crate::trees::join_spec(base, folded)
            }
        }
    }

    // S_{j1} ∧ S_{j2} ∧ …, folded to the right; requires a nonempty set.
    fn meet_over(&self, idxs: &std::collections::BTreeSet<u32>) -> TreeSpec {
        let mut seps: Vec<TreeSpec> = idxs.iter().map(|&j| self.separating_spec(j)).collect();
        let last = seps.pop().expect("validated: positive requirements have nonempty J");
        seps.into_iter().rev().fold(last, |acc, s| meet_spec(s, acc))
    }

    fn record_ell(&mut self, p: usize, stage: u32) -> Result<EllSample, StepError> {
        let ell = {
            let req = &self.roster[p].requirement;
            let (src, tgt) = self.requirement_specs(req);
            let psi = self.config.functional(&req.functional).expect("validated name");
            agreement::length_of_agreement(psi, &src, &tgt, stage)
        };
        Ok(self.roster[p].history.record(stage, ell)?)
    }

    fn push_event(&mut self, stage: u32, actor: usize, kind: EventKind) {
        self.log.push(Event { stage, actor: actor as u32, kind });
    }

    // Restrain each A_i (i in the actor's I) at level stage+1 and
    // initialize every lower-priority positive strategy holding a marker
    // m_{σ,j} with j among the restrained indices and value below the new
    // level.
    fn impose_restraints(&mut self, p: usize, stage: u32) {
        let i_set = self.roster[p].requirement.i_set.clone();
        if i_set.is_empty() {
            return;
        }
        let level = stage + 1;
        for &i in &i_set {
            self.roster[p].state.restraints.insert(i, level);
            self.push_event(stage, p, EventKind::RestraintSet { i, level });
        }
        for q in p + 1..self.roster.len() {
            if self.roster[q].requirement.kind != ReqKind::P {
                continue;
            }
            let overtaken = self.roster[q]
                .state
                .markers
                .iter()
                .any(|((_, j), m)| i_set.contains(j) && m.value < level);
            if overtaken {
                let st = &mut self.roster[q].state;
                st.markers.clear();
                st.next_level = 0;
                st.init_count += 1;
                st.last_initialized = Some(stage);
                self.push_event(stage, p, EventKind::Initialize { victim: q as u32 });
            }
        }
    }

    // One fresh large marker per (j, σ) with |σ| equal to the current
    // level, then bump the level.
    fn assign_markers(&mut self, p: usize, stage: u32) {
        let level = self.roster[p].state.next_level;
        let j_set = self.roster[p].requirement.j_set.clone();
        for &j in &j_set {
            for sigma in BitString::all_of_length(level) {
                let value = self.fresh_large(stage);
                self.max_marker_ever = value;
                self.roster[p].state.markers.insert(
                    (sigma.clone(), j),
                    Marker { value, status: MarkerStatus::Waiting, assigned_stage: stage },
                );
                self.push_event(stage, p, EventKind::MarkerAssigned { sigma, j, value });
            }
        }
        self.roster[p].state.next_level = level + 1;
    }

    fn fresh_large(&self, stage: u32) -> u32 {
        let max_restraint = self
            .roster
            .iter()
            .flat_map(|slot| slot.state.restraints.values())
            .copied()
            .max()
            .unwrap_or(0);
        1 + stage.max(max_restraint).max(self.max_marker_ever)
    }

    // Check every waiting marker assigned at an earlier stage: if the
    // 0-child of its node has left V's approximation, enumerate the marker
    // into A_j; otherwise, if the 1-child has, into B_j. When both
    // children are dead the A-side wins, so one marker enumerates exactly
    // once and the schedules stay disjoint.
    fn check_watchers(&mut self, p: usize, stage: u32) -> Result<(), StepError> {
        let v = self.config.classes.v.clone();
        let due: Vec<(BitString, u32)> = self.roster[p]
            .state
            .markers
            .iter()
            .filter(|(_, m)| m.status == MarkerStatus::Waiting && m.assigned_stage < stage)
            .map(|(key, _)| key.clone())
            .collect();
        for (sigma, j) in due {
            if !v.canonical_member(stage, &sigma.extended(0))? {
                self.fire(p, &sigma, j, stage, Side::A)?;
            } else if !v.canonical_member(stage, &sigma.extended(1))? {
                self.fire(p, &sigma, j, stage, Side::B)?;
            }
        }
        Ok(())
    }

    fn fire(
        &mut self,
        p: usize,
        sigma: &BitString,
        j: u32,
        stage: u32,
        side: Side,
    ) -> Result<(), StepError> {
        let key = (sigma.clone(), j);
        let value = self.roster[p].state.markers[&key].value;
        let sched = &mut self.schedules[j as usize];
        match side {
            Side::A => {
                if sched.b.contains_element(value) {
                    return Err(StepError::DisjointnessViolation { j, value, stage });
                }
                sched.a.insert(value, stage);
                self.roster[p].state.markers.get_mut(&key).expect("marker exists").status =
                    MarkerStatus::FiredA(stage);
                self.push_event(stage, p, EventKind::EnumerateA { j, value, sigma: sigma.clone() });
                // restraints guard the A-sides only; scan every other
                // strategy so that any anomaly shows up in the audit
                for q in 0..self.roster.len() {
                    if q == p {
                        continue;
                    }
                    if let Some(&r) = self.roster[q].state.restraints.get(&j) {
                        if value < r {
                            self.push_event(
                                stage,
                                p,
                                EventKind::Injury { victim: q as u32, i: j, value },
                            );
                        }
                    }
                }
            }
            Side::B => {
                if sched.a.contains_element(value) {
                    return Err(StepError::DisjointnessViolation { j, value, stage });
                }
                sched.b.insert(value, stage);
                self.roster[p].state.markers.get_mut(&key).expect("marker exists").status =
                    MarkerStatus::FiredB(stage);
                self.push_event(stage, p, EventKind::EnumerateB { j, value, sigma: sigma.clone() });
            }
        }
        Ok(())
    }
}
