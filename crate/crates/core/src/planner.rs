//! Synchronization-constrained replanning.
//!
//! Agents out of contact cannot receive a new plan, so the planner must keep
//! their known plans intact until they can next synchronize. For every absent
//! agent the planner pins its believed plan from the current step up to the
//! next synchronization step of the previous global plan, and requires the new
//! plan to be in the agent's synchronization set at that step
//! ([`PlanningMode::FirstSync`]) or at every later synchronization step of the
//! previous plan ([`PlanningMode::AllSyncs`]).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::{solve, Infeasible, PinConstraint, SolveRequest, SolverConfig, SyncVisitConstraint};
use crate::sync_model::{future_sync_steps, PlanBeliefs, SyncStates};
use crate::tasking::TaskSiteAssignment;
use crate::transition_system::{Joint, MultiAgentSystem, StateLike, Trajectory, TransitionSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlanningMode {
    /// Require only the first future synchronization step (`alg1`).
    #[serde(rename = "alg1")]
    FirstSync,
    /// Require every future synchronization step (`alg3`).
    #[serde(rename = "alg3")]
    AllSyncs,
}

impl fmt::Display for PlanningMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FirstSync => "alg1",
            Self::AllSyncs => "alg3",
        })
    }
}

impl FromStr for PlanningMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "alg1" => Ok(Self::FirstSync),
            "alg3" => Ok(Self::AllSyncs),
            other => Err(format!("unknown planning mode `{other}` (expected alg1 or alg3)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("agent {agent} is out of contact at step {step} and the current plan has no later sync step")]
    NoFutureSync { agent: usize, step: usize },
    #[error("planner belief of agent {agent} does not cover step {step}")]
    BeliefGap { agent: usize, step: usize },
    #[error(transparent)]
    Infeasible(#[from] Infeasible),
    #[error("new plan breaks the known plan of agent {agent} at step {step}")]
    PrefixViolation { agent: usize, step: usize },
}

/// One replanning event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanRevision<S> {
    pub step: usize,
    pub mode: PlanningMode,
    pub pins: Vec<PinConstraint<S>>,
    pub sync_visits: Vec<SyncVisitConstraint>,
    pub plan: Trajectory<Joint<S>>,
}

/// Pins and sync visits for every agent not in contact at `x_k`.
pub fn sync_constraints<S: StateLike>(
    beliefs: &PlanBeliefs<S>,
    sync: &SyncStates<S>,
    x_k: &Joint<S>,
    k: usize,
    mode: PlanningMode,
) -> Result<(Vec<PinConstraint<S>>, Vec<SyncVisitConstraint>), PlanError> {
    sync_constraints_for(beliefs, sync, &sync.contacts(x_k), k, mode)
}

/// Pins and sync visits for every agent outside `contacts`.
pub fn sync_constraints_for<S: StateLike>(
    beliefs: &PlanBeliefs<S>,
    sync: &SyncStates<S>,
    contacts: &[usize],
    k: usize,
    mode: PlanningMode,
) -> Result<(Vec<PinConstraint<S>>, Vec<SyncVisitConstraint>), PlanError> {
    let mut pins = Vec::new();
    let mut visits = Vec::new();
    for agent in 0..beliefs.agent_count() {
        if contacts.contains(&agent) {
            continue;
        }
        let upcoming = future_sync_steps(&beliefs.global_plan, sync, agent, k);
        let Some(&first) = upcoming.first() else {
            return Err(PlanError::NoFutureSync { agent, step: k });
        };
        let required = match mode {
            PlanningMode::FirstSync => &upcoming[..1],
            PlanningMode::AllSyncs => &upcoming[..],
        };
        visits.extend(required.iter().map(|&step| SyncVisitConstraint { agent, step }));
        let belief = &beliefs.planner_belief[agent];
        for step in k..=first {
            let state = belief
                .get(step)
                .ok_or(PlanError::BeliefGap { agent, step })?
                .clone();
            pins.push(PinConstraint { agent, step, state });
        }
    }
    Ok((pins, visits))
}

/// Checks a revision against the beliefs it was built from.
pub fn check_prefix_preservation<S: StateLike>(
    revision: &PlanRevision<S>,
    prior: &PlanBeliefs<S>,
    sync: &SyncStates<S>,
) -> Result<(), PlanError> {
    for pin in &revision.pins {
        let believed = prior.planner_belief[pin.agent].get(pin.step);
        let planned = revision.plan.get(pin.step).map(|x| &x[pin.agent]);
        if believed.is_none() || believed != planned {
            return Err(PlanError::PrefixViolation { agent: pin.agent, step: pin.step });
        }
    }
    for v in &revision.sync_visits {
        if !revision.plan.get(v.step).is_some_and(|x| sync.contains(v.agent, x)) {
            return Err(PlanError::PrefixViolation { agent: v.agent, step: v.step });
        }
    }
    Ok(())
}

/// Builds the constraint sets for `mode`, solves and audits.
#[allow(clippy::too_many_arguments)]
pub fn replan<A: TransitionSystem>(
    system: &MultiAgentSystem<A>,
    beliefs: &PlanBeliefs<A::State>,
    sync: &SyncStates<A::State>,
    x_k: &Joint<A::State>,
    k: usize,
    assignment: &TaskSiteAssignment<A::State>,
    config: &SolverConfig,
    mode: PlanningMode,
) -> Result<PlanRevision<A::State>, PlanError> {
    replan_with_contacts(system, beliefs, sync, x_k, &sync.contacts(x_k), k, assignment, config, mode)
}

/// As [`replan`], with the agents in contact given explicitly. Absent agents
/// are constrained even when their believed state at `k` is a sync state.
#[allow(clippy::too_many_arguments)]
pub fn replan_with_contacts<A: TransitionSystem>(
    system: &MultiAgentSystem<A>,
    beliefs: &PlanBeliefs<A::State>,
    sync: &SyncStates<A::State>,
    x_k: &Joint<A::State>,
    contacts: &[usize],
    k: usize,
    assignment: &TaskSiteAssignment<A::State>,
    config: &SolverConfig,
    mode: PlanningMode,
) -> Result<PlanRevision<A::State>, PlanError> {
    let (pins, sync_visits) = sync_constraints_for(beliefs, sync, contacts, k, mode)?;
    let req = SolveRequest {
        system,
        start: x_k.clone(),
        start_step: k,
        assignment,
        sync,
        pins,
        sync_visits,
        config: config.clone(),
    };
    let plan = solve(&req)?;
    let revision = PlanRevision {
        step: k,
        mode,
        pins: req.pins,
        sync_visits: req.sync_visits,
        plan,
    };
    check_prefix_preservation(&revision, beliefs, sync)?;
    Ok(revision)
}

/// Planning with opportunistic synchronization: only the first future sync
/// step of each absent agent is required.
pub fn plan_with_sync<A: TransitionSystem>(
    system: &MultiAgentSystem<A>,
    beliefs: &PlanBeliefs<A::State>,
    sync: &SyncStates<A::State>,
    x_k: &Joint<A::State>,
    k: usize,
    assignment: &TaskSiteAssignment<A::State>,
    config: &SolverConfig,
) -> Result<PlanRevision<A::State>, PlanError> {
    replan(system, beliefs, sync, x_k, k, assignment, config, PlanningMode::FirstSync)
}

/// Planning with opportunistic synchronization under disturbance: every future
/// sync step of each absent agent is required.
pub fn plan_with_sync_disturbance<A: TransitionSystem>(
    system: &MultiAgentSystem<A>,
    beliefs: &PlanBeliefs<A::State>,
    sync: &SyncStates<A::State>,
    x_k: &Joint<A::State>,
    k: usize,
    assignment: &TaskSiteAssignment<A::State>,
    config: &SolverConfig,
) -> Result<PlanRevision<A::State>, PlanError> {
    replan(system, beliefs, sync, x_k, k, assignment, config, PlanningMode::AllSyncs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sync_model::SyncRule;
    use crate::tasking::StateClass;
    use crate::transition_system::{project, ExplicitSystem};

    fn line(n: i32) -> ExplicitSystem<i32> {
        let mut t = Vec::new();
        for s in 0..n {
            t.push((s, s));
            if s + 1 < n {
                t.push((s, s + 1));
                t.push((s + 1, s));
            }
        }
        ExplicitSystem::new(0..n, t).unwrap()
    }

    fn joint_plan(rows: &[[i32; 2]]) -> Trajectory<Joint<i32>> {
        Trajectory::new(0, rows.iter().map(|r| Joint(r.to_vec())).collect()).unwrap()
    }

    /// Agent 0 is always in sync; agent 1 only at cell 0.
    fn setup() -> (MultiAgentSystem<ExplicitSystem<i32>>, SyncStates<i32>) {
        let sys = MultiAgentSystem::new(vec![line(6), line(6)]).unwrap();
        let sync = SyncStates::new(vec![SyncRule::always(), SyncRule::local(|s: &i32| *s == 0)]);
        (sys, sync)
    }

    #[test]
    fn all_in_sync_means_no_constraints() {
        let (sys, _) = setup();
        let sync = SyncStates::new(vec![SyncRule::always(), SyncRule::always()]);
        let beliefs = PlanBeliefs::initial(joint_plan(&[[0, 0], [1, 1]]));
        let tasks = TaskSiteAssignment::new([StateClass::new("t", |s: &i32| *s == 3)]).unwrap();
        let cfg = SolverConfig::default();
        let x = Joint(vec![1, 1]);
        let a = plan_with_sync(&sys, &beliefs, &sync, &x, 1, &tasks, &cfg).unwrap();
        let b = plan_with_sync_disturbance(&sys, &beliefs, &sync, &x, 1, &tasks, &cfg).unwrap();
        assert!(a.pins.is_empty() && a.sync_visits.is_empty());
        assert_eq!(a.plan, b.plan);
        let raw = solve(&SolveRequest::new(&sys, x, 1, &tasks, &sync, cfg)).unwrap();
        assert_eq!(a.plan, raw);
    }

    #[test]
    fn absent_agent_prefix_preserved_until_sync() {
        let (sys, sync) = setup();
        // Old plan: agent 1 goes 0 -> 1 -> 2 -> 1 -> 0 (back in sync at step 4).
        let old = joint_plan(&[[0, 0], [0, 1], [0, 2], [0, 1], [0, 0], [0, 0]]);
        let beliefs = PlanBeliefs::initial(old);
        let tasks = TaskSiteAssignment::new([StateClass::new("far", |s: &i32| *s == 5)]).unwrap();
        let x = Joint(vec![0, 1]);
        let rev = plan_with_sync(&sys, &beliefs, &sync, &x, 1, &tasks, &SolverConfig::default()).unwrap();
        let own = project(&rev.plan, 1).unwrap();
        for k in 1..=4 {
            assert_eq!(own.at(k), beliefs.planner_belief[1].at(k));
        }
        assert_eq!(rev.sync_visits, vec![SyncVisitConstraint { agent: 1, step: 4 }]);
        assert_eq!(rev.pins.len(), 4);
    }

    #[test]
    fn all_syncs_mode_visits_every_old_sync() {
        let (sys, sync) = setup();
        let old = joint_plan(&[[0, 0], [0, 1], [0, 1], [0, 0], [0, 1], [0, 1], [0, 0]]);
        let beliefs = PlanBeliefs::initial(old);
        let tasks = TaskSiteAssignment::new([StateClass::new("far", |s: &i32| *s == 4)]).unwrap();
        let x = Joint(vec![0, 1]);
        let rev =
            plan_with_sync_disturbance(&sys, &beliefs, &sync, &x, 1, &tasks, &SolverConfig::default())
                .unwrap();
        assert_eq!(
            rev.sync_visits,
            vec![SyncVisitConstraint { agent: 1, step: 3 }, SyncVisitConstraint { agent: 1, step: 6 }]
        );
        assert_eq!(rev.plan.at(3).unwrap()[1], 0);
        assert_eq!(rev.plan.at(6).unwrap()[1], 0);
        // The all-syncs plan also meets the first-sync constraints.
        let (pins1, visits1) = sync_constraints(&beliefs, &sync, &x, 1, PlanningMode::FirstSync).unwrap();
        assert_eq!(pins1, rev.pins);
        assert!(visits1.iter().all(|v| rev.sync_visits.contains(v)));
    }

    #[test]
    fn missing_future_sync_is_an_error() {
        let (sys, sync) = setup();
        let old = joint_plan(&[[0, 0], [0, 1], [0, 2]]);
        let beliefs = PlanBeliefs::initial(old);
        let tasks = TaskSiteAssignment::default();
        let x = Joint(vec![0, 1]);
        for mode in [PlanningMode::FirstSync, PlanningMode::AllSyncs] {
            let err = replan(&sys, &beliefs, &sync, &x, 1, &tasks, &SolverConfig::default(), mode)
                .unwrap_err();
            assert_eq!(err, PlanError::NoFutureSync { agent: 1, step: 1 });
        }
    }

    #[test]
    fn absent_agent_believed_in_sync_is_still_pinned() {
        let (sys, sync) = setup();
        // Agent 1 is believed back at its sync cell at step 2 but was not heard from.
        let old = joint_plan(&[[0, 0], [0, 1], [0, 0], [0, 1], [0, 0]]);
        let beliefs = PlanBeliefs::initial(old);
        let x = Joint(vec![0, 0]);
        let (pins, _) = sync_constraints(&beliefs, &sync, &x, 2, PlanningMode::FirstSync).unwrap();
        assert!(pins.is_empty());
        let tasks = TaskSiteAssignment::new([StateClass::new("t", |s: &i32| *s == 3)]).unwrap();
        let rev = replan_with_contacts(
            &sys,
            &beliefs,
            &sync,
            &x,
            &[0],
            2,
            &tasks,
            &SolverConfig::default(),
            PlanningMode::FirstSync,
        )
        .unwrap();
        assert_eq!(rev.pins.iter().map(|p| p.step).collect::<Vec<_>>(), vec![2, 3, 4]);
        assert_eq!(rev.plan.get(3).map(|x| x[1]), Some(1));
        assert_eq!(rev.plan.get(4).map(|x| x[1]), Some(0));
    }

    #[test]
    fn violating_plan_is_detected() {
        let (_, sync) = setup();
        let old = joint_plan(&[[0, 0], [0, 1], [0, 2], [0, 1], [0, 0]]);
        let beliefs = PlanBeliefs::initial(old);
        let (pins, visits) =
            sync_constraints(&beliefs, &sync, &Joint(vec![0, 1]), 1, PlanningMode::FirstSync).unwrap();
        // Hand-built plan that moves agent 1 early.
        let bad = PlanRevision {
            step: 1,
            mode: PlanningMode::FirstSync,
            pins,
            sync_visits: visits,
            plan: Trajectory::new(1, vec![Joint(vec![0, 1]), Joint(vec![0, 0]), Joint(vec![0, 1]), Joint(vec![0, 0])])
                .unwrap(),
        };
        assert_eq!(
            check_prefix_preservation(&bad, &beliefs, &sync),
            Err(PlanError::PrefixViolation { agent: 1, step: 2 })
        );
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("alg1".parse::<PlanningMode>(), Ok(PlanningMode::FirstSync));
        assert_eq!("alg3".parse::<PlanningMode>(), Ok(PlanningMode::AllSyncs));
        assert!("alg2".parse::<PlanningMode>().is_err());
    }
}
