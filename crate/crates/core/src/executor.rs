//! The plan and execute loop.
//!
//! Each step every agent executes its eigen plan, possibly deviating under the
//! disturbance model and recovering agent-side. The realized joint state then
//! drives task bookkeeping and opportunistic synchronization. Agents in
//! contact upload their eigen plans; when something the planner relies on has
//! changed, the planner replans and the new plan is handed to every agent in
//! contact.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::planner::{replan_with_contacts, PlanError, PlanRevision, PlanningMode};
use crate::recovery::{recover, DisturbanceRecord, RecoveryError};
use crate::solver::{solve, SolveRequest, SolverConfig};
use crate::sync_model::{PlanBeliefs, SyncStates};
use crate::tasking::{apply_update, TaskSiteAssignment, TaskUpdate, Visit};
use crate::trace::{AbortReason, EpisodeTrace, TraceEvent};
use crate::transition_system::{Joint, MultiAgentSystem, Trajectory, TransitionSystem};

/// A task update applied at the start of `step`.
#[derive(Clone)]
pub struct ScheduledUpdate<S> {
    pub step: usize,
    pub update: TaskUpdate<S>,
}

/// Everything fixed about an episode before it starts.
pub struct Scenario<A: TransitionSystem> {
    pub system: MultiAgentSystem<A>,
    pub assignment: TaskSiteAssignment<A::State>,
    pub sync: SyncStates<A::State>,
    pub initial: Joint<A::State>,
    pub updates: Vec<ScheduledUpdate<A::State>>,
    pub solver: SolverConfig,
}

/// Forces `agent` into `state` at `step`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedDisturbance<S> {
    pub agent: usize,
    pub step: usize,
    pub state: S,
}

/// Random and scripted deviations from the eigen plans.
///
/// At every step each agent deviates with probability `probability`. A
/// deviation replaces the planned transition with a random different valid
/// transition for `magnitude` consecutive steps. Scripted entries take
/// precedence over random draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceModel<S> {
    pub probability: f64,
    pub magnitude: usize,
    pub seed: u64,
    #[serde(default)]
    pub script: Vec<ScriptedDisturbance<S>>,
}

impl<S> DisturbanceModel<S> {
    pub fn none() -> Self {
        Self::random(0.0, 0)
    }

    pub fn random(probability: f64, seed: u64) -> Self {
        Self {
            probability,
            magnitude: 1,
            seed,
            script: Vec::new(),
        }
    }

    pub fn scripted(script: Vec<ScriptedDisturbance<S>>) -> Self {
        Self {
            script,
            ..Self::none()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutorConfig {
    pub mode: PlanningMode,
    /// Abort once this many steps have elapsed. Defaults to five times the
    /// undisturbed task time.
    pub step_budget: Option<usize>,
    /// Largest recovery length searched for.
    pub recovery_limit: Option<usize>,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            mode: PlanningMode::AllSyncs,
            step_budget: None,
            recovery_limit: None,
        }
    }
}

/// A replanning event together with the beliefs it was computed from.
#[derive(Debug, Clone)]
pub struct RevisionRecord<S> {
    pub revision: PlanRevision<S>,
    /// `None` for the initial plan.
    pub prior: Option<PlanBeliefs<S>>,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult<S> {
    pub realized: Trajectory<Joint<S>>,
    pub satisfied: bool,
    pub task_time: Option<usize>,
    pub abort: Option<(AbortReason, String)>,
    pub trace: EpisodeTrace<S>,
    pub revisions: Vec<RevisionRecord<S>>,
    pub disturbances: Vec<DisturbanceRecord<S>>,
    /// Assignment in force from each step on.
    pub assignments: Vec<(usize, TaskSiteAssignment<S>)>,
    /// First satisfying visit of each label.
    pub visits: BTreeMap<String, Visit>,
    pub step_budget: usize,
}

impl<S> EpisodeResult<S> {
    pub fn aborted(&self) -> bool {
        self.abort.is_some()
    }

    pub fn abort_reason(&self) -> Option<AbortReason> {
        self.abort.as_ref().map(|(r, _)| *r)
    }

    /// Assignment in force at `step`.
    pub fn assignment_at(&self, step: usize) -> &TaskSiteAssignment<S> {
        &self
            .assignments
            .iter()
            .rev()
            .find(|(s, _)| *s <= step)
            .expect("initial assignment recorded")
            .1
    }

    /// Plan revision in force at `step`.
    pub fn revision_at(&self, step: usize) -> Option<&PlanRevision<S>> {
        self.revisions
            .iter()
            .rev()
            .map(|r| &r.revision)
            .find(|r| r.step <= step)
    }
}

/// Task time of the undisturbed episode, if it completes within the solver
/// horizon.
pub fn undisturbed_task_time<A>(scenario: &Scenario<A>, mode: PlanningMode) -> Option<usize>
where
    A: TransitionSystem,
    A::State: Serialize,
{
    let cfg = ExecutorConfig {
        mode,
        step_budget: Some(scenario.solver.horizon),
        recovery_limit: None,
    };
    run_episode(scenario, &DisturbanceModel::none(), &cfg).task_time
}

/// Default step budget: five times the undisturbed task time.
pub fn default_step_budget<A>(scenario: &Scenario<A>, mode: PlanningMode) -> usize
where
    A: TransitionSystem,
    A::State: Serialize,
{
    undisturbed_task_time(scenario, mode).map_or(scenario.solver.horizon, |t| 5 * t)
}

/// Short content hash of a plan.
pub fn plan_hash<S: Serialize>(plan: &Trajectory<Joint<S>>) -> String {
    let bytes = serde_json::to_vec(plan).expect("plan serializes");
    hex::encode(&Sha256::digest(bytes)[..8])
}

/// Runs one episode to satisfaction, abort, or budget exhaustion.
pub fn run_episode<A>(
    scenario: &Scenario<A>,
    model: &DisturbanceModel<A::State>,
    config: &ExecutorConfig,
) -> EpisodeResult<A::State>
where
    A: TransitionSystem,
    A::State: Serialize,
{
    let budget = config
        .step_budget
        .unwrap_or_else(|| default_step_budget(scenario, config.mode));
    let mut run = Run {
        scn: scenario,
        model,
        config,
        rng: ChaCha8Rng::seed_from_u64(model.seed),
        assignment: scenario.assignment.clone(),
        assignments: vec![(0, scenario.assignment.clone())],
        visits: BTreeMap::new(),
        realized: vec![scenario.initial.clone()],
        beliefs: None,
        trace: EpisodeTrace::new(),
        revisions: Vec::new(),
        disturbances: Vec::new(),
        pending: false,
        disturbed_left: vec![0; scenario.system.agent_count()],
        outcome: None,
    };
    run.start();
    let mut k = 1;
    while run.outcome.is_none() {
        if k > budget {
            let events = vec![TraceEvent::Abort {
                reason: AbortReason::Timeout,
                detail: format!("step budget {budget} exhausted"),
            }];
            run.trace.extend_step(k, events);
            run.outcome = Some(Err((AbortReason::Timeout, format!("step budget {budget} exhausted"))));
            break;
        }
        run.step(k);
        k += 1;
    }
    run.finish(budget)
}

type Outcome = Result<usize, (AbortReason, String)>;

struct Run<'a, A: TransitionSystem> {
    scn: &'a Scenario<A>,
    model: &'a DisturbanceModel<A::State>,
    config: &'a ExecutorConfig,
    rng: ChaCha8Rng,
    assignment: TaskSiteAssignment<A::State>,
    assignments: Vec<(usize, TaskSiteAssignment<A::State>)>,
    visits: BTreeMap<String, Visit>,
    realized: Vec<Joint<A::State>>,
    beliefs: Option<PlanBeliefs<A::State>>,
    trace: EpisodeTrace<A::State>,
    revisions: Vec<RevisionRecord<A::State>>,
    disturbances: Vec<DisturbanceRecord<A::State>>,
    pending: bool,
    disturbed_left: Vec<usize>,
    outcome: Option<Outcome>,
}

impl<A> Run<'_, A>
where
    A: TransitionSystem,
    A::State: Serialize,
{
    fn agents(&self) -> usize {
        self.scn.system.agent_count()
    }

    fn remaining(&self) -> TaskSiteAssignment<A::State> {
        let open: BTreeSet<String> = self
            .assignment
            .labels()
            .into_iter()
            .filter(|l| !self.visits.contains_key(l))
            .collect();
        self.assignment.restricted_to(&open)
    }

    fn abort(&mut self, events: &mut Vec<TraceEvent<A::State>>, reason: AbortReason, detail: String) {
        if self.outcome.is_some() {
            return;
        }
        events.push(TraceEvent::Abort {
            reason,
            detail: detail.clone(),
        });
        self.outcome = Some(Err((reason, detail)));
    }

    /// Records task visits at `k`; returns true when every class is satisfied.
    fn record_tasks(&mut self, k: usize, events: &mut Vec<TraceEvent<A::State>>) -> bool {
        let x = self.realized[k].clone();
        for class in self.assignment.classes() {
            if self.visits.contains_key(class.label()) {
                continue;
            }
            if let Some(agent) = class.witness(&x) {
                self.visits
                    .insert(class.label().to_string(), Visit { agent, step: k });
                events.push(TraceEvent::TaskSatisfied {
                    label: class.label().to_string(),
                    agent,
                });
            }
        }
        if self.assignment.labels().iter().all(|l| self.visits.contains_key(l)) {
            events.push(TraceEvent::Done { task_time: k });
            self.outcome = Some(Ok(k));
            true
        } else {
            false
        }
    }

    fn revision_event(rev: &PlanRevision<A::State>) -> TraceEvent<A::State> {
        TraceEvent::PlanRevision {
            mode: rev.mode,
            pins: rev.pins.len(),
            sync_visits: rev.sync_visits.len(),
            plan_end: rev.plan.end_step(),
            plan_hash: plan_hash(&rev.plan),
        }
    }

    fn start(&mut self) {
        let mut events: Vec<_> = (0..self.agents())
            .map(|agent| TraceEvent::Realized {
                agent,
                state: self.realized[0][agent].clone(),
            })
            .collect();
        if self.record_tasks(0, &mut events) {
            self.trace.extend_step(0, events);
            return;
        }
        let remaining = self.remaining();
        let req = SolveRequest::new(
            &self.scn.system,
            self.scn.initial.clone(),
            0,
            &remaining,
            &self.scn.sync,
            self.scn.solver.clone(),
        );
        match solve(&req) {
            Ok(plan) => {
                let revision = PlanRevision {
                    step: 0,
                    mode: self.config.mode,
                    pins: Vec::new(),
                    sync_visits: Vec::new(),
                    plan,
                };
                events.push(Self::revision_event(&revision));
                events.extend((0..self.agents()).map(|agent| TraceEvent::Sync {
                    agent,
                    belief_changed: false,
                }));
                self.beliefs = Some(PlanBeliefs::initial(revision.plan.clone()));
                self.revisions.push(RevisionRecord { revision, prior: None });
            }
            Err(e) => self.abort(&mut events, AbortReason::Infeasible, e.to_string()),
        }
        self.trace.extend_step(0, events);
    }

    /// Chooses the state agent `i` reaches at step `k`.
    fn execute_agent(&mut self, i: usize, k: usize, planned: &A::State) -> Result<A::State, String> {
        let prev = &self.realized[k - 1][i];
        let sys = self.scn.system.agent(i);
        if let Some(s) = self.model.script.iter().find(|d| d.agent == i && d.step == k) {
            if !sys.is_transition(prev, &s.state) {
                return Err(format!("scripted state for agent {i} at step {k} is not reachable"));
            }
            return Ok(s.state.clone());
        }
        let draw: f64 = self.rng.gen();
        if self.disturbed_left[i] == 0 && draw < self.model.probability {
            self.disturbed_left[i] = self.model.magnitude.max(1);
        }
        if self.disturbed_left[i] == 0 {
            return Ok(planned.clone());
        }
        self.disturbed_left[i] -= 1;
        let options: Vec<_> = sys
            .successors(prev)
            .into_iter()
            .filter(|s| s != planned)
            .collect();
        if options.is_empty() {
            return Ok(planned.clone());
        }
        Ok(options[self.rng.gen_range(0..options.len())].clone())
    }

    fn step(&mut self, k: usize) {
        let mut events = Vec::new();
        for u in self.scn.updates.iter().filter(|u| u.step == k) {
            match apply_update(&self.assignment, &u.update) {
                Ok(next) => {
                    for label in &u.update.removed {
                        self.visits.remove(label);
                    }
                    self.assignment = next;
                    self.assignments.push((k, self.assignment.clone()));
                    self.pending = true;
                    events.push(TraceEvent::TaskUpdateApplied {
                        removed: u.update.removed.iter().cloned().collect(),
                        added: u.update.added.iter().map(|c| c.label().to_string()).collect(),
                    });
                }
                Err(e) => {
                    self.abort(&mut events, AbortReason::InvalidScript, format!("task update: {e}"));
                    self.trace.extend_step(k, events);
                    return;
                }
            }
        }

        let mut beliefs = self.beliefs.take().expect("initial plan exists");
        let mut next = Vec::with_capacity(self.agents());
        for i in 0..self.agents() {
            let Some(planned) = beliefs.eigen[i].get(k).cloned() else {
                next.push(self.realized[k - 1][i].clone());
                self.abort(
                    &mut events,
                    AbortReason::PlanExhausted,
                    format!("eigen plan of agent {i} ends before step {k}"),
                );
                continue;
            };
            let actual = match self.execute_agent(i, k, &planned) {
                Ok(s) => s,
                Err(detail) => {
                    next.push(planned);
                    self.abort(&mut events, AbortReason::InvalidScript, detail);
                    continue;
                }
            };
            if actual != planned {
                let sys = self.scn.system.agent(i);
                let result = recover(sys, &actual, &beliefs.eigen[i], k, self.config.recovery_limit);
                let n_star = result.as_ref().ok().map(|r| r.steps);
                events.push(TraceEvent::Disturbance {
                    agent: i,
                    planned: planned.clone(),
                    realized: actual.clone(),
                    n_star,
                });
                self.disturbances.push(DisturbanceRecord {
                    agent: i,
                    step: k,
                    planned,
                    realized: actual.clone(),
                    n_star,
                });
                match result {
                    Ok(r) => {
                        events.push(TraceEvent::Recovery {
                            agent: i,
                            steps: r.steps,
                            rejoin_step: k + r.steps,
                        });
                        beliefs.eigen[i] = r.eigen;
                    }
                    Err(e) => {
                        let detail = match e {
                            RecoveryError::Unrecoverable { .. } => e.to_string(),
                            other => format!("agent {i}: {other}"),
                        };
                        self.abort(&mut events, AbortReason::Unrecoverable, detail);
                    }
                }
            }
            next.push(actual);
        }
        let x = Joint(next);
        self.realized.push(x.clone());
        events.extend((0..self.agents()).map(|agent| TraceEvent::Realized {
            agent,
            state: x[agent].clone(),
        }));
        if self.outcome.is_some() || self.record_tasks(k, &mut events) {
            self.beliefs = Some(beliefs);
            self.trace.extend_step(k, events);
            return;
        }

        let contacts = self.scn.sync.contacts(&x);
        for &i in &contacts {
            let changed = beliefs.upload(i);
            if changed || beliefs.global_plan.get(k).map(|g| &g[i]) != Some(&x[i]) {
                self.pending = true;
            }
            events.push(TraceEvent::Sync {
                agent: i,
                belief_changed: changed,
            });
        }
        let remaining = self.remaining();
        if !self.pending && !plan_covers(&beliefs.global_plan, &remaining, k) {
            self.pending = true;
        }
        if !contacts.is_empty() && self.pending {
            match self.replan_at(&beliefs, &x, &contacts, k, &remaining) {
                Ok(revision) => {
                    events.push(Self::revision_event(&revision));
                    self.revisions.push(RevisionRecord {
                        revision: revision.clone(),
                        prior: Some(beliefs.clone()),
                    });
                    beliefs.global_plan = revision.plan;
                    self.pending = false;
                }
                Err(PlanError::NoFutureSync { agent, step }) => self.abort(
                    &mut events,
                    AbortReason::NoFutureSync,
                    format!("agent {agent} has no future sync step after {step}"),
                ),
                Err(e) => self.abort(&mut events, AbortReason::Infeasible, e.to_string()),
            }
        }
        self.beliefs = Some(beliefs.sync_update(&self.scn.sync, &x, k));
        self.trace.extend_step(k, events);
    }

    fn replan_at(
        &self,
        beliefs: &PlanBeliefs<A::State>,
        x: &Joint<A::State>,
        contacts: &[usize],
        k: usize,
        remaining: &TaskSiteAssignment<A::State>,
    ) -> Result<PlanRevision<A::State>, PlanError> {
        let mut start = Vec::with_capacity(self.agents());
        for i in 0..self.agents() {
            if contacts.contains(&i) {
                start.push(x[i].clone());
            } else {
                let believed = beliefs.planner_belief[i]
                    .get(k)
                    .ok_or(PlanError::BeliefGap { agent: i, step: k })?;
                start.push(believed.clone());
            }
        }
        replan_with_contacts(
            &self.scn.system,
            beliefs,
            &self.scn.sync,
            &Joint(start),
            contacts,
            k,
            remaining,
            &self.scn.solver,
            self.config.mode,
        )
    }

    fn finish(self, budget: usize) -> EpisodeResult<A::State> {
        let outcome = self.outcome.expect("episode finished");
        let (task_time, abort) = match outcome {
            Ok(t) => (Some(t), None),
            Err(a) => (None, Some(a)),
        };
        EpisodeResult {
            realized: Trajectory::new(0, self.realized).expect("non-empty"),
            satisfied: task_time.is_some(),
            task_time,
            abort,
            trace: self.trace,
            revisions: self.revisions,
            disturbances: self.disturbances,
            assignments: self.assignments,
            visits: self.visits,
            step_budget: budget,
        }
    }
}

/// Whether `plan` visits every class of `open` strictly after step `k`.
fn plan_covers<S: Clone + Ord + std::fmt::Debug>(
    plan: &Trajectory<Joint<S>>,
    open: &TaskSiteAssignment<S>,
    k: usize,
) -> bool {
    open.classes().all(|c| {
        plan.steps()
            .filter(|(s, _)| *s > k)
            .any(|(_, x)| c.contains(x))
    })
}
