//! Constraint solver producing task-satisfying joint plans.
//!
//! A request fixes the start state and step, the task classes to visit, pinned
//! agent states (the Φ set of the planner) and steps at which an agent must be
//! in its synchronization set (the Ψ set). Plans are found in two stages:
//!
//! 1. Decoupled: each agent is searched in its own time-expanded graph, tasks
//!    are handed out by greedy earliest-completion insertion, and the agent
//!    plans are zipped into a joint plan of common length.
//! 2. Joint: a bounded breadth-first search over joint states, used whenever
//!    the decoupled stage fails. It is exact within its node budget.
//!
//! Every plan is checked by [`audit_plan`] before it is returned.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sync_model::{SyncRule, SyncStates};
use crate::tasking::{satisfies, StateClass, TaskSiteAssignment};
use crate::transition_system::{
    recompose, Joint, MultiAgentSystem, StateLike, Trajectory, TransitionSystem,
};

/// Agent `agent` must be in `state` at `step`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PinConstraint<S> {
    pub agent: usize,
    pub step: usize,
    pub state: S,
}

/// The joint state at `step` must lie in agent `agent`'s synchronization set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SyncVisitConstraint {
    pub agent: usize,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Maximum plan length in steps.
    pub horizon: usize,
    /// Node budget of the joint fallback search.
    pub joint_node_budget: usize,
    /// Require every agent to end the plan in its own synchronization set.
    pub end_in_sync: bool,
    /// Extra steps tried beyond the decoupled makespan when padding agents to
    /// a common plan length.
    pub padding_slack: usize,
    /// Steps the plan continues past the completion of the last task, when
    /// the horizon allows.
    pub tail: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            horizon: 200,
            joint_node_budget: 200_000,
            end_in_sync: false,
            padding_slack: 6,
            tail: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintClass {
    Start,
    Pin,
    SyncVisit,
    Terminal,
    Task,
    Validity,
    Budget,
}

impl fmt::Display for ConstraintClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Start => "start",
            Self::Pin => "pin",
            Self::SyncVisit => "sync-visit",
            Self::Terminal => "terminal",
            Self::Task => "task",
            Self::Validity => "validity",
            Self::Budget => "budget",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("infeasible ({class}): {detail}")]
pub struct Infeasible {
    pub class: ConstraintClass,
    pub detail: String,
}

impl Infeasible {
    fn new(class: ConstraintClass, detail: impl Into<String>) -> Self {
        Self { class, detail: detail.into() }
    }
}

pub struct SolveRequest<'a, A: TransitionSystem> {
    pub system: &'a MultiAgentSystem<A>,
    pub start: Joint<A::State>,
    pub start_step: usize,
    pub assignment: &'a TaskSiteAssignment<A::State>,
    pub sync: &'a SyncStates<A::State>,
    pub pins: Vec<PinConstraint<A::State>>,
    pub sync_visits: Vec<SyncVisitConstraint>,
    pub config: SolverConfig,
}

impl<'a, A: TransitionSystem> SolveRequest<'a, A> {
    /// Unconstrained request.
    pub fn new(
        system: &'a MultiAgentSystem<A>,
        start: Joint<A::State>,
        start_step: usize,
        assignment: &'a TaskSiteAssignment<A::State>,
        sync: &'a SyncStates<A::State>,
        config: SolverConfig,
    ) -> Self {
        Self {
            system,
            start,
            start_step,
            assignment,
            sync,
            pins: Vec::new(),
            sync_visits: Vec::new(),
            config,
        }
    }

    fn last_constraint_step(&self) -> usize {
        self.pins
            .iter()
            .map(|p| p.step)
            .chain(self.sync_visits.iter().map(|v| v.step))
            .max()
            .unwrap_or(self.start_step)
            .max(self.start_step)
    }

    fn last_step(&self) -> usize {
        self.start_step + self.config.horizon
    }

    fn agent_pins(&self, agent: usize) -> Result<BTreeMap<usize, A::State>, Infeasible> {
        let mut out = BTreeMap::new();
        for p in self.pins.iter().filter(|p| p.agent == agent) {
            if let Some(prev) = out.insert(p.step, p.state.clone()) {
                if prev != p.state {
                    return Err(Infeasible::new(
                        ConstraintClass::Pin,
                        format!("conflicting pins for agent {agent} at step {}", p.step),
                    ));
                }
            }
        }
        Ok(out)
    }

    fn agent_visits(&self, agent: usize) -> BTreeSet<usize> {
        self.sync_visits
            .iter()
            .filter(|v| v.agent == agent)
            .map(|v| v.step)
            .collect()
    }

    fn check_well_formed(&self) -> Result<(), Infeasible> {
        let n = self.system.agent_count();
        if !self.system.contains(&self.start) {
            return Err(Infeasible::new(ConstraintClass::Start, "start state not in system"));
        }
        for p in &self.pins {
            if p.agent >= n || p.step < self.start_step {
                return Err(Infeasible::new(
                    ConstraintClass::Pin,
                    format!("malformed pin for agent {} at step {}", p.agent, p.step),
                ));
            }
            if p.step == self.start_step && self.start[p.agent] != p.state {
                return Err(Infeasible::new(
                    ConstraintClass::Start,
                    format!("pin for agent {} disagrees with start state", p.agent),
                ));
            }
        }
        for v in &self.sync_visits {
            if v.agent >= n || v.step <= self.start_step {
                return Err(Infeasible::new(
                    ConstraintClass::SyncVisit,
                    format!("malformed sync visit for agent {} at step {}", v.agent, v.step),
                ));
            }
        }
        if self.last_constraint_step() > self.last_step() {
            return Err(Infeasible::new(
                ConstraintClass::Pin,
                "constraint beyond the planning horizon",
            ));
        }
        Ok(())
    }
}

/// Solves `req`, returning a plan that has passed [`audit_plan`].
pub fn solve<A: TransitionSystem>(
    req: &SolveRequest<'_, A>,
) -> Result<Trajectory<Joint<A::State>>, Infeasible> {
    req.check_well_formed()?;
    if let Some(plan) = solve_decoupled(req)? {
        if audit_plan(req, &plan).is_ok() {
            return Ok(plan);
        }
        log::warn!("decoupled plan failed audit; falling back to joint search");
    }
    match solve_joint(req) {
        Ok(plan) => {
            audit_plan(req, &plan)
                .map_err(|v| Infeasible::new(v.class, format!("joint plan failed audit: {}", v.detail)))?;
            Ok(plan)
        }
        Err(SearchFailure::Budget) => Err(diagnose(req).unwrap_or_else(|| {
            Infeasible::new(ConstraintClass::Budget, "joint search budget exhausted")
        })),
        Err(SearchFailure::Exhausted) => Err(diagnose(req).unwrap_or_else(|| {
            Infeasible::new(
                ConstraintClass::Task,
                "no trajectory within the horizon satisfies the assignment",
            )
        })),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditViolation {
    pub class: ConstraintClass,
    pub detail: String,
}

/// Independent check of a plan against every constraint of `req`.
pub fn audit_plan<A: TransitionSystem>(
    req: &SolveRequest<'_, A>,
    plan: &Trajectory<Joint<A::State>>,
) -> Result<(), AuditViolation> {
    let fail = |class, detail: String| Err(AuditViolation { class, detail });
    if plan.start_step() != req.start_step || plan.first() != &req.start {
        return fail(ConstraintClass::Start, "plan does not begin at the start state".into());
    }
    if plan.len() > req.config.horizon {
        return fail(ConstraintClass::Task, format!("plan length {} exceeds horizon", plan.len()));
    }
    if let Err(e) = plan.validate(req.system) {
        return fail(ConstraintClass::Validity, e.to_string());
    }
    let sat = satisfies(plan, req.assignment);
    if !sat.satisfied {
        return fail(ConstraintClass::Task, "plan does not satisfy the assignment".into());
    }
    for p in &req.pins {
        match plan.get(p.step) {
            Some(x) if x[p.agent] == p.state => {}
            _ => {
                return fail(
                    ConstraintClass::Pin,
                    format!("agent {} not at pinned state at step {}", p.agent, p.step),
                )
            }
        }
    }
    for v in &req.sync_visits {
        match plan.get(v.step) {
            Some(x) if req.sync.contains(v.agent, x) => {}
            _ => {
                return fail(
                    ConstraintClass::SyncVisit,
                    format!("agent {} not in sync at step {}", v.agent, v.step),
                )
            }
        }
    }
    if req.config.end_in_sync {
        let last = plan.last();
        for i in 0..req.system.agent_count() {
            if !req.sync.contains(i, last) {
                return fail(ConstraintClass::Terminal, format!("agent {i} does not end in sync"));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SearchFailure {
    Exhausted,
    Budget,
}

#[derive(Debug, Clone, Copy)]
enum End {
    Earliest { min_step: usize },
    Exactly(usize),
}

/// Breadth-first search in a time-expanded graph. Among the node sequences
/// reaching a goal at the earliest (or the requested) step, returns the one
/// whose successive `prefer(node, next)` keys are lexicographically smallest.
#[allow(clippy::too_many_arguments)]
fn layered_search<N, F, V, G, P>(
    start: N,
    start_step: usize,
    last_step: usize,
    end: End,
    budget: usize,
    expand: F,
    valid: V,
    goal: G,
    prefer: P,
) -> Result<Vec<N>, SearchFailure>
where
    N: Clone + Ord + Hash,
    F: Fn(&N) -> Vec<N>,
    V: Fn(usize, &N) -> bool,
    G: Fn(usize, &N) -> bool,
    P: Fn(&N, &N) -> (u32, N),
{
    if !valid(start_step, &start) {
        return Err(SearchFailure::Exhausted);
    }
    let mut layers: Vec<Vec<N>> = vec![vec![start]];
    let mut total = 1usize;
    let mut t = start_step;
    loop {
        let current = layers.last().expect("non-empty");
        let at_goal_step = match end {
            End::Earliest { min_step } => t >= min_step,
            End::Exactly(target) => t == target,
        };
        if at_goal_step && current.iter().any(|n| goal(t, n)) {
            break;
        }
        if let End::Exactly(target) = end {
            if t >= target {
                return Err(SearchFailure::Exhausted);
            }
        }
        if t >= last_step {
            return Err(SearchFailure::Exhausted);
        }
        let mut next = BTreeSet::new();
        for n in current {
            for m in expand(n) {
                if valid(t + 1, &m) {
                    next.insert(m);
                }
            }
        }
        if next.is_empty() {
            return Err(SearchFailure::Exhausted);
        }
        total += next.len();
        if total > budget {
            return Err(SearchFailure::Budget);
        }
        layers.push(next.into_iter().collect());
        t += 1;
    }

    let end_step = t;
    let depth = layers.len() - 1;
    let mut alive: Vec<HashSet<N>> = vec![HashSet::new(); depth + 1];
    alive[depth] = layers[depth]
        .iter()
        .filter(|n| goal(end_step, n))
        .cloned()
        .collect();
    for j in (0..depth).rev() {
        let (head, tail) = alive.split_at_mut(j + 1);
        let ahead = &tail[0];
        head[j] = layers[j]
            .iter()
            .filter(|n| expand(n).iter().any(|m| ahead.contains(m)))
            .cloned()
            .collect();
    }
    let mut path = vec![layers[0][0].clone()];
    for layer_alive in alive.iter().skip(1) {
        let cur = path.last().expect("non-empty");
        let next = expand(cur)
            .into_iter()
            .filter(|m| layer_alive.contains(m))
            .min_by_key(|m| prefer(cur, m))
            .expect("alive node has an alive successor");
        path.push(next);
    }
    Ok(path)
}

struct AgentProblem<'r, A: TransitionSystem> {
    system: &'r A,
    start: A::State,
    start_step: usize,
    last_step: usize,
    pins: BTreeMap<usize, A::State>,
    visits: BTreeSet<usize>,
    rule: &'r SyncRule<A::State>,
    end_in_sync: bool,
    min_end: usize,
    budget: usize,
}

impl<'r, A: TransitionSystem> AgentProblem<'r, A> {
    fn search(&self, tasks: &[&StateClass<A::State>], end: End) -> Result<Vec<A::State>, SearchFailure> {
        let full: u32 = if tasks.is_empty() { 0 } else { (1u32 << tasks.len()) - 1 };
        let mark = |s: &A::State, mask: u32| {
            tasks
                .iter()
                .enumerate()
                .fold(mask, |m, (j, c)| if c.contains_agent_state(s) { m | (1 << j) } else { m })
        };
        let start = (self.start.clone(), mark(&self.start, 0));
        let path = layered_search(
            start,
            self.start_step,
            self.last_step,
            end,
            self.budget,
            |(s, mask): &(A::State, u32)| {
                self.system
                    .successors(s)
                    .into_iter()
                    .map(|n| {
                        let m = mark(&n, *mask);
                        (n, m)
                    })
                    .collect()
            },
            |t, (s, _)| {
                self.pins.get(&t).is_none_or(|p| p == s)
                    && (!self.visits.contains(&t) || self.rule.local_holds(s))
            },
            |_, (s, mask)| *mask == full && (!self.end_in_sync || self.rule.local_holds(s)),
            |from: &(A::State, u32), to: &(A::State, u32)| {
                (self.system.preference(&from.0, &to.0), to.clone())
            },
        )?;
        Ok(path.into_iter().map(|(s, _)| s).collect())
    }

    /// A plan of exactly `target` steps: the earliest plan for `tasks`,
    /// continued by the preferred transitions until `target`, or any plan of
    /// that length when the continuation is infeasible.
    fn padded(&self, tasks: &[&StateClass<A::State>], target: usize) -> Result<Vec<A::State>, SearchFailure> {
        if let Ok(head) = self.search(tasks, End::Earliest { min_step: self.min_end }) {
            let end = self.start_step + head.len() - 1;
            if end == target {
                return Ok(head);
            }
            if end < target {
                let rest = AgentProblem {
                    start: head.last().expect("non-empty").clone(),
                    start_step: end,
                    pins: self.pins.clone(),
                    visits: self.visits.clone(),
                    ..*self
                };
                if let Ok(tail) = rest.search(&[], End::Exactly(target)) {
                    let mut path = head;
                    path.extend(tail.into_iter().skip(1));
                    return Ok(path);
                }
            }
        }
        self.search(tasks, End::Exactly(target))
    }

    fn earliest(&self, tasks: &[&StateClass<A::State>]) -> Option<usize> {
        self.search(tasks, End::Earliest { min_step: self.min_end })
            .ok()
            .map(|p| self.start_step + p.len() - 1)
    }
}

const AGENT_BUDGET: usize = 2_000_000;

fn agent_problems<'r, A: TransitionSystem>(
    req: &'r SolveRequest<'r, A>,
) -> Result<Vec<AgentProblem<'r, A>>, Infeasible> {
    let min_end = req.last_constraint_step();
    (0..req.system.agent_count())
        .map(|i| {
            Ok(AgentProblem {
                system: req.system.agent(i),
                start: req.start[i].clone(),
                start_step: req.start_step,
                last_step: req.last_step(),
                pins: req.agent_pins(i)?,
                visits: req.agent_visits(i),
                rule: req.sync.rule(i),
                end_in_sync: req.config.end_in_sync,
                min_end,
                budget: AGENT_BUDGET,
            })
        })
        .collect()
}

fn solve_decoupled<A: TransitionSystem>(
    req: &SolveRequest<'_, A>,
) -> Result<Option<Trajectory<Joint<A::State>>>, Infeasible> {
    let problems = agent_problems(req)?;
    let n = problems.len();
    let pending: Vec<&StateClass<A::State>> = req
        .assignment
        .classes()
        .filter(|c| !c.contains(&req.start))
        .collect();

    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut ends = Vec::with_capacity(n);
    for p in &problems {
        match p.earliest(&[]) {
            Some(e) => ends.push(e),
            None => return Ok(None),
        }
    }
    let mut cache: HashMap<(usize, Vec<usize>), Option<usize>> = HashMap::new();
    let mut unassigned: Vec<usize> = (0..pending.len()).collect();
    while !unassigned.is_empty() {
        let mut best: Option<((usize, usize, usize, usize), usize, usize)> = None;
        for &task in &unassigned {
            for (i, p) in problems.iter().enumerate() {
                let mut set = assigned[i].clone();
                set.push(task);
                set.sort_unstable();
                let end = *cache.entry((i, set.clone())).or_insert_with(|| {
                    let classes: Vec<_> = set.iter().map(|&j| pending[j]).collect();
                    p.earliest(&classes)
                });
                let Some(end) = end else { continue };
                let makespan = ends
                    .iter()
                    .enumerate()
                    .map(|(j, &e)| if j == i { end } else { e })
                    .max()
                    .unwrap_or(end);
                let key = (makespan, end, task, i);
                if best.as_ref().is_none_or(|(k, _, _)| key < *k) {
                    best = Some((key, task, i));
                }
            }
        }
        let Some(((_, end, _, _), task, agent)) = best else {
            return Ok(None);
        };
        assigned[agent].push(task);
        assigned[agent].sort_unstable();
        ends[agent] = end;
        unassigned.retain(|&t| t != task);
    }

    let makespan = ends.iter().copied().max().unwrap_or(req.start_step);
    let padded = (makespan + req.config.tail).min(req.last_step());
    let last = (padded + req.config.padding_slack).min(req.last_step());
    let targets = (padded..=last).chain(makespan..padded);
    'length: for target in targets {
        let mut parts = Vec::with_capacity(n);
        for (i, p) in problems.iter().enumerate() {
            let classes: Vec<_> = assigned[i].iter().map(|&j| pending[j]).collect();
            match p.padded(&classes, target) {
                Ok(states) => parts.push(
                    Trajectory::new(req.start_step, states).expect("non-empty search path"),
                ),
                Err(_) => continue 'length,
            }
        }
        let plan = recompose(&parts).expect("equal-length parts");
        return Ok(Some(plan));
    }
    Ok(None)
}

fn solve_joint<A: TransitionSystem>(
    req: &SolveRequest<'_, A>,
) -> Result<Trajectory<Joint<A::State>>, SearchFailure> {
    let classes: Vec<&StateClass<A::State>> = req.assignment.classes().collect();
    if classes.len() > 63 {
        return Err(SearchFailure::Budget);
    }
    let full: u64 = if classes.is_empty() { 0 } else { (1u64 << classes.len()) - 1 };
    let mark = |x: &Joint<A::State>, mask: u64| {
        classes
            .iter()
            .enumerate()
            .fold(mask, |m, (j, c)| if c.contains(x) { m | (1 << j) } else { m })
    };
    let mut pins: BTreeMap<usize, Vec<(usize, &A::State)>> = BTreeMap::new();
    for p in &req.pins {
        pins.entry(p.step).or_default().push((p.agent, &p.state));
    }
    let mut visits: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for v in &req.sync_visits {
        visits.entry(v.step).or_default().push(v.agent);
    }
    let n = req.system.agent_count();
    let start = (req.start.clone(), mark(&req.start, 0));
    let search = |end: End| layered_search(
        start.clone(),
        req.start_step,
        req.last_step(),
        end,
        req.config.joint_node_budget,
        |(x, mask): &(Joint<A::State>, u64)| {
            req.system
                .successors(x)
                .into_iter()
                .map(|y| {
                    let m = mark(&y, *mask);
                    (y, m)
                })
                .collect()
        },
        |t, (x, _)| {
            pins.get(&t).is_none_or(|ps| ps.iter().all(|(i, s)| &x[*i] == *s))
                && visits
                    .get(&t)
                    .is_none_or(|vs| vs.iter().all(|&i| req.sync.contains(i, x)))
        },
        |_, (x, mask)| {
            *mask == full && (!req.config.end_in_sync || (0..n).all(|i| req.sync.contains(i, x)))
        },
        |from: &(Joint<A::State>, u64), to: &(Joint<A::State>, u64)| {
            (req.system.preference(&from.0, &to.0), to.clone())
        },
    );
    let mut path = search(End::Earliest { min_step: req.last_constraint_step() })?;
    let end = req.start_step + path.len() - 1;
    let padded = (end + req.config.tail).min(req.last_step());
    if padded > end {
        if let Ok(longer) = search(End::Exactly(padded)) {
            path = longer;
        }
    }
    Ok(Trajectory::new(req.start_step, path.into_iter().map(|(x, _)| x).collect())
        .expect("non-empty search path"))
}

/// Finds the first constraint class that is infeasible on its own, agent by
/// agent: pins, then sync visits, then the terminal condition.
fn diagnose<A: TransitionSystem>(req: &SolveRequest<'_, A>) -> Option<Infeasible> {
    let problems = agent_problems(req).err();
    if problems.is_some() {
        return problems;
    }
    let min_end = req.last_constraint_step();
    for i in 0..req.system.agent_count() {
        let pins = req.agent_pins(i).ok()?;
        let visits = req.agent_visits(i);
        let stages = [
            (ConstraintClass::Pin, BTreeSet::new(), false),
            (ConstraintClass::SyncVisit, visits.clone(), false),
            (ConstraintClass::Terminal, visits.clone(), req.config.end_in_sync),
        ];
        for (class, visits, end_in_sync) in stages {
            let p = AgentProblem {
                system: req.system.agent(i),
                start: req.start[i].clone(),
                start_step: req.start_step,
                last_step: req.last_step(),
                pins: pins.clone(),
                visits,
                rule: req.sync.rule(i),
                end_in_sync,
                min_end,
                budget: AGENT_BUDGET,
            };
            if p.earliest(&[]).is_none() {
                return Some(Infeasible::new(
                    class,
                    format!("agent {i} cannot meet its {class} constraints"),
                ));
            }
        }
    }
    None
}

/// Convenience: the list of states, one per agent, as `Joint`.
pub fn joint<S: StateLike>(states: impl IntoIterator<Item = S>) -> Joint<S> {
    Joint(states.into_iter().collect())
}
