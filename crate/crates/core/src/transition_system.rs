//! Explicit-state agent and multi-agent transition systems, trajectories and
//! projections.
//!
//! Agent systems are described through the [`TransitionSystem`] trait so that
//! large state spaces (grid position x energy x status) never need to be
//! materialized. A [`MultiAgentSystem`] is the componentwise product of its
//! agents: a joint transition exists iff every agent takes one of its own
//! transitions. Joint states are formed on demand.
//!
//! Agents are indexed from zero.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;
use std::hash::Hash;

use thiserror::Error;

/// Bound collecting what every state type must support.
pub trait StateLike: Clone + Eq + Ord + Hash + Debug + Send + Sync {}
impl<T: Clone + Eq + Ord + Hash + Debug + Send + Sync> StateLike for T {}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrajectoryError {
    #[error("state {0} is not a member of the state set")]
    UnknownState(String),
    #[error("step {step} outside trajectory range [{start}, {end}]")]
    OutOfRange { step: usize, start: usize, end: usize },
    #[error("no transition from {from} to {to} at step {step}")]
    InvalidTransition { step: usize, from: String, to: String },
    #[error("trajectory must contain at least one state")]
    Empty,
    #[error("agent index {index} out of range for {agents} agents")]
    AgentOutOfRange { index: usize, agents: usize },
    #[error("a multi-agent system needs at least one agent")]
    NoAgents,
    #[error("transition endpoint {0} is not a declared state")]
    DanglingTransition(String),
    #[error("projections disagree on start step or length")]
    MismatchedProjections,
}

/// A transition system over `State`. One transition takes one time step.
pub trait TransitionSystem {
    type State: StateLike;

    fn contains(&self, state: &Self::State) -> bool;

    /// Successor states in ascending order, without duplicates.
    fn successors(&self, state: &Self::State) -> Vec<Self::State>;

    /// Predecessor states in ascending order, without duplicates.
    fn predecessors(&self, state: &Self::State) -> Vec<Self::State>;

    fn is_transition(&self, from: &Self::State, to: &Self::State) -> bool {
        self.successors(from).binary_search(to).is_ok()
    }

    /// Tie-break rank of a transition, lower preferred. Planners use it only
    /// to choose among plans that are otherwise equally good.
    fn preference(&self, _from: &Self::State, _to: &Self::State) -> u32 {
        0
    }
}

impl<T: TransitionSystem + ?Sized> TransitionSystem for &T {
    type State = T::State;
    fn contains(&self, state: &Self::State) -> bool {
        (**self).contains(state)
    }
    fn successors(&self, state: &Self::State) -> Vec<Self::State> {
        (**self).successors(state)
    }
    fn predecessors(&self, state: &Self::State) -> Vec<Self::State> {
        (**self).predecessors(state)
    }
    fn is_transition(&self, from: &Self::State, to: &Self::State) -> bool {
        (**self).is_transition(from, to)
    }
    fn preference(&self, from: &Self::State, to: &Self::State) -> u32 {
        (**self).preference(from, to)
    }
}

/// Agent transition system with an explicitly enumerated transition relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplicitSystem<S: StateLike> {
    forward: BTreeMap<S, BTreeSet<S>>,
    backward: BTreeMap<S, BTreeSet<S>>,
}

impl<S: StateLike> ExplicitSystem<S> {
    pub fn new(
        states: impl IntoIterator<Item = S>,
        transitions: impl IntoIterator<Item = (S, S)>,
    ) -> Result<Self, TrajectoryError> {
        let mut forward: BTreeMap<S, BTreeSet<S>> = BTreeMap::new();
        let mut backward: BTreeMap<S, BTreeSet<S>> = BTreeMap::new();
        for s in states {
            forward.entry(s.clone()).or_default();
            backward.entry(s).or_default();
        }
        for (a, b) in transitions {
            if !forward.contains_key(&a) {
                return Err(TrajectoryError::DanglingTransition(format!("{a:?}")));
            }
            if !forward.contains_key(&b) {
                return Err(TrajectoryError::DanglingTransition(format!("{b:?}")));
            }
            forward.get_mut(&a).unwrap().insert(b.clone());
            backward.get_mut(&b).unwrap().insert(a);
        }
        Ok(Self { forward, backward })
    }

    pub fn states(&self) -> impl Iterator<Item = &S> {
        self.forward.keys()
    }

    pub fn transitions(&self) -> impl Iterator<Item = (&S, &S)> {
        self.forward
            .iter()
            .flat_map(|(a, succ)| succ.iter().map(move |b| (a, b)))
    }

    pub fn state_count(&self) -> usize {
        self.forward.len()
    }
}

impl<S: StateLike> TransitionSystem for ExplicitSystem<S> {
    type State = S;

    fn contains(&self, state: &S) -> bool {
        self.forward.contains_key(state)
    }

    fn successors(&self, state: &S) -> Vec<S> {
        self.forward
            .get(state)
            .map(|s| s.iter().cloned().collect())
            .unwrap_or_default()
    }

    fn predecessors(&self, state: &S) -> Vec<S> {
        self.backward
            .get(state)
            .map(|s| s.iter().cloned().collect())
            .unwrap_or_default()
    }

    fn is_transition(&self, from: &S, to: &S) -> bool {
        self.forward.get(from).is_some_and(|s| s.contains(to))
    }
}

/// Joint state of a multi-agent system: one agent state per agent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Joint<S>(pub Vec<S>);

impl<S> Joint<S> {
    pub fn agent(&self, index: usize) -> Option<&S> {
        self.0.get(index)
    }

    pub fn agents(&self) -> &[S] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S> std::ops::Index<usize> for Joint<S> {
    type Output = S;
    fn index(&self, index: usize) -> &S {
        &self.0[index]
    }
}

/// Componentwise product of agent systems. The joint state space is never
/// materialized.
#[derive(Debug, Clone)]
pub struct MultiAgentSystem<A> {
    agents: Vec<A>,
}

/// Builds the product system of `agents`.
pub fn compose<A: TransitionSystem>(agents: Vec<A>) -> Result<MultiAgentSystem<A>, TrajectoryError> {
    MultiAgentSystem::new(agents)
}

impl<A: TransitionSystem> MultiAgentSystem<A> {
    pub fn new(agents: Vec<A>) -> Result<Self, TrajectoryError> {
        if agents.is_empty() {
            return Err(TrajectoryError::NoAgents);
        }
        Ok(Self { agents })
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn agent(&self, index: usize) -> &A {
        &self.agents[index]
    }

    pub fn agents(&self) -> &[A] {
        &self.agents
    }

    fn product(parts: Vec<Vec<A::State>>) -> Vec<Joint<A::State>> {
        // Each component list is sorted, so the odometer order below is the
        // lexicographic order of the joint tuples.
        if parts.iter().any(|p| p.is_empty()) {
            return Vec::new();
        }
        let total: usize = parts.iter().map(Vec::len).product();
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; parts.len()];
        loop {
            out.push(Joint(
                idx.iter()
                    .zip(&parts)
                    .map(|(&i, p)| p[i].clone())
                    .collect(),
            ));
            let mut pos = parts.len();
            loop {
                if pos == 0 {
                    return out;
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < parts[pos].len() {
                    break;
                }
                idx[pos] = 0;
            }
        }
    }
}

impl<A: TransitionSystem> TransitionSystem for MultiAgentSystem<A> {
    type State = Joint<A::State>;

    fn contains(&self, state: &Self::State) -> bool {
        state.len() == self.agents.len()
            && self.agents.iter().zip(state.agents()).all(|(a, s)| a.contains(s))
    }

    fn successors(&self, state: &Self::State) -> Vec<Self::State> {
        if state.len() != self.agents.len() {
            return Vec::new();
        }
        Self::product(
            self.agents
                .iter()
                .zip(state.agents())
                .map(|(a, s)| a.successors(s))
                .collect(),
        )
    }

    fn predecessors(&self, state: &Self::State) -> Vec<Self::State> {
        if state.len() != self.agents.len() {
            return Vec::new();
        }
        Self::product(
            self.agents
                .iter()
                .zip(state.agents())
                .map(|(a, s)| a.predecessors(s))
                .collect(),
        )
    }

    fn is_transition(&self, from: &Self::State, to: &Self::State) -> bool {
        from.len() == self.agents.len()
            && to.len() == self.agents.len()
            && self
                .agents
                .iter()
                .enumerate()
                .all(|(i, a)| a.is_transition(&from[i], &to[i]))
    }

    fn preference(&self, from: &Self::State, to: &Self::State) -> u32 {
        self.agents
            .iter()
            .enumerate()
            .map(|(i, a)| a.preference(&from[i], &to[i]))
            .sum()
    }
}

/// Checks that consecutive states of `seq` are connected by transitions.
///
/// A state outside the state set is an error rather than `false`.
pub fn validate_trajectory<T: TransitionSystem>(
    system: &T,
    seq: &[T::State],
) -> Result<bool, TrajectoryError> {
    if let Some(bad) = seq.iter().find(|s| !system.contains(s)) {
        return Err(TrajectoryError::UnknownState(format!("{bad:?}")));
    }
    Ok(seq.windows(2).all(|w| system.is_transition(&w[0], &w[1])))
}

/// A finite state sequence addressed by absolute time step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trajectory<S> {
    start: usize,
    states: Vec<S>,
}

impl<S: Clone> Trajectory<S> {
    pub fn new(start: usize, states: Vec<S>) -> Result<Self, TrajectoryError> {
        if states.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        Ok(Self { start, states })
    }

    /// Builds a trajectory and checks it against `system`.
    pub fn checked<T>(system: &T, start: usize, states: Vec<S>) -> Result<Self, TrajectoryError>
    where
        T: TransitionSystem<State = S>,
        S: StateLike,
    {
        let t = Self::new(start, states)?;
        t.validate(system)?;
        Ok(t)
    }

    /// Errors on the first missing transition.
    pub fn validate<T>(&self, system: &T) -> Result<(), TrajectoryError>
    where
        T: TransitionSystem<State = S>,
        S: StateLike,
    {
        if let Some(bad) = self.states.iter().find(|s| !system.contains(s)) {
            return Err(TrajectoryError::UnknownState(format!("{bad:?}")));
        }
        for (offset, w) in self.states.windows(2).enumerate() {
            if !system.is_transition(&w[0], &w[1]) {
                return Err(TrajectoryError::InvalidTransition {
                    step: self.start + offset,
                    from: format!("{:?}", w[0]),
                    to: format!("{:?}", w[1]),
                });
            }
        }
        Ok(())
    }

    pub fn start_step(&self) -> usize {
        self.start
    }

    /// Last step addressed by this trajectory.
    pub fn end_step(&self) -> usize {
        self.start + self.states.len() - 1
    }

    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.states.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.states.len() == 1
    }

    pub fn covers(&self, step: usize) -> bool {
        step >= self.start && step <= self.end_step()
    }

    pub fn at(&self, step: usize) -> Result<&S, TrajectoryError> {
        if !self.covers(step) {
            return Err(TrajectoryError::OutOfRange {
                step,
                start: self.start,
                end: self.end_step(),
            });
        }
        Ok(&self.states[step - self.start])
    }

    pub fn get(&self, step: usize) -> Option<&S> {
        self.at(step).ok()
    }

    pub fn first(&self) -> &S {
        &self.states[0]
    }

    pub fn last(&self) -> &S {
        self.states.last().expect("non-empty")
    }

    /// The view from `step` onwards, re-stamped to start at `step`.
    pub fn suffix(&self, step: usize) -> Result<Self, TrajectoryError> {
        self.at(step)?;
        Ok(Self {
            start: step,
            states: self.states[step - self.start..].to_vec(),
        })
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn into_states(self) -> Vec<S> {
        self.states
    }

    /// `(step, state)` pairs in order.
    pub fn steps(&self) -> impl Iterator<Item = (usize, &S)> + '_ {
        self.states.iter().enumerate().map(move |(i, s)| (self.start + i, s))
    }
}

/// Extracts agent `agent`'s trajectory from a joint trajectory.
pub fn project<S: Clone>(
    traj: &Trajectory<Joint<S>>,
    agent: usize,
) -> Result<Trajectory<S>, TrajectoryError> {
    let agents = traj.first().len();
    if agent >= agents {
        return Err(TrajectoryError::AgentOutOfRange { index: agent, agents });
    }
    Trajectory::new(
        traj.start_step(),
        traj.states().iter().map(|x| x[agent].clone()).collect(),
    )
}

/// Inverse of [`project`]: zips per-agent trajectories into a joint one.
pub fn recompose<S: Clone>(parts: &[Trajectory<S>]) -> Result<Trajectory<Joint<S>>, TrajectoryError> {
    let first = parts.first().ok_or(TrajectoryError::NoAgents)?;
    if parts
        .iter()
        .any(|p| p.start_step() != first.start_step() || p.len() != first.len())
    {
        return Err(TrajectoryError::MismatchedProjections);
    }
    let states = (0..first.states().len())
        .map(|j| Joint(parts.iter().map(|p| p.states()[j].clone()).collect()))
        .collect();
    Trajectory::new(first.start_step(), states)
}

/// Append-only record of executed states, starting at step 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RealizedTrajectory<S> {
    states: Vec<S>,
}

impl<S: StateLike> RealizedTrajectory<S> {
    pub fn new(initial: S) -> Self {
        Self { states: vec![initial] }
    }

    /// Appends the state reached at the next step.
    pub fn push<T>(&mut self, system: &T, next: S) -> Result<(), TrajectoryError>
    where
        T: TransitionSystem<State = S>,
    {
        let last = self.last();
        if !system.contains(&next) {
            return Err(TrajectoryError::UnknownState(format!("{next:?}")));
        }
        if !system.is_transition(last, &next) {
            return Err(TrajectoryError::InvalidTransition {
                step: self.states.len() - 1,
                from: format!("{last:?}"),
                to: format!("{next:?}"),
            });
        }
        self.states.push(next);
        Ok(())
    }

    pub fn last(&self) -> &S {
        self.states.last().expect("non-empty")
    }

    /// Step of the most recent state.
    pub fn current_step(&self) -> usize {
        self.states.len() - 1
    }

    pub fn at(&self, step: usize) -> Option<&S> {
        self.states.get(step)
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn to_trajectory(&self) -> Trajectory<S> {
        Trajectory {
            start: 0,
            states: self.states.clone(),
        }
    }
}
