//! Task site assignments and their satisfaction semantics.
//!
//! A state class is a region of agent states lifted to joint states: a joint
//! state belongs to the class when at least one agent's component lies in the
//! region. Any agent entering the region satisfies the class.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::transition_system::{Joint, Trajectory};

pub type Region<S> = Arc<dyn Fn(&S) -> bool + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("cannot remove unknown task class `{0}`")]
    UnknownLabel(String),
    #[error("task class `{0}` already exists")]
    DuplicateLabel(String),
}

pub struct StateClass<S> {
    label: String,
    region: Region<S>,
}

impl<S> Clone for StateClass<S> {
    fn clone(&self) -> Self {
        Self {
            label: self.label.clone(),
            region: Arc::clone(&self.region),
        }
    }
}

impl<S> fmt::Debug for StateClass<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StateClass").field("label", &self.label).finish()
    }
}

impl<S> StateClass<S> {
    pub fn new(label: impl Into<String>, region: impl Fn(&S) -> bool + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            region: Arc::new(region),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Whether a single agent's state lies in the region.
    pub fn contains_agent_state(&self, state: &S) -> bool {
        (self.region)(state)
    }

    /// Lowest-index agent of `joint` inside the region.
    pub fn witness(&self, joint: &Joint<S>) -> Option<usize> {
        joint.agents().iter().position(|s| (self.region)(s))
    }

    pub fn contains(&self, joint: &Joint<S>) -> bool {
        self.witness(joint).is_some()
    }
}

/// A set of state classes keyed by unique label.
pub struct TaskSiteAssignment<S> {
    classes: BTreeMap<String, StateClass<S>>,
}

impl<S> Clone for TaskSiteAssignment<S> {
    fn clone(&self) -> Self {
        Self {
            classes: self.classes.clone(),
        }
    }
}

impl<S> fmt::Debug for TaskSiteAssignment<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.classes.keys()).finish()
    }
}

impl<S> Default for TaskSiteAssignment<S> {
    fn default() -> Self {
        Self {
            classes: BTreeMap::new(),
        }
    }
}

impl<S> TaskSiteAssignment<S> {
    pub fn new(classes: impl IntoIterator<Item = StateClass<S>>) -> Result<Self, TaskError> {
        let mut out = Self::default();
        for c in classes {
            out.insert(c)?;
        }
        Ok(out)
    }

    fn insert(&mut self, class: StateClass<S>) -> Result<(), TaskError> {
        if self.classes.contains_key(class.label()) {
            return Err(TaskError::DuplicateLabel(class.label.clone()));
        }
        self.classes.insert(class.label.clone(), class);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Classes in label order.
    pub fn classes(&self) -> impl Iterator<Item = &StateClass<S>> {
        self.classes.values()
    }

    pub fn get(&self, label: &str) -> Option<&StateClass<S>> {
        self.classes.get(label)
    }

    pub fn labels(&self) -> BTreeSet<String> {
        self.classes.keys().cloned().collect()
    }

    /// The sub-assignment containing only `labels`.
    pub fn restricted_to(&self, labels: &BTreeSet<String>) -> Self {
        Self {
            classes: self
                .classes
                .iter()
                .filter(|(l, _)| labels.contains(*l))
                .map(|(l, c)| (l.clone(), c.clone()))
                .collect(),
        }
    }
}

/// Classes removed and added at one step.
pub struct TaskUpdate<S> {
    pub removed: BTreeSet<String>,
    pub added: Vec<StateClass<S>>,
}

impl<S> Clone for TaskUpdate<S> {
    fn clone(&self) -> Self {
        Self {
            removed: self.removed.clone(),
            added: self.added.clone(),
        }
    }
}

impl<S> fmt::Debug for TaskUpdate<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TaskUpdate")
            .field("removed", &self.removed)
            .field("added", &self.added.iter().map(|c| c.label()).collect::<Vec<_>>())
            .finish()
    }
}

impl<S> TaskUpdate<S> {
    pub fn is_identity(&self) -> bool {
        self.removed.is_empty() && self.added.is_empty()
    }

    /// Swaps the roles of added and removed classes. `current` supplies the
    /// definitions of the removed classes.
    pub fn inverse(&self, current: &TaskSiteAssignment<S>) -> Result<Self, TaskError> {
        let added = self
            .removed
            .iter()
            .map(|l| {
                current
                    .get(l)
                    .cloned()
                    .ok_or_else(|| TaskError::UnknownLabel(l.clone()))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            removed: self.added.iter().map(|c| c.label.clone()).collect(),
            added,
        })
    }
}

/// `(current \ removed) ∪ added`. Added labels may not reuse any label of
/// `current`, including ones removed by the same update.
pub fn apply_update<S>(
    current: &TaskSiteAssignment<S>,
    update: &TaskUpdate<S>,
) -> Result<TaskSiteAssignment<S>, TaskError> {
    for class in &update.added {
        if current.classes.contains_key(class.label()) {
            return Err(TaskError::DuplicateLabel(class.label.clone()));
        }
    }
    let mut next = current.clone();
    for label in &update.removed {
        if next.classes.remove(label).is_none() {
            return Err(TaskError::UnknownLabel(label.clone()));
        }
    }
    for class in &update.added {
        next.insert(class.clone())?;
    }
    Ok(next)
}

/// Agent and step at which a class was first satisfied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Visit {
    pub agent: usize,
    pub step: usize,
}

/// Earliest satisfying visit per class; ties at the same step go to the lowest
/// agent index.
pub fn first_satisfaction_times<S>(
    traj: &Trajectory<Joint<S>>,
    assignment: &TaskSiteAssignment<S>,
) -> BTreeMap<String, Option<Visit>>
where
    S: Clone,
{
    assignment
        .classes()
        .map(|c| {
            let visit = traj
                .steps()
                .find_map(|(step, x)| c.witness(x).map(|agent| Visit { agent, step }));
            (c.label.clone(), visit)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Satisfaction {
    pub satisfied: bool,
    pub witness: BTreeMap<String, Visit>,
}

impl Satisfaction {
    /// Step of the latest first visit, i.e. when the assignment became
    /// satisfied.
    pub fn completion_step(&self) -> Option<usize> {
        if !self.satisfied {
            return None;
        }
        Some(self.witness.values().map(|v| v.step).max().unwrap_or(0))
    }
}

pub fn satisfies<S: Clone>(
    traj: &Trajectory<Joint<S>>,
    assignment: &TaskSiteAssignment<S>,
) -> Satisfaction {
    let times = first_satisfaction_times(traj, assignment);
    let satisfied = times.values().all(Option::is_some);
    Satisfaction {
        satisfied,
        witness: times
            .into_iter()
            .filter_map(|(l, v)| v.map(|v| (l, v)))
            .collect(),
    }
}
