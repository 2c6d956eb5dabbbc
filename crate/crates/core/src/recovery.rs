//! Backward reachable sets and agent-side disturbance recovery.
//!
//! `Reach_n(x)` is the set of states with a path of exactly `n` transitions to
//! `x`. A disturbed state is `n`-step recoverable when it lies in the
//! `n`-step backward reachable set of the eigen plan's state `n` steps ahead.
//! Recovery replaces the eigen plan with a bridge of length `n*` (the smallest
//! such `n`) followed by the untouched remainder of the old plan.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transition_system::{StateLike, Trajectory, TransitionSystem};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum RecoveryError {
    #[error("reach depth {depth} exceeds limit {limit}")]
    DepthExceeded { depth: usize, limit: usize },
    #[error("realized state equals the planned state; not a disturbance")]
    NotADisturbance,
    #[error("disturbance at step {step} is not recoverable within {limit} steps")]
    Unrecoverable { step: usize, limit: usize },
    #[error("eigen plan does not cover step {0}")]
    PlanNotCovering(usize),
}

/// `Reach_n(target)` by reverse breadth-first expansion over `depth` levels.
pub fn backward_reach<T: TransitionSystem>(
    system: &T,
    target: &T::State,
    depth: usize,
    max_depth: usize,
) -> Result<BTreeSet<T::State>, RecoveryError> {
    if depth > max_depth {
        return Err(RecoveryError::DepthExceeded { depth, limit: max_depth });
    }
    Ok(backward_levels(system, target, depth).pop().expect("level 0 present"))
}

/// Levels `Reach_0(target)`, ..., `Reach_depth(target)`.
fn backward_levels<T: TransitionSystem>(
    system: &T,
    target: &T::State,
    depth: usize,
) -> Vec<BTreeSet<T::State>> {
    let mut levels = vec![BTreeSet::from([target.clone()])];
    for _ in 0..depth {
        let prev = levels.last().expect("non-empty");
        let next: BTreeSet<_> = prev.iter().flat_map(|s| system.predecessors(s)).collect();
        levels.push(next);
    }
    levels
}

/// States reachable from `origin` in exactly 0, 1, ..., `depth` steps.
pub fn forward_levels<T: TransitionSystem>(
    system: &T,
    origin: &T::State,
    depth: usize,
) -> Vec<BTreeSet<T::State>> {
    let mut levels = vec![BTreeSet::from([origin.clone()])];
    for _ in 0..depth {
        let prev = levels.last().expect("non-empty");
        if prev.is_empty() {
            levels.push(BTreeSet::new());
            continue;
        }
        let next: BTreeSet<_> = prev.iter().flat_map(|s| system.successors(s)).collect();
        levels.push(next);
    }
    levels
}

/// Whether `disturbed` at step `step` is `n`-step recoverable onto `eigen`.
pub fn is_n_step_recoverable<T: TransitionSystem>(
    system: &T,
    disturbed: &T::State,
    eigen: &Trajectory<T::State>,
    step: usize,
    n: usize,
) -> bool {
    if n == 0 {
        return false;
    }
    let Some(target) = eigen.get(step + n) else {
        return false;
    };
    forward_levels(system, disturbed, n)[n].contains(target)
}

/// Smallest `n >= 1` with `disturbed ∈ Reach_n(eigen(step + n))`, searching up
/// to `min(max_steps, remaining plan length)`.
pub fn min_recovery_steps<T: TransitionSystem>(
    system: &T,
    disturbed: &T::State,
    eigen: &Trajectory<T::State>,
    step: usize,
    max_steps: Option<usize>,
) -> Result<usize, RecoveryError> {
    let planned = eigen.get(step).ok_or(RecoveryError::PlanNotCovering(step))?;
    if planned == disturbed {
        return Err(RecoveryError::NotADisturbance);
    }
    let remaining = eigen.end_step() - step;
    let limit = max_steps.map_or(remaining, |m| m.min(remaining));
    // Forward frontier from the disturbed state: the target at step + n is in
    // the n-th frontier iff the disturbed state is in its n-step backward set.
    let mut frontier = BTreeSet::from([disturbed.clone()]);
    for n in 1..=limit {
        frontier = frontier.iter().flat_map(|s| system.successors(s)).collect();
        if frontier.is_empty() {
            break;
        }
        let target = eigen.get(step + n).expect("within plan");
        if frontier.contains(target) {
            return Ok(n);
        }
    }
    Err(RecoveryError::Unrecoverable { step, limit })
}

/// Result of a successful recovery.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recovery<S> {
    pub steps: usize,
    pub eigen: Trajectory<S>,
}

/// Replans agent-side after a disturbance: the new eigen plan starts at the
/// disturbed state, follows the lexicographically smallest bridge of length
/// `n*` and then the old plan from `step + n*` on.
pub fn recover<T: TransitionSystem>(
    system: &T,
    disturbed: &T::State,
    eigen: &Trajectory<T::State>,
    step: usize,
    max_steps: Option<usize>,
) -> Result<Recovery<T::State>, RecoveryError> {
    let n = min_recovery_steps(system, disturbed, eigen, step, max_steps)?;
    let bridge = bridge(system, disturbed, eigen.at(step + n).expect("within plan"), n)
        .expect("recoverable state has a bridge");
    let mut states = bridge;
    states.extend(eigen.states()[step + n + 1 - eigen.start_step()..].iter().cloned());
    let new = Trajectory::new(step, states).expect("non-empty");
    Ok(Recovery { steps: n, eigen: new })
}

/// Lexicographically smallest path of exactly `n` transitions from `from` to
/// `to`, if any.
pub fn bridge<T: TransitionSystem>(
    system: &T,
    from: &T::State,
    to: &T::State,
    n: usize,
) -> Option<Vec<T::State>> {
    let levels = backward_levels(system, to, n);
    if !levels[n].contains(from) {
        return None;
    }
    let mut path = vec![from.clone()];
    for remaining in (0..n).rev() {
        let cur = path.last().expect("non-empty");
        let next = system
            .successors(cur)
            .into_iter()
            .find(|s| levels[remaining].contains(s))?;
        path.push(next);
    }
    Some(path)
}

/// Agent-side record of a disturbance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisturbanceRecord<S> {
    pub agent: usize,
    pub step: usize,
    pub planned: S,
    pub realized: S,
    /// `None` when unrecoverable.
    pub n_star: Option<usize>,
}

impl<S: StateLike> DisturbanceRecord<S> {
    pub fn is_recoverable(&self) -> bool {
        self.n_star.is_some()
    }
}
