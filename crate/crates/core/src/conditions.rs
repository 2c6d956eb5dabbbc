//! Retrospective checks of the task-satisfaction conditions under
//! disturbance.
//!
//! Every step `k` of an episode is treated as a planning point whose plan is
//! the revision in force at `k`. For agent `i`, `k*_i` is the first step after
//! `k` at which that plan puts `i` in its synchronization set and `k'_i` is the
//! last step in `[k, k*_i]` at which `i` occupies a still-open task class.
//!
//! * `c1`: no task class is added after the start.
//! * `c2`: every disturbance of any agent `i` at `γ ∈ [k, k*_i]` rejoins its
//!   eigen plan no later than `k*_i`.
//! * `c3`: every disturbance of the agent(s) attaining `k'_max = max_i k'_i` at
//!   `γ ∈ [k, k'_max]` rejoins no later than `k'_max`.
//!
//! A disturbance exactly at the window end cannot rejoin in zero steps; it is
//! accepted when the realized state still lies in the synchronization set
//! (`c2`) or in the task class (`c3`).

use serde::{Deserialize, Serialize};

use crate::executor::{EpisodeResult, Scenario};
use crate::recovery::DisturbanceRecord;
use crate::sync_model::next_sync_step;
use crate::tasking::StateClass;
use crate::trace::{TraceError, TraceEvent};
use crate::transition_system::{StateLike, TransitionSystem};

const MAX_DETAILS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub c1: bool,
    pub c2: bool,
    pub c3: bool,
    pub details: Vec<String>,
}

impl ConditionReport {
    pub fn all(&self) -> bool {
        self.c1 && self.c2 && self.c3
    }

    fn note(&mut self, msg: String) {
        if self.details.len() < MAX_DETAILS && !self.details.contains(&msg) {
            self.details.push(msg);
        }
    }
}

fn rejoins_by<S>(d: &DisturbanceRecord<S>, limit: usize) -> bool {
    d.n_star.is_some_and(|n| d.step + n <= limit)
}

/// Evaluates the three conditions on a finished episode.
pub fn check_theorem2_conditions<A>(
    scenario: &Scenario<A>,
    result: &EpisodeResult<A::State>,
) -> Result<ConditionReport, TraceError>
where
    A: TransitionSystem,
{
    result.trace.validate()?;
    let mut report = ConditionReport {
        c1: true,
        c2: true,
        c3: true,
        details: Vec::new(),
    };
    for row in &result.trace.rows {
        if let TraceEvent::TaskUpdateApplied { added, .. } = &row.event {
            if row.step > 0 && !added.is_empty() {
                report.c1 = false;
                report.note(format!("classes {added:?} added at step {}", row.step));
            }
        }
    }
    if result.disturbances.is_empty() {
        return Ok(report);
    }
    let agents = scenario.system.agent_count();
    let last = result.realized.end_step();
    for k in 0..=last {
        let Some(rev) = result.revision_at(k) else { continue };
        let plan = &rev.plan;
        let open: Vec<&StateClass<A::State>> = result
            .assignment_at(k)
            .classes()
            .filter(|c| result.visits.get(c.label()).is_none_or(|v| v.step >= k))
            .collect();
        let mut k_prime: Vec<Option<(usize, &StateClass<A::State>)>> = vec![None; agents];
        for i in 0..agents {
            let k_star = next_sync_step(plan, &scenario.sync, i, k);
            let window_end = k_star.unwrap_or(plan.end_step());
            for d in result.disturbances.iter().filter(|d| d.agent == i) {
                if d.step < k || d.step > window_end {
                    continue;
                }
                let ok = match k_star {
                    Some(ks) if d.step == ks => result
                        .realized
                        .get(ks)
                        .is_some_and(|x| scenario.sync.contains(i, x)),
                    Some(ks) => rejoins_by(d, ks),
                    None => false,
                };
                if !ok {
                    report.c2 = false;
                    report.note(format!(
                        "c2: agent {i} disturbed at {} (n*={:?}) with sync step {:?} from planning point {k}",
                        d.step, d.n_star, k_star
                    ));
                }
            }
            k_prime[i] = (k..=window_end.min(plan.end_step())).rev().find_map(|s| {
                let own = &plan.get(s)?[i];
                open.iter()
                    .find(|c| c.contains_agent_state(own))
                    .map(|c| (s, *c))
            });
        }
        let Some(k_max) = k_prime.iter().flatten().map(|(s, _)| *s).max() else {
            continue;
        };
        for (i, entry) in k_prime.iter().enumerate() {
            let Some((s, class)) = entry else { continue };
            if *s != k_max {
                continue;
            }
            for d in result.disturbances.iter().filter(|d| d.agent == i) {
                if d.step < k || d.step > k_max {
                    continue;
                }
                let ok = if d.step == k_max {
                    class.contains_agent_state(&d.realized)
                } else {
                    rejoins_by(d, k_max)
                };
                if !ok {
                    report.c3 = false;
                    report.note(format!(
                        "c3: agent {i} disturbed at {} (n*={:?}) before task step {k_max} from planning point {k}",
                        d.step, d.n_star
                    ));
                }
            }
        }
    }
    Ok(report)
}

/// Whether an episode counts against the satisfaction guarantee: the
/// conditions hold yet the task assignment was not satisfied.
pub fn is_counterexample<S: StateLike>(report: &ConditionReport, result: &EpisodeResult<S>) -> bool {
    report.all() && !result.satisfied
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::tests::{line, scripted};
    use crate::executor::{run_episode, DisturbanceModel, ExecutorConfig, ScheduledUpdate};
    use crate::tasking::TaskUpdate;

    #[test]
    fn undisturbed_episode_meets_every_condition() {
        let scn = line();
        let r = run_episode(&scn, &DisturbanceModel::none(), &ExecutorConfig::default());
        let report = check_theorem2_conditions(&scn, &r).unwrap();
        assert!(report.all(), "{report:?}");
    }

    #[test]
    fn rejoin_before_sync_meets_c2() {
        let scn = line();
        let report = check_theorem2_conditions(&scn, &scripted(&scn, 1, 10)).unwrap();
        assert!(report.c2, "{report:?}");
    }

    #[test]
    fn rejoin_after_sync_violates_c2() {
        let scn = line();
        let report = check_theorem2_conditions(&scn, &scripted(&scn, 1, 20)).unwrap();
        assert!(!report.c2);
        assert!(!report.all());
        assert!(!report.details.is_empty());
    }

    #[test]
    fn added_class_violates_c1() {
        let mut scn = line();
        scn.updates.push(ScheduledUpdate {
            step: 2,
            update: TaskUpdate {
                removed: Default::default(),
                added: vec![StateClass::new("extra", |s: &u32| *s == 4)],
            },
        });
        let r = run_episode(&scn, &DisturbanceModel::none(), &ExecutorConfig::default());
        let report = check_theorem2_conditions(&scn, &r).unwrap();
        assert!(!report.c1);
    }
}
