//! Synchronization states, plan beliefs and the opportunistic synchronization
//! update.
//!
//! Three plan versions are tracked per episode: the planner's joint plan, each
//! agent's own (eigen) plan, and the planner's belief of each agent's eigen
//! plan. Plans only flow between planner and agent `i` while the joint state
//! lies in agent `i`'s synchronization set.

use std::fmt;
use std::sync::Arc;

use crate::transition_system::{project, Joint, StateLike, Trajectory};

type LocalPred<S> = Arc<dyn Fn(&S) -> bool + Send + Sync>;
type JointPred<S> = Arc<dyn Fn(&Joint<S>) -> bool + Send + Sync>;

/// Membership rule for one agent's synchronization set.
///
/// A joint state is in the set when the rule is `always`, when the agent's own
/// component satisfies `local`, or when the whole joint state satisfies
/// `joint`. The local part is what decoupled planning relies on.
pub struct SyncRule<S> {
    always: bool,
    local: Option<LocalPred<S>>,
    joint: Option<JointPred<S>>,
}

impl<S> Clone for SyncRule<S> {
    fn clone(&self) -> Self {
        Self {
            always: self.always,
            local: self.local.clone(),
            joint: self.joint.clone(),
        }
    }
}

impl<S> fmt::Debug for SyncRule<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SyncRule")
            .field("always", &self.always)
            .field("local", &self.local.is_some())
            .field("joint", &self.joint.is_some())
            .finish()
    }
}

impl<S> SyncRule<S> {
    pub fn always() -> Self {
        Self { always: true, local: None, joint: None }
    }

    pub fn never() -> Self {
        Self { always: false, local: None, joint: None }
    }

    pub fn local(pred: impl Fn(&S) -> bool + Send + Sync + 'static) -> Self {
        Self { always: false, local: Some(Arc::new(pred)), joint: None }
    }

    pub fn joint(pred: impl Fn(&Joint<S>) -> bool + Send + Sync + 'static) -> Self {
        Self { always: false, local: None, joint: Some(Arc::new(pred)) }
    }

    /// Adds a joint-state alternative to this rule.
    pub fn or_joint(mut self, pred: impl Fn(&Joint<S>) -> bool + Send + Sync + 'static) -> Self {
        self.joint = Some(Arc::new(pred));
        self
    }

    pub fn is_always(&self) -> bool {
        self.always
    }

    /// Sufficient condition on the agent's own state alone.
    pub fn local_holds(&self, own: &S) -> bool {
        self.always || self.local.as_ref().is_some_and(|p| p(own))
    }

    pub fn contains(&self, agent: usize, x: &Joint<S>) -> bool {
        self.always
            || self.local.as_ref().is_some_and(|p| p(&x[agent]))
            || self.joint.as_ref().is_some_and(|p| p(x))
    }
}

/// Per-agent synchronization sets.
pub struct SyncStates<S> {
    rules: Vec<SyncRule<S>>,
}

impl<S> Clone for SyncStates<S> {
    fn clone(&self) -> Self {
        Self { rules: self.rules.clone() }
    }
}

impl<S> fmt::Debug for SyncStates<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.rules).finish()
    }
}

impl<S> SyncStates<S> {
    pub fn new(rules: Vec<SyncRule<S>>) -> Self {
        Self { rules }
    }

    pub fn agent_count(&self) -> usize {
        self.rules.len()
    }

    pub fn rule(&self, agent: usize) -> &SyncRule<S> {
        &self.rules[agent]
    }

    pub fn contains(&self, agent: usize, x: &Joint<S>) -> bool {
        self.rules[agent].contains(agent, x)
    }

    /// Agents whose synchronization set contains `x`, ascending.
    pub fn contacts(&self, x: &Joint<S>) -> Vec<usize> {
        (0..self.rules.len()).filter(|&i| self.contains(i, x)).collect()
    }
}

/// First step strictly after `after` at which `plan` lies in agent `agent`'s
/// synchronization set.
pub fn next_sync_step<S: Clone>(
    plan: &Trajectory<Joint<S>>,
    sync: &SyncStates<S>,
    agent: usize,
    after: usize,
) -> Option<usize> {
    plan.steps()
        .find(|(k, x)| *k > after && sync.contains(agent, x))
        .map(|(k, _)| k)
}

/// Every step strictly after `after` at which `plan` lies in agent `agent`'s
/// synchronization set.
pub fn future_sync_steps<S: Clone>(
    plan: &Trajectory<Joint<S>>,
    sync: &SyncStates<S>,
    agent: usize,
    after: usize,
) -> Vec<usize> {
    plan.steps()
        .filter(|(k, x)| *k > after && sync.contains(agent, x))
        .map(|(k, _)| k)
        .collect()
}

/// The planner's joint plan, each agent's eigen plan, and the planner's belief
/// of each eigen plan, all stamped at `step`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanBeliefs<S> {
    pub step: usize,
    pub global_plan: Trajectory<Joint<S>>,
    pub eigen: Vec<Trajectory<S>>,
    pub planner_belief: Vec<Trajectory<S>>,
}

impl<S: StateLike> PlanBeliefs<S> {
    /// Fully synchronized beliefs at the plan's start step.
    pub fn initial(plan: Trajectory<Joint<S>>) -> Self {
        let agents = plan.first().len();
        let eigen: Vec<_> = (0..agents)
            .map(|i| project(&plan, i).expect("index in range"))
            .collect();
        Self {
            step: plan.start_step(),
            planner_belief: eigen.clone(),
            eigen,
            global_plan: plan,
        }
    }

    pub fn agent_count(&self) -> usize {
        self.eigen.len()
    }

    /// Opportunistic synchronization at step `k` with joint state `x_k`.
    ///
    /// Agents whose synchronization set contains `x_k` receive the suffix of
    /// the global plan and the planner's belief is set to it; other agents
    /// keep their previous plans. At step 0 every agent synchronizes.
    pub fn sync_update(&self, sync: &SyncStates<S>, x_k: &Joint<S>, k: usize) -> Self {
        let mut next = self.clone();
        next.step = k;
        for i in 0..self.agent_count() {
            if k == 0 || sync.contains(i, x_k) {
                next.synchronize_agent(i, k);
            } else {
                next.eigen[i] = restamp(&self.eigen[i], k);
                next.planner_belief[i] = restamp(&self.planner_belief[i], k);
            }
        }
        next
    }

    /// Hands agent `i` the global plan from step `k` on.
    pub fn synchronize_agent(&mut self, i: usize, k: usize) {
        if let Ok(suffix) = self.global_plan.suffix(k) {
            let own = project(&suffix, i).expect("index in range");
            self.planner_belief[i] = own.clone();
            self.eigen[i] = own;
        }
    }

    /// Agent `i` reports its eigen plan to the planner. Returns whether the
    /// planner's belief changed on any step both cover.
    pub fn upload(&mut self, i: usize) -> bool {
        let changed = differs(&self.planner_belief[i], &self.eigen[i]);
        self.planner_belief[i] = self.eigen[i].clone();
        changed
    }

    /// Steps at or after the current step where agent `i`'s eigen plan
    /// differs from its projection of the global plan (or either is
    /// undefined while the other is defined).
    pub fn divergence(&self, agent: usize) -> Vec<usize> {
        let eigen = &self.eigen[agent];
        let from = self.step.max(eigen.start_step().min(self.global_plan.start_step()));
        let to = eigen.end_step().max(self.global_plan.end_step());
        (from..=to)
            .filter(|&k| {
                let mine = eigen.get(k);
                let planned = self.global_plan.get(k).map(|x| &x[agent]);
                mine != planned
            })
            .collect()
    }
}

/// Divergence for agent `agent` of `beliefs`.
pub fn divergence<S: StateLike>(beliefs: &PlanBeliefs<S>, agent: usize) -> Vec<usize> {
    beliefs.divergence(agent)
}

fn restamp<S: Clone>(t: &Trajectory<S>, k: usize) -> Trajectory<S> {
    if k > t.start_step() && t.covers(k) {
        t.suffix(k).expect("covered")
    } else {
        t.clone()
    }
}

fn differs<S: PartialEq + Clone>(a: &Trajectory<S>, b: &Trajectory<S>) -> bool {
    let from = a.start_step().max(b.start_step());
    let to = a.end_step().max(b.end_step());
    (from..=to).any(|k| a.get(k) != b.get(k))
}
