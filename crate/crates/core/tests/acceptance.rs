use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use episync::conditions::check_theorem2_conditions;
use episync::energy::{power_uav, power_ugv, EnergyModel};
use episync::executor::{
    run_episode, DisturbanceModel, EpisodeResult, ExecutorConfig, ScriptedDisturbance,
};
use episync::recovery::backward_reach;
use episync::scenario::{
    build_scenario, desk_config, random_config, RandomParams, ScenarioConfig, VehicleKind,
};
use episync::solver::SolverConfig;
use episync::sweep::{sweep, SweepConfig};
use episync::sync_model::{next_sync_step, SyncRule, SyncStates};
use episync::tasking::{StateClass, TaskSiteAssignment};
use episync::transition_system::{ExplicitSystem, Joint, MultiAgentSystem, TransitionSystem};
use episync::{PlanningMode, Scenario};
use serde::Serialize;

const UNDISTURBED_EPISODES: u64 = 200;
const DISTURBED_LEVELS: [f64; 10] = [0.02, 0.04, 0.06, 0.08, 0.1, 0.12, 0.14, 0.16, 0.18, 0.2];
const DISTURBED_PER_LEVEL: u64 = 50;
const DIGRAPHS: u64 = 100;
const MAX_DIGRAPH_STATES: u32 = 50;
const MAX_REACH_DEPTH: usize = 4;
const SWEEP_LEVELS: [f64; 6] = [0.0, 0.04, 0.08, 0.12, 0.16, 0.2];
const SWEEP_EPISODES: usize = 50;
const SWEEP_SEED: u64 = 2024;
const MIN_SPEARMAN: f64 = 0.8;
const MAX_ABORT_INVERSIONS: usize = 1;
const ENERGY_RTOL: f64 = 1e-9;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

/// Replan audit accumulated over every suite episode.
#[derive(Default)]
struct PrefixAudit {
    revisions: usize,
    violations: Vec<String>,
}

impl PrefixAudit {
    fn record<A>(&mut self, scn: &Scenario<A>, result: &EpisodeResult<A::State>)
    where
        A: TransitionSystem,
    {
        for record in &result.revisions {
            let Some(prior) = &record.prior else { continue };
            self.revisions += 1;
            let rev = &record.revision;
            let k = rev.step;
            let Some(x_k) = result.realized.get(k) else {
                self.violations.push(format!("revision at {k} has no realized state"));
                continue;
            };
            for i in 0..x_k.len() {
                if scn.sync.contains(i, x_k) {
                    continue;
                }
                let Some(k_star) = next_sync_step(&prior.global_plan, &scn.sync, i, k) else {
                    self.violations.push(format!("agent {i} has no future sync at {k}"));
                    continue;
                };
                for kappa in k..=k_star {
                    let believed = prior.planner_belief[i].get(kappa);
                    let planned = rev.plan.get(kappa).map(|x| &x[i]);
                    if believed.is_none() || believed != planned {
                        self.violations
                            .push(format!("revision at {k}: agent {i} moved at step {kappa}"));
                    }
                }
                if !rev.plan.get(k_star).is_some_and(|x| scn.sync.contains(i, x)) {
                    self.violations
                        .push(format!("revision at {k}: agent {i} not in sync at {k_star}"));
                }
            }
        }
    }
}

fn dump_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-counterexamples")
}

fn undisturbed(audit: &mut PrefixAudit) -> Verdict {
    let params = RandomParams::default();
    let exec = ExecutorConfig::default();
    let mut failures = Vec::new();
    for seed in 0..UNDISTURBED_EPISODES {
        let cfg = random_config(seed, &params);
        let scn = build_scenario(&cfg).expect("random scenario builds");
        let result = run_episode(&scn, &DisturbanceModel::none(), &exec);
        audit.record(&scn, &result);
        if !result.satisfied {
            failures.push(format!("seed {seed}: {:?}", result.abort));
        }
    }
    Verdict::new(
        failures.is_empty(),
        format!(
            "{}/{} satisfied{}",
            UNDISTURBED_EPISODES as usize - failures.len(),
            UNDISTURBED_EPISODES,
            failures.first().map(|f| format!("; first failure {f}")).unwrap_or_default()
        ),
    )
}

fn disturbed(audit: &mut PrefixAudit) -> Verdict {
    let params = RandomParams::default();
    let exec = ExecutorConfig::default();
    let mut episodes = 0;
    let mut qualifying = 0;
    let mut satisfied = 0;
    let mut counterexamples = Vec::new();
    for (level, &p) in DISTURBED_LEVELS.iter().enumerate() {
        for e in 0..DISTURBED_PER_LEVEL {
            let seed = 10_000 + level as u64 * DISTURBED_PER_LEVEL + e;
            let scn = build_scenario(&random_config(seed, &params)).expect("random scenario builds");
            let result = run_episode(&scn, &DisturbanceModel::random(p, seed), &exec);
            audit.record(&scn, &result);
            episodes += 1;
            satisfied += usize::from(result.satisfied);
            let report = match check_theorem2_conditions(&scn, &result) {
                Ok(r) => r,
                Err(e) => {
                    counterexamples.push(format!("seed {seed}: trace invalid: {e}"));
                    continue;
                }
            };
            if !report.all() {
                continue;
            }
            qualifying += 1;
            if !result.satisfied {
                let dir = dump_dir();
                std::fs::create_dir_all(&dir).expect("dump dir");
                let path = dir.join(format!("seed-{seed}.jsonl"));
                std::fs::write(&path, result.trace.to_jsonl()).expect("dump trace");
                counterexamples.push(format!("seed {seed} p={p}: {}", path.display()));
            }
        }
    }
    for c in &counterexamples {
        println!("    counterexample {c}");
    }
    Verdict::new(
        counterexamples.is_empty() && qualifying > 0,
        format!(
            "{episodes} episodes, {satisfied} satisfied, {qualifying} meet the conditions, {} counterexamples",
            counterexamples.len()
        ),
    )
}

/// Single agent on a main line 0..5 (5 loops) with detours of chosen length.
/// States 0 and 3 are synchronization states, the task class is {5}.
fn recovery_fixture() -> Scenario<ExplicitSystem<u32>> {
    let edges = [
        (0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 5),
        (0, 10), (10, 11), (11, 3),
        (0, 20), (20, 21), (21, 22), (22, 4),
        (2, 30), (30, 31), (31, 5),
        (2, 40), (40, 41), (41, 42), (42, 5),
    ];
    let states: BTreeSet<u32> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    let agent = ExplicitSystem::new(states, edges).expect("valid system");
    Scenario {
        system: MultiAgentSystem::new(vec![agent]).expect("one agent"),
        assignment: TaskSiteAssignment::new([StateClass::new("site", |s: &u32| *s == 5)])
            .expect("one class"),
        sync: SyncStates::new(vec![SyncRule::local(|s: &u32| *s == 0 || *s == 3)]),
        initial: Joint(vec![0]),
        updates: Vec::new(),
        solver: SolverConfig { tail: 3, ..SolverConfig::default() },
    }
}

fn scripted(scn: &Scenario<ExplicitSystem<u32>>, step: usize, state: u32) -> EpisodeResult<u32> {
    let model = DisturbanceModel::scripted(vec![ScriptedDisturbance { agent: 0, step, state }]);
    run_episode(scn, &model, &ExecutorConfig::default())
}

fn synced_at<S: Clone + Serialize>(result: &EpisodeResult<S>, agent: usize, step: usize) -> bool {
    result.trace.rows.iter().any(|r| {
        r.step == step && r.event.kind() == "sync" && r.event.agent() == Some(agent)
    })
}

fn recovery_fixtures(audit: &mut PrefixAudit) -> Verdict {
    let scn = recovery_fixture();
    let plan = run_episode(&scn, &DisturbanceModel::none(), &ExecutorConfig::default())
        .revisions[0]
        .revision
        .plan
        .clone();
    let kappa1 = 1;
    let k_star = next_sync_step(&plan, &scn.sync, 0, kappa1).expect("plan revisits sync");
    let kappa2 = 3;
    let k_prime = plan.steps().find(|(_, x)| x[0] == 5).map(|(k, _)| k).expect("plan visits site");
    let mut checks: Vec<(&str, bool)> = vec![("sync step is 3", k_star == 3), ("site step is 5", k_prime == 5)];

    let exact = scripted(&scn, kappa1, 10);
    audit.record(&scn, &exact);
    checks.push((
        "sync reached after exact recovery",
        exact.disturbances.first().and_then(|d| d.n_star) == Some(k_star - kappa1)
            && exact.realized.get(k_star).is_some_and(|x| scn.sync.contains(0, x))
            && synced_at(&exact, 0, k_star),
    ));
    let severe = scripted(&scn, kappa1, 20);
    audit.record(&scn, &severe);
    checks.push((
        "sync missed when one step too severe",
        severe.disturbances.first().and_then(|d| d.n_star) == Some(k_star - kappa1 + 1)
            && severe.realized.get(k_star).is_some_and(|x| !scn.sync.contains(0, x))
            && !synced_at(&severe, 0, k_star),
    ));

    let exact = scripted(&scn, kappa2, 30);
    audit.record(&scn, &exact);
    checks.push((
        "site reached after exact recovery",
        exact.disturbances.first().and_then(|d| d.n_star) == Some(k_prime - kappa2)
            && exact.satisfied
            && exact.visits.get("site").map(|v| v.step) == Some(k_prime),
    ));
    let severe = scripted(&scn, kappa2, 40);
    audit.record(&scn, &severe);
    checks.push((
        "site missed when one step too severe",
        severe.disturbances.first().and_then(|d| d.n_star) == Some(k_prime - kappa2 + 1)
            && severe.visits.get("site").map(|v| v.step) == Some(k_prime + 1),
    ));

    let failed: Vec<_> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    Verdict::new(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} fixture checks hold", checks.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    )
}

/// Endpoints of every path with exactly `n` edges from `s`, by enumeration.
fn path_ends(adj: &[Vec<u32>], s: u32, n: usize) -> BTreeSet<u32> {
    let mut ends = BTreeSet::new();
    let mut stack = vec![(s, 0)];
    while let Some((v, len)) = stack.pop() {
        if len == n {
            ends.insert(v);
            continue;
        }
        for &w in &adj[v as usize] {
            stack.push((w, len + 1));
        }
    }
    ends
}

fn reach_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut comparisons = 0;
    let mut mismatches = Vec::new();
    for g in 0..DIGRAPHS {
        let n_states = rng.gen_range(1..=MAX_DIGRAPH_STATES);
        let mut adj = vec![Vec::new(); n_states as usize];
        for list in adj.iter_mut() {
            let degree = rng.gen_range(0..=3);
            for _ in 0..degree {
                list.push(rng.gen_range(0..n_states));
            }
        }
        let edges: Vec<(u32, u32)> = adj
            .iter()
            .enumerate()
            .flat_map(|(a, l)| l.iter().map(move |&b| (a as u32, b)))
            .collect();
        let system = ExplicitSystem::new(0..n_states, edges).expect("valid digraph");
        for depth in 0..=MAX_REACH_DEPTH {
            let ends: Vec<BTreeSet<u32>> = (0..n_states).map(|s| path_ends(&adj, s, depth)).collect();
            for x in 0..n_states {
                let expected: BTreeSet<u32> =
                    (0..n_states).filter(|&s| ends[s as usize].contains(&x)).collect();
                let got = backward_reach(&system, &x, depth, MAX_REACH_DEPTH).expect("within limit");
                comparisons += 1;
                if got != expected {
                    mismatches.push(format!("graph {g}, target {x}, n={depth}"));
                }
            }
        }
    }
    Verdict::new(
        mismatches.is_empty(),
        format!(
            "{comparisons} reach sets compared, {} mismatches{}",
            mismatches.len(),
            mismatches.first().map(|m| format!("; first {m}")).unwrap_or_default()
        ),
    )
}

fn prefix(audit: &PrefixAudit) -> Verdict {
    for v in audit.violations.iter().take(5) {
        println!("    {v}");
    }
    Verdict::new(
        audit.violations.is_empty() && audit.revisions > 0,
        format!("{} replans audited, {} violations", audit.revisions, audit.violations.len()),
    )
}

fn sweep_config() -> SweepConfig {
    SweepConfig {
        levels: SWEEP_LEVELS.to_vec(),
        episodes: SWEEP_EPISODES,
        seed: SWEEP_SEED,
        mode: PlanningMode::AllSyncs,
        magnitude: 1,
        jobs: None,
    }
}

fn sweep_trend() -> (Verdict, (String, String)) {
    let scn = build_scenario(&desk_config()).expect("desk scenario builds");
    let result = sweep(&scn, &sweep_config());
    for row in &result.levels {
        println!(
            "    p={:.2} completed={}/{} mean_task_time={:?} abort_rate={:.3}",
            row.level, row.completed, row.episodes, row.mean_task_time, row.abort_rate
        );
    }
    let rho = result.task_time_trend();
    let inversions = result.abort_rate_inversions();
    let pass = rho.is_some_and(|r| r > MIN_SPEARMAN) && inversions <= MAX_ABORT_INVERSIONS;
    let verdict = Verdict::new(
        pass,
        format!(
            "{} levels x {SWEEP_EPISODES} episodes, spearman {} (> {MIN_SPEARMAN}), {inversions} abort-rate inversions (<= {MAX_ABORT_INVERSIONS})",
            SWEEP_LEVELS.len(),
            rho.map_or("undefined".to_string(), |r| format!("{r:.4}")),
        ),
    );
    (verdict, (result.episodes_csv(), result.levels_csv()))
}

fn determinism(first: &(String, String)) -> Verdict {
    let scn = build_scenario(&desk_config()).expect("desk scenario builds");
    let again = sweep(&scn, &sweep_config());
    let same_episodes = again.episodes_csv() == first.0;
    let same_levels = again.levels_csv() == first.1;
    Verdict::new(
        same_episodes && same_levels,
        format!("episodes.csv identical: {same_episodes}, levels.csv identical: {same_levels}"),
    )
}

fn close(got: f64, want: f64) -> bool {
    ((got - want) / want).abs() <= ENERGY_RTOL
}

fn energy() -> Verdict {
    let checks = [
        ("power_ugv(0)", power_ugv(0.0_f64).unwrap(), 374.115),
        ("power_uav(0)", power_uav(0.0_f64).unwrap(), 241.08),
        ("power_ugv(1)", power_ugv(1.0_f64).unwrap(), 862.155),
    ];
    let mut failed: Vec<String> = checks
        .iter()
        .filter(|(_, got, want)| !close(*got, *want))
        .map(|(name, got, want)| format!("{name}={got} want {want}"))
        .collect();
    let reloaded = ScenarioConfig::from_json(&desk_config().to_json()).expect("desk config parses");
    let model = reloaded.energy_model();
    let defaults = EnergyModel::<f64>::default();
    for (kind, want) in [(VehicleKind::Ugv, 25.01e6), (VehicleKind::Uav, 287.7e3)] {
        for got in [model.capacity(kind), defaults.capacity(kind)] {
            if !close(got, want) {
                failed.push(format!("{kind:?} capacity {got} want {want}"));
            }
        }
    }
    Verdict::new(
        failed.is_empty(),
        if failed.is_empty() {
            "3 power values and 2 capacities within 1e-9 relative".to_string()
        } else {
            failed.join("; ")
        },
    )
}

fn main() -> ExitCode {
    let mut audit = PrefixAudit::default();
    let mut all = true;
    let mut report = |n: u32, name: &str, start: Instant, v: Verdict| {
        all &= v.pass;
        println!(
            "criterion {n} {name}: {} ({}) [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    };

    let t = Instant::now();
    let v = undisturbed(&mut audit);
    report(1, "undisturbed satisfaction", t, v);
    let t = Instant::now();
    let v = disturbed(&mut audit);
    report(2, "satisfaction under disturbance", t, v);
    let t = Instant::now();
    let v = recovery_fixtures(&mut audit);
    report(3, "recovery fixtures", t, v);
    let t = Instant::now();
    report(4, "backward reach oracle", t, reach_oracle());
    let t = Instant::now();
    report(5, "prefix preservation", t, prefix(&audit));
    let t = Instant::now();
    let (v, csvs) = sweep_trend();
    report(6, "disturbance sweep trend", t, v);
    let t = Instant::now();
    report(7, "sweep determinism", t, determinism(&csvs));
    let t = Instant::now();
    report(8, "energy model", t, energy());

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
