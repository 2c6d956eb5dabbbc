//! Disturbance-level sweeps over many seeded episodes.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditions::check_theorem2_conditions;
use crate::executor::{default_step_budget, run_episode, DisturbanceModel, ExecutorConfig, Scenario};
use crate::planner::PlanningMode;
use crate::stats::{inversions, mean, spearman};
use crate::transition_system::TransitionSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub levels: Vec<f64>,
    pub episodes: usize,
    pub seed: u64,
    pub mode: PlanningMode,
    pub magnitude: usize,
    /// Worker threads; `None` uses every available core.
    pub jobs: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            levels: default_levels(),
            episodes: 50,
            seed: 0,
            mode: PlanningMode::AllSyncs,
            magnitude: 1,
            jobs: None,
        }
    }
}

/// `0, 0.02, ..., 0.2`.
pub fn default_levels() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 50.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub level: f64,
    pub seed: u64,
    pub satisfied: bool,
    pub aborted: bool,
    pub abort_reason: String,
    pub task_time: Option<usize>,
    pub disturbances: usize,
    pub c1: bool,
    pub c2: bool,
    pub c3: bool,
}

impl EpisodeRow {
    pub fn conditions_hold(&self) -> bool {
        self.c1 && self.c2 && self.c3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: f64,
    pub episodes: usize,
    pub completed: usize,
    pub mean_task_time: Option<f64>,
    pub abort_rate: f64,
    pub condition_rate: f64,
    pub counterexamples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub step_budget: usize,
    pub episodes: Vec<EpisodeRow>,
    pub levels: Vec<LevelRow>,
}

/// Seed of episode `episode` at level index `level`.
pub fn episode_seed(seed: u64, level: usize, episode: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((level as u64) << 32) ^ episode as u64
}

/// Runs `episodes` episodes per level. Rows come back in level, then episode
/// order regardless of the thread count.
pub fn sweep<A>(scenario: &Scenario<A>, config: &SweepConfig) -> SweepResult
where
    A: TransitionSystem + Sync,
    A::State: Serialize,
{
    assert!(
        config.levels.windows(2).all(|w| w[0] <= w[1]),
        "levels must be sorted ascending"
    );
    let budget = default_step_budget(scenario, config.mode);
    let jobs: Vec<(usize, usize)> = (0..config.levels.len())
        .flat_map(|l| (0..config.episodes).map(move |e| (l, e)))
        .collect();
    let run = |&(l, e): &(usize, usize)| {
        let level = config.levels[l];
        let seed = episode_seed(config.seed, l, e);
        let model = DisturbanceModel {
            magnitude: config.magnitude,
            ..DisturbanceModel::random(level, seed)
        };
        let exec = ExecutorConfig {
            mode: config.mode,
            step_budget: Some(budget),
            recovery_limit: None,
        };
        let result = run_episode(scenario, &model, &exec);
        let report = check_theorem2_conditions(scenario, &result).expect("executor emits complete traces");
        EpisodeRow {
            level,
            seed,
            satisfied: result.satisfied,
            aborted: result.aborted(),
            abort_reason: result
                .abort_reason()
                .map(|r| r.as_str().to_string())
                .unwrap_or_default(),
            task_time: result.task_time,
            disturbances: result.disturbances.len(),
            c1: report.c1,
            c2: report.c2,
            c3: report.c3,
        }
    };
    let episodes: Vec<EpisodeRow> = match config.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(|| jobs.par_iter().map(run).collect()),
        None => jobs.par_iter().map(run).collect(),
    };
    let levels = aggregate(&config.levels, &episodes);
    SweepResult {
        step_budget: budget,
        episodes,
        levels,
    }
}

/// One summary row per level.
pub fn aggregate(levels: &[f64], episodes: &[EpisodeRow]) -> Vec<LevelRow> {
    levels
        .iter()
        .map(|&level| {
            let rows: Vec<&EpisodeRow> = episodes.iter().filter(|r| r.level == level).collect();
            let n = rows.len().max(1) as f64;
            let times: Vec<f64> = rows
                .iter()
                .filter_map(|r| r.task_time.map(|t| t as f64))
                .collect();
            LevelRow {
                level,
                episodes: rows.len(),
                completed: times.len(),
                mean_task_time: mean(&times),
                abort_rate: rows.iter().filter(|r| r.aborted).count() as f64 / n,
                condition_rate: rows.iter().filter(|r| r.conditions_hold()).count() as f64 / n,
                counterexamples: rows
                    .iter()
                    .filter(|r| r.conditions_hold() && !r.satisfied)
                    .count(),
            }
        })
        .collect()
}

impl SweepResult {
    /// Spearman correlation between level and mean task time over levels
    /// with completed episodes.
    pub fn task_time_trend(&self) -> Option<f64> {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .levels
            .iter()
            .filter_map(|r| r.mean_task_time.map(|t| (r.level, t)))
            .unzip();
        spearman(&x, &y)
    }

    pub fn abort_rate_inversions(&self) -> usize {
        let rates: Vec<f64> = self.levels.iter().map(|r| r.abort_rate).collect();
        inversions(&rates)
    }

    pub fn write_episodes_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.episodes {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_levels_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.levels {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn episodes_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_episodes_csv(&mut buf).expect("write to memory");
        String::from_utf8(buf).expect("utf-8")
    }

    pub fn levels_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_levels_csv(&mut buf).expect("write to memory");
        String::from_utf8(buf).expect("utf-8")
    }
}
