use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use episync::conditions::{check_theorem2_conditions, ConditionReport};
use episync::executor::{run_episode, DisturbanceModel, ExecutorConfig, ScriptedDisturbance};
use episync::scenario::{build_scenario, desk_config, ScenarioConfig, VehicleState, VehicleSystem};
use episync::sweep::{default_levels, sweep, SweepConfig};
use episync::trace::{EpisodeTrace, TraceEvent};
use episync::{PlanningMode, Scenario};

const EXIT_ABORTED: u8 = 2;
const EXIT_ERROR: u8 = 1;

#[derive(Parser)]
#[command(name = "episync", version, about = "Multi-agent planning under opportunistic synchronization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its trace and summary.
    Run(RunArgs),
    /// Run episodes over a list of disturbance levels.
    Sweep(SweepArgs),
    /// Turn a JSONL trace into a per-step agent table.
    Render(RenderArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario JSON file; the built-in desk scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Planning algorithm.
    #[arg(long, default_value = "alg3")]
    mode: PlanningMode,
    /// Override the planning horizon in steps.
    #[arg(long)]
    horizon: Option<usize>,
    /// Consecutive steps affected by each random disturbance.
    #[arg(long, default_value_t = 1)]
    magnitude: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-step, per-agent probability of a disturbance.
    #[arg(long, default_value_t = 0.0)]
    disturbance_prob: f64,
    /// JSON list of {agent, step, state} entries forcing realized states.
    #[arg(long)]
    disturbance_script: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "episync-run")]
    out: PathBuf,
    /// Trace format; both are written when omitted.
    #[arg(long)]
    format: Option<Format>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated disturbance probabilities, ascending.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    #[arg(long, default_value_t = 50)]
    episodes: usize,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "episync-sweep")]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// JSONL trace written by `run`.
    #[arg(long)]
    trace: PathBuf,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Serialize)]
struct RunSummary {
    scenario: String,
    mode: PlanningMode,
    seed: u64,
    disturbance_prob: f64,
    satisfied: bool,
    task_time: Option<usize>,
    aborted: bool,
    abort_reason: Option<String>,
    abort_detail: Option<String>,
    step_budget: usize,
    disturbances: usize,
    revisions: usize,
    conditions: ConditionReport,
}

fn load_scenario(args: &ScenarioArgs) -> Result<(String, Scenario<VehicleSystem>)> {
    let (name, config) = match &args.scenario {
        Some(path) => (path.display().to_string(), ScenarioConfig::load(path)?),
        None => ("desk".to_string(), desk_config()),
    };
    let mut scenario = build_scenario(&config)?;
    if let Some(h) = args.horizon {
        scenario.solver.horizon = h;
    }
    Ok((name, scenario))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_run(args: RunArgs) -> Result<u8> {
    let (name, scenario) = load_scenario(&args.scenario)?;
    if !(0.0..=1.0).contains(&args.disturbance_prob) {
        bail!("--disturbance-prob must lie in [0, 1]");
    }
    let mut model = DisturbanceModel {
        magnitude: args.scenario.magnitude,
        ..DisturbanceModel::random(args.disturbance_prob, args.seed)
    };
    if let Some(path) = &args.disturbance_script {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let script: Vec<ScriptedDisturbance<VehicleState>> = serde_path_to_error::deserialize(de)
            .map_err(|e| anyhow::anyhow!("invalid disturbance script at `{}`: {}", e.path(), e.inner()))?;
        model.script = script;
    }
    let exec = ExecutorConfig {
        mode: args.scenario.mode,
        ..ExecutorConfig::default()
    };
    let result = run_episode(&scenario, &model, &exec);
    let conditions = check_theorem2_conditions(&scenario, &result)?;
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    if args.format != Some(Format::Csv) {
        write(&args.out.join("trace.jsonl"), result.trace.to_jsonl())?;
    }
    if args.format != Some(Format::Jsonl) {
        write(&args.out.join("trace.csv"), result.trace.to_csv())?;
    }
    let summary = RunSummary {
        scenario: name,
        mode: args.scenario.mode,
        seed: args.seed,
        disturbance_prob: args.disturbance_prob,
        satisfied: result.satisfied,
        task_time: result.task_time,
        aborted: result.aborted(),
        abort_reason: result.abort_reason().map(|r| r.as_str().to_string()),
        abort_detail: result.abort.as_ref().map(|(_, d)| d.clone()),
        step_budget: result.step_budget,
        disturbances: result.disturbances.len(),
        revisions: result.revisions.len(),
        conditions,
    };
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    write(&args.out.join("summary.json"), &text)?;
    print!("{text}");
    Ok(if result.satisfied { 0 } else { EXIT_ABORTED })
}

fn cmd_sweep(args: SweepArgs) -> Result<u8> {
    let (_, scenario) = load_scenario(&args.scenario)?;
    let levels = args.levels.unwrap_or_else(default_levels);
    if levels.is_empty() {
        bail!("--levels must not be empty");
    }
    if levels.iter().any(|p| !(0.0..=1.0).contains(p)) {
        bail!("--levels entries must lie in [0, 1]");
    }
    if levels.windows(2).any(|w| w[0] > w[1]) {
        bail!("--levels must be sorted ascending");
    }
    let config = SweepConfig {
        levels,
        episodes: args.episodes,
        seed: args.seed,
        mode: args.scenario.mode,
        magnitude: args.scenario.magnitude,
        jobs: args.jobs,
    };
    let result = sweep(&scenario, &config);
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    write(&args.out.join("episodes.csv"), result.episodes_csv())?;
    write(&args.out.join("levels.csv"), result.levels_csv())?;
    print!("{}", result.levels_csv());
    match result.task_time_trend() {
        Some(r) => println!("spearman(level, mean task_time) = {r:.4}"),
        None => println!("spearman(level, mean task_time) undefined"),
    }
    Ok(0)
}

#[derive(Serialize)]
struct RenderRow {
    step: usize,
    agent: usize,
    x: i32,
    y: i32,
    e: u32,
    synced: bool,
    event: String,
}

fn cmd_render(args: RenderArgs) -> Result<u8> {
    let file = fs::File::open(&args.trace).with_context(|| format!("cannot read {}", args.trace.display()))?;
    let trace = EpisodeTrace::<VehicleState>::read_jsonl(BufReader::new(file))?;
    let mut rows: Vec<RenderRow> = Vec::new();
    let mut step_start = 0;
    for (idx, row) in trace.rows.iter().enumerate() {
        match &row.event {
            TraceEvent::Realized { agent, state } => {
                if rows.last().is_none_or(|r| r.step != row.step) {
                    step_start = rows.len();
                }
                rows.push(RenderRow {
                    step: row.step,
                    agent: *agent,
                    x: state.x,
                    y: state.y,
                    e: state.energy,
                    synced: false,
                    event: String::new(),
                });
            }
            other => {
                let Some(agent) = other.agent() else { continue };
                let Some(r) = rows[step_start..]
                    .iter_mut()
                    .find(|r| r.step == row.step && r.agent == agent)
                else {
                    bail!("trace row {} refers to an agent with no realized state", idx + 1);
                };
                let tag = match other {
                    TraceEvent::Sync { .. } => {
                        r.synced = true;
                        continue;
                    }
                    TraceEvent::TaskSatisfied { label, .. } => format!("task:{label}"),
                    TraceEvent::Recovery { rejoin_step, .. } => format!("recovery:{rejoin_step}"),
                    e => e.kind().to_string(),
                };
                if !r.event.is_empty() {
                    r.event.push(';');
                }
                r.event.push_str(&tag);
            }
        }
    }
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    match &args.out {
        Some(path) => write(path, &buf)?,
        None => print!("{}", String::from_utf8(buf)?),
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EPISYNC_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Render(a) => cmd_render(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
