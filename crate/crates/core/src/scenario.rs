//! Road-monitoring scenario with ground and aerial vehicles.
//!
//! The map is a grid with a road and labelled depots. Ground vehicles (UGVs)
//! stay on the road; aerial vehicles (UAVs) may fly over any cell. An agent
//! state is `(x, y, energy, kind, docked)`; energy is kept in integer quanta so
//! that the state space is finite. Each transition lasts `dt_s` seconds and
//! either moves to a 4-neighbour cell, idles in place, or docks at a depot to
//! recharge. Transitions that would drain the battery below zero are absent.
//!
//! UGVs are always in contact with the planner. A UAV is in contact exactly
//! when docked. Docking is a single-vehicle transition and is only offered at
//! depots, so coalitions group vehicles in the configuration but do not widen
//! the contact set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{EnergyModel, RechargeCurve, UAV_CAPACITY_J, UGV_CAPACITY_J};
use crate::executor::{Scenario, ScheduledUpdate};
use crate::solver::SolverConfig;
use crate::sync_model::{SyncRule, SyncStates};
use crate::tasking::{StateClass, TaskSiteAssignment, TaskUpdate};
use crate::transition_system::{Joint, MultiAgentSystem, TransitionSystem};

pub const SCENARIO_SCHEMA: &str = "episync-scenario/1";

pub type Cell = (i32, i32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleKind {
    Ugv,
    Uav,
}

impl fmt::Display for VehicleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ugv => "ugv",
            Self::Uav => "uav",
        })
    }
}

/// Position, energy in quanta, and status flags of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: i32,
    pub y: i32,
    pub energy: u32,
    pub kind: VehicleKind,
    pub docked: bool,
}

impl VehicleState {
    pub fn cell(&self) -> Cell {
        (self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    pub width: i32,
    pub height: i32,
    pub cell_m: f64,
    pub road: BTreeSet<Cell>,
    pub depots: BTreeMap<String, Cell>,
}

impl GridMap {
    pub fn in_bounds(&self, c: Cell) -> bool {
        c.0 >= 0 && c.1 >= 0 && c.0 < self.width && c.1 < self.height
    }

    pub fn is_road(&self, c: Cell) -> bool {
        self.road.contains(&c)
    }

    pub fn is_depot(&self, c: Cell) -> bool {
        self.depots.values().any(|&d| d == c)
    }

    fn neighbours(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        [(0, -1), (-1, 0), (1, 0), (0, 1)]
            .into_iter()
            .map(move |(dx, dy)| (c.0 + dx, c.1 + dy))
            .filter(move |&n| self.in_bounds(n))
    }
}

/// Transition system of a single vehicle.
#[derive(Debug, Clone)]
pub struct VehicleSystem {
    kind: VehicleKind,
    map: Arc<GridMap>,
    capacity: u32,
    move_cost: u32,
    idle_cost: u32,
    recharged: Vec<u32>,
    recharge_preimage: Vec<Vec<u32>>,
    quantum_j: f64,
}

impl VehicleSystem {
    pub fn new(
        kind: VehicleKind,
        map: Arc<GridMap>,
        energy: &EnergyModel<f64>,
        params: &EnergyParams,
    ) -> Result<Self, ScenarioError> {
        let quantum_j = params.quantum(kind);
        if !(quantum_j > 0.0) {
            return Err(ScenarioError::invalid("energy.quanta", "quantum must be positive"));
        }
        if !(params.dt_s > 0.0) {
            return Err(ScenarioError::invalid("energy.dt_s", "time step must be positive"));
        }
        let capacity_j = energy.capacity(kind);
        let capacity = (capacity_j / quantum_j).floor() as u32;
        let speed = map.cell_m / params.dt_s;
        let to_quanta = |joules: f64| (joules / quantum_j - 1e-9).ceil().max(0.0) as u32;
        let move_cost = to_quanta(
            energy
                .power(kind, speed)
                .map_err(|e| ScenarioError::invalid("map.cell_m", e.to_string()))?
                * params.dt_s,
        );
        let idle_cost = to_quanta(energy.power(kind, 0.0).expect("zero speed") * params.dt_s);
        let curve: &RechargeCurve<f64> = energy.recharge(kind);
        let recharged: Vec<u32> = (0..=capacity)
            .map(|e| {
                let gain = curve.rate(e as f64 * quantum_j, capacity_j) * params.dt_s / quantum_j;
                (e + (gain.floor() as u32).max(1)).min(capacity)
            })
            .collect();
        let mut recharge_preimage = vec![Vec::new(); capacity as usize + 1];
        for (e, &next) in recharged.iter().enumerate() {
            recharge_preimage[next as usize].push(e as u32);
        }
        Ok(Self {
            kind,
            map,
            capacity,
            move_cost,
            idle_cost,
            recharged,
            recharge_preimage,
            quantum_j,
        })
    }

    pub fn kind(&self) -> VehicleKind {
        self.kind
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    /// Battery capacity in quanta.
    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn move_cost(&self) -> u32 {
        self.move_cost
    }

    pub fn idle_cost(&self) -> u32 {
        self.idle_cost
    }

    pub fn quantum_j(&self) -> f64 {
        self.quantum_j
    }

    /// Energy after one docked step starting from `energy`.
    pub fn recharge(&self, energy: u32) -> u32 {
        self.recharged[energy as usize]
    }

    fn allowed_cell(&self, c: Cell) -> bool {
        self.map.in_bounds(c) && (self.kind == VehicleKind::Uav || self.map.is_road(c))
    }

    fn state(&self, c: Cell, energy: u32, docked: bool) -> VehicleState {
        VehicleState {
            x: c.0,
            y: c.1,
            energy,
            kind: self.kind,
            docked,
        }
    }
}

impl TransitionSystem for VehicleSystem {
    type State = VehicleState;

    fn contains(&self, s: &VehicleState) -> bool {
        s.kind == self.kind
            && self.allowed_cell(s.cell())
            && s.energy <= self.capacity
            && (!s.docked || self.map.is_depot(s.cell()))
    }

    fn successors(&self, s: &VehicleState) -> Vec<VehicleState> {
        if !self.contains(s) {
            return Vec::new();
        }
        let here = s.cell();
        let mut out = Vec::new();
        if s.energy >= self.move_cost {
            for n in self.map.neighbours(here).filter(|&n| self.allowed_cell(n)) {
                out.push(self.state(n, s.energy - self.move_cost, false));
            }
        }
        if s.energy >= self.idle_cost {
            out.push(self.state(here, s.energy - self.idle_cost, false));
        }
        if self.map.is_depot(here) {
            out.push(self.state(here, self.recharge(s.energy), true));
        }
        out.sort();
        out.dedup();
        out
    }

    fn predecessors(&self, t: &VehicleState) -> Vec<VehicleState> {
        if !self.contains(t) {
            return Vec::new();
        }
        let here = t.cell();
        let mut out = Vec::new();
        let flags = |c: Cell| -> &'static [bool] {
            if self.map.is_depot(c) {
                &[false, true]
            } else {
                &[false]
            }
        };
        if t.docked {
            for &e in &self.recharge_preimage[t.energy as usize] {
                for &d in flags(here) {
                    out.push(self.state(here, e, d));
                }
            }
        } else {
            if let Some(e) = t.energy.checked_add(self.idle_cost).filter(|&e| e <= self.capacity) {
                for &d in flags(here) {
                    out.push(self.state(here, e, d));
                }
            }
            if let Some(e) = t.energy.checked_add(self.move_cost).filter(|&e| e <= self.capacity) {
                for n in self.map.neighbours(here).filter(|&n| self.allowed_cell(n)) {
                    for &d in flags(n) {
                        out.push(self.state(n, e, d));
                    }
                }
            }
        }
        out.retain(|p| self.contains(p));
        out.sort();
        out.dedup();
        out
    }

    /// Docking is preferred over idling, and idling over moving.
    fn preference(&self, from: &VehicleState, to: &VehicleState) -> u32 {
        match (from.cell() == to.cell(), to.docked) {
            (true, true) => 0,
            (true, false) => 1,
            (false, _) => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(String),
    #[error("invalid scenario at `{key}`: {message}")]
    Invalid { key: String, message: String },
}

impl ScenarioError {
    fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Invalid {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepotConfig {
    pub label: String,
    pub cell: [i32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub width: i32,
    pub height: i32,
    #[serde(default = "default_cell_m")]
    pub cell_m: f64,
    pub road: Vec<[i32; 2]>,
    pub depots: Vec<DepotConfig>,
}

fn default_cell_m() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    #[serde(rename = "type")]
    pub kind: VehicleKind,
    pub start: [i32; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_j: Option<f64>,
    /// Initial energy; defaults to full capacity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_j: Option<f64>,
    #[serde(default)]
    pub coalition: usize,
    /// Starts docked; defaults to true when the start cell is a depot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub docked: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quanta {
    pub uav_j: f64,
    pub ugv_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyParams {
    pub quanta: Quanta,
    pub dt_s: f64,
    pub uav_recharge: RechargeCurve<f64>,
    pub ugv_recharge: RechargeCurve<f64>,
}

impl EnergyParams {
    pub fn quantum(&self, kind: VehicleKind) -> f64 {
        match kind {
            VehicleKind::Ugv => self.quanta.ugv_j,
            VehicleKind::Uav => self.quanta.uav_j,
        }
    }
}

impl Default for EnergyParams {
    fn default() -> Self {
        let model = EnergyModel::<f64>::default();
        Self {
            quanta: Quanta {
                uav_j: 1_000.0,
                ugv_j: 100_000.0,
            },
            dt_s: 60.0,
            uav_recharge: model.uav_recharge,
            ugv_recharge: model.ugv_recharge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub label: String,
    pub cells: Vec<[i32; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdateConfig {
    pub step: usize,
    #[serde(default)]
    pub remove: Vec<String>,
    #[serde(default)]
    pub add: Vec<TaskConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanningParams {
    pub horizon: usize,
    pub joint_node_budget: usize,
    pub end_in_sync: bool,
    /// Steps each plan continues after its last task visit.
    pub tail: usize,
}

impl Default for PlanningParams {
    fn default() -> Self {
        Self {
            horizon: 200,
            joint_node_budget: 20_000,
            end_in_sync: true,
            tail: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: String,
    pub map: MapConfig,
    pub agents: Vec<AgentConfig>,
    #[serde(default)]
    pub energy: EnergyParams,
    pub tasks: Vec<TaskConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub updates: Vec<UpdateConfig>,
    #[serde(default)]
    pub planning: PlanningParams,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            ScenarioError::Invalid {
                key,
                message: e.into_inner().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn energy_model(&self) -> EnergyModel<f64> {
        let mut m = EnergyModel::<f64>::default();
        m.uav_recharge = self.energy.uav_recharge;
        m.ugv_recharge = self.energy.ugv_recharge;
        m
    }
}

fn cell(c: [i32; 2]) -> Cell {
    (c[0], c[1])
}

fn task_class(t: &TaskConfig) -> StateClass<VehicleState> {
    let cells: BTreeSet<Cell> = t.cells.iter().copied().map(cell).collect();
    StateClass::new(t.label.clone(), move |s: &VehicleState| cells.contains(&s.cell()))
}

fn check_task(map: &GridMap, t: &TaskConfig, key: &str) -> Result<(), ScenarioError> {
    if t.cells.is_empty() {
        return Err(ScenarioError::invalid(format!("{key}.cells"), "task needs at least one cell"));
    }
    for (j, c) in t.cells.iter().enumerate() {
        if !map.in_bounds(cell(*c)) {
            return Err(ScenarioError::invalid(format!("{key}.cells[{j}]"), "cell outside the map"));
        }
    }
    Ok(())
}

/// Builds the scenario described by `config`.
pub fn build_scenario(config: &ScenarioConfig) -> Result<Scenario<VehicleSystem>, ScenarioError> {
    if config.schema != SCENARIO_SCHEMA {
        return Err(ScenarioError::invalid(
            "schema",
            format!("expected `{SCENARIO_SCHEMA}`, found `{}`", config.schema),
        ));
    }
    let m = &config.map;
    if m.width <= 0 || m.height <= 0 {
        return Err(ScenarioError::invalid("map.width", "map dimensions must be positive"));
    }
    if !(m.cell_m > 0.0) {
        return Err(ScenarioError::invalid("map.cell_m", "cell size must be positive"));
    }
    let mut map = GridMap {
        width: m.width,
        height: m.height,
        cell_m: m.cell_m,
        road: BTreeSet::new(),
        depots: BTreeMap::new(),
    };
    for (j, c) in m.road.iter().enumerate() {
        if !map.in_bounds(cell(*c)) {
            return Err(ScenarioError::invalid(format!("map.road[{j}]"), "cell outside the map"));
        }
        map.road.insert(cell(*c));
    }
    if m.depots.is_empty() {
        return Err(ScenarioError::invalid("map.depots", "at least one depot is required"));
    }
    for (j, d) in m.depots.iter().enumerate() {
        if !map.in_bounds(cell(d.cell)) {
            return Err(ScenarioError::invalid(format!("map.depots[{j}].cell"), "cell outside the map"));
        }
        if map.depots.insert(d.label.clone(), cell(d.cell)).is_some() {
            return Err(ScenarioError::invalid(format!("map.depots[{j}].label"), "duplicate depot label"));
        }
    }
    let map = Arc::new(map);
    if config.agents.is_empty() {
        return Err(ScenarioError::invalid("agents", "at least one agent is required"));
    }

    let base = config.energy_model();
    let mut systems = Vec::new();
    let mut initial = Vec::new();
    for (j, a) in config.agents.iter().enumerate() {
        let key = format!("agents[{j}]");
        let mut model = base;
        if let Some(cap) = a.capacity_j {
            if !(cap > 0.0) {
                return Err(ScenarioError::invalid(format!("{key}.capacity_j"), "capacity must be positive"));
            }
            match a.kind {
                VehicleKind::Ugv => model.ugv_capacity_j = cap,
                VehicleKind::Uav => model.uav_capacity_j = cap,
            }
        }
        let sys = VehicleSystem::new(a.kind, Arc::clone(&map), &model, &config.energy)?;
        let start = cell(a.start);
        if !map.in_bounds(start) {
            return Err(ScenarioError::invalid(format!("{key}.start"), "start outside the map"));
        }
        if a.kind == VehicleKind::Ugv && !map.is_road(start) {
            return Err(ScenarioError::invalid(format!("{key}.start"), "UGV must start on the road"));
        }
        let energy = match a.energy_j {
            Some(e) if e < 0.0 || e > model.capacity(a.kind) => {
                return Err(ScenarioError::invalid(
                    format!("{key}.energy_j"),
                    "initial energy outside [0, capacity]",
                ))
            }
            Some(e) => (e / sys.quantum_j()).floor() as u32,
            None => sys.capacity(),
        };
        let docked = a.docked.unwrap_or_else(|| map.is_depot(start));
        if docked && !map.is_depot(start) {
            return Err(ScenarioError::invalid(format!("{key}.docked"), "can only dock at a depot"));
        }
        initial.push(VehicleState {
            x: start.0,
            y: start.1,
            energy,
            kind: a.kind,
            docked,
        });
        systems.push(sys);
    }

    let rules = config
        .agents
        .iter()
        .map(|a| match a.kind {
            VehicleKind::Ugv => SyncRule::always(),
            VehicleKind::Uav => SyncRule::local(|s: &VehicleState| s.docked),
        })
        .collect();

    let mut labels = BTreeSet::new();
    let mut classes = Vec::new();
    for (j, t) in config.tasks.iter().enumerate() {
        let key = format!("tasks[{j}]");
        check_task(&map, t, &key)?;
        if !labels.insert(t.label.clone()) {
            return Err(ScenarioError::invalid(format!("{key}.label"), "duplicate task label"));
        }
        classes.push(task_class(t));
    }
    let assignment = TaskSiteAssignment::new(classes).expect("labels checked unique");

    let mut updates = Vec::new();
    for (j, u) in config.updates.iter().enumerate() {
        let key = format!("updates[{j}]");
        if u.step == 0 {
            return Err(ScenarioError::invalid(format!("{key}.step"), "updates start at step 1"));
        }
        for (l, t) in u.add.iter().enumerate() {
            check_task(&map, t, &format!("{key}.add[{l}]"))?;
        }
        updates.push(ScheduledUpdate {
            step: u.step,
            update: TaskUpdate {
                removed: u.remove.iter().cloned().collect(),
                added: u.add.iter().map(task_class).collect(),
            },
        });
    }
    updates.sort_by_key(|u| u.step);

    let system = MultiAgentSystem::new(systems).expect("agents non-empty");
    Ok(Scenario {
        system,
        assignment,
        sync: SyncStates::new(rules),
        initial: Joint(initial),
        updates,
        solver: SolverConfig {
            horizon: config.planning.horizon,
            joint_node_budget: config.planning.joint_node_budget,
            end_in_sync: config.planning.end_in_sync,
            tail: config.planning.tail,
            ..SolverConfig::default()
        },
    })
}

/// The default desk-scale scenario: an 8x8 map with a T-shaped road, three
/// depots, one UGV and two UAVs in one coalition, and five road cells to
/// visit.
pub fn desk_config() -> ScenarioConfig {
    let mut road: Vec<[i32; 2]> = (0..8).map(|x| [x, 3]).collect();
    road.extend((4..8).map(|y| [4, y]));
    ScenarioConfig {
        schema: SCENARIO_SCHEMA.into(),
        map: MapConfig {
            width: 8,
            height: 8,
            cell_m: 100.0,
            road,
            depots: vec![
                DepotConfig { label: "A".into(), cell: [0, 3] },
                DepotConfig { label: "B".into(), cell: [7, 3] },
                DepotConfig { label: "C".into(), cell: [4, 7] },
            ],
        },
        agents: vec![
            AgentConfig::new(VehicleKind::Ugv, [0, 3]),
            AgentConfig::new(VehicleKind::Uav, [0, 3]),
            AgentConfig::new(VehicleKind::Uav, [0, 3]),
        ],
        energy: EnergyParams::default(),
        tasks: vec![
            TaskConfig { label: "t1".into(), cells: vec![[2, 3]] },
            TaskConfig { label: "t2".into(), cells: vec![[5, 3]] },
            TaskConfig { label: "t3".into(), cells: vec![[7, 3]] },
            TaskConfig { label: "t4".into(), cells: vec![[4, 5]] },
            TaskConfig { label: "t5".into(), cells: vec![[4, 6]] },
        ],
        updates: Vec::new(),
        planning: PlanningParams::default(),
    }
}

impl AgentConfig {
    pub fn new(kind: VehicleKind, start: [i32; 2]) -> Self {
        Self {
            kind,
            start,
            capacity_j: None,
            energy_j: None,
            coalition: 0,
            docked: None,
        }
    }
}

/// Bounds for [`random_config`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomParams {
    pub min_size: i32,
    pub max_size: i32,
    pub ugvs: usize,
    pub uavs: usize,
    pub min_tasks: usize,
    pub max_tasks: usize,
}

impl Default for RandomParams {
    fn default() -> Self {
        Self {
            min_size: 5,
            max_size: 8,
            ugvs: 1,
            uavs: 2,
            min_tasks: 2,
            max_tasks: 5,
        }
    }
}

/// A random scenario: a left-to-right road with occasional jogs, depots at
/// both road ends and midway, all agents starting docked at the first depot,
/// and task sites on distinct road cells.
pub fn random_config(seed: u64, params: &RandomParams) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = rng.gen_range(params.min_size..=params.max_size);
    let height = rng.gen_range(params.min_size..=params.max_size);
    let mut y = rng.gen_range(1..height - 1);
    let mut road = vec![[0, y]];
    for x in 1..width {
        if rng.gen_bool(0.3) {
            let ny = if rng.gen_bool(0.5) { y + 1 } else { y - 1 };
            if (0..height).contains(&ny) {
                road.push([x - 1, ny]);
                y = ny;
            }
        }
        road.push([x, y]);
    }
    let first = road[0];
    let last = *road.last().expect("non-empty road");
    let middle = road[road.len() / 2];
    let mut depots = vec![
        DepotConfig { label: "A".into(), cell: first },
        DepotConfig { label: "B".into(), cell: last },
    ];
    if middle != first && middle != last {
        depots.push(DepotConfig { label: "C".into(), cell: middle });
    }
    let mut candidates: Vec<[i32; 2]> = road.iter().copied().filter(|&c| c != first).collect();
    candidates.dedup();
    candidates.shuffle(&mut rng);
    let count = rng
        .gen_range(params.min_tasks..=params.max_tasks)
        .min(candidates.len());
    let tasks = candidates[..count]
        .iter()
        .enumerate()
        .map(|(j, &c)| TaskConfig {
            label: format!("t{j}"),
            cells: vec![c],
        })
        .collect();
    let agents = std::iter::repeat_n(VehicleKind::Ugv, params.ugvs)
        .chain(std::iter::repeat_n(VehicleKind::Uav, params.uavs))
        .map(|k| AgentConfig::new(k, first))
        .collect();
    ScenarioConfig {
        schema: SCENARIO_SCHEMA.into(),
        map: MapConfig {
            width,
            height,
            cell_m: 100.0,
            road,
            depots,
        },
        agents,
        energy: EnergyParams::default(),
        tasks,
        updates: Vec::new(),
        planning: PlanningParams::default(),
    }
}

/// Default UGV and UAV capacities, as configured when no override is given.
pub fn default_capacities_j() -> (f64, f64) {
    (UGV_CAPACITY_J, UAV_CAPACITY_J)
}
