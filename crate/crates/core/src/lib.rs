//! Multi-agent planning under opportunistic synchronization.
//!
//! Agents follow plans they can only exchange with a central planner while in
//! a synchronization state. The crate provides explicit transition systems,
//! plan-belief bookkeeping, constrained replanning, disturbance recovery via
//! backward reachability, an episode executor with trace recording, checks of
//! the task-satisfaction conditions, and a ground/aerial vehicle scenario.

pub mod conditions;
pub mod energy;
pub mod executor;
pub mod planner;
pub mod recovery;
pub mod scalar;
pub mod scenario;
pub mod solver;
pub mod stats;
pub mod sweep;
pub mod sync_model;
pub mod tasking;
pub mod trace;
pub mod transition_system;

pub use executor::{run_episode, DisturbanceModel, EpisodeResult, ExecutorConfig, Scenario};
pub use planner::PlanningMode;
pub use scenario::{build_scenario, ScenarioConfig, VehicleState, VehicleSystem};
pub use transition_system::{Joint, MultiAgentSystem, Trajectory, TransitionSystem};

pub type EnergyModelF64 = energy::EnergyModel<f64>;
pub type EnergyModelF32 = energy::EnergyModel<f32>;
pub type RechargeCurveF64 = energy::RechargeCurve<f64>;
pub type RechargeCurveF32 = energy::RechargeCurve<f32>;
