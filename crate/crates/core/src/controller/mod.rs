//! Voltage regulation by (re-)dispatching VPP actors around the centers of
//! mass of injected and absorbed currents.

pub mod actors;
pub mod lists;
pub mod regulate;
pub mod step;

pub use actors::{
    attach_fleet, bus_powers, il_shed_kw, load_fleet, parse_fleet, total_rated_kw, vpp_power_kw, ActorKind,
    ActorLimits, FleetFile, VppActor,
};
pub use lists::{populate_priority_lists, Direction, DispatchMode, ListContext, ListEntry, PriorityList, VoltageMode};
pub use regulate::{
    centers_for, regulate, RegulationConfig, RegulationOutcome, RegulationState, TraceEvent, TraceRecord,
};
pub use step::{
    adapt_step, apply_step, evaluate_step, restrict_lesser_part, Action, DispatchPlan, Restriction, VoltageSummary,
};
