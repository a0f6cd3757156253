//! Center-of-mass voltage regulation of radial distribution feeders by a
//! virtual power plant (VPP).
//!
//! The crate covers the network model and power flow, main-body extraction,
//! centers of mass of bus currents, the (re-)dispatch controller and a
//! Monte-Carlo campaign runner with its reports.

pub mod campaign;
pub mod com;
pub mod controller;
pub mod error;
pub mod fixtures;
pub mod network;
pub mod powerflow;
pub mod report;
pub mod topology;

pub use campaign::{find_critical_loading, CriticalLoading};
pub use com::{compute_all_centers, compute_center, CenterOfMass, CenterOptions, Centers, MassKind};
pub use controller::{regulate, DispatchMode, RegulationConfig, RegulationOutcome, VoltageMode, VppActor};
pub use error::{Error, Result};
pub use network::{load_network, BusId, NetworkModel};
pub use powerflow::{solve, SolverOptions, VoltageSolution};
pub use topology::{extract_main_body, MainBody};
