//! Phasor-domain dynamic simulation and small-signal analysis of a
//! variable-speed hydropower plant providing virtual inertia in a
//! two-area grid.

// `!(x > 0.0)` is used on purpose so NaN fails validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod hydraulic;
pub mod network;
pub mod phasor;
pub mod smallsignal;
pub mod system;

pub use control::{ControllerConfig, ControllerParams, Scheme};
pub use hydraulic::{HydraulicParams, HydraulicState};
pub use network::{LoadEvent, NetworkModel};
pub use phasor::Phasor;
pub use system::{run_scenario, Scenario, SystemConfig, SystemError, TimeSeries};
