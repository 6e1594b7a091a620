//! Second-order equivalent circuit: constants, OCV, linearisation,
//! discretisation and ground-truth simulation.

mod cell;
mod ocv;
mod param_map;
mod simulate;

pub use cell::{
    build_linear_system, step_euler, step_exact, terminal_voltage, CellParams, Discretization,
    LinearSystem, StateVector,
};
pub use ocv::{Breakpoint, OcvCurve, Segment};
pub use param_map::{ParamMap, ParamSource};
pub use simulate::{simulate, simulate_with, Trajectory, TruthPoint};
