//! Static network: buses, branches, constant-admittance loads and the
//! dense bus admittance matrix.

mod machine;
mod powerflow;
pub mod two_area;

pub use machine::{
    machine_from_power_flow, norton_current, sg_derivatives, MachineParams, MachineSetpoints,
    MachineState, MachineUpdate,
};
pub use powerflow::{
    calibrate_loads, initialize_power_flow, Dispatch, GeneratorDispatch, PowerFlowSolution,
};

use nalgebra::{DMatrix, DVector, LU};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

use crate::phasor::{Complex64, Phasor};

/// Smallest pivot magnitude accepted by the dense network factorization.
const PIVOT_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("branch {0} has zero series impedance")]
    ZeroImpedanceBranch(u32),
    #[error("branch id {0} appears more than once")]
    DuplicateBranchIds(u32),
    #[error("branch {branch} references bus index {bus} outside 0..{count}")]
    UnknownBusIndex {
        branch: u32,
        bus: usize,
        count: usize,
    },
    #[error("network admittance matrix is singular (islanded bus without shunt path)")]
    SingularNetwork,
    #[error("injection vector has length {got}, expected {expected}")]
    InjectionLength { got: usize, expected: usize },
    #[error("no bus numbered {0}")]
    UnknownBus(u32),
    #[error("bus {0} carries no load")]
    NoLoadAtBus(u32),
    #[error("retained load fraction {0} outside [0, 1]")]
    InvalidFraction(f64),
    #[error("event time {0} s is negative")]
    NegativeEventTime(f64),
    #[error("terminal voltage {magnitude:.4} pu at machine {machine} below model validity limit")]
    LowVoltageRegion { machine: String, magnitude: f64 },
    #[error("power flow diverged after {iterations} iterations (mismatch {mismatch:.3e})")]
    PowerFlowDiverged { iterations: usize, mismatch: f64 },
    #[error("power flow setup invalid: {0}")]
    PowerFlowSetup(String),
}

/// A network bus. `number` is the label used by configurations and events;
/// the position in [`NetworkModel::buses`] is the dense matrix index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub number: u32,
    #[serde(default = "default_kv")]
    pub base_kv: f64,
    /// Fixed shunt admittance (capacitor banks), pu.
    #[serde(default)]
    pub shunt: Complex64,
    /// Constant-admittance load, pu. Scaled by load events. Read as the
    /// conjugate of the nominal power when loads are calibrated.
    #[serde(default)]
    pub load: Complex64,
}

fn default_kv() -> f64 {
    230.0
}

/// Series R + jX branch with total line-charging susceptance `b` split
/// equally between its ends. Endpoints are dense bus indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub id: u32,
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub b: f64,
}

impl Branch {
    pub fn series_admittance(&self) -> Phasor {
        Phasor::new(self.r, self.x).inv()
    }
}

/// Load reduction at one bus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadEvent {
    /// Bus number (label, not index).
    pub bus: u32,
    /// Event time, s.
    pub time: f64,
    /// Fraction of the pre-event load admittance that remains.
    pub retained: f64,
}

impl LoadEvent {
    pub fn validate(&self) -> Result<(), NetworkError> {
        if !(0.0..=1.0).contains(&self.retained) || !self.retained.is_finite() {
            return Err(NetworkError::InvalidFraction(self.retained));
        }
        if self.time < 0.0 || !self.time.is_finite() {
            return Err(NetworkError::NegativeEventTime(self.time));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    admittance: DMatrix<Phasor>,
}

impl NetworkModel {
    pub fn new(buses: Vec<Bus>, branches: Vec<Branch>) -> Result<Self, NetworkError> {
        let admittance = build_admittance(&buses, &branches)?;
        Ok(Self {
            buses,
            branches,
            admittance,
        })
    }

    pub fn admittance(&self) -> &DMatrix<Phasor> {
        &self.admittance
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn bus_index(&self, number: u32) -> Result<usize, NetworkError> {
        self.buses
            .iter()
            .position(|b| b.number == number)
            .ok_or(NetworkError::UnknownBus(number))
    }

    /// Sum of load admittances over all buses.
    pub fn total_load_admittance(&self) -> Phasor {
        self.buses.iter().map(|b| b.load).sum()
    }

    /// Scale the load at `e.bus` by the retained fraction and rebuild the
    /// admittance matrix. The receiver is left untouched.
    pub fn apply_load_event(&self, e: &LoadEvent) -> Result<Self, NetworkError> {
        e.validate()?;
        let idx = self.bus_index(e.bus)?;
        if self.buses[idx].load.norm() == 0.0 {
            return Err(NetworkError::NoLoadAtBus(e.bus));
        }
        let mut buses = self.buses.clone();
        buses[idx].load *= e.retained;
        Self::new(buses, self.branches.clone())
    }
}

/// Assemble the bus admittance matrix including line charging, fixed
/// shunts and load admittances.
pub fn build_admittance(
    buses: &[Bus],
    branches: &[Branch],
) -> Result<DMatrix<Phasor>, NetworkError> {
    let n = buses.len();
    let mut seen = HashSet::new();
    let mut y = DMatrix::from_element(n, n, Phasor::new(0.0, 0.0));
    for br in branches {
        if !seen.insert(br.id) {
            return Err(NetworkError::DuplicateBranchIds(br.id));
        }
        for bus in [br.from, br.to] {
            if bus >= n {
                return Err(NetworkError::UnknownBusIndex {
                    branch: br.id,
                    bus,
                    count: n,
                });
            }
        }
        if br.r == 0.0 && br.x == 0.0 {
            return Err(NetworkError::ZeroImpedanceBranch(br.id));
        }
        let ys = br.series_admittance();
        let ysh = Phasor::new(0.0, br.b / 2.0);
        y[(br.from, br.from)] += ys + ysh;
        y[(br.to, br.to)] += ys + ysh;
        y[(br.from, br.to)] -= ys;
        y[(br.to, br.from)] -= ys;
    }
    for (k, bus) in buses.iter().enumerate() {
        y[(k, k)] += bus.shunt + bus.load;
    }
    debug_assert!(is_symmetric(&y));
    Ok(y)
}

fn is_symmetric(y: &DMatrix<Phasor>) -> bool {
    let n = y.nrows();
    (0..n).all(|i| (0..i).all(|j| y[(i, j)] == y[(j, i)]))
}

/// Solve `Y·V = I` for bus voltages.
pub fn solve_network(
    y: &DMatrix<Phasor>,
    injections: &[Phasor],
) -> Result<Vec<Phasor>, NetworkError> {
    NetworkSolver::new(y.clone())?.solve(injections)
}

/// Dense LU factorization of a network admittance matrix, reused across
/// many right-hand sides.
#[derive(Debug, Clone)]
pub struct NetworkSolver {
    lu: LU<Phasor, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
}

impl NetworkSolver {
    pub fn new(y: DMatrix<Phasor>) -> Result<Self, NetworkError> {
        let n = y.nrows();
        let scale = y.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let lu = y.lu();
        let u = lu.u();
        let min_pivot = (0..n)
            .map(|k| u[(k, k)].norm())
            .fold(f64::INFINITY, f64::min);
        if n > 0 && !(min_pivot > PIVOT_FLOOR * scale.max(1.0)) {
            return Err(NetworkError::SingularNetwork);
        }
        Ok(Self { lu, n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, injections: &[Phasor]) -> Result<Vec<Phasor>, NetworkError> {
        if injections.len() != self.n {
            return Err(NetworkError::InjectionLength {
                got: injections.len(),
                expected: self.n,
            });
        }
        let b = DVector::from_column_slice(injections);
        let v = self.lu.solve(&b).ok_or(NetworkError::SingularNetwork)?;
        Ok(v.iter().copied().collect())
    }
}

/// Branch series and shunt losses for a voltage profile, summed.
pub fn branch_losses(network: &NetworkModel, v: &[Phasor]) -> Phasor {
    network
        .branches
        .iter()
        .map(|br| {
            let (vf, vt) = (v[br.from], v[br.to]);
            let i_series = (vf - vt) * br.series_admittance();
            let ysh = Phasor::new(0.0, br.b / 2.0);
            (vf - vt) * i_series.conj() + vf * (vf * ysh).conj() + vt * (vt * ysh).conj()
        })
        .sum()
}

/// Complex power drawn by loads and fixed shunts.
pub fn load_power(network: &NetworkModel, v: &[Phasor]) -> Phasor {
    network
        .buses
        .iter()
        .zip(v)
        .map(|(b, &vk)| vk * (vk * (b.load + b.shunt)).conj())
        .sum()
}
