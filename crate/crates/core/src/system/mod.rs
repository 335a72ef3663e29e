//! Composite grid + plant + converter model, equilibrium search, implicit
//! integration and scenario runs.

mod integrate;
mod model;
mod registry;
mod scenario;

pub(crate) use integrate::finite_difference_jacobian;
pub use integrate::{find_equilibrium, integrate_step, Equilibrium, TrapezoidalIntegrator};
pub use model::{assemble_system, Algebraics, SystemModel, VshpReferences};
pub use registry::StateRegistry;
pub use scenario::{run_scenario, scenario_hash, Scenario, TimeSeries, TimeSeriesMeta};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ControlError, ControllerConfig, Scheme};
use crate::hydraulic::{HydraulicError, HydraulicParams};
use crate::network::{two_area, Branch, Bus, GeneratorDispatch, MachineParams, NetworkError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("invalid configuration: {}", .0.join("; "))]
    ConfigInvalid(Vec<String>),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Hydraulic(#[from] HydraulicError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("equilibrium search diverged after {iterations} residual evaluations; worst residual {residual:.3e} in `{state}`")]
    EquilibriumDiverged {
        state: String,
        residual: f64,
        iterations: usize,
    },
    #[error("implicit step diverged at t = {time:.6} s ({detail}); try a smaller dt")]
    StepDiverged { time: f64, detail: String },
}

/// Converter connection and operating point. Powers are on the converter
/// rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VshpConfig {
    pub bus: u32,
    pub rating_mva: f64,
    /// Active power set-point p_g*.
    pub p_ref: f64,
    /// Reactive power set-point q_g*.
    pub q_ref: f64,
    /// Generator bus whose dispatch is lowered by the converter's output.
    /// 0 leaves all of it to the slack unit.
    pub displaces: u32,
}

impl Default for VshpConfig {
    fn default() -> Self {
        Self {
            bus: two_area::VSHP_BUS,
            rating_mva: 100.0,
            p_ref: 0.8,
            q_ref: 0.0,
            displaces: 1,
        }
    }
}

/// Everything needed to assemble the composite model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub base_mva: f64,
    /// Nominal grid frequency, Hz.
    pub f_nominal: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub machines: Vec<MachineParams>,
    pub generators: Vec<GeneratorDispatch>,
    pub vshp: VshpConfig,
    /// Rescale load admittances so loads draw their nominal power at the
    /// initial operating point.
    pub calibrate_loads: bool,
    pub hydraulic: HydraulicParams,
    pub controller: ControllerConfig,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::two_area(Scheme::Cpc)
    }
}

impl SystemConfig {
    /// The two-area benchmark with the converter at bus 5.
    pub fn two_area(scheme: Scheme) -> Self {
        let vshp = VshpConfig::default();
        Self {
            base_mva: two_area::BASE_MVA,
            f_nominal: 50.0,
            buses: two_area::buses(),
            branches: two_area::branches(),
            machines: two_area::machines(),
            generators: two_area::dispatch(0.0).generators,
            vshp,
            calibrate_loads: true,
            hydraulic: HydraulicParams::default(),
            controller: ControllerConfig::new(scheme),
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.controller.scheme = scheme;
        self
    }

    pub fn omega_base(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.f_nominal
    }
}

/// A continuous-time model `dx/dt = f(x)` with optional hard limits.
pub trait DynamicSystem {
    fn dim(&self) -> usize;

    fn derivatives(&self, x: &[f64], dx: &mut [f64]) -> Result<(), SystemError>;

    /// Pull `x` back inside hard position limits after a step.
    fn project(&self, _x: &mut [f64]) {}

    /// Names of limits currently binding at `x`.
    fn active_limits(&self, _x: &[f64]) -> Vec<String> {
        Vec::new()
    }

    fn state_name(&self, k: usize) -> String {
        format!("x{k}")
    }
}

/// Adapter turning a closure into a [`DynamicSystem`].
pub struct FnSystem<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64])> DynamicSystem for FnSystem<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn derivatives(&self, x: &[f64], dx: &mut [f64]) -> Result<(), SystemError> {
        (self.f)(x, dx);
        Ok(())
    }
}
