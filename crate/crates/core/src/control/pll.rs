//! Synchronous-reference-frame PLL with a filtered frequency output.

use serde::{Deserialize, Serialize};

use super::{trapezoid_step, ControlError, MIN_CONTROL_VOLTAGE};
use crate::phasor::{to_local_frame, Phasor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PllParams {
    pub kp: f64,
    pub ki: f64,
    /// Output frequency filter time constant, s.
    pub filter_t: f64,
    /// Electrical base angular speed, rad/s.
    pub omega_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PllState {
    /// Tracked angle relative to the nominally rotating network frame.
    pub theta: f64,
    /// PI integrator, pu frequency.
    pub integrator: f64,
    /// Filtered frequency estimate ω_g.
    pub omega: f64,
}

impl PllState {
    pub const NAMES: [&'static str; 3] = ["theta", "integrator", "omega"];

    /// Locked onto a voltage at angle `theta` at nominal frequency.
    pub fn locked(theta: f64) -> Self {
        Self {
            theta,
            integrator: 0.0,
            omega: 1.0,
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.theta, self.integrator, self.omega]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            theta: x[0],
            integrator: x[1],
            omega: x[2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PllOutput {
    pub derivatives: PllState,
    /// Unfiltered PI frequency.
    pub omega_raw: f64,
    /// False when the input was too weak to track and the state is frozen.
    pub tracking: bool,
}

/// Phase error is the normalized q-projection of `v` in the PLL frame.
pub fn pll_derivatives(v: Phasor, s: &PllState, p: &PllParams) -> PllOutput {
    let vmag = v.norm();
    if vmag <= MIN_CONTROL_VOLTAGE {
        return PllOutput {
            derivatives: PllState {
                theta: p.omega_b * (s.omega - 1.0),
                integrator: 0.0,
                omega: 0.0,
            },
            omega_raw: s.omega,
            tracking: false,
        };
    }
    let err = to_local_frame(v, s.theta).im / vmag;
    let omega_raw = 1.0 + p.kp * err + s.integrator;
    PllOutput {
        derivatives: PllState {
            theta: p.omega_b * (omega_raw - 1.0),
            integrator: p.ki * err,
            omega: (omega_raw - s.omega) / p.filter_t,
        },
        omega_raw,
        tracking: true,
    }
}

/// Advance the PLL by `dt` with `v` held, returning the new state and ω_g.
pub fn pll_step(
    v: Phasor,
    s: &PllState,
    p: &PllParams,
    dt: f64,
) -> Result<(PllState, f64), ControlError> {
    if v.norm() <= MIN_CONTROL_VOLTAGE {
        return Err(ControlError::LowVoltagePll(v.norm()));
    }
    let x = trapezoid_step(
        |x: &[f64; 3]| {
            pll_derivatives(v, &PllState::from_slice(x), p)
                .derivatives
                .to_array()
        },
        s.to_array(),
        dt,
    );
    let next = PllState::from_slice(&x);
    Ok((next, next.omega))
}
