//! Virtual synchronous machine: reactive droop and voltage PI, a
//! quasi-stationary stator model, and an inertia model with washout
//! damping. The supplementary PD / PID frequency laws reuse
//! [`FrequencyController`].

use serde::{Deserialize, Serialize};

use super::{
    ControlError, FilteredDerivative, FrequencyController, FrequencyControllerState,
    FrequencyReference,
};
use crate::phasor::{to_local_frame, to_network_frame, Phasor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VsmParams {
    pub k_pv: f64,
    pub k_iv: f64,
    pub k_ffe: f64,
    /// Reactive power filter pole, rad/s.
    pub w_qf: f64,
    pub k_q: f64,
    /// Voltage filter pole, rad/s.
    pub w_vf: f64,
    pub l_s: f64,
    pub r_s: f64,
    pub k_omega: f64,
    pub t_a: f64,
    pub k_d: f64,
    /// Damping washout pole, rad/s.
    pub w_d: f64,
    /// Electrical base angular speed, rad/s.
    pub omega_b: f64,
    pub freq_ref: FrequencyReference,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VsmState {
    pub omega: f64,
    /// Virtual rotor angle relative to the nominally rotating frame; never
    /// wrapped.
    pub theta: f64,
    pub v_int: f64,
    pub q_filt: f64,
    /// Filtered grid voltage in the VSM frame.
    pub v0_d: f64,
    pub v0_q: f64,
    /// Washout state of the damping path.
    pub x_d: f64,
}

impl VsmState {
    pub const NAMES: [&'static str; 7] =
        ["omega", "theta", "v_int", "q_filt", "v0_d", "v0_q", "x_d"];

    pub fn to_array(self) -> [f64; 7] {
        [
            self.omega,
            self.theta,
            self.v_int,
            self.q_filt,
            self.v0_d,
            self.v0_q,
            self.x_d,
        ]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            omega: x[0],
            theta: x[1],
            v_int: x[2],
            q_filt: x[3],
            v0_d: x[4],
            v0_q: x[5],
            x_d: x[6],
        }
    }

    pub fn v0(&self) -> Phasor {
        Phasor::new(self.v0_d, self.v0_q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltageControlOutput {
    /// Internal EMF magnitude v̂_e.
    pub v_e_hat: f64,
    pub d_v_int: f64,
    pub d_q_filt: f64,
}

/// `e = (v* − |v_g|) + k_q·(q* − q_f)`; `v̂_e = k_pv·e + ∫k_iv·e + k_ffe·(v* − |v_g|)`.
pub fn vsm_voltage_control(
    v_g: Phasor,
    q_g: f64,
    v_ref: f64,
    q_ref: f64,
    s: &VsmState,
    p: &VsmParams,
) -> VoltageControlOutput {
    let dv = v_ref - v_g.norm();
    let err = dv + p.k_q * (q_ref - s.q_filt);
    VoltageControlOutput {
        v_e_hat: p.k_pv * err + s.v_int + p.k_ffe * dv,
        d_v_int: p.k_iv * err,
        d_q_filt: p.w_qf * (q_g - s.q_filt),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectricalOutput {
    /// Stator current in the VSM frame.
    pub i_local: Phasor,
    /// Stator current in the network frame.
    pub i_network: Phasor,
    /// Derivative of the filtered voltage in the VSM frame.
    pub d_v0: Phasor,
}

/// `i_s = (v̂_e∠0 − v₀) / (r_s + j·ω_vsm·l_s)` in the VSM frame, where `v₀`
/// follows the grid voltage through a first-order filter.
pub fn vsm_electrical_model(
    v_e_hat: f64,
    v_g: Phasor,
    s: &VsmState,
    p: &VsmParams,
) -> Result<ElectricalOutput, ControlError> {
    let z = Phasor::new(p.r_s, s.omega * p.l_s);
    if z.norm_sqr() <= 1e-12 {
        return Err(ControlError::DegenerateImpedance);
    }
    let i_local = (Phasor::new(v_e_hat, 0.0) - s.v0()) / z;
    let v_local = to_local_frame(v_g, s.theta);
    Ok(ElectricalOutput {
        i_local,
        i_network: to_network_frame(i_local, s.theta),
        d_v0: (v_local - s.v0()) * p.w_vf,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingDerivatives {
    pub d_omega: f64,
    pub d_theta: f64,
    pub d_x_d: f64,
    /// Virtual mechanical power p_r*.
    pub p_r_star: f64,
}

/// Inertia model. `omega_ref` is the frequency the `k_ω` term compares
/// against.
pub fn vsm_swing_step(
    p_ref_total: f64,
    p_g: f64,
    omega_ref: f64,
    s: &VsmState,
    p: &VsmParams,
) -> SwingDerivatives {
    let p_r_star = p_ref_total + p.k_omega * (omega_ref - s.omega);
    let damping = p.k_d * (s.omega - s.x_d);
    SwingDerivatives {
        d_omega: (p_r_star - p_g - damping) / p.t_a,
        d_theta: p.omega_b * (s.omega - 1.0),
        d_x_d: p.w_d * (s.omega - s.x_d),
        p_r_star,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupplementOutput {
    pub power: f64,
    pub d_state: FrequencyControllerState,
}

/// PD on `Δω_g = ω* − ω_g`.
pub fn vsm_pd_supplement(
    omega_g: f64,
    s: &FrequencyControllerState,
    c: &FrequencyController,
) -> SupplementOutput {
    supplement(c.omega_ref - omega_g, s, c)
}

/// PID on `ε = ω* − ω_g − R·p_f`.
pub fn vsm_pid_supplement(
    omega_g: f64,
    p_f: f64,
    s: &FrequencyControllerState,
    c: &FrequencyController,
) -> SupplementOutput {
    supplement(c.error(omega_g, p_f), s, c)
}

fn supplement(e: f64, s: &FrequencyControllerState, c: &FrequencyController) -> SupplementOutput {
    let (d_filt, integral) = c.derivatives(e, s);
    SupplementOutput {
        power: c.output(e, s),
        d_state: FrequencyControllerState { d_filt, integral },
    }
}

/// Ramp-tracking output of a filtered derivative: `k·rate` once settled.
pub fn derivative_ramp_output(b: &FilteredDerivative, rate: f64) -> f64 {
    b.gain * rate
}
