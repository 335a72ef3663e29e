//! Current-reference schemes: constant power, VSG and VSG-PID, plus the
//! reactive power loop and the power-to-current inversion they share.

use serde::{Deserialize, Serialize};

use super::{low_pass_step, ControlError, Dq, FilteredDerivative, MIN_CONTROL_VOLTAGE};

/// Active and reactive power for a dq voltage and current pair.
pub fn dq_power(v: Dq, i: Dq) -> (f64, f64) {
    (v.d * i.d + v.q * i.q, v.d * i.q - v.q * i.d)
}

/// d-axis current delivering `p` while `q` flows:
/// `i_d = (v_d·p − v_q·q) / |v|²`.
pub fn current_reference(p: f64, q: f64, v: Dq) -> Result<f64, ControlError> {
    let v2 = v.d * v.d + v.q * v.q;
    if v2.sqrt() <= MIN_CONTROL_VOLTAGE {
        return Err(ControlError::LowVoltageDivision(v2.sqrt()));
    }
    Ok((v.d * p - v.q * q) / v2)
}

/// q-axis current that goes with [`current_reference`] to deliver `(p, q)`.
pub fn quadrature_current(p: f64, q: f64, v: Dq) -> Result<f64, ControlError> {
    let v2 = v.d * v.d + v.q * v.q;
    if v2.sqrt() <= MIN_CONTROL_VOLTAGE {
        return Err(ControlError::LowVoltageDivision(v2.sqrt()));
    }
    Ok((v.q * p + v.d * q) / v2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpcParams {
    pub k_p: f64,
    pub k_i: f64,
}

/// Constant power control: PI from power error to d-axis current.
/// Returns the reference and the advanced integrator.
pub fn cpc_step(p_g: f64, p_ref: f64, integrator: f64, c: &CpcParams, dt: f64) -> (f64, f64) {
    let err = p_ref - p_g;
    (c.k_p * err + integrator, integrator + c.k_i * err * dt)
}

/// `k_p·e + k·s/(T·s + 1)·e + (k_i/s)·e` with `e = ω* − ω_g − R·p_f`.
/// With `k_i = R = 0` this is the PD law of the VSG and VSM-PD schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyController {
    pub k_p: f64,
    pub k_i: f64,
    pub derivative: FilteredDerivative,
    pub r_d: f64,
    pub omega_ref: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FrequencyControllerState {
    /// Low-passed error inside the filtered derivative.
    pub d_filt: f64,
    pub integral: f64,
}

impl FrequencyController {
    pub fn error(&self, omega_g: f64, p_f: f64) -> f64 {
        self.omega_ref - omega_g - self.r_d * p_f
    }

    pub fn output(&self, e: f64, s: &FrequencyControllerState) -> f64 {
        self.k_p * e + self.derivative.output(s.d_filt, e) + s.integral
    }

    /// Derivatives of `(d_filt, integral)`.
    pub fn derivatives(&self, e: f64, s: &FrequencyControllerState) -> (f64, f64) {
        (self.derivative.derivative(s.d_filt, e), self.k_i * e)
    }

    /// Output at the current state, then the state advanced with `e` held.
    pub fn step(
        &self,
        e: f64,
        s: &FrequencyControllerState,
        dt: f64,
    ) -> (f64, FrequencyControllerState) {
        let out = self.output(e, s);
        let next = FrequencyControllerState {
            d_filt: self.derivative.step(s.d_filt, e, dt),
            integral: s.integral + self.k_i * e * dt,
        };
        (out, next)
    }
}

/// Dynamic states of the current-reference schemes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VsgState {
    pub freq: FrequencyControllerState,
    /// Low-passed output power deviation from the set-point.
    pub p_f: f64,
    pub cpc_int: f64,
    pub q_int: f64,
}

/// VSG: PD on `Δω_g = ω* − ω_g` added to the power set-point, then the
/// power-to-current inversion.
pub fn vsg_reference(
    d_omega_g: f64,
    p_ref: f64,
    q_g: f64,
    v_c: Dq,
    s: &VsgState,
    c: &FrequencyController,
    dt: f64,
) -> Result<(f64, VsgState), ControlError> {
    let (dp, freq) = c.step(d_omega_g, &s.freq, dt);
    let i_d = current_reference(p_ref + dp, q_g, v_c)?;
    Ok((i_d, VsgState { freq, ..*s }))
}

/// VSG-PID: PID on `ε = ω* − ω_g − R·p_f`. `p_f_filter_t` is the time
/// constant of the power low-pass.
#[allow(clippy::too_many_arguments)]
pub fn vsg_pid_reference(
    omega_g: f64,
    p_g: f64,
    p_ref: f64,
    q_g: f64,
    v_c: Dq,
    s: &VsgState,
    c: &FrequencyController,
    p_f_filter_t: f64,
    dt: f64,
) -> Result<(f64, VsgState), ControlError> {
    let e = c.error(omega_g, s.p_f);
    let (dp, freq) = c.step(e, &s.freq, dt);
    let i_d = current_reference(p_ref + dp, q_g, v_c)?;
    let p_f = low_pass_step(s.p_f, p_g - p_ref, p_f_filter_t, dt);
    Ok((i_d, VsgState { freq, p_f, ..*s }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactiveParams {
    pub k_p: f64,
    pub k_i: f64,
}

/// Reactive power loop: `i_q* = (q* + k_p·e + ∫k_i·e) / |v_c|` with
/// `e = q* − q_g`. Returns the reference and the advanced integrator.
pub fn reactive_current_reference(
    q_g: f64,
    q_ref: f64,
    v_c: Dq,
    integrator: f64,
    c: &ReactiveParams,
    dt: f64,
) -> Result<(f64, f64), ControlError> {
    let vmag = v_c.norm();
    if vmag <= MIN_CONTROL_VOLTAGE {
        return Err(ControlError::LowVoltageDivision(vmag));
    }
    let err = q_ref - q_g;
    Ok((
        (q_ref + c.k_p * err + integrator) / vmag,
        integrator + c.k_i * err * dt,
    ))
}
