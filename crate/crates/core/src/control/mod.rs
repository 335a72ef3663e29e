//! Grid-side converter control: the PLL, the current-controlled schemes
//! (CPC, VSG, VSG-PID) and the virtual synchronous machine family.

mod current;
mod pll;
mod vsg;
mod vsm;

pub use current::{
    current_injection_derivative, current_injection_step, saturate, CurrentInjection,
    InjectionOutput,
};
pub use pll::{pll_derivatives, pll_step, PllOutput, PllParams, PllState};
pub use vsg::{
    cpc_step, current_reference, dq_power, quadrature_current, reactive_current_reference,
    vsg_pid_reference, vsg_reference, CpcParams, FrequencyController, FrequencyControllerState,
    ReactiveParams, VsgState,
};
pub use vsm::{
    derivative_ramp_output, vsm_electrical_model, vsm_pd_supplement, vsm_pid_supplement,
    vsm_swing_step, vsm_voltage_control, ElectricalOutput, SupplementOutput, SwingDerivatives,
    VoltageControlOutput, VsmParams, VsmState,
};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::phasor::{to_local_frame, to_network_frame, Phasor};

/// Converter terminal voltages at or below this magnitude stop the PLL and
/// the current-reference divisions.
pub const MIN_CONTROL_VOLTAGE: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("PLL input voltage {0:.4} pu too low; estimate frozen")]
    LowVoltagePll(f64),
    #[error("converter voltage {0:.4} pu too low for current-reference division")]
    LowVoltageDivision(f64),
    #[error("VSM impedance r_s + j·ω·l_s is degenerate")]
    DegenerateImpedance,
    #[error("invalid controller parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown control scheme `{0}`")]
    UnknownScheme(String),
}

/// Grid-converter outer control scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "CPC")]
    Cpc,
    #[serde(rename = "VSG")]
    Vsg,
    #[serde(rename = "VSG-PID")]
    VsgPid,
    #[serde(rename = "VSM")]
    Vsm,
    #[serde(rename = "VSM-PD")]
    VsmPd,
    #[serde(rename = "VSM-PID")]
    VsmPid,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Cpc,
        Scheme::Vsg,
        Scheme::VsgPid,
        Scheme::Vsm,
        Scheme::VsmPd,
        Scheme::VsmPid,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Scheme::Cpc => "CPC",
            Scheme::Vsg => "VSG",
            Scheme::VsgPid => "VSG-PID",
            Scheme::Vsm => "VSM",
            Scheme::VsmPd => "VSM-PD",
            Scheme::VsmPid => "VSM-PID",
        }
    }

    /// Voltage-source (virtual machine) schemes.
    pub fn is_vsm(self) -> bool {
        matches!(self, Scheme::Vsm | Scheme::VsmPd | Scheme::VsmPid)
    }

    /// Schemes with a steady-state frequency droop.
    pub fn provides_droop(self) -> bool {
        matches!(
            self,
            Scheme::Vsg | Scheme::VsgPid | Scheme::VsmPd | Scheme::VsmPid
        )
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scheme {
    type Err = ControlError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|sch| sch.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| ControlError::UnknownScheme(s.to_string()))
    }
}

/// Frequency the VSM frequency controller `k_ω·(ω* − ω_vsm)` compares
/// against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyReference {
    /// PLL-measured grid frequency; the term then has no steady-state
    /// effect and the plain VSM carries no droop.
    Pll,
    /// Fixed nominal frequency; the term acts as a permanent droop 1/k_ω.
    Nominal,
}

/// Every controller parameter, keyed by the symbol names of the published
/// parameter table. Entries after `pll_filter_t` are not in that table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerParams {
    // CPC
    pub k_pp: f64,
    pub k_pi: f64,
    // VSG
    pub k_vsg_p: f64,
    pub k_vsg_d: f64,
    /// Derivative filter time constant, s.
    pub w_vsg: f64,
    // VSG-PID
    pub k_vsg_pid_p: f64,
    pub k_vsg_pid_i: f64,
    pub k_vsg_pid_d: f64,
    pub w_vsg_pid: f64,
    // VSM
    pub k_pv: f64,
    pub k_iv: f64,
    pub k_ffe: f64,
    pub w_qf: f64,
    pub k_q: f64,
    pub w_vf: f64,
    pub l_s: f64,
    pub r_s: f64,
    pub k_omega: f64,
    pub t_a: f64,
    pub k_d: f64,
    pub w_d: f64,
    /// Tabulated as "50 rad/s"; used as the rated frequency, so the angle
    /// integrator gain is 2π·w_b.
    pub w_b: f64,
    /// Active damping entries; stored, not part of any modelled loop.
    pub k_ad: f64,
    pub w_ad: f64,
    // VSM-PD
    pub k_vsm_pd_p: f64,
    pub k_vsm_pd_d: f64,
    pub w_vsm_pd: f64,
    pub k_omega_vsm_pd: f64,
    // VSM-PID
    pub k_vsm_pid_p: f64,
    pub k_vsm_pid_i: f64,
    pub k_vsm_pid_d: f64,
    pub w_vsm_pid: f64,
    pub k_omega_vsm_pid: f64,
    // Common
    pub r_d: f64,
    pub pll_filter_t: f64,

    pub pll_kp: f64,
    pub pll_ki: f64,
    /// Time constant of the power low-pass feeding the permanent droop, s.
    pub p_f_filter_t: f64,
    pub q_kp: f64,
    pub q_ki: f64,
    pub current_lag_t: f64,
    pub current_limit: f64,
    /// Grid frequency reference ω_g*, pu.
    pub omega_ref: f64,
    pub vsm_freq_ref: FrequencyReference,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            k_pp: 0.045,
            k_pi: 0.023,
            k_vsg_p: 100.0,
            k_vsg_d: 33.6,
            w_vsg: 0.01,
            k_vsg_pid_p: 100.0,
            k_vsg_pid_i: 286.0,
            k_vsg_pid_d: 33.6,
            w_vsg_pid: 0.01,
            k_pv: 0.29,
            k_iv: 92.0,
            k_ffe: 0.0,
            w_qf: 200.0,
            k_q: 0.1,
            w_vf: 200.0,
            l_s: 0.25,
            r_s: 0.01,
            k_omega: 20.0,
            t_a: 4.0,
            k_d: 40.0,
            w_d: 5.0,
            w_b: 50.0,
            k_ad: 0.3,
            w_ad: 50.0,
            k_vsm_pd_p: 100.0,
            k_vsm_pd_d: 500.0,
            w_vsm_pd: 1.0,
            k_omega_vsm_pd: 200.0,
            k_vsm_pid_p: 3000.0,
            k_vsm_pid_i: 476.0,
            k_vsm_pid_d: 12600.0,
            w_vsm_pid: 1.0,
            k_omega_vsm_pid: 2000.0,
            r_d: 0.01,
            pll_filter_t: 0.001,
            pll_kp: 0.22,
            pll_ki: 8.0,
            p_f_filter_t: 0.01,
            q_kp: 0.2,
            q_ki: 10.0,
            current_lag_t: 0.005,
            current_limit: 1.2,
            omega_ref: 1.0,
            vsm_freq_ref: FrequencyReference::Pll,
        }
    }
}

impl ControllerParams {
    /// Electrical base angular speed, rad/s.
    pub fn omega_base(&self) -> f64 {
        2.0 * PI * self.w_b
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let gains = [
            ("k_pp", self.k_pp),
            ("k_pi", self.k_pi),
            ("k_vsg_p", self.k_vsg_p),
            ("k_vsg_d", self.k_vsg_d),
            ("k_vsg_pid_p", self.k_vsg_pid_p),
            ("k_vsg_pid_i", self.k_vsg_pid_i),
            ("k_vsg_pid_d", self.k_vsg_pid_d),
            ("k_pv", self.k_pv),
            ("k_iv", self.k_iv),
            ("k_ffe", self.k_ffe),
            ("k_q", self.k_q),
            ("k_omega", self.k_omega),
            ("k_d", self.k_d),
            ("k_ad", self.k_ad),
            ("k_vsm_pd_p", self.k_vsm_pd_p),
            ("k_vsm_pd_d", self.k_vsm_pd_d),
            ("k_omega_vsm_pd", self.k_omega_vsm_pd),
            ("k_vsm_pid_p", self.k_vsm_pid_p),
            ("k_vsm_pid_i", self.k_vsm_pid_i),
            ("k_vsm_pid_d", self.k_vsm_pid_d),
            ("k_omega_vsm_pid", self.k_omega_vsm_pid),
            ("r_d", self.r_d),
            ("pll_kp", self.pll_kp),
            ("pll_ki", self.pll_ki),
            ("q_kp", self.q_kp),
            ("q_ki", self.q_ki),
            ("r_s", self.r_s),
            ("l_s", self.l_s),
        ];
        for (key, v) in gains {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ControlError::InvalidParameter(format!(
                    "{key} must be a non-negative number (got {v})"
                )));
            }
        }
        let positive = [
            ("w_vsg", self.w_vsg),
            ("w_vsg_pid", self.w_vsg_pid),
            ("w_qf", self.w_qf),
            ("w_vf", self.w_vf),
            ("t_a", self.t_a),
            ("w_d", self.w_d),
            ("w_b", self.w_b),
            ("w_ad", self.w_ad),
            ("w_vsm_pd", self.w_vsm_pd),
            ("w_vsm_pid", self.w_vsm_pid),
            ("pll_filter_t", self.pll_filter_t),
            ("p_f_filter_t", self.p_f_filter_t),
            ("current_lag_t", self.current_lag_t),
            ("current_limit", self.current_limit),
            ("omega_ref", self.omega_ref),
        ];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ControlError::InvalidParameter(format!(
                    "{key} must be > 0 (got {v})"
                )));
            }
        }
        if self.r_s * self.r_s + self.l_s * self.l_s <= 0.0 {
            return Err(ControlError::InvalidParameter(
                "r_s and l_s cannot both be zero".into(),
            ));
        }
        Ok(())
    }

    pub fn cpc(&self) -> CpcParams {
        CpcParams {
            k_p: self.k_pp,
            k_i: self.k_pi,
        }
    }

    pub fn reactive(&self) -> ReactiveParams {
        ReactiveParams {
            k_p: self.q_kp,
            k_i: self.q_ki,
        }
    }

    fn frequency_controller(
        &self,
        k_p: f64,
        k_i: f64,
        k_d: f64,
        t_d: f64,
        r_d: f64,
    ) -> FrequencyController {
        FrequencyController {
            k_p,
            k_i,
            derivative: FilteredDerivative {
                gain: k_d,
                time_constant: t_d,
            },
            r_d,
            omega_ref: self.omega_ref,
        }
    }

    pub fn vsg(&self) -> FrequencyController {
        self.frequency_controller(self.k_vsg_p, 0.0, self.k_vsg_d, self.w_vsg, 0.0)
    }

    pub fn vsg_pid(&self) -> FrequencyController {
        self.frequency_controller(
            self.k_vsg_pid_p,
            self.k_vsg_pid_i,
            self.k_vsg_pid_d,
            self.w_vsg_pid,
            self.r_d,
        )
    }

    pub fn vsm_pd(&self) -> FrequencyController {
        self.frequency_controller(self.k_vsm_pd_p, 0.0, self.k_vsm_pd_d, self.w_vsm_pd, 0.0)
    }

    pub fn vsm_pid(&self) -> FrequencyController {
        self.frequency_controller(
            self.k_vsm_pid_p,
            self.k_vsm_pid_i,
            self.k_vsm_pid_d,
            self.w_vsm_pid,
            self.r_d,
        )
    }

    /// VSM parameters; the PD and PID variants carry their own frequency
    /// controller gain.
    pub fn vsm(&self, scheme: Scheme) -> VsmParams {
        let k_omega = match scheme {
            Scheme::VsmPd => self.k_omega_vsm_pd,
            Scheme::VsmPid => self.k_omega_vsm_pid,
            _ => self.k_omega,
        };
        VsmParams {
            k_pv: self.k_pv,
            k_iv: self.k_iv,
            k_ffe: self.k_ffe,
            w_qf: self.w_qf,
            k_q: self.k_q,
            w_vf: self.w_vf,
            l_s: self.l_s,
            r_s: self.r_s,
            k_omega,
            t_a: self.t_a,
            k_d: self.k_d,
            w_d: self.w_d,
            omega_b: self.omega_base(),
            freq_ref: self.vsm_freq_ref,
        }
    }

    pub fn pll(&self) -> PllParams {
        PllParams {
            kp: self.pll_kp,
            ki: self.pll_ki,
            filter_t: self.pll_filter_t,
            omega_b: self.omega_base(),
        }
    }
}

/// Scheme tag plus its parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub scheme: Scheme,
    pub params: ControllerParams,
}

impl ControllerConfig {
    pub fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            params: ControllerParams::default(),
        }
    }
}

/// Current or voltage pair in a converter dq frame whose q-axis lags the
/// d-axis. With this orientation `q = v_d·i_q − v_q·i_d` is the reactive
/// power delivered to the grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Dq {
    pub d: f64,
    pub q: f64,
}

impl Dq {
    pub fn new(d: f64, q: f64) -> Self {
        Self { d, q }
    }

    /// Project a network-frame phasor onto the frame at angle `theta`.
    pub fn from_network(v: Phasor, theta: f64) -> Self {
        Self::from_local(to_local_frame(v, theta))
    }

    pub fn to_network(self, theta: f64) -> Phasor {
        to_network_frame(self.to_local(), theta)
    }

    /// From a complex phasor already expressed in the frame.
    pub fn from_local(c: Phasor) -> Self {
        Self { d: c.re, q: -c.im }
    }

    pub fn to_local(self) -> Phasor {
        Phasor::new(self.d, -self.q)
    }

    pub fn norm(self) -> f64 {
        self.d.hypot(self.q)
    }
}

/// `k·s/(T·s + 1)`: a derivative with a first-order roll-off at `1/T`.
/// The state is the low-passed input, so the block reads `(k/T)·(u − x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilteredDerivative {
    pub gain: f64,
    pub time_constant: f64,
}

impl FilteredDerivative {
    pub fn output(&self, x: f64, u: f64) -> f64 {
        self.gain / self.time_constant * (u - x)
    }

    pub fn derivative(&self, x: f64, u: f64) -> f64 {
        (u - x) / self.time_constant
    }

    /// Tustin update with the input held over the step.
    pub fn step(&self, x: f64, u: f64, dt: f64) -> f64 {
        low_pass_step(x, u, self.time_constant, dt)
    }
}

/// Trapezoidal update of `T·dx/dt = u − x` with `u` held.
pub fn low_pass_step(x: f64, u: f64, t: f64, dt: f64) -> f64 {
    let a = dt / (2.0 * t);
    (x * (1.0 - a) + 2.0 * a * u) / (1.0 + a)
}

/// One implicit trapezoidal step of a small autonomous system, solved by
/// Newton with a forward-difference Jacobian.
pub(crate) fn trapezoid_step<const N: usize>(
    f: impl Fn(&[f64; N]) -> [f64; N],
    x0: [f64; N],
    dt: f64,
) -> [f64; N] {
    use nalgebra::{DMatrix, DVector};
    let vec = |a: [f64; N]| DVector::from_row_slice(&a);
    let arr = |v: &DVector<f64>| -> [f64; N] { std::array::from_fn(|k| v[k]) };
    let f0 = vec(f(&x0));
    let x0v = vec(x0);
    let residual =
        |x: &DVector<f64>| -> DVector<f64> { x - &x0v - (&f0 + vec(f(&arr(x)))) * (0.5 * dt) };
    let mut x = &x0v + &f0 * dt;
    for _ in 0..50 {
        let r = residual(&x);
        if r.amax() < 1e-14 {
            break;
        }
        let mut jac = DMatrix::zeros(N, N);
        for k in 0..N {
            let h = 1e-7 * x[k].abs().max(1.0);
            let mut xp = x.clone();
            xp[k] += h;
            jac.set_column(k, &((residual(&xp) - &r) / h));
        }
        match jac.lu().solve(&r) {
            Some(dx) => x -= dx,
            None => break,
        }
    }
    arr(&x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_tags_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.tag().parse::<Scheme>().unwrap(), s);
        }
        assert!("VSX".parse::<Scheme>().is_err());
    }

    #[test]
    fn dq_power_convention_matches_network_power() {
        let v = Phasor::from_polar(1.02, 0.4);
        let i = Phasor::from_polar(0.7, 0.1);
        let theta = 0.37;
        let (p, q) = dq_power(Dq::from_network(v, theta), Dq::from_network(i, theta));
        let s = v * i.conj();
        assert!((p - s.re).abs() < 1e-14);
        assert!((q - s.im).abs() < 1e-14);
    }

    #[test]
    fn filtered_derivative_dc_and_high_frequency_gain() {
        let b = FilteredDerivative {
            gain: 33.6,
            time_constant: 0.01,
        };
        // G(jw) = k·jw / (1 + jwT)
        let gain_at = |w: f64| {
            let s = Phasor::new(0.0, w);
            (b.gain * s / (1.0 + s * b.time_constant)).norm()
        };
        assert_eq!(gain_at(0.0), 0.0);
        let hf = gain_at(1000.0 / b.time_constant);
        assert!((hf - b.gain / b.time_constant).abs() / (b.gain / b.time_constant) < 1e-5);

        // The state-space realization has the same response.
        let w = 37.0;
        let s = Phasor::new(0.0, w);
        let x_over_u = 1.0 / (1.0 + s * b.time_constant);
        let y_over_u = b.gain / b.time_constant * (1.0 - x_over_u);
        assert!((y_over_u - b.gain * s / (1.0 + s * b.time_constant)).norm() < 1e-12);
    }

    #[test]
    fn filtered_derivative_is_bounded_for_step_input() {
        let b = FilteredDerivative {
            gain: 500.0,
            time_constant: 1.0,
        };
        let mut x = 0.0;
        let mut peak: f64 = 0.0;
        for _ in 0..10_000 {
            peak = peak.max(b.output(x, 1.0).abs());
            x = b.step(x, 1.0, 1e-3);
        }
        assert!(peak <= b.gain / b.time_constant + 1e-12);
        assert!((x - 1.0).abs() < 1e-3);
    }

    #[test]
    fn defaults_validate() {
        ControllerParams::default().validate().unwrap();
        let bad = ControllerParams {
            t_a: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
