//! Two-axis synchronous machine with a first-order AVR and a first-order
//! droop governor. Quantities are on the machine's own MVA base.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use super::NetworkError;
use crate::phasor::{to_local_frame, to_network_frame, Phasor};

/// Terminal voltages at or below this magnitude leave the model's domain.
pub const MIN_TERMINAL_VOLTAGE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineParams {
    pub name: String,
    /// Bus number the machine is connected to.
    pub bus: u32,
    pub rating_mva: f64,
    /// Inertia constant, s.
    pub h: f64,
    /// Mechanical damping, pu power per pu speed.
    pub d: f64,
    pub xd: f64,
    pub xq: f64,
    pub xd_p: f64,
    pub xq_p: f64,
    pub ra: f64,
    pub td0_p: f64,
    pub tq0_p: f64,
    /// AVR gain and time constant.
    pub ka: f64,
    pub ta: f64,
    /// Governor permanent droop (pu speed per pu power) and time constant.
    pub droop: f64,
    pub tg: f64,
}

impl MachineParams {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("h", self.h),
            ("td0_p", self.td0_p),
            ("tq0_p", self.tq0_p),
            ("ta", self.ta),
            ("tg", self.tg),
            ("droop", self.droop),
            ("rating_mva", self.rating_mva),
            ("xd_p", self.xd_p),
        ];
        for (key, v) in positive {
            if !(v > 0.0) {
                return Err(format!(
                    "machine {}: {key} must be > 0 (got {v})",
                    self.name
                ));
            }
        }
        if self.d < 0.0 || self.ra < 0.0 || self.ka < 0.0 {
            return Err(format!(
                "machine {}: d, ra and ka must be non-negative",
                self.name
            ));
        }
        // The Norton equivalent folded into the bus matrix assumes a round
        // rotor in the transient period.
        if (self.xq_p - self.xd_p).abs() > 1e-12 {
            return Err(format!(
                "machine {}: xq_p ({}) must equal xd_p ({})",
                self.name, self.xq_p, self.xd_p
            ));
        }
        Ok(())
    }

    /// Internal impedance seen by the network.
    pub fn source_impedance(&self) -> Phasor {
        Phasor::new(self.ra, self.xd_p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MachineSetpoints {
    pub v_ref: f64,
    pub p_ref: f64,
}

/// Dynamic states of one machine, in order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MachineState {
    /// Rotor angle in the network frame, rad.
    pub delta: f64,
    /// Speed deviation, pu.
    pub d_omega: f64,
    pub eq_p: f64,
    pub ed_p: f64,
    /// Field voltage (exciter output).
    pub efd: f64,
    /// Mechanical power (governor output).
    pub pm: f64,
}

impl MachineState {
    pub const NAMES: [&'static str; 6] = ["delta", "d_omega", "eq_p", "ed_p", "efd", "pm"];

    pub fn to_array(self) -> [f64; 6] {
        [
            self.delta,
            self.d_omega,
            self.eq_p,
            self.ed_p,
            self.efd,
            self.pm,
        ]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            delta: x[0],
            d_omega: x[1],
            eq_p: x[2],
            ed_p: x[3],
            efd: x[4],
            pm: x[5],
        }
    }

    fn internal_emf(&self) -> Phasor {
        to_network_frame(Phasor::new(self.ed_p, self.eq_p), self.delta - FRAC_PI_2)
    }
}

/// Result of one machine evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineUpdate {
    pub derivatives: MachineState,
    /// Norton current source behind the source impedance, network frame.
    pub norton: Phasor,
    /// Terminal current out of the machine, network frame.
    pub terminal_current: Phasor,
    pub electrical_power: f64,
}

/// Norton current source `E' / (ra + j·xd')` in the network frame.
pub fn norton_current(p: &MachineParams, s: &MachineState) -> Phasor {
    s.internal_emf() / p.source_impedance()
}

/// State derivatives for terminal voltage `v_t` (network frame).
pub fn sg_derivatives(
    p: &MachineParams,
    sp: &MachineSetpoints,
    s: &MachineState,
    v_t: Phasor,
    omega_b: f64,
) -> Result<MachineUpdate, NetworkError> {
    let vmag = v_t.norm();
    if vmag <= MIN_TERMINAL_VOLTAGE {
        return Err(NetworkError::LowVoltageRegion {
            machine: p.name.clone(),
            magnitude: vmag,
        });
    }
    let e = s.internal_emf();
    let i = (e - v_t) / p.source_impedance();
    let i_dq = to_local_frame(i, s.delta - FRAC_PI_2);
    let (id, iq) = (i_dq.re, i_dq.im);
    let pe = s.ed_p * id + s.eq_p * iq;

    let derivatives = MachineState {
        delta: omega_b * s.d_omega,
        d_omega: (s.pm - pe - p.d * s.d_omega) / (2.0 * p.h),
        eq_p: (s.efd - s.eq_p - (p.xd - p.xd_p) * id) / p.td0_p,
        ed_p: (-s.ed_p + (p.xq - p.xq_p) * iq) / p.tq0_p,
        efd: (p.ka * (sp.v_ref - vmag) - s.efd) / p.ta,
        pm: (sp.p_ref - s.d_omega / p.droop - s.pm) / p.tg,
    };
    Ok(MachineUpdate {
        derivatives,
        norton: e / p.source_impedance(),
        terminal_current: i,
        electrical_power: pe,
    })
}

/// Steady-state machine states and setpoints reproducing terminal voltage
/// `v` and complex output `s` (machine base).
pub fn machine_from_power_flow(
    p: &MachineParams,
    v: Phasor,
    s: Phasor,
) -> (MachineState, MachineSetpoints) {
    let i = (s / v).conj();
    let e_q_axis = v + Phasor::new(p.ra, p.xq) * i;
    let delta = e_q_axis.arg();
    let v_dq = to_local_frame(v, delta - FRAC_PI_2);
    let i_dq = to_local_frame(i, delta - FRAC_PI_2);
    let (vd, vq, id, iq) = (v_dq.re, v_dq.im, i_dq.re, i_dq.im);
    let ed_p = vd + p.ra * id - p.xq_p * iq;
    let eq_p = vq + p.ra * iq + p.xd_p * id;
    let efd = eq_p + (p.xd - p.xd_p) * id;
    let pm = ed_p * id + eq_p * iq;
    let v_ref = v.norm() + if p.ka > 0.0 { efd / p.ka } else { 0.0 };
    (
        MachineState {
            delta,
            d_omega: 0.0,
            eq_p,
            ed_p,
            efd,
            pm,
        },
        MachineSetpoints { v_ref, p_ref: pm },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> MachineParams {
        super::super::two_area::machines().remove(0)
    }

    fn at_equilibrium() -> (MachineParams, MachineState, MachineSetpoints, Phasor) {
        let p = params();
        let v = Phasor::from_polar(1.03, 0.35);
        let s = Phasor::new(0.78, 0.2);
        let (st, sp) = machine_from_power_flow(&p, v, s);
        (p, st, sp, v)
    }

    #[test]
    fn equilibrium_has_vanishing_derivatives() {
        let (p, st, sp, v) = at_equilibrium();
        let up = sg_derivatives(&p, &sp, &st, v, 314.159).unwrap();
        for d in up.derivatives.to_array() {
            assert!(d.abs() < 1e-8, "{d}");
        }
        let s_out = v * up.terminal_current.conj();
        assert!((s_out - Phasor::new(0.78, 0.2)).norm() < 1e-12);
    }

    #[test]
    fn excess_mechanical_power_accelerates() {
        let (p, mut st, sp, v) = at_equilibrium();
        st.pm += 0.1;
        let up = sg_derivatives(&p, &sp, &st, v, 314.159).unwrap();
        assert!((up.derivatives.d_omega - 0.1 / (2.0 * p.h)).abs() < 1e-12);
    }

    #[test]
    fn governor_droop_lowers_power_reference() {
        let (p, mut st, sp, v) = at_equilibrium();
        st.d_omega = 0.01;
        // Steady governor output solves dpm = 0.
        let up = sg_derivatives(&p, &sp, &st, v, 314.159).unwrap();
        let steady_pm = st.pm + up.derivatives.pm * p.tg;
        assert!((steady_pm - (sp.p_ref - 0.01 / 0.05)).abs() < 1e-12);
        assert!((sp.p_ref - steady_pm - 0.2).abs() < 1e-12);
    }

    #[test]
    fn low_voltage_is_rejected() {
        let (p, st, sp, _) = at_equilibrium();
        let err = sg_derivatives(&p, &sp, &st, Phasor::new(0.15, 0.0), 314.159).unwrap_err();
        assert!(matches!(err, NetworkError::LowVoltageRegion { .. }));
    }

    #[test]
    fn norton_current_matches_terminal_relation() {
        let (p, st, sp, v) = at_equilibrium();
        let up = sg_derivatives(&p, &sp, &st, v, 314.159).unwrap();
        let y = p.source_impedance().inv();
        assert!((up.norton - v * y - up.terminal_current).norm() < 1e-12);
        assert!((norton_current(&p, &st) - up.norton).norm() < 1e-15);
    }

    #[test]
    fn validation_catches_bad_constants() {
        let mut p = params();
        p.h = 0.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.td0_p = -1.0;
        assert!(p.validate().is_err());
        assert!(params().validate().is_ok());
    }
}
