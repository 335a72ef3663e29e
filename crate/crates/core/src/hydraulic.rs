//! Waterway, surge tank, turbine, guide-vane governor and shaft of the
//! variable-speed unit. Per-unit on the plant rating.
//!
//! Rigid water columns in the tunnel and penstock are joined by a lumped
//! surge tank. The turbine follows the orifice law `q = g·√h`, so the
//! turbine head is `(q/g)²` and the mechanical power is `q·h`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Guide-vane opening used in place of zero to keep the orifice law finite.
pub const G_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HydraulicError {
    #[error("guide vanes closed (g = {g:.2e}) while penstock flow is {q_p:.3} pu")]
    GuideVaneClosedWithFlow { g: f64, q_p: f64 },
    #[error("requested turbine power {0:.3} pu exceeds the full-gate capability")]
    InfeasibleOperatingPoint(f64),
    #[error("invalid hydraulic parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HydraulicParams {
    /// Tunnel water time constant, s.
    pub t_wt: f64,
    /// Penstock water time constant, s.
    pub t_wp: f64,
    /// Surge tank storage constant, s.
    pub c_s: f64,
    pub f_t: f64,
    pub f_p: f64,
    /// Static head.
    pub h0: f64,
    /// Lumped turbine + generator inertia constant, s.
    pub h_t: f64,
    /// Main servo time constant, s.
    pub t_g: f64,
    /// Pilot servo time constant, s.
    pub t_p: f64,
    /// Guide-vane rate limit, pu/s.
    pub g_rate: f64,
    pub kp: f64,
    pub ki: f64,
    /// Turbine speed reference, pu.
    pub omega_ref: f64,
}

impl Default for HydraulicParams {
    fn default() -> Self {
        Self {
            t_wt: 1.5,
            t_wp: 0.3,
            c_s: 100.0,
            f_t: 0.01,
            f_p: 0.01,
            h0: 1.0,
            h_t: 4.0,
            t_g: 0.2,
            t_p: 0.05,
            g_rate: 0.1,
            kp: 2.0,
            ki: 0.4,
            omega_ref: 1.0,
        }
    }
}

impl HydraulicParams {
    pub fn validate(&self) -> Result<(), HydraulicError> {
        for (key, v) in [
            ("t_wt", self.t_wt),
            ("t_wp", self.t_wp),
            ("c_s", self.c_s),
            ("h0", self.h0),
            ("h_t", self.h_t),
            ("t_g", self.t_g),
            ("t_p", self.t_p),
            ("g_rate", self.g_rate),
        ] {
            if !(v > 0.0) {
                return Err(HydraulicError::InvalidParameter(format!(
                    "{key} must be > 0 (got {v})"
                )));
            }
        }
        for (key, v) in [
            ("f_t", self.f_t),
            ("f_p", self.f_p),
            ("kp", self.kp),
            ("ki", self.ki),
        ] {
            if !(v >= 0.0) {
                return Err(HydraulicError::InvalidParameter(format!(
                    "{key} must be >= 0 (got {v})"
                )));
            }
        }
        if !(0.7..=1.3).contains(&self.omega_ref) {
            return Err(HydraulicError::InvalidParameter(format!(
                "omega_ref {} outside [0.7, 1.3]",
                self.omega_ref
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HydraulicState {
    pub q_t: f64,
    pub q_p: f64,
    pub h_st: f64,
    /// Guide-vane opening, [0, 1].
    pub g: f64,
    /// Pilot servo position.
    pub g_servo: f64,
    pub omega_t: f64,
    /// Governor integrator.
    pub gov_int: f64,
}

impl HydraulicState {
    pub const NAMES: [&'static str; 7] =
        ["q_t", "q_p", "h_st", "g", "g_servo", "omega_t", "gov_int"];

    pub fn to_array(self) -> [f64; 7] {
        [
            self.q_t,
            self.q_p,
            self.h_st,
            self.g,
            self.g_servo,
            self.omega_t,
            self.gov_int,
        ]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            q_t: x[0],
            q_p: x[1],
            h_st: x[2],
            g: x[3],
            g_servo: x[4],
            omega_t: x[5],
            gov_int: x[6],
        }
    }
}

/// Tracking time constant of the governor anti-windup, s.
const ANTI_WINDUP_T: f64 = 0.5;

/// Head across the turbine for flow `q_p` at opening `g`. Reverse flow
/// sees a negative head.
pub fn turbine_head(q_p: f64, g: f64) -> f64 {
    let r = q_p / g.max(G_FLOOR);
    r * r.abs()
}

/// Mechanical power `q·h_turb`.
pub fn turbine_power(q_p: f64, g: f64) -> f64 {
    if q_p == 0.0 {
        return 0.0;
    }
    q_p * turbine_head(q_p, g)
}

/// Time derivatives of tunnel flow, penstock flow and surge-tank head.
pub fn waterway_derivatives(
    s: &HydraulicState,
    p: &HydraulicParams,
) -> Result<(f64, f64, f64), HydraulicError> {
    if s.g < G_FLOOR && s.q_p > 1e-3 {
        return Err(HydraulicError::GuideVaneClosedWithFlow { g: s.g, q_p: s.q_p });
    }
    let dq_t = (p.h0 - s.h_st - p.f_t * s.q_t * s.q_t.abs()) / p.t_wt;
    let dh_st = (s.q_t - s.q_p) / p.c_s;
    let dq_p = (s.h_st - turbine_head(s.q_p, s.g) - p.f_p * s.q_p * s.q_p.abs()) / p.t_wp;
    Ok((dq_t, dq_p, dh_st))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GovernorOutput {
    /// Guide-vane reference from the PI controller.
    pub g_ref: f64,
    pub d_gov_int: f64,
    pub d_g_servo: f64,
    /// Rate-limited and position-clamped guide-vane derivative.
    pub d_g: f64,
}

/// Speed governor: PI on `omega_ref − omega_t`, a pilot servo, and a
/// rate-limited main servo that keeps `g` inside [0, 1]. While the
/// reference is beyond the stroke the integrator is pulled back towards it
/// (back-calculation anti-windup).
pub fn governor_step(
    omega_t: f64,
    omega_ref: f64,
    s: &HydraulicState,
    p: &HydraulicParams,
) -> GovernorOutput {
    let err = omega_ref - omega_t;
    let g_ref = p.kp * err + s.gov_int;
    let g_cmd = g_ref.clamp(0.0, 1.0);
    let d_g_servo = (g_cmd - s.g_servo) / p.t_p;
    let mut d_g = ((s.g_servo - s.g) / p.t_g).clamp(-p.g_rate, p.g_rate);
    if (s.g >= 1.0 && d_g > 0.0) || (s.g <= 0.0 && d_g < 0.0) {
        d_g = 0.0;
    }
    GovernorOutput {
        g_ref,
        d_gov_int: p.ki * err + (g_cmd - g_ref) / ANTI_WINDUP_T,
        d_g_servo,
        d_g,
    }
}

/// Main-servo derivative for a given reference, rate-limited.
pub fn servo_rate(g_ref: f64, g: f64, p: &HydraulicParams) -> f64 {
    ((g_ref - g) / p.t_g).clamp(-p.g_rate, p.g_rate)
}

/// Power-based swing equation of the lumped shaft.
pub fn shaft_derivative(p_m: f64, p_g: f64, omega_t: f64, h_t: f64) -> f64 {
    (p_m - p_g) / (2.0 * h_t * omega_t)
}

/// All hydraulic derivatives for a converter power draw `p_g`.
pub fn hydraulic_derivatives(
    s: &HydraulicState,
    p: &HydraulicParams,
    p_g: f64,
) -> Result<HydraulicState, HydraulicError> {
    let (dq_t, dq_p, dh_st) = waterway_derivatives(s, p)?;
    let gov = governor_step(s.omega_t, p.omega_ref, s, p);
    let p_m = turbine_power(s.q_p, s.g);
    Ok(HydraulicState {
        q_t: dq_t,
        q_p: dq_p,
        h_st: dh_st,
        g: gov.d_g,
        g_servo: gov.d_g_servo,
        omega_t: shaft_derivative(p_m, p_g, s.omega_t, p.h_t),
        gov_int: gov.d_gov_int,
    })
}

/// Equilibrium delivering mechanical power `p_m` at the speed reference.
pub fn steady_state(p: &HydraulicParams, p_m: f64) -> Result<HydraulicState, HydraulicError> {
    if p_m < 0.0 {
        return Err(HydraulicError::InfeasibleOperatingPoint(p_m));
    }
    let loss = p.f_t + p.f_p;
    // q·(h0 − loss·q²) = p_m, on the rising branch.
    let mut q = p_m / p.h0;
    for _ in 0..50 {
        let f = q * (p.h0 - loss * q * q) - p_m;
        let df = p.h0 - 3.0 * loss * q * q;
        if df <= 0.0 {
            return Err(HydraulicError::InfeasibleOperatingPoint(p_m));
        }
        let step = f / df;
        q -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    let h_st = p.h0 - p.f_t * q * q;
    let h_turb = h_st - p.f_p * q * q;
    let g = if q == 0.0 { 0.0 } else { q / h_turb.sqrt() };
    if !(g <= 1.0) || !(h_turb > 0.0) {
        return Err(HydraulicError::InfeasibleOperatingPoint(p_m));
    }
    Ok(HydraulicState {
        q_t: q,
        q_p: q,
        h_st,
        g,
        g_servo: g,
        omega_t: p.omega_ref,
        gov_int: g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lossless() -> HydraulicParams {
        HydraulicParams {
            f_t: 0.0,
            f_p: 0.0,
            ..Default::default()
        }
    }

    fn state(q_t: f64, q_p: f64, h_st: f64, g: f64) -> HydraulicState {
        HydraulicState {
            q_t,
            q_p,
            h_st,
            g,
            g_servo: g,
            omega_t: 1.0,
            gov_int: g,
        }
    }

    #[test]
    fn rated_lossless_point_is_steady() {
        let (a, b, c) = waterway_derivatives(&state(1.0, 1.0, 1.0, 1.0), &lossless()).unwrap();
        assert_eq!((a, b, c), (0.0, 0.0, 0.0));
    }

    #[test]
    fn surge_tank_fills_with_excess_tunnel_flow() {
        let (_, _, dh) = waterway_derivatives(&state(1.0, 0.9, 1.0, 0.9), &lossless()).unwrap();
        assert!((dh - 0.001).abs() < 1e-15);
    }

    #[test]
    fn matched_opening_gives_unit_head() {
        let s = state(0.8, 0.8, 1.0, 0.8);
        assert!((turbine_head(0.8, 0.8) - 1.0).abs() < 1e-15);
        let (_, dq_p, _) = waterway_derivatives(&s, &lossless()).unwrap();
        assert!(dq_p.abs() < 1e-15);
    }

    #[test]
    fn closed_vanes_with_flow_rejected() {
        let err = waterway_derivatives(&state(0.5, 0.5, 1.0, 0.0), &lossless()).unwrap_err();
        assert!(matches!(
            err,
            HydraulicError::GuideVaneClosedWithFlow { .. }
        ));
    }

    #[test]
    fn turbine_power_cases() {
        assert_eq!(turbine_power(1.0, 1.0), 1.0);
        assert!((turbine_power(0.8, 0.8) - 0.8).abs() < 1e-15);
        assert_eq!(turbine_power(0.0, 0.5), 0.0);
        assert!(turbine_power(0.1, 0.0).is_finite());
    }

    #[test]
    fn governor_holds_when_on_reference() {
        let p = HydraulicParams::default();
        let s = state(0.8, 0.8, 1.0, 0.7);
        let out = governor_step(1.0, 1.0, &s, &p);
        assert_eq!(out.d_g, 0.0);
        assert_eq!(out.d_gov_int, 0.0);
        assert_eq!(out.g_ref, 0.7);
    }

    #[test]
    fn servo_is_rate_limited() {
        let p = HydraulicParams {
            t_g: 0.2,
            g_rate: 0.1,
            ..Default::default()
        };
        assert!((servo_rate(1.0, 0.0, &p) - 0.1).abs() < 1e-15);
        assert!((servo_rate(0.0, 1.0, &p) + 0.1).abs() < 1e-15);
    }

    #[test]
    fn overspeed_closes_guide_vanes() {
        let p = HydraulicParams::default();
        let mut s = state(0.8, 0.8, 1.0, 0.7);
        s.omega_t = 1.02;
        let first = governor_step(s.omega_t, 1.0, &s, &p);
        assert!(first.g_ref < 0.7);
        assert!(first.d_gov_int < 0.0);
        s.gov_int += first.d_gov_int * 0.5;
        let later = governor_step(s.omega_t, 1.0, &s, &p);
        assert!(later.g_ref < first.g_ref);
    }

    #[test]
    fn vanes_never_open_past_full() {
        let p = HydraulicParams::default();
        let mut s = state(0.8, 0.8, 1.0, 1.0);
        s.g_servo = 1.5;
        assert_eq!(governor_step(1.0, 1.0, &s, &p).d_g, 0.0);
    }

    #[test]
    fn shaft_cases() {
        assert_eq!(shaft_derivative(0.7, 0.7, 1.0, 4.0), 0.0);
        assert!((shaft_derivative(1.0, 0.6, 1.0, 4.0) - 0.05).abs() < 1e-15);
        assert!(shaft_derivative(0.7, 0.9, 1.0, 4.0) < 0.0);
    }

    #[test]
    fn steady_state_balances() {
        let p = HydraulicParams::default();
        let s = steady_state(&p, 0.8).unwrap();
        assert_eq!(s.q_t, s.q_p);
        assert!(s.h_st <= p.h0);
        assert!((turbine_power(s.q_p, s.g) - 0.8).abs() < 1e-12);
        let d = hydraulic_derivatives(&s, &p, 0.8).unwrap();
        for v in d.to_array() {
            assert!(v.abs() < 1e-12, "{v}");
        }
        assert!(steady_state(&p, 5.0).is_err());
    }
}
