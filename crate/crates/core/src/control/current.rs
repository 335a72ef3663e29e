//! Closed inner current loop, approximated by a first-order lag behind a
//! magnitude limiter.

use serde::{Deserialize, Serialize};

use super::Dq;
use crate::phasor::Phasor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentInjection {
    pub i_ref: Dq,
    /// Injected current, converter dq frame.
    pub i: Dq,
    pub lag_t: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectionOutput {
    pub state: CurrentInjection,
    /// Injected current in the network frame.
    pub injected: Phasor,
    pub saturated: bool,
}

/// Scale `i` onto the limit circle if it lies outside, keeping its angle.
pub fn saturate(i: Dq, limit: f64) -> (Dq, bool) {
    let m = i.norm();
    if m > limit {
        let k = limit / m;
        (Dq::new(i.d * k, i.q * k), true)
    } else {
        (i, false)
    }
}

/// `d i/dt` toward the saturated reference.
pub fn current_injection_derivative(i: Dq, i_ref: Dq, lag_t: f64, limit: f64) -> (Dq, bool) {
    let (target, saturated) = saturate(i_ref, limit);
    (
        Dq::new((target.d - i.d) / lag_t, (target.q - i.q) / lag_t),
        saturated,
    )
}

/// Exact lag update over `dt` with the reference held; `theta` is the angle
/// of the converter frame in the network frame.
pub fn current_injection_step(c: &CurrentInjection, theta: f64, dt: f64) -> InjectionOutput {
    let (target, saturated) = saturate(c.i_ref, c.limit);
    let decay = (-dt / c.lag_t).exp();
    let i = Dq::new(
        target.d + (c.i.d - target.d) * decay,
        target.q + (c.i.q - target.q) * decay,
    );
    let state = CurrentInjection { i, ..*c };
    InjectionOutput {
        state,
        injected: i.to_network(theta),
        saturated,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lag(i_ref: Dq, i: Dq) -> CurrentInjection {
        CurrentInjection {
            i_ref,
            i,
            lag_t: 0.005,
            limit: 1.2,
        }
    }

    #[test]
    fn settled_lag_has_zero_derivative() {
        let i = Dq::new(0.7, -0.2);
        let (d, sat) = current_injection_derivative(i, i, 0.005, 1.2);
        assert_eq!((d.d, d.q, sat), (0.0, 0.0, false));
    }

    #[test]
    fn step_response_after_one_time_constant() {
        let out = current_injection_step(&lag(Dq::new(1.0, 0.0), Dq::default()), 0.0, 0.005);
        assert!((out.state.i.d - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((out.state.i.d - 0.632).abs() < 1e-3);
    }

    #[test]
    fn reference_beyond_limit_is_clamped() {
        let mut c = lag(Dq::new(1.5, 0.0), Dq::default());
        let mut out = current_injection_step(&c, 0.0, 0.001);
        for _ in 0..200 {
            out = current_injection_step(&c, 0.0, 0.001);
            c = out.state;
        }
        assert!(out.saturated);
        assert!((out.injected.norm() - 1.2).abs() < 1e-12);
        assert!(out.injected.arg().abs() < 1e-15);
    }

    #[test]
    fn injection_rotates_into_network_frame() {
        let c = lag(Dq::new(0.5, 0.0), Dq::new(0.5, 0.0));
        let out = current_injection_step(&c, 0.4, 0.001);
        assert!((out.injected - Phasor::from_polar(0.5, 0.4)).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn injected_magnitude_never_exceeds_limit(
            rd in -5.0f64..5.0, rq in -5.0f64..5.0,
            a in 0.0f64..6.3, m in 0.0f64..1.2,
            dt in 1e-4f64..0.05,
        ) {
            let c = lag(Dq::new(rd, rq), Dq::new(m * a.cos(), m * a.sin()));
            let out = current_injection_step(&c, 0.3, dt);
            prop_assert!(out.injected.norm() <= 1.2 + 1e-12);
        }
    }
}
