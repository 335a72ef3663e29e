//! Complex per-unit phasors.
//!
//! Network quantities are RMS phasors in a frame rotating at nominal
//! electrical speed. Controller quantities live in local dq frames; a dq
//! pair maps to the network frame through [`to_network_frame`].

pub use num_complex::Complex64;

/// Per-unit phasor in rectangular form.
pub type Phasor = Complex64;

/// Phasor from rectangular components.
#[inline]
pub fn phasor(re: f64, im: f64) -> Phasor {
    Phasor::new(re, im)
}

/// Rotate a network-frame phasor into a dq frame whose d-axis sits at
/// angle `theta`.
#[inline]
pub fn to_local_frame(v: Phasor, theta: f64) -> Phasor {
    v * Phasor::from_polar(1.0, -theta)
}

/// Inverse of [`to_local_frame`].
#[inline]
pub fn to_network_frame(v: Phasor, theta: f64) -> Phasor {
    v * Phasor::from_polar(1.0, theta)
}

/// Complex power `v · conj(i)`.
#[inline]
pub fn complex_power(v: Phasor, i: Phasor) -> Phasor {
    v * i.conj()
}
