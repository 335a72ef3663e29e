//! Two-area, four-machine benchmark grid on a 100 MVA base.
//!
//! Buses are numbered 1–11; generators sit on buses 1–4 behind step-up
//! transformers, loads on buses 7 and 9, and the tie corridor 7–8–9 is
//! double-circuit. The VSHP converter connects to bus 5 next to SG1.

use super::{Branch, Bus, Dispatch, GeneratorDispatch, MachineParams, NetworkError, NetworkModel};
use crate::phasor::Phasor;

pub const BASE_MVA: f64 = 100.0;
pub const VSHP_BUS: u32 = 5;

const R_PER_KM: f64 = 0.0001;
const X_PER_KM: f64 = 0.001;
const B_PER_KM: f64 = 0.00175;
/// Step-up transformer reactance, 0.15 pu on 900 MVA.
const X_TRANSFORMER: f64 = 0.15 * BASE_MVA / 900.0;

pub fn buses() -> Vec<Bus> {
    (1..=11)
        .map(|number| {
            let (load, shunt) = match number {
                7 => (Phasor::new(9.67, -1.0), Phasor::new(0.0, 2.0)),
                9 => (Phasor::new(17.67, -1.0), Phasor::new(0.0, 3.5)),
                _ => (Phasor::new(0.0, 0.0), Phasor::new(0.0, 0.0)),
            };
            Bus {
                number,
                base_kv: if number <= 4 { 20.0 } else { 230.0 },
                shunt,
                load,
            }
        })
        .collect()
}

pub fn branches() -> Vec<Branch> {
    let transformer = |id, from: usize, to: usize| Branch {
        id,
        from: from - 1,
        to: to - 1,
        r: 0.0,
        x: X_TRANSFORMER,
        b: 0.0,
    };
    let line = |id, from: usize, to: usize, km: f64| Branch {
        id,
        from: from - 1,
        to: to - 1,
        r: R_PER_KM * km,
        x: X_PER_KM * km,
        b: B_PER_KM * km,
    };
    vec![
        transformer(1, 1, 5),
        transformer(2, 2, 6),
        transformer(3, 3, 11),
        transformer(4, 4, 10),
        line(5, 5, 6, 25.0),
        line(6, 6, 7, 10.0),
        line(7, 7, 8, 110.0),
        line(8, 7, 8, 110.0),
        line(9, 8, 9, 110.0),
        line(10, 8, 9, 110.0),
        line(11, 9, 10, 10.0),
        line(12, 10, 11, 25.0),
    ]
}

pub fn network() -> Result<NetworkModel, NetworkError> {
    NetworkModel::new(buses(), branches())
}

/// Round-rotor transient model of the 900 MVA units.
pub fn machines() -> Vec<MachineParams> {
    [
        ("SG1", 1, 6.5),
        ("SG2", 2, 6.5),
        ("SG3", 3, 6.175),
        ("SG4", 4, 6.175),
    ]
    .into_iter()
    .map(|(name, bus, h)| MachineParams {
        name: name.to_string(),
        bus,
        rating_mva: 900.0,
        h,
        d: 0.0,
        xd: 1.8,
        xq: 1.7,
        xd_p: 0.3,
        xq_p: 0.3,
        ra: 0.0025,
        td0_p: 8.0,
        tq0_p: 0.4,
        ka: 50.0,
        ta: 0.05,
        droop: 0.05,
        tg: 0.5,
    })
    .collect()
}

/// Standard dispatch with SG3 as slack and a converter injection of
/// `vshp_p` (system pu) at bus 5.
pub fn dispatch(vshp_p: f64) -> Dispatch {
    Dispatch {
        generators: vec![
            GeneratorDispatch {
                bus: 1,
                p: 7.0,
                v: 1.03,
                slack: false,
            },
            GeneratorDispatch {
                bus: 2,
                p: 7.0,
                v: 1.01,
                slack: false,
            },
            GeneratorDispatch {
                bus: 3,
                p: 7.19,
                v: 1.03,
                slack: true,
            },
            GeneratorDispatch {
                bus: 4,
                p: 7.0,
                v: 1.01,
                slack: false,
            },
        ],
        injections: vec![(VSHP_BUS, Phasor::new(vshp_p, 0.0))],
    }
}
