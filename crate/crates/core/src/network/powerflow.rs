use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{NetworkError, NetworkModel};
use crate::phasor::Phasor;

const MAX_ITERATIONS: usize = 30;
const TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorDispatch {
    pub bus: u32,
    /// Active power set-point, system pu. Ignored for the slack unit.
    pub p: f64,
    /// Terminal voltage set-point, pu.
    pub v: f64,
    #[serde(default)]
    pub slack: bool,
}

/// Generator set-points plus fixed complex injections (converters).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dispatch {
    pub generators: Vec<GeneratorDispatch>,
    pub injections: Vec<(u32, Phasor)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub voltages: Vec<Phasor>,
    /// Complex output of each entry in `Dispatch::generators`, system pu.
    pub generation: Vec<Phasor>,
    pub iterations: usize,
    pub mismatch: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Slack,
    Pv,
    Pq,
}

/// Newton–Raphson power flow in polar coordinates. Loads are part of the
/// admittance matrix, so only generators and fixed injections appear as
/// specified powers.
pub fn initialize_power_flow(
    network: &NetworkModel,
    dispatch: &Dispatch,
) -> Result<PowerFlowSolution, NetworkError> {
    let n = network.bus_count();
    let y = network.admittance();
    let mut kind = vec![Kind::Pq; n];
    let mut vm = vec![1.0; n];
    let mut p_spec = vec![0.0; n];
    let mut q_spec = vec![0.0; n];
    let mut gen_index = Vec::with_capacity(dispatch.generators.len());
    let mut slack_count = 0;

    for g in &dispatch.generators {
        let k = network.bus_index(g.bus)?;
        if kind[k] != Kind::Pq {
            return Err(NetworkError::PowerFlowSetup(format!(
                "two generators at bus {}",
                g.bus
            )));
        }
        if !(g.v > 0.0) {
            return Err(NetworkError::PowerFlowSetup(format!(
                "voltage set-point at bus {} must be > 0",
                g.bus
            )));
        }
        kind[k] = if g.slack {
            slack_count += 1;
            Kind::Slack
        } else {
            p_spec[k] += g.p;
            Kind::Pv
        };
        vm[k] = g.v;
        gen_index.push(k);
    }
    if slack_count != 1 {
        return Err(NetworkError::PowerFlowSetup(format!(
            "exactly one slack generator required, found {slack_count}"
        )));
    }
    for &(bus, s) in &dispatch.injections {
        let k = network.bus_index(bus)?;
        p_spec[k] += s.re;
        q_spec[k] += s.im;
    }

    let pvpq: Vec<usize> = (0..n).filter(|&k| kind[k] != Kind::Slack).collect();
    let pq: Vec<usize> = (0..n).filter(|&k| kind[k] == Kind::Pq).collect();
    let mut va = vec![0.0; n];

    let voltages = |vm: &[f64], va: &[f64]| -> DVector<Phasor> {
        DVector::from_iterator(n, (0..n).map(|k| Phasor::from_polar(vm[k], va[k])))
    };

    let mut iterations = 0;
    loop {
        let v = voltages(&vm, &va);
        let ibus = y * &v;
        let s_calc: Vec<Phasor> = (0..n).map(|k| v[k] * ibus[k].conj()).collect();
        let mut f = DVector::zeros(pvpq.len() + pq.len());
        for (r, &k) in pvpq.iter().enumerate() {
            f[r] = s_calc[k].re - p_spec[k];
        }
        for (r, &k) in pq.iter().enumerate() {
            f[pvpq.len() + r] = s_calc[k].im - q_spec[k];
        }
        let mismatch = f.amax();
        if mismatch < TOLERANCE {
            let generation = dispatch
                .generators
                .iter()
                .zip(&gen_index)
                .map(|(_, &k)| {
                    let fixed: Phasor = dispatch
                        .injections
                        .iter()
                        .filter(|(b, _)| network.bus_index(*b).ok() == Some(k))
                        .map(|(_, s)| *s)
                        .sum();
                    s_calc[k] - fixed
                })
                .collect();
            return Ok(PowerFlowSolution {
                voltages: v.iter().copied().collect(),
                generation,
                iterations,
                mismatch,
            });
        }
        if iterations >= MAX_ITERATIONS || !mismatch.is_finite() {
            return Err(NetworkError::PowerFlowDiverged {
                iterations,
                mismatch,
            });
        }

        // dS/dθ = j·diag(V)·conj(diag(I) − Y·diag(V))
        // dS/d|V| = diag(V)·conj(Y·diag(V/|V|)) + conj(diag(I))·diag(V/|V|)
        let vnorm: Vec<Phasor> = (0..n).map(|k| v[k] / vm[k]).collect();
        let m = pvpq.len() + pq.len();
        let mut jac = DMatrix::zeros(m, m);
        let j = Phasor::new(0.0, 1.0);
        let ds_dva = |r: usize, c: usize| -> Phasor {
            let diag = if r == c {
                ibus[r]
            } else {
                Phasor::new(0.0, 0.0)
            };
            j * v[r] * (diag - y[(r, c)] * v[c]).conj()
        };
        let ds_dvm = |r: usize, c: usize| -> Phasor {
            let mut d = v[r] * (y[(r, c)] * vnorm[c]).conj();
            if r == c {
                d += ibus[r].conj() * vnorm[r];
            }
            d
        };
        for (a, &r) in pvpq.iter().enumerate() {
            for (b, &c) in pvpq.iter().enumerate() {
                jac[(a, b)] = ds_dva(r, c).re;
            }
            for (b, &c) in pq.iter().enumerate() {
                jac[(a, pvpq.len() + b)] = ds_dvm(r, c).re;
            }
        }
        for (a, &r) in pq.iter().enumerate() {
            for (b, &c) in pvpq.iter().enumerate() {
                jac[(pvpq.len() + a, b)] = ds_dva(r, c).im;
            }
            for (b, &c) in pq.iter().enumerate() {
                jac[(pvpq.len() + a, pvpq.len() + b)] = ds_dvm(r, c).im;
            }
        }
        let dx = jac
            .lu()
            .solve(&(-f))
            .ok_or(NetworkError::PowerFlowDiverged {
                iterations,
                mismatch,
            })?;
        for (a, &k) in pvpq.iter().enumerate() {
            va[k] += dx[a];
        }
        for (a, &k) in pq.iter().enumerate() {
            vm[k] += dx[pvpq.len() + a];
        }
        iterations += 1;
    }
}

const CALIBRATION_ITERATIONS: usize = 50;

/// Rescale every load admittance so the load draws its nominal power at the
/// solved voltage. The configured admittance is read as the nominal power at
/// 1 pu (`Y = S̄`). Returns the rescaled network and its power flow.
pub fn calibrate_loads(
    network: &NetworkModel,
    dispatch: &Dispatch,
) -> Result<(NetworkModel, PowerFlowSolution), NetworkError> {
    let nominal: Vec<Phasor> = network.buses.iter().map(|b| b.load).collect();
    let mut net = network.clone();
    let mut last = f64::INFINITY;
    for _ in 0..CALIBRATION_ITERATIONS {
        let pf = initialize_power_flow(&net, dispatch)?;
        let mut buses = net.buses.clone();
        let mut change: f64 = 0.0;
        for ((bus, y0), v) in buses.iter_mut().zip(&nominal).zip(&pf.voltages) {
            let y = y0 / v.norm_sqr();
            change = change.max((y - bus.load).norm());
            bus.load = y;
        }
        if change < 1e-13 {
            return Ok((net, pf));
        }
        last = change;
        net = NetworkModel::new(buses, net.branches.clone())?;
    }
    Err(NetworkError::PowerFlowDiverged {
        iterations: CALIBRATION_ITERATIONS,
        mismatch: last,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{branch_losses, load_power, two_area, Branch, Bus};
    use super::*;

    fn bus(number: u32, load: Phasor) -> Bus {
        Bus {
            number,
            base_kv: 230.0,
            shunt: Phasor::new(0.0, 0.0),
            load,
        }
    }

    #[test]
    fn lossless_single_load() {
        let net = NetworkModel::new(
            vec![bus(1, Phasor::new(0.0, 0.0)), bus(2, Phasor::new(0.5, 0.0))],
            vec![Branch {
                id: 1,
                from: 0,
                to: 1,
                r: 0.0,
                x: 0.1,
                b: 0.0,
            }],
        )
        .unwrap();
        let d = Dispatch {
            generators: vec![GeneratorDispatch {
                bus: 1,
                p: 0.0,
                v: 1.0,
                slack: true,
            }],
            injections: vec![],
        };
        let sol = initialize_power_flow(&net, &d).unwrap();
        let consumed = load_power(&net, &sol.voltages);
        assert!((sol.generation[0].re - consumed.re).abs() < 1e-10);
        // Unit voltage at the load bus would draw exactly 0.5.
        let vl = sol.voltages[1].norm();
        assert!((sol.generation[0].re - 0.5 * vl * vl).abs() < 1e-10);

        let co_located = NetworkModel::new(vec![bus(1, Phasor::new(0.5, 0.0))], vec![]).unwrap();
        let sol = initialize_power_flow(&co_located, &d).unwrap();
        assert!((sol.generation[0].re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn no_load_means_no_generation() {
        let net = NetworkModel::new(
            vec![
                bus(1, Phasor::new(0.0, 0.0)),
                bus(2, Phasor::new(0.0, 0.0)),
                bus(3, Phasor::new(0.0, 0.0)),
            ],
            vec![
                Branch {
                    id: 1,
                    from: 0,
                    to: 1,
                    r: 0.0,
                    x: 0.1,
                    b: 0.0,
                },
                Branch {
                    id: 2,
                    from: 1,
                    to: 2,
                    r: 0.0,
                    x: 0.2,
                    b: 0.0,
                },
            ],
        )
        .unwrap();
        let d = Dispatch {
            generators: vec![
                GeneratorDispatch {
                    bus: 1,
                    p: 0.0,
                    v: 1.0,
                    slack: true,
                },
                GeneratorDispatch {
                    bus: 3,
                    p: 0.0,
                    v: 1.0,
                    slack: false,
                },
            ],
            injections: vec![],
        };
        let sol = initialize_power_flow(&net, &d).unwrap();
        for v in &sol.voltages {
            assert!(v.arg().abs() < 1e-12);
        }
        for g in &sol.generation {
            assert!(g.norm() < 1e-12);
        }
    }

    #[test]
    fn two_area_dispatch_conserves_power() {
        let net = two_area::network().unwrap();
        let d = two_area::dispatch(0.8 * 100.0 / two_area::BASE_MVA);
        let sol = initialize_power_flow(&net, &d).unwrap();
        assert!(sol.mismatch < 1e-8);
        let generated: Phasor = sol.generation.iter().sum::<Phasor>()
            + d.injections.iter().map(|(_, s)| *s).sum::<Phasor>();
        let consumed = load_power(&net, &sol.voltages) + branch_losses(&net, &sol.voltages);
        assert!((generated - consumed).norm() < 1e-8);
    }

    #[test]
    fn setup_errors() {
        let net = two_area::network().unwrap();
        let mut d = two_area::dispatch(0.0);
        for g in &mut d.generators {
            g.slack = false;
        }
        assert!(matches!(
            initialize_power_flow(&net, &d),
            Err(NetworkError::PowerFlowSetup(_))
        ));
    }

    #[test]
    fn infeasible_dispatch_diverges() {
        let net = two_area::network().unwrap();
        let mut d = two_area::dispatch(0.0);
        d.generators[0].p = 200.0;
        assert!(matches!(
            initialize_power_flow(&net, &d),
            Err(NetworkError::PowerFlowDiverged { .. })
        ));
    }
}
