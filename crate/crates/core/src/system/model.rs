use crate::control::{
    current_injection_derivative, current_reference, pll_derivatives, saturate,
    vsm_electrical_model, vsm_pd_supplement, vsm_pid_supplement, vsm_swing_step,
    vsm_voltage_control, CpcParams, Dq, FrequencyController, FrequencyControllerState,
    FrequencyReference, PllParams, PllState, ReactiveParams, Scheme, VsmParams, VsmState,
};
use crate::hydraulic::{self, hydraulic_derivatives, turbine_power, HydraulicState};
use crate::network::{
    calibrate_loads, initialize_power_flow, load_power, machine_from_power_flow, norton_current,
    sg_derivatives, Dispatch, LoadEvent, MachineSetpoints, MachineState, NetworkError,
    NetworkModel, NetworkSolver,
};
use crate::phasor::{to_local_frame, Phasor};

use super::{DynamicSystem, StateRegistry, SystemConfig, SystemError};

const SG_STATES: usize = 6;

/// Converter set-points fixed at initialization, converter base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VshpReferences {
    pub p_ref: f64,
    pub q_ref: f64,
    /// Terminal voltage reference of the VSM voltage controller.
    pub v_ref: f64,
}

/// Network solution and intermediate signals at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Algebraics {
    pub voltages: Vec<Phasor>,
    /// Converter output, converter base.
    pub p_g: f64,
    pub q_g: f64,
    /// PLL frequency estimate.
    pub omega_g: f64,
    pub omega_coi: f64,
    pub sg_power: Vec<f64>,
    pub p_m: f64,
    pub p_r_star: f64,
    pub v_e_hat: f64,
    pub p_f: f64,
    pub eps: f64,
    pub saturated: bool,
    pub pll_tracking: bool,
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    hydro: usize,
    pll: usize,
    conv: usize,
    scheme: usize,
}

#[derive(Debug, Clone)]
struct Control {
    scheme: Scheme,
    pll: PllParams,
    cpc: CpcParams,
    reactive: ReactiveParams,
    freq: Option<FrequencyController>,
    vsm: Option<VsmParams>,
    p_f_filter_t: f64,
    lag_t: f64,
    limit: f64,
    omega_ref: f64,
}

/// The assembled grid + plant + converter model.
#[derive(Debug, Clone)]
pub struct SystemModel {
    cfg: SystemConfig,
    network: NetworkModel,
    solver: NetworkSolver,
    registry: StateRegistry,
    machine_bus: Vec<usize>,
    /// Machine MVA over system MVA.
    machine_scale: Vec<f64>,
    setpoints: Vec<MachineSetpoints>,
    vshp_bus: usize,
    /// Converter MVA over system MVA.
    s_ratio: f64,
    refs: VshpReferences,
    offsets: Offsets,
    control: Control,
    omega_b: f64,
    initial: Vec<f64>,
}

fn validate(cfg: &SystemConfig) -> Vec<String> {
    let mut errs = Vec::new();
    if !(cfg.base_mva > 0.0) {
        errs.push(format!("base_mva must be > 0 (got {})", cfg.base_mva));
    }
    if !(cfg.f_nominal > 0.0) {
        errs.push(format!("f_nominal must be > 0 (got {})", cfg.f_nominal));
    }
    let has_bus = |b: u32| cfg.buses.iter().any(|x| x.number == b);
    for m in &cfg.machines {
        if let Err(e) = m.validate() {
            errs.push(e);
        }
        if !has_bus(m.bus) {
            errs.push(format!("machine {}: bus {} does not exist", m.name, m.bus));
        }
        if !cfg.generators.iter().any(|g| g.bus == m.bus) {
            errs.push(format!(
                "machine {}: no dispatch entry for bus {}",
                m.name, m.bus
            ));
        }
    }
    for g in &cfg.generators {
        if !cfg.machines.iter().any(|m| m.bus == g.bus) {
            errs.push(format!("dispatch entry at bus {} has no machine", g.bus));
        }
    }
    if !has_bus(cfg.vshp.bus) {
        errs.push(format!("vshp.bus: bus {} does not exist", cfg.vshp.bus));
    }
    if cfg.machines.iter().any(|m| m.bus == cfg.vshp.bus) {
        errs.push(format!(
            "vshp.bus: bus {} already hosts a machine",
            cfg.vshp.bus
        ));
    }
    if !(cfg.vshp.rating_mva > 0.0) {
        errs.push(format!(
            "vshp.rating_mva must be > 0 (got {})",
            cfg.vshp.rating_mva
        ));
    }
    if !(cfg.vshp.p_ref >= 0.0 && cfg.vshp.p_ref < 1.0) {
        errs.push(format!(
            "vshp.p_ref must lie in [0, 1) (got {})",
            cfg.vshp.p_ref
        ));
    }
    let bus = cfg.vshp.displaces;
    if bus != 0 {
        match cfg.generators.iter().find(|g| g.bus == bus) {
            None => errs.push(format!("vshp.displaces: no generator at bus {bus}")),
            Some(g) if !g.slack && g.p < cfg.vshp.p_ref * cfg.vshp.rating_mva / cfg.base_mva => {
                errs.push(format!(
                "vshp.displaces: generator at bus {bus} dispatches less than the converter output"
            ))
            }
            Some(_) => {}
        }
    }
    if let Err(e) = cfg.hydraulic.validate() {
        errs.push(format!("hydraulic: {e}"));
    }
    if let Err(e) = cfg.controller.params.validate() {
        errs.push(format!("controller: {e}"));
    }
    errs
}

/// Validate `cfg`, solve the power flow and build the model with its
/// initial state.
pub fn assemble_system(cfg: &SystemConfig) -> Result<SystemModel, SystemError> {
    let errs = validate(cfg);
    if !errs.is_empty() {
        return Err(SystemError::ConfigInvalid(errs));
    }
    let s_ratio = cfg.vshp.rating_mva / cfg.base_mva;
    let mut network = NetworkModel::new(cfg.buses.clone(), cfg.branches.clone())?;
    if cfg.calibrate_loads {
        network = calibrate_loads(&network, &power_flow_dispatch(cfg))?.0;
    }
    let vshp_bus = network.bus_index(cfg.vshp.bus)?;

    let mut registry = StateRegistry::new();
    for (k, _) in cfg.machines.iter().enumerate() {
        registry.push_all(&format!("sg{}", k + 1), &MachineState::NAMES);
    }
    let hydro = registry.push_all("hydro", &HydraulicState::NAMES);
    let pll = registry.push_all("pll", &PllState::NAMES);
    let conv = registry.push_all("conv", &["i_d", "i_q"]);
    let scheme = registry.len();
    let s = cfg.controller.scheme;
    match s {
        Scheme::Cpc => {
            registry.push("cpc", "integrator");
            registry.push("qctl", "integrator");
        }
        Scheme::Vsg | Scheme::VsgPid => {
            registry.push("vsg", "d_filt");
            registry.push("qctl", "integrator");
            if s == Scheme::VsgPid {
                registry.push("vsg", "integral");
                registry.push("vsg", "p_f");
            }
        }
        Scheme::Vsm | Scheme::VsmPd | Scheme::VsmPid => {
            registry.push_all("vsm", &VsmState::NAMES);
            if s != Scheme::Vsm {
                registry.push("supp", "d_filt");
            }
            if s == Scheme::VsmPid {
                registry.push("supp", "integral");
                registry.push("supp", "p_f");
            }
        }
    }

    let cp = &cfg.controller.params;
    let control = Control {
        scheme: s,
        pll: cp.pll(),
        cpc: cp.cpc(),
        reactive: cp.reactive(),
        freq: match s {
            Scheme::Vsg => Some(cp.vsg()),
            Scheme::VsgPid => Some(cp.vsg_pid()),
            Scheme::VsmPd => Some(cp.vsm_pd()),
            Scheme::VsmPid => Some(cp.vsm_pid()),
            _ => None,
        },
        vsm: s.is_vsm().then(|| cp.vsm(s)),
        p_f_filter_t: cp.p_f_filter_t,
        lag_t: cp.current_lag_t,
        limit: cp.current_limit,
        omega_ref: cp.omega_ref,
    };

    let machine_bus = cfg
        .machines
        .iter()
        .map(|m| network.bus_index(m.bus))
        .collect::<Result<Vec<_>, _>>()?;
    let machine_scale: Vec<f64> = cfg
        .machines
        .iter()
        .map(|m| m.rating_mva / cfg.base_mva)
        .collect();
    let solver = augmented_solver(&network, cfg, &machine_bus, &machine_scale)?;

    let mut model = SystemModel {
        cfg: cfg.clone(),
        network,
        solver,
        registry,
        machine_bus,
        machine_scale,
        setpoints: Vec::new(),
        vshp_bus,
        s_ratio,
        refs: VshpReferences {
            p_ref: cfg.vshp.p_ref,
            q_ref: cfg.vshp.q_ref,
            v_ref: 1.0,
        },
        offsets: Offsets {
            hydro,
            pll,
            conv,
            scheme,
        },
        control,
        omega_b: cfg.omega_base(),
        initial: Vec::new(),
    };
    model.initialize()?;
    Ok(model)
}

/// Generator set-points with the converter output taken off the displaced
/// unit, plus the converter injection itself.
fn power_flow_dispatch(cfg: &SystemConfig) -> Dispatch {
    let s_ratio = cfg.vshp.rating_mva / cfg.base_mva;
    let injection = Phasor::new(cfg.vshp.p_ref, cfg.vshp.q_ref) * s_ratio;
    let mut generators = cfg.generators.clone();
    if cfg.vshp.displaces != 0 {
        for g in generators
            .iter_mut()
            .filter(|g| g.bus == cfg.vshp.displaces)
        {
            g.p -= injection.re;
        }
    }
    Dispatch {
        generators,
        injections: vec![(cfg.vshp.bus, injection)],
    }
}

fn augmented_solver(
    network: &NetworkModel,
    cfg: &SystemConfig,
    machine_bus: &[usize],
    machine_scale: &[f64],
) -> Result<NetworkSolver, NetworkError> {
    let mut y = network.admittance().clone();
    for ((m, &k), &scale) in cfg.machines.iter().zip(machine_bus).zip(machine_scale) {
        y[(k, k)] += m.source_impedance().inv() * scale;
    }
    NetworkSolver::new(y)
}

impl SystemModel {
    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn scheme(&self) -> Scheme {
        self.control.scheme
    }

    pub fn registry(&self) -> &StateRegistry {
        &self.registry
    }

    pub fn network(&self) -> &NetworkModel {
        &self.network
    }

    pub fn references(&self) -> VshpReferences {
        self.refs
    }

    /// State built from the power flow.
    pub fn initial_state(&self) -> &[f64] {
        &self.initial
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.registry.get(label)
    }

    /// Converter MVA over system MVA.
    pub fn converter_scale(&self) -> f64 {
        self.s_ratio
    }

    fn initialize(&mut self) -> Result<(), SystemError> {
        let cfg = &self.cfg;
        let pf = initialize_power_flow(&self.network, &power_flow_dispatch(cfg))?;
        let mut x = vec![0.0; self.registry.len()];
        self.setpoints.clear();
        for (k, m) in cfg.machines.iter().enumerate() {
            let g = cfg
                .generators
                .iter()
                .position(|g| g.bus == m.bus)
                .expect("validated");
            let v = pf.voltages[self.machine_bus[k]];
            let (st, sp) = machine_from_power_flow(m, v, pf.generation[g] / self.machine_scale[k]);
            x[k * SG_STATES..(k + 1) * SG_STATES].copy_from_slice(&st.to_array());
            self.setpoints.push(sp);
        }

        let o = self.offsets;
        let hydro = hydraulic::steady_state(&cfg.hydraulic, cfg.vshp.p_ref)?;
        x[o.hydro..o.hydro + 7].copy_from_slice(&hydro.to_array());

        let v_c = pf.voltages[self.vshp_bus];
        let i = (Phasor::new(cfg.vshp.p_ref, cfg.vshp.q_ref) / v_c).conj();
        let pll = PllState::locked(v_c.arg());
        x[o.pll..o.pll + 3].copy_from_slice(&pll.to_array());
        self.refs.v_ref = v_c.norm();

        let s = o.scheme;
        if let Some(vp) = self.control.vsm {
            let e = v_c + Phasor::new(vp.r_s, vp.l_s) * i;
            let theta = e.arg();
            let v0 = to_local_frame(v_c, theta);
            let vs = VsmState {
                omega: 1.0,
                theta,
                v_int: e.norm(),
                q_filt: cfg.vshp.q_ref,
                v0_d: v0.re,
                v0_q: v0.im,
                x_d: 1.0,
            };
            x[s..s + 7].copy_from_slice(&vs.to_array());
            let i_dq = Dq::from_network(i, theta);
            x[o.conv] = i_dq.d;
            x[o.conv + 1] = i_dq.q;
        } else {
            let v_dq = Dq::from_network(v_c, pll.theta);
            let i_dq = Dq::from_network(i, pll.theta);
            x[o.conv] = i_dq.d;
            x[o.conv + 1] = i_dq.q;
            // Reactive loop: i_q·|v| = q* + integrator.
            let q_int = i_dq.q * v_dq.norm() - cfg.vshp.q_ref;
            match self.control.scheme {
                Scheme::Cpc => {
                    x[s] = i_dq.d;
                    x[s + 1] = q_int;
                }
                _ => {
                    x[s + 1] = q_int;
                }
            }
        }
        if saturate(Dq::new(x[o.conv], x[o.conv + 1]), self.control.limit).1 {
            return Err(SystemError::ConfigInvalid(vec![format!(
                "converter current at the operating point exceeds current_limit {}",
                self.control.limit
            )]));
        }
        self.initial = x;
        Ok(())
    }

    /// Check that every event refers to a bus carrying load.
    pub fn validate_events(&self, events: &[LoadEvent]) -> Result<(), SystemError> {
        let mut errs = Vec::new();
        for e in events {
            if let Err(err) = e.validate() {
                errs.push(format!("event at bus {}: {err}", e.bus));
                continue;
            }
            match self.network.bus_index(e.bus) {
                Err(_) => errs.push(format!("event: unknown bus {}", e.bus)),
                Ok(k) if self.network.buses[k].load.norm() == 0.0 => {
                    errs.push(format!("event: bus {} carries no load", e.bus))
                }
                Ok(_) => {}
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(SystemError::ConfigInvalid(errs))
        }
    }

    /// Scale a load and refactor the network.
    pub fn apply_event(&mut self, e: &LoadEvent) -> Result<(), SystemError> {
        self.network = self.network.apply_load_event(e)?;
        self.solver = augmented_solver(
            &self.network,
            &self.cfg,
            &self.machine_bus,
            &self.machine_scale,
        )?;
        Ok(())
    }

    fn converter_frame(&self, x: &[f64]) -> f64 {
        if self.control.vsm.is_some() {
            x[self.offsets.scheme + 1]
        } else {
            x[self.offsets.pll]
        }
    }

    /// Network-frame converter current, system base.
    fn converter_current(&self, x: &[f64]) -> Phasor {
        let o = self.offsets;
        Dq::new(x[o.conv], x[o.conv + 1]).to_network(self.converter_frame(x))
    }

    fn solve_voltages(&self, x: &[f64]) -> Result<Vec<Phasor>, SystemError> {
        let mut inj = vec![Phasor::new(0.0, 0.0); self.network.bus_count()];
        for (k, m) in self.cfg.machines.iter().enumerate() {
            let st = MachineState::from_slice(&x[k * SG_STATES..]);
            inj[self.machine_bus[k]] += norton_current(m, &st) * self.machine_scale[k];
        }
        inj[self.vshp_bus] += self.converter_current(x) * self.s_ratio;
        Ok(self.solver.solve(&inj)?)
    }

    /// Derivatives and algebraic quantities at `x`.
    pub fn evaluate(&self, x: &[f64], dx: &mut [f64]) -> Result<Algebraics, SystemError> {
        let o = self.offsets;
        let c = &self.control;
        let v = self.solve_voltages(x)?;

        let mut sg_power = Vec::with_capacity(self.cfg.machines.len());
        let (mut inertia, mut weighted) = (0.0, 0.0);
        for (k, m) in self.cfg.machines.iter().enumerate() {
            let r = k * SG_STATES..(k + 1) * SG_STATES;
            let st = MachineState::from_slice(&x[r.clone()]);
            let up = sg_derivatives(
                m,
                &self.setpoints[k],
                &st,
                v[self.machine_bus[k]],
                self.omega_b,
            )?;
            dx[r].copy_from_slice(&up.derivatives.to_array());
            sg_power.push(up.electrical_power * self.machine_scale[k]);
            let hs = m.h * m.rating_mva;
            inertia += hs;
            weighted += hs * (1.0 + st.d_omega);
        }

        let v_c = v[self.vshp_bus];
        let i_conv = Dq::new(x[o.conv], x[o.conv + 1]);
        let frame = self.converter_frame(x);
        let s_c = v_c * i_conv.to_network(frame).conj();
        let (p_g, q_g) = (s_c.re, s_c.im);

        let pll = PllState::from_slice(&x[o.pll..o.pll + 3]);
        let pll_out = pll_derivatives(v_c, &pll, &c.pll);
        dx[o.pll..o.pll + 3].copy_from_slice(&pll_out.derivatives.to_array());
        let omega_g = pll.omega;

        let h = HydraulicState::from_slice(&x[o.hydro..o.hydro + 7]);
        let dh = hydraulic_derivatives(&h, &self.cfg.hydraulic, p_g)?;
        dx[o.hydro..o.hydro + 7].copy_from_slice(&dh.to_array());

        let refs = self.refs;
        let s = o.scheme;
        let mut alg_extra = (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
        let mut integrators: Vec<usize> = Vec::new();

        let i_ref = if let Some(vp) = c.vsm {
            let vs = VsmState::from_slice(&x[s..s + 7]);
            let vc = vsm_voltage_control(v_c, q_g, refs.v_ref, refs.q_ref, &vs, &vp);
            let el = vsm_electrical_model(vc.v_e_hat, v_c, &vs, &vp)?;
            let (supp, p_f, eps) = match c.scheme {
                Scheme::VsmPd => {
                    let st = FrequencyControllerState {
                        d_filt: x[s + 7],
                        integral: 0.0,
                    };
                    let out = vsm_pd_supplement(omega_g, &st, c.freq.as_ref().expect("pd"));
                    dx[s + 7] = out.d_state.d_filt;
                    (out.power, f64::NAN, f64::NAN)
                }
                Scheme::VsmPid => {
                    let fc = c.freq.as_ref().expect("pid");
                    let st = FrequencyControllerState {
                        d_filt: x[s + 7],
                        integral: x[s + 8],
                    };
                    let p_f = x[s + 9];
                    let out = vsm_pid_supplement(omega_g, p_f, &st, fc);
                    dx[s + 7] = out.d_state.d_filt;
                    dx[s + 8] = out.d_state.integral;
                    dx[s + 9] = (p_g - refs.p_ref - p_f) / c.p_f_filter_t;
                    integrators.push(s + 8);
                    (out.power, p_f, fc.error(omega_g, p_f))
                }
                _ => (0.0, f64::NAN, f64::NAN),
            };
            let omega_ref = match vp.freq_ref {
                FrequencyReference::Pll => omega_g,
                FrequencyReference::Nominal => c.omega_ref,
            };
            let sw = vsm_swing_step(refs.p_ref + supp, p_g, omega_ref, &vs, &vp);
            dx[s] = sw.d_omega;
            dx[s + 1] = sw.d_theta;
            dx[s + 2] = vc.d_v_int;
            dx[s + 3] = vc.d_q_filt;
            dx[s + 4] = el.d_v0.re;
            dx[s + 5] = el.d_v0.im;
            dx[s + 6] = sw.d_x_d;
            alg_extra = (sw.p_r_star, vc.v_e_hat, p_f, eps);
            Dq::from_local(el.i_local)
        } else {
            let v_dq = Dq::from_network(v_c, frame);
            let vmag = v_dq.norm();
            // Reactive loop.
            let q_err = refs.q_ref - q_g;
            let q_int = x[s + 1];
            dx[s + 1] = c.reactive.k_i * q_err;
            integrators.push(s + 1);
            if vmag <= crate::control::MIN_CONTROL_VOLTAGE {
                return Err(crate::control::ControlError::LowVoltageDivision(vmag).into());
            }
            let i_q_ref = (refs.q_ref + c.reactive.k_p * q_err + q_int) / vmag;
            let i_d_ref = match c.scheme {
                Scheme::Cpc => {
                    let err = refs.p_ref - p_g;
                    dx[s] = c.cpc.k_i * err;
                    integrators.push(s);
                    c.cpc.k_p * err + x[s]
                }
                _ => {
                    let fc = c.freq.as_ref().expect("vsg");
                    let pid = c.scheme == Scheme::VsgPid;
                    let p_f = if pid { x[s + 3] } else { 0.0 };
                    let e = if pid {
                        fc.error(omega_g, p_f)
                    } else {
                        fc.omega_ref - omega_g
                    };
                    let st = FrequencyControllerState {
                        d_filt: x[s],
                        integral: if pid { x[s + 2] } else { 0.0 },
                    };
                    let (d_filt, d_int) = fc.derivatives(e, &st);
                    dx[s] = d_filt;
                    if pid {
                        dx[s + 2] = d_int;
                        dx[s + 3] = (p_g - refs.p_ref - p_f) / c.p_f_filter_t;
                        integrators.push(s + 2);
                        alg_extra.2 = p_f;
                        alg_extra.3 = e;
                    }
                    current_reference(refs.p_ref + fc.output(e, &st), q_g, v_dq)?
                }
            };
            Dq::new(i_d_ref, i_q_ref)
        };

        let (di, saturated) = current_injection_derivative(i_conv, i_ref, c.lag_t, c.limit);
        dx[o.conv] = di.d;
        dx[o.conv + 1] = di.q;
        if saturated {
            for k in integrators {
                dx[k] = 0.0;
            }
        }

        Ok(Algebraics {
            voltages: v,
            p_g,
            q_g,
            omega_g,
            omega_coi: weighted / inertia,
            sg_power,
            p_m: turbine_power(h.q_p, h.g),
            p_r_star: alg_extra.0,
            v_e_hat: alg_extra.1,
            p_f: alg_extra.2,
            eps: alg_extra.3,
            saturated,
            pll_tracking: pll_out.tracking,
        })
    }

    /// Algebraic quantities only.
    pub fn algebraics(&self, x: &[f64]) -> Result<Algebraics, SystemError> {
        let mut dx = vec![0.0; x.len()];
        self.evaluate(x, &mut dx)
    }

    /// Total load power drawn at the current network state, system base.
    pub fn load_power(&self, alg: &Algebraics) -> Phasor {
        load_power(&self.network, &alg.voltages)
    }

    /// Σ generation − Σ load − Σ branch losses, system base.
    pub fn power_balance(&self, x: &[f64], alg: &Algebraics) -> Phasor {
        let v = &alg.voltages;
        let mut gen = v[self.vshp_bus] * (self.converter_current(x) * self.s_ratio).conj();
        for (k, m) in self.cfg.machines.iter().enumerate() {
            let st = MachineState::from_slice(&x[k * SG_STATES..]);
            let vb = v[self.machine_bus[k]];
            let i =
                (norton_current(m, &st) - vb * m.source_impedance().inv()) * self.machine_scale[k];
            gen += vb * i.conj();
        }
        gen - load_power(&self.network, v) - crate::network::branch_losses(&self.network, v)
    }

    /// Names of the signals recorded by [`SystemModel::signal_values`].
    pub fn signal_names(&self) -> Vec<String> {
        let mut names: Vec<String> = [
            "f",
            "omega_coi",
            "omega_g",
            "p_g",
            "p_ref",
            "q_g",
            "v_g",
            "i_d",
            "i_q",
            "omega_t",
            "p_m",
            "g",
            "q_t",
            "q_p",
            "h_st",
            "p_load",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for k in 0..self.cfg.machines.len() {
            names.push(format!("omega_sg{}", k + 1));
        }
        if self.control.vsm.is_some() {
            names.extend(["omega_vsm", "theta_vsm", "v_e_hat", "p_r_star"].map(String::from));
        }
        if matches!(self.control.scheme, Scheme::VsgPid | Scheme::VsmPid) {
            names.extend(["p_f", "eps"].map(String::from));
        }
        names
    }

    pub fn signal_values(&self, x: &[f64], alg: &Algebraics) -> Vec<f64> {
        let o = self.offsets;
        let h = HydraulicState::from_slice(&x[o.hydro..o.hydro + 7]);
        let mut out = vec![
            self.cfg.f_nominal * alg.omega_coi,
            alg.omega_coi,
            alg.omega_g,
            alg.p_g,
            self.refs.p_ref,
            alg.q_g,
            alg.voltages[self.vshp_bus].norm(),
            x[o.conv],
            x[o.conv + 1],
            h.omega_t,
            alg.p_m,
            h.g,
            h.q_t,
            h.q_p,
            h.h_st,
            self.load_power(alg).re,
        ];
        for k in 0..self.cfg.machines.len() {
            out.push(1.0 + x[k * SG_STATES + 1]);
        }
        if self.control.vsm.is_some() {
            out.extend([x[o.scheme], x[o.scheme + 1], alg.v_e_hat, alg.p_r_star]);
        }
        if matches!(self.control.scheme, Scheme::VsgPid | Scheme::VsmPid) {
            out.extend([alg.p_f, alg.eps]);
        }
        out
    }
}

impl DynamicSystem for SystemModel {
    fn dim(&self) -> usize {
        self.registry.len()
    }

    fn derivatives(&self, x: &[f64], dx: &mut [f64]) -> Result<(), SystemError> {
        self.evaluate(x, dx).map(|_| ())
    }

    fn project(&self, x: &mut [f64]) {
        let g = self.offsets.hydro + 3;
        x[g] = x[g].clamp(0.0, 1.0);
    }

    fn active_limits(&self, x: &[f64]) -> Vec<String> {
        let o = self.offsets;
        let mut out = Vec::new();
        let h = HydraulicState::from_slice(&x[o.hydro..o.hydro + 7]);
        if h.g <= 0.0 || h.g >= 1.0 {
            out.push(format!("guide vane at position limit (g = {})", h.g));
        }
        let hp = &self.cfg.hydraulic;
        if ((h.g_servo - h.g) / hp.t_g).abs() >= hp.g_rate {
            out.push("guide-vane servo rate limit".to_string());
        }
        if let Ok(alg) = self.algebraics(x) {
            if alg.saturated {
                out.push("converter current limit".to_string());
            }
            if !alg.pll_tracking {
                out.push("PLL frozen at low voltage".to_string());
            }
        }
        out
    }

    fn state_name(&self, k: usize) -> String {
        self.registry.label(k)
    }
}
