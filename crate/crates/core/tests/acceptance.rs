//! Acceptance checks for the simulator. Runs as a plain binary so each
//! criterion prints exactly one PASS/FAIL line; exits nonzero on any FAIL.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use vshp_core::control::{current_reference, dq_power, quadrature_current, Dq};
use vshp_core::smallsignal::{
    analyze, classify_and_compare, eigen_decompose, ComparisonTable, LinearModel, ModeClass,
    ModeReport,
};
use vshp_core::system::{assemble_system, find_equilibrium, TrapezoidalIntegrator};
use vshp_core::{run_scenario, ControllerParams, Scenario, Scheme, SystemConfig, TimeSeries};

const EVENT_BUS: u32 = 7;
const EVENT_TIME: f64 = 1.0;
const EVENT_DURATION: f64 = 120.0;

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Bus 7 load halved at t = 1 s, run for 120 s.
fn load_loss(scheme: Scheme) -> TimeSeries {
    let cfg = SystemConfig::two_area(scheme);
    let mut sc = Scenario::load_step(EVENT_BUS, EVENT_TIME, 0.5, EVENT_DURATION);
    sc.sample_period = 0.01;
    run_scenario(&cfg, &sc).unwrap_or_else(|e| panic!("{scheme}: {e}"))
}

fn last(ts: &TimeSeries, name: &str) -> f64 {
    ts.final_value(name)
        .unwrap_or_else(|| panic!("no signal {name}"))
}

fn max_freq_deviation(ts: &TimeSeries) -> f64 {
    let f = ts.column("f").unwrap();
    f.iter().map(|x| (x - f[0]).abs()).fold(0.0, f64::max)
}

struct Fixture {
    runs: BTreeMap<Scheme, TimeSeries>,
    linear: BTreeMap<Scheme, LinearModel>,
    reports: Vec<ModeReport>,
    table: Result<ComparisonTable, String>,
}

impl Fixture {
    fn build() -> Self {
        let mut runs = BTreeMap::new();
        let mut linear = BTreeMap::new();
        let mut reports = Vec::new();
        for s in Scheme::ALL {
            runs.insert(s, load_loss(s));
            let (lin, rep) =
                analyze(&SystemConfig::two_area(s)).unwrap_or_else(|e| panic!("{s}: {e}"));
            linear.insert(s, lin);
            reports.push(rep);
        }
        let table = classify_and_compare(&reports).map_err(|e| e.to_string());
        Self {
            runs,
            linear,
            reports,
            table,
        }
    }

    fn run(&self, s: Scheme) -> &TimeSeries {
        &self.runs[&s]
    }

    fn mode(&self, class: ModeClass, s: Scheme) -> Option<(f64, f64)> {
        let row = self.table.as_ref().ok()?.row(class, s.tag())?;
        Some((row.f_hz?, row.zeta?))
    }
}

fn equilibrium_hold() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    let mut parts = Vec::new();
    for s in Scheme::ALL {
        let t0 = Instant::now();
        let ts = run_scenario(
            &SystemConfig::two_area(s),
            &Scenario {
                duration: 60.0,
                dt: 1e-3,
                sample_period: 1.0,
                signals: vec!["f".into()],
                ..Default::default()
            },
        );
        let secs = t0.elapsed().as_secs_f64();
        match ts {
            Ok(ts) => {
                worst = worst.max(ts.max_state_drift);
                slowest = slowest.max(secs);
                parts.push(format!("{s} {:.1e}/{secs:.1}s", ts.max_state_drift));
            }
            Err(e) => return outcome(false, format!("{s}: {e}")),
        }
    }
    outcome(worst < 1e-7 && slowest < 30.0, parts.join(", "))
}

fn vsm_power_return(fx: &Fixture) -> Outcome {
    let ts = fx.run(Scheme::Vsm);
    let dp = (last(ts, "p_g") - last(ts, "p_ref")).abs();
    let df = (last(ts, "f") / 50.0 - 1.0).abs();
    outcome(
        dp < 0.01 && df >= 0.001,
        format!("|p_g - p_g*| = {dp:.2e} pu, frequency offset {df:.4} pu"),
    )
}

fn vsg_droop(fx: &Fixture) -> Outcome {
    let ts = fx.run(Scheme::Vsg);
    let p = ts.column("p_g").unwrap();
    let dp = p[p.len() - 1] - p[0];
    let dw = 1.0 - last(ts, "omega_g");
    let expected = ControllerParams::default().k_vsg_p * dw;
    let err = (dp - expected).abs() / expected.abs();
    outcome(
        err < 0.02,
        format!(
            "dp_g = {dp:.5}, k_p*dw_g = {expected:.5}, error {:.2}%",
            100.0 * err
        ),
    )
}

fn integral_droop(fx: &Fixture) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for s in [Scheme::VsgPid, Scheme::VsmPid] {
        let e = last(fx.run(s), "eps").abs();
        worst = worst.max(e);
        parts.push(format!("{s} |eps| = {e:.2e}"));
    }
    outcome(worst < 1e-5, parts.join(", "))
}

fn containment_ordering(fx: &Fixture) -> Outcome {
    let d = |s| max_freq_deviation(fx.run(s));
    let (vsg, cpc, vsm) = (d(Scheme::Vsg), d(Scheme::Cpc), d(Scheme::Vsm));
    outcome(
        vsg < cpc && vsg <= vsm,
        format!("max|df| VSG {vsg:.4} Hz, CPC {cpc:.4} Hz, VSM {vsm:.4} Hz"),
    )
}

fn interarea_ordering(fx: &Fixture) -> Outcome {
    if let Err(e) = &fx.table {
        return outcome(false, e.clone());
    }
    match (
        fx.mode(ModeClass::Interarea, Scheme::Cpc),
        fx.mode(ModeClass::Interarea, Scheme::Vsg),
    ) {
        (Some((f_c, z_c)), Some((f_v, z_v))) => outcome(
            z_v >= 1.5 * z_c && f_v < f_c,
            format!(
                "CPC {f_c:.4} Hz zeta {z_c:.4}; VSG {f_v:.4} Hz zeta {z_v:.4}; ratio {:.2}",
                z_v / z_c
            ),
        ),
        _ => outcome(false, "interarea mode missing"),
    }
}

fn local_insensitivity(fx: &Fixture) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for class in [ModeClass::LocalArea1, ModeClass::LocalArea2] {
        let Some((f0, z0)) = fx.mode(class, Scheme::Cpc) else {
            return outcome(false, format!("{class} missing for CPC"));
        };
        let mut spread: f64 = 0.0;
        for s in Scheme::ALL {
            let Some((f, z)) = fx.mode(class, s) else {
                return outcome(false, format!("{class} missing for {s}"));
            };
            spread = spread.max(((f - f0) / f0).abs()).max(((z - z0) / z0).abs());
        }
        worst = worst.max(spread);
        parts.push(format!("{class} max shift {:.1}%", 100.0 * spread));
    }
    outcome(worst < 0.1, parts.join(", "))
}

fn vshp_sg1_mode(fx: &Fixture) -> Outcome {
    let mut found = Vec::new();
    let mut degenerate = Vec::new();
    for s in Scheme::ALL {
        match fx.mode(ModeClass::VshpSg1, s) {
            Some((f, z)) => found.push(format!("{s} {f:.2} Hz/{z:.2}")),
            None => degenerate.push(s.tag()),
        }
    }
    let mut detail = found.join(", ");
    if !degenerate.is_empty() {
        detail.push_str(&format!(
            "; no oscillatory mode for {}",
            degenerate.join(", ")
        ));
    }
    outcome(degenerate.is_empty(), detail)
}

fn turbine_recovery(fx: &Fixture) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for s in Scheme::ALL.into_iter().filter(|s| s.provides_droop()) {
        let d = (last(fx.run(s), "omega_t") - 1.0).abs();
        worst = worst.max(d);
        parts.push(format!("{s} {d:.4}"));
    }
    outcome(
        worst < 0.01,
        format!("|omega_t - 1| at 120 s: {}", parts.join(", ")),
    )
}

/// End state of a 2 s run of the default configuration with the Bus 7
/// event at 1 s. The default controller keeps the trajectory smooth; VSG
/// drives the converter into its current limit here, which costs an order.
fn end_state(dt: f64) -> Vec<f64> {
    let sc = Scenario {
        dt,
        sample_period: 0.5,
        signals: vec!["f".into()],
        ..Scenario::load_step(EVENT_BUS, EVENT_TIME, 0.5, 2.0)
    };
    run_scenario(&SystemConfig::default(), &sc)
        .unwrap()
        .final_state
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn convergence_ratio() -> f64 {
    let reference = end_state(1.25e-4);
    let coarse = max_diff(&end_state(2e-3), &reference);
    let fine = max_diff(&end_state(1e-3), &reference);
    coarse / fine
}

/// Largest gap between the nonlinear and linear responses to a 1e-4 kick
/// of each listed state, over 5 s.
fn linear_agreement(scheme: Scheme, lin: &LinearModel) -> f64 {
    let model = assemble_system(&SystemConfig::two_area(scheme)).unwrap();
    let eq = find_equilibrium(&model, model.initial_state()).unwrap();
    let dt = 1e-3;
    let stride = 10;
    let n = 5000;
    let mut worst: f64 = 0.0;
    for label in [
        "sg1.d_omega",
        "sg3.delta",
        "hydro.omega_t",
        "pll.theta",
        "conv.i_d",
    ] {
        let k = model.index(label).unwrap();
        let mut dx0 = vec![0.0; eq.x.len()];
        dx0[k] = 1e-4;
        let lin_traj = lin.propagate(&dx0, dt * stride as f64, n / stride);
        let mut x: Vec<f64> = eq.x.iter().zip(&dx0).map(|(a, b)| a + b).collect();
        let mut integ = TrapezoidalIntegrator::new();
        for step in 1..=n {
            x = integ.step(&model, &x, (step - 1) as f64 * dt, dt).unwrap();
            if step % stride == 0 {
                let dev: Vec<f64> = x.iter().zip(&eq.x).map(|(a, b)| a - b).collect();
                worst = worst.max(max_diff(&dev, &lin_traj[step / stride]));
            }
        }
    }
    worst
}

fn eigen_residual(a: &DMatrix<f64>) -> f64 {
    let e = eigen_decompose(a).unwrap();
    let ac = a.map(|v| Complex64::new(v, 0.0));
    let scale = a.abs().row_sum().max().max(1.0);
    (0..a.nrows())
        .map(|k| {
            let v = e.right.column(k);
            (&ac * v - v * e.values[k]).camax() / scale
        })
        .fold(0.0, f64::max)
}

fn inversion_round_trip() -> f64 {
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let v = Dq::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
        if v.norm() <= 0.2 {
            continue;
        }
        let (p, q) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let i = Dq::new(
            current_reference(p, q, v).unwrap(),
            quadrature_current(p, q, v).unwrap(),
        );
        let (p2, q2) = dq_power(v, i);
        worst = worst.max((p2 - p).abs()).max((q2 - q).abs());
    }
    worst
}

fn numerical_kernels(fx: &Fixture) -> Outcome {
    let ratio = convergence_ratio();
    let agreement = [Scheme::Cpc, Scheme::Vsg, Scheme::Vsm]
        .into_iter()
        .map(|s| linear_agreement(s, &fx.linear[&s]))
        .fold(0.0, f64::max);
    let residual = fx
        .linear
        .values()
        .map(|l| eigen_residual(&l.a))
        .fold(0.0, f64::max);
    let round_trip = inversion_round_trip();
    outcome(
        (3.2..=4.8).contains(&ratio) && agreement < 1e-3 && residual < 1e-8 && round_trip < 1e-12,
        format!(
            "halving ratio {ratio:.3}, linear gap {agreement:.2e}, eigen residual {residual:.2e}, inversion {round_trip:.1e}"
        ),
    )
}

fn parameter_table() -> Outcome {
    let p = ControllerParams::default();
    let table = [
        ("k_pp", p.k_pp, 0.045),
        ("k_pi", p.k_pi, 0.023),
        ("k_vsg_p", p.k_vsg_p, 100.0),
        ("k_vsg_d", p.k_vsg_d, 33.6),
        ("w_vsg", p.w_vsg, 0.01),
        ("k_vsg_pid_p", p.k_vsg_pid_p, 100.0),
        ("k_vsg_pid_i", p.k_vsg_pid_i, 286.0),
        ("k_vsg_pid_d", p.k_vsg_pid_d, 33.6),
        ("w_vsg_pid", p.w_vsg_pid, 0.01),
        ("k_pv", p.k_pv, 0.29),
        ("k_iv", p.k_iv, 92.0),
        ("k_ffe", p.k_ffe, 0.0),
        ("w_qf", p.w_qf, 200.0),
        ("k_q", p.k_q, 0.1),
        ("w_vf", p.w_vf, 200.0),
        ("l_s", p.l_s, 0.25),
        ("r_s", p.r_s, 0.01),
        ("k_omega", p.k_omega, 20.0),
        ("t_a", p.t_a, 4.0),
        ("k_d", p.k_d, 40.0),
        ("w_d", p.w_d, 5.0),
        ("w_b", p.w_b, 50.0),
        ("k_ad", p.k_ad, 0.3),
        ("w_ad", p.w_ad, 50.0),
        ("k_vsm_pd_p", p.k_vsm_pd_p, 100.0),
        ("k_vsm_pd_d", p.k_vsm_pd_d, 500.0),
        ("w_vsm_pd", p.w_vsm_pd, 1.0),
        ("k_omega_vsm_pd", p.k_omega_vsm_pd, 200.0),
        ("k_vsm_pid_p", p.k_vsm_pid_p, 3000.0),
        ("k_vsm_pid_i", p.k_vsm_pid_i, 476.0),
        ("k_vsm_pid_d", p.k_vsm_pid_d, 12600.0),
        ("w_vsm_pid", p.w_vsm_pid, 1.0),
        ("k_omega_vsm_pid", p.k_omega_vsm_pid, 2000.0),
        ("r_d", p.r_d, 0.01),
        ("pll_filter_t", p.pll_filter_t, 0.001),
    ];
    let wrong: Vec<String> = table
        .iter()
        .filter(|(_, got, want)| got != want)
        .map(|(name, got, want)| format!("{name} = {got} (expected {want})"))
        .collect();
    if wrong.is_empty() {
        outcome(true, format!("{} parameters match", table.len()))
    } else {
        outcome(false, wrong.join(", "))
    }
}

fn main() {
    let t0 = Instant::now();
    let fx = Fixture::build();
    let unstable: Vec<&str> = fx
        .reports
        .iter()
        .filter(|r| !r.is_stable())
        .map(|r| r.controller.as_str())
        .collect();
    if !unstable.is_empty() {
        println!("note: unstable linearization for {}", unstable.join(", "));
    }
    if let Ok(t) = &fx.table {
        print!("{}", t.to_text());
    }
    let checks: Vec<(&str, Check)> = vec![
        ("equilibrium hold", Box::new(equilibrium_hold)),
        ("VSM power return", Box::new(|| vsm_power_return(&fx))),
        ("VSG droop", Box::new(|| vsg_droop(&fx))),
        ("integral droop identity", Box::new(|| integral_droop(&fx))),
        (
            "frequency containment ordering",
            Box::new(|| containment_ordering(&fx)),
        ),
        (
            "interarea mode ordering",
            Box::new(|| interarea_ordering(&fx)),
        ),
        (
            "local mode insensitivity",
            Box::new(|| local_insensitivity(&fx)),
        ),
        ("VSHP-SG1 mode", Box::new(|| vshp_sg1_mode(&fx))),
        ("turbine speed recovery", Box::new(|| turbine_recovery(&fx))),
        ("numerical kernels", Box::new(|| numerical_kernels(&fx))),
        ("parameter table defaults", Box::new(parameter_table)),
    ];
    let mut failed = 0;
    for (k, (name, check)) in checks.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} ({})",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            o.detail
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1} s",
        checks.len() - failed,
        t0.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
