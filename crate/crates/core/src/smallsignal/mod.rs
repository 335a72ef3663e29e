//! Linearization at equilibrium, eigen-decomposition, participation factors,
//! oscillation-mode classification and cross-controller comparison.

mod compare;
mod eigen;

pub use compare::{classify_and_compare, ComparisonRow, ComparisonTable, TRACKED_MODES};
pub use eigen::{eigen_decompose, EigenDecomposition};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

use crate::system::{assemble_system, find_equilibrium, DynamicSystem, SystemConfig, SystemError};

/// Residual above which a point is not treated as an equilibrium.
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmallSignalError {
    #[error("not an equilibrium: residual {residual:.3e} in `{state}`")]
    NonEquilibriumPoint { state: String, residual: f64 },
    #[error("limits active at the operating point: {}", .0.join(", "))]
    ActiveLimits(Vec<String>),
    #[error("eigen-decomposition failed: {0}")]
    EigenFailed(String),
    #[error("mode `{mode}` for {controller}: candidates at {first:.4} Hz and {second:.4} Hz are indistinguishable")]
    ModeMatchAmbiguous {
        mode: String,
        controller: String,
        first: f64,
        second: f64,
    },
    #[error(transparent)]
    System(#[from] SystemError),
}

/// `dx/dt ≈ A·(x − x_eq)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub labels: Vec<String>,
    pub x_eq: Vec<f64>,
}

impl LinearModel {
    /// Linear response to an initial offset `dx0`, sampled every `dt` for
    /// `n` steps. The step map is a Taylor-series matrix exponential with
    /// scaling and squaring.
    pub fn propagate(&self, dx0: &[f64], dt: f64, n: usize) -> Vec<Vec<f64>> {
        let phi = expm(&(&self.a * dt));
        let mut x = DVector::from_column_slice(dx0);
        let mut out = Vec::with_capacity(n + 1);
        out.push(x.iter().copied().collect());
        for _ in 0..n {
            x = &phi * x;
            out.push(x.iter().copied().collect());
        }
        out
    }
}

fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let norm = m.abs().row_sum().max();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m / 2f64.powi(squarings as i32);
    let n = m.nrows();
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..=20 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Central-difference state matrix at an equilibrium.
pub fn numerical_jacobian<S: DynamicSystem + ?Sized>(
    sys: &S,
    x_eq: &[f64],
) -> Result<LinearModel, SmallSignalError> {
    let mut f = vec![0.0; x_eq.len()];
    sys.derivatives(x_eq, &mut f)?;
    let (k, r) = f
        .iter()
        .enumerate()
        .map(|(k, v)| (k, v.abs()))
        .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    if !(r < EQUILIBRIUM_TOLERANCE) {
        return Err(SmallSignalError::NonEquilibriumPoint {
            state: sys.state_name(k),
            residual: r,
        });
    }
    let limits = sys.active_limits(x_eq);
    if !limits.is_empty() {
        return Err(SmallSignalError::ActiveLimits(limits));
    }
    let a = crate::system::finite_difference_jacobian(sys, x_eq, true)?;
    Ok(LinearModel {
        a,
        labels: (0..x_eq.len()).map(|k| sys.state_name(k)).collect(),
        x_eq: x_eq.to_vec(),
    })
}

/// Assemble `cfg`, settle it at equilibrium and report its modes.
pub fn analyze(cfg: &SystemConfig) -> Result<(LinearModel, ModeReport), SmallSignalError> {
    let model = assemble_system(cfg)?;
    let eq = find_equilibrium(&model, model.initial_state())?;
    let lin = numerical_jacobian(&model, &eq.x)?;
    let report = ModeReport::from_linear_model(cfg.controller.scheme.tag(), &lin)?;
    Ok((lin, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeClass {
    Interarea,
    LocalArea1,
    LocalArea2,
    VshpSg1,
    Control,
    Real,
}

impl ModeClass {
    pub fn tag(self) -> &'static str {
        match self {
            ModeClass::Interarea => "interarea",
            ModeClass::LocalArea1 => "local-area1",
            ModeClass::LocalArea2 => "local-area2",
            ModeClass::VshpSg1 => "vshp-sg1",
            ModeClass::Control => "control",
            ModeClass::Real => "real",
        }
    }
}

impl fmt::Display for ModeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// One eigenvalue (or conjugate pair, listed once with ω ≥ 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub sigma: f64,
    pub omega: f64,
    pub f_hz: f64,
    pub zeta: f64,
    pub classification: ModeClass,
    /// Normalized participation factor per state label.
    pub participation: BTreeMap<String, f64>,
    /// Participation summed per group (sg1..sg4 mechanical, vshp).
    #[serde(skip)]
    pub groups: GroupShares,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GroupShares {
    /// Rotor angle + speed participation of each machine.
    pub machines: [f64; 4],
    /// Every converter, controller and plant state.
    pub vshp: f64,
    /// Electrical machine states (EMFs, exciters, governors).
    pub sg_electrical: f64,
}

impl GroupShares {
    fn signature(&self) -> [f64; 5] {
        let [a, b, c, d] = self.machines;
        [a, b, c, d, self.vshp]
    }
}

/// Frequency in Hz and relative damping of `λ`. A zero eigenvalue counts as
/// fully damped.
pub fn frequency_and_damping(lambda: Complex64) -> (f64, f64) {
    let mag = lambda.norm();
    let zeta = if mag == 0.0 { 1.0 } else { -lambda.re / mag };
    (lambda.im.abs() / (2.0 * std::f64::consts::PI), zeta)
}

/// Participation factors `|w_k·v_k|` normalized to sum 1.
pub fn participation_factors(right: &[Complex64], left: &[Complex64]) -> Vec<f64> {
    let raw: Vec<f64> = right
        .iter()
        .zip(left)
        .map(|(v, w)| (v * w).norm())
        .collect();
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        return raw;
    }
    raw.into_iter().map(|p| p / total).collect()
}

fn machine_of(label: &str) -> Option<usize> {
    let rest = label.strip_prefix("sg")?;
    let (num, state) = rest.split_once('.')?;
    let k: usize = num.parse().ok()?;
    (1..=4)
        .contains(&k)
        .then_some(k - 1)
        .filter(|_| !state.is_empty())
}

fn is_mechanical(label: &str) -> bool {
    label.ends_with(".delta") || label.ends_with(".d_omega")
}

/// Threshold below which an oscillation counts as a real mode, rad/s.
const OSCILLATION_FLOOR: f64 = 1e-6;
/// Minimum share of rotor participation for an electromechanical mode.
const MECHANICAL_SHARE: f64 = 0.2;
/// Minimum share of each side in an interarea or local mode.
const SIDE_SHARE: f64 = 0.15;
/// Converter-side share above which the converter dominates a mode.
const VSHP_DOMINANCE: f64 = 0.5;
/// How far SG1's rotor participation must exceed every other machine's.
const SG1_LOCALITY: f64 = 2.0;

/// Metrics and classification for eigenvalue `lambda`.
pub fn mode_metrics(
    lambda: Complex64,
    right: &[Complex64],
    left: &[Complex64],
    labels: &[String],
) -> Mode {
    let (f_hz, zeta) = frequency_and_damping(lambda);
    let part = participation_factors(right, left);
    let mut groups = GroupShares::default();
    for (label, p) in labels.iter().zip(&part) {
        match machine_of(label) {
            Some(k) if is_mechanical(label) => groups.machines[k] += p,
            Some(_) => groups.sg_electrical += p,
            None => groups.vshp += p,
        }
    }
    let classification = if lambda.im.abs() < OSCILLATION_FLOOR {
        ModeClass::Real
    } else {
        classify(&groups, right, labels)
    };
    Mode {
        sigma: lambda.re,
        omega: lambda.im.abs(),
        f_hz,
        zeta,
        classification,
        participation: labels.iter().cloned().zip(part).collect(),
        groups,
    }
}

fn classify(g: &GroupShares, right: &[Complex64], labels: &[String]) -> ModeClass {
    let mech: f64 = g.machines.iter().sum();
    let [m1, m2, m3, m4] = g.machines;
    // SG1 must stand out among the machines, and the converter side must
    // either dominate the mode or share it with SG1.
    let near_sg1 = m1 > 0.0 && m1 >= SG1_LOCALITY * m2.max(m3).max(m4);
    let total = mech + g.vshp;
    let vshp_sg1 = near_sg1
        && (g.vshp >= VSHP_DOMINANCE || (m1 > SIDE_SHARE * total && g.vshp > SIDE_SHARE * total));
    if mech < MECHANICAL_SHARE {
        return if vshp_sg1 {
            ModeClass::VshpSg1
        } else {
            ModeClass::Control
        };
    }
    // Speed components relative to their mean (the common motion of all
    // machines is not a swing), rotated so the largest is real and positive.
    let mut speed = [Complex64::new(0.0, 0.0); 4];
    for (label, v) in labels.iter().zip(right) {
        if let Some(k) = machine_of(label) {
            if label.ends_with(".d_omega") {
                speed[k] = *v;
            }
        }
    }
    let mean = speed.iter().sum::<Complex64>() / 4.0;
    for s in speed.iter_mut() {
        *s -= mean;
    }
    let reference = speed
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or_default();
    let phase = if reference.norm() > 0.0 {
        reference.conj() / reference.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let r: Vec<f64> = speed.iter().map(|s| (s * phase).re).collect();
    let (a1, a2) = (m1 + m2, m3 + m4);

    if a1 > SIDE_SHARE * mech && a2 > SIDE_SHARE * mech && (r[0] + r[1]) * (r[2] + r[3]) < 0.0 {
        return ModeClass::Interarea;
    }
    if vshp_sg1 && m2 < g.vshp {
        return ModeClass::VshpSg1;
    }
    if a1 >= a2 && m1.min(m2) > SIDE_SHARE * a1 && r[0] * r[1] < 0.0 {
        return ModeClass::LocalArea1;
    }
    if a2 > a1 && m3.min(m4) > SIDE_SHARE * a2 && r[2] * r[3] < 0.0 {
        return ModeClass::LocalArea2;
    }
    if vshp_sg1 {
        return ModeClass::VshpSg1;
    }
    ModeClass::Control
}

/// Eigenvalues and classified modes of one controller variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub controller: String,
    /// All eigenvalues as (re, im).
    pub eigenvalues: Vec<(f64, f64)>,
    /// One entry per real eigenvalue and per conjugate pair.
    pub modes: Vec<Mode>,
}

impl ModeReport {
    pub fn from_linear_model(
        controller: &str,
        lin: &LinearModel,
    ) -> Result<Self, SmallSignalError> {
        let eig = eigen_decompose(&lin.a)?;
        let mut modes = Vec::new();
        for (k, lambda) in eig.values.iter().enumerate() {
            if lambda.im < 0.0 {
                continue;
            }
            let right: Vec<Complex64> = eig.right.column(k).iter().copied().collect();
            let left: Vec<Complex64> = eig.left.column(k).iter().copied().collect();
            modes.push(mode_metrics(*lambda, &right, &left, &lin.labels));
        }
        modes.sort_by(|a, b| {
            b.omega
                .total_cmp(&a.omega)
                .then(a.sigma.total_cmp(&b.sigma))
        });
        Ok(Self {
            controller: controller.to_string(),
            eigenvalues: eig.values.iter().map(|l| (l.re, l.im)).collect(),
            modes,
        })
    }

    /// Modes carrying `class`, best candidates first.
    pub fn modes_of(&self, class: ModeClass) -> Vec<&Mode> {
        let mut v: Vec<&Mode> = self
            .modes
            .iter()
            .filter(|m| m.classification == class)
            .collect();
        v.sort_by(|a, b| class_score(b, class).total_cmp(&class_score(a, class)));
        v
    }

    pub fn is_stable(&self) -> bool {
        // The angle reference leaves one eigenvalue at the origin.
        self.eigenvalues
            .iter()
            .all(|&(re, im)| re < 1e-6 || (re.abs() < 1e-6 && im.abs() < 1e-6))
    }

    /// Plain-text table of the oscillatory modes.
    pub fn to_text(&self) -> String {
        let mut out = format!("modes for {}\n", self.controller);
        out.push_str(&format!(
            "{:<12} {:>10} {:>10} {:>9} {:>8}  {}\n",
            "class", "sigma", "omega", "f_hz", "zeta", "top participants"
        ));
        for m in self.modes.iter().filter(|m| m.omega > OSCILLATION_FLOOR) {
            let mut top: Vec<(&String, &f64)> = m.participation.iter().collect();
            top.sort_by(|a, b| b.1.total_cmp(a.1));
            let names: Vec<String> = top
                .iter()
                .take(3)
                .map(|(l, p)| format!("{l}:{p:.2}"))
                .collect();
            out.push_str(&format!(
                "{:<12} {:>10.4} {:>10.4} {:>9.4} {:>8.4}  {}\n",
                m.classification.tag(),
                m.sigma,
                m.omega,
                m.f_hz,
                m.zeta,
                names.join(" ")
            ));
        }
        out
    }
}

fn class_score(m: &Mode, class: ModeClass) -> f64 {
    let g = &m.groups;
    match class {
        ModeClass::Interarea => (g.machines[0] + g.machines[1]).min(g.machines[2] + g.machines[3]),
        ModeClass::LocalArea1 => g.machines[0].min(g.machines[1]),
        ModeClass::LocalArea2 => g.machines[2].min(g.machines[3]),
        ModeClass::VshpSg1 => g.machines[0].min(g.vshp),
        ModeClass::Control | ModeClass::Real => g.vshp,
    }
}
