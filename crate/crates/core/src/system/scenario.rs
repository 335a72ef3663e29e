use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;

use super::{
    assemble_system, find_equilibrium, DynamicSystem, SystemConfig, SystemError,
    TrapezoidalIntegrator,
};
use crate::network::LoadEvent;

/// Time horizon, step, sampling and events of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    /// s
    pub duration: f64,
    /// Integration step, s.
    pub dt: f64,
    /// Output sampling period, s. Rounded to a whole number of steps.
    pub sample_period: f64,
    pub events: Vec<LoadEvent>,
    /// Signals to record; empty records all.
    pub signals: Vec<String>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            duration: 30.0,
            dt: 1e-3,
            sample_period: 1e-2,
            events: Vec::new(),
            signals: Vec::new(),
        }
    }
}

impl Scenario {
    /// A single load reduction at `bus`, leaving `retained` of the load.
    pub fn load_step(bus: u32, time: f64, retained: f64, duration: f64) -> Self {
        Self {
            duration,
            events: vec![LoadEvent {
                bus,
                time,
                retained,
            }],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.dt > 0.0) {
            errs.push(format!("scenario.dt must be > 0 (got {})", self.dt));
        }
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            errs.push(format!(
                "scenario.duration must be >= 0 (got {})",
                self.duration
            ));
        }
        if !(self.sample_period >= self.dt) {
            errs.push(format!(
                "scenario.sample_period ({}) must be >= dt ({})",
                self.sample_period, self.dt
            ));
        }
        for e in &self.events {
            if !(e.time >= 0.0 && e.time <= self.duration) {
                errs.push(format!(
                    "event at bus {}: time {} outside [0, {}]",
                    e.bus, e.time, self.duration
                ));
            }
        }
        errs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesMeta {
    pub scenario_hash: String,
    pub controller: String,
    pub dt: f64,
}

/// Sampled signals of one run plus end-of-run diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub meta: TimeSeriesMeta,
    pub time: Vec<f64>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub state_labels: Vec<String>,
    pub initial_state: Vec<f64>,
    pub final_state: Vec<f64>,
    /// Largest |x(t) − x(0)| over all states and steps.
    pub max_state_drift: f64,
    /// Largest power-balance mismatch over the samples, system base.
    pub max_power_mismatch: f64,
}

impl TimeSeries {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.columns[k].as_slice())
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn final_value(&self, name: &str) -> Option<f64> {
        self.column(name).and_then(|c| c.last().copied())
    }

    pub fn state(&self, label: &str) -> Option<f64> {
        self.state_labels
            .iter()
            .position(|l| l == label)
            .map(|k| self.final_state[k])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# scenario_hash: {}", self.meta.scenario_hash);
        let _ = writeln!(out, "# controller: {}", self.meta.controller);
        let _ = writeln!(out, "# dt: {}", self.meta.dt);
        out.push('t');
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (r, t) in self.time.iter().enumerate() {
            let _ = write!(out, "{t}");
            for c in &self.columns {
                let _ = write!(out, ",{}", c[r]);
            }
            out.push('\n');
        }
        out
    }
}

/// SHA-256 over the full configuration and scenario.
pub fn scenario_hash(cfg: &SystemConfig, sc: &Scenario) -> String {
    let mut h = Sha256::new();
    h.update(format!("{cfg:?}").as_bytes());
    h.update(format!("{sc:?}").as_bytes());
    hex::encode(h.finalize())
}

/// Assemble, settle at equilibrium, then integrate through the events.
/// Events take effect at the first step boundary at or after their time;
/// the sample at that boundary is taken after the change.
pub fn run_scenario(cfg: &SystemConfig, sc: &Scenario) -> Result<TimeSeries, SystemError> {
    let errs = sc.validate();
    if !errs.is_empty() {
        return Err(SystemError::ConfigInvalid(errs));
    }
    let mut model = assemble_system(cfg)?;
    model.validate_events(&sc.events)?;

    let all = model.signal_names();
    let picks: Vec<usize> = if sc.signals.is_empty() {
        (0..all.len()).collect()
    } else {
        let mut picks = Vec::new();
        let mut unknown = Vec::new();
        for s in &sc.signals {
            match all.iter().position(|n| n == s) {
                Some(k) => picks.push(k),
                None => unknown.push(format!("unknown signal `{s}`")),
            }
        }
        if !unknown.is_empty() {
            return Err(SystemError::ConfigInvalid(unknown));
        }
        picks
    };

    let eq = find_equilibrium(&model, model.initial_state())?;
    let x_init = eq.x;
    let mut x = x_init.clone();

    let n_steps = (sc.duration / sc.dt).round() as usize;
    let stride = ((sc.sample_period / sc.dt).round() as usize).max(1);
    let mut events: Vec<(usize, LoadEvent)> = sc
        .events
        .iter()
        .map(|e| (((e.time / sc.dt) - 1e-9).ceil().max(0.0) as usize, *e))
        .collect();
    events.sort_by_key(|(k, _)| *k);

    let mut series = TimeSeries {
        meta: TimeSeriesMeta {
            scenario_hash: scenario_hash(cfg, sc),
            controller: cfg.controller.scheme.tag().to_string(),
            dt: sc.dt,
        },
        time: Vec::new(),
        names: picks.iter().map(|&k| all[k].clone()).collect(),
        columns: vec![Vec::new(); picks.len()],
        state_labels: model.registry().labels().collect(),
        initial_state: x_init.clone(),
        final_state: Vec::new(),
        max_state_drift: 0.0,
        max_power_mismatch: 0.0,
    };

    let mut integ = TrapezoidalIntegrator::new();
    let mut next_event = 0;
    for k in 0..=n_steps {
        let t = k as f64 * sc.dt;
        while next_event < events.len() && events[next_event].0 <= k {
            model.apply_event(&events[next_event].1)?;
            integ.invalidate();
            next_event += 1;
        }
        if k % stride == 0 {
            let alg = model.algebraics(&x)?;
            let values = model.signal_values(&x, &alg);
            series.time.push(t);
            for (col, &p) in series.columns.iter_mut().zip(&picks) {
                col.push(values[p]);
            }
            series.max_power_mismatch = series
                .max_power_mismatch
                .max(model.power_balance(&x, &alg).norm());
        }
        if k == n_steps {
            break;
        }
        x = integ.step(&model, &x, t, sc.dt)?;
        let drift = x
            .iter()
            .zip(&x_init)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        series.max_state_drift = series.max_state_drift.max(drift);
    }
    debug_assert_eq!(model.dim(), x.len());
    series.final_state = x;
    Ok(series)
}
