use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use vshp_core::smallsignal::{analyze, classify_and_compare, ModeReport};
use vshp_core::system::scenario_hash;
use vshp_core::{run_scenario, Scheme, TimeSeries};

use crate::config::{Format, Provenance, RunConfig, SchemaError};
use crate::output::{Manifest, Outputs};

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub controllers: Vec<Scheme>,
    pub dt: Option<f64>,
    pub duration: Option<f64>,
    pub out: Option<PathBuf>,
}

/// Configuration after command-line overrides, ready to run.
pub struct Job {
    pub cfg: RunConfig,
    pub provenance: Provenance,
    pub out: PathBuf,
}

impl Job {
    pub fn new(
        mut cfg: RunConfig,
        mut provenance: Provenance,
        ov: &Overrides,
    ) -> Result<Self, SchemaError> {
        if let Some(dt) = ov.dt {
            cfg.scenario.dt = dt;
            provenance.insert("scenario.dt".into(), "command line");
        }
        if let Some(d) = ov.duration {
            cfg.scenario.duration = d;
            provenance.insert("scenario.duration".into(), "command line");
        }
        if let Some(&s) = ov.controllers.first() {
            cfg.controller.scheme = s;
            provenance.insert("controller.scheme".into(), "command line");
        }
        // Re-validate with the overrides applied.
        crate::config::parse_config_str(&cfg.to_toml(), "command line")?;
        let out = ov.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
        Ok(Self {
            cfg,
            provenance,
            out,
        })
    }

    fn manifest(&self, command: &str, runs: &[(Scheme, String)]) -> Manifest {
        Manifest {
            tool: "vshp".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            controllers: runs.iter().map(|(s, _)| s.tag().to_string()).collect(),
            scenario_hash: runs
                .iter()
                .map(|(s, h)| (s.tag().to_string(), h.clone()))
                .collect(),
            config: self.cfg.to_toml(),
            provenance: self
                .provenance
                .iter()
                .map(|(k, v)| (k.clone(), v.to_string()))
                .collect(),
            outputs: Vec::new(),
        }
    }

    fn with_scheme(&self, s: Scheme) -> RunConfig {
        let mut cfg = self.cfg.clone();
        cfg.controller.scheme = s;
        cfg
    }
}

fn hash_of(cfg: &RunConfig) -> String {
    scenario_hash(&cfg.system(), &cfg.scenario())
}

fn simulate_one(cfg: &RunConfig) -> Result<TimeSeries> {
    let s = cfg.controller.scheme;
    run_scenario(&cfg.system(), &cfg.scenario()).with_context(|| format!("simulating {s}"))
}

fn eigen_one(cfg: &RunConfig) -> Result<ModeReport> {
    let s = cfg.controller.scheme;
    analyze(&cfg.system())
        .map(|(_, r)| r)
        .with_context(|| format!("small-signal analysis of {s}"))
}

fn summary(ts: &TimeSeries) -> String {
    let mut out = format!("{}: {} samples", ts.meta.controller, ts.len());
    if let Some(f) = ts.column("f") {
        let dev = f.iter().map(|x| (x - f[0]).abs()).fold(0.0, f64::max);
        out.push_str(&format!(", max |df| {dev:.4} Hz"));
    }
    if let Some(p) = ts.final_value("p_g") {
        out.push_str(&format!(", final p_g {p:.4}"));
    }
    out
}

pub fn simulate(job: &Job) -> Result<Vec<PathBuf>> {
    let ts = simulate_one(&job.cfg)?;
    let tag = job.cfg.controller.scheme.tag();
    println!("{}", summary(&ts));
    let mut out = Outputs::new(job.out.clone());
    if job.cfg.output.wants(Format::Csv) {
        out.write(&format!("timeseries_{tag}.csv"), ts.to_csv().as_bytes())?;
    }
    out.finish(job.manifest(
        "simulate",
        &[(job.cfg.controller.scheme, ts.meta.scenario_hash.clone())],
    ))
}

pub fn eigen(job: &Job) -> Result<Vec<PathBuf>> {
    let report = eigen_one(&job.cfg)?;
    let s = job.cfg.controller.scheme;
    print!("{}", report.to_text());
    if !report.is_stable() {
        eprintln!("warning: {s} linearization has eigenvalues in the right half-plane");
    }
    let mut out = Outputs::new(job.out.clone());
    write_report(&mut out, &job.cfg, &report)?;
    out.finish(job.manifest("eigen", &[(s, hash_of(&job.cfg))]))
}

fn write_report(out: &mut Outputs, cfg: &RunConfig, report: &ModeReport) -> Result<()> {
    let tag = &report.controller;
    if cfg.output.wants(Format::Json) {
        out.write_json(&format!("modes_{tag}.json"), report)?;
    }
    if cfg.output.wants(Format::Text) {
        out.write(&format!("modes_{tag}.txt"), report.to_text().as_bytes())?;
    }
    Ok(())
}

/// Eigen analysis plus a time-domain run for each controller, in parallel,
/// then the aligned comparison of the tracked modes.
pub fn compare(job: &Job, controllers: &[Scheme]) -> Result<Vec<PathBuf>> {
    let schemes: Vec<Scheme> = if controllers.is_empty() {
        Scheme::ALL.to_vec()
    } else {
        controllers.to_vec()
    };
    let simulate = job.cfg.scenario.duration > 0.0 && job.cfg.output.wants(Format::Csv);
    let results: Vec<Result<(ModeReport, Option<TimeSeries>)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = schemes
            .iter()
            .map(|&s| {
                let cfg = job.with_scheme(s);
                scope.spawn(move || {
                    let report = eigen_one(&cfg)?;
                    let ts = if simulate {
                        Some(simulate_one(&cfg)?)
                    } else {
                        None
                    };
                    Ok((report, ts))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(anyhow!("worker panicked"))))
            .collect()
    });

    let mut out = Outputs::new(job.out.clone());
    let mut reports = Vec::new();
    let mut hashes = Vec::new();
    for (s, r) in schemes.iter().zip(results) {
        let (report, ts) = r?;
        write_report(&mut out, &job.cfg, &report)?;
        if let Some(ts) = ts {
            out.write(
                &format!("timeseries_{}.csv", s.tag()),
                ts.to_csv().as_bytes(),
            )?;
        }
        hashes.push((*s, hash_of(&job.with_scheme(*s))));
        reports.push(report);
    }
    let table = classify_and_compare(&reports).context("matching modes across controllers")?;
    print!("{}", table.to_text());
    if job.cfg.output.wants(Format::Json) {
        out.write_json("comparison.json", &table)?;
    }
    if job.cfg.output.wants(Format::Text) {
        out.write("comparison.txt", table.to_text().as_bytes())?;
    }
    out.finish(job.manifest("compare", &hashes))
}

/// Ready-made configurations for the standard experiments.
pub fn seed_scenarios() -> BTreeMap<&'static str, String> {
    let mut m = BTreeMap::new();
    m.insert(
        "bus7_step.toml",
        "# 50 % load reduction at bus 7; rerun with --controller for each scheme.\n\
         [controller]\nscheme = \"VSG\"\n\n\
         [scenario]\nduration = 120.0\ndt = 0.001\nsample_period = 0.01\n\
         events = [{ bus = 7, time = 1.0, retained = 0.5 }]\n\n\
         [output]\ndir = \"out/bus7_step\"\n\
         signals = [\"f\", \"p_g\", \"omega_g\", \"omega_t\", \"p_m\", \"g\", \"q_p\", \"h_st\"]\n"
            .to_string(),
    );
    m.insert(
        "bus7_bus9_step.toml",
        "# 50 % load reduction at bus 7 and 30 % at bus 9.\n\
         [controller]\nscheme = \"VSG\"\n\n\
         [scenario]\nduration = 120.0\ndt = 0.001\nsample_period = 0.01\n\
         events = [{ bus = 7, time = 1.0, retained = 0.5 }, { bus = 9, time = 1.0, retained = 0.7 }]\n\n\
         [output]\ndir = \"out/bus7_bus9_step\"\n\
         signals = [\"f\", \"p_g\", \"omega_g\", \"omega_t\", \"p_m\", \"g\", \"q_p\", \"h_st\"]\n"
            .to_string(),
    );
    m.insert(
        "mode_comparison.toml",
        "# Oscillation modes of all six schemes; use with `vshp compare`.\n\
         [scenario]\nduration = 0.0\n\n\
         [output]\ndir = \"out/mode_comparison\"\nformats = [\"json\", \"text\"]\n"
            .to_string(),
    );
    m
}
