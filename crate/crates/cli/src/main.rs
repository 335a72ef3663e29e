use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use vshp_cli::{parse_config, parse_config_str, Job, Overrides, SchemaError};
use vshp_core::Scheme;

#[derive(Parser)]
#[command(
    name = "vshp",
    version,
    about = "Variable-speed hydropower plant with virtual inertia control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time-domain run; writes a CSV time series and a manifest.
    Simulate(RunArgs),
    /// Linearize at equilibrium; writes the mode report.
    Eigen(RunArgs),
    /// Mode comparison across controllers (all six unless --controller is given).
    Compare(RunArgs),
    /// Write ready-made configuration files for the standard experiments.
    SeedScenarios {
        #[arg(long, env = "VSHP_OUT_DIR", default_value = "scenarios")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory. Defaults to the config's output.dir.
    #[arg(long, env = "VSHP_OUT_DIR")]
    out: Option<PathBuf>,
    /// Controller tag (CPC, VSG, VSG-PID, VSM, VSM-PD, VSM-PID). Repeatable for compare.
    #[arg(long = "controller")]
    controllers: Vec<Scheme>,
    /// Integration step override, s.
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    /// Duration override, s.
    #[arg(long, allow_negative_numbers = true)]
    duration: Option<f64>,
}

impl RunArgs {
    fn job(&self) -> Result<Job, SchemaError> {
        let (cfg, prov) = match &self.config {
            Some(p) => parse_config(p)?,
            None => parse_config_str("", "defaults")?,
        };
        Job::new(
            cfg,
            prov,
            &Overrides {
                controllers: self.controllers.clone(),
                dt: self.dt,
                duration: self.duration,
                out: self.out.clone(),
            },
        )
    }
}

fn run(cli: Cli) -> Result<()> {
    let written = match cli.command {
        Command::Simulate(a) => vshp_cli::simulate(&a.job()?)?,
        Command::Eigen(a) => vshp_cli::eigen(&a.job()?)?,
        Command::Compare(a) => vshp_cli::compare(&a.job()?, &a.controllers)?,
        Command::SeedScenarios { out } => {
            let mut written = Vec::new();
            for (name, text) in vshp_cli::seed_scenarios() {
                let path = out.join(name);
                vshp_cli::write_atomic(&path, text.as_bytes())?;
                written.push(path);
            }
            written
        }
    };
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<SchemaError>() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
