//! Run configuration: a TOML file with `network`, `hydraulic`,
//! `controller`, `scenario` and `output` sections. Every key is optional;
//! missing keys take the built-in defaults and unknown keys are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use vshp_core::network::{two_area, Branch, Bus, GeneratorDispatch, MachineParams};
use vshp_core::system::VshpConfig;
use vshp_core::{
    ControllerConfig, ControllerParams, HydraulicParams, LoadEvent, Scenario, Scheme, SystemConfig,
};

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Syntax { origin: String, message: String },
    #[error("{origin}: {}", .problems.join("; "))]
    Invalid {
        origin: String,
        problems: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub base_mva: f64,
    pub f_nominal: f64,
    pub calibrate_loads: bool,
    pub vshp: VshpConfig,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub machines: Vec<MachineParams>,
    pub generators: Vec<GeneratorDispatch>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let c = SystemConfig::two_area(Scheme::Cpc);
        Self {
            base_mva: c.base_mva,
            f_nominal: c.f_nominal,
            calibrate_loads: c.calibrate_loads,
            vshp: c.vshp,
            buses: c.buses,
            branches: c.branches,
            machines: c.machines,
            generators: c.generators,
        }
    }
}

/// Scheme tag plus every controller parameter at the same level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllerSection {
    pub scheme: Scheme,
    #[serde(flatten)]
    pub params: ControllerParams,
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self {
            scheme: Scheme::Vsg,
            params: ControllerParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub duration: f64,
    pub dt: f64,
    pub sample_period: f64,
    pub events: Vec<LoadEvent>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let s = Scenario::default();
        Self {
            duration: s.duration,
            dt: s.dt,
            sample_period: s.sample_period,
            events: s.events,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Used when neither `--out` nor the environment names a directory.
    pub dir: PathBuf,
    pub formats: Vec<Format>,
    /// Recorded signals; empty records all.
    pub signals: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json, Format::Text],
            signals: Vec::new(),
        }
    }
}

impl OutputSection {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunConfig {
    pub network: NetworkSection,
    pub hydraulic: HydraulicParams,
    pub controller: ControllerSection,
    pub scenario: ScenarioSection,
    pub output: OutputSection,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    network: NetworkSection,
    #[serde(default)]
    hydraulic: HydraulicParams,
    #[serde(default)]
    controller: toml::Table,
    #[serde(default)]
    scenario: ScenarioSection,
    #[serde(default)]
    output: OutputSection,
}

/// Whether each leaf key came from the file or from the defaults.
pub type Provenance = BTreeMap<String, &'static str>;

impl RunConfig {
    pub fn system(&self) -> SystemConfig {
        let n = &self.network;
        SystemConfig {
            base_mva: n.base_mva,
            f_nominal: n.f_nominal,
            buses: n.buses.clone(),
            branches: n.branches.clone(),
            machines: n.machines.clone(),
            generators: n.generators.clone(),
            vshp: n.vshp.clone(),
            calibrate_loads: n.calibrate_loads,
            hydraulic: self.hydraulic.clone(),
            controller: ControllerConfig {
                scheme: self.controller.scheme,
                params: self.controller.params.clone(),
            },
        }
    }

    pub fn scenario(&self) -> Scenario {
        let s = &self.scenario;
        Scenario {
            duration: s.duration,
            dt: s.dt,
            sample_period: s.sample_period,
            events: s.events.clone(),
            signals: self.output.signals.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Problems that make the configuration unusable, keyed by dotted path.
    fn problems(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for msg in self.scenario().validate() {
            out.push((scenario_key(&msg), msg));
        }
        if let Err(e) = self.controller.params.validate() {
            out.push(("controller".into(), e.to_string()));
        }
        if let Err(e) = self.hydraulic.validate() {
            out.push(("hydraulic".into(), e.to_string()));
        }
        if self.network.base_mva.is_nan() || self.network.base_mva <= 0.0 {
            out.push((
                "network.base_mva".into(),
                format!("must be > 0 (got {})", self.network.base_mva),
            ));
        }
        if self.network.f_nominal.is_nan() || self.network.f_nominal <= 0.0 {
            out.push((
                "network.f_nominal".into(),
                format!("must be > 0 (got {})", self.network.f_nominal),
            ));
        }
        if self.network.buses.len() != two_area::buses().len() {
            out.push((
                "network.buses".into(),
                format!(
                    "the plant model expects the {}-bus layout",
                    two_area::buses().len()
                ),
            ));
        }
        if self.output.formats.is_empty() {
            out.push((
                "output.formats".into(),
                "at least one format is required".into(),
            ));
        }
        out
    }
}

fn scenario_key(msg: &str) -> String {
    let key = msg
        .strip_prefix("scenario.")
        .and_then(|m| m.split_whitespace().next());
    match key {
        Some(k) => format!("scenario.{k}"),
        None => "scenario.events".into(),
    }
}

/// 1-based line of `key` inside the `[section]` table, if it appears.
fn line_of(text: &str, dotted: &str) -> Option<usize> {
    let (section, key) = dotted.rsplit_once('.')?;
    let header = format!("[{section}]");
    let mut inside = false;
    for (n, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            inside = t == header;
        } else if inside && t.split(['=', ' ']).next() == Some(key) {
            return Some(n + 1);
        }
    }
    None
}

fn leaf_keys(value: &toml::Value, prefix: &str, out: &mut Vec<String>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let p = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                leaf_keys(v, &p, out);
            }
        }
        _ => out.push(prefix.to_string()),
    }
}

/// Parse and validate configuration text. `origin` names the source in
/// diagnostics.
pub fn parse_config_str(text: &str, origin: &str) -> Result<(RunConfig, Provenance), SchemaError> {
    let syntax = |message: String| SchemaError::Syntax {
        origin: origin.to_string(),
        message,
    };
    let raw: RawConfig = toml::from_str(text).map_err(|e| syntax(e.to_string()))?;
    let mut table = raw.controller;
    let scheme = match table.remove("scheme") {
        None => ControllerSection::default().scheme,
        Some(toml::Value::String(s)) => s
            .parse::<Scheme>()
            .map_err(|e| syntax(format!("controller.scheme: {e}")))?,
        Some(v) => {
            return Err(syntax(format!(
                "controller.scheme: expected a string, found {}",
                v.type_str()
            )))
        }
    };
    let params: ControllerParams = table
        .try_into()
        .map_err(|e: toml::de::Error| syntax(format!("in [controller]: {}", e.message())))?;
    let cfg = RunConfig {
        network: raw.network,
        hydraulic: raw.hydraulic,
        controller: ControllerSection { scheme, params },
        scenario: raw.scenario,
        output: raw.output,
    };
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(SchemaError::Invalid {
            origin: origin.to_string(),
            problems: problems
                .into_iter()
                .map(|(key, msg)| match line_of(text, &key) {
                    Some(line) => format!("line {line}, `{key}`: {msg}"),
                    None => format!("`{key}`: {msg}"),
                })
                .collect(),
        });
    }

    let given: toml::Value = toml::from_str(text).map_err(|e| syntax(e.to_string()))?;
    let mut from_file = Vec::new();
    leaf_keys(&given, "", &mut from_file);
    let effective: toml::Value = toml::from_str(&cfg.to_toml()).expect("own output parses");
    let mut all = Vec::new();
    leaf_keys(&effective, "", &mut all);
    let provenance = all
        .into_iter()
        .map(|k| {
            let src = if from_file
                .iter()
                .any(|f| f == &k || k.starts_with(&format!("{f}.")))
            {
                "file"
            } else {
                "default"
            };
            (k, src)
        })
        .collect();
    Ok((cfg, provenance))
}

pub fn parse_config(path: &Path) -> Result<(RunConfig, Provenance), SchemaError> {
    let text = std::fs::read_to_string(path).map_err(|source| SchemaError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let (cfg, prov) = parse_config_str("", "t").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert!(prov.values().all(|&s| s == "default"));
    }

    #[test]
    fn provenance_marks_file_keys() {
        let (_, prov) = parse_config_str("[scenario]\ndt = 0.002\n", "t").unwrap();
        assert_eq!(prov["scenario.dt"], "file");
        assert_eq!(prov["scenario.duration"], "default");
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in [
            "[controller]\nk_vsg_q = 1.0\n",
            "[scenario]\ndtt = 1.0\n",
            "[extra]\n",
        ] {
            assert!(
                matches!(parse_config_str(text, "t"), Err(SchemaError::Syntax { .. })),
                "{text}"
            );
        }
    }

    #[test]
    fn bad_scheme_rejected() {
        let err = parse_config_str("[controller]\nscheme = \"PSS\"\n", "t").unwrap_err();
        assert!(err.to_string().contains("PSS"));
    }

    #[test]
    fn invalid_value_reports_line() {
        let err = parse_config_str(
            "[output]\n\n[scenario]\nduration = 5.0\ndt = -0.001\n",
            "cfg.toml",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("line 5") && msg.contains("scenario.dt"),
            "{msg}"
        );
    }
}
