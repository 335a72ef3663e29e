use serde::{Deserialize, Serialize};

use super::{Mode, ModeClass, ModeReport, SmallSignalError};

/// Electromechanical modes tracked across controllers.
pub const TRACKED_MODES: [ModeClass; 4] = [
    ModeClass::Interarea,
    ModeClass::LocalArea1,
    ModeClass::LocalArea2,
    ModeClass::VshpSg1,
];

/// Two candidates closer than this in matching distance cannot be told apart.
const AMBIGUITY_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub mode: ModeClass,
    pub controller: String,
    /// `None` when the controller has no mode of this class (for example
    /// when it has become a pair of real eigenvalues).
    pub f_hz: Option<f64>,
    pub zeta: Option<f64>,
    pub sigma: Option<f64>,
    /// Differences and ratio against the baseline controller.
    pub d_f_hz: Option<f64>,
    pub d_zeta: Option<f64>,
    pub zeta_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn row(&self, mode: ModeClass, controller: &str) -> Option<&ComparisonRow> {
        self.rows
            .iter()
            .find(|r| r.mode == mode && r.controller == controller)
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>, w: usize, p: usize| match v {
            Some(x) => format!("{x:>w$.p$}"),
            None => format!("{:>w$}", "-"),
        };
        let mut out = format!(
            "{:<12} {:<8} {:>8} {:>8} {:>9} {:>9} {:>8}\n",
            "mode", "ctrl", "f_hz", "zeta", "d_f_hz", "d_zeta", "ratio"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<12} {:<8} {} {} {} {} {}\n",
                r.mode.tag(),
                r.controller,
                opt(r.f_hz, 8, 4),
                opt(r.zeta, 8, 4),
                opt(r.d_f_hz, 9, 4),
                opt(r.d_zeta, 9, 4),
                opt(r.zeta_ratio, 8, 3),
            ));
        }
        out
    }
}

/// Matching distance: relative frequency gap plus the L1 gap between group
/// participation signatures.
fn distance(a: &Mode, b: &Mode) -> f64 {
    let df = (a.f_hz - b.f_hz).abs() / b.f_hz.max(0.1);
    let sa = a.groups.signature();
    let sb = b.groups.signature();
    df + sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn pick<'a>(
    report: &'a ModeReport,
    class: ModeClass,
    reference: Option<&Mode>,
) -> Result<Option<&'a Mode>, SmallSignalError> {
    let candidates = report.modes_of(class);
    // The converter mode differs in nature between controllers, so it is
    // taken by strength of coupling rather than by similarity.
    let reference = reference.filter(|_| class != ModeClass::VshpSg1);
    let Some(reference) = reference else {
        return Ok(candidates.first().copied());
    };
    let mut scored: Vec<(f64, &Mode)> = candidates
        .into_iter()
        .map(|m| (distance(m, reference), m))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    if scored.len() >= 2 && scored[1].0 - scored[0].0 < AMBIGUITY_MARGIN {
        return Err(SmallSignalError::ModeMatchAmbiguous {
            mode: class.tag().into(),
            controller: report.controller.clone(),
            first: scored[0].1.f_hz,
            second: scored[1].1.f_hz,
        });
    }
    Ok(scored.first().map(|s| s.1))
}

/// Match the tracked modes of every report against the baseline (the
/// report named `CPC`, else the first) and tabulate the differences.
pub fn classify_and_compare(reports: &[ModeReport]) -> Result<ComparisonTable, SmallSignalError> {
    let Some(base) = reports
        .iter()
        .find(|r| r.controller == "CPC")
        .or(reports.first())
    else {
        return Ok(ComparisonTable {
            baseline: String::new(),
            rows: Vec::new(),
        });
    };
    let mut rows = Vec::new();
    for class in TRACKED_MODES {
        let reference = pick(base, class, None)?;
        for report in reports {
            let m = if std::ptr::eq(report, base) {
                reference
            } else {
                pick(report, class, reference)?
            };
            let d = |f: fn(&Mode) -> f64| match (m, reference) {
                (Some(m), Some(r)) => Some(f(m) - f(r)),
                _ => None,
            };
            rows.push(ComparisonRow {
                mode: class,
                controller: report.controller.clone(),
                f_hz: m.map(|m| m.f_hz),
                zeta: m.map(|m| m.zeta),
                sigma: m.map(|m| m.sigma),
                d_f_hz: d(|m| m.f_hz),
                d_zeta: d(|m| m.zeta),
                zeta_ratio: match (m, reference) {
                    (Some(m), Some(r)) if r.zeta != 0.0 => Some(m.zeta / r.zeta),
                    _ => None,
                },
            });
        }
    }
    Ok(ComparisonTable {
        baseline: base.controller.clone(),
        rows,
    })
}
