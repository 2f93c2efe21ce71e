//! Orchestration of a configured run and its on-disk report.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::coupling::{simulate_coupling, trajectory, CouplingStats, TrajectoryRow};
use crate::criterion::{evaluate_liouville_criterion, CriterionReport, Verdict};
use crate::error::{Error, Result};
use crate::harmonic::{harmonic_1d, oscillation_bound, HarmonicProfile, TailFit};

/// Major version of `report.json`.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Consistency {
    Consistent,
    CriterionConservative,
    Contradiction,
}

/// Which parts of the configuration to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub criterion: bool,
    pub oracle: bool,
    pub coupling: bool,
}

impl Stages {
    pub const ALL: Stages = Stages {
        criterion: true,
        oracle: true,
        coupling: true,
    };
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    pub liouville_holds: bool,
    pub bounded_left: bool,
    pub bounded_right: bool,
    pub sup_estimate: Option<f64>,
    pub inf_estimate: Option<f64>,
    pub right_tail: TailFit,
    pub left_tail: TailFit,
    pub note: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct CouplingSummary {
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub stats: CouplingStats,
    /// `1 − |u(x0) − u(y0)|/osc(u)` when a bounded 1D oracle is available.
    pub oracle_upper_bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictBundle {
    pub schema_version: u32,
    pub config: RunConfig,
    pub criterion: Option<CriterionReport>,
    pub oracle_verdict: Option<bool>,
    pub oracle: Option<OracleSummary>,
    pub coupling: Option<CouplingSummary>,
    pub consistency: Consistency,
    #[serde(skip)]
    pub profile: Option<HarmonicProfile>,
    #[serde(skip)]
    pub trajectory: Option<Vec<TrajectoryRow>>,
}

/// A failure tagged with the stage it happened in.
#[derive(Debug, Clone, PartialEq)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

impl StageError {
    /// 2 for configuration problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self.error {
            Error::Config(_) | Error::Expression { .. } | Error::Catalogue(_) | Error::FieldParams(_) => 2,
            _ => 3,
        }
    }
}

fn at(stage: &'static str) -> impl Fn(Error) -> StageError {
    move |error| StageError { stage, error }
}

pub fn consistency(verdict: Option<Verdict>, oracle: Option<bool>) -> Consistency {
    match (verdict, oracle) {
        (Some(Verdict::LiouvilleGuaranteed), Some(false)) => Consistency::Contradiction,
        (Some(Verdict::Inconclusive), Some(true)) => Consistency::CriterionConservative,
        _ => Consistency::Consistent,
    }
}

pub fn run(config: &RunConfig) -> std::result::Result<VerdictBundle, StageError> {
    run_stages(config, Stages::ALL)
}

/// Runs the requested stages that are also configured. The criterion stage
/// always estimates ellipticity, which coupling needs for `μ < λ₀`.
pub fn run_stages(config: &RunConfig, stages: Stages) -> std::result::Result<VerdictBundle, StageError> {
    config.validate().map_err(at("config"))?;
    let field = config.field.build().map_err(at("field"))?;

    let criterion = if stages.criterion {
        Some(evaluate_liouville_criterion(&field, &config.criterion_config()).map_err(at("criterion"))?)
    } else {
        None
    };

    let profile = match (stages.oracle, &config.oracle) {
        (true, Some(o)) => Some(harmonic_1d(&field, o.x_max, o.tol).map_err(at("oracle"))?),
        _ => None,
    };

    let mut trajectory_rows = None;
    let coupling = match (stages.coupling, &config.coupling, config.coupling_config()) {
        (true, Some(section), Some(cfg)) => {
            let bounds = match &criterion {
                Some(r) => r.bounds.clone(),
                None => crate::coefficients::estimate_ellipticity(
                    &field,
                    config.criterion.window_radius,
                    config.criterion.ellipticity_samples,
                    config.seed,
                )
                .map_err(at("ellipticity"))?,
            };
            let stats = simulate_coupling(&field, &bounds, &cfg, &section.x0, &section.y0).map_err(at("coupling"))?;
            trajectory_rows =
                Some(trajectory(&field, &bounds, &cfg, &section.x0, &section.y0, 0).map_err(at("coupling"))?);
            let oracle_upper_bound = match &profile {
                Some(p) if p.sup_estimate.is_some() && p.inf_estimate.is_some() => {
                    Some(1.0 - oscillation_bound(p, section.x0[0], section.y0[0]).map_err(at("oracle"))?)
                }
                _ => None,
            };
            Some(CouplingSummary {
                x0: section.x0.clone(),
                y0: section.y0.clone(),
                stats,
                oracle_upper_bound,
            })
        }
        _ => None,
    };

    let oracle_verdict = profile.as_ref().map(|p| p.liouville_holds);
    let oracle = profile.as_ref().map(|p| OracleSummary {
        liouville_holds: p.liouville_holds,
        bounded_left: p.bounded_left,
        bounded_right: p.bounded_right,
        sup_estimate: p.sup_estimate,
        inf_estimate: p.inf_estimate,
        right_tail: p.right_tail.clone(),
        left_tail: p.left_tail.clone(),
        note: "profile normalised to u(0) = 0, u'(0) = 1; every harmonic function is c1 + c2 u",
    });
    Ok(VerdictBundle {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        consistency: consistency(criterion.as_ref().map(|c| c.verdict), oracle_verdict),
        criterion,
        oracle_verdict,
        oracle,
        coupling,
        profile,
        trajectory: trajectory_rows,
    })
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> StageError {
    StageError {
        stage: "emit",
        error: Error::Config(format!("cannot write {}: {e}", path.display())),
    }
}

fn write_csv<I, R>(path: &Path, header: &[String], rows: I) -> std::result::Result<(), StageError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = f64>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
    w.write_record(header).map_err(|e| io_error(path, e))?;
    for row in rows {
        let rec: Vec<String> = row.into_iter().map(|v| format!("{v:e}")).collect();
        w.write_record(&rec).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Writes `report.json` plus the CSV curves present in the bundle and
/// returns the written paths. Existing files are overwritten.
pub fn emit(bundle: &VerdictBundle, output_dir: &Path) -> std::result::Result<Vec<PathBuf>, StageError> {
    fs::create_dir_all(output_dir).map_err(|e| io_error(output_dir, e))?;
    let mut written = Vec::new();

    let report = output_dir.join("report.json");
    let mut json = serde_json::to_string_pretty(bundle).map_err(|e| io_error(&report, e))?;
    json.push('\n');
    fs::write(&report, json).map_err(|e| io_error(&report, e))?;
    written.push(report);

    if let Some(c) = &bundle.criterion {
        let path = output_dir.join("dispersion.csv");
        let rows = c.dispersion.radii.iter().zip(&c.dispersion.values).map(|(s, v)| [*s, *v]);
        write_csv(&path, &header(&["s", "value"]), rows)?;
        written.push(path);

        let path = output_dir.join("modulus.csv");
        let rows: Vec<[f64; 2]> = c
            .modulus
            .as_ref()
            .map(|m| m.radii.iter().zip(&m.values).map(|(s, v)| [*s, *v]).collect())
            .unwrap_or_default();
        write_csv(&path, &header(&["s", "value"]), rows)?;
        written.push(path);
    }

    if let Some(p) = &bundle.profile {
        let path = output_dir.join("profile.csv");
        write_csv(&path, &header(&["x", "u", "du"]), p.rows().map(|(x, u, du)| [x, u, du]))?;
        written.push(path);
    }

    if let Some(rows) = &bundle.trajectory {
        let path = output_dir.join("coupling.csv");
        let d = rows.first().map_or(0, |r| r.x.len());
        let mut names = vec!["t".to_string()];
        names.extend((1..=d).map(|i| format!("x{i}")));
        names.extend((1..=d).map(|i| format!("y{i}")));
        names.push("distance".into());
        let data = rows.iter().map(|r| {
            let mut v = vec![r.t];
            v.extend(&r.x);
            v.extend(&r.y);
            v.push(r.distance);
            v
        });
        write_csv(&path, &names, data)?;
        written.push(path);
    }
    Ok(written)
}

/// Reads the schema version of a report, rejecting unknown majors.
pub fn check_schema(report_json: &str) -> Result<u32> {
    let v: serde_json::Value =
        serde_json::from_str(report_json).map_err(|e| Error::Config(format!("report is not JSON: {e}")))?;
    match v.get("schema_version").and_then(|s| s.as_u64()) {
        Some(n) if n == SCHEMA_VERSION as u64 => Ok(n as u32),
        Some(n) => Err(Error::Config(format!("unsupported report schema version {n}"))),
        None => Err(Error::Config("report has no schema_version".into())),
    }
}
