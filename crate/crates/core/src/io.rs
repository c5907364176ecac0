//! Data ingestion and plot-ready serialization.
//!
//! Input is two CSV files: observations (`unit_id,y`, one row per raw
//! observation) and units (`unit_id,z1[,z2,...]`, one row per unit). Output
//! records are JSON (canonical) or a flattened CSV view.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, RemError, Result};
use crate::measures::{DensityCurve, DomainInterval, EmpiricalMeasure};
use crate::simulation::StudyReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodTag {
    RemGlobal,
    RemLocal,
    TwoStep,
    Barycenter,
}

impl MethodTag {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodTag::RemGlobal => "rem-global",
            MethodTag::RemLocal => "rem-local",
            MethodTag::TwoStep => "two-step",
            MethodTag::Barycenter => "barycenter",
        }
    }
}

impl std::fmt::Display for MethodTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Stable identifiers for every non-fatal condition reported in output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningCode {
    ZeroObservationUnit,
    Extrapolation,
    TwoStepExcluded,
    GridCapBelowUnitSize,
}

impl WarningCode {
    pub fn as_str(self) -> &'static str {
        match self {
            WarningCode::ZeroObservationUnit => "zero_observation_unit",
            WarningCode::Extrapolation => "extrapolation",
            WarningCode::TwoStepExcluded => "two_step_excluded",
            WarningCode::GridCapBelowUnitSize => "grid_cap_below_unit_size",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub code: WarningCode,
    pub message: String,
}

impl Warning {
    pub fn new(code: WarningCode, message: impl Into<String>) -> Self {
        let w = Self {
            code,
            message: message.into(),
        };
        log::warn!("[{}] {}", code.as_str(), w.message);
        w
    }
}

/// Validated long-format data: one empirical measure per retained unit.
#[derive(Debug, Clone, PartialEq)]
pub struct LongFormatDataset {
    pub covariate_names: Vec<String>,
    pub unit_ids: Vec<String>,
    pub covariates: Vec<Vec<f64>>,
    pub measures: Vec<EmpiricalMeasure>,
    /// Units listed in the units file without any observation.
    pub excluded_units: Vec<String>,
    pub warnings: Vec<Warning>,
}

impl LongFormatDataset {
    pub fn n(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn check_domain(&self, domain: &DomainInterval) -> Result<()> {
        for (id, m) in self.unit_ids.iter().zip(&self.measures) {
            m.check_domain(domain)
                .map_err(|e| invalid(format!("unit {id:?}: {e}")))?;
        }
        Ok(())
    }
}

pub fn ingest_paths(observations: &Path, units: &Path) -> Result<LongFormatDataset> {
    let obs = std::fs::File::open(observations)
        .map_err(|e| invalid(format!("cannot open {}: {e}", observations.display())))?;
    let units_file = std::fs::File::open(units)
        .map_err(|e| invalid(format!("cannot open {}: {e}", units.display())))?;
    ingest_readers(obs, units_file)
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(r)
}

fn ingest_error(file: &'static str, row: u64, message: impl Into<String>) -> RemError {
    RemError::Ingest {
        file,
        row,
        message: message.into(),
    }
}

fn csv_error(file: &'static str, e: csv::Error) -> RemError {
    let row = e.position().map_or(0, |p| p.line());
    ingest_error(file, row, e.to_string())
}

fn parse_number(file: &'static str, row: u64, column: &str, field: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ingest_error(
            file,
            row,
            format!("column {column:?}: {field:?} is not a finite number"),
        )),
    }
}

/// Reads and validates an observations/units CSV pair.
///
/// Units appear in units-file order; units without observations are dropped
/// with a [`WarningCode::ZeroObservationUnit`] warning naming each one.
pub fn ingest_readers<O: Read, U: Read>(observations: O, units: U) -> Result<LongFormatDataset> {
    const UNITS: &str = "units";
    const OBS: &str = "observations";

    let mut ur = csv_reader(units);
    let header = ur.headers().map_err(|e| csv_error(UNITS, e))?.clone();
    if header.get(0) != Some("unit_id") || header.len() < 2 {
        return Err(ingest_error(
            UNITS,
            1,
            "header must be unit_id followed by at least one covariate column",
        ));
    }
    let covariate_names: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let p = covariate_names.len();

    let mut unit_ids = Vec::new();
    let mut covariates = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for rec in ur.records() {
        let rec = rec.map_err(|e| csv_error(UNITS, e))?;
        let row = rec.position().map_or(0, |pos| pos.line());
        if rec.len() != p + 1 {
            return Err(ingest_error(
                UNITS,
                row,
                format!(
                    "expected {} covariate(s), found {}",
                    p,
                    rec.len().saturating_sub(1)
                ),
            ));
        }
        let id = rec[0].to_owned();
        if id.is_empty() {
            return Err(ingest_error(UNITS, row, "empty unit_id"));
        }
        let z = (0..p)
            .map(|k| parse_number(UNITS, row, &covariate_names[k], &rec[k + 1]))
            .collect::<Result<Vec<_>>>()?;
        if index.insert(id.clone(), unit_ids.len()).is_some() {
            return Err(ingest_error(
                UNITS,
                row,
                format!("duplicate unit_id {id:?}"),
            ));
        }
        unit_ids.push(id);
        covariates.push(z);
    }

    let mut or = csv_reader(observations);
    let header = or.headers().map_err(|e| csv_error(OBS, e))?.clone();
    if header.len() != 2 || &header[0] != "unit_id" || &header[1] != "y" {
        return Err(ingest_error(OBS, 1, "header must be unit_id,y"));
    }
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); unit_ids.len()];
    for rec in or.records() {
        let rec = rec.map_err(|e| csv_error(OBS, e))?;
        let row = rec.position().map_or(0, |pos| pos.line());
        if rec.len() != 2 {
            return Err(ingest_error(
                OBS,
                row,
                format!("expected 2 fields, found {}", rec.len()),
            ));
        }
        let Some(&i) = index.get(&rec[0]) else {
            return Err(ingest_error(
                OBS,
                row,
                format!("unknown unit_id {:?} (not in units file)", &rec[0]),
            ));
        };
        values[i].push(parse_number(OBS, row, "y", &rec[1])?);
    }

    let mut ds = LongFormatDataset {
        covariate_names,
        unit_ids: Vec::new(),
        covariates: Vec::new(),
        measures: Vec::new(),
        excluded_units: Vec::new(),
        warnings: Vec::new(),
    };
    for ((id, z), v) in unit_ids.into_iter().zip(covariates).zip(values) {
        if v.is_empty() {
            ds.warnings.push(Warning::new(
                WarningCode::ZeroObservationUnit,
                format!("unit {id:?} has no observations and was excluded"),
            ));
            ds.excluded_units.push(id);
        } else {
            ds.measures.push(EmpiricalMeasure::new(v)?);
            ds.unit_ids.push(id);
            ds.covariates.push(z);
        }
    }
    Ok(ds)
}

fn parse_floats(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| RemError::Parse(format!("{what}: {t:?} is not a finite number")))
        })
        .collect()
}

/// Parses inline queries for a `p`-dimensional predictor.
///
/// Points are separated by `;` and coordinates by `,`. Without any `;`, a
/// scalar predictor reads `3,5` as two queries and a vector predictor reads
/// it as one point.
pub fn parse_queries(s: &str, p: usize) -> Result<Vec<Vec<f64>>> {
    if p == 0 {
        return Err(invalid("predictor dimension must be positive"));
    }
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let points: Vec<Vec<f64>> = if s.contains(';') {
        s.split(';')
            .filter(|t| !t.trim().is_empty())
            .map(|t| parse_floats(t, "query"))
            .collect::<Result<_>>()?
    } else if p == 1 {
        parse_floats(s, "query")?
            .into_iter()
            .map(|v| vec![v])
            .collect()
    } else {
        vec![parse_floats(s, "query")?]
    };
    if let Some(bad) = points.iter().find(|q| q.len() != p) {
        return Err(RemError::Parse(format!(
            "query {bad:?} has {} coordinate(s), expected {p}",
            bad.len()
        )));
    }
    Ok(points)
}

/// Parses a query file: one point per line, comma-separated coordinates. A
/// leading non-numeric line is treated as a header; `#` starts a comment.
pub fn parse_query_table(text: &str, p: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match parse_floats(line, "query") {
            Ok(v) => {
                if v.len() != p {
                    return Err(RemError::Parse(format!(
                        "query file line {}: {} coordinate(s), expected {p}",
                        i + 1,
                        v.len()
                    )));
                }
                out.push(v);
            }
            Err(_) if out.is_empty() && i == 0 => continue,
            Err(e) => return Err(RemError::Parse(format!("query file line {}: {e}", i + 1))),
        }
    }
    Ok(out)
}

/// Parses `lo,hi` into a domain interval.
pub fn parse_domain(s: &str) -> Result<DomainInterval> {
    let v = parse_floats(s, "domain")?;
    if v.len() != 2 {
        return Err(RemError::Parse(format!(
            "domain needs two values lo,hi, got {}",
            v.len()
        )));
    }
    DomainInterval::new(v[0], v[1])
}

/// Parses a comma-separated list of positive integers (e.g. an n-ladder).
pub fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim().parse::<usize>().map_err(|_| {
                RemError::Parse(format!("{:?} is not a nonnegative integer", t.trim()))
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub units: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_max: Option<f64>,
    pub excluded_units: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded_unit_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
}

/// One predicted distribution, ready for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub query: Vec<f64>,
    pub method: MethodTag,
    pub grid_size: usize,
    pub quantiles: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityCurve>,
    pub diagnostics: Diagnostics,
}

pub fn records_to_json(records: &[OutputRecord]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(records)?;
    s.push('\n');
    Ok(s)
}

pub fn records_from_json(text: &str) -> Result<Vec<OutputRecord>> {
    Ok(serde_json::from_str(text)?)
}

/// Flattened view: one row per quantile cell, then one per density point.
pub fn records_to_csv(records: &[OutputRecord]) -> String {
    let mut out = String::from("query,method,kind,index,x,value\n");
    for r in records {
        let query = r
            .query
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(";");
        let m = r.quantiles.len() as f64;
        for (i, q) in r.quantiles.iter().enumerate() {
            let p = (i as f64 + 0.5) / m;
            let _ = writeln!(out, "{query},{},quantile,{i},{p:?},{q:?}", r.method);
        }
        if let Some(d) = &r.density {
            for (i, (x, f)) in d.x.iter().zip(&d.f).enumerate() {
                let _ = writeln!(out, "{query},{},density,{i},{x:?},{f:?}", r.method);
            }
        }
    }
    out
}

/// Writes `runs.jsonl`, `summary.json` and `summary.csv` into `dir`.
pub fn write_study(dir: &Path, report: &StudyReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut runs = String::new();
    for r in &report.runs {
        runs.push_str(&serde_json::to_string(r)?);
        runs.push('\n');
    }
    std::fs::write(dir.join("runs.jsonl"), runs)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        scenario: &'a crate::simulation::SimulationScenario,
        summary: &'a [crate::simulation::SummaryRow],
        rate_slopes: &'a [crate::simulation::RateSlope],
    }
    let mut summary = serde_json::to_string_pretty(&Summary {
        scenario: &report.scenario,
        summary: &report.summary,
        rate_slopes: &report.rate_slopes,
    })?;
    summary.push('\n');
    std::fs::write(dir.join("summary.json"), summary)?;

    let mut csv = String::from("setting,n,method,runs,missing,mean,q1,median,q3\n");
    for r in &report.summary {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            report.scenario.setting, r.n, r.method, r.runs, r.missing, r.mean, r.q1, r.median, r.q3
        );
    }
    std::fs::write(dir.join("summary.csv"), csv)?;
    Ok(())
}
