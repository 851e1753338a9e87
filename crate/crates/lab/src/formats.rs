//! On-disk formats of every pipeline artifact, with loaders that double as
//! schema validators.
//!
//! Floats are written in Rust's shortest round-trip form; an empty CSV field
//! (or JSON `null`) stands for an event that never happened.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crossing_core::doe::{CampaignResult, DoePlan, Provenance, TrialFailure, TrialRecord};
use crossing_core::fitting::{FittedSurface, Metric, SurfaceSpec};
use crossing_core::scenario::{Outcome, TimeSeries, TrialResult};
use crossing_core::strategy::{StrategyDecision, Weights};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::PlanSection;
use crate::error::LabError;

/// Version shared by every file schema below.
pub const SCHEMA_VERSION: u32 = 1;

pub const CAMPAIGN_HEADER: [&str; 11] = [
    "hO_m",
    "vc_mps",
    "cAV_Nspm",
    "delta_Ec_J",
    "pitch_rate_t2_radps",
    "cdwo_s",
    "dx_w_max_m",
    "t1_s",
    "t2_s",
    "t3_s",
    "outcome",
];

pub const TIMESERIES_HEADER: [&str; 23] = [
    "t",
    "x_c",
    "z_c",
    "theta",
    "v_x",
    "v_z",
    "theta_dot",
    "s_fx",
    "s_fz",
    "s_rz",
    "tau",
    "E_c",
    "contact_front",
    "contact_rear",
    "E_c_chassis",
    "E_pot",
    "x_front",
    "z_front",
    "x_rear",
    "z_rear",
    "front_step_gap",
    "front_edge_gap",
    "rear_edge_gap",
];

pub const PLOT_HEADER: [&str; 5] = ["hO_m", "vc_mps", "cAV_Nspm", "predicted", "observed"];

/// One-line summary of every schema, printed by `--help`.
pub const SCHEMA_SUMMARY: &str = "File schemas (version 1):
  timeseries.csv   t,x_c,z_c,theta,v_x,v_z,theta_dot,s_fx,s_fz,s_rz,tau,E_c,contact_front,contact_rear,
                   E_c_chassis,E_pot,x_front,z_front,x_rear,z_rear,front_step_gap,front_edge_gap,rear_edge_gap
  metrics.json     {hO, vc, cAV, delta_Ec, pitch_rate_t2, cdwo, dx_w_max, t1, t2, t3, outcome}
  campaign.csv     hO_m,vc_mps,cAV_Nspm,delta_Ec_J,pitch_rate_t2_radps,cdwo_s,dx_w_max_m,t1_s,t2_s,t3_s,outcome
  campaign.json    {schema_version, grid, plan, trials, failures, provenance}
  surfaces.json    [{metric, hO_m, basis, coefficients, r2, rmse, n, condition_number, rank_deficient}]
  plot_*.csv       hO_m,vc_mps,cAV_Nspm,predicted,observed
  query.json       {hO_m, vc_mps, weights: {energy, pitch, cdwo}, detection_distance_m, torque_demand_Nm?}
  decision.json    {cAV_star, tau_command, predicted, predicted_dx_w, feasible, feasible_count,
                    pareto_set, time_budget, extrapolated}";

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:?}")
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, LabError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| LabError::io(path, e))
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<(), LabError> {
    let mut w = create(path)?;
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| LabError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), LabError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| LabError::Invalid(e.to_string()))?;
    text.push('\n');
    write_all(path, text.as_bytes())
}

/// Strict JSON load: errors name the offending field path.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, LabError> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        LabError::schema(path, format!("field `{field}`"), e.inner().to_string())
    })
}

// ---------------------------------------------------------------- CSV helpers

struct CsvTable {
    path: PathBuf,
    columns: Vec<usize>,
    names: &'static [&'static str],
    rows: csv::StringRecordsIntoIter<File>,
}

impl CsvTable {
    /// Opens `path` and maps each expected column; missing or unknown columns are schema errors.
    fn open(path: &Path, names: &'static [&'static str]) -> Result<Self, LabError> {
        let file = File::open(path).map_err(|e| LabError::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let headers = reader.headers().map_err(|e| LabError::schema(path, "line 1", e.to_string()))?.clone();
        let mut columns = Vec::with_capacity(names.len());
        for name in names {
            match headers.iter().position(|h| h.trim() == *name) {
                Some(i) => columns.push(i),
                None => return Err(LabError::schema(path, format!("column `{name}`"), "missing column")),
            }
        }
        if let Some(extra) = headers.iter().find(|h| !names.contains(&h.trim())) {
            return Err(LabError::schema(path, format!("column `{extra}`"), "unknown column"));
        }
        Ok(CsvTable { path: path.to_path_buf(), columns, names, rows: reader.into_records() })
    }

    fn next_row(&mut self) -> Option<Result<Row<'_>, LabError>> {
        let record = self.rows.next()?;
        Some(match record {
            Ok(r) => {
                let line = r.position().map_or(0, |p| p.line());
                Ok(Row { table: self, record: r, line })
            }
            Err(e) => Err(LabError::schema(&self.path, "row", e.to_string())),
        })
    }
}

struct Row<'a> {
    table: &'a CsvTable,
    record: csv::StringRecord,
    line: u64,
}

impl Row<'_> {
    fn text(&self, col: usize) -> &str {
        self.record.get(self.table.columns[col]).unwrap_or("").trim()
    }

    fn error(&self, col: usize, message: impl Into<String>) -> LabError {
        LabError::schema(&self.table.path, format!("line {}, column `{}`", self.line, self.table.names[col]), message)
    }

    fn number(&self, col: usize) -> Result<f64, LabError> {
        let s = self.text(col);
        s.parse::<f64>().map_err(|_| self.error(col, format!("expected a number, found {s:?}")))
    }

    /// Number or empty (NaN).
    fn optional(&self, col: usize) -> Result<f64, LabError> {
        if self.text(col).is_empty() {
            Ok(f64::NAN)
        } else {
            self.number(col)
        }
    }
}

// ------------------------------------------------------------------ campaign

/// Factor levels exactly as configured, in table units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridTable {
    #[serde(rename = "hO_percent_wr")]
    pub h_o_percent_wr: Vec<f64>,
    pub vc_mps: Vec<f64>,
    #[serde(rename = "cAV_Nspmm")]
    pub cav_ns_per_mm: Vec<f64>,
}

impl From<&PlanSection> for GridTable {
    fn from(p: &PlanSection) -> Self {
        GridTable { h_o_percent_wr: p.h_o_percent_wr.clone(), vc_mps: p.vc_mps.clone(), cav_ns_per_mm: p.cav_ns_per_mm.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanJson {
    #[serde(rename = "hO_m")]
    pub h_o_m: Vec<f64>,
    pub vc_mps: Vec<f64>,
    #[serde(rename = "cAV_Nspm")]
    pub cav_nspm: Vec<f64>,
    pub replicates: u32,
}

impl From<&DoePlan> for PlanJson {
    fn from(p: &DoePlan) -> Self {
        PlanJson {
            h_o_m: p.h_o_levels.clone(),
            vc_mps: p.vc_levels.clone(),
            cav_nspm: p.cav_levels.clone(),
            replicates: p.replicates,
        }
    }
}

impl From<PlanJson> for DoePlan {
    fn from(p: PlanJson) -> Self {
        DoePlan { h_o_levels: p.h_o_m, vc_levels: p.vc_mps, cav_levels: p.cav_nspm, replicates: p.replicates }
    }
}

/// Sidecar of `campaign.csv`: plan, failures and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSidecar {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridTable>,
    pub plan: PlanJson,
    pub trials: usize,
    pub failures: Vec<TrialFailure>,
    pub provenance: Provenance,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_campaign_csv(path: &Path, records: &[TrialRecord]) -> Result<(), LabError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| LabError::Io { path: path.to_path_buf(), source: e.into() };
    w.write_record(CAMPAIGN_HEADER).map_err(io)?;
    for r in records {
        w.write_record([
            fmt_f64(r.h_o),
            fmt_f64(r.vc),
            fmt_f64(r.cav),
            fmt_f64(r.delta_ec),
            fmt_f64(r.pitch_rate_t2),
            fmt_f64(r.cdwo),
            fmt_f64(r.dx_w_max),
            fmt_f64(r.t1),
            fmt_f64(r.t2),
            fmt_f64(r.t3),
            r.outcome.as_str().to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

/// Reads campaign rows in file order.
pub fn read_campaign_csv(path: &Path) -> Result<Vec<TrialRecord>, LabError> {
    let mut table = CsvTable::open(path, &CAMPAIGN_HEADER)?;
    let mut out = Vec::new();
    while let Some(row) = table.next_row() {
        let row = row?;
        let outcome = Outcome::parse(row.text(10)).ok_or_else(|| {
            row.error(10, format!("unknown outcome {:?}, expected one of {}", row.text(10), outcome_list()))
        })?;
        out.push(TrialRecord {
            h_o: row.number(0)?,
            vc: row.number(1)?,
            cav: row.number(2)?,
            delta_ec: row.optional(3)?,
            pitch_rate_t2: row.optional(4)?,
            cdwo: row.optional(5)?,
            dx_w_max: row.optional(6)?,
            t1: row.optional(7)?,
            t2: row.optional(8)?,
            t3: row.optional(9)?,
            outcome,
        });
    }
    Ok(out)
}

fn outcome_list() -> String {
    Outcome::ALL.iter().map(|o| o.as_str()).collect::<Vec<_>>().join(", ")
}

pub fn save_campaign(path: &Path, result: &CampaignResult, grid: Option<GridTable>) -> Result<(), LabError> {
    write_campaign_csv(path, &result.records)?;
    let sidecar = CampaignSidecar {
        schema_version: SCHEMA_VERSION,
        grid,
        plan: PlanJson::from(&result.plan),
        trials: result.plan.len(),
        failures: result.failures.clone(),
        provenance: result.provenance.clone(),
    };
    write_json(&sidecar_path(path), &sidecar)
}

/// Loads a campaign CSV and, when present, its sidecar. Without a sidecar the
/// plan is inferred from the distinct factor values in the file.
pub fn load_campaign(path: &Path) -> Result<CampaignResult, LabError> {
    let records = read_campaign_csv(path)?;
    let side = sidecar_path(path);
    let mut result = if side.exists() {
        let s: CampaignSidecar = read_json(&side)?;
        if s.schema_version != SCHEMA_VERSION {
            return Err(LabError::schema(&side, "field `schema_version`", format!("unsupported version {}", s.schema_version)));
        }
        CampaignResult { plan: s.plan.into(), records, failures: s.failures, provenance: s.provenance }
    } else {
        let plan = infer_plan(&records);
        CampaignResult { plan, records, failures: Vec::new(), provenance: Provenance::default() }
    };
    result.canonicalize();
    Ok(result)
}

fn infer_plan(records: &[TrialRecord]) -> DoePlan {
    let levels = |f: fn(&TrialRecord) -> f64| {
        let mut v: Vec<f64> = records.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let mut counts: BTreeMap<[u64; 3], u32> = BTreeMap::new();
    for r in records {
        *counts.entry([r.h_o, r.vc, r.cav].map(f64::to_bits)).or_default() += 1;
    }
    DoePlan {
        h_o_levels: levels(|r| r.h_o),
        vc_levels: levels(|r| r.vc),
        cav_levels: levels(|r| r.cav),
        replicates: counts.values().copied().max().unwrap_or(1),
    }
}

// --------------------------------------------------------------- single trial

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRecord {
    #[serde(rename = "hO")]
    pub h_o: f64,
    pub vc: f64,
    #[serde(rename = "cAV")]
    pub cav: f64,
    #[serde(rename = "delta_Ec")]
    pub delta_ec: f64,
    pub pitch_rate_t2: f64,
    pub cdwo: f64,
    pub dx_w_max: f64,
    pub t1: f64,
    pub t2: Option<f64>,
    pub t3: Option<f64>,
    pub outcome: Outcome,
}

impl From<&TrialResult> for MetricsRecord {
    fn from(r: &TrialResult) -> Self {
        MetricsRecord {
            h_o: r.config.obstacle_height,
            vc: r.config.speed,
            cav: r.config.damping,
            delta_ec: r.metrics.delta_ec,
            pitch_rate_t2: r.metrics.pitch_rate_t2,
            cdwo: r.metrics.cdwo,
            dx_w_max: r.metrics.dx_w_max,
            t1: r.events.t1,
            t2: r.events.t2,
            t3: r.events.t3,
            outcome: r.events.outcome,
        }
    }
}

/// Writes every `stride`-th sample; the last sample is always kept.
pub fn write_timeseries_csv(path: &Path, series: &TimeSeries, stride: usize) -> Result<(), LabError> {
    let stride = stride.max(1);
    let last = series.samples.len().saturating_sub(1);
    let mut w = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| LabError::Io { path: path.to_path_buf(), source: e.into() };
    w.write_record(TIMESERIES_HEADER).map_err(io)?;
    for (k, s) in series.samples.iter().enumerate() {
        if k % stride != 0 && k != last {
            continue;
        }
        let row = [
            s.t,
            s.x_c,
            s.z_c,
            s.theta,
            s.v_x,
            s.v_z,
            s.theta_dot,
            s.s_fx,
            s.s_fz,
            s.s_rz,
            s.tau,
            s.e_c,
            f64::from(s.front_contact),
            f64::from(s.rear_contact),
            s.e_c_chassis,
            s.e_pot,
            s.x_front,
            s.z_front,
            s.x_rear,
            s.z_rear,
            s.front_step_gap,
            s.front_edge_gap,
            s.rear_edge_gap,
        ];
        w.write_record(row.iter().enumerate().map(|(i, v)| if i == 12 || i == 13 { format!("{v}") } else { fmt_f64(*v) }))
            .map_err(io)?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

/// Reads a time-series CSV into columns keyed by header name.
pub fn read_timeseries_csv(path: &Path) -> Result<BTreeMap<&'static str, Vec<f64>>, LabError> {
    let mut table = CsvTable::open(path, &TIMESERIES_HEADER)?;
    let mut cols: BTreeMap<&'static str, Vec<f64>> = TIMESERIES_HEADER.iter().map(|h| (*h, Vec::new())).collect();
    while let Some(row) = table.next_row() {
        let row = row?;
        for (i, name) in TIMESERIES_HEADER.iter().enumerate() {
            let v = row.number(i)?;
            cols.get_mut(name).expect("known column").push(v);
        }
    }
    Ok(cols)
}

// ------------------------------------------------------------------ surfaces

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceJson {
    pub metric: Metric,
    #[serde(rename = "hO_m")]
    pub h_o_m: f64,
    /// `[power of vc, power of cAV]` per coefficient.
    pub basis: Vec<[u32; 2]>,
    pub coefficients: Vec<f64>,
    pub r2: f64,
    pub rmse: f64,
    pub n: usize,
    pub condition_number: f64,
    pub rank_deficient: bool,
}

impl From<&FittedSurface> for SurfaceJson {
    fn from(s: &FittedSurface) -> Self {
        SurfaceJson {
            metric: s.spec.metric,
            h_o_m: s.h_o,
            basis: s.spec.basis.iter().map(|&(a, b)| [a, b]).collect(),
            coefficients: s.coefficients.clone(),
            r2: s.r_squared,
            rmse: s.rmse,
            n: s.n_points,
            condition_number: s.condition_number,
            rank_deficient: s.rank_deficient,
        }
    }
}

impl From<SurfaceJson> for FittedSurface {
    fn from(s: SurfaceJson) -> Self {
        FittedSurface {
            spec: SurfaceSpec { metric: s.metric, basis: s.basis.iter().map(|&[a, b]| (a, b)).collect() },
            h_o: s.h_o_m,
            coefficients: s.coefficients,
            r_squared: s.r2,
            rmse: s.rmse,
            condition_number: s.condition_number,
            n_points: s.n,
            rank_deficient: s.rank_deficient,
        }
    }
}

pub fn save_surfaces(path: &Path, surfaces: &[FittedSurface]) -> Result<(), LabError> {
    let out: Vec<SurfaceJson> = surfaces.iter().map(SurfaceJson::from).collect();
    write_json(path, &out)
}

pub fn load_surfaces(path: &Path) -> Result<Vec<FittedSurface>, LabError> {
    let raw: Vec<SurfaceJson> = read_json(path)?;
    for (i, s) in raw.iter().enumerate() {
        if s.basis.len() != s.coefficients.len() {
            return Err(LabError::schema(
                path,
                format!("field `[{i}].coefficients`"),
                format!("{} coefficients for a basis of {}", s.coefficients.len(), s.basis.len()),
            ));
        }
        if let Some(j) = s.coefficients.iter().position(|c| !c.is_finite()) {
            return Err(LabError::schema(path, format!("field `[{i}].coefficients[{j}]`"), "coefficient is not finite"));
        }
    }
    Ok(raw.into_iter().map(FittedSurface::from).collect())
}

/// One plot row; `observed` is NaN on grid nodes without a trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotRow {
    pub h_o: f64,
    pub vc: f64,
    pub cav: f64,
    pub predicted: f64,
    pub observed: f64,
}

pub fn write_plot_csv(path: &Path, rows: &[PlotRow]) -> Result<(), LabError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| LabError::Io { path: path.to_path_buf(), source: e.into() };
    w.write_record(PLOT_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([r.h_o, r.vc, r.cav, r.predicted, r.observed].map(fmt_f64)).map_err(io)?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

pub fn read_plot_csv(path: &Path) -> Result<Vec<PlotRow>, LabError> {
    let mut table = CsvTable::open(path, &PLOT_HEADER)?;
    let mut out = Vec::new();
    while let Some(row) = table.next_row() {
        let row = row?;
        out.push(PlotRow {
            h_o: row.number(0)?,
            vc: row.number(1)?,
            cav: row.number(2)?,
            predicted: row.number(3)?,
            observed: row.optional(4)?,
        });
    }
    Ok(out)
}

// ------------------------------------------------------------------ strategy

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeQuery {
    #[serde(rename = "hO_m")]
    pub h_o_m: f64,
    pub vc_mps: f64,
    pub weights: Weights,
    #[serde(default = "default_detection_distance")]
    pub detection_distance_m: f64,
    #[serde(default, rename = "torque_demand_Nm")]
    pub torque_demand_nm: f64,
}

fn default_detection_distance() -> f64 {
    1.0
}

pub fn load_decision(path: &Path) -> Result<StrategyDecision, LabError> {
    read_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crossing_core::doe::DoePlan;

    fn record(h: f64, v: f64, c: f64) -> TrialRecord {
        TrialRecord {
            h_o: h,
            vc: v,
            cav: c,
            delta_ec: 1.0 / 3.0,
            pitch_rate_t2: -1e-20,
            cdwo: 0.1,
            dx_w_max: 0.02,
            t1: 0.05,
            t2: if c > 500.0 { 0.2 } else { f64::NAN },
            t3: f64::NAN,
            outcome: if c > 500.0 { Outcome::Cleared } else { Outcome::Stalled },
        }
    }

    fn sample_campaign() -> CampaignResult {
        let plan = DoePlan { h_o_levels: vec![0.01, 0.02], vc_levels: vec![3.0], cav_levels: vec![400.0, 800.0], replicates: 1 };
        let records = vec![record(0.01, 3.0, 400.0), record(0.01, 3.0, 800.0), record(0.02, 3.0, 400.0)];
        let failures = vec![TrialFailure { h_o: 0.02, vc: 3.0, cav: 800.0, replicate: 0, reason: "no crossing".into() }];
        CampaignResult { plan, records, failures, provenance: Provenance { config_hash: "abc".into(), code_version: "0".into() } }
    }

    #[test]
    fn campaign_round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("campaign.csv");
        let original = sample_campaign();
        save_campaign(&path, &original, None).unwrap();
        let loaded = load_campaign(&path).unwrap();
        assert_eq!(loaded.plan, original.plan);
        assert_eq!(loaded.failures, original.failures);
        assert_eq!(loaded.provenance, original.provenance);
        assert_eq!(loaded.records.len(), original.records.len());
        assert!(loaded.records.iter().zip(&original.records).all(|(a, b)| a.same_as(b)));
    }

    #[test]
    fn header_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        write_campaign_csv(&path, &[]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.trim_end(), "hO_m,vc_mps,cAV_Nspm,delta_Ec_J,pitch_rate_t2_radps,cdwo_s,dx_w_max_m,t1_s,t2_s,t3_s,outcome");
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        std::fs::write(&path, "hO_m,vc_mps,cAV_Nspm,delta_Ec_J,pitch_rate_t2_radps,dx_w_max_m,t1_s,t2_s,t3_s,outcome\n").unwrap();
        let err = read_campaign_csv(&path).unwrap_err().to_string();
        assert!(err.contains("cdwo_s") && err.contains("missing column"), "{err}");
    }

    #[test]
    fn bad_cell_reports_line_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let mut text = CAMPAIGN_HEADER.join(",");
        text.push_str("\n0.01,3,400,1,2,3,4,5,6,7,cleared\n0.01,3,800,x,2,3,4,5,6,7,cleared\n");
        std::fs::write(&path, text).unwrap();
        let err = read_campaign_csv(&path).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("delta_Ec_J"), "{err}");
    }

    #[test]
    fn shuffled_rows_are_resorted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let mut records = sample_campaign().records;
        records.reverse();
        write_campaign_csv(&path, &records).unwrap();
        let loaded = load_campaign(&path).unwrap();
        let keys: Vec<(f64, f64)> = loaded.records.iter().map(|r| (r.h_o, r.cav)).collect();
        assert_eq!(keys, vec![(0.01, 400.0), (0.01, 800.0), (0.02, 400.0)]);
        assert_eq!(loaded.plan.h_o_levels, vec![0.01, 0.02]);
        assert_eq!(loaded.plan.cav_levels, vec![400.0, 800.0]);
    }

    #[test]
    fn unknown_outcome_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let mut text = CAMPAIGN_HEADER.join(",");
        text.push_str("\n0.01,3,400,1,2,3,4,5,6,7,exploded\n");
        std::fs::write(&path, text).unwrap();
        let err = read_campaign_csv(&path).unwrap_err().to_string();
        assert!(err.contains("outcome") && err.contains("exploded"), "{err}");
    }

    #[test]
    fn surfaces_round_trip_and_check_lengths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let s = FittedSurface {
            spec: SurfaceSpec::for_metric(Metric::DeltaEc),
            h_o: 0.0186,
            coefficients: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            r_squared: 0.9,
            rmse: 0.1,
            condition_number: 10.0,
            n_points: 25,
            rank_deficient: false,
        };
        save_surfaces(&path, std::slice::from_ref(&s)).unwrap();
        assert_eq!(load_surfaces(&path).unwrap(), vec![s]);
        let text = std::fs::read_to_string(&path).unwrap().replace("5.0", "5.0, 6.0");
        std::fs::write(&path, text).unwrap();
        let err = load_surfaces(&path).unwrap_err().to_string();
        assert!(err.contains("[0].coefficients"), "{err}");
    }

    #[test]
    fn query_rejects_unknown_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.json");
        std::fs::write(&path, r#"{"hO_m":0.05,"vc_mps":6,"weights":{"energy":1,"pitch":1,"cdwo":1},"speed":3}"#).unwrap();
        let err = read_json::<OptimizeQuery>(&path).unwrap_err().to_string();
        assert!(err.contains("speed"), "{err}");
        std::fs::write(&path, r#"{"hO_m":0.05,"vc_mps":6,"weights":{"energy":1,"pitch":1,"cdwo":1}}"#).unwrap();
        let q: OptimizeQuery = read_json(&path).unwrap();
        assert_eq!(q.detection_distance_m, 1.0);
    }
}
