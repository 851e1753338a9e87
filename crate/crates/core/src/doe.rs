//! Full-factorial plans over (hO, vc, cAV) and the records they produce.

use crate::error::{invalid, Result};
use crate::fitting::ResponseRow;
use crate::scenario::{run_trial, Outcome, TrialConfig, TrialResult};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

/// Reference wheel radius the default obstacle heights are expressed in.
pub const REFERENCE_WHEEL_RADIUS: f64 = 0.0745;
pub const DEFAULT_HEIGHT_FRACTIONS: [f64; 5] = [0.25, 0.50, 0.80, 0.90, 1.00];
pub const DEFAULT_SPEEDS: [f64; 5] = [3.0, 6.0, 9.0, 12.0, 15.0];
pub const DEFAULT_DAMPINGS: [f64; 5] = [400.0, 800.0, 1600.0, 3200.0, 6400.0];

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DoePlan {
    /// Obstacle heights, m.
    pub h_o_levels: Vec<f64>,
    /// Approach speeds, m/s.
    pub vc_levels: Vec<f64>,
    /// Front longitudinal damping per wheel, N·s/m.
    pub cav_levels: Vec<f64>,
    pub replicates: u32,
}

impl Default for DoePlan {
    fn default() -> Self {
        DoePlan::for_wheel_radius(REFERENCE_WHEEL_RADIUS)
    }
}

/// One cell of the plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub h_o: f64,
    pub vc: f64,
    pub cav: f64,
    pub replicate: u32,
}

impl DoePlan {
    /// Default grid with heights at 25, 50, 80, 90 and 100 % of `wheel_radius`.
    pub fn for_wheel_radius(wheel_radius: f64) -> Self {
        DoePlan {
            h_o_levels: DEFAULT_HEIGHT_FRACTIONS.iter().map(|f| f * wheel_radius).collect(),
            vc_levels: DEFAULT_SPEEDS.to_vec(),
            cav_levels: DEFAULT_DAMPINGS.to_vec(),
            replicates: 1,
        }
    }

    pub fn single(h_o: f64, vc: f64, cav: f64) -> Self {
        DoePlan { h_o_levels: alloc::vec![h_o], vc_levels: alloc::vec![vc], cav_levels: alloc::vec![cav], replicates: 1 }
    }

    pub fn validate(&self, wheel_radius: f64) -> Result<()> {
        fn increasing(name: &str, xs: &[f64], ok: impl Fn(f64) -> bool) -> Result<()> {
            if xs.is_empty() {
                return Err(invalid(alloc::format!("{name}: no levels")));
            }
            if let Some(x) = xs.iter().find(|&&x| !ok(x)) {
                return Err(invalid(alloc::format!("{name}: level {x} out of range")));
            }
            if xs.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid(alloc::format!("{name}: levels must be strictly increasing")));
            }
            Ok(())
        }
        increasing("h_o_levels", &self.h_o_levels, |h| h > 0.0 && h <= 1.5 * wheel_radius)?;
        increasing("vc_levels", &self.vc_levels, |v| v > 0.0 && v <= 20.0)?;
        increasing("cav_levels", &self.cav_levels, |c| c > 0.0 && c.is_finite())?;
        if self.replicates == 0 {
            return Err(invalid("replicates must be at least 1"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.h_o_levels.len() * self.vc_levels.len() * self.cav_levels.len() * self.replicates as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cells in canonical order: hO, then vc, then cAV, then replicate.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::with_capacity(self.len());
        for &h_o in &self.h_o_levels {
            for &vc in &self.vc_levels {
                for &cav in &self.cav_levels {
                    for replicate in 0..self.replicates {
                        out.push(Cell { h_o, vc, cav, replicate });
                    }
                }
            }
        }
        out
    }
}

/// Metrics of one completed trial, one CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialRecord {
    #[cfg_attr(feature = "serde", serde(rename = "hO"))]
    pub h_o: f64,
    pub vc: f64,
    #[cfg_attr(feature = "serde", serde(rename = "cAV"))]
    pub cav: f64,
    #[cfg_attr(feature = "serde", serde(rename = "delta_Ec"))]
    pub delta_ec: f64,
    pub pitch_rate_t2: f64,
    pub cdwo: f64,
    pub dx_w_max: f64,
    pub t1: f64,
    /// NaN when the crossing never ended.
    pub t2: f64,
    pub t3: f64,
    pub outcome: Outcome,
}

impl TrialRecord {
    pub fn from_result(r: &TrialResult) -> Self {
        TrialRecord {
            h_o: r.config.obstacle_height,
            vc: r.config.speed,
            cav: r.config.damping,
            delta_ec: r.metrics.delta_ec,
            pitch_rate_t2: r.metrics.pitch_rate_t2,
            cdwo: r.metrics.cdwo,
            dx_w_max: r.metrics.dx_w_max,
            t1: r.events.t1,
            t2: r.events.t2.unwrap_or(f64::NAN),
            t3: r.events.t3.unwrap_or(f64::NAN),
            outcome: r.events.outcome,
        }
    }

    pub fn key_cmp(&self, other: &Self) -> Ordering {
        self.h_o
            .total_cmp(&other.h_o)
            .then(self.vc.total_cmp(&other.vc))
            .then(self.cav.total_cmp(&other.cav))
    }

    /// Bitwise equality, so NaN event times compare equal.
    pub fn same_as(&self, other: &Self) -> bool {
        let bits = |r: &Self| {
            [r.h_o, r.vc, r.cav, r.delta_ec, r.pitch_rate_t2, r.cdwo, r.dx_w_max, r.t1, r.t2, r.t3].map(f64::to_bits)
        };
        bits(self) == bits(other) && self.outcome == other.outcome
    }
}

impl From<&TrialRecord> for ResponseRow {
    fn from(r: &TrialRecord) -> Self {
        ResponseRow {
            h_o: r.h_o,
            vc: r.vc,
            cav: r.cav,
            delta_ec: r.delta_ec,
            pitch_rate: r.pitch_rate_t2,
            cdwo: r.cdwo,
            dx_w_max: r.dx_w_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialFailure {
    #[cfg_attr(feature = "serde", serde(rename = "hO"))]
    pub h_o: f64,
    pub vc: f64,
    #[cfg_attr(feature = "serde", serde(rename = "cAV"))]
    pub cav: f64,
    pub replicate: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Provenance {
    /// Digest of the plan, vehicle, contact and solver settings.
    pub config_hash: String,
    pub code_version: String,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CampaignResult {
    pub plan: DoePlan,
    pub records: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    pub provenance: Provenance,
}

impl CampaignResult {
    /// Sorts records and failures into canonical (hO, vc, cAV) order; stable for replicates.
    pub fn canonicalize(&mut self) {
        self.records.sort_by(TrialRecord::key_cmp);
        self.failures.sort_by(|a, b| {
            a.h_o.total_cmp(&b.h_o).then(a.vc.total_cmp(&b.vc)).then(a.cav.total_cmp(&b.cav)).then(a.replicate.cmp(&b.replicate))
        });
    }

    pub fn is_complete(&self) -> bool {
        self.records.len() + self.failures.len() == self.plan.len()
    }

    pub fn response_rows(&self) -> Vec<ResponseRow> {
        self.records.iter().map(ResponseRow::from).collect()
    }

    /// Records at exactly the obstacle height `h_o`.
    pub fn at_height(&self, h_o: f64) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(move |r| r.h_o == h_o)
    }
}

/// Trial configuration of one cell, starting from `template`.
pub fn cell_config(template: &TrialConfig, cell: &Cell) -> TrialConfig {
    TrialConfig { obstacle_height: cell.h_o, speed: cell.vc, damping: cell.cav, ..*template }
}

/// Runs one cell; failures carry the diagnostic instead of aborting the campaign.
pub fn run_cell(template: &TrialConfig, cell: &Cell) -> core::result::Result<TrialRecord, TrialFailure> {
    run_trial(&cell_config(template, cell)).map(|r| TrialRecord::from_result(&r)).map_err(|e| TrialFailure {
        h_o: cell.h_o,
        vc: cell.vc,
        cav: cell.cav,
        replicate: cell.replicate,
        reason: e.to_string(),
    })
}

/// Collects per-cell outcomes (in any order) into a canonical campaign result.
pub fn assemble(
    plan: &DoePlan,
    outcomes: impl IntoIterator<Item = core::result::Result<TrialRecord, TrialFailure>>,
    provenance: Provenance,
) -> CampaignResult {
    let (mut records, mut failures) = (Vec::new(), Vec::new());
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    let mut result = CampaignResult { plan: plan.clone(), records, failures, provenance };
    result.canonicalize();
    result
}

/// Single-threaded campaign.
pub fn run_campaign_serial(plan: &DoePlan, template: &TrialConfig, provenance: Provenance) -> Result<CampaignResult> {
    plan.validate(template.vehicle.wheel_radius)?;
    let outcomes = plan.cells().iter().map(|c| run_cell(template, c)).collect::<Vec<_>>();
    Ok(assemble(plan, outcomes, provenance))
}
