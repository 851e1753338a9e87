//! Stage functions shared by the command-line front end and the tests.

use crossing_core::doe::CampaignResult;
use crossing_core::fitting::{fit_report, FittedSurface, Metric, ReportOptions, ResponseRow};
use crossing_core::scenario::{run_trial, TorqueSchedule, TrialConfig, TrialResult};
use crossing_core::strategy::{optimize, StrategyDecision, StrategyProblem};
use crossing_core::vehicle::VehicleParams;

use crate::config::RunConfig;
use crate::error::LabError;
use crate::formats::{OptimizeQuery, PlotRow};

pub fn trial_config(cfg: &RunConfig, h_o: f64, vc: f64, cav: f64, torque: Option<TorqueSchedule>) -> TrialConfig {
    let mut t = cfg.trial_template();
    t.obstacle_height = h_o;
    t.speed = vc;
    t.damping = cav;
    if let Some(torque) = torque {
        t.torque = torque;
    }
    t
}

/// Validates and runs one trial.
pub fn simulate(config: &TrialConfig) -> Result<TrialResult, LabError> {
    config.validate()?;
    Ok(run_trial(config)?)
}

/// A (metric, height) cell that could not be fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct FitFailure {
    pub metric: Metric,
    pub h_o: f64,
    pub reason: String,
}

pub fn fit_campaign(campaign: &CampaignResult, opts: &ReportOptions) -> (Vec<FittedSurface>, Vec<FitFailure>) {
    let mut surfaces = Vec::new();
    let mut failures = Vec::new();
    for cell in fit_report(&campaign.response_rows(), opts) {
        match cell.surface {
            Ok(s) => surfaces.push(s),
            Err(reason) => failures.push(FitFailure { metric: cell.metric, h_o: cell.h_o, reason }),
        }
    }
    (surfaces, failures)
}

const PLOT_NODES: usize = 21;

fn sorted_levels(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn with_linspace(levels: &[f64]) -> Vec<f64> {
    let (lo, hi) = (levels[0], levels[levels.len() - 1]);
    let grid = (0..PLOT_NODES).map(|i| lo + (hi - lo) * i as f64 / (PLOT_NODES - 1) as f64);
    sorted_levels(levels.iter().copied().chain(grid))
}

/// Gridded predicted and observed values of one surface. Nodes are a regular
/// grid over the observed factor range plus every observed level.
pub fn plot_rows(surface: &FittedSurface, campaign: &CampaignResult) -> Vec<PlotRow> {
    let rows: Vec<ResponseRow> = campaign.at_height(surface.h_o).map(ResponseRow::from).collect();
    let vcs = sorted_levels(rows.iter().map(|r| r.vc));
    let cavs = sorted_levels(rows.iter().map(|r| r.cav));
    if vcs.is_empty() || cavs.is_empty() {
        return Vec::new();
    }
    let metric = surface.spec.metric;
    let mut out = Vec::new();
    for &vc in &with_linspace(&vcs) {
        for &cav in &with_linspace(&cavs) {
            let hits: Vec<f64> = rows
                .iter()
                .filter(|r| r.vc == vc && r.cav == cav)
                .map(|r| r.metric(metric))
                .filter(|y| y.is_finite())
                .collect();
            let observed = if hits.is_empty() { f64::NAN } else { hits.iter().sum::<f64>() / hits.len() as f64 };
            out.push(PlotRow { h_o: surface.h_o, vc, cav, predicted: surface.evaluate(vc, cav), observed });
        }
    }
    out
}

/// File name of the plot-data CSV of one surface.
pub fn plot_file_name(surface: &FittedSurface) -> String {
    format!("plot_{}_hO_{:?}.csv", surface.spec.metric.as_str(), surface.h_o)
}

pub fn strategy_problem(
    surfaces: Vec<FittedSurface>,
    campaign: &CampaignResult,
    vehicle: &VehicleParams,
    query: &OptimizeQuery,
) -> StrategyProblem {
    let mut p = StrategyProblem::new(surfaces, query.h_o_m, query.vc_mps);
    p.weights = query.weights;
    p.detection_distance = query.detection_distance_m;
    p.torque_demand = query.torque_demand_nm;
    p.torque_bounds = (vehicle.torque_min, vehicle.torque_max);
    p.stroke_limit = vehicle.stroke_limit;
    p.linkage_ratio = vehicle.linkage_ratio;
    let levels = &campaign.plan.cav_levels;
    if let (Some(lo), Some(hi)) = (levels.first(), levels.last()) {
        p.cav_bounds = (*lo, *hi);
    }
    p
}

pub fn decide(
    surfaces: Vec<FittedSurface>,
    campaign: &CampaignResult,
    vehicle: &VehicleParams,
    query: &OptimizeQuery,
) -> Result<StrategyDecision, LabError> {
    Ok(optimize(&strategy_problem(surfaces, campaign, vehicle, query), campaign)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crossing_core::doe::{DoePlan, Provenance, TrialRecord};
    use crossing_core::fitting::{Scaling, SurfaceSpec};
    use crossing_core::scenario::Outcome;

    fn campaign(f: impl Fn(f64, f64) -> f64) -> CampaignResult {
        let plan = DoePlan { h_o_levels: vec![0.02], vc_levels: vec![3.0, 6.0, 9.0], cav_levels: vec![400.0, 1600.0, 6400.0], replicates: 1 };
        let mut records = Vec::new();
        for vc in [3.0, 6.0, 9.0] {
            for cav in [400.0, 1600.0, 6400.0] {
                records.push(TrialRecord {
                    h_o: 0.02,
                    vc,
                    cav,
                    delta_ec: f(vc, cav),
                    pitch_rate_t2: vc - cav / 1000.0,
                    cdwo: 0.1 - cav * 1e-5,
                    dx_w_max: 0.01,
                    t1: 0.1,
                    t2: 0.2,
                    t3: 0.3,
                    outcome: Outcome::Cleared,
                });
            }
        }
        CampaignResult { plan, records, failures: vec![], provenance: Provenance::default() }
    }

    #[test]
    fn fit_reports_each_metric_and_failures() {
        let c = campaign(|v, a| 1.0 + v + 1e-3 * a);
        let (surfaces, failures) = fit_campaign(&c, &ReportOptions { scaling: Scaling::Standardized, ..Default::default() });
        assert!(failures.is_empty());
        assert_eq!(surfaces.len(), 3);
        // Three levels per factor cannot separate the cubic terms.
        assert!(surfaces.iter().filter(|s| s.spec.metric != Metric::DeltaEc).all(|s| s.rank_deficient));
        let e = surfaces.iter().find(|s| s.spec.metric == Metric::DeltaEc).unwrap();
        assert!((e.evaluate(6.0, 1600.0) - (1.0 + 6.0 + 1.6)).abs() < 1e-9);
    }

    #[test]
    fn plot_grid_contains_observations() {
        let c = campaign(|v, a| v * v + 1e-3 * a);
        let (surfaces, _) = fit_campaign(&c, &ReportOptions::default());
        let s = surfaces.iter().find(|s| s.spec.metric == Metric::DeltaEc).unwrap();
        let rows = plot_rows(s, &c);
        assert_eq!(rows.len(), PLOT_NODES * PLOT_NODES);
        let observed: Vec<&PlotRow> = rows.iter().filter(|r| !r.observed.is_nan()).collect();
        assert_eq!(observed.len(), 9);
        assert!(observed.iter().all(|r| (r.predicted - r.observed).abs() < 1e-9 * r.observed.abs().max(1.0)));
        assert!(rows.windows(2).all(|w| (w[0].vc, w[0].cav) < (w[1].vc, w[1].cav)));
    }

    #[test]
    fn plot_names_are_distinct() {
        let s = |m| FittedSurface {
            spec: SurfaceSpec::for_metric(m),
            h_o: 0.018625,
            coefficients: vec![],
            r_squared: 1.0,
            rmse: 0.0,
            condition_number: 1.0,
            n_points: 0,
            rank_deficient: false,
        };
        assert_eq!(plot_file_name(&s(Metric::Cdwo)), "plot_cdwo_hO_0.018625.csv");
        assert_ne!(plot_file_name(&s(Metric::DeltaEc)), plot_file_name(&s(Metric::PitchRate)));
    }
}
