//! Anticipatory choice of the front longitudinal damping for a detected step.
//!
//! The decision variable is one-dimensional, so candidates on a cAV grid are
//! enumerated exhaustively. Objectives: minimise ΔE_c and |pitch rate|,
//! maximise CDWO, under the stroke constraint `Δx_w < (8/3)·ΔL_max`.

use crate::doe::{CampaignResult, TrialRecord};
use crate::error::{invalid, Result};
use crate::fitting::{FittedSurface, Metric};
use alloc::vec;
use alloc::vec::Vec;

/// Time available between detecting an obstacle and reaching it.
pub fn anticipation_budget(detection_distance: f64, vc: f64) -> Result<f64> {
    if !(vc > 0.0) {
        return Err(invalid(alloc::format!("speed must be positive, got {vc}")));
    }
    if !(detection_distance >= 0.0) {
        return Err(invalid("detection distance must be non-negative"));
    }
    Ok(detection_distance / vc)
}

/// Recorded Δx_w on the campaign grid, interpolated bilinearly in (vc, cAV)
/// and linearly in hO.
#[derive(Debug, Clone, PartialEq)]
pub struct DxwTable {
    h_o: Vec<f64>,
    vc: Vec<f64>,
    cav: Vec<f64>,
    /// `values[(i·nv + j)·nc + k]`, NaN where no trial succeeded.
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DxwEstimate {
    pub value: f64,
    /// The query was outside the campaign grid and was clamped onto it.
    pub extrapolated: bool,
}

fn levels(xs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = xs.filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Index `i` and weight `u` such that `x ≈ (1-u)·grid[i] + u·grid[i+1]`, clamped.
fn bracket(grid: &[f64], x: f64) -> (usize, f64, bool) {
    let n = grid.len();
    if n == 1 {
        return (0, 0.0, x != grid[0]);
    }
    if x <= grid[0] {
        return (0, 0.0, x < grid[0]);
    }
    if x >= grid[n - 1] {
        return (n - 2, 1.0, x > grid[n - 1]);
    }
    let i = grid.partition_point(|&g| g <= x) - 1;
    let i = i.min(n - 2);
    (i, (x - grid[i]) / (grid[i + 1] - grid[i]), false)
}

impl DxwTable {
    pub fn from_records(records: &[TrialRecord]) -> Self {
        let h_o = levels(records.iter().map(|r| r.h_o));
        let vc = levels(records.iter().map(|r| r.vc));
        let cav = levels(records.iter().map(|r| r.cav));
        let (nv, nc) = (vc.len(), cav.len());
        let mut sum = vec![0.0; h_o.len() * nv * nc];
        let mut count = vec![0u32; sum.len()];
        for r in records {
            let find = |g: &[f64], x: f64| g.iter().position(|&v| v == x);
            if let (Some(i), Some(j), Some(k)) = (find(&h_o, r.h_o), find(&vc, r.vc), find(&cav, r.cav)) {
                if r.dx_w_max.is_finite() {
                    sum[(i * nv + j) * nc + k] += r.dx_w_max;
                    count[(i * nv + j) * nc + k] += 1;
                }
            }
        }
        let values = sum.iter().zip(&count).map(|(s, &c)| if c > 0 { s / f64::from(c) } else { f64::NAN }).collect();
        DxwTable { h_o, vc, cav, values }
    }

    pub fn is_empty(&self) -> bool {
        self.h_o.is_empty() || self.vc.is_empty() || self.cav.is_empty()
    }

    fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[(i * self.vc.len() + j) * self.cav.len() + k]
    }

    fn bilinear(&self, i: usize, (j, u): (usize, f64), (k, w): (usize, f64)) -> f64 {
        let j1 = (j + 1).min(self.vc.len() - 1);
        let k1 = (k + 1).min(self.cav.len() - 1);
        let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else if t == 1.0 { b } else { a + t * (b - a) };
        let lo = lerp(self.at(i, j, k), self.at(i, j, k1), w);
        let hi = lerp(self.at(i, j1, k), self.at(i, j1, k1), w);
        lerp(lo, hi, u)
    }

    pub fn predict(&self, h_o: f64, vc: f64, cav: f64) -> DxwEstimate {
        if self.is_empty() {
            return DxwEstimate { value: f64::NAN, extrapolated: true };
        }
        let (i, t, eh) = bracket(&self.h_o, h_o);
        let (j, u, ev) = bracket(&self.vc, vc);
        let (k, w, ec) = bracket(&self.cav, cav);
        let a = self.bilinear(i, (j, u), (k, w));
        let value = if t == 0.0 || self.h_o.len() == 1 {
            a
        } else {
            let b = self.bilinear(i + 1, (j, u), (k, w));
            if t == 1.0 { b } else { a + t * (b - a) }
        };
        DxwEstimate { value, extrapolated: eh || ev || ec }
    }
}

/// Interpolated maximum longitudinal wheel excursion at a query point.
pub fn predict_dxw(h_o: f64, vc: f64, cav: f64, campaign: &CampaignResult) -> DxwEstimate {
    DxwTable::from_records(&campaign.records).predict(h_o, vc, cav)
}

/// Objective weights, all non-negative and not all zero.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Weights {
    pub energy: f64,
    pub pitch: f64,
    pub cdwo: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights { energy: 1.0, pitch: 1.0, cdwo: 1.0 }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.energy, self.pitch, self.cdwo];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(invalid("weights must be finite and non-negative"));
        }
        if w.iter().all(|&x| x == 0.0) {
            return Err(invalid("at least one weight must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProblem {
    /// Fitted surfaces of all three metrics at one or more obstacle heights.
    pub surfaces: Vec<FittedSurface>,
    pub h_o: f64,
    pub vc: f64,
    pub cav_bounds: (f64, f64),
    pub torque_bounds: (f64, f64),
    /// Stroke ΔL_max; the constraint is `Δx_w < linkage_ratio · ΔL_max`.
    pub stroke_limit: f64,
    pub linkage_ratio: f64,
    pub weights: Weights,
    pub detection_distance: f64,
    /// Torque the speed holder currently asks for.
    pub torque_demand: f64,
    /// Number of evenly spaced cAV candidates, bounds included.
    pub grid_points: usize,
}

pub const DEFAULT_GRID_POINTS: usize = 1000;

impl StrategyProblem {
    pub fn new(surfaces: Vec<FittedSurface>, h_o: f64, vc: f64) -> Self {
        StrategyProblem {
            surfaces,
            h_o,
            vc,
            cav_bounds: (400.0, 6400.0),
            torque_bounds: (-4.0, 4.0),
            stroke_limit: 0.015,
            linkage_ratio: 8.0 / 3.0,
            weights: Weights::default(),
            detection_distance: 1.0,
            torque_demand: 0.0,
            grid_points: DEFAULT_GRID_POINTS,
        }
    }

    pub fn dxw_limit(&self) -> f64 {
        self.linkage_ratio * self.stroke_limit
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        let (lo, hi) = self.cav_bounds;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(invalid("cAV bounds must satisfy 0 < min <= max"));
        }
        let (tlo, thi) = self.torque_bounds;
        if !(tlo <= thi) {
            return Err(invalid("torque bounds must satisfy min <= max"));
        }
        if !(self.vc > 0.0) {
            return Err(invalid("speed must be positive"));
        }
        if !(self.stroke_limit >= 0.0 && self.linkage_ratio > 0.0) {
            return Err(invalid("stroke limit must be non-negative"));
        }
        if self.grid_points == 0 || (self.grid_points == 1 && lo != hi) {
            return Err(invalid("cAV grid needs at least two points"));
        }
        for m in Metric::ALL {
            if !self.surfaces.iter().any(|s| s.spec.metric == m) {
                return Err(invalid(alloc::format!("no fitted surface for {}", m.as_str())));
            }
        }
        Ok(())
    }

    pub fn candidates(&self) -> Vec<f64> {
        let (lo, hi) = self.cav_bounds;
        let n = self.grid_points;
        if n == 1 {
            return vec![lo];
        }
        (0..n).map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect()
    }
}

/// Per-metric surfaces sorted by height, for interpolation in hO.
#[derive(Debug, Clone)]
pub struct SurfaceSet<'a> {
    by_metric: [Vec<&'a FittedSurface>; 3],
}

impl<'a> SurfaceSet<'a> {
    pub fn new(surfaces: &'a [FittedSurface]) -> Self {
        let pick = |m: Metric| {
            let mut v: Vec<&FittedSurface> = surfaces.iter().filter(|s| s.spec.metric == m).collect();
            v.sort_by(|a, b| a.h_o.total_cmp(&b.h_o));
            v
        };
        SurfaceSet { by_metric: [pick(Metric::DeltaEc), pick(Metric::PitchRate), pick(Metric::Cdwo)] }
    }

    /// Metric prediction, linear in hO between the bracketing heights.
    pub fn predict(&self, metric: Metric, h_o: f64, vc: f64, cav: f64) -> (f64, bool) {
        let set = &self.by_metric[metric as usize];
        if set.is_empty() {
            return (f64::NAN, true);
        }
        let heights: Vec<f64> = set.iter().map(|s| s.h_o).collect();
        let (i, t, outside) = bracket(&heights, h_o);
        let a = set[i].evaluate(vc, cav);
        if t == 0.0 || set.len() == 1 {
            return (a, outside);
        }
        let b = set[i + 1].evaluate(vc, cav);
        (if t == 1.0 { b } else { a + t * (b - a) }, outside)
    }

    pub fn predict_all(&self, h_o: f64, vc: f64, cav: f64) -> (Prediction, bool) {
        let (e, x1) = self.predict(Metric::DeltaEc, h_o, vc, cav);
        let (p, x2) = self.predict(Metric::PitchRate, h_o, vc, cav);
        let (c, x3) = self.predict(Metric::Cdwo, h_o, vc, cav);
        (Prediction { delta_ec: e, pitch_rate: p, cdwo: c }, x1 || x2 || x3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Prediction {
    #[cfg_attr(feature = "serde", serde(rename = "delta_Ec"))]
    pub delta_ec: f64,
    pub pitch_rate: f64,
    pub cdwo: f64,
}

impl Prediction {
    /// Objectives in minimisation form.
    fn objectives(&self) -> [f64; 3] {
        [self.delta_ec, libm::fabs(self.pitch_rate), -self.cdwo]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Candidate {
    #[cfg_attr(feature = "serde", serde(rename = "cAV"))]
    pub cav: f64,
    pub predicted: Prediction,
    pub dx_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeasibleSet {
    pub limit: f64,
    pub candidates: Vec<Candidate>,
    /// Every evaluated grid point, feasible or not.
    pub evaluated: usize,
    pub extrapolated: bool,
}

impl FeasibleSet {
    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

fn evaluate_grid(problem: &StrategyProblem, table: &DxwTable) -> (Vec<Candidate>, bool) {
    let set = SurfaceSet::new(&problem.surfaces);
    let mut extrapolated = false;
    let grid = problem
        .candidates()
        .into_iter()
        .map(|cav| {
            let (predicted, x1) = set.predict_all(problem.h_o, problem.vc, cav);
            let d = table.predict(problem.h_o, problem.vc, cav);
            extrapolated |= x1 || d.extrapolated;
            Candidate { cav, predicted, dx_w: d.value }
        })
        .collect();
    (grid, extrapolated)
}

/// Grid candidates whose interpolated Δx_w stays below the stop threshold.
pub fn feasible_set(problem: &StrategyProblem, campaign: &CampaignResult) -> Result<FeasibleSet> {
    problem.validate()?;
    let table = DxwTable::from_records(&campaign.records);
    let (grid, extrapolated) = evaluate_grid(problem, &table);
    let limit = problem.dxw_limit();
    let evaluated = grid.len();
    let candidates = grid.into_iter().filter(|c| c.dx_w < limit).collect();
    Ok(FeasibleSet { limit, candidates, evaluated, extrapolated })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StrategyDecision {
    #[cfg_attr(feature = "serde", serde(rename = "cAV_star"))]
    pub cav_star: f64,
    pub tau_command: f64,
    pub predicted: Prediction,
    pub predicted_dx_w: f64,
    pub feasible: bool,
    pub feasible_count: usize,
    pub pareto_set: Vec<Candidate>,
    /// detection distance / vc.
    pub time_budget: f64,
    pub extrapolated: bool,
}

/// Indices of objective components carrying a positive weight.
fn active(weights: &Weights) -> Vec<usize> {
    [weights.energy, weights.pitch, weights.cdwo].iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(i, _)| i).collect()
}

fn dominates(a: &[f64; 3], b: &[f64; 3], on: &[usize]) -> bool {
    on.iter().all(|&i| a[i] <= b[i]) && on.iter().any(|&i| a[i] < b[i])
}

/// Nondominated candidates over the objectives with positive weight, in cAV order.
pub fn pareto_front(candidates: &[Candidate], weights: &Weights) -> Vec<Candidate> {
    let on = active(weights);
    let objs: Vec<[f64; 3]> = candidates.iter().map(|c| c.predicted.objectives()).collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    // Sorting lexicographically means a candidate can only be dominated by one before it.
    order.sort_by(|&a, &b| {
        on.iter().fold(core::cmp::Ordering::Equal, |acc, &i| acc.then(objs[a][i].total_cmp(&objs[b][i])))
    });
    let mut front: Vec<usize> = Vec::new();
    for &i in &order {
        if !front.iter().any(|&f| dominates(&objs[f], &objs[i], &on)) {
            front.push(i);
        }
    }
    front.sort_unstable();
    front.into_iter().map(|i| candidates[i]).collect()
}

/// Weighted sum of range-normalised objectives for each candidate.
pub fn scalarize(candidates: &[Candidate], weights: &Weights) -> Vec<f64> {
    let w = [weights.energy, weights.pitch, weights.cdwo];
    let objs: Vec<[f64; 3]> = candidates.iter().map(|c| c.predicted.objectives()).collect();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for o in &objs {
        for i in 0..3 {
            lo[i] = lo[i].min(o[i]);
            hi[i] = hi[i].max(o[i]);
        }
    }
    objs.iter()
        .map(|o| {
            (0..3)
                .filter(|&i| w[i] > 0.0)
                .map(|i| {
                    let range = hi[i] - lo[i];
                    let normalized = if range > 0.0 { (o[i] - lo[i]) / range } else { 0.0 };
                    w[i] * normalized
                })
                .sum()
        })
        .collect()
}

/// Index of the smallest score; equal scores resolve to the earliest (smallest cAV).
fn argmin(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        if best.is_none_or(|b| s < scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Solves one anticipation problem against the campaign's Δx_w table.
pub fn optimize(problem: &StrategyProblem, campaign: &CampaignResult) -> Result<StrategyDecision> {
    problem.validate()?;
    let table = DxwTable::from_records(&campaign.records);
    optimize_with_table(problem, &table)
}

pub fn optimize_with_table(problem: &StrategyProblem, table: &DxwTable) -> Result<StrategyDecision> {
    problem.validate()?;
    let time_budget = anticipation_budget(problem.detection_distance, problem.vc)?;
    let (tlo, thi) = problem.torque_bounds;
    let tau_command = problem.torque_demand.clamp(tlo, thi);
    let (grid, extrapolated) = evaluate_grid(problem, table);
    let limit = problem.dxw_limit();
    let feasible: Vec<Candidate> = grid
        .iter()
        .copied()
        .filter(|c| c.dx_w < limit && c.predicted.objectives().iter().all(|x| x.is_finite()))
        .collect();

    if feasible.is_empty() {
        // Least violation; NaN table entries count as the worst.
        let violation = |c: &Candidate| if c.dx_w.is_nan() { f64::INFINITY } else { c.dx_w - limit };
        let best = grid
            .iter()
            .fold(None::<&Candidate>, |b, c| match b {
                Some(b) if violation(b) <= violation(c) => Some(b),
                _ => Some(c),
            })
            .expect("grid has at least one point");
        return Ok(StrategyDecision {
            cav_star: best.cav,
            tau_command,
            predicted: best.predicted,
            predicted_dx_w: best.dx_w,
            feasible: false,
            feasible_count: 0,
            pareto_set: Vec::new(),
            time_budget,
            extrapolated,
        });
    }

    let scores = scalarize(&feasible, &problem.weights);
    let star = feasible[argmin(&scores).expect("finite objectives")];
    Ok(StrategyDecision {
        cav_star: star.cav,
        tau_command,
        predicted: star.predicted,
        predicted_dx_w: star.dx_w,
        feasible: true,
        feasible_count: feasible.len(),
        pareto_set: pareto_front(&feasible, &problem.weights),
        time_budget,
        extrapolated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doe::{DoePlan, Provenance};
    use crate::fitting::SurfaceSpec;
    use crate::scenario::Outcome;
    use proptest::prelude::*;

    pub(crate) fn surface(metric: Metric, h_o: f64, terms: &[((u32, u32), f64)]) -> FittedSurface {
        let spec = SurfaceSpec::for_metric(metric);
        let coefficients =
            spec.basis.iter().map(|m| terms.iter().find(|(t, _)| t == m).map_or(0.0, |(_, c)| *c)).collect();
        FittedSurface { spec, h_o, coefficients, r_squared: 1.0, rmse: 0.0, condition_number: 1.0, n_points: 25, rank_deficient: false }
    }

    fn record(h_o: f64, vc: f64, cav: f64, dx: f64) -> TrialRecord {
        TrialRecord {
            h_o,
            vc,
            cav,
            delta_ec: 0.0,
            pitch_rate_t2: 0.0,
            cdwo: 0.0,
            dx_w_max: dx,
            t1: 0.0,
            t2: 0.1,
            t3: 0.2,
            outcome: Outcome::Cleared,
        }
    }

    /// Δx_w = 0.01·hO_index + 1e-3·vc + 10/cAV on a 2×3×5 grid.
    fn campaign() -> CampaignResult {
        let mut records = Vec::new();
        for (i, h) in [0.02, 0.04].into_iter().enumerate() {
            for vc in [3.0, 9.0, 15.0] {
                for cav in [400.0, 800.0, 1600.0, 3200.0, 6400.0] {
                    records.push(record(h, vc, cav, 0.01 * i as f64 + 1e-3 * vc + 10.0 / cav));
                }
            }
        }
        CampaignResult { plan: DoePlan::default(), records, failures: Vec::new(), provenance: Provenance::default() }
    }

    fn flat_surfaces(h_o: f64) -> Vec<FittedSurface> {
        vec![
            surface(Metric::DeltaEc, h_o, &[((0, 0), 1.0), ((0, 1), 1e-3)]),
            surface(Metric::PitchRate, h_o, &[((0, 0), 1.0)]),
            surface(Metric::Cdwo, h_o, &[((0, 0), 0.01)]),
        ]
    }

    #[test]
    fn budget_values() {
        assert!((anticipation_budget(1.0, 15.0).unwrap() - 0.0667).abs() < 5e-4);
        assert!((anticipation_budget(1.0, 3.0).unwrap() - 0.3333).abs() < 1e-4);
        assert!((anticipation_budget(2.0, 15.0).unwrap() - 0.1333).abs() < 1e-4);
        assert!(anticipation_budget(1.0, 0.0).is_err());
    }

    #[test]
    fn dxw_interpolation_identities() {
        let c = campaign();
        let at = predict_dxw(0.02, 9.0, 1600.0, &c);
        assert!((at.value - (9e-3 + 10.0 / 1600.0)).abs() < 1e-15 && !at.extrapolated);
        let mid = predict_dxw(0.02, 9.0, 1200.0, &c).value;
        let mean = 0.5 * ((9e-3 + 10.0 / 800.0) + (9e-3 + 10.0 / 1600.0));
        assert!((mid - mean).abs() < 1e-15);
        let out = predict_dxw(0.05, 9.0, 1600.0, &c);
        assert!(out.extrapolated);
        assert!((out.value - (0.01 + 9e-3 + 10.0 / 1600.0)).abs() < 1e-15);
    }

    #[test]
    fn stroke_extremes() {
        let c = campaign();
        let mut p = StrategyProblem::new(flat_surfaces(0.02), 0.02, 9.0);
        p.grid_points = 50;
        p.stroke_limit = f64::INFINITY;
        assert_eq!(feasible_set(&p, &c).unwrap().candidates.len(), 50);
        p.stroke_limit = 0.0;
        assert!(feasible_set(&p, &c).unwrap().is_empty());
        let d = optimize(&p, &c).unwrap();
        assert!(!d.feasible);
        // Least violation is at the largest cAV (smallest excursion).
        assert_eq!(d.cav_star, 6400.0);
    }

    #[test]
    fn low_damping_excluded_by_stroke() {
        let c = campaign();
        let mut p = StrategyProblem::new(flat_surfaces(0.02), 0.02, 9.0);
        // Limit 0.02 ⇒ need 10/cAV < 0.011 ⇒ cAV > 909.
        p.stroke_limit = 0.02 / p.linkage_ratio;
        let f = feasible_set(&p, &c).unwrap();
        assert!(f.candidates.iter().all(|k| k.cav > 909.0));
        assert!(f.candidates.len() < f.evaluated);
    }

    #[test]
    fn monotone_energy_picks_lower_bound() {
        let mut p = StrategyProblem::new(flat_surfaces(0.02), 0.02, 9.0);
        p.weights = Weights { energy: 1.0, pitch: 0.0, cdwo: 0.0 };
        p.stroke_limit = f64::INFINITY;
        let d = optimize(&p, &campaign()).unwrap();
        assert!(d.feasible);
        assert_eq!(d.cav_star, 400.0);
    }

    #[test]
    fn exact_tie_breaks_to_smaller_damping() {
        let mut surfaces = flat_surfaces(0.02);
        // ΔE_c flat; pitch and CDWO cancel with equal weights.
        surfaces[0] = surface(Metric::DeltaEc, 0.02, &[((0, 0), 5.0)]);
        surfaces[1] = surface(Metric::PitchRate, 0.02, &[((0, 0), 1.0), ((0, 1), 1.0)]);
        surfaces[2] = surface(Metric::Cdwo, 0.02, &[((0, 0), 1.0), ((0, 1), 1.0)]);
        let mut p = StrategyProblem::new(surfaces, 0.02, 9.0);
        p.stroke_limit = f64::INFINITY;
        p.grid_points = 11;
        p.cav_bounds = (1.0, 2.0);
        let f = feasible_set(&p, &campaign()).unwrap();
        let scores = scalarize(&f.candidates, &p.weights);
        assert!(scores.iter().all(|&s| s == scores[0]));
        assert_eq!(optimize(&p, &campaign()).unwrap().cav_star, 1.0);
    }

    #[test]
    fn zero_weights_rejected() {
        let mut p = StrategyProblem::new(flat_surfaces(0.02), 0.02, 9.0);
        p.weights = Weights { energy: 0.0, pitch: 0.0, cdwo: 0.0 };
        assert!(optimize(&p, &campaign()).is_err());
    }

    #[test]
    fn heights_interpolate_linearly() {
        let mut s = flat_surfaces(0.02);
        s.push(surface(Metric::DeltaEc, 0.04, &[((0, 0), 3.0)]));
        let set = SurfaceSet::new(&s);
        let (v, out) = set.predict(Metric::DeltaEc, 0.03, 1.0, 0.0);
        assert!((v - 2.0).abs() < 1e-12 && !out);
    }

    proptest! {
        #[test]
        fn dxw_stays_within_cell_corners(h in 0.02f64..0.04, vc in 3.0f64..15.0, cav in 400.0f64..6400.0) {
            let c = campaign();
            let table = DxwTable::from_records(&c.records);
            let v = table.predict(h, vc, cav);
            prop_assert!(!v.extrapolated);
            let hs = [0.02, 0.04];
            let vs = [3.0, 9.0, 15.0];
            let cs = [400.0, 800.0, 1600.0, 3200.0, 6400.0];
            let lo_hi = |g: &[f64], x: f64| {
                let i = g.iter().rposition(|&y| y <= x).unwrap().min(g.len() - 2);
                (g[i], g[i + 1])
            };
            let (h0, h1) = lo_hi(&hs, h);
            let (v0, v1) = lo_hi(&vs, vc);
            let (c0, c1) = lo_hi(&cs, cav);
            let mut corners = Vec::new();
            for a in [h0, h1] {
                for b in [v0, v1] {
                    for d in [c0, c1] {
                        corners.push(table.predict(a, b, d).value);
                    }
                }
            }
            let lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v.value >= lo - 1e-15 && v.value <= hi + 1e-15);
        }

        #[test]
        fn decisions_respect_constraints(
            a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0,
            we in 0.0f64..1.0, wp in 0.0f64..1.0, wc in 0.01f64..1.0,
            limit in 0.0f64..0.05, demand in -10.0f64..10.0, scale in 0.1f64..10.0,
        ) {
            let surfaces = vec![
                surface(Metric::DeltaEc, 0.02, &[((0, 0), 10.0), ((0, 1), a * 1e-3), ((0, 2), 1e-7)]),
                surface(Metric::PitchRate, 0.02, &[((0, 0), b), ((0, 1), 1e-4)]),
                surface(Metric::Cdwo, 0.02, &[((0, 0), 0.01), ((0, 1), c * 1e-6)]),
            ];
            let mut p = StrategyProblem::new(surfaces, 0.02, 9.0);
            p.grid_points = 200;
            p.weights = Weights { energy: we, pitch: wp, cdwo: wc };
            p.stroke_limit = limit;
            p.torque_demand = demand;
            let camp = campaign();
            let d = optimize(&p, &camp).unwrap();
            prop_assert!(d.tau_command >= p.torque_bounds.0 && d.tau_command <= p.torque_bounds.1);
            prop_assert!(d.cav_star >= p.cav_bounds.0 && d.cav_star <= p.cav_bounds.1);
            if d.feasible {
                prop_assert!(predict_dxw(0.02, 9.0, d.cav_star, &camp).value < p.dxw_limit());
                prop_assert!(d.pareto_set.iter().any(|k| k.cav == d.cav_star));
            }
            let scaled = Weights { energy: we * scale, pitch: wp * scale, cdwo: wc * scale };
            p.weights = scaled;
            prop_assert_eq!(optimize(&p, &camp).unwrap().cav_star, d.cav_star);
        }
    }
}
