//! Least-squares response surfaces: polynomials in (vc, cAV) fitted per
//! obstacle height.

use crate::error::{invalid, Error, Result};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Metric {
    #[cfg_attr(feature = "serde", serde(rename = "delta_Ec"))]
    DeltaEc,
    #[cfg_attr(feature = "serde", serde(rename = "pitch_rate"))]
    PitchRate,
    #[cfg_attr(feature = "serde", serde(rename = "cdwo"))]
    Cdwo,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::DeltaEc, Metric::PitchRate, Metric::Cdwo];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::DeltaEc => "delta_Ec",
            Metric::PitchRate => "pitch_rate",
            Metric::Cdwo => "cdwo",
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

/// Monomial `vc^a · cAV^b` written as `(a, b)`.
pub type Monomial = (u32, u32);

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SurfaceSpec {
    pub metric: Metric,
    pub basis: Vec<Monomial>,
}

impl SurfaceSpec {
    /// Fixed basis of each metric.
    pub fn for_metric(metric: Metric) -> Self {
        let basis: &[Monomial] = match metric {
            Metric::DeltaEc => &[(0, 0), (1, 0), (0, 1), (2, 0), (1, 1)],
            Metric::PitchRate => &[(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2)],
            Metric::Cdwo => &[(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (2, 1), (1, 2), (0, 3)],
        };
        SurfaceSpec { metric, basis: basis.to_vec() }
    }

    pub fn has_constant(&self) -> bool {
        self.basis.contains(&(0, 0))
    }

    /// Every lower-order monomial of each basis member is also present.
    pub fn is_hierarchical(&self) -> bool {
        self.basis.iter().all(|&(a, b)| (0..=a).all(|i| (0..=b).all(|j| self.basis.contains(&(i, j)))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Scaling {
    Raw,
    /// Fit on centred, unit-variance regressors and convert back to raw units.
    #[default]
    Standardized,
}

/// One observation: `(vc, cAV, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub vc: f64,
    pub cav: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FittedSurface {
    pub spec: SurfaceSpec,
    pub h_o: f64,
    /// Raw-unit coefficients in basis order.
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
    pub rmse: f64,
    /// Ratio of extreme singular values of the design matrix actually solved.
    pub condition_number: f64,
    pub n_points: usize,
    pub rank_deficient: bool,
}

impl FittedSurface {
    pub fn evaluate(&self, vc: f64, cav: f64) -> f64 {
        evaluate_surface(self, vc, cav)
    }
}

fn powi(x: f64, n: u32) -> f64 {
    (0..n).fold(1.0, |acc, _| acc * x)
}

fn monomial(m: Monomial, vc: f64, cav: f64) -> f64 {
    powi(vc, m.0) * powi(cav, m.1)
}

pub fn evaluate_surface(surface: &FittedSurface, vc: f64, cav: f64) -> f64 {
    surface.spec.basis.iter().zip(&surface.coefficients).map(|(&m, c)| c * monomial(m, vc, cav)).sum()
}

/// Row-major design matrix of `basis` evaluated at `points`.
pub fn design_matrix(basis: &[Monomial], points: &[(f64, f64)]) -> Vec<f64> {
    points.iter().flat_map(|&(vc, cav)| basis.iter().map(move |&m| monomial(m, vc, cav))).collect()
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var);
    (mean, if std > 0.0 { std } else { 1.0 })
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Fits `spec` to the observations of one obstacle height.
pub fn fit_surface(obs: &[Observation], h_o: f64, spec: &SurfaceSpec, scaling: Scaling) -> Result<FittedSurface> {
    let p = spec.basis.len();
    if p == 0 {
        return Err(invalid("empty basis"));
    }
    if obs.len() < p {
        return Err(Error::Underdetermined { points: obs.len(), terms: p });
    }
    if obs.iter().any(|o| !(o.vc.is_finite() && o.cav.is_finite() && o.y.is_finite())) {
        return Err(invalid("non-finite observation"));
    }
    if p > 1 && obs.iter().all(|o| o.vc == obs[0].vc && o.cav == obs[0].cav) {
        return Err(Error::RankDeficient);
    }
    let standardized = scaling == Scaling::Standardized;
    if standardized && !spec.is_hierarchical() {
        return Err(invalid("standardized scaling needs a basis closed under lower powers"));
    }

    let (mv, sv) = if standardized { mean_std(obs.iter().map(|o| o.vc)) } else { (0.0, 1.0) };
    let (mc, sc) = if standardized { mean_std(obs.iter().map(|o| o.cav)) } else { (0.0, 1.0) };
    let points: Vec<(f64, f64)> = obs.iter().map(|o| ((o.vc - mv) / sv, (o.cav - mc) / sc)).collect();
    let a = design_matrix(&spec.basis, &points);
    let y: Vec<f64> = obs.iter().map(|o| o.y).collect();
    let m = obs.len();

    let sigma = singular_values(&a, m, p);
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    let smin = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = smax * (m.max(p) as f64) * f64::EPSILON * 16.0;
    let rank_deficient = smin <= tol;
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let scaled = if rank_deficient { min_norm_solve(&a, m, p, &y, tol) } else { householder_solve(&a, m, p, &y)? };

    let coefficients = if standardized { back_transform(&spec.basis, &scaled, (mv, sv), (mc, sc)) } else { scaled };
    let mut surface = FittedSurface {
        spec: spec.clone(),
        h_o,
        coefficients,
        r_squared: 0.0,
        rmse: 0.0,
        condition_number,
        n_points: m,
        rank_deficient,
    };
    let ybar = y.iter().sum::<f64>() / m as f64;
    let (ss_res, ss_tot) = obs.iter().fold((0.0, 0.0), |(r, t), o| {
        let e = o.y - surface.evaluate(o.vc, o.cav);
        (r + e * e, t + (o.y - ybar) * (o.y - ybar))
    });
    surface.rmse = libm::sqrt(ss_res / m as f64);
    let scale = y.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    surface.r_squared = if ss_tot <= 1e-28 * scale {
        if ss_res <= 1e-20 * scale { 1.0 } else { 0.0 }
    } else {
        1.0 - ss_res / ss_tot
    };
    if spec.has_constant() {
        surface.r_squared = surface.r_squared.clamp(0.0, 1.0);
    }
    Ok(surface)
}

/// Expands `Σ c_(a,b) u^a w^b` with `u = (vc - mv)/sv`, `w = (cav - mc)/sc`
/// into raw monomials of the same (hierarchical) basis.
fn back_transform(basis: &[Monomial], coef: &[f64], (mv, sv): (f64, f64), (mc, sc): (f64, f64)) -> Vec<f64> {
    let mut raw = vec![0.0; basis.len()];
    for (&(a, b), &c) in basis.iter().zip(coef) {
        let lead = c / (powi(sv, a) * powi(sc, b));
        for i in 0..=a {
            let fi = binomial(a, i) * powi(-mv, a - i);
            for j in 0..=b {
                let fj = binomial(b, j) * powi(-mc, b - j);
                let k = basis.iter().position(|&m| m == (i, j)).expect("hierarchical basis");
                raw[k] += lead * fi * fj;
            }
        }
    }
    raw
}

/// Least squares through Householder QR of the row-major `m × n` matrix `a`.
pub fn householder_solve(a: &[f64], m: usize, n: usize, b: &[f64]) -> Result<Vec<f64>> {
    let mut r = a.to_vec();
    let mut qtb = b.to_vec();
    for k in 0..n {
        let norm = libm::sqrt((k..m).map(|i| r[i * n + k] * r[i * n + k]).sum::<f64>());
        if norm == 0.0 {
            return Err(Error::RankDeficient);
        }
        let alpha = if r[k * n + k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| r[i * n + k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..n {
            let dot: f64 = (k..m).map(|i| v[i - k] * r[i * n + j]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                r[i * n + j] -= f * v[i - k];
            }
        }
        let dot: f64 = (k..m).map(|i| v[i - k] * qtb[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in k..m {
            qtb[i] -= f * v[i - k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = ((k + 1)..n).map(|j| r[k * n + j] * x[j]).sum();
        let d = r[k * n + k];
        if d == 0.0 {
            return Err(Error::RankDeficient);
        }
        x[k] = (qtb[k] - s) / d;
    }
    Ok(x)
}

/// One-sided Jacobi: returns the rotated columns `A·V` (row-major) and `V`.
fn jacobi(a: &[f64], m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut u = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let (x, y) = (u[i * n + p], u[i * n + q]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || libm::fabs(gamma) <= 1e-15 * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (libm::fabs(zeta) + libm::sqrt(1.0 + zeta * zeta));
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (u[i * n + p], u[i * n + q]);
                    u[i * n + p] = c * x - s * y;
                    u[i * n + q] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[i * n + p], v[i * n + q]);
                    v[i * n + p] = c * x - s * y;
                    v[i * n + q] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    (u, v)
}

/// Singular values of the row-major `m × n` matrix (unordered).
pub fn singular_values(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let (u, _) = jacobi(a, m, n);
    (0..n).map(|j| libm::sqrt((0..m).map(|i| u[i * n + j] * u[i * n + j]).sum::<f64>())).collect()
}

/// Minimum-norm least squares via the SVD, discarding singular values `≤ tol`.
fn min_norm_solve(a: &[f64], m: usize, n: usize, b: &[f64], tol: f64) -> Vec<f64> {
    let (u, v) = jacobi(a, m, n);
    let mut x = vec![0.0; n];
    for j in 0..n {
        let sigma2: f64 = (0..m).map(|i| u[i * n + j] * u[i * n + j]).sum();
        let sigma = libm::sqrt(sigma2);
        if sigma <= tol {
            continue;
        }
        // (u_j/σ)ᵀ b / σ
        let proj = (0..m).map(|i| u[i * n + j] * b[i]).sum::<f64>() / sigma2;
        for k in 0..n {
            x[k] += proj * v[k * n + j];
        }
    }
    x
}

/// Options for assembling the per-height surface table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub scaling: Scaling,
    /// Drop trials whose front wheel travel reached the stop threshold.
    pub exclude_stroke_violations: bool,
    /// Threshold on Δx_w, normally `(8/3)·ΔL_max`.
    pub stroke_threshold: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { scaling: Scaling::Standardized, exclude_stroke_violations: false, stroke_threshold: f64::INFINITY }
    }
}

/// Input row for the report: one trial's factors and metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseRow {
    pub h_o: f64,
    pub vc: f64,
    pub cav: f64,
    pub delta_ec: f64,
    pub pitch_rate: f64,
    pub cdwo: f64,
    pub dx_w_max: f64,
}

impl ResponseRow {
    pub fn metric(&self, m: Metric) -> f64 {
        match m {
            Metric::DeltaEc => self.delta_ec,
            Metric::PitchRate => self.pitch_rate,
            Metric::Cdwo => self.cdwo,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportCell {
    pub metric: Metric,
    pub h_o: f64,
    /// Rows flagged as reaching the stroke threshold.
    pub flagged: usize,
    pub surface: core::result::Result<FittedSurface, String>,
}

/// Fits every (metric, obstacle height) pair; per-cell failures are kept in the table.
pub fn fit_report(rows: &[ResponseRow], opts: &ReportOptions) -> Vec<ReportCell> {
    let mut heights: Vec<f64> = rows.iter().map(|r| r.h_o).filter(|h| h.is_finite()).collect();
    heights.sort_by(f64::total_cmp);
    heights.dedup();
    let mut cells = Vec::with_capacity(heights.len() * Metric::ALL.len());
    for metric in Metric::ALL {
        let spec = SurfaceSpec::for_metric(metric);
        for &h in &heights {
            let at_h = rows.iter().filter(|r| r.h_o == h);
            let flagged = at_h.clone().filter(|r| !(r.dx_w_max < opts.stroke_threshold)).count();
            let obs: Vec<Observation> = at_h
                .filter(|r| !opts.exclude_stroke_violations || r.dx_w_max < opts.stroke_threshold)
                .filter(|r| r.metric(metric).is_finite())
                .map(|r| Observation { vc: r.vc, cav: r.cav, y: r.metric(metric) })
                .collect();
            let surface = fit_surface(&obs, h, &spec, opts.scaling).map_err(|e| alloc::format!("{e}"));
            cells.push(ReportCell { metric, h_o: h, flagged, surface });
        }
    }
    cells
}
