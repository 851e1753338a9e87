//! Run configuration: a TOML document with one section per pipeline stage.
//!
//! Contact constants and damping levels are written in the millimetre-based
//! table units (N/mm, N·s/mm, mm, mm/s); everything else is SI.

use std::path::{Path, PathBuf};

use crossing_core::contact::ContactParams;
use crossing_core::doe::{DoePlan, DEFAULT_DAMPINGS, DEFAULT_HEIGHT_FRACTIONS, DEFAULT_SPEEDS};
use crossing_core::fitting::{ReportOptions, Scaling};
use crossing_core::scenario::{EnergyBasis, SimSettings, TorqueSchedule, TrialConfig};
use crossing_core::vehicle::VehicleParams;
use serde::{Deserialize, Serialize};

use crate::error::LabError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub contact: ContactSection,
    #[serde(default)]
    pub plan: PlanSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub fitting: FittingSection,
    #[serde(default)]
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            vehicle: VehicleParams::default(),
            contact: ContactSection::default(),
            plan: PlanSection::default(),
            solver: SolverSection::default(),
            fitting: FittingSection::default(),
            paths: PathsSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactSection {
    pub stiffness_n_per_mm: f64,
    pub force_exponent: f64,
    pub damping_ns_per_mm: f64,
    pub penetration_depth_mm: f64,
    pub mu_static: f64,
    pub mu_dynamic: f64,
    pub stiction_velocity_mm_s: f64,
    pub friction_velocity_mm_s: f64,
}

impl Default for ContactSection {
    fn default() -> Self {
        ContactSection {
            stiffness_n_per_mm: 1000.0,
            force_exponent: 1.1,
            damping_ns_per_mm: 10.0,
            penetration_depth_mm: 0.01,
            mu_static: 1.0,
            mu_dynamic: 0.95,
            stiction_velocity_mm_s: 1500.0,
            friction_velocity_mm_s: 4000.0,
        }
    }
}

impl ContactSection {
    pub fn params(&self) -> ContactParams {
        ContactParams::from_table_units(
            self.stiffness_n_per_mm,
            self.force_exponent,
            self.damping_ns_per_mm,
            self.penetration_depth_mm,
            self.mu_static,
            self.mu_dynamic,
            self.stiction_velocity_mm_s,
            self.friction_velocity_mm_s,
        )
    }
}

/// Factor levels as written in the experiment table: heights in percent of the
/// wheel radius, damping in N·s/mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    pub h_o_percent_wr: Vec<f64>,
    pub vc_mps: Vec<f64>,
    pub cav_ns_per_mm: Vec<f64>,
    pub replicates: u32,
}

impl Default for PlanSection {
    fn default() -> Self {
        PlanSection {
            h_o_percent_wr: DEFAULT_HEIGHT_FRACTIONS.iter().map(|f| (f * 100.0_f64).round()).collect(),
            vc_mps: DEFAULT_SPEEDS.to_vec(),
            cav_ns_per_mm: DEFAULT_DAMPINGS.iter().map(|c| c / 1000.0).collect(),
            replicates: 1,
        }
    }
}

impl PlanSection {
    pub fn to_plan(&self, wheel_radius: f64) -> DoePlan {
        DoePlan {
            h_o_levels: self.h_o_percent_wr.iter().map(|p| p / 100.0 * wheel_radius).collect(),
            vc_levels: self.vc_mps.clone(),
            cav_levels: self.cav_ns_per_mm.iter().map(|c| c * 1000.0).collect(),
            replicates: self.replicates,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub dt: f64,
    pub horizon: f64,
    pub post_apex: f64,
    pub approach_gap: f64,
    pub stall_window: f64,
    pub energy_basis: EnergyBasis,
    pub torque: TorqueSchedule,
    /// Campaign worker threads; 0 uses every available core.
    pub workers: usize,
    /// Write every n-th integration step to the time-series CSV.
    pub timeseries_stride: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SimSettings::default();
        SolverSection {
            dt: s.dt,
            horizon: s.horizon,
            post_apex: s.post_apex,
            approach_gap: s.approach_gap,
            stall_window: s.stall_window,
            energy_basis: s.energy_basis,
            torque: TorqueSchedule::default(),
            workers: 0,
            timeseries_stride: 1,
        }
    }
}

impl SolverSection {
    pub fn settings(&self) -> SimSettings {
        SimSettings {
            dt: self.dt,
            horizon: self.horizon,
            post_apex: self.post_apex,
            approach_gap: self.approach_gap,
            stall_window: self.stall_window,
            energy_basis: self.energy_basis,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FittingSection {
    pub scaling: Scaling,
    /// Leave out trials whose front travel reached `(8/3)·stroke_limit`.
    pub exclude_stroke_violations: bool,
}

impl Default for FittingSection {
    fn default() -> Self {
        FittingSection { scaling: Scaling::Standardized, exclude_stroke_violations: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub output_dir: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection { output_dir: PathBuf::from("out") }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, LabError> {
        let de = toml::Deserializer::new(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| LabError::Config {
            origin: origin.to_string(),
            field: e.path().to_string(),
            message: e.inner().message().trim().to_string(),
        })?;
        cfg.validate(origin)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    /// Loads `path`, or the defaults when no file is given.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, LabError> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    fn validate(&self, origin: &str) -> Result<(), LabError> {
        let fail = |field: &str, message: String| {
            Err(LabError::Config { origin: origin.to_string(), field: field.to_string(), message })
        };
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return fail(
                "schema_version",
                format!("unsupported schema version {}, expected {CONFIG_SCHEMA_VERSION}", self.schema_version),
            );
        }
        if let Err(e) = self.vehicle.validate() {
            return fail("vehicle", e.to_string());
        }
        if let Err(e) = self.contact.params().validate() {
            return fail("contact", e.to_string());
        }
        if let Err(e) = self.plan().validate(self.vehicle.wheel_radius) {
            return fail("plan", e.to_string());
        }
        if self.solver.timeseries_stride == 0 {
            return fail("solver.timeseries_stride", "must be at least 1".into());
        }
        let probe = TrialConfig { obstacle_height: 0.0, speed: 1.0, damping: 1.0, ..self.trial_template() };
        if let Err(e) = probe.validate() {
            return fail("solver", e.to_string());
        }
        Ok(())
    }

    pub fn plan(&self) -> DoePlan {
        self.plan.to_plan(self.vehicle.wheel_radius)
    }

    /// Trial settings shared by every cell; height, speed and damping come from the vehicle defaults.
    pub fn trial_template(&self) -> TrialConfig {
        TrialConfig {
            vehicle: self.vehicle,
            contact: self.contact.params(),
            obstacle_height: 0.0,
            speed: 1.0,
            damping: self.vehicle.front_longitudinal_damping,
            torque: self.solver.torque,
            sim: self.solver.settings(),
        }
    }

    pub fn report_options(&self) -> ReportOptions {
        ReportOptions {
            scaling: self.fitting.scaling,
            exclude_stroke_violations: self.fitting.exclude_stroke_violations,
            stroke_threshold: self.vehicle.longitudinal_travel_limit(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }
}
