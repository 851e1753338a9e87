//! One obstacle-crossing trial: approach under speed hold, collision, crossing
//! and ballistic phases, followed by event detection and metric extraction.
//!
//! Event definitions:
//! * `t1`: the front wheel first penetrates any step feature;
//! * `t2`: the rear wheel's contact with the step face/corner ends, or the rear
//!   axle passes the face plane while airborne (flyover);
//! * `t3`: the chassis apex after `t2`.

use crate::contact::{ContactParams, Obstacle};
use crate::error::{invalid, Error, Result};
use crate::vehicle::{speed_controller_step, ControllerState, SpeedGains, VehicleModel, VehicleParams};
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

/// Drive torque policy from `t1` onwards; the approach always holds speed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum TorqueSchedule {
    /// Keep the last approach-phase torque.
    #[default]
    HoldLast,
    /// Keep the speed controller in the loop for the whole trial.
    SpeedHold,
    /// Constant per-axle torque from `t1`.
    Constant(f64),
    /// `at_t1` between `t1` and `t2`, `at_t2` afterwards.
    Crossing { at_t1: f64, at_t2: f64 },
}

/// Which kinetic energy the ΔE_c metric is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum EnergyBasis {
    /// Chassis, axles and wheel spin.
    #[default]
    Total,
    ChassisOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimSettings {
    pub dt: f64,
    /// Hard cap on simulated time.
    pub horizon: f64,
    /// Simulated time kept after the running apex once `t2` is known.
    pub post_apex: f64,
    /// Free ground between the front tyre and the step face at `t = 0`.
    pub approach_gap: f64,
    /// The vehicle counts as stalled after moving backwards this long before `t2`.
    pub stall_window: f64,
    pub energy_basis: EnergyBasis,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            dt: 2e-5,
            horizon: 3.0,
            post_apex: 1.0,
            approach_gap: 0.3,
            stall_window: 0.25,
            energy_basis: EnergyBasis::Total,
        }
    }
}

/// Largest time step the default contact and suspension stiffness tolerate.
pub const DT_MAX: f64 = 5e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialConfig {
    pub vehicle: VehicleParams,
    pub contact: ContactParams,
    pub obstacle_height: f64,
    pub speed: f64,
    /// Front longitudinal damping c_AV per wheel; overrides the vehicle's value.
    pub damping: f64,
    pub torque: TorqueSchedule,
    pub sim: SimSettings,
}

impl TrialConfig {
    pub fn new(obstacle_height: f64, speed: f64, damping: f64) -> Self {
        TrialConfig {
            vehicle: VehicleParams::default(),
            contact: ContactParams::default(),
            obstacle_height,
            speed,
            damping,
            torque: TorqueSchedule::HoldLast,
            sim: SimSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let wr = self.vehicle.wheel_radius;
        if !(self.obstacle_height >= 0.0 && self.obstacle_height <= 1.5 * wr) {
            return Err(invalid(alloc::format!(
                "obstacle height {} m outside [0, 1.5·wr]",
                self.obstacle_height
            )));
        }
        if !(self.speed > 0.0 && self.speed <= 20.0) {
            return Err(invalid(alloc::format!("speed {} m/s outside (0, 20]", self.speed)));
        }
        if !(self.damping > 0.0 && self.damping.is_finite()) {
            return Err(invalid(alloc::format!("damping {} N·s/m must be positive", self.damping)));
        }
        let s = &self.sim;
        if !(s.dt > 0.0 && s.dt <= DT_MAX) {
            return Err(invalid(alloc::format!("time step {} s outside (0, {DT_MAX}]", s.dt)));
        }
        if !(s.horizon > 0.0 && s.post_apex >= 0.0 && s.approach_gap >= 0.0 && s.stall_window > 0.0) {
            return Err(invalid("simulation horizon, windows and approach gap must be positive"));
        }
        Ok(())
    }
}

/// One recorded step of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Sample {
    pub t: f64,
    pub x_c: f64,
    pub z_c: f64,
    pub theta: f64,
    pub v_x: f64,
    pub v_z: f64,
    pub theta_dot: f64,
    pub s_fx: f64,
    pub s_fz: f64,
    pub s_rz: f64,
    pub tau: f64,
    pub e_c: f64,
    pub e_c_chassis: f64,
    pub e_pot: f64,
    pub front_contact: u8,
    pub rear_contact: u8,
    /// Front wheel clearance to the nearest step feature (negative: penetrating).
    pub front_step_gap: f64,
    /// Front and rear clearance to the step face segment including its corner.
    pub front_edge_gap: f64,
    pub rear_edge_gap: f64,
    pub x_front: f64,
    pub z_front: f64,
    pub x_rear: f64,
    pub z_rear: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TimeSeries {
    pub obstacle: Obstacle,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Outcome {
    /// Both axles ended past the step face; the rear wheel rolled or bounced over it.
    Cleared,
    /// The vehicle stopped or rolled back before the crossing ended.
    Stalled,
    Tipped,
    /// The rear wheel hit the step and did not get past the face.
    RearContact,
    /// The rear wheel passed over the step face without touching it.
    RearFlyover,
}

impl Outcome {
    pub const ALL: [Outcome; 5] =
        [Outcome::Cleared, Outcome::Stalled, Outcome::Tipped, Outcome::RearContact, Outcome::RearFlyover];

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Cleared => "cleared",
            Outcome::Stalled => "stalled",
            Outcome::Tipped => "tipped",
            Outcome::RearContact => "rear-contact",
            Outcome::RearFlyover => "rear-flyover",
        }
    }

    pub fn parse(s: &str) -> Option<Outcome> {
        Outcome::ALL.into_iter().find(|o| o.as_str() == s)
    }

    /// The vehicle ended past the obstacle.
    pub fn is_success(self) -> bool {
        matches!(self, Outcome::Cleared | Outcome::RearFlyover)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CrossingEvents {
    pub t1: f64,
    pub t2: Option<f64>,
    pub t3: Option<f64>,
    pub outcome: Outcome,
    /// Whether the front wheel touched a step feature at all (false on flat ground).
    pub front_step_contact: bool,
}

impl CrossingEvents {
    /// End of the metric window: `t2`, or the last sample when the crossing never ended.
    pub fn window_end(&self, series: &TimeSeries) -> f64 {
        self.t2.unwrap_or_else(|| series.samples.last().map_or(self.t1, |s| s.t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CrossingMetrics {
    /// Max minus min kinetic energy over `[t1, t2]`, on the configured basis.
    pub delta_ec: f64,
    /// Same, chassis-only kinetic energy.
    pub delta_ec_chassis: f64,
    /// Chassis pitch rate at `t2`, positive nose-up.
    pub pitch_rate_t2: f64,
    /// Time from `t1` to the maximum longitudinal shortening of the front
    /// suspension while the front wheel touches the step face or corner.
    pub cdwo: f64,
    /// Time from `t1` until the front wheel leaves the step face/corner.
    pub contact_duration: f64,
    pub dx_w_max: f64,
    pub min_speed: f64,
    pub apex_height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialDiagnostics {
    pub steps: usize,
    /// Worst relative drift of mechanical energy plus damper losses over any
    /// airborne stretch (windows of at most 0.3 s).
    pub ballistic_energy_drift: f64,
    /// Largest ground slip seen before `t1`.
    pub approach_slip: f64,
    /// Largest relative speed error before `t1`.
    pub approach_speed_error: f64,
    pub max_abs_s_fx: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub config: TrialConfig,
    pub series: TimeSeries,
    pub events: CrossingEvents,
    pub metrics: CrossingMetrics,
    pub diagnostics: TrialDiagnostics,
}

impl TrialResult {
    pub fn outcome(&self) -> Outcome {
        self.events.outcome
    }
}

/// Builds the simulation model of a trial; the obstacle sits `approach_gap`
/// ahead of the front tyre of the vehicle at its initial pose.
pub fn trial_model(cfg: &TrialConfig) -> Result<VehicleModel> {
    let vehicle = VehicleParams { front_longitudinal_damping: cfg.damping, ..cfg.vehicle };
    let obstacle_x = vehicle.wheelbase / 2.0 + vehicle.wheel_radius + cfg.sim.approach_gap;
    VehicleModel::new(vehicle, cfg.contact, Obstacle { x: obstacle_x, height: cfg.obstacle_height })
}

/// Simulates one trial end to end.
pub fn run_trial(cfg: &TrialConfig) -> Result<TrialResult> {
    cfg.validate()?;
    let model = trial_model(cfg)?;
    let sim = cfg.sim;
    let vp = model.params;
    let gains = SpeedGains { kp: vp.speed_gain_p, ki: vp.speed_gain_i };
    let limits = (vp.torque_min, vp.torque_max);
    let flat = cfg.obstacle_height == 0.0;
    let obstacle = model.obstacle;

    let mut state = model.initialize_equilibrium(cfg.speed)?;
    let mut ctrl = ControllerState::speed_hold(cfg.speed);
    let max_steps = libm::ceil(sim.horizon / sim.dt) as usize + 1;
    let mut samples: Vec<Sample> = Vec::with_capacity(max_steps.min(1 << 18));
    let mut tracker = OnlineEvents::default();
    let mut diag = TrialDiagnostics::default();
    let mut airborne_start: Option<(f64, f64)> = None;
    let mut dissipated = 0.0;

    loop {
        let torque = match (tracker.t1, tracker.t2, cfg.torque) {
            (None, _, _) | (_, _, TorqueSchedule::SpeedHold) => {
                ctrl = speed_controller_step(ctrl, state.vx, sim.dt, gains, limits);
                ctrl.commanded_torque
            }
            (Some(_), _, TorqueSchedule::HoldLast) => ctrl.commanded_torque,
            (Some(_), _, TorqueSchedule::Constant(t)) => t.clamp(limits.0, limits.1),
            (Some(_), None, TorqueSchedule::Crossing { at_t1, .. }) => at_t1.clamp(limits.0, limits.1),
            (Some(_), Some(_), TorqueSchedule::Crossing { at_t2, .. }) => at_t2.clamp(limits.0, limits.1),
        };
        let (next, report) = model.integrate_step(&state, torque, sim.dt)?;
        let front = model.front_axle_position(&state);
        let rear = model.rear_axle_position(&state);
        let e_pot = model.potential_energy(&state);
        let sample = Sample {
            t: state.t,
            x_c: state.x,
            z_c: state.z,
            theta: state.theta,
            v_x: state.vx,
            v_z: state.vz,
            theta_dot: state.theta_dot,
            s_fx: state.s_fx,
            s_fz: state.s_fz,
            s_rz: state.s_rz,
            tau: torque,
            e_c: model.kinetic_energy(&state),
            e_c_chassis: model.chassis_kinetic_energy(&state),
            e_pot,
            front_contact: report.front.flags,
            rear_contact: report.rear.flags,
            front_step_gap: report.front.step_gap,
            front_edge_gap: report.front.edge_gap,
            rear_edge_gap: report.rear.edge_gap,
            x_front: front.x,
            z_front: front.z,
            x_rear: rear.x,
            z_rear: rear.z,
        };
        samples.push(sample);

        if tracker.t1.is_none() {
            diag.approach_slip = diag.approach_slip.max(libm::fabs(report.front.ground_slip)).max(libm::fabs(report.rear.ground_slip));
            diag.approach_speed_error = diag.approach_speed_error.max(libm::fabs(state.vx - cfg.speed) / cfg.speed);
        } else {
            diag.max_abs_s_fx = diag.max_abs_s_fx.max(libm::fabs(state.s_fx));
        }
        // Mechanical energy plus what the dampers have absorbed is conserved in flight.
        let airborne = report.front.airborne() && report.rear.airborne();
        let balance = sample.e_c + e_pot + dissipated;
        dissipated += model.dissipation_power(&state) * sim.dt;
        match (airborne, airborne_start) {
            (true, None) => airborne_start = Some((state.t, balance)),
            (true, Some((t0, e0))) if state.t - t0 <= 0.3 => {
                diag.ballistic_energy_drift = diag.ballistic_energy_drift.max(libm::fabs(balance - e0) / e0);
            }
            (false, _) => airborne_start = None,
            _ => {}
        }

        tracker.observe(&sample, flat, &obstacle);
        state = next;
        if libm::fabs(sample.theta) > FRAC_PI_2 {
            break;
        }
        if tracker.stalled_for(sim.stall_window) {
            break;
        }
        if let Some(apex) = tracker.apex_time {
            if state.t - apex >= sim.post_apex {
                break;
            }
        }
        if state.t >= sim.horizon {
            break;
        }
    }
    diag.steps = samples.len();

    let series = TimeSeries { obstacle, samples };
    let events = if flat { detect_flat_events(&series)? } else { detect_events(&series)? };
    let mut metrics = extract_metrics(&series, &events)?;
    if sim.energy_basis == EnergyBasis::ChassisOnly {
        metrics.delta_ec = metrics.delta_ec_chassis;
    }
    Ok(TrialResult { config: *cfg, series, events, metrics, diagnostics: diag })
}

/// Incremental event tracking used to drive the torque schedule and the stop rule.
#[derive(Debug, Default)]
struct OnlineEvents {
    t1: Option<f64>,
    t2: Option<f64>,
    rear_edge_contact: bool,
    apex_time: Option<f64>,
    apex_z: f64,
    reversing_since: Option<f64>,
    last_t: f64,
}

impl OnlineEvents {
    fn observe(&mut self, s: &Sample, flat: bool, obstacle: &Obstacle) {
        self.last_t = s.t;
        if self.t1.is_none() {
            let hit = if flat { s.x_front >= obstacle.x } else { s.front_step_gap < 0.0 };
            if hit {
                self.t1 = Some(s.t);
            }
            return;
        }
        if self.t2.is_none() {
            if flat {
                if s.x_rear >= obstacle.x {
                    self.t2 = Some(s.t);
                }
            } else if s.rear_edge_gap < 0.0 {
                self.rear_edge_contact = true;
            } else if self.rear_edge_contact || s.x_rear >= obstacle.x {
                self.t2 = Some(s.t);
            }
            if s.v_x < 0.0 {
                self.reversing_since.get_or_insert(s.t);
            } else {
                self.reversing_since = None;
            }
            if self.t2.is_some() {
                self.apex_time = Some(s.t);
                self.apex_z = s.z_c;
            }
            return;
        }
        if s.z_c > self.apex_z {
            self.apex_z = s.z_c;
            self.apex_time = Some(s.t);
        }
    }

    fn stalled_for(&self, window: f64) -> bool {
        self.t2.is_none() && self.reversing_since.is_some_and(|t0| self.last_t - t0 >= window)
    }
}

/// Time at which `value` crosses zero between samples `i - 1` and `i`.
fn crossing_time(samples: &[Sample], i: usize, value: impl Fn(&Sample) -> f64) -> f64 {
    if i == 0 {
        return samples[0].t;
    }
    let (a, b) = (&samples[i - 1], &samples[i]);
    let (va, vb) = (value(a), value(b));
    if !(va.is_finite() && vb.is_finite()) || va == vb {
        return b.t;
    }
    let u = (va / (va - vb)).clamp(0.0, 1.0);
    a.t + u * (b.t - a.t)
}

fn classify(series: &TimeSeries, t2: Option<f64>, flyover: bool) -> Outcome {
    let samples = &series.samples;
    if samples.iter().any(|s| libm::fabs(s.theta) > FRAC_PI_2) {
        return Outcome::Tipped;
    }
    match t2 {
        None => Outcome::Stalled,
        Some(_) if flyover => Outcome::RearFlyover,
        Some(_) => {
            let last = samples.last().expect("non-empty series");
            if last.x_rear > series.obstacle.x {
                Outcome::Cleared
            } else {
                Outcome::RearContact
            }
        }
    }
}

fn apex_after(samples: &[Sample], t2: f64) -> Option<f64> {
    samples
        .iter()
        .filter(|s| s.t >= t2)
        .fold(None::<&Sample>, |best, s| match best {
            Some(b) if b.z_c >= s.z_c => Some(b),
            _ => Some(s),
        })
        .map(|s| s.t)
}

/// Detects `t1`, `t2`, `t3` and the outcome in a recorded series.
pub fn detect_events(series: &TimeSeries) -> Result<CrossingEvents> {
    let samples = &series.samples;
    let i1 = samples.iter().position(|s| s.front_step_gap < 0.0).ok_or(Error::NoCrossing)?;
    let t1 = crossing_time(samples, i1, |s| s.front_step_gap);

    let ox = series.obstacle.x;
    let rear_hit = samples[i1..].iter().position(|s| s.rear_edge_gap < 0.0).map(|k| k + i1);
    let rear_past = samples[i1..].iter().position(|s| s.x_rear >= ox).map(|k| k + i1);
    let (t2, flyover) = match (rear_hit, rear_past) {
        (Some(h), past) if past.is_none_or(|p| h <= p) => {
            let end = samples[h..].iter().position(|s| s.rear_edge_gap >= 0.0).map(|k| k + h);
            (end.map(|e| crossing_time(samples, e, |s| s.rear_edge_gap)), false)
        }
        (_, Some(p)) => (Some(crossing_time(samples, p, |s| s.x_rear - ox)), true),
        (None, None) => (None, false),
        (Some(_), None) => unreachable!(),
    };
    let t3 = t2.and_then(|t2| apex_after(samples, t2));
    Ok(CrossingEvents { t1, t2, t3, outcome: classify(series, t2, flyover), front_step_contact: true })
}

/// Events on a zero-height step: `t1` and `t2` are the instants the front and
/// rear axles pass the step position.
pub fn detect_flat_events(series: &TimeSeries) -> Result<CrossingEvents> {
    let samples = &series.samples;
    let ox = series.obstacle.x;
    let i1 = samples.iter().position(|s| s.x_front >= ox).ok_or(Error::NoCrossing)?;
    let t1 = crossing_time(samples, i1, |s| s.x_front - ox);
    let t2 = samples[i1..]
        .iter()
        .position(|s| s.x_rear >= ox)
        .map(|k| crossing_time(samples, k + i1, |s| s.x_rear - ox));
    let t3 = t2.and_then(|t2| apex_after(samples, t2));
    let outcome = match t2 {
        Some(_) if samples.iter().all(|s| libm::fabs(s.theta) <= FRAC_PI_2) => Outcome::Cleared,
        _ => classify(series, t2, false),
    };
    Ok(CrossingEvents { t1, t2, t3, outcome, front_step_contact: false })
}

fn interpolate_at(samples: &[Sample], t: f64, value: impl Fn(&Sample) -> f64) -> f64 {
    match samples.iter().position(|s| s.t >= t) {
        None => samples.last().map_or(f64::NAN, &value),
        Some(0) => value(&samples[0]),
        Some(i) => {
            let (a, b) = (&samples[i - 1], &samples[i]);
            let u = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 1.0 };
            value(a) + u * (value(b) - value(a))
        }
    }
}

/// Extracts the crossing metrics over `[t1, t2]`.
pub fn extract_metrics(series: &TimeSeries, events: &CrossingEvents) -> Result<CrossingMetrics> {
    let samples = &series.samples;
    let t1 = events.t1;
    let t_end = events.window_end(series);
    let window: Vec<&Sample> = samples.iter().filter(|s| s.t >= t1 && s.t <= t_end).collect();
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let spread = |f: fn(&Sample) -> f64| {
        let (lo, hi) = window.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(f(s)), hi.max(f(s))));
        hi - lo
    };
    let delta_ec = spread(|s| s.e_c);
    let delta_ec_chassis = spread(|s| s.e_c_chassis);
    let pitch_rate_t2 = interpolate_at(samples, t_end, |s| s.theta_dot);

    let (cdwo, contact_duration) = if events.front_step_contact {
        let start = samples.iter().position(|s| s.t >= t1).unwrap_or(0);
        let release = samples[start..].iter().position(|s| s.front_edge_gap >= 0.0).map(|k| k + start);
        let release_t = match release {
            Some(i) => crossing_time(samples, i, |s| s.front_edge_gap).min(t_end),
            None => t_end,
        };
        // Shortening is only attributed to the obstacle while the wheel touches it.
        let shortest = window
            .iter()
            .take_while(|s| s.t <= release_t)
            .fold(window[0], |best, s| if s.s_fx < best.s_fx { s } else { best });
        ((shortest.t - t1).max(0.0), (release_t - t1).max(0.0))
    } else {
        (0.0, 0.0)
    };
    let dx_w_max = window.iter().fold(0.0f64, |m, s| m.max(libm::fabs(s.s_fx)));
    let min_speed = window.iter().fold(f64::INFINITY, |m, s| m.min(s.v_x));
    let apex_height = events.t3.map_or(f64::NAN, |t3| interpolate_at(samples, t3, |s| s.z_c));
    Ok(CrossingMetrics {
        delta_ec,
        delta_ec_chassis,
        pitch_rate_t2,
        cdwo,
        contact_duration,
        dx_w_max,
        min_speed,
        apex_height,
    })
}
