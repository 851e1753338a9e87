//! Planar (x, z, pitch) multibody model of the vehicle.
//!
//! Generalised coordinates are the chassis pose `(x, z, θ)` and the suspension
//! deflections `(s_fx, s_fz, s_rz)` measured in the chassis frame. Each axle
//! lumps its left and right wheels into one body that translates with the
//! chassis plus its deflections; the wheel spins are absolute angles with
//! their own decoupled inertia. The equations of motion are assembled with
//! Kane's method, `M(q) q̈ = Σ Jᵀ F − Σ m Jᵀ (J̇ q̇)`, and advanced by a
//! fixed-step semi-implicit Euler scheme.

use crate::contact::{
    contact_force, face_segment_distance, friction_coefficient, nearest_step, probe_terrain, smoothstep,
    ContactParams, Feature, Obstacle,
};
use crate::error::{config, Error, Result};
use crate::math::{abs, clamp, cos, sin, sqrt, Vec2};
use crate::GRAVITY;
use alloc::format;

/// Number of generalised coordinates of the chassis/suspension system.
pub const DOF: usize = 6;

/// State magnitude beyond which a step is reported as diverged.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// Geometry, inertia and actuator parameters of one vehicle configuration.
///
/// Suspension stiffness and damping are per wheel; the model doubles them for
/// the lumped axle. Torques are per axle.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct VehicleParams {
    pub chassis_mass: f64,
    pub chassis_pitch_inertia: f64,
    pub axle_mass: f64,
    pub wheel_spin_inertia: f64,
    pub wheel_radius: f64,
    pub wheelbase: f64,
    /// Static height of the chassis centre of gravity above the ground.
    pub z_cog: f64,
    pub wheels_per_axle: u32,
    pub susp_stiffness: f64,
    pub susp_vertical_damping: f64,
    /// Front longitudinal damping coefficient c_AV, per wheel.
    pub front_longitudinal_damping: f64,
    /// Longitudinal cylinder stroke ΔL_max.
    pub stroke_limit: f64,
    /// Wheel-centre travel per unit of cylinder travel; the longitudinal
    /// endstops engage at `linkage_ratio · stroke_limit` of wheel travel.
    pub linkage_ratio: f64,
    pub vertical_stroke_limit: f64,
    pub torque_min: f64,
    pub torque_max: f64,
    pub endstop_stiffness: f64,
    pub endstop_damping: f64,
    pub speed_gain_p: f64,
    pub speed_gain_i: f64,
    pub gravity: f64,
}

/// Pitch inertia of a uniform rectangular plate of the given length and height.
pub fn plate_pitch_inertia(mass: f64, length: f64, height: f64) -> f64 {
    mass * (length * length + height * height) / 12.0
}

impl Default for VehicleParams {
    /// Small-scale reference vehicle: wheel radius 0.0745 m, centre of gravity
    /// 0.13 m high, suspension springs 2.26 N/mm. Masses, inertias, wheelbase,
    /// strokes and torque limits are engineering defaults for an RC-class vehicle.
    fn default() -> Self {
        let chassis_mass = 13.0;
        let susp_stiffness = 2260.0;
        VehicleParams {
            chassis_mass,
            chassis_pitch_inertia: plate_pitch_inertia(chassis_mass, 0.5, 0.1),
            axle_mass: 1.5,
            wheel_spin_inertia: 0.006,
            wheel_radius: 0.0745,
            wheelbase: 0.45,
            z_cog: 0.13,
            wheels_per_axle: 2,
            susp_stiffness,
            susp_vertical_damping: 0.4 * critical_damping(susp_stiffness, chassis_mass / 4.0),
            front_longitudinal_damping: 1600.0,
            stroke_limit: 0.015,
            linkage_ratio: 8.0 / 3.0,
            vertical_stroke_limit: 0.045,
            torque_min: -4.0,
            torque_max: 4.0,
            endstop_stiffness: 2e5,
            endstop_damping: 2000.0,
            speed_gain_p: 4.0,
            speed_gain_i: 20.0,
            gravity: GRAVITY,
        }
    }
}

pub fn critical_damping(stiffness: f64, mass: f64) -> f64 {
    2.0 * sqrt(stiffness * mass)
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("chassis_mass", self.chassis_mass),
            ("chassis_pitch_inertia", self.chassis_pitch_inertia),
            ("axle_mass", self.axle_mass),
            ("wheel_spin_inertia", self.wheel_spin_inertia),
            ("wheel_radius", self.wheel_radius),
            ("wheelbase", self.wheelbase),
            ("susp_stiffness", self.susp_stiffness),
            ("stroke_limit", self.stroke_limit),
            ("linkage_ratio", self.linkage_ratio),
            ("vertical_stroke_limit", self.vertical_stroke_limit),
            ("endstop_stiffness", self.endstop_stiffness),
            ("gravity", self.gravity),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(config(format!("vehicle.{name} must be positive, got {value}")));
            }
        }
        let non_negative = [
            ("susp_vertical_damping", self.susp_vertical_damping),
            ("front_longitudinal_damping", self.front_longitudinal_damping),
            ("endstop_damping", self.endstop_damping),
            ("speed_gain_p", self.speed_gain_p),
            ("speed_gain_i", self.speed_gain_i),
        ];
        for (name, value) in non_negative {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(config(format!("vehicle.{name} must be non-negative, got {value}")));
            }
        }
        if self.wheels_per_axle == 0 {
            return Err(config("vehicle.wheels_per_axle must be at least 1"));
        }
        if self.torque_min > self.torque_max {
            return Err(config("vehicle.torque_min exceeds vehicle.torque_max"));
        }
        if self.z_cog <= self.wheel_radius {
            return Err(config("vehicle.z_cog must sit above the wheel centres"));
        }
        Ok(())
    }

    /// Longitudinal wheel travel at which the endstops engage.
    pub fn longitudinal_travel_limit(&self) -> f64 {
        self.linkage_ratio * self.stroke_limit
    }

    pub fn total_mass(&self) -> f64 {
        self.chassis_mass + 2.0 * self.axle_mass
    }
}

/// Full mechanical state. Deflections are wheel-centre offsets in the chassis
/// frame: `s_fx > 0` moves the front wheel forward (a push-back from the
/// obstacle shortens it), `s_*z > 0` lifts the wheel towards the chassis. Wheel
/// spin rates are positive when rolling forward.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VehicleState {
    pub t: f64,
    pub x: f64,
    pub z: f64,
    pub theta: f64,
    pub vx: f64,
    pub vz: f64,
    pub theta_dot: f64,
    pub s_fx: f64,
    pub s_fz: f64,
    pub s_rz: f64,
    pub s_fx_dot: f64,
    pub s_fz_dot: f64,
    pub s_rz_dot: f64,
    pub spin_front: f64,
    pub spin_rear: f64,
    pub omega_front: f64,
    pub omega_rear: f64,
}

impl VehicleState {
    pub fn coordinates(&self) -> [f64; DOF] {
        [self.x, self.z, self.theta, self.s_fx, self.s_fz, self.s_rz]
    }

    pub fn rates(&self) -> [f64; DOF] {
        [self.vx, self.vz, self.theta_dot, self.s_fx_dot, self.s_fz_dot, self.s_rz_dot]
    }

    fn set_rates(&mut self, v: &[f64; DOF]) {
        self.vx = v[0];
        self.vz = v[1];
        self.theta_dot = v[2];
        self.s_fx_dot = v[3];
        self.s_fz_dot = v[4];
        self.s_rz_dot = v[5];
    }

    fn values(&self) -> [f64; 17] {
        [
            self.t,
            self.x,
            self.z,
            self.theta,
            self.vx,
            self.vz,
            self.theta_dot,
            self.s_fx,
            self.s_fz,
            self.s_rz,
            self.s_fx_dot,
            self.s_fz_dot,
            self.s_rz_dot,
            self.spin_front,
            self.spin_rear,
            self.omega_front,
            self.omega_rear,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ControlMode {
    SpeedHold,
    TorqueHold,
    CrossingCommand,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ControllerState {
    pub target_speed: f64,
    /// Time integral of the speed error.
    pub integral_error: f64,
    /// Per-axle drive torque.
    pub commanded_torque: f64,
    pub mode: ControlMode,
}

impl ControllerState {
    pub fn speed_hold(target_speed: f64) -> Self {
        ControllerState { target_speed, integral_error: 0.0, commanded_torque: 0.0, mode: ControlMode::SpeedHold }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedGains {
    pub kp: f64,
    pub ki: f64,
}

/// One update of the approach-phase speed controller: PI on the chassis speed
/// with conditional-integration anti-windup, clamped to `[τ_min, τ_max]`.
/// Other modes pass the configured torque through.
pub fn speed_controller_step(
    ctrl: ControllerState,
    measured_speed: f64,
    dt: f64,
    gains: SpeedGains,
    limits: (f64, f64),
) -> ControllerState {
    let (lo, hi) = limits;
    let mut next = ctrl;
    match ctrl.mode {
        ControlMode::SpeedHold => {
            let error = ctrl.target_speed - measured_speed;
            let integral = ctrl.integral_error + error * dt;
            let demand = gains.kp * error + gains.ki * integral;
            let saturating = (demand > hi && error > 0.0) || (demand < lo && error < 0.0);
            if !saturating {
                next.integral_error = integral;
            }
            next.commanded_torque = clamp(gains.kp * error + gains.ki * next.integral_error, lo, hi);
        }
        ControlMode::TorqueHold | ControlMode::CrossingCommand => {
            next.commanded_torque = clamp(ctrl.commanded_torque, lo, hi);
        }
    }
    next
}

/// Bit flags describing which terrain features an axle touches.
pub mod flags {
    pub const GROUND: u8 = 1;
    pub const STEP_EDGE: u8 = 2;
    pub const STEP_TOP: u8 = 4;
}

/// Contact summary of one axle for one force evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AxleContact {
    pub flags: u8,
    /// Distance to the nearest step feature minus the wheel radius (negative
    /// while penetrating); `+∞` without a step.
    pub step_gap: f64,
    /// Same, against the step face segment including its corner.
    pub edge_gap: f64,
    /// Total contact force on the axle.
    pub force: Vec2,
    pub ground_slip: f64,
}

impl AxleContact {
    pub fn airborne(&self) -> bool {
        self.flags == 0
    }
}

/// Generalised forces and contact diagnostics for one state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ForceReport {
    pub generalized: [f64; DOF],
    /// Clockwise (rolling-forward) torque on each wheel pair, front then rear.
    pub spin_torque: [f64; 2],
    pub front: AxleContact,
    pub rear: AxleContact,
}

impl ForceReport {
    /// Sum of horizontal external forces (contacts only; gravity is vertical).
    pub fn external_horizontal(&self) -> f64 {
        self.front.force.x + self.rear.force.x
    }
}

#[derive(Debug, Clone, Copy)]
struct AxleKinematics {
    position: Vec2,
    velocity: Vec2,
    /// Columns of ∂position/∂q.
    jacobian: [Vec2; DOF],
    /// Velocity-product acceleration J̇ q̇.
    bias: Vec2,
}

/// Immutable simulation model: parameters plus derived geometry.
#[derive(Debug, Clone, Copy)]
pub struct VehicleModel {
    pub params: VehicleParams,
    pub contact: ContactParams,
    pub obstacle: Obstacle,
    half_wheelbase: f64,
    /// Vertical distance from the chassis CoG down to the wheel centres at zero deflection.
    mount_drop: f64,
    wheel_count: f64,
    static_vertical_deflection: f64,
    static_tyre_penetration: f64,
}

impl VehicleModel {
    pub fn new(params: VehicleParams, contact: ContactParams, obstacle: Obstacle) -> Result<Self> {
        params.validate()?;
        contact.validate()?;
        if !(obstacle.height >= 0.0) || !obstacle.x.is_finite() {
            return Err(config("obstacle height must be non-negative and its position finite"));
        }
        let n = f64::from(params.wheels_per_axle);
        let g = params.gravity;
        let spring_load = params.chassis_mass * g / 2.0;
        let static_vertical_deflection = spring_load / (n * params.susp_stiffness);
        if abs(static_vertical_deflection) > params.vertical_stroke_limit {
            return Err(config(format!(
                "static suspension compression {:.4} m exceeds the vertical stroke limit {:.4} m",
                static_vertical_deflection, params.vertical_stroke_limit
            )));
        }
        let wheel_load = (spring_load + params.axle_mass * g) / n;
        let static_tyre_penetration =
            crate::math::powf(wheel_load / contact.stiffness, 1.0 / contact.force_exponent);
        let wheel_center_z = params.wheel_radius - static_tyre_penetration;
        let mount_drop = params.z_cog - wheel_center_z + static_vertical_deflection;
        Ok(VehicleModel {
            params,
            contact,
            obstacle,
            half_wheelbase: params.wheelbase / 2.0,
            mount_drop,
            wheel_count: n,
            static_vertical_deflection,
            static_tyre_penetration,
        })
    }

    pub fn static_vertical_deflection(&self) -> f64 {
        self.static_vertical_deflection
    }

    pub fn static_tyre_penetration(&self) -> f64 {
        self.static_tyre_penetration
    }

    /// State on flat ground at static equilibrium, rolling at `speed` without
    /// slip, with the chassis CoG at `x = 0`.
    pub fn initialize_equilibrium(&self, speed: f64) -> Result<VehicleState> {
        if !speed.is_finite() {
            return Err(config("target speed must be finite"));
        }
        let wr = self.params.wheel_radius;
        let state = VehicleState {
            z: self.params.z_cog,
            vx: speed,
            s_fz: self.static_vertical_deflection,
            s_rz: self.static_vertical_deflection,
            omega_front: speed / (wr - self.static_tyre_penetration),
            omega_rear: speed / (wr - self.static_tyre_penetration),
            ..VehicleState::default()
        };
        Ok(state)
    }

    fn front_offset(&self, s: &VehicleState) -> Vec2 {
        Vec2::new(self.half_wheelbase + s.s_fx, -self.mount_drop + s.s_fz)
    }

    fn rear_offset(&self, s: &VehicleState) -> Vec2 {
        Vec2::new(-self.half_wheelbase, -self.mount_drop + s.s_rz)
    }

    fn axle(&self, s: &VehicleState, front: bool) -> AxleKinematics {
        let (c, sn) = (cos(s.theta), sin(s.theta));
        let offset = if front { self.front_offset(s) } else { self.rear_offset(s) };
        let world_offset = offset.rotate(c, sn);
        let along = Vec2::new(c, sn);
        let up = Vec2::new(-sn, c);
        let deflection_rate = if front {
            Vec2::new(s.s_fx_dot, s.s_fz_dot)
        } else {
            Vec2::new(0.0, s.s_rz_dot)
        };
        let world_deflection_rate = deflection_rate.rotate(c, sn);
        let mut jacobian = [Vec2::ZERO; DOF];
        jacobian[0] = Vec2::new(1.0, 0.0);
        jacobian[1] = Vec2::new(0.0, 1.0);
        jacobian[2] = world_offset.perp();
        if front {
            jacobian[3] = along;
            jacobian[4] = up;
        } else {
            jacobian[5] = up;
        }
        let velocity = Vec2::new(s.vx, s.vz) + world_offset.perp() * s.theta_dot + world_deflection_rate;
        let bias = world_offset * (-s.theta_dot * s.theta_dot) + world_deflection_rate.perp() * (2.0 * s.theta_dot);
        AxleKinematics { position: Vec2::new(s.x, s.z) + world_offset, velocity, jacobian, bias }
    }

    pub fn front_axle_position(&self, s: &VehicleState) -> Vec2 {
        self.axle(s, true).position
    }

    pub fn rear_axle_position(&self, s: &VehicleState) -> Vec2 {
        self.axle(s, false).position
    }

    pub fn front_axle_velocity(&self, s: &VehicleState) -> Vec2 {
        self.axle(s, true).velocity
    }

    pub fn rear_axle_velocity(&self, s: &VehicleState) -> Vec2 {
        self.axle(s, false).velocity
    }

    fn mass_matrix(&self, front: &AxleKinematics, rear: &AxleKinematics) -> [[f64; DOF]; DOF] {
        let p = &self.params;
        let mut m = [[0.0; DOF]; DOF];
        m[0][0] = p.chassis_mass;
        m[1][1] = p.chassis_mass;
        m[2][2] = p.chassis_pitch_inertia;
        for axle in [front, rear] {
            for i in 0..DOF {
                for j in i..DOF {
                    let v = p.axle_mass * axle.jacobian[i].dot(axle.jacobian[j]);
                    m[i][j] += v;
                    if j != i {
                        m[j][i] += v;
                    }
                }
            }
        }
        m
    }

    /// Generalised spring, damper and endstop forces on the deflection coordinates.
    fn suspension_forces(&self, s: &VehicleState) -> [f64; 3] {
        let p = &self.params;
        let n = self.wheel_count;
        let k = n * p.susp_stiffness;
        let long_limit = p.longitudinal_travel_limit();
        let vert = p.vertical_stroke_limit;
        [
            -k * s.s_fx - n * p.front_longitudinal_damping * s.s_fx_dot + self.endstop(s.s_fx, s.s_fx_dot, long_limit),
            -k * s.s_fz - n * p.susp_vertical_damping * s.s_fz_dot + self.endstop(s.s_fz, s.s_fz_dot, vert),
            -k * s.s_rz - n * p.susp_vertical_damping * s.s_rz_dot + self.endstop(s.s_rz, s.s_rz_dot, vert),
        ]
    }

    /// One-sided penalty beyond `±limit`, damping ramped in over the first millimetre.
    fn endstop(&self, deflection: f64, rate: f64, limit: f64) -> f64 {
        let p = &self.params;
        let ramp_depth = 1e-3;
        if deflection > limit {
            let excess = deflection - limit;
            let ramp = smoothstep(excess, 0.0, 0.0, ramp_depth, 1.0);
            -(p.endstop_stiffness * excess + p.endstop_damping * rate * ramp).max(0.0)
        } else if deflection < -limit {
            let excess = -limit - deflection;
            let ramp = smoothstep(excess, 0.0, 0.0, ramp_depth, 1.0);
            (p.endstop_stiffness * excess - p.endstop_damping * rate * ramp).max(0.0)
        } else {
            0.0
        }
    }

    fn endstop_energy(&self, deflection: f64, limit: f64) -> f64 {
        let excess = (abs(deflection) - limit).max(0.0);
        0.5 * self.params.endstop_stiffness * excess * excess
    }

    /// Contact forces on one axle. The friction of each probe is capped at the
    /// value that would stop the slip within one step of length `dt`, which keeps
    /// the explicit update of the stiff regularised friction law from chattering.
    fn axle_contact(&self, kin: &AxleKinematics, omega: f64, dt: f64) -> (AxleContact, f64) {
        let p = &self.params;
        let wr = p.wheel_radius;
        let mut summary = AxleContact {
            step_gap: f64::INFINITY,
            edge_gap: f64::INFINITY,
            ..AxleContact::default()
        };
        if let Some(step) = nearest_step(kin.position, &self.obstacle) {
            summary.step_gap = step.separation - wr;
            summary.edge_gap = face_segment_distance(kin.position, &self.obstacle) - wr;
        }
        let mut spin_torque = 0.0;
        for probe in probe_terrain(kin.position, wr, &self.obstacle).iter() {
            let probe = probe.with_center_velocity(kin.velocity);
            let lever = probe.surface_point - kin.position;
            let point_velocity = kin.velocity + Vec2::new(lever.z, -lever.x) * omega;
            let mut force = contact_force(&probe, wr, point_velocity, &self.contact);
            if force.normal_magnitude <= 0.0 && force.penetration <= 0.0 {
                continue;
            }
            let slip = probe.tangent.dot(point_velocity);
            if dt > 0.0 {
                let lever_sq = lever.dot(lever);
                let tangential_mass =
                    1.0 / (1.0 / p.axle_mass + lever_sq / p.wheel_spin_inertia) / self.wheel_count;
                let cap = abs(slip) * tangential_mass / dt;
                if abs(force.tangential_magnitude) > cap {
                    force.tangential_magnitude = -slip.signum() * cap;
                }
            }
            let world = (probe.normal * force.normal_magnitude + probe.tangent * force.tangential_magnitude)
                * self.wheel_count;
            summary.force += world;
            spin_torque += lever.z * world.x - lever.x * world.z;
            summary.flags |= match probe.feature {
                Feature::GroundPlane => {
                    summary.ground_slip = slip;
                    flags::GROUND
                }
                Feature::StepFace | Feature::StepCorner => flags::STEP_EDGE,
                Feature::StepTop => flags::STEP_TOP,
            };
        }
        (summary, spin_torque)
    }

    /// Generalised forces at `state` with per-axle drive torque `torque`.
    /// `dt` sizes the friction cap; pass 0 for the uncapped force law.
    pub fn assemble_forces(&self, state: &VehicleState, torque: f64, dt: f64) -> Result<ForceReport> {
        if !state.is_finite() {
            return Err(Error::IntegrationFailure { time: state.t, reason: "non-finite state".into() });
        }
        let front = self.axle(state, true);
        let rear = self.axle(state, false);
        Ok(self.forces_with(state, torque, dt, &front, &rear))
    }

    fn forces_with(
        &self,
        state: &VehicleState,
        torque: f64,
        dt: f64,
        front: &AxleKinematics,
        rear: &AxleKinematics,
    ) -> ForceReport {
        let p = &self.params;
        let g = p.gravity;
        let mut q = [0.0; DOF];
        q[1] -= p.chassis_mass * g;
        // Drive reaction on the chassis, both axles.
        q[2] += 2.0 * torque;
        let (front_contact, front_moment) = self.axle_contact(front, state.omega_front, dt);
        let (rear_contact, rear_moment) = self.axle_contact(rear, state.omega_rear, dt);
        for (kin, contact) in [(front, &front_contact), (rear, &rear_contact)] {
            let world = contact.force + Vec2::new(0.0, -p.axle_mass * g);
            for (qi, col) in q.iter_mut().zip(kin.jacobian.iter()) {
                *qi += col.dot(world);
            }
        }
        let susp = self.suspension_forces(state);
        q[3] += susp[0];
        q[4] += susp[1];
        q[5] += susp[2];
        ForceReport {
            generalized: q,
            spin_torque: [torque + front_moment, torque + rear_moment],
            front: front_contact,
            rear: rear_contact,
        }
    }

    /// Accelerations `(q̈, ω̇)` and the force report at `state`.
    pub fn accelerations(&self, state: &VehicleState, torque: f64, dt: f64) -> Result<([f64; DOF], [f64; 2], ForceReport)> {
        if !state.is_finite() {
            return Err(Error::IntegrationFailure { time: state.t, reason: "non-finite state".into() });
        }
        let front = self.axle(state, true);
        let rear = self.axle(state, false);
        let report = self.forces_with(state, torque, dt, &front, &rear);
        let mut rhs = report.generalized;
        for axle in [&front, &rear] {
            for (r, col) in rhs.iter_mut().zip(axle.jacobian.iter()) {
                *r -= self.params.axle_mass * col.dot(axle.bias);
            }
        }
        let mass = self.mass_matrix(&front, &rear);
        let qdd = cholesky_solve(mass, rhs).ok_or_else(|| Error::IntegrationFailure {
            time: state.t,
            reason: "mass matrix not positive definite".into(),
        })?;
        let j = self.params.wheel_spin_inertia;
        Ok((qdd, [report.spin_torque[0] / j, report.spin_torque[1] / j], report))
    }

    /// Advances by one semi-implicit Euler step.
    pub fn integrate_step(&self, state: &VehicleState, torque: f64, dt: f64) -> Result<(VehicleState, ForceReport)> {
        if !(dt > 0.0) {
            return Err(crate::error::invalid("time step must be positive"));
        }
        let (qdd, spin_acc, report) = self.accelerations(state, torque, dt)?;
        let mut next = *state;
        let mut v = state.rates();
        for (vi, ai) in v.iter_mut().zip(qdd.iter()) {
            *vi += dt * ai;
        }
        next.set_rates(&v);
        next.omega_front += dt * spin_acc[0];
        next.omega_rear += dt * spin_acc[1];
        next.x += dt * v[0];
        next.z += dt * v[1];
        next.theta += dt * v[2];
        next.s_fx += dt * v[3];
        next.s_fz += dt * v[4];
        next.s_rz += dt * v[5];
        next.spin_front += dt * next.omega_front;
        next.spin_rear += dt * next.omega_rear;
        next.t = state.t + dt;
        let bounded = next
            .values()
            .iter()
            .skip(1)
            .take(13)
            .chain([next.omega_front, next.omega_rear].iter())
            .all(|v| v.is_finite() && abs(*v) < DIVERGENCE_BOUND);
        if !bounded {
            return Err(Error::IntegrationFailure { time: next.t, reason: "state diverged".into() });
        }
        Ok((next, report))
    }

    /// Total kinetic energy: chassis, axles and wheel spin.
    pub fn kinetic_energy(&self, s: &VehicleState) -> f64 {
        let front = self.axle(s, true);
        let rear = self.axle(s, false);
        let p = &self.params;
        let chassis = self.chassis_kinetic_energy(s);
        let axles = 0.5 * p.axle_mass * (front.velocity.dot(front.velocity) + rear.velocity.dot(rear.velocity));
        let spin = 0.5 * p.wheel_spin_inertia * (s.omega_front * s.omega_front + s.omega_rear * s.omega_rear);
        chassis + axles + spin
    }

    pub fn chassis_kinetic_energy(&self, s: &VehicleState) -> f64 {
        let p = &self.params;
        0.5 * p.chassis_mass * (s.vx * s.vx + s.vz * s.vz) + 0.5 * p.chassis_pitch_inertia * s.theta_dot * s.theta_dot
    }

    /// Gravity plus suspension and endstop spring energy (contact springs excluded).
    pub fn potential_energy(&self, s: &VehicleState) -> f64 {
        let p = &self.params;
        let g = p.gravity;
        let front = self.front_axle_position(s);
        let rear = self.rear_axle_position(s);
        let k = self.wheel_count * p.susp_stiffness;
        let springs = 0.5 * k * (s.s_fx * s.s_fx + s.s_fz * s.s_fz + s.s_rz * s.s_rz)
            + self.endstop_energy(s.s_fx, p.longitudinal_travel_limit())
            + self.endstop_energy(s.s_fz, p.vertical_stroke_limit)
            + self.endstop_energy(s.s_rz, p.vertical_stroke_limit);
        g * (p.chassis_mass * s.z + p.axle_mass * (front.z + rear.z)) + springs
    }

    /// Power absorbed by the suspension and endstop dampers.
    pub fn dissipation_power(&self, s: &VehicleState) -> f64 {
        let forces = self.suspension_forces(s);
        let still = VehicleState { s_fx_dot: 0.0, s_fz_dot: 0.0, s_rz_dot: 0.0, ..*s };
        let elastic = self.suspension_forces(&still);
        let rates = [s.s_fx_dot, s.s_fz_dot, s.s_rz_dot];
        (0..3).map(|i| -(forces[i] - elastic[i]) * rates[i]).sum()
    }

    /// Total horizontal momentum of chassis and axles.
    pub fn horizontal_momentum(&self, s: &VehicleState) -> f64 {
        let p = &self.params;
        p.chassis_mass * s.vx + p.axle_mass * (self.front_axle_velocity(s).x + self.rear_axle_velocity(s).x)
    }

    /// Slip speed of the tyre on the ground under each axle (0 when not on the ground).
    pub fn ground_slip(&self, s: &VehicleState) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (i, (kin, omega)) in [(self.axle(s, true), s.omega_front), (self.axle(s, false), s.omega_rear)]
            .iter()
            .enumerate()
        {
            let set = probe_terrain(kin.position, self.params.wheel_radius, &self.obstacle);
            if let Some(g) = set.find(Feature::GroundPlane) {
                if g.separation < self.params.wheel_radius {
                    let lever = g.surface_point - kin.position;
                    out[i] = g.tangent.dot(kin.velocity + Vec2::new(lever.z, -lever.x) * *omega);
                }
            }
        }
        out
    }

    /// Friction coefficient exposed for diagnostics.
    pub fn friction(&self, slip: f64) -> f64 {
        friction_coefficient(slip, &self.contact)
    }
}

/// Solves `m x = b` for a symmetric positive definite `m`.
fn cholesky_solve(mut m: [[f64; DOF]; DOF], mut b: [f64; DOF]) -> Option<[f64; DOF]> {
    for j in 0..DOF {
        let mut d = m[j][j];
        for k in 0..j {
            d -= m[j][k] * m[j][k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = sqrt(d);
        m[j][j] = d;
        for i in (j + 1)..DOF {
            let mut s = m[i][j];
            for k in 0..j {
                s -= m[i][k] * m[j][k];
            }
            m[i][j] = s / d;
        }
    }
    for i in 0..DOF {
        let mut s = b[i];
        for k in 0..i {
            s -= m[i][k] * b[k];
        }
        b[i] = s / m[i][i];
    }
    for i in (0..DOF).rev() {
        let mut s = b[i];
        for k in (i + 1)..DOF {
            s -= m[k][i] * b[k];
        }
        b[i] = s / m[i][i];
    }
    Some(b)
}

/// Convenience wrapper: equilibrium state for `params` on flat ground.
pub fn initialize_equilibrium(params: &VehicleParams, contact: &ContactParams, target_speed: f64) -> Result<VehicleState> {
    let flat = Obstacle { x: 0.0, height: 0.0 };
    VehicleModel::new(*params, *contact, flat)?.initialize_equilibrium(target_speed)
}
