//! Penalty contact between a wheel disc and a ground plane with a step obstacle.
//!
//! The normal force follows the one-sided IMPACT law: a power-law spring on the
//! penetration plus a damper on the separation rate that is ramped in over the
//! first `d` of penetration by a cubic STEP blend. Friction is Coulomb friction
//! with a slip-speed-smoothed coefficient.

use crate::error::{invalid, Error, Result};
use crate::math::{abs, clamp, powf, sqrt, Vec2};

/// Penalty and friction constants of the wheel/terrain contact, SI units.
///
/// `stiffness` multiplies `penetration^force_exponent`, so its unit is N/m^e.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContactParams {
    pub stiffness: f64,
    pub force_exponent: f64,
    pub damping_max: f64,
    pub penetration_depth: f64,
    pub mu_static: f64,
    pub mu_dynamic: f64,
    pub stiction_vel: f64,
    pub friction_vel: f64,
}

impl ContactParams {
    /// Builds the parameters from the millimetre-based table units used by
    /// multibody packages: N/mm^e, N·s/mm, mm and mm/s.
    pub fn from_table_units(
        stiffness_n_per_mm: f64,
        force_exponent: f64,
        damping_ns_per_mm: f64,
        penetration_depth_mm: f64,
        mu_static: f64,
        mu_dynamic: f64,
        stiction_vel_mm_s: f64,
        friction_vel_mm_s: f64,
    ) -> Self {
        ContactParams {
            // F = k_mm · δ_mm^e  =  k_mm · 1000^e · δ_m^e
            stiffness: stiffness_n_per_mm * powf(1000.0, force_exponent),
            force_exponent,
            damping_max: damping_ns_per_mm * 1000.0,
            penetration_depth: penetration_depth_mm * 1e-3,
            mu_static,
            mu_dynamic,
            stiction_vel: stiction_vel_mm_s * 1e-3,
            friction_vel: friction_vel_mm_s * 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.stiffness > 0.0
            && self.force_exponent >= 1.0
            && self.damping_max >= 0.0
            && self.penetration_depth > 0.0
            && self.mu_dynamic >= 0.0
            && self.mu_dynamic <= self.mu_static
            && self.stiction_vel > 0.0
            && self.stiction_vel < self.friction_vel;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(alloc::format!("contact parameters violate invariants: {self:?}")))
        }
    }
}

impl Default for ContactParams {
    /// Rubber tyre on asphalt: k = 1000 N/mm, e = 1.1, c_max = 10 N·s/mm,
    /// d = 0.01 mm, μs = 1, μd = 0.95, transitions at 1500 and 4000 mm/s.
    fn default() -> Self {
        ContactParams::from_table_units(1000.0, 1.1, 10.0, 0.01, 1.0, 0.95, 1500.0, 4000.0)
    }
}

/// Which part of the terrain boundary a probe measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Feature {
    GroundPlane,
    StepFace,
    StepCorner,
    StepTop,
}

impl Feature {
    pub fn is_step(self) -> bool {
        !matches!(self, Feature::GroundPlane)
    }

    /// Face or corner, the features a wheel collides with when it meets the step.
    pub fn is_step_edge(self) -> bool {
        matches!(self, Feature::StepFace | Feature::StepCorner)
    }
}

/// Rectangular step: terrain is `z ≤ 0` for `x < x`, and `z ≤ height` beyond.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Obstacle {
    pub x: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactProbe {
    /// Distance from wheel centre to the nearest point of the feature, ≥ 0.
    pub separation: f64,
    pub separation_rate: f64,
    /// Unit vector from the surface towards the wheel centre.
    pub normal: Vec2,
    /// `normal` turned a quarter clockwise; `(1, 0)` on flat ground.
    pub tangent: Vec2,
    pub surface_point: Vec2,
    pub feature: Feature,
}

impl ContactProbe {
    fn new(center: Vec2, surface_point: Vec2, normal: Vec2, feature: Feature) -> Self {
        let separation = (center - surface_point).dot(normal).max(0.0);
        ContactProbe {
            separation,
            separation_rate: 0.0,
            normal,
            tangent: Vec2::new(normal.z, -normal.x),
            surface_point,
            feature,
        }
    }

    /// Fills in the separation rate for a wheel centre moving at `velocity`
    /// against static terrain.
    pub fn with_center_velocity(mut self, velocity: Vec2) -> Self {
        self.separation_rate = self.normal.dot(velocity);
        self
    }

    pub fn penetration(&self, wheel_radius: f64) -> f64 {
        (wheel_radius - self.separation).max(0.0)
    }
}

/// At most two probes, ground and step, without heap allocation.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProbeSet {
    probes: [Option<ContactProbe>; 2],
}

impl ProbeSet {
    fn push(&mut self, probe: ContactProbe) {
        if self.probes[0].is_none() {
            self.probes[0] = Some(probe);
        } else {
            self.probes[1] = Some(probe);
        }
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.probes[0].is_none()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ContactProbe> {
        self.probes.iter().flatten()
    }

    pub fn find(&self, feature: Feature) -> Option<&ContactProbe> {
        self.iter().find(|p| p.feature == feature)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContactForce {
    pub normal_magnitude: f64,
    /// Signed along the probe tangent.
    pub tangential_magnitude: f64,
    pub world_force: Vec2,
    pub penetration: f64,
}

/// Cubic Hermite blend from `h0` at `x0` to `h1` at `x1`, clamped outside.
pub fn step_smooth(x: f64, x0: f64, h0: f64, x1: f64, h1: f64) -> Result<f64> {
    if x0 == x1 {
        return Err(invalid("step_smooth needs x0 != x1"));
    }
    Ok(smoothstep(x, x0, h0, x1, h1))
}

#[inline]
pub(crate) fn smoothstep(x: f64, x0: f64, h0: f64, x1: f64, h1: f64) -> f64 {
    let u = clamp((x - x0) / (x1 - x0), 0.0, 1.0);
    h0 + (h1 - h0) * u * u * (3.0 - 2.0 * u)
}

/// Normal force magnitude of one wheel, never negative.
///
/// `separation_rate` is negative while the wheel approaches the surface, which
/// increases the force.
pub fn impact_force(wheel_radius: f64, separation: f64, separation_rate: f64, p: &ContactParams) -> f64 {
    if separation > wheel_radius {
        return 0.0;
    }
    let penetration = wheel_radius - separation;
    let spring = p.stiffness * powf(penetration, p.force_exponent);
    let ramp = smoothstep(separation, wheel_radius - p.penetration_depth, 1.0, wheel_radius, 0.0);
    (spring - p.damping_max * separation_rate * ramp).max(0.0)
}

/// Friction coefficient for a given slip speed: rises from 0 to `mu_static` at
/// the stiction velocity, then settles to `mu_dynamic` at the friction velocity.
///
/// Below the stiction velocity the blend is the odd STEP from `-v_st` to `v_st`,
/// so the coefficient grows linearly out of zero slip.
pub fn friction_coefficient(slip_speed: f64, p: &ContactParams) -> f64 {
    let v = abs(slip_speed);
    if v >= p.friction_vel {
        p.mu_dynamic
    } else if v <= p.stiction_vel {
        smoothstep(v, -p.stiction_vel, -p.mu_static, p.stiction_vel, p.mu_static)
    } else {
        smoothstep(v, p.stiction_vel, p.mu_static, p.friction_vel, p.mu_dynamic)
    }
}

/// Nearest point of the ground in front of the step (or of the whole plane when
/// the step has zero height).
pub fn nearest_ground(center: Vec2, obstacle: &Obstacle) -> ContactProbe {
    let px = if obstacle.height > 0.0 { center.x.min(obstacle.x) } else { center.x };
    let point = Vec2::new(px, 0.0);
    let offset = center - point;
    let dist = offset.norm();
    let normal = if center.z <= 0.0 || dist == 0.0 || px == center.x {
        Vec2::new(0.0, 1.0)
    } else {
        offset * (1.0 / dist)
    };
    let mut probe = ContactProbe::new(center, point, normal, Feature::GroundPlane);
    if px != center.x {
        probe.separation = dist;
    }
    probe
}

/// Nearest point of the step boundary (face, corner or top), `None` for a
/// zero-height step.
pub fn nearest_step(center: Vec2, obstacle: &Obstacle) -> Option<ContactProbe> {
    let (ox, h) = (obstacle.x, obstacle.height);
    if h <= 0.0 {
        return None;
    }
    let probe = if center.z > h {
        if center.x > ox {
            ContactProbe::new(center, Vec2::new(center.x, h), Vec2::new(0.0, 1.0), Feature::StepTop)
        } else {
            let corner = Vec2::new(ox, h);
            let offset = center - corner;
            let dist = offset.norm();
            let mut p = ContactProbe::new(center, corner, offset * (1.0 / dist), Feature::StepCorner);
            p.separation = dist;
            p
        }
    } else if center.x < ox {
        let z = clamp(center.z, 0.0, h);
        ContactProbe::new(center, Vec2::new(ox, z), Vec2::new(-1.0, 0.0), Feature::StepFace)
    } else if center.x - ox < h - center.z {
        // Centre inside the step, leave through the face.
        let mut p = ContactProbe::new(center, Vec2::new(ox, center.z), Vec2::new(-1.0, 0.0), Feature::StepFace);
        p.separation = 0.0;
        p
    } else {
        let mut p = ContactProbe::new(center, Vec2::new(center.x, h), Vec2::new(0.0, 1.0), Feature::StepTop);
        p.separation = 0.0;
        p
    };
    Some(probe)
}

/// Distance from `center` to the closed face segment `x = obstacle.x, 0 ≤ z ≤ height`,
/// corner included.
pub fn face_segment_distance(center: Vec2, obstacle: &Obstacle) -> f64 {
    let z = clamp(center.z, 0.0, obstacle.height.max(0.0));
    (center - Vec2::new(obstacle.x, z)).norm()
}

/// Probes between a wheel disc and the terrain that are within reach of the
/// tyre surface, ground first.
pub fn probe_wheel_vs_step(center: Vec2, wheel_radius: f64, obstacle_height: f64, obstacle_x: f64) -> ProbeSet {
    let obstacle = Obstacle { x: obstacle_x, height: obstacle_height };
    probe_terrain(center, wheel_radius, &obstacle)
}

pub fn probe_terrain(center: Vec2, wheel_radius: f64, obstacle: &Obstacle) -> ProbeSet {
    let mut set = ProbeSet::default();
    let ground = nearest_ground(center, obstacle);
    if ground.separation <= wheel_radius {
        set.push(ground);
    }
    if let Some(step) = nearest_step(center, obstacle) {
        if step.separation <= wheel_radius {
            set.push(step);
        }
    }
    set
}

/// Normal and friction force on one wheel from one probe. `contact_point_velocity`
/// is the velocity of the tyre material at the contact point.
pub fn contact_force(
    probe: &ContactProbe,
    wheel_radius: f64,
    contact_point_velocity: Vec2,
    p: &ContactParams,
) -> ContactForce {
    if probe.separation > wheel_radius {
        return ContactForce::default();
    }
    let normal = impact_force(wheel_radius, probe.separation, probe.separation_rate, p);
    let slip = probe.tangent.dot(contact_point_velocity);
    let tangential = if slip == 0.0 {
        0.0
    } else {
        -slip.signum() * friction_coefficient(slip, p) * normal
    };
    ContactForce {
        normal_magnitude: normal,
        tangential_magnitude: tangential,
        world_force: probe.normal * normal + probe.tangent * tangential,
        penetration: probe.penetration(wheel_radius),
    }
}

/// Euclidean distance between two points, exposed for oracle tests.
pub fn distance(a: Vec2, b: Vec2) -> f64 {
    sqrt((a - b).dot(a - b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const WR: f64 = 0.0745;

    fn linear_k() -> ContactParams {
        ContactParams { stiffness: 1e6, ..ContactParams::default() }
    }

    #[test]
    fn step_endpoints_and_midpoint() {
        assert_eq!(step_smooth(0.2, 0.2, 1.0, 0.7, 0.0).unwrap(), 1.0);
        assert_eq!(step_smooth(0.7, 0.2, 1.0, 0.7, 0.0).unwrap(), 0.0);
        assert_eq!(step_smooth(0.5, 0.25, 0.0, 0.75, 1.0).unwrap(), 0.5);
        assert!(matches!(step_smooth(1.0, 0.3, 0.0, 0.3, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn step_has_flat_ends() {
        let h = 1e-7;
        let d0 = (smoothstep(h, 0.0, 0.0, 1.0, 1.0) - smoothstep(0.0, 0.0, 0.0, 1.0, 1.0)) / h;
        let d1 = (smoothstep(1.0, 0.0, 0.0, 1.0, 1.0) - smoothstep(1.0 - h, 0.0, 0.0, 1.0, 1.0)) / h;
        assert!(d0.abs() < 1e-6 && d1.abs() < 1e-6);
    }

    #[test]
    fn impact_is_zero_outside_and_at_boundary() {
        let p = ContactParams::default();
        assert_eq!(impact_force(WR, WR + 0.001, -3.0, &p), 0.0);
        assert_eq!(impact_force(WR, WR, -3.0, &p), 0.0);
        assert_eq!(impact_force(WR, WR, 3.0, &p), 0.0);
    }

    #[test]
    fn impact_five_micron_penetration() {
        // 1e6 · (5e-6)^1.1, evaluated with mpmath at 30 digits.
        let f = impact_force(WR, WR - 5e-6, 0.0, &linear_k());
        assert!((f - 1.475_254_692_668_459).abs() / 1.475_254_692_668_459 < 1e-9);
        // Table stiffness 1000 N/mm^1.1 at 0.005 mm: 1000 · 0.005^1.1 (mpmath).
        let f = impact_force(WR, WR - 5e-6, 0.0, &ContactParams::default());
        assert!((f - 2.943_520_093_262_373).abs() / 2.943_520_093_262_373 < 1e-9, "{f}");
    }

    #[test]
    fn table_units_convert_to_si() {
        let p = ContactParams::default();
        assert_eq!(p.damping_max, 1e4);
        assert!((p.penetration_depth - 1e-5).abs() < 1e-18);
        assert_eq!(p.stiction_vel, 1.5);
        assert_eq!(p.friction_vel, 4.0);
        p.validate().unwrap();
    }

    #[test]
    fn damping_adds_on_approach_and_never_pulls() {
        let p = ContactParams::default();
        let still = impact_force(WR, WR - 1e-4, 0.0, &p);
        assert!(impact_force(WR, WR - 1e-4, -1.0, &p) > still);
        assert_eq!(impact_force(WR, WR - 1e-4, 100.0, &p), 0.0);
    }

    #[test]
    fn impact_continuity_across_contact_boundary() {
        let p = ContactParams::default();
        let (lo, hi) = (WR - 2.0 * p.penetration_depth, WR + p.penetration_depth);
        let n = 10_000;
        let h = (hi - lo) / n as f64;
        // Jumps touching the boundary obey k·h^e·2; deeper in, the power law's
        // slope e·k·δ^(e-1) bounds the increment instead.
        let boundary_bound = p.stiffness * h.powf(p.force_exponent) * 2.0;
        let slope_bound =
            2.0 * p.force_exponent * p.stiffness * (2.0 * p.penetration_depth).powf(p.force_exponent - 1.0) * h;
        let mut prev = impact_force(WR, lo, 0.0, &p);
        for i in 1..=n {
            let s = lo + i as f64 * h;
            let f = impact_force(WR, s, 0.0, &p);
            let jump = (f - prev).abs();
            if (s - WR).abs() <= 2.0 * h {
                assert!(jump <= boundary_bound, "jump {jump} at boundary");
            }
            assert!(jump <= slope_bound, "jump {jump} at {s}");
            prev = f;
        }
    }

    #[test]
    fn impact_monotone_in_penetration() {
        let p = ContactParams::default();
        let mut prev = f64::INFINITY;
        for i in 0..=1000 {
            let s = WR - p.penetration_depth + p.penetration_depth * i as f64 / 1000.0;
            let f = impact_force(WR, s, 0.0, &p);
            assert!(f <= prev);
            prev = f;
        }
    }

    #[test]
    fn friction_profile() {
        let p = ContactParams::default();
        assert_eq!(friction_coefficient(0.0, &p), 0.0);
        assert_eq!(friction_coefficient(p.stiction_vel, &p), 1.0);
        assert_eq!(friction_coefficient(p.friction_vel, &p), 0.95);
        assert_eq!(friction_coefficient(25.0, &p), 0.95);
    }

    #[test]
    fn flat_ground_probe() {
        let set = probe_wheel_vs_step(Vec2::new(-1.0, WR), WR, 0.05, 2.0);
        assert_eq!(set.len(), 1);
        let g = set.iter().next().unwrap();
        assert_eq!(g.feature, Feature::GroundPlane);
        assert_eq!(g.separation, WR);
        assert_eq!(g.normal, Vec2::new(0.0, 1.0));
        assert_eq!(g.tangent, Vec2::new(1.0, 0.0));
    }

    #[test]
    fn probe_above_corner() {
        let h = 0.04;
        let set = probe_wheel_vs_step(Vec2::new(1.0, h + WR), WR, h, 1.0);
        let c = set.find(Feature::StepCorner).unwrap();
        assert!((c.separation - WR).abs() < 1e-15);
        assert_eq!(c.normal, Vec2::new(0.0, 1.0));
    }

    #[test]
    fn probe_against_face() {
        let set = probe_wheel_vs_step(Vec2::new(0.5 - 0.06, 0.03), WR, WR, 0.5);
        assert_eq!(set.len(), 2);
        let f = set.find(Feature::StepFace).unwrap();
        assert!((f.separation - 0.06).abs() < 1e-12);
        assert_eq!(f.normal, Vec2::new(-1.0, 0.0));
        // Hand check against a dense scan of the face segment.
        let mut best = f64::INFINITY;
        for i in 0..=100_000 {
            let z = WR * i as f64 / 100_000.0;
            best = best.min(distance(Vec2::new(0.44, 0.03), Vec2::new(0.5, z)));
        }
        assert!((best - 0.06).abs() < 1e-9);
    }

    #[test]
    fn zero_height_step_is_flat_ground() {
        let set = probe_wheel_vs_step(Vec2::new(3.0, WR - 1e-4), WR, 0.0, 1.0);
        assert_eq!(set.len(), 1);
        assert_eq!(set.iter().next().unwrap().feature, Feature::GroundPlane);
    }

    #[test]
    fn contact_force_cases() {
        let p = ContactParams::default();
        let ground = nearest_ground(Vec2::new(0.0, WR - 5e-6), &Obstacle { x: 10.0, height: 0.05 });
        let free = nearest_ground(Vec2::new(0.0, WR + 1e-3), &Obstacle { x: 10.0, height: 0.05 });
        assert_eq!(contact_force(&free, WR, Vec2::new(5.0, 0.0), &p), ContactForce::default());

        let still = contact_force(&ground, WR, Vec2::ZERO, &p);
        assert_eq!(still.tangential_magnitude, 0.0);

        let sliding = contact_force(&ground, WR, Vec2::new(5.0, 0.0), &p);
        assert!((sliding.normal_magnitude - 2.943_520_093_262_373).abs() < 1e-8);
        // 0.95 · 2.943520093262373
        assert!((sliding.tangential_magnitude + 2.796_344_088_599_254).abs() < 1e-8);
        assert!(sliding.world_force.x < 0.0);
    }

    proptest! {
        #[test]
        fn step_bounded(x in -2.0f64..3.0, x0 in -1.0f64..1.0, w in 0.01f64..2.0, h0 in -5.0f64..5.0, h1 in -5.0f64..5.0) {
            let y = step_smooth(x, x0, h0, x0 + w, h1).unwrap();
            prop_assert!(y >= h0.min(h1) - 1e-12 && y <= h0.max(h1) + 1e-12);
        }

        #[test]
        fn friction_bounded(v in 0.0f64..50.0) {
            let p = ContactParams::default();
            let mu = friction_coefficient(v, &p);
            prop_assert!((0.0..=p.mu_static).contains(&mu));
            if v >= p.friction_vel { prop_assert_eq!(mu, p.mu_dynamic); }
        }

        #[test]
        fn coulomb_cone(cx in -0.3f64..0.3, cz in -0.01f64..0.2, vx in -20.0f64..20.0, vz in -20.0f64..20.0,
                        h in 0.0f64..0.11, rate in -20.0f64..20.0) {
            let p = ContactParams::default();
            let set = probe_wheel_vs_step(Vec2::new(cx, cz), WR, h, 0.0);
            for probe in set.iter() {
                let probe = ContactProbe { separation_rate: rate, ..*probe };
                let f = contact_force(&probe, WR, Vec2::new(vx, vz), &p);
                prop_assert!(f.normal_magnitude >= 0.0);
                prop_assert!(f.tangential_magnitude.abs() <= p.mu_static * f.normal_magnitude * (1.0 + 1e-12));
                prop_assert!((probe.normal.norm() - 1.0).abs() < 1e-12);
                prop_assert!(probe.normal.dot(probe.tangent).abs() < 1e-12);
                prop_assert!(probe.separation >= 0.0);
            }
        }
    }
}
