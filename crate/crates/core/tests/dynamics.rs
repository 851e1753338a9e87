use crossing_core::contact::{ContactParams, Obstacle};
use crossing_core::vehicle::{speed_controller_step, ControllerState, SpeedGains, VehicleModel, VehicleParams, VehicleState};

const DT: f64 = 2e-5;

fn flat_model() -> VehicleModel {
    VehicleModel::new(VehicleParams::default(), ContactParams::default(), Obstacle { x: 1e6, height: 0.0 }).unwrap()
}

fn run(model: &VehicleModel, mut s: VehicleState, torque: f64, dt: f64, duration: f64) -> VehicleState {
    let steps = (duration / dt).round() as usize;
    for _ in 0..steps {
        s = model.integrate_step(&s, torque, dt).unwrap().0;
    }
    s
}

#[test]
fn steady_rolling_keeps_kinetic_energy() {
    let model = flat_model();
    let s0 = model.initialize_equilibrium(6.0).unwrap();
    let e0 = model.kinetic_energy(&s0);
    let mut s = s0;
    let mut worst: f64 = 0.0;
    for _ in 0..(1.0 / DT) as usize {
        s = model.integrate_step(&s, 0.0, DT).unwrap().0;
        worst = worst.max((model.kinetic_energy(&s) - e0).abs() / e0);
    }
    assert!(worst < 1e-3, "kinetic energy drift {worst}");
}

#[test]
fn ballistic_flight_conserves_energy_and_momentum() {
    let model = flat_model();
    let mut s = model.initialize_equilibrium(5.0).unwrap();
    s.z += 0.5;
    s.vz = 2.0;
    s.theta_dot = 1.5;
    let e0 = model.kinetic_energy(&s) + model.potential_energy(&s);
    let p0 = model.horizontal_momentum(&s);
    let vz0 = s.vz;
    let steps = (0.3 / DT) as usize;
    let mut dissipated = 0.0;
    for _ in 0..steps {
        let (next, report) = model.integrate_step(&s, 0.0, DT).unwrap();
        assert!(report.front.airborne() && report.rear.airborne());
        assert_eq!(report.external_horizontal(), 0.0);
        dissipated += model.dissipation_power(&s) * DT;
        s = next;
    }
    let e1 = model.kinetic_energy(&s) + model.potential_energy(&s);
    assert!(dissipated >= 0.0);
    assert!(e1 <= e0 + 1e-9 * e0);
    let drift = (e1 + dissipated - e0).abs() / e0;
    assert!(drift < 5e-3, "energy balance drift {drift}");
    let dp = (model.horizontal_momentum(&s) - p0).abs() / p0.abs();
    assert!(dp < 1e-6, "momentum drift {dp}");
    // Centre of mass falls freely; the chassis alone deviates only through suspension forces.
    let m = model.params.total_mass();
    let vz_com = |st: &VehicleState| {
        let (f, r) = (model.front_axle_velocity(st), model.rear_axle_velocity(st));
        (model.params.chassis_mass * st.vz + model.params.axle_mass * (f.z + r.z)) / m
    };
    let mut s_ref = model.initialize_equilibrium(5.0).unwrap();
    s_ref.z += 0.5;
    s_ref.vz = vz0;
    s_ref.theta_dot = 1.5;
    let dv = vz_com(&s) - vz_com(&s_ref);
    assert!((dv + model.params.gravity * steps as f64 * DT).abs() < 1e-3, "Δv_z = {dv}");
}

#[test]
fn integrator_converges_at_first_order_or_better() {
    let model = flat_model();
    let mut s0 = model.initialize_equilibrium(4.0).unwrap();
    s0.z += 0.004;
    s0.theta_dot = 0.3;
    s0.s_fx_dot = 0.05;
    let horizon = 0.1;
    let base = 4e-5;
    let reference = run(&model, s0, 0.5, base / 64.0, horizon);
    let error = |dt: f64| {
        let s = run(&model, s0, 0.5, dt, horizon);
        let (a, b) = (s.coordinates(), reference.coordinates());
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    };
    let (e1, e2, e3) = (error(base), error(base / 2.0), error(base / 4.0));
    let order1 = (e1 / e2).log2();
    let order2 = (e2 / e3).log2();
    assert!(order1 > 0.9 && order2 > 0.9, "observed orders {order1:.2}, {order2:.2} (errors {e1:e}, {e2:e}, {e3:e})");
}

#[test]
fn horizontal_momentum_follows_external_impulse() {
    let model = VehicleModel::new(VehicleParams::default(), ContactParams::default(), Obstacle { x: 0.6, height: 0.03 }).unwrap();
    let mut s = model.initialize_equilibrium(4.0).unwrap();
    let p0 = model.horizontal_momentum(&s);
    let mut impulse = 0.0;
    for _ in 0..(0.3 / DT) as usize {
        let (next, report) = model.integrate_step(&s, 0.2, DT).unwrap();
        impulse += report.external_horizontal() * DT;
        s = next;
    }
    let dp = model.horizontal_momentum(&s) - p0;
    assert!(impulse.abs() > 1.0, "the step must push back: {impulse}");
    assert!((dp - impulse).abs() < 0.01 * impulse.abs(), "Δp = {dp}, impulse = {impulse}");
}

#[test]
fn deterministic_trajectories() {
    let model = VehicleModel::new(VehicleParams::default(), ContactParams::default(), Obstacle { x: 0.6, height: 0.05 }).unwrap();
    let s0 = model.initialize_equilibrium(9.0).unwrap();
    let a = run(&model, s0, 0.3, DT, 0.15);
    let b = run(&model, s0, 0.3, DT, 0.15);
    assert_eq!(a.coordinates().map(f64::to_bits), b.coordinates().map(f64::to_bits));
    assert_eq!(a.rates().map(f64::to_bits), b.rates().map(f64::to_bits));
}

#[test]
fn speed_hold_from_rest_settles_within_one_percent() {
    let model = flat_model();
    let p = model.params;
    let gains = SpeedGains { kp: p.speed_gain_p, ki: p.speed_gain_i };
    let mut s = model.initialize_equilibrium(0.0).unwrap();
    let mut ctrl = ControllerState::speed_hold(12.0);
    let mut last_outside = 0.0;
    for _ in 0..(6.0 / DT) as usize {
        ctrl = speed_controller_step(ctrl, s.vx, DT, gains, (p.torque_min, p.torque_max));
        assert!(ctrl.commanded_torque >= p.torque_min && ctrl.commanded_torque <= p.torque_max);
        s = model.integrate_step(&s, ctrl.commanded_torque, DT).unwrap().0;
        if (s.vx - 12.0).abs() > 0.12 {
            last_outside = s.t;
        }
    }
    assert!(last_outside < 5.0, "still outside ±1% at t = {last_outside}");
    assert!((s.vx - 12.0).abs() < 0.12);
    assert!(s.x < 1e6, "settled before any obstacle");
}

#[test]
fn rear_axle_has_no_longitudinal_freedom() {
    let model = VehicleModel::new(VehicleParams::default(), ContactParams::default(), Obstacle { x: 0.6, height: 0.05 }).unwrap();
    let mut s = model.initialize_equilibrium(6.0).unwrap();
    for _ in 0..5000 {
        s = model.integrate_step(&s, 0.5, DT).unwrap().0;
        let rear = model.rear_axle_position(&s);
        // Rear axle stays at the fixed chassis station: its body-frame x never changes.
        let (c, sn) = (s.theta.cos(), s.theta.sin());
        let body_x = (rear.x - s.x) * c + (rear.z - s.z) * sn;
        assert!((body_x + model.params.wheelbase / 2.0).abs() < 1e-12);
    }
}
