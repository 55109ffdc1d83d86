use forcestrat::sim::contact::contact_points;
use forcestrat::sim::{
    contact_resolve, goal_distance, is_penetrating, step, Pose, SimConfig, SimState, Twist, Wrench,
};
use proptest::prelude::*;

fn kinetic_energy(s: &SimState, cfg: &SimConfig) -> f64 {
    let t = &s.twist;
    0.5 * cfg.mass * (t.vx * t.vx + t.vz * t.vz) + 0.5 * cfg.rot_inertia * t.omega * t.omega
}

fn mirror_pose(p: &Pose) -> Pose {
    Pose::new(-p.x, p.z, -p.theta)
}

fn mirror_twist(t: &Twist) -> Twist {
    Twist::new(-t.vx, t.vz, -t.omega)
}

fn mirror_wrench(w: &Wrench) -> Wrench {
    Wrench::new(-w.fx, w.fz, -w.tau)
}

fn near_hole_pose() -> impl Strategy<Value = Pose> {
    (-0.02..0.02f64, -0.012..0.03f64, -0.6..0.6f64).prop_map(|(x, z, th)| Pose::new(x, z, th))
}

fn small_twist() -> impl Strategy<Value = Twist> {
    (-0.05..0.05f64, -0.05..0.05f64, -0.5..0.5f64).prop_map(|(a, b, c)| Twist::new(a, b, c))
}

fn wrench_in_limits() -> impl Strategy<Value = Wrench> {
    (-10.0..10.0f64, -10.0..10.0f64, -0.15..0.15f64).prop_map(|(a, b, c)| Wrench::new(a, b, c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn step_is_deterministic(pose in near_hole_pose(), twist in small_twist(), w in wrench_in_limits()) {
        let cfg = SimConfig::default();
        let s = SimState { pose, twist, ..SimState::default() };
        let a = step(&s, &w, &cfg).unwrap();
        let b = step(&s, &w, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn contact_is_zero_iff_not_penetrating(pose in near_hole_pose()) {
        let cfg = SimConfig::default();
        let w = contact_resolve(&pose, &Twist::ZERO, &cfg);
        prop_assert_eq!(w == Wrench::ZERO, !is_penetrating(&pose, &cfg));
    }

    #[test]
    fn mirrored_trajectories_are_exact_mirrors(
        pose in near_hole_pose(),
        w in wrench_in_limits(),
    ) {
        let cfg = SimConfig::default();
        prop_assume!(!is_penetrating(&pose, &cfg));
        let mut a = SimState::at_rest(pose);
        let mut b = SimState::at_rest(mirror_pose(&pose));
        for _ in 0..200 {
            a = step(&a, &w, &cfg).unwrap();
            b = step(&b, &mirror_wrench(&w), &cfg).unwrap();
            prop_assert_eq!(b.pose, mirror_pose(&a.pose));
            prop_assert_eq!(b.twist, mirror_twist(&a.twist));
            prop_assert_eq!(b.contact_wrench, mirror_wrench(&a.contact_wrench));
        }
    }

    #[test]
    fn goal_distance_is_nonnegative(pose in near_hole_pose()) {
        let d = goal_distance(&SimState::at_rest(pose));
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d == 0.0, pose.x == 0.0 && pose.z == 0.0);
    }
}

#[test]
fn free_space_damping_is_passive() {
    let cfg = SimConfig::default();
    let mut s = SimState {
        pose: Pose::new(0.0, 0.2, 0.0),
        twist: Twist::new(0.3, -0.2, 2.0),
        ..SimState::default()
    };
    let mut e = kinetic_energy(&s, &cfg);
    for _ in 0..500 {
        s = step(&s, &Wrench::ZERO, &cfg).unwrap();
        assert!(!s.in_contact);
        let e1 = kinetic_energy(&s, &cfg);
        assert!(e1 < e || e1 == 0.0, "energy rose from {e} to {e1}");
        e = e1;
    }
}

#[test]
fn pressed_part_settles_at_force_over_stiffness() {
    // Flat part resting on the top surface away from the hole, pushed down with 20 N.
    // At rest the penalty forces of the touching corners carry the full load, so
    // their depths add up to 20 / k.
    let cfg = SimConfig::default();
    let mut s = SimState::at_rest(Pose::new(0.05, cfg.surface_z() + cfg.part_half_height, 0.0));
    let push = Wrench::new(0.0, -20.0, 0.0);
    for _ in 0..(1.0 / cfg.dt) as usize {
        s = step(&s, &push, &cfg).unwrap();
    }
    let total_depth: f64 = contact_points(&s.pose, &cfg).iter().map(|c| c.depth).sum();
    let expected = 20.0 / cfg.contact_stiffness;
    assert!(
        (total_depth - expected).abs() < 1e-3 * expected,
        "{total_depth} vs {expected}"
    );
    assert!((s.contact_wrench.fz - 20.0).abs() < 1e-6);
    assert!(s.twist.vz.abs() < 1e-9);
}

#[test]
fn single_corner_on_chamfer_carries_the_load() {
    // Tilted so only one corner touches the chamfer; the part slides down the face
    // while the normal reaction stays bounded by the push.
    let cfg = SimConfig::default();
    let mut s = SimState::at_rest(Pose::new(0.0058, 0.0115, 0.05));
    let push = Wrench::new(0.0, -20.0, 0.0);
    for _ in 0..(1.0 / cfg.dt) as usize {
        s = step(&s, &push, &cfg).unwrap();
        let c = &s.contact_wrench;
        assert!(c.fx.hypot(c.fz) < 200.0);
    }
    let depth: f64 = contact_points(&s.pose, &cfg)
        .iter()
        .map(|c| c.depth)
        .fold(0.0, f64::max);
    assert!(
        depth <= 20.0 / cfg.contact_stiffness * 1.01,
        "depth {depth}"
    );
}
