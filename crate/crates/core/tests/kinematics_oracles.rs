use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use speared_core::kinematics::{
    forward_kinematics, inverse_kinematics, is_reachable, plan_trajectory, ArmProfile, JointState,
    Pose, ANGLE_TOLERANCE_DEG, POSITION_TOLERANCE_MM,
};

fn random_joints(rng: &mut impl Rng, profile: &ArmProfile) -> JointState {
    let [a, b, c] = profile.joint_limits;
    JointState::new(
        rng.gen_range(a[0]..=a[1]),
        rng.gen_range(b[0]..=b[1]),
        rng.gen_range(c[0]..=c[1]),
    )
}

#[test]
fn ik_matches_fk_samples() {
    let profile = ArmProfile::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let q = random_joints(&mut rng, &profile);
        let target = forward_kinematics(&profile, &q);
        let sol = inverse_kinematics(&profile, &target)
            .unwrap_or_else(|e| panic!("{q:?} -> {target:?}: {e}"));
        assert!(profile.within_limits(&sol));
        let err = forward_kinematics(&profile, &sol).distance(&target);
        assert!(err < POSITION_TOLERANCE_MM, "{q:?}: error {err}");
    }
}

#[test]
fn ik_is_deterministic() {
    let profile = ArmProfile::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let target = forward_kinematics(&profile, &random_joints(&mut rng, &profile));
        assert_eq!(
            inverse_kinematics(&profile, &target),
            inverse_kinematics(&profile, &target)
        );
    }
}

#[test]
fn yaw_rotation_only_changes_base_joint() {
    let profile = ArmProfile::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    while checked < 500 {
        let q = random_joints(&mut rng, &profile);
        let p = forward_kinematics(&profile, &q);
        let phi: f64 = rng.gen_range(-90.0..90.0);
        let (s, c) = phi.to_radians().sin_cos();
        let rotated = Pose::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z);
        let (Ok(a), Ok(b)) = (
            inverse_kinematics(&profile, &p),
            inverse_kinematics(&profile, &rotated),
        ) else {
            continue;
        };
        // Skip poses whose yaw is undefined, and pairs where one side had
        // to switch to the reach-over configuration.
        let signed_radius = |q: &JointState| {
            let (t2, t23) = (q.theta2.to_radians(), (q.theta2 + q.theta3).to_radians());
            profile.l1 * t2.cos() + profile.l2 * t23.cos()
        };
        if p.x.hypot(p.y) < 1e-3 || signed_radius(&a).signum() != signed_radius(&b).signum() {
            continue;
        }
        let dyaw = (b.theta1 - a.theta1 - phi).rem_euclid(360.0);
        let dyaw = dyaw.min(360.0 - dyaw);
        assert!(dyaw < 1e-9, "yaw moved by {dyaw}");
        assert!(
            (a.theta2 - b.theta2).abs() < ANGLE_TOLERANCE_DEG,
            "{a:?} {b:?}"
        );
        assert!(
            (a.theta3 - b.theta3).abs() < ANGLE_TOLERANCE_DEG,
            "{a:?} {b:?}"
        );
        checked += 1;
    }
}

#[test]
fn trajectory_steps_are_uniform() {
    let profile = ArmProfile::default();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..300 {
        let from = random_joints(&mut rng, &profile);
        let to = random_joints(&mut rng, &profile);
        let n = rng.gen_range(2..200);
        let traj = plan_trajectory(&profile, &from, &to, n).unwrap();
        assert_eq!(traj.waypoints.len(), n);
        assert_eq!(traj.waypoints[0], from);
        assert_eq!(traj.waypoints[n - 1], to);

        let f = from.as_array();
        let t = to.as_array();
        let expected_duration =
            (0..3).map(|j| (t[j] - f[j]).abs()).fold(0.0, f64::max) / profile.max_joint_speed;
        assert!((traj.duration - expected_duration).abs() < 1e-12);
        for w in traj.waypoints.windows(2) {
            let (a, b) = (w[0].as_array(), w[1].as_array());
            for j in 0..3 {
                let step = (t[j] - f[j]) / (n - 1) as f64;
                assert!(
                    (b[j] - a[j] - step).abs() < 1e-9,
                    "joint {j}: {} vs {step}",
                    b[j] - a[j]
                );
                // monotone towards the goal
                assert!((b[j] - a[j]) * (t[j] - f[j]) >= 0.0);
            }
        }
    }
}

#[test]
fn reachability_examples() {
    let profile = ArmProfile::default();
    assert!(is_reachable(&profile, &Pose::new(282.0, 0.0, 138.0)));
    assert!(!is_reachable(&profile, &Pose::new(0.0, 0.0, 1000.0)));
    assert!(!is_reachable(&profile, &Pose::new(1000.0, 0.0, 138.0)));
}
