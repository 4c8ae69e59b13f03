mod common;

use common::*;
use posture_core::orientation::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn unit_quaternion() -> impl Strategy<Value = Quaternion> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("non-degenerate", |(a, b, c, d)| a * a + b * b + c * c + d * d > 1e-3)
        .prop_map(|(a, b, c, d)| normalize(Quaternion::new(a, b, c, d)).unwrap())
}

proptest! {
    #[test]
    fn normalize_gives_unit_norm(a in -100.0f64..100.0, b in -100.0f64..100.0, c in -100.0f64..100.0, d in -100.0f64..100.0) {
        prop_assume!(a * a + b * b + c * c + d * d > 1e-6);
        let q = normalize(Quaternion::new(a, b, c, d)).unwrap();
        prop_assert!((q.norm_squared() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dcm_is_proper_rotation(q in unit_quaternion()) {
        let dcm = quat_to_dcm(q).unwrap();
        prop_assert!(dcm.orthonormality_error() < 1e-9);
        prop_assert!((dcm.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn double_cover_is_exact(q in unit_quaternion()) {
        prop_assert_eq!(quat_to_dcm(q).unwrap(), quat_to_dcm(-q).unwrap());
        prop_assert_eq!(sensor_normal(q).unwrap(), sensor_normal(-q).unwrap());
    }

    #[test]
    fn dcm_matches_sandwich_oracle(q in unit_quaternion()) {
        let dcm = quat_to_dcm(q).unwrap();
        let oracle = dcm_by_sandwich(q.to_array());
        prop_assert!(max_abs_diff3(dcm.m, oracle) < 1e-9);
        let n = sensor_normal(q).unwrap();
        prop_assert_eq!(n, dcm.column(2));
        let n_oracle = normal_by_sandwich(q.to_array());
        prop_assert!((0..3).all(|i| (arr3(n)[i] - n_oracle[i]).abs() < 1e-9));
    }

    #[test]
    fn angle_is_symmetric(a in unit_quaternion(), b in unit_quaternion()) {
        let (na, nb) = (sensor_normal(a).unwrap(), sensor_normal(b).unwrap());
        prop_assert_eq!(thoracic_angle(na, nb).unwrap(), thoracic_angle(nb, na).unwrap());
        prop_assert_eq!(thoracic_angle(na, na).unwrap(), 0.0);
    }

    #[test]
    fn world_yaw_leaves_angle_unchanged(a in unit_quaternion(), b in unit_quaternion(), yaw in -10.0f64..10.0) {
        let n_ref = sensor_normal(a).unwrap();
        let before = thoracic_angle(n_ref, sensor_normal(b).unwrap()).unwrap();
        let after = thoracic_angle(n_ref, sensor_normal(Quaternion::from_yaw(yaw) * b).unwrap()).unwrap();
        prop_assert!((before - after).abs() < 1e-9, "{} vs {}", before, after);
    }

    #[test]
    fn small_angles_agree_with_cross_product(axis in (-1.0f64..1.0, -1.0f64..1.0, Just(0.0)), deg in 0.0f64..10.0) {
        // Horizontal tilt axis so that the tilt angle equals the rotation angle.
        prop_assume!(axis.0.abs() + axis.1.abs() > 1e-3);
        let q = Quaternion::from_axis_angle(Vec3::new(axis.0, axis.1, axis.2), deg.to_radians());
        let n = sensor_normal(q).unwrap();
        let by_dot = thoracic_angle(Vec3::Z, n).unwrap();
        let by_cross = Vec3::Z.cross(&n).norm().asin().to_degrees();
        prop_assert!((by_dot - by_cross).abs() < 1e-6, "{} vs {}", by_dot, by_cross);
        prop_assert!((by_dot - deg).abs() < 1e-6);
    }

    #[test]
    fn euler_recomposes_dcm(q in unit_quaternion()) {
        let e = quat_to_euler(q).unwrap();
        prop_assume!(e.pitch.abs() < 80.0);
        prop_assert!(!e.gimbal_lock);
        let oracle = dcm_from_euler(e.roll, e.pitch, e.yaw);
        prop_assert!(max_abs_diff3(quat_to_dcm(q).unwrap().m, oracle) < 1e-9);
    }
}

#[test]
fn angle_against_sandwich_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2000 {
        let q = random_unit_quaternion(&mut rng);
        let got = thoracic_angle(Vec3::Z, sensor_normal(q).unwrap()).unwrap();
        let expected = angle_between_deg([0.0, 0.0, 1.0], normal_by_sandwich(q.to_array()));
        assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
    }
}

#[test]
fn thirty_degrees_about_x() {
    let q = Quaternion::from_axis_angle(Vec3::X, 30f64.to_radians());
    let angle = thoracic_angle(Vec3::Z, sensor_normal(q).unwrap()).unwrap();
    assert!((angle - 30.0).abs() < 1e-6);
}

#[test]
fn gimbal_flag_threshold() {
    for (deg, locked) in [(89.85, false), (89.95, true), (-89.95, true), (45.0, false)] {
        let q = Quaternion::from_axis_angle(Vec3::Y, f64::to_radians(deg));
        let e = quat_to_euler(q).unwrap();
        assert_eq!(e.gimbal_lock, locked, "pitch {deg}");
        assert!((e.pitch - deg).abs() < 1e-6);
    }
}
