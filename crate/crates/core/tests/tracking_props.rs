use std::collections::BTreeMap;

use holo_core::geometry::Vec3;
use holo_core::tracking::{estimate_velocity, smooth_pose, solve_skeleton, two_bone_ik, Pose, Role, SkeletonConfig};
use proptest::prelude::*;

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

proptest! {
    #[test]
    fn reachable_targets_keep_bone_lengths(
        root in vec3(2.0),
        dir in vec3(1.0),
        upper in 0.1f64..0.6,
        lower in 0.1f64..0.6,
        frac in 0.0f64..1.0,
        pole in vec3(1.0),
    ) {
        let d = dir.normalized();
        prop_assume!(d.is_some());
        let min = (upper - lower).abs();
        let max = upper + lower;
        let reach = min + 1e-6 + frac * (max - min - 2e-6);
        let target = root + d.unwrap() * reach;
        let s = two_bone_ik(root, target, upper, lower, pole);
        prop_assert!(s.reached);
        prop_assert!((s.mid.distance(root) - upper).abs() < 1e-6);
        prop_assert!((s.end.distance(s.mid) - lower).abs() < 1e-6);
        prop_assert!(s.end.distance(target) < 1e-9);
    }

    #[test]
    fn out_of_reach_clamps_to_full_extension(root in vec3(2.0), dir in vec3(1.0), extra in 0.01f64..3.0) {
        let d = dir.normalized();
        prop_assume!(d.is_some());
        let d = d.unwrap();
        let s = two_bone_ik(root, root + d * (0.6 + extra), 0.3, 0.3, Vec3::new(0.0, 0.0, -1.0));
        prop_assert!(!s.reached);
        prop_assert!(s.end.distance(root + d * 0.6) < 1e-9);
    }

    #[test]
    fn solve_is_deterministic(jitter in vec3(0.05), t in 0i64..1_000_000) {
        let place = |role: Role, p: Vec3| (role, Pose::new(format!("{role:?}"), role, t, p + jitter));
        let poses: BTreeMap<Role, Pose> = [
            place(Role::Head, Vec3::new(0.0, 1.7, -1.0)),
            place(Role::Waist, Vec3::new(0.0, 1.0, -1.0)),
            place(Role::LeftHand, Vec3::new(0.4, 1.1, -1.1)),
            place(Role::RightHand, Vec3::new(-0.4, 1.1, -1.1)),
            place(Role::LeftFoot, Vec3::new(0.15, 0.05, -1.0)),
            place(Role::RightFoot, Vec3::new(-0.15, 0.05, -1.0)),
        ]
        .into_iter()
        .collect();
        let sk = SkeletonConfig::default();
        let a = solve_skeleton(&poses, &sk, t).unwrap();
        let b = solve_skeleton(&poses, &sk, t).unwrap();
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn linear_trajectory_velocity_is_exact(
        p0 in vec3(3.0),
        v in vec3(5.0),
        n in 3usize..40,
        step_us in 1_000i64..20_000,
    ) {
        let history: Vec<Pose> = (0..n)
            .map(|i| {
                let t = i as i64 * step_us;
                Pose::new("d", Role::RightHand, t, p0 + v * (t as f64 * 1e-6))
            })
            .collect();
        let est = estimate_velocity(&history, i64::MAX / 4).unwrap().linear;
        let scale = v.norm().max(1.0);
        prop_assert!((est - v).norm() <= 1e-9 * scale, "{est:?} vs {v:?}");
    }

    #[test]
    fn smoothing_stays_in_hull(points in prop::collection::vec(vec3(3.0), 1..30), alpha in 0.01f64..1.0) {
        let history: Vec<Pose> = points
            .iter()
            .enumerate()
            .map(|(i, p)| Pose::new("d", Role::LeftHand, i as i64 * 11_111, *p))
            .collect();
        let s = smooth_pose(&history, alpha).unwrap().position;
        let axis = |f: fn(&Vec3) -> f64| {
            let lo = points.iter().map(f).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            (lo - 1e-12, hi + 1e-12)
        };
        for (f, val) in [(|p: &Vec3| p.x) as fn(&Vec3) -> f64, |p: &Vec3| p.y, |p: &Vec3| p.z].into_iter().zip([s.x, s.y, s.z]) {
            let (lo, hi) = axis(f);
            prop_assert!(val >= lo && val <= hi);
        }
    }
}
