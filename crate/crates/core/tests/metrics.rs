use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;

use shuttletrack::metrics::{
    acceleration_smoothness, avg_centroid_shift, completeness, report, velocity_smoothness, MetricsError,
};
use shuttletrack::{Trajectory3D, WorldPoint};

fn trajectory() -> impl Strategy<Value = Trajectory3D> {
    prop::collection::vec(((-10.0..10.0f64, 0.0..15.0f64, 0.0..6.0f64), 1i64..4, prop::bool::weighted(0.15)), 3..50)
        .prop_map(|samples| {
            let mut traj = Trajectory3D::new();
            let mut t = 0;
            for (i, ((x, y, z), step, missing)) in samples.into_iter().enumerate() {
                t += step * 6_250_000;
                if missing {
                    traj.push_missing(i as u64, t).unwrap();
                } else {
                    traj.push_detected(i as u64, t, WorldPoint::new(x, y, z)).unwrap();
                }
            }
            traj
        })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #[test]
    fn rigid_motion_invariance(traj in trajectory(), angles in (-3.0..3.0f64, -1.5..1.5f64, -3.0..3.0f64), shift in (-20.0..20.0f64, -20.0..20.0f64, -20.0..20.0f64)) {
        prop_assume!(traj.valid_points().count() >= 3);
        let rot = Rotation3::from_euler_angles(angles.0, angles.1, angles.2);
        let d = Vector3::new(shift.0, shift.1, shift.2);
        let moved = traj.map_points(|p| WorldPoint::from_vector(&(rot * p.to_vector() + d)));
        prop_assert!(close(velocity_smoothness(&traj).unwrap(), velocity_smoothness(&moved).unwrap(), 1e-12));
        prop_assert!(close(acceleration_smoothness(&traj).unwrap(), acceleration_smoothness(&moved).unwrap(), 1e-12));
        prop_assert!(close(avg_centroid_shift(&traj).unwrap(), avg_centroid_shift(&moved).unwrap(), 1e-12));
    }

    #[test]
    fn scale_covariance(traj in trajectory(), k in 0.01..100.0f64) {
        prop_assume!(traj.valid_points().count() >= 3);
        let scaled = traj.map_points(|p| WorldPoint::from_vector(&(p.to_vector() * k)));
        prop_assert!(close(velocity_smoothness(&scaled).unwrap(), k * k * velocity_smoothness(&traj).unwrap(), 1e-9));
        prop_assert!(close(acceleration_smoothness(&scaled).unwrap(), k * k * acceleration_smoothness(&traj).unwrap(), 1e-9));
        prop_assert!(close(avg_centroid_shift(&scaled).unwrap(), k * avg_centroid_shift(&traj).unwrap(), 1e-9));
    }

    #[test]
    fn metrics_are_non_negative_and_completeness_bounded(traj in trajectory(), extra in 0usize..20) {
        let r = report(&traj, traj.len() + extra);
        for v in [r.s_v, r.s_a, r.c_avg_m].into_iter().flatten() {
            prop_assert!(v >= 0.0);
        }
        prop_assert!((0.0..=100.0).contains(&r.completeness));
        prop_assert_eq!(r.n_detected + r.n_compensated, traj.valid_points().count());
    }
}

#[test]
fn too_few_points() {
    let traj = Trajectory3D::from_points([(0, WorldPoint::new(0.0, 0.0, 0.0)), (10, WorldPoint::new(1.0, 0.0, 0.0))]).unwrap();
    assert_eq!(velocity_smoothness(&traj), Err(MetricsError::TooFewPoints { needed: 3, got: 2 }));
    assert_eq!(avg_centroid_shift(&traj).unwrap(), 1.0);
    assert_eq!(completeness(&traj, 4), 50.0);
}
