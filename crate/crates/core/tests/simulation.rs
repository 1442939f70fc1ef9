mod common;

use common::{median, trajectory};
use mlcalib::geometry::rotation_angle_distance;
use mlcalib::simulation::*;

fn scan_offsets(rig: &RigConfig, range_noise: f64, seed: u64) -> Vec<f64> {
    let traj = trajectory(TrajectoryKind::FigureEight, 40, seed);
    let (min, max) = track_bounds(&traj);
    let scene = SceneModel::urban_block(min, max, seed);
    let scanner = ScannerModel {
        range_noise_std: range_noise,
        ..ScannerModel::default()
    };
    let indices = [0, 13, 27, 40];
    let frames = simulate_frames(&scene, &traj, rig, &scanner, &indices, seed).unwrap();
    let mut offsets = Vec::new();
    for (&i, (a, b)) in indices.iter().zip(&frames) {
        let pose_a = traj.samples()[i].pose;
        let pose_b = pose_a.compose(&rig.extrinsic);
        assert_eq!(a.frame.k, traj.samples()[i].k);
        assert_eq!(b.frame.k, a.frame.k);
        for p in a
            .transformed(&pose_a)
            .iter()
            .chain(b.transformed(&pose_b).iter())
        {
            offsets.push(scene.surface_distance(p));
        }
    }
    offsets
}

#[test]
fn noiseless_scans_lie_on_the_scene() {
    for rig in [
        RigConfig::simulated_car(),
        RigConfig::vehicle_left(),
        RigConfig::vehicle_rear(),
    ] {
        let offsets = scan_offsets(&rig, 0.0, 2);
        assert!(offsets.len() > 1000);
        let worst = offsets.iter().cloned().fold(0.0, f64::max);
        assert!(worst < 1e-9, "worst offset {worst}");
    }
}

#[test]
fn noisy_scans_stay_near_the_scene() {
    let sigma = 0.01;
    let mut offsets = scan_offsets(&RigConfig::vehicle_left(), sigma, 7);
    let within = offsets.iter().filter(|&&d| d <= 3.0 * sigma).count();
    assert!(
        within as f64 >= 0.99 * offsets.len() as f64,
        "{within}/{}",
        offsets.len()
    );
    // Grazing hits near patch edges can be pushed off the patch by range noise.
    let far = offsets.iter().filter(|&&d| d > 6.0 * sigma).count();
    assert!(
        far as f64 <= 1e-3 * offsets.len() as f64,
        "{far} points far from any surface"
    );
    let m = median(&mut offsets);
    assert!(m > 0.1 * sigma && m < sigma, "median offset {m}");
}

#[test]
fn attached_trajectory_satisfies_hand_eye_relation() {
    let x = RigConfig::vehicle_rear().extrinsic;
    for kind in TrajectoryKind::ALL {
        let reference = trajectory(kind, 80, 1);
        let attached = reference.rigidly_attached("target", &x);
        for ((a, b), pair) in reference
            .motions()
            .iter()
            .zip(attached.motions())
            .zip(derive_target_motions(&reference, &x))
        {
            let lhs = a.compose(&x);
            let rhs = x.compose(&b);
            assert!(rotation_angle_distance(&lhs.rotation, &rhs.rotation) < 1e-10);
            assert!((lhs.translation - rhs.translation).norm() < 1e-9);
            assert!(rotation_angle_distance(&pair.motion_b.rotation, &b.rotation) < 1e-10);
        }
    }
}

#[test]
fn noisy_pairs_keep_indices_and_determinism() {
    let reference = trajectory(TrajectoryKind::Sweep, 50, 4);
    let x = RigConfig::simulated_car().extrinsic;
    let p1 = noisy_motion_pairs(&reference, &x, 1e-3, 9);
    let p2 = noisy_motion_pairs(&reference, &x, 1e-3, 9);
    let p3 = noisy_motion_pairs(&reference, &x, 1e-3, 10);
    assert_eq!(p1, p2);
    assert_ne!(p1, p3);
    assert_eq!(p1.len(), 50);
    let timestamps = reference.timestamps();
    for (p, k) in p1.iter().zip(&timestamps[1..]) {
        assert_eq!(p.k, *k);
    }
    let reintegrated =
        Trajectory::from_motions("a", reference.samples()[0].pose, &reference.motions()).unwrap();
    for (s, r) in reintegrated.samples().iter().zip(reference.samples()) {
        assert!((s.pose.translation - r.pose.translation).norm() < 1e-9);
    }
}
