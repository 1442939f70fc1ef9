#![allow(dead_code)]

use mlcalib::geometry::{Pose, Rotation, Vec3, Vec6};
use mlcalib::handeye::MotionPair;
use mlcalib::refinement::PointCloud;
use mlcalib::simulation::{
    derive_target_motions, generate_trajectory, noisy_motion_pairs, simulate_frames, track_bounds,
    RigConfig, ScannerModel, SceneModel, Trajectory, TrajectoryKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SCALE: f64 = 10.0;

pub fn trajectory(kind: TrajectoryKind, k: usize, seed: u64) -> Trajectory {
    generate_trajectory(kind, k, SCALE, seed).expect("valid trajectory")
}

/// Planar motion pairs for `extrinsic`, noiseless when `sigma2 == 0`.
pub fn planar_pairs(
    kind: TrajectoryKind,
    k: usize,
    seed: u64,
    extrinsic: &Pose,
    sigma2: f64,
) -> Vec<MotionPair> {
    let traj = trajectory(kind, k, seed);
    if sigma2 == 0.0 {
        derive_target_motions(&traj, extrinsic)
    } else {
        noisy_motion_pairs(&traj, extrinsic, sigma2, seed)
    }
}

/// A rig with arbitrary rotation (pitch away from +-pi/2) and translation.
pub fn random_extrinsic(rng: &mut impl Rng) -> Pose {
    let rotation = Rotation::from_rpy(
        rng.random_range(-3.1..3.1),
        rng.random_range(-1.4..1.4),
        rng.random_range(-3.1..3.1),
    );
    let t = Vec3::new(
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(-2.0..2.0),
    );
    Pose::new(rotation, t)
}

/// Motions rotating about all three axes, related by `B = X^-1 A X`.
pub fn generic_pairs(extrinsic: &Pose, n: usize, seed: u64) -> Vec<MotionPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=n as u64)
        .map(|k| {
            let xi = Vec6::from_fn(|i, _| {
                if i < 3 {
                    rng.random_range(-1.0..1.0)
                } else {
                    rng.random_range(-0.6..0.6)
                }
            });
            let a = Pose::exp(&xi);
            let b = extrinsic.inverse().compose(&a).compose(extrinsic);
            MotionPair::new(k, a, b)
        })
        .collect()
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Frames scanned from an urban block around a loop trajectory.
pub fn urban_frames(
    rig: &RigConfig,
    seed: u64,
    range_noise: f64,
    frames: usize,
) -> Vec<(PointCloud, PointCloud)> {
    let traj = trajectory(TrajectoryKind::Loop, 3 * frames, seed);
    let (min, max) = track_bounds(&traj);
    let scene = SceneModel::urban_block(min, max, seed);
    let scanner = ScannerModel {
        range_noise_std: range_noise,
        ..ScannerModel::default()
    };
    let indices: Vec<usize> = (0..traj.samples().len()).step_by(3).take(frames).collect();
    simulate_frames(&scene, &traj, rig, &scanner, &indices, seed).expect("scene is visible")
}

/// `truth` moved by a rotation of `angle` about a fixed oblique axis and a
/// translation of `dist` along a fixed oblique direction.
pub fn perturbed(truth: &Pose, angle: f64, dist: f64) -> Pose {
    let axis = Vec3::new(0.6, -0.5, 0.62).normalize();
    let dir = Vec3::new(-0.5, 0.7, 0.5).normalize();
    Pose::new(
        Rotation::from_axis_angle(&axis, angle).compose(&truth.rotation),
        truth.translation + dir * dist,
    )
}
