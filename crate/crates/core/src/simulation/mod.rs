//! Ground-truthed fixtures: planar trajectories, rigidly attached target
//! motions, tangent-space motion noise, and ray-cast scans of planar scenes.

mod scene;
mod trajectory;

pub use scene::{scan_scene, Patch, ScannerModel, SceneModel};
pub use trajectory::{
    derive_target_motions, generate_trajectory, noisy_motion_pairs, perturb_motion,
    perturb_motion_with, RigConfig, StampedPose, Trajectory, TrajectoryKind, REFERENCE_HEIGHT,
};

use thiserror::Error;

use crate::refinement::PointCloud;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("trajectory needs at least 3 poses, got {0}")]
    TooShort(usize),
    #[error("timestamps must increase strictly ({prev} then {next})")]
    NonIncreasing { prev: u64, next: u64 },
    #[error("invalid patch: {0}")]
    BadPatch(&'static str),
    #[error("invalid scanner: {0}")]
    BadScanner(&'static str),
    #[error("no ray hit the scene")]
    EmptyScan,
}

/// Per-call seed for frame `k` and sensor slot `slot`.
pub fn frame_seed(seed: u64, k: u64, slot: u64) -> u64 {
    // splitmix64 finalizer
    let mut z =
        seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ slot.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scans the scene from both sensors of the rig at the selected sample
/// indices of the reference trajectory.
pub fn simulate_frames(
    scene: &SceneModel,
    reference: &Trajectory,
    rig: &RigConfig,
    scanner: &ScannerModel,
    indices: &[usize],
    seed: u64,
) -> Result<Vec<(PointCloud, PointCloud)>, SimError> {
    indices
        .iter()
        .map(|&i| {
            let s = reference.samples()[i];
            let pose_b = s.pose.compose(&rig.extrinsic);
            let a = scan_scene(scene, &s.pose, scanner, frame_seed(seed, s.k, 0))?
                .in_frame(rig.reference.clone(), s.k);
            let b = scan_scene(scene, &pose_b, scanner, frame_seed(seed, s.k, 1))?
                .in_frame(rig.target.clone(), s.k);
            Ok((a, b))
        })
        .collect()
}

/// Axis-aligned bounds of the trajectory's ground track.
pub fn track_bounds(reference: &Trajectory) -> ((f64, f64), (f64, f64)) {
    let mut min = (f64::INFINITY, f64::INFINITY);
    let mut max = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for s in reference.samples() {
        let t = s.pose.translation;
        min = (min.0.min(t.x), min.1.min(t.y));
        max = (max.0.max(t.x), max.1.max(t.y));
    }
    (min, max)
}
