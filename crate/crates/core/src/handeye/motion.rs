use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Vec3};

/// Below this rotation angle a motion counts as a pure translation.
const PURE_TRANSLATION_ANGLE: f64 = 1e-9;

/// Synchronized incremental motions of the reference (`a`) and target (`b`)
/// sensors over one interval `[k-1, k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionPair {
    pub k: u64,
    pub motion_a: Pose,
    pub motion_b: Pose,
    /// `|theta_a - theta_b|`, radians.
    pub rot_residual: f64,
    /// `(r_a . t_a - r_b . t_b)^2`, square meters.
    pub trans_residual: f64,
    pub inlier: bool,
}

impl MotionPair {
    pub fn new(k: u64, motion_a: Pose, motion_b: Pose) -> Self {
        let (rot_residual, trans_residual) = screw_residuals(&motion_a, &motion_b);
        Self {
            k,
            motion_a,
            motion_b,
            rot_residual,
            trans_residual,
            inlier: true,
        }
    }

    /// Builds pairs from two absolute trajectories sampled at the same instants.
    pub fn from_poses(ks: &[u64], poses_a: &[Pose], poses_b: &[Pose]) -> Vec<MotionPair> {
        assert_eq!(poses_a.len(), poses_b.len());
        assert_eq!(ks.len(), poses_a.len());
        (1..poses_a.len())
            .map(|i| {
                let a = poses_a[i - 1].inverse().compose(&poses_a[i]);
                let b = poses_b[i - 1].inverse().compose(&poses_b[i]);
                MotionPair::new(ks[i], a, b)
            })
            .collect()
    }
}

/// Screw-motion residuals of a motion pair.
///
/// Conjugate motions share rotation angle and the projection of translation
/// onto the rotation axis, independent of the extrinsic. When either motion
/// is a pure translation the axis is undefined and the translation lengths
/// are compared instead.
pub fn screw_residuals(motion_a: &Pose, motion_b: &Pose) -> (f64, f64) {
    let la = motion_a.rotation.log();
    let lb = motion_b.rotation.log();
    let rot = (la.angle - lb.angle).abs();
    let trans = if la.angle <= PURE_TRANSLATION_ANGLE || lb.angle <= PURE_TRANSLATION_ANGLE {
        let d = motion_a.translation.norm() - motion_b.translation.norm();
        d * d
    } else {
        let d = pitch(&la.axis, &motion_a.translation) - pitch(&lb.axis, &motion_b.translation);
        d * d
    };
    (rot, trans)
}

fn pitch(axis: &Vec3, t: &Vec3) -> f64 {
    axis.dot(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation;

    #[test]
    fn identical_motions_have_zero_residuals() {
        let m = Pose::new(Rotation::from_rpy(0.1, 0.2, 0.3), Vec3::new(1.0, 2.0, 3.0));
        let pair = MotionPair::new(1, m, m);
        assert_eq!(pair.rot_residual, 0.0);
        assert_eq!(pair.trans_residual, 0.0);
    }

    #[test]
    fn conjugate_pure_translations_agree() {
        let a = Pose::from_translation(Vec3::new(1.0, 0.5, 0.0));
        let x = Pose::new(
            Rotation::from_rpy(0.3, 1.0, -2.0),
            Vec3::new(0.2, 0.1, -1.0),
        );
        let b = x.inverse().compose(&a).compose(&x);
        let (r, t) = screw_residuals(&a, &b);
        assert!(r < 1e-12 && t < 1e-20);
    }

    #[test]
    fn cached_residuals_match_recomputation() {
        let a = Pose::new(Rotation::from_yaw(0.2), Vec3::new(1.0, 0.0, 0.0));
        let b = Pose::new(Rotation::from_rpy(0.05, 0.0, 0.1), Vec3::new(0.7, 0.2, 0.1));
        let pair = MotionPair::new(3, a, b);
        let (r, t) = screw_residuals(&a, &b);
        assert!((pair.rot_residual - r).abs() < 1e-12);
        assert!((pair.trans_residual - t).abs() < 1e-12);
        assert!(pair.rot_residual > 0.0 && pair.trans_residual > 0.0);
    }
}
