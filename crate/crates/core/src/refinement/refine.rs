use nalgebra::{Matrix4, Quaternion, SymmetricEigen, UnitQuaternion};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Rotation, Vec3};
use crate::handeye::{Extrinsics, ExtrinsicsSource, SolverDiagnostics};

use super::{
    estimate_tz, icp_point_to_plane, overlap_filter, GroundParams, IcpParams, PointCloud,
    RefinementError, RegistrationResult,
};

/// Which frames are registered, based on their overlap factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "lowercase")]
pub enum OmegaGate {
    /// Keep frames with `omega > value`.
    Absolute(f64),
    /// Keep frames with `omega >= value * max omega`.
    Relative(f64),
}

impl Default for OmegaGate {
    fn default() -> Self {
        OmegaGate::Absolute(0.8)
    }
}

impl OmegaGate {
    pub fn value(&self) -> f64 {
        match *self {
            OmegaGate::Absolute(v) | OmegaGate::Relative(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineParams {
    /// Overlap radius, meters.
    pub r: f64,
    pub omega_gate: OmegaGate,
    /// Number of lowest-error registrations averaged into the estimate.
    pub candidates: usize,
    pub icp: IcpParams,
    pub ground: GroundParams,
    pub seed: u64,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            r: 10.0,
            omega_gate: OmegaGate::default(),
            candidates: 10,
            icp: IcpParams::default(),
            ground: GroundParams::default(),
            seed: 0,
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<(), RefinementError> {
        if !(self.r > 0.0) {
            return Err(RefinementError::InvalidParameter(
                "overlap radius must be positive",
            ));
        }
        let g = self.omega_gate.value();
        if !(g > 0.0 && g <= 1.0) {
            return Err(RefinementError::InvalidParameter(
                "omega gate must lie in (0, 1]",
            ));
        }
        if self.candidates == 0 {
            return Err(RefinementError::InvalidParameter(
                "candidate count must be positive",
            ));
        }
        if self.icp.max_iterations == 0
            || !(self.icp.tolerance > 0.0)
            || !(self.icp.trim_factor > 0.0)
        {
            return Err(RefinementError::InvalidParameter("invalid ICP parameters"));
        }
        if self.icp.normal_neighbors < 3 {
            return Err(RefinementError::InvalidParameter(
                "normal estimation needs at least 3 neighbors",
            ));
        }
        Ok(())
    }
}

/// Per-frame outcome of refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub k: u64,
    pub omega: f64,
    pub gated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registration: Option<RegistrationResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub candidate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub extrinsics: Extrinsics,
    /// Initialization with `t_z` filled in from the ground planes.
    pub completed_init: Pose,
    pub frames: Vec<FrameResult>,
}

/// Chordal L2 mean of rotations: the dominant eigenvector of `sum q q^T`,
/// which is invariant to the sign of each quaternion.
pub fn chordal_mean(rotations: &[Rotation]) -> Option<Rotation> {
    let first = rotations.first()?;
    let mut m = Matrix4::zeros();
    for r in rotations {
        let mut q = r.as_vector();
        if q.dot(&first.as_vector()) < 0.0 {
            q = -q;
        }
        m += q * q.transpose();
    }
    let eig = SymmetricEigen::new(m);
    let v = eig.eigenvectors.column(eig.eigenvalues.imax()).into_owned();
    let q = UnitQuaternion::from_quaternion(Quaternion::new(v[0], v[1], v[2], v[3]));
    Some(Rotation::from_unit_quaternion(q))
}

/// Completes `t_z` from ground planes, registers every frame passing the
/// overlap gate, and averages the lowest-error converged registrations.
pub fn refine_extrinsic(
    frames: &[(PointCloud, PointCloud)],
    init: &Extrinsics,
    params: &RefineParams,
) -> Result<Refinement, RefinementError> {
    params.validate()?;
    if frames.is_empty() {
        return Err(RefinementError::NoUsableFrames {
            frames: 0,
            gated: 0,
        });
    }
    let mut start = init.transform;
    if !init.tz_observable {
        let ground: Vec<(Vec<Vec3>, Vec<Vec3>)> = frames
            .iter()
            .map(|(a, b)| (a.ground_points(), b.ground_points()))
            .collect();
        start.translation.z = estimate_tz(&ground, &start.rotation, &params.ground, params.seed)?;
    }

    let overlaps: Vec<_> = frames
        .par_iter()
        .map(|(a, b)| overlap_filter(a, b, &start, params.r))
        .collect();
    let omega_max = overlaps.iter().map(|o| o.omega).fold(0.0, f64::max);
    let passes = |omega: f64| match params.omega_gate {
        OmegaGate::Absolute(g) => omega > g,
        OmegaGate::Relative(f) => omega > 0.0 && omega >= f * omega_max,
    };

    let mut results: Vec<FrameResult> = frames
        .par_iter()
        .zip(overlaps.par_iter())
        .map(|((a, b), overlap)| {
            let mut frame = FrameResult {
                k: a.frame.k,
                omega: overlap.omega,
                gated: passes(overlap.omega),
                registration: None,
                failure: None,
                candidate: false,
            };
            if frame.gated {
                let target: Vec<Vec3> = overlap.s_a.iter().map(|&i| a.points()[i]).collect();
                let source: Vec<Vec3> = overlap.s_b.iter().map(|&i| b.points()[i]).collect();
                match icp_point_to_plane(&source, &target, &start, &params.icp) {
                    Ok(mut reg) => {
                        reg.omega = Some(overlap.omega);
                        frame.registration = Some(reg);
                    }
                    Err(e) => frame.failure = Some(e.to_string()),
                }
            }
            frame
        })
        .collect();

    let mut ranked: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, f)| f.registration.as_ref().is_some_and(|r| r.converged))
        .map(|(i, _)| i)
        .collect();
    if ranked.is_empty() {
        return Err(RefinementError::NoUsableFrames {
            frames: frames.len(),
            gated: results.iter().filter(|f| f.gated).count(),
        });
    }
    let error_of = |i: usize| {
        results[i]
            .registration
            .as_ref()
            .map_or(f64::INFINITY, |r| r.error)
    };
    ranked.sort_by(|&i, &j| error_of(i).total_cmp(&error_of(j)).then(i.cmp(&j)));
    ranked.truncate(params.candidates);

    let mut rotations = Vec::with_capacity(ranked.len());
    let mut translation = Vec3::zeros();
    for &i in &ranked {
        results[i].candidate = true;
        let t = results[i]
            .registration
            .as_ref()
            .expect("ranked frames registered")
            .transform;
        rotations.push(t.rotation);
        translation += t.translation;
    }
    translation /= ranked.len() as f64;
    let rotation = chordal_mean(&rotations).expect("at least one candidate");

    let diagnostics = SolverDiagnostics {
        candidates: Some(ranked.len()),
        ..init.diagnostics.clone()
    };
    Ok(Refinement {
        extrinsics: Extrinsics {
            transform: Pose::new(rotation, translation),
            tz_observable: true,
            source: ExtrinsicsSource::Refined,
            diagnostics,
        },
        completed_init: start,
        frames: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chordal_mean_of_identical_rotations() {
        let r = Rotation::from_rpy(0.1, -0.2, 2.9);
        let m = chordal_mean(&[r, r, r]).unwrap();
        assert!(crate::geometry::rotation_angle_distance(&m, &r) < 1e-12);
    }

    #[test]
    fn chordal_mean_ignores_quaternion_sign() {
        let a = Rotation::from_yaw(0.1);
        let b = Rotation::from_yaw(-0.1);
        let m = chordal_mean(&[a, b]).unwrap();
        assert!(m.angle() < 1e-12);
        assert!(chordal_mean(&[]).is_none());
    }

    #[test]
    fn symmetric_spread_averages_to_center() {
        let c = Rotation::from_rpy(0.3, 0.2, -1.0);
        let rs: Vec<Rotation> = [0.02, -0.02]
            .iter()
            .flat_map(|&d| {
                [
                    c.compose(&Rotation::from_yaw(d)),
                    c.compose(&Rotation::from_rpy(d, 0.0, 0.0)),
                ]
            })
            .collect();
        let m = chordal_mean(&rs).unwrap();
        assert!(crate::geometry::rotation_angle_distance(&m, &c) < 1e-9);
    }

    #[test]
    fn parameter_validation() {
        assert!(RefineParams::default().validate().is_ok());
        let bad = RefineParams {
            omega_gate: OmegaGate::Absolute(1.5),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = RefineParams {
            r: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = RefineParams {
            candidates: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn no_frames() {
        let init = Extrinsics::new(Pose::identity(), ExtrinsicsSource::Init);
        assert!(matches!(
            refine_extrinsic(&[], &init, &RefineParams::default()),
            Err(RefinementError::NoUsableFrames { frames: 0, .. })
        ));
    }
}
