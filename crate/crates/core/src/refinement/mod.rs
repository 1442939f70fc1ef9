//! Appearance-based refinement: ground-plane `t_z` recovery, overlap
//! filtering, point-to-plane ICP per frame, and candidate averaging.

mod cloud;
mod icp;
mod kdtree;
mod overlap;
mod plane;
mod refine;

pub use cloud::{CloudError, FrameId, PointCloud};
pub use icp::{estimate_normals, icp_point_to_plane, IcpParams, RegistrationResult};
pub use kdtree::{KdTree, Neighbor};
pub use overlap::{overlap_filter, Overlap};
pub use plane::{estimate_tz, ground_centroid, ransac_plane, GroundParams, Plane};
pub use refine::{
    chordal_mean, refine_extrinsic, FrameResult, OmegaGate, RefineParams, Refinement,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RefinementError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("points do not span a plane")]
    DegenerateGeometry,
    #[error("no frame has ground inliers in both clouds")]
    NoGroundOverlap,
    #[error("only {found} correspondences survived rejection")]
    InsufficientCorrespondences { found: usize },
    #[error("normals available for {valid} of {total} points")]
    NormalEstimationFailure { valid: usize, total: usize },
    #[error("no usable frame: {gated} of {frames} passed the overlap gate, none converged")]
    NoUsableFrames { frames: usize, gated: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}
