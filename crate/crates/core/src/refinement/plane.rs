use nalgebra::{Matrix3, SymmetricEigen};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Rotation, Vec3};

use super::RefinementError;

/// Plane `n·p + d = 0` with its RANSAC support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    #[serde(with = "crate::geometry::vec3_serde")]
    pub normal: Vec3,
    pub offset: f64,
    pub inlier_count: usize,
    /// RMS distance of the inliers to the plane, meters.
    pub inlier_rms: f64,
}

impl Plane {
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) + self.offset
    }

    /// Indices of `points` within `dist` of the plane.
    pub fn inliers(&self, points: &[Vec3], dist: f64) -> Vec<usize> {
        points
            .iter()
            .enumerate()
            .filter(|(_, p)| self.signed_distance(p).abs() <= dist)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Centroid and covariance eigen-decomposition of a point subset, eigenvalues ascending.
pub(crate) fn principal_axes(
    points: &[Vec3],
    subset: impl Iterator<Item = usize> + Clone,
) -> (Vec3, [f64; 3], Matrix3<f64>) {
    let mut centroid = Vec3::zeros();
    let mut n = 0usize;
    for i in subset.clone() {
        centroid += points[i];
        n += 1;
    }
    centroid /= n as f64;
    let mut cov = Matrix3::zeros();
    for i in subset {
        let d = points[i] - centroid;
        cov += d * d.transpose();
    }
    cov /= n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = [
        eig.eigenvalues[idx[0]],
        eig.eigenvalues[idx[1]],
        eig.eigenvalues[idx[2]],
    ];
    let vectors = Matrix3::from_columns(&[
        eig.eigenvectors.column(idx[0]).into_owned(),
        eig.eigenvectors.column(idx[1]).into_owned(),
        eig.eigenvectors.column(idx[2]).into_owned(),
    ]);
    (centroid, values, vectors)
}

fn orient_up(normal: Vec3) -> Vec3 {
    let n = normal.normalize();
    let flip = if n.z != 0.0 {
        n.z < 0.0
    } else if n.y != 0.0 {
        n.y < 0.0
    } else {
        n.x < 0.0
    };
    if flip {
        -n
    } else {
        n
    }
}

fn refit(points: &[Vec3], inliers: &[usize], dist: f64) -> Plane {
    let (centroid, _, axes) = principal_axes(points, inliers.iter().copied());
    let normal = orient_up(axes.column(0).into_owned());
    let mut plane = Plane {
        normal,
        offset: -normal.dot(&centroid),
        inlier_count: 0,
        inlier_rms: 0.0,
    };
    let support = plane.inliers(points, dist);
    let sq: f64 = support
        .iter()
        .map(|&i| plane.signed_distance(&points[i]).powi(2))
        .sum();
    plane.inlier_count = support.len();
    plane.inlier_rms = if support.is_empty() {
        0.0
    } else {
        (sq / support.len() as f64).sqrt()
    };
    plane
}

/// Iterations needed to draw one all-inlier sample with 99% confidence.
fn required_iterations(inlier_ratio: f64) -> usize {
    let w3 = inlier_ratio.powi(3);
    if w3 >= 1.0 {
        return 1;
    }
    if w3 <= 0.0 {
        return usize::MAX;
    }
    let n = (1.0f64 - 0.99).ln() / (1.0 - w3).ln();
    n.ceil().max(1.0) as usize
}

/// RANSAC plane fit: three-point hypotheses scored by inlier count, with the
/// iteration budget shrinking as the inlier ratio grows, then a least-squares
/// refit to the inliers. The normal is oriented so that `n_z >= 0`.
pub fn ransac_plane(
    points: &[Vec3],
    max_iters: usize,
    inlier_dist: f64,
    seed: u64,
) -> Result<Plane, RefinementError> {
    if !(inlier_dist > 0.0) {
        return Err(RefinementError::InvalidParameter(
            "inlier distance must be positive",
        ));
    }
    let n = points.len();
    if n < 3 {
        return Err(RefinementError::DegenerateGeometry);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = points.iter().map(|p| p.norm()).fold(1.0, f64::max);
    let mut best: Option<(usize, Vec3, f64)> = None;
    let mut budget = max_iters.max(1);
    let mut it = 0;
    while it < budget {
        it += 1;
        let s = sample(&mut rng, n, 3);
        let (a, b, c) = (points[s.index(0)], points[s.index(1)], points[s.index(2)]);
        let cross = (b - a).cross(&(c - a));
        if cross.norm() <= 1e-12 * scale * scale {
            continue;
        }
        let normal = cross.normalize();
        let offset = -normal.dot(&a);
        let count = points
            .iter()
            .filter(|p| (normal.dot(p) + offset).abs() <= inlier_dist)
            .count();
        if best.is_none_or(|(bc, _, _)| count > bc) {
            best = Some((count, normal, offset));
            budget = budget.min(required_iterations(count as f64 / n as f64));
        }
    }
    let (_, normal, offset) = best.ok_or(RefinementError::DegenerateGeometry)?;
    let hypothesis = Plane {
        normal,
        offset,
        inlier_count: 0,
        inlier_rms: 0.0,
    };
    let inliers = hypothesis.inliers(points, inlier_dist);
    Ok(refit(points, &inliers, inlier_dist))
}

/// Ground-plane settings used by [`estimate_tz`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundParams {
    pub max_iters: usize,
    pub inlier_dist: f64,
    pub min_inliers: usize,
}

impl Default for GroundParams {
    fn default() -> Self {
        Self {
            max_iters: 500,
            inlier_dist: 0.05,
            min_inliers: 10,
        }
    }
}

/// Centroid of the RANSAC ground inliers, or `None` when the set is too small
/// or degenerate.
pub fn ground_centroid(points: &[Vec3], params: &GroundParams, seed: u64) -> Option<Vec3> {
    if points.len() < params.min_inliers.max(3) {
        return None;
    }
    let plane = ransac_plane(points, params.max_iters, params.inlier_dist, seed).ok()?;
    let inliers = plane.inliers(points, params.inlier_dist);
    if inliers.len() < params.min_inliers.max(3) {
        return None;
    }
    let sum: Vec3 = inliers.iter().map(|&i| points[i]).sum();
    Some(sum / inliers.len() as f64)
}

/// Mean over frames of `(c_a - R c_b)_z`, where `c` are ground-inlier
/// centroids of each sensor's ground points. Frames lacking ground on either
/// side are skipped.
pub fn estimate_tz(
    ground_pairs: &[(Vec<Vec3>, Vec<Vec3>)],
    rotation: &Rotation,
    params: &GroundParams,
    seed: u64,
) -> Result<f64, RefinementError> {
    let mut sum = 0.0;
    let mut used = 0usize;
    for (i, (ga, gb)) in ground_pairs.iter().enumerate() {
        let s = seed.wrapping_add(2 * i as u64);
        let (Some(ca), Some(cb)) = (
            ground_centroid(ga, params, s),
            ground_centroid(gb, params, s.wrapping_add(1)),
        ) else {
            continue;
        };
        sum += (ca - rotation.rotate(&cb)).z;
        used += 1;
    }
    if used == 0 {
        return Err(RefinementError::NoGroundOverlap);
    }
    Ok(sum / used as f64)
}
