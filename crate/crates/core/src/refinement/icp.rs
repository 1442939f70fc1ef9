use nalgebra::{Matrix6, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Vec3, Vec6};

use super::plane::principal_axes;
use super::{KdTree, RefinementError};

/// Point-to-plane ICP settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop once the tangent increment norm falls below this.
    pub tolerance: f64,
    /// Neighbors used for PCA normals.
    pub normal_neighbors: usize,
    /// Correspondences farther than `trim_factor` times the median distance are dropped.
    pub trim_factor: f64,
    /// Minimum `|cos|` between source and target normals of a correspondence.
    pub normal_agreement: f64,
    /// Neighborhoods with surface variation `l0 / (l0 + l1 + l2)` above this have no normal.
    pub max_surface_variation: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-6,
            normal_neighbors: 10,
            trim_factor: 3.0,
            normal_agreement: 0.8,
            max_surface_variation: 0.02,
        }
    }
}

/// Outcome of registering one source cloud onto a target cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    /// Maps source coordinates into the target frame.
    pub transform: Pose,
    /// Mean absolute point-to-plane distance over accepted correspondences, meters.
    pub error: f64,
    /// Same statistic at the initial transform.
    pub initial_error: f64,
    pub iterations: usize,
    pub correspondences: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    pub converged: bool,
    /// The linearized system was rank-deficient in some iteration.
    pub degenerate: bool,
}

/// PCA normals over the `k` nearest neighbors, oriented toward the sensor
/// origin. Points on non-planar neighborhoods get `None`.
pub fn estimate_normals(tree: &KdTree, k: usize, max_surface_variation: f64) -> Vec<Option<Vec3>> {
    let points = tree.points();
    points
        .par_iter()
        .map(|p| {
            let nn = tree.k_nearest(p, k);
            if nn.len() < 3 {
                return None;
            }
            let (_, values, axes) = principal_axes(points, nn.iter().map(|n| n.index));
            let total = values[0] + values[1] + values[2];
            if !(total > 0.0)
                || values[1] <= 1e-12 * values[2]
                || values[0] > max_surface_variation * total
            {
                return None;
            }
            let n: Vec3 = axes.column(0).into_owned();
            Some(if n.dot(p) > 0.0 { -n } else { n })
        })
        .collect()
}

struct Surface {
    tree: KdTree,
    normals: Vec<Vec3>,
}

impl Surface {
    fn new(points: &[Vec3], params: &IcpParams) -> Result<Self, RefinementError> {
        let full = KdTree::build(points)?;
        let normals =
            estimate_normals(&full, params.normal_neighbors, params.max_surface_variation);
        let keep: Vec<usize> = (0..points.len())
            .filter(|&i| normals[i].is_some())
            .collect();
        if keep.len() < 6 {
            return Err(RefinementError::NormalEstimationFailure {
                valid: keep.len(),
                total: points.len(),
            });
        }
        let kept_points: Vec<Vec3> = keep.iter().map(|&i| points[i]).collect();
        let kept_normals = keep
            .iter()
            .map(|&i| normals[i].expect("filtered"))
            .collect();
        Ok(Self {
            tree: KdTree::build(&kept_points)?,
            normals: kept_normals,
        })
    }
}

struct Match {
    point: Vec3,
    normal: Vec3,
    residual: f64,
}

fn correspondences(
    source: &Surface,
    target: &Surface,
    transform: &Pose,
    params: &IcpParams,
) -> Vec<Match> {
    let rot = transform.rotation;
    let candidates: Vec<(f64, Match)> = source
        .tree
        .points()
        .par_iter()
        .zip(source.normals.par_iter())
        .filter_map(|(p, ns)| {
            let moved = transform.transform_point(p);
            let nn = target.tree.nearest(&moved);
            let normal = target.normals[nn.index];
            if rot.rotate(ns).dot(&normal).abs() < params.normal_agreement {
                return None;
            }
            let q = target.tree.point(nn.index);
            Some((
                nn.distance,
                Match {
                    point: moved,
                    normal,
                    residual: normal.dot(&(moved - q)),
                },
            ))
        })
        .collect();
    if candidates.is_empty() {
        return Vec::new();
    }
    let mut d: Vec<f64> = candidates.iter().map(|c| c.0).collect();
    let mid = d.len() / 2;
    let (_, median, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let cap = params.trim_factor * *median;
    candidates
        .into_iter()
        .filter(|c| c.0 <= cap)
        .map(|c| c.1)
        .collect()
}

fn mean_abs(matches: &[Match]) -> f64 {
    matches.iter().map(|m| m.residual.abs()).sum::<f64>() / matches.len() as f64
}

/// Gauss-Newton step on `T <- exp(xi) T` for the stacked point-to-plane residuals.
/// Returns the step and whether the normal matrix was rank-deficient.
fn solve_step(matches: &[Match]) -> (Vec6, bool) {
    let mut h = Matrix6::zeros();
    let mut g = Vec6::zeros();
    for m in matches {
        let c = m.point.cross(&m.normal);
        let j = Vec6::new(m.normal.x, m.normal.y, m.normal.z, c.x, c.y, c.z);
        h += j * j.transpose();
        g += j * m.residual;
    }
    let eig = SymmetricEigen::new(h);
    let max = eig.eigenvalues.max();
    let floor = 1e-9 * max.max(f64::MIN_POSITIVE);
    let mut step = Vec6::zeros();
    let mut degenerate = false;
    for i in 0..6 {
        let lambda = eig.eigenvalues[i];
        if lambda <= floor {
            degenerate = true;
            continue;
        }
        let v = eig.eigenvectors.column(i);
        step -= v * (v.dot(&g) / lambda);
    }
    (step, degenerate)
}

/// Registers `source` onto `target`, starting from `t_init`. The returned
/// transform is the best iterate by registration error.
pub fn icp_point_to_plane(
    source: &[Vec3],
    target: &[Vec3],
    t_init: &Pose,
    params: &IcpParams,
) -> Result<RegistrationResult, RefinementError> {
    if source.len() < 10 || target.len() < 10 {
        return Err(RefinementError::InsufficientCorrespondences {
            found: source.len().min(target.len()),
        });
    }
    let target_surface = Surface::new(target, params)?;
    let source_surface = Surface::new(source, params)?;

    let mut transform = *t_init;
    let mut best: Option<(f64, Pose, usize)> = None;
    let mut initial_error = f64::NAN;
    let mut converged = false;
    let mut degenerate = false;
    let mut iterations = 0;
    while iterations < params.max_iterations {
        let matches = correspondences(&source_surface, &target_surface, &transform, params);
        if matches.len() < 6 {
            return Err(RefinementError::InsufficientCorrespondences {
                found: matches.len(),
            });
        }
        let error = mean_abs(&matches);
        if iterations == 0 {
            initial_error = error;
        }
        if best.is_none_or(|(e, _, _)| error < e) {
            best = Some((error, transform, matches.len()));
        }
        iterations += 1;
        let (step, rank_deficient) = solve_step(&matches);
        degenerate |= rank_deficient;
        if step.norm() < params.tolerance {
            converged = true;
            break;
        }
        transform = Pose::exp(&step).compose(&transform);
    }
    if !converged {
        let matches = correspondences(&source_surface, &target_surface, &transform, params);
        if matches.len() >= 6 {
            let error = mean_abs(&matches);
            if best.is_none_or(|(e, _, _)| error < e) {
                best = Some((error, transform, matches.len()));
            }
        }
    }
    let (error, transform, count) = best.expect("at least one iteration ran");
    Ok(RegistrationResult {
        transform,
        error,
        initial_error,
        iterations,
        correspondences: count,
        omega: None,
        converged: converged && !degenerate,
        degenerate,
    })
}
