use rayon::prelude::*;

use crate::geometry::{Pose, Vec3};

use super::{KdTree, PointCloud};

/// Mutually overlapping subsets of two clouds.
#[derive(Debug, Clone, PartialEq)]
pub struct Overlap {
    /// Indices into cloud a.
    pub s_a: Vec<usize>,
    /// Indices into cloud b.
    pub s_b: Vec<usize>,
    pub omega: f64,
}

fn within(tree: &KdTree, queries: &[Vec3], r: f64) -> Vec<usize> {
    queries
        .par_iter()
        .enumerate()
        .filter(|(_, q)| tree.nearest(q).distance < r)
        .map(|(i, _)| i)
        .collect()
}

/// Brings cloud b into frame a with `t_init`, keeps the points of each cloud
/// that have a neighbor in the other closer than `r`, and reports
/// `omega = (|S_a| / |P_a|) (|S_b| / |P_b|)`.
pub fn overlap_filter(
    cloud_a: &PointCloud,
    cloud_b: &PointCloud,
    t_init: &Pose,
    r: f64,
) -> Overlap {
    let empty = Overlap {
        s_a: Vec::new(),
        s_b: Vec::new(),
        omega: 0.0,
    };
    let b_in_a = cloud_b.transformed(t_init);
    let (Ok(tree_a), Ok(tree_b)) = (KdTree::build(cloud_a.points()), KdTree::build(&b_in_a)) else {
        return empty;
    };
    if !(r > 0.0) {
        return empty;
    }
    let s_a = within(&tree_b, cloud_a.points(), r);
    let s_b = within(&tree_a, &b_in_a, r);
    let omega =
        (s_a.len() as f64 / cloud_a.len() as f64) * (s_b.len() as f64 / cloud_b.len() as f64);
    Overlap { s_a, s_b, omega }
}
