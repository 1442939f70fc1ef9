use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::Vec3;

use super::RefinementError;

const LEAF_SIZE: usize = 8;

/// A neighbor returned by a query: index into the indexed points and
/// Euclidean distance to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Static 3-D KD-tree over a point set, stored implicitly as a permutation of
/// point indices with the median of every range as the splitting node.
///
/// Ties in distance resolve to the smaller point index, so results equal a
/// linear scan exactly.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    axis: Vec<u8>,
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> Result<Self, RefinementError> {
        if points.is_empty() {
            return Err(RefinementError::EmptyCloud);
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axis = vec![0u8; points.len()];
        build_range(points, &mut order, &mut axis);
        Ok(Self {
            points: points.to_vec(),
            order,
            axis,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn point(&self, index: usize) -> &Vec3 {
        &self.points[index]
    }

    pub fn nearest(&self, query: &Vec3) -> Neighbor {
        let mut best = Candidate {
            dist2: f64::INFINITY,
            index: usize::MAX,
        };
        self.nearest_in(query, 0, self.order.len(), &mut best);
        Neighbor {
            index: best.index,
            distance: best.dist2.sqrt(),
        }
    }

    /// Up to `k` nearest neighbors, closest first.
    pub fn k_nearest(&self, query: &Vec3, k: usize) -> Vec<Neighbor> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.k_nearest_in(query, k, 0, self.order.len(), &mut heap);
        heap.into_sorted_vec()
            .into_iter()
            .map(|c| Neighbor {
                index: c.index,
                distance: c.dist2.sqrt(),
            })
            .collect()
    }

    fn candidate(&self, query: &Vec3, pos: usize) -> Candidate {
        let index = self.order[pos];
        Candidate {
            dist2: (self.points[index] - query).norm_squared(),
            index,
        }
    }

    fn nearest_in(&self, query: &Vec3, lo: usize, hi: usize, best: &mut Candidate) {
        if hi - lo <= LEAF_SIZE {
            for pos in lo..hi {
                let c = self.candidate(query, pos);
                if c < *best {
                    *best = c;
                }
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let c = self.candidate(query, mid);
        if c < *best {
            *best = c;
        }
        let ax = self.axis[mid] as usize;
        let diff = query[ax] - self.points[self.order[mid]][ax];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_in(query, near.0, near.1, best);
        if diff * diff <= best.dist2 {
            self.nearest_in(query, far.0, far.1, best);
        }
    }

    fn k_nearest_in(
        &self,
        query: &Vec3,
        k: usize,
        lo: usize,
        hi: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        let offer = |c: Candidate, heap: &mut BinaryHeap<Candidate>| {
            if heap.len() < k {
                heap.push(c);
            } else if c < *heap.peek().expect("heap is full") {
                heap.pop();
                heap.push(c);
            }
        };
        if hi - lo <= LEAF_SIZE {
            for pos in lo..hi {
                offer(self.candidate(query, pos), heap);
            }
            return;
        }
        let mid = (lo + hi) / 2;
        offer(self.candidate(query, mid), heap);
        let ax = self.axis[mid] as usize;
        let diff = query[ax] - self.points[self.order[mid]][ax];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.k_nearest_in(query, k, near.0, near.1, heap);
        let worst = if heap.len() < k {
            f64::INFINITY
        } else {
            heap.peek().map_or(f64::INFINITY, |c| c.dist2)
        };
        if diff * diff <= worst {
            self.k_nearest_in(query, k, far.0, far.1, heap);
        }
    }
}

fn build_range(points: &[Vec3], order: &mut [usize], axis: &mut [u8]) {
    let n = order.len();
    if n <= LEAF_SIZE {
        return;
    }
    let mut min = Vec3::repeat(f64::INFINITY);
    let mut max = Vec3::repeat(f64::NEG_INFINITY);
    for &i in order.iter() {
        min = min.inf(&points[i]);
        max = max.sup(&points[i]);
    }
    let ax = (max - min).imax();
    let mid = n / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][ax].total_cmp(&points[b][ax]).then(a.cmp(&b))
    });
    axis[mid] = ax as u8;
    let (left, rest) = order.split_at_mut(mid);
    let (left_axis, rest_axis) = axis.split_at_mut(mid);
    build_range(points, left, left_axis);
    build_range(points, &mut rest[1..], &mut rest_axis[1..]);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_nearest(points: &[Vec3], q: &Vec3) -> Neighbor {
        let (index, d2) = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p - q).norm_squared()))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .unwrap();
        Neighbor {
            index,
            distance: d2.sqrt(),
        }
    }

    fn random_points(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-2.0..2.0),
                )
            })
            .collect()
    }

    #[test]
    fn empty_cloud_is_an_error() {
        assert!(matches!(
            KdTree::build(&[]),
            Err(RefinementError::EmptyCloud)
        ));
    }

    #[test]
    fn single_point() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        let tree = KdTree::build(&[p]).unwrap();
        let q = Vec3::new(0.0, 0.0, 0.0);
        let n = tree.nearest(&q);
        assert_eq!(n.index, 0);
        assert_eq!(n.distance, (p - q).norm());
    }

    #[test]
    fn member_query_returns_itself() {
        let points = random_points(500, 3);
        let tree = KdTree::build(&points).unwrap();
        for (i, p) in points.iter().enumerate().step_by(17) {
            let n = tree.nearest(p);
            assert_eq!(n.index, i);
            assert_eq!(n.distance, 0.0);
        }
    }

    #[test]
    fn duplicate_points_resolve_to_smallest_index() {
        let points = vec![Vec3::new(1.0, 1.0, 1.0); 20];
        let tree = KdTree::build(&points).unwrap();
        assert_eq!(tree.nearest(&Vec3::zeros()).index, 0);
        let knn = tree.k_nearest(&Vec3::zeros(), 3);
        assert_eq!(
            knn.iter().map(|n| n.index).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn k_nearest_matches_sorted_scan() {
        let points = random_points(2000, 9);
        let tree = KdTree::build(&points).unwrap();
        let queries = random_points(100, 10);
        for q in &queries {
            let mut all: Vec<(f64, usize)> = points
                .iter()
                .enumerate()
                .map(|(i, p)| ((p - q).norm_squared(), i))
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let got: Vec<usize> = tree.k_nearest(q, 10).iter().map(|n| n.index).collect();
            let want: Vec<usize> = all[..10].iter().map(|x| x.1).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn k_larger_than_cloud_returns_everything() {
        let points = random_points(5, 1);
        let tree = KdTree::build(&points).unwrap();
        assert_eq!(tree.k_nearest(&Vec3::zeros(), 50).len(), 5);
        assert!(tree.k_nearest(&Vec3::zeros(), 0).is_empty());
    }

    #[test]
    fn grid_ties_match_linear_scan() {
        let mut points = Vec::new();
        for i in 0..12 {
            for j in 0..12 {
                points.push(Vec3::new(i as f64, j as f64, 0.0));
            }
        }
        let tree = KdTree::build(&points).unwrap();
        for i in 0..11 {
            for j in 0..11 {
                let q = Vec3::new(i as f64 + 0.5, j as f64 + 0.5, 0.0);
                assert_eq!(tree.nearest(&q), linear_nearest(&points, &q));
            }
        }
    }

    #[test]
    fn nearest_matches_linear_scan() {
        let points = random_points(10_000, 42);
        let tree = KdTree::build(&points).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let q = Vec3::new(
                rng.random_range(-12.0..12.0),
                rng.random_range(-12.0..12.0),
                rng.random_range(-3.0..3.0),
            );
            assert_eq!(tree.nearest(&q), linear_nearest(&points, &q));
        }
    }
}
