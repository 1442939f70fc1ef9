use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::{Pose, Vec3};
use crate::refinement::PointCloud;

/// A finite convex planar polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    vertices: Vec<[f64; 3]>,
    normal: [f64; 3],
}

impl Patch {
    /// Vertices must be coplanar, convex, and ordered counter-clockwise about the normal.
    pub fn new(vertices: Vec<Vec3>) -> Result<Self, SimError> {
        if vertices.len() < 3 {
            return Err(SimError::BadPatch("fewer than three vertices"));
        }
        // Newell's method.
        let mut n = Vec3::zeros();
        for (i, v) in vertices.iter().enumerate() {
            let w = vertices[(i + 1) % vertices.len()];
            n.x += (v.y - w.y) * (v.z + w.z);
            n.y += (v.z - w.z) * (v.x + w.x);
            n.z += (v.x - w.x) * (v.y + w.y);
        }
        let norm = n.norm();
        if norm < 1e-12 {
            return Err(SimError::BadPatch("degenerate polygon"));
        }
        let n = n / norm;
        Ok(Self {
            vertices: vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
            normal: [n.x, n.y, n.z],
        })
    }

    /// Rectangle centered at `center` spanned by `u` and `v` (half extents).
    /// The normal is `u x v`, normalized.
    pub fn rectangle(center: Vec3, u: Vec3, v: Vec3) -> Result<Self, SimError> {
        Self::new(vec![
            center - u - v,
            center + u - v,
            center + u + v,
            center - u + v,
        ])
    }

    /// Vertical wall between two ground points, from `z = 0` to `height`.
    pub fn wall(from: (f64, f64), to: (f64, f64), height: f64) -> Result<Self, SimError> {
        let a = Vec3::new(from.0, from.1, 0.0);
        let b = Vec3::new(to.0, to.1, 0.0);
        let up = Vec3::new(0.0, 0.0, height);
        Self::new(vec![a, b, b + up, a + up])
    }

    pub fn normal(&self) -> Vec3 {
        Vec3::from(self.normal)
    }

    pub fn vertices(&self) -> Vec<Vec3> {
        self.vertices.iter().map(|v| Vec3::from(*v)).collect()
    }

    /// Signed distance of `p` from the patch's supporting plane.
    pub fn plane_distance(&self, p: &Vec3) -> f64 {
        self.normal().dot(&(p - Vec3::from(self.vertices[0])))
    }

    /// Ray parameter of the hit, if the ray crosses the polygon at `t > 0`.
    fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let n = self.normal();
        let denom = n.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let v0 = Vec3::from(self.vertices[0]);
        let t = n.dot(&(v0 - origin)) / denom;
        if t <= 1e-9 {
            return None;
        }
        let p = origin + dir * t;
        let m = self.vertices.len();
        for i in 0..m {
            let a = Vec3::from(self.vertices[i]);
            let b = Vec3::from(self.vertices[(i + 1) % m]);
            if (b - a).cross(&(p - a)).dot(&n) < -1e-12 {
                return None;
            }
        }
        Some(t)
    }

    /// Whether `p` projects inside the polygon (edges inclusive).
    pub fn contains_projection(&self, p: &Vec3) -> bool {
        let n = self.normal();
        let m = self.vertices.len();
        (0..m).all(|i| {
            let a = Vec3::from(self.vertices[i]);
            let b = Vec3::from(self.vertices[(i + 1) % m]);
            (b - a).cross(&(p - a)).dot(&n) >= -1e-9
        })
    }
}

/// Planar patches plus a ground plane at `z = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneModel {
    pub patches: Vec<Patch>,
    /// Half side length of the square ground patch centered at the origin;
    /// infinite means unbounded.
    pub ground_half_extent: f64,
}

impl SceneModel {
    pub fn ground_only(half_extent: f64) -> Self {
        Self {
            patches: Vec::new(),
            ground_half_extent: half_extent,
        }
    }

    /// Streets of building facades around the rectangle `[min, max]` the
    /// sensors move through: axis-aligned blocks, angled corner facades and a
    /// few free-standing boxes, so that no single direction is unconstrained.
    pub fn urban_block(min: (f64, f64), max: (f64, f64), seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let margin = 8.0;
        let (x0, y0) = (min.0 - margin, min.1 - margin);
        let (x1, y1) = (max.0 + margin, max.1 + margin);
        let mut patches = Vec::new();
        let height = |rng: &mut ChaCha8Rng| rng.random_range(6.0..15.0);

        // Facades along each side, broken into segments with small setbacks.
        let segment = 12.0;
        let mut side =
            |from: (f64, f64), to: (f64, f64), inward: (f64, f64), rng: &mut ChaCha8Rng| {
                let len = ((to.0 - from.0).powi(2) + (to.1 - from.1).powi(2)).sqrt();
                let n = (len / segment).ceil().max(1.0) as usize;
                for i in 0..n {
                    let s0 = i as f64 / n as f64;
                    let s1 = (i as f64 + 0.8) / n as f64;
                    let off = rng.random_range(-1.5..1.5);
                    let p = |s: f64| {
                        (
                            from.0 + (to.0 - from.0) * s + inward.0 * off,
                            from.1 + (to.1 - from.1) * s + inward.1 * off,
                        )
                    };
                    if let Ok(w) = Patch::wall(p(s0), p(s1), height(rng)) {
                        patches.push(w);
                    }
                }
            };
        side((x0, y0), (x1, y0), (0.0, 1.0), &mut rng);
        side((x1, y0), (x1, y1), (-1.0, 0.0), &mut rng);
        side((x1, y1), (x0, y1), (0.0, -1.0), &mut rng);
        side((x0, y1), (x0, y0), (1.0, 0.0), &mut rng);

        // Chamfered corners, 45 degrees to the streets.
        let c = 5.0;
        for (a, b) in [
            ((x0 + c, y0), (x0, y0 + c)),
            ((x1, y0 + c), (x1 - c, y0)),
            ((x1 - c, y1), (x1, y1 - c)),
            ((x0, y1 - c), (x0 + c, y1)),
        ] {
            if let Ok(w) = Patch::wall(a, b, height(&mut rng)) {
                patches.push(w);
            }
        }

        // Free-standing boxes at rotated headings just outside the path region.
        for _ in 0..4 {
            let side_pick: u8 = rng.random_range(0..4);
            let t: f64 = rng.random_range(0.15..0.85);
            let (cx, cy) = match side_pick {
                0 => (min.0 + (max.0 - min.0) * t, y0 + 3.5),
                1 => (x1 - 3.5, min.1 + (max.1 - min.1) * t),
                2 => (min.0 + (max.0 - min.0) * t, y1 - 3.5),
                _ => (x0 + 3.5, min.1 + (max.1 - min.1) * t),
            };
            let yaw: f64 = rng.random_range(0.2..1.2);
            let h = height(&mut rng).min(4.0);
            let (s, co) = yaw.sin_cos();
            let corner = |dx: f64, dy: f64| (cx + co * dx - s * dy, cy + s * dx + co * dy);
            let pts = [
                corner(-1.0, -1.0),
                corner(1.0, -1.0),
                corner(1.0, 1.0),
                corner(-1.0, 1.0),
            ];
            for i in 0..4 {
                if let Ok(w) = Patch::wall(pts[i], pts[(i + 1) % 4], h) {
                    patches.push(w);
                }
            }
        }

        let reach = [x0.abs(), x1.abs(), y0.abs(), y1.abs()]
            .into_iter()
            .fold(0.0, f64::max);
        Self {
            patches,
            ground_half_extent: reach + 200.0,
        }
    }

    /// Nearest hit along a unit ray: `(range, is_ground)`.
    pub fn cast(&self, origin: &Vec3, dir: &Vec3, max_range: f64) -> Option<(f64, bool)> {
        let mut best: Option<(f64, bool)> = None;
        if dir.z.abs() > 1e-12 {
            let t = -origin.z / dir.z;
            if t > 1e-9 && t <= max_range {
                let p = origin + dir * t;
                if p.x.abs() <= self.ground_half_extent && p.y.abs() <= self.ground_half_extent {
                    best = Some((t, true));
                }
            }
        }
        for patch in &self.patches {
            if let Some(t) = patch.intersect(origin, dir) {
                if t <= max_range && best.is_none_or(|(b, _)| t < b) {
                    best = Some((t, false));
                }
            }
        }
        best
    }

    /// Distance from a world point to the closest scene surface it lies on,
    /// used to check scans against the analytic geometry.
    pub fn surface_distance(&self, p: &Vec3) -> f64 {
        let mut best =
            if p.x.abs() <= self.ground_half_extent && p.y.abs() <= self.ground_half_extent {
                p.z.abs()
            } else {
                f64::INFINITY
            };
        for patch in &self.patches {
            if patch.contains_projection(p) {
                best = best.min(patch.plane_distance(p).abs());
            }
        }
        best
    }
}

/// Multi-beam spinning range scanner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScannerModel {
    pub beams: u32,
    /// Lowest and highest beam elevation, degrees.
    pub vertical_fov_deg: (f64, f64),
    /// Horizontal angular step, degrees.
    pub azimuth_step_deg: f64,
    pub max_range: f64,
    /// Standard deviation of additive range noise, meters.
    pub range_noise_std: f64,
}

impl Default for ScannerModel {
    fn default() -> Self {
        Self {
            beams: 16,
            vertical_fov_deg: (-15.0, 15.0),
            azimuth_step_deg: 1.0,
            max_range: 100.0,
            range_noise_std: 0.0,
        }
    }
}

impl ScannerModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.beams < 1 {
            return Err(SimError::BadScanner("beam count must be at least 1"));
        }
        if !(self.max_range > 0.0) {
            return Err(SimError::BadScanner("max range must be positive"));
        }
        if !(self.azimuth_step_deg > 0.0) {
            return Err(SimError::BadScanner("azimuth step must be positive"));
        }
        if !(self.range_noise_std >= 0.0) {
            return Err(SimError::BadScanner("range noise must be non-negative"));
        }
        Ok(())
    }

    /// Unit ray directions in the sensor frame, beam-major.
    pub fn ray_directions(&self) -> Vec<Vec3> {
        let (lo, hi) = self.vertical_fov_deg;
        let steps = (360.0 / self.azimuth_step_deg).round().max(1.0) as usize;
        let mut out = Vec::with_capacity(self.beams as usize * steps);
        for b in 0..self.beams {
            let el = if self.beams == 1 {
                lo
            } else {
                lo + (hi - lo) * b as f64 / (self.beams - 1) as f64
            }
            .to_radians();
            for j in 0..steps {
                let az = (j as f64 * self.azimuth_step_deg).to_radians();
                out.push(Vec3::new(
                    el.cos() * az.cos(),
                    el.cos() * az.sin(),
                    el.sin(),
                ));
            }
        }
        out
    }
}

/// Casts every scanner ray from `sensor_pose` (sensor to world) and returns
/// the hits in the sensor frame, with ground hits labeled.
pub fn scan_scene(
    scene: &SceneModel,
    sensor_pose: &Pose,
    scanner: &ScannerModel,
    seed: u64,
) -> Result<PointCloud, SimError> {
    scanner.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, scanner.range_noise_std).expect("validated");
    let origin = sensor_pose.translation;
    let mut points = Vec::new();
    let mut ground = Vec::new();
    for d in scanner.ray_directions() {
        let world_dir = sensor_pose.rotation.rotate(&d);
        if let Some((range, is_ground)) = scene.cast(&origin, &world_dir, scanner.max_range) {
            let r = if scanner.range_noise_std > 0.0 {
                range + noise.sample(&mut rng)
            } else {
                range
            };
            points.push(d * r);
            ground.push(is_ground);
        }
    }
    if points.is_empty() {
        return Err(SimError::EmptyScan);
    }
    Ok(PointCloud::with_ground(points, Some(ground)).expect("finite by construction"))
}
