use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::{Pose, Rotation, Vec3, Vec6};
use crate::handeye::MotionPair;

/// Mounting height of the reference sensor above the ground plane, meters.
pub const REFERENCE_HEIGHT: f64 = 2.0;

/// A world-frame pose with its integer timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StampedPose {
    pub k: u64,
    pub pose: Pose,
}

/// Absolute world poses of one sensor at timestamps `k = 0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub sensor: String,
    samples: Vec<StampedPose>,
}

impl Trajectory {
    pub fn new(sensor: impl Into<String>, samples: Vec<StampedPose>) -> Result<Self, SimError> {
        if samples.len() < 3 {
            return Err(SimError::TooShort(samples.len()));
        }
        if let Some(w) = samples.windows(2).find(|w| w[1].k <= w[0].k) {
            return Err(SimError::NonIncreasing {
                prev: w[0].k,
                next: w[1].k,
            });
        }
        Ok(Self {
            sensor: sensor.into(),
            samples,
        })
    }

    pub fn samples(&self) -> &[StampedPose] {
        &self.samples
    }

    pub fn timestamps(&self) -> Vec<u64> {
        self.samples.iter().map(|s| s.k).collect()
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.samples.iter().map(|s| s.pose).collect()
    }

    /// Number of intervals, `K`.
    pub fn intervals(&self) -> usize {
        self.samples.len() - 1
    }

    /// Incremental motions `T_{k-1}^{-1} T_k` for `k = 1..=K`.
    pub fn motions(&self) -> Vec<Pose> {
        self.samples
            .windows(2)
            .map(|w| w[0].pose.inverse().compose(&w[1].pose))
            .collect()
    }

    /// Same timestamps, each pose right-multiplied by `extrinsic`.
    pub fn rigidly_attached(&self, sensor: impl Into<String>, extrinsic: &Pose) -> Trajectory {
        Trajectory {
            sensor: sensor.into(),
            samples: self
                .samples
                .iter()
                .map(|s| StampedPose {
                    k: s.k,
                    pose: s.pose.compose(extrinsic),
                })
                .collect(),
        }
    }

    /// Rebuilds a trajectory from a start pose and incremental motions.
    pub fn from_motions(
        sensor: impl Into<String>,
        start: Pose,
        motions: &[Pose],
    ) -> Result<Trajectory, SimError> {
        let mut samples = Vec::with_capacity(motions.len() + 1);
        let mut pose = start;
        samples.push(StampedPose { k: 0, pose });
        for (i, m) in motions.iter().enumerate() {
            pose = pose.compose(m);
            samples.push(StampedPose {
                k: i as u64 + 1,
                pose,
            });
        }
        Trajectory::new(sensor, samples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    /// Closed loop around a circle with a jittered turn rate.
    Loop,
    /// Lemniscate, turning left and right alternately.
    #[serde(rename = "eight")]
    FigureEight,
    /// Gentle slalom along a straight line; little total heading change.
    Sweep,
}

impl std::str::FromStr for TrajectoryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "loop" => Ok(Self::Loop),
            "eight" | "figure-eight" => Ok(Self::FigureEight),
            "sweep" | "low-rotation-sweep" => Ok(Self::Sweep),
            other => Err(format!(
                "unknown trajectory kind {other:?} (loop|eight|sweep)"
            )),
        }
    }
}

impl std::fmt::Display for TrajectoryKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Loop => "loop",
            Self::FigureEight => "eight",
            Self::Sweep => "sweep",
        })
    }
}

impl TrajectoryKind {
    pub const ALL: [TrajectoryKind; 3] = [Self::Loop, Self::FigureEight, Self::Sweep];
}

/// Heading amplitude of the sweep slalom, radians.
const SWEEP_HEADING_AMPLITUDE: f64 = 0.095;

/// Generates a planar reference-sensor trajectory with `k + 1` poses.
///
/// `scale` sets the spatial extent in meters. Poses sit at constant height
/// [`REFERENCE_HEIGHT`] with zero roll and pitch.
pub fn generate_trajectory(
    kind: TrajectoryKind,
    k: usize,
    scale: f64,
    seed: u64,
) -> Result<Trajectory, SimError> {
    if k < 2 {
        return Err(SimError::TooShort(k + 1));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: f64 = rng.random_range(0.0..2.0 * PI);
    let start_heading: f64 = rng.random_range(-PI..PI);
    let jitter: f64 = rng.random_range(0.9..1.1);

    // Planar path as position and heading per step, in a local frame.
    let path: Vec<(f64, f64, f64)> = match kind {
        TrajectoryKind::Loop => {
            let base_rate = 0.2 * jitter;
            let mut heading = 0.0;
            let (mut x, mut y) = (0.0, 0.0);
            let mut out = Vec::with_capacity(k + 1);
            for i in 0..=k {
                out.push((x, y, heading));
                let rate = base_rate * (1.0 + 0.6 * (2.0 * PI * i as f64 / 37.0 + phase).sin());
                let step = 0.1 * scale;
                x += step * (heading + 0.5 * rate).cos();
                y += step * (heading + 0.5 * rate).sin();
                heading += rate;
            }
            out
        }
        TrajectoryKind::FigureEight => {
            let period = 40.0 * jitter;
            (0..=k)
                .map(|i| {
                    let u = 2.0 * PI * i as f64 / period + phase;
                    let x = scale * u.sin();
                    let y = scale * u.sin() * u.cos();
                    let dx = u.cos();
                    let dy = (2.0 * u).cos();
                    (x, y, dy.atan2(dx))
                })
                .collect()
        }
        TrajectoryKind::Sweep => {
            let period = 4.0 * jitter;
            let step = 0.1 * scale;
            let slope = SWEEP_HEADING_AMPLITUDE.tan();
            let amplitude = slope * step * period / (2.0 * PI);
            (0..=k)
                .map(|i| {
                    let u = 2.0 * PI * i as f64 / period + phase;
                    let x = step * i as f64;
                    let y = amplitude * u.sin();
                    (x, y, (slope * u.cos()).atan())
                })
                .collect()
        }
    };

    let (s0, c0) = start_heading.sin_cos();
    let samples = path
        .into_iter()
        .enumerate()
        .map(|(i, (x, y, heading))| StampedPose {
            k: i as u64,
            pose: Pose::new(
                Rotation::from_yaw(start_heading + heading),
                Vec3::new(c0 * x - s0 * y, s0 * x + c0 * y, REFERENCE_HEIGHT),
            ),
        })
        .collect();
    Trajectory::new("a", samples)
}

/// Noiseless motion pairs of a rigidly attached target: `B_k = X^-1 A_k X`.
pub fn derive_target_motions(reference: &Trajectory, extrinsic: &Pose) -> Vec<MotionPair> {
    let x_inv = extrinsic.inverse();
    reference
        .motions()
        .into_iter()
        .zip(reference.samples().iter().skip(1))
        .map(|(a, s)| MotionPair::new(s.k, a, x_inv.compose(&a).compose(extrinsic)))
        .collect()
}

/// Applies `exp(log(T) + n)` with `n ~ N(0, sigma2 I_6)` drawn from `rng`.
pub fn perturb_motion_with<R: Rng + ?Sized>(motion: &Pose, sigma2: f64, rng: &mut R) -> Pose {
    if sigma2 <= 0.0 {
        return *motion;
    }
    let normal = Normal::new(0.0, sigma2.sqrt()).expect("finite sigma");
    let n = Vec6::from_fn(|_, _| normal.sample(rng));
    Pose::exp(&(motion.log() + n))
}

/// [`perturb_motion_with`] using a generator seeded from `seed`.
pub fn perturb_motion(motion: &Pose, sigma2: f64, seed: u64) -> Pose {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perturb_motion_with(motion, sigma2, &mut rng)
}

/// Noisy motion pairs: both sensors' incremental motions perturbed independently.
pub fn noisy_motion_pairs(
    reference: &Trajectory,
    extrinsic: &Pose,
    sigma2: f64,
    seed: u64,
) -> Vec<MotionPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    derive_target_motions(reference, extrinsic)
        .into_iter()
        .map(|p| {
            let a = perturb_motion_with(&p.motion_a, sigma2, &mut rng);
            let b = perturb_motion_with(&p.motion_b, sigma2, &mut rng);
            MotionPair::new(p.k, a, b)
        })
        .collect()
}

/// Ground-truth extrinsic of one target sensor relative to the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigConfig {
    pub reference: String,
    pub target: String,
    /// `T_b^a`: maps target-frame points into the reference frame.
    pub extrinsic: Pose,
}

impl RigConfig {
    pub fn new(extrinsic: Pose) -> Self {
        Self {
            reference: "a".into(),
            target: "b".into(),
            extrinsic,
        }
    }

    pub fn from_rpy_xyz(rpy: [f64; 3], xyz: [f64; 3]) -> Self {
        Self::new(Pose::new(
            Rotation::from_rpy(rpy[0], rpy[1], rpy[2]),
            Vec3::new(xyz[0], xyz[1], xyz[2]),
        ))
    }

    /// Two sensors on the simulated car: roughly flipped in pitch and turned 90 degrees.
    #[allow(clippy::approx_constant)]
    pub fn simulated_car() -> Self {
        Self::from_rpy_xyz([0.0, 3.14, 1.57], [-2.5, 1.5, 0.0])
    }

    /// Lower sensor, nearly aligned with the reference.
    pub fn vehicle_left() -> Self {
        Self::from_rpy_xyz([0.01, 0.08, 0.03], [0.42, 0.00, -1.26])
    }

    /// Lower sensor facing backwards.
    pub fn vehicle_rear() -> Self {
        Self::from_rpy_xyz([-0.02, 0.01, -3.11], [-2.11, 0.06, -1.18])
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "sim" | "simulated-car" => Some(Self::simulated_car()),
            "l1l2" => Some(Self::vehicle_left()),
            "l1l3" => Some(Self::vehicle_rear()),
            _ => None,
        }
    }
}
