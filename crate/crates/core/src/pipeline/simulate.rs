use std::fs;
use std::path::{Path, PathBuf};

use crate::simulation::{
    generate_trajectory, noisy_motion_pairs, simulate_frames, track_bounds, RigConfig,
    ScannerModel, SceneModel, Trajectory, TrajectoryKind,
};

use super::io::{self, ManifestEntry};
use super::{PipelineError, RunConfig};

/// Parameters of a simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOptions {
    pub kind: TrajectoryKind,
    /// Number of motions; the trajectories have `k + 1` poses.
    pub k: usize,
    pub sigma2: f64,
    pub seed: u64,
    /// Step length scale of the trajectory, meters.
    pub scale: f64,
    pub rig: RigConfig,
    pub scanner: ScannerModel,
    /// Scan every `cloud_stride`-th pose; 0 writes no clouds.
    pub cloud_stride: usize,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            kind: TrajectoryKind::Loop,
            k: 200,
            sigma2: 0.0,
            seed: 0,
            scale: 10.0,
            rig: RigConfig::simulated_car(),
            scanner: ScannerModel {
                range_noise_std: 0.01,
                ..ScannerModel::default()
            },
            cloud_stride: 10,
        }
    }
}

/// Files written by [`simulate_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub poses_a: PathBuf,
    pub poses_b: PathBuf,
    pub truth: PathBuf,
    pub config: PathBuf,
    pub manifest: Option<PathBuf>,
    pub frames: usize,
}

/// Writes noisy pose files for both sensors, scans of an urban block at
/// every `cloud_stride`-th true pose, the rig ground truth, and a
/// `config.json` ready for `calibrate`.
pub fn simulate_dataset(
    options: &SimulateOptions,
    out_dir: &Path,
) -> Result<SimulationSummary, PipelineError> {
    if !(options.sigma2 >= 0.0) {
        return Err(PipelineError::Config("sigma2 must be non-negative".into()));
    }
    if options.k < 2 {
        return Err(PipelineError::Config("k must be at least 2".into()));
    }
    let mkdir = |p: &Path| {
        fs::create_dir_all(p).map_err(|source| PipelineError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    mkdir(out_dir)?;
    let reference = generate_trajectory(options.kind, options.k, options.scale, options.seed)?;
    let x = options.rig.extrinsic;
    let pairs = noisy_motion_pairs(&reference, &x, options.sigma2, options.seed);
    let start = reference.samples()[0].pose;
    let motions_a: Vec<_> = pairs.iter().map(|p| p.motion_a).collect();
    let motions_b: Vec<_> = pairs.iter().map(|p| p.motion_b).collect();
    let traj_a = Trajectory::from_motions(options.rig.reference.clone(), start, &motions_a)?;
    let traj_b =
        Trajectory::from_motions(options.rig.target.clone(), start.compose(&x), &motions_b)?;

    let summary_path = |name: &str| out_dir.join(name);
    io::save_poses(&summary_path("poses_a.csv"), &traj_a)?;
    io::save_poses(&summary_path("poses_b.csv"), &traj_b)?;
    io::save_truth(&summary_path("truth.json"), &options.rig)?;

    let mut manifest = None;
    let mut frame_count = 0;
    if options.cloud_stride > 0 {
        let (min, max) = track_bounds(&reference);
        let scene = SceneModel::urban_block(min, max, options.seed);
        let indices: Vec<usize> = (0..reference.samples().len())
            .step_by(options.cloud_stride)
            .collect();
        let frames = simulate_frames(
            &scene,
            &reference,
            &options.rig,
            &options.scanner,
            &indices,
            options.seed,
        )?;
        mkdir(&out_dir.join("clouds"))?;
        let mut entries = Vec::with_capacity(frames.len());
        for (a, b) in &frames {
            let k = a.frame.k;
            let entry = ManifestEntry {
                k,
                cloud_a: PathBuf::from(format!("clouds/{k:06}_a.ply")),
                cloud_b: PathBuf::from(format!("clouds/{k:06}_b.ply")),
            };
            io::save_cloud(&out_dir.join(&entry.cloud_a), a)?;
            io::save_cloud(&out_dir.join(&entry.cloud_b), b)?;
            entries.push(entry);
        }
        frame_count = entries.len();
        let path = summary_path("frames.csv");
        io::save_manifest(&path, &entries)?;
        manifest = Some(path);
    }

    let config = RunConfig {
        poses_a: "poses_a.csv".into(),
        poses_b: "poses_b.csv".into(),
        frames: manifest.as_ref().map(|_| "frames.csv".into()),
        truth: Some("truth.json".into()),
        output: Some("report.json".into()),
        sigma2: options.sigma2,
        seed: options.seed,
        ..RunConfig::default()
    };
    io::write_json(&summary_path("config.json"), &config)?;
    Ok(SimulationSummary {
        poses_a: summary_path("poses_a.csv"),
        poses_b: summary_path("poses_b.csv"),
        truth: summary_path("truth.json"),
        config: summary_path("config.json"),
        manifest,
        frames: frame_count,
    })
}
