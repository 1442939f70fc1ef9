use std::fs;
use std::path::Path;
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::geometry::Pose;
use crate::handeye::{filter_motion_pairs, initialize_extrinsic, kabsch_baseline, MotionPair};
use crate::refinement::{refine_extrinsic, PointCloud};
use crate::simulation::Trajectory;

use super::report::{
    BaselineOutcome, FrameRow, PhaseStatus, RefinementOutcome, ResidualRow, Timings,
};
use super::{
    compute_errors, io, CalibrationReport, InputDigest, PipelineError, RunConfig, SCHEMA_VERSION,
};

/// Already-loaded calibration inputs.
#[derive(Debug, Clone)]
pub struct CalibrationInputs {
    pub poses_a: Trajectory,
    pub poses_b: Trajectory,
    pub frames: Option<Vec<(PointCloud, PointCloud)>>,
    pub truth: Option<Pose>,
    pub digest: InputDigest,
}

fn sha256(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Loads the files named by `config` (relative to `base_dir`) and calibrates.
pub fn run_calibration(
    config: &RunConfig,
    base_dir: &Path,
) -> Result<CalibrationReport, PipelineError> {
    config.validate()?;
    let start = Instant::now();
    let resolve = |p: &Path| base_dir.join(p);
    let (path_a, path_b) = (resolve(&config.poses_a), resolve(&config.poses_b));
    let (poses_a, poses_b) = io::load_pose_pair(&path_a, &path_b)?;
    let mut digest = InputDigest {
        poses_a: sha256(&path_a)?,
        poses_b: sha256(&path_b)?,
        frames: None,
        poses: poses_a.samples().len(),
        frame_count: 0,
    };
    let frames = match &config.frames {
        Some(m) => {
            let manifest = resolve(m);
            digest.frames = Some(sha256(&manifest)?);
            let frames = io::load_frames(&manifest)?;
            digest.frame_count = frames.len();
            Some(frames)
        }
        None => None,
    };
    let truth = match &config.truth {
        Some(t) => Some(io::load_truth(&resolve(t))?.extrinsic),
        None => None,
    };
    let load_time = start.elapsed().as_secs_f64();
    let mut report = calibrate(
        config,
        CalibrationInputs {
            poses_a,
            poses_b,
            frames,
            truth,
            digest,
        },
    )?;
    if let Some(t) = report.timings.as_mut() {
        t.load = load_time;
    }
    Ok(report)
}

/// Initialization, optional baseline, then refinement when frames are given.
pub fn calibrate(
    config: &RunConfig,
    inputs: CalibrationInputs,
) -> Result<CalibrationReport, PipelineError> {
    config.validate()?;
    let mut timings = Timings::default();
    let pairs = MotionPair::from_poses(
        &inputs.poses_a.timestamps(),
        &inputs.poses_a.poses(),
        &inputs.poses_b.poses(),
    );
    let handeye = config.handeye();

    let clock = Instant::now();
    let init = initialize_extrinsic(&pairs, &handeye)?;
    timings.init = clock.elapsed().as_secs_f64();
    let (flagged, _) = filter_motion_pairs(&pairs, handeye.eps_r, handeye.eps_t, handeye.policy)?;
    let residuals = flagged
        .iter()
        .map(|p| ResidualRow {
            k: p.k,
            rot: p.rot_residual,
            trans: p.trans_residual,
            inlier: p.inlier,
        })
        .collect();
    let errors = |estimate: &Pose, count_tz: bool| {
        inputs
            .truth
            .as_ref()
            .map(|t| compute_errors(estimate, t, count_tz))
    };

    let kabsch = config.kabsch_baseline.then(|| {
        let clock = Instant::now();
        let outcome = match kabsch_baseline(&pairs) {
            Ok(k) => BaselineOutcome {
                errors: errors(&k.transform, false),
                extrinsics: Some(k),
                failure: None,
            },
            Err(e) => BaselineOutcome {
                extrinsics: None,
                failure: Some(e.to_string()),
                errors: None,
            },
        };
        timings.kabsch = clock.elapsed().as_secs_f64();
        outcome
    });

    let refinement = match &inputs.frames {
        None => RefinementOutcome::default(),
        Some(frames) => {
            let clock = Instant::now();
            let refined = refine_extrinsic(frames, &init, &config.refine())?;
            timings.refine = clock.elapsed().as_secs_f64();
            RefinementOutcome {
                status: PhaseStatus::Completed,
                completed_init: Some(refined.completed_init),
                errors: errors(&refined.extrinsics.transform, true),
                extrinsics: Some(refined.extrinsics),
                frames: refined
                    .frames
                    .into_iter()
                    .map(|f| FrameRow {
                        errors: f
                            .registration
                            .as_ref()
                            .and_then(|r| errors(&r.transform, true)),
                        result: f,
                    })
                    .collect(),
            }
        }
    };

    Ok(CalibrationReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        inputs: inputs.digest,
        truth: inputs.truth,
        residuals,
        init_errors: errors(&init.transform, false),
        init,
        kabsch,
        refinement,
        timings: config.record_timings.then_some(timings),
    })
}
