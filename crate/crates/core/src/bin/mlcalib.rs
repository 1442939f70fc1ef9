use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};

use mlcalib::handeye::{
    filter_motion_pairs, initialize_extrinsic, HandEyeConfig, MotionPair, OutlierPolicy,
};
use mlcalib::pipeline::{
    compute_errors, eval_report, frames_csv, io, run_calibration, simulate_dataset, FrameRow,
    InitDiagnostics, PipelineError, ResidualRow, RunConfig, SimulateOptions,
};
use mlcalib::refinement::{refine_extrinsic, OmegaGate, RefineParams};
use mlcalib::simulation::{RigConfig, ScannerModel, TrajectoryKind};

#[derive(Parser)]
#[command(
    name = "mlcalib",
    version,
    about = "Extrinsic calibration of two co-mounted 3D range sensors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Both,
    Either,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a ground-truthed dataset: pose CSVs, PLY scans, truth and config.
    Simulate {
        #[arg(long, value_parser = parse_kind)]
        traj: TrajectoryKind,
        /// Number of motions (the trajectory has k + 1 poses).
        #[arg(long)]
        k: usize,
        /// Variance of the tangent-space motion noise.
        #[arg(long, default_value_t = 0.0)]
        sigma2: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Rig preset: sim, l1l2 or l1l3.
        #[arg(long, default_value = "sim")]
        rig: String,
        #[arg(long, default_value_t = 10.0)]
        scale: f64,
        /// Scan every n-th pose; 0 writes no clouds.
        #[arg(long, default_value_t = 10)]
        cloud_stride: usize,
        /// Range noise standard deviation, meters.
        #[arg(long, default_value_t = 0.01)]
        range_noise: f64,
    },
    /// Motion-based initialization from two pose files.
    Init {
        #[arg(long)]
        poses_a: PathBuf,
        #[arg(long)]
        poses_b: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        eps_r: f64,
        #[arg(long, default_value_t = 0.01)]
        eps_t: f64,
        #[arg(long, value_enum, default_value_t = Policy::Both)]
        policy: Policy,
        /// Extrinsics JSON; diagnostics go next to it as `<stem>.diagnostics.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine an initialization by registering overlapping clouds.
    Refine {
        #[arg(long)]
        init: PathBuf,
        /// Manifest CSV `k,cloud_a,cloud_b`.
        #[arg(long)]
        frames: PathBuf,
        /// Overlap radius, meters.
        #[arg(long, default_value_t = 10.0)]
        r: f64,
        /// Overlap-factor gate.
        #[arg(long, default_value_t = 0.8)]
        omega: f64,
        #[arg(long, default_value_t = 10)]
        candidates: usize,
        /// Seed of the ground-plane RANSAC.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Ground truth JSON, to add per-frame errors.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Refined extrinsics JSON; the per-frame table goes to `<stem>.frames.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run initialization and refinement as described by a config file.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare reports against ground truth.
    Eval {
        #[arg(long, required = true)]
        report: Vec<PathBuf>,
        #[arg(long)]
        truth: PathBuf,
        /// Print JSON instead of text tables.
        #[arg(long)]
        json: bool,
    },
}

fn parse_kind(s: &str) -> Result<TrajectoryKind, String> {
    s.parse::<TrajectoryKind>().map_err(|e| e.to_string())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}{suffix}"))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            traj,
            k,
            sigma2,
            seed,
            out,
            rig,
            scale,
            cloud_stride,
            range_noise,
        } => {
            let rig = RigConfig::preset(&rig)
                .ok_or_else(|| PipelineError::Config(format!("unknown rig preset `{rig}`")))?;
            let options = SimulateOptions {
                kind: traj,
                k,
                sigma2,
                seed,
                scale,
                rig,
                scanner: ScannerModel {
                    range_noise_std: range_noise,
                    ..ScannerModel::default()
                },
                cloud_stride,
            };
            let summary = simulate_dataset(&options, &out)?;
            eprintln!(
                "wrote {} poses per sensor and {} frames to {}",
                k + 1,
                summary.frames,
                out.display()
            );
        }
        Command::Init {
            poses_a,
            poses_b,
            eps_r,
            eps_t,
            policy,
            out,
        } => {
            let (a, b) = io::load_pose_pair(&poses_a, &poses_b)?;
            let pairs = MotionPair::from_poses(&a.timestamps(), &a.poses(), &b.poses());
            let config = HandEyeConfig {
                eps_r,
                eps_t,
                policy: match policy {
                    Policy::Both => OutlierPolicy::Both,
                    Policy::Either => OutlierPolicy::Either,
                },
                weighted: false,
            };
            let estimate = initialize_extrinsic(&pairs, &config).map_err(PipelineError::from)?;
            let (flagged, _) = filter_motion_pairs(&pairs, eps_r, eps_t, config.policy)
                .map_err(PipelineError::from)?;
            let residuals = flagged
                .iter()
                .map(|p| ResidualRow {
                    k: p.k,
                    rot: p.rot_residual,
                    trans: p.trans_residual,
                    inlier: p.inlier,
                })
                .collect();
            io::save_extrinsics(&out, &estimate)?;
            io::write_json(
                &sibling(&out, ".diagnostics.json"),
                &InitDiagnostics::new(estimate.diagnostics.clone(), residuals),
            )?;
            eprintln!(
                "{} of {} motion pairs used",
                estimate.diagnostics.filtered_count,
                pairs.len()
            );
        }
        Command::Refine {
            init,
            frames,
            r,
            omega,
            candidates,
            seed,
            truth,
            out,
        } => {
            let init = io::load_extrinsics(&init)?;
            let truth = truth.map(|t| io::load_truth(&t)).transpose()?;
            let frames = io::load_frames(&frames)?;
            let params = RefineParams {
                r,
                omega_gate: OmegaGate::Absolute(omega),
                candidates,
                seed,
                ..RefineParams::default()
            };
            let refined = refine_extrinsic(&frames, &init, &params).map_err(PipelineError::from)?;
            let rows: Vec<FrameRow> = refined
                .frames
                .into_iter()
                .map(|f| FrameRow {
                    errors: match (&truth, &f.registration) {
                        (Some(t), Some(reg)) => {
                            Some(compute_errors(&reg.transform, &t.extrinsic, true))
                        }
                        _ => None,
                    },
                    result: f,
                })
                .collect();
            io::save_extrinsics(&out, &refined.extrinsics)?;
            let csv_path = sibling(&out, ".frames.csv");
            fs::write(&csv_path, frames_csv(&rows)).map_err(|source| PipelineError::Io {
                path: csv_path,
                source,
            })?;
            eprintln!(
                "averaged {} candidates",
                refined.extrinsics.diagnostics.candidates.unwrap_or(0)
            );
        }
        Command::Calibrate { config } => {
            let cfg = RunConfig::load(&config)?;
            let base = config.parent().unwrap_or(Path::new("")).to_path_buf();
            let report = run_calibration(&cfg, &base)?;
            match &cfg.output {
                Some(path) => io::write_json(&base.join(path), &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            if let Some(e) = report.init_errors {
                eprintln!(
                    "init: e_r = {:.6} rad, e_t = {:.6} m (planar)",
                    e.e_r, e.e_t
                );
            }
            if let Some(e) = report.refinement.errors {
                eprintln!("refined: e_r = {:.6} rad, e_t = {:.6} m", e.e_r, e.e_t);
            }
        }
        Command::Eval {
            report,
            truth,
            json,
        } => {
            let truth = io::load_truth(&truth)?;
            let reports = report
                .iter()
                .map(|p| {
                    let label = p.file_stem().map_or_else(
                        || p.display().to_string(),
                        |s| s.to_string_lossy().into_owned(),
                    );
                    Ok((label, io::read_json(p)?))
                })
                .collect::<Result<Vec<_>, PipelineError>>()?;
            let output = eval_report(&reports, &truth.extrinsic);
            if json {
                println!("{}", serde_json::to_string_pretty(&output)?);
            } else {
                print!("{}", output.render());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = e
                .downcast_ref::<PipelineError>()
                .map_or(1, PipelineError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
