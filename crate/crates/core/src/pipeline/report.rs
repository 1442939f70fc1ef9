use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geometry::{rotation_angle_distance, Pose};
use crate::handeye::{Extrinsics, SolverDiagnostics};
use crate::refinement::FrameResult;

use super::RunConfig;

/// Rotation and translation error of an estimate against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseErrors {
    /// `|log(R_gt R_est^-1)|`, radians.
    pub e_r: f64,
    /// Translation error norm, meters; planar `(x, y)` only unless `count_tz`.
    pub e_t: f64,
    pub count_tz: bool,
}

/// `e_r` is the angle of `R_gt R_est^-1`; `e_t` is the full translation error
/// norm, or its `(x, y)` part when `count_tz` is false.
pub fn compute_errors(estimate: &Pose, truth: &Pose, count_tz: bool) -> PoseErrors {
    let d = truth.translation - estimate.translation;
    let e_t = if count_tz { d.norm() } else { d.x.hypot(d.y) };
    PoseErrors {
        e_r: rotation_angle_distance(&truth.rotation, &estimate.rotation),
        e_t,
        count_tz,
    }
}

/// SHA-256 of each input file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub poses_a: String,
    pub poses_b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<String>,
    pub poses: usize,
    pub frame_count: usize,
}

/// Screw residuals of one motion pair and its filter verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub k: u64,
    pub rot: f64,
    pub trans: f64,
    pub inlier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extrinsics: Option<Extrinsics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<PoseErrors>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseStatus {
    Completed,
    #[default]
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRow {
    #[serde(flatten)]
    pub result: FrameResult,
    /// Errors of this frame's registration against ground truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<PoseErrors>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefinementOutcome {
    pub status: PhaseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completed_init: Option<Pose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extrinsics: Option<Extrinsics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<PoseErrors>,
    #[serde(default)]
    pub frames: Vec<FrameRow>,
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load: f64,
    pub init: f64,
    pub kabsch: f64,
    pub refine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub schema_version: u32,
    pub config: RunConfig,
    pub inputs: InputDigest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Pose>,
    pub residuals: Vec<ResidualRow>,
    pub init: Extrinsics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_errors: Option<PoseErrors>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kabsch: Option<BaselineOutcome>,
    pub refinement: RefinementOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

impl CalibrationReport {
    /// Best available estimate: refined if present, else the initialization.
    pub fn final_estimate(&self) -> &Extrinsics {
        self.refinement.extrinsics.as_ref().unwrap_or(&self.init)
    }
}

/// Equal-width histogram over `[0, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let max = values.iter().copied().fold(0.0, f64::max);
    let width = if max > 0.0 { max / bins as f64 } else { 1.0 };
    let edges = (0..=bins).map(|i| i as f64 * width).collect();
    let mut counts = vec![0; bins];
    for v in values {
        counts[((v / width) as usize).min(bins - 1)] += 1;
    }
    Histogram { edges, counts }
}

/// Output of `init` besides the estimate: solver diagnostics and screw
/// residuals, raw and binned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitDiagnostics {
    pub schema_version: u32,
    pub diagnostics: SolverDiagnostics,
    pub residuals: Vec<ResidualRow>,
    pub rot_histogram: Histogram,
    pub trans_histogram: Histogram,
}

impl InitDiagnostics {
    pub fn new(diagnostics: SolverDiagnostics, residuals: Vec<ResidualRow>) -> Self {
        let rot: Vec<f64> = residuals.iter().map(|r| r.rot).collect();
        let trans: Vec<f64> = residuals.iter().map(|r| r.trans).collect();
        Self {
            schema_version: super::SCHEMA_VERSION,
            diagnostics,
            rot_histogram: histogram(&rot, 20),
            trans_histogram: histogram(&trans, 20),
            residuals,
        }
    }
}

/// Per-frame CSV: `k,omega,gated,converged,reg_error,iterations,candidate,e_r,e_t`;
/// missing values are empty.
pub fn frames_csv(frames: &[FrameRow]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut out = String::from("k,omega,gated,converged,reg_error,iterations,candidate,e_r,e_t\n");
    for f in frames {
        let reg = f.result.registration.as_ref();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            f.result.k,
            f.result.omega,
            u8::from(f.result.gated),
            u8::from(reg.is_some_and(|r| r.converged)),
            opt(reg.map(|r| r.error)),
            reg.map_or(String::new(), |r| r.iterations.to_string()),
            u8::from(f.result.candidate),
            opt(f.errors.map(|e| e.e_r)),
            opt(f.errors.map(|e| e.e_t)),
        )
        .expect("string write");
    }
    out
}

/// A table whose cells may be missing (rendered as `n/a`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<EvalRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub label: String,
    pub cells: Vec<Option<f64>>,
}

impl EvalTable {
    pub fn render(&self) -> String {
        let fmt = |c: &Option<f64>| match c {
            Some(v) if v.fract() == 0.0 && v.abs() < 1e9 => format!("{v:.0}"),
            Some(v) => format!("{v:.6}"),
            None => "n/a".to_string(),
        };
        let mut grid: Vec<Vec<String>> = vec![std::iter::once(String::new())
            .chain(self.columns.iter().cloned())
            .collect()];
        for row in &self.rows {
            grid.push(
                std::iter::once(row.label.clone())
                    .chain(row.cells.iter().map(fmt))
                    .collect(),
            );
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|j| grid.iter().map(|r| r[j].len()).max().unwrap_or(0))
            .collect();
        let mut out = format!("{}\n", self.title);
        for (i, row) in grid.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    if j == 0 {
                        format!("{s:<w$}", w = widths[j])
                    } else {
                        format!("{s:>w$}", w = widths[j])
                    }
                })
                .collect();
            writeln!(out, "{}", line.join("  ").trim_end()).expect("string write");
            if i == 0 {
                let rule: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                writeln!(out, "{}", "-".repeat(rule)).expect("string write");
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub summary: EvalTable,
    pub frames: Vec<EvalTable>,
}

impl EvalOutput {
    pub fn render(&self) -> String {
        let mut out = self.summary.render();
        for t in &self.frames {
            out.push('\n');
            out.push_str(&t.render());
        }
        out
    }
}

/// Summarizes labeled reports against ground truth: one summary row per
/// report with init, refined and baseline errors side by side, and one
/// per-frame table per report.
pub fn eval_report(reports: &[(String, CalibrationReport)], truth: &Pose) -> EvalOutput {
    let errs = |e: Option<&Extrinsics>, count_tz: bool| {
        e.map(|x| compute_errors(&x.transform, truth, count_tz))
    };
    let pair = |e: Option<PoseErrors>| [e.map(|x| x.e_r), e.map(|x| x.e_t)];
    let rows = reports
        .iter()
        .map(|(label, r)| {
            let init = pair(errs(Some(&r.init), false));
            let refined = pair(errs(r.refinement.extrinsics.as_ref(), true));
            let kabsch = pair(errs(
                r.kabsch.as_ref().and_then(|k| k.extrinsics.as_ref()),
                false,
            ));
            let candidates = r
                .refinement
                .extrinsics
                .as_ref()
                .and_then(|e| e.diagnostics.candidates)
                .filter(|&c| c > 0)
                .map(|c| c as f64);
            let mut cells: Vec<Option<f64>> = Vec::new();
            cells.extend(init);
            cells.extend(kabsch);
            cells.extend(refined);
            cells.push(candidates);
            EvalRow {
                label: label.clone(),
                cells,
            }
        })
        .collect();
    let summary = EvalTable {
        title: "Calibration errors (init and Kabsch e_t exclude z)".into(),
        columns: [
            "init e_r [rad]",
            "init e_t [m]",
            "kabsch e_r [rad]",
            "kabsch e_t [m]",
            "refined e_r [rad]",
            "refined e_t [m]",
            "candidates",
        ]
        .map(String::from)
        .to_vec(),
        rows,
    };
    let frames = reports
        .iter()
        .map(|(label, r)| {
            let mut rows: Vec<EvalRow> = r
                .refinement
                .frames
                .iter()
                .map(|f| {
                    let reg = f.result.registration.as_ref();
                    let e = reg.map(|x| compute_errors(&x.transform, truth, true));
                    EvalRow {
                        label: f.result.k.to_string(),
                        cells: vec![
                            Some(f.result.omega),
                            reg.map(|x| x.error),
                            reg.map(|x| x.iterations as f64),
                            e.map(|x| x.e_r),
                            e.map(|x| x.e_t),
                            Some(if f.result.candidate { 1.0 } else { 0.0 }),
                        ],
                    }
                })
                .collect();
            if rows.is_empty() {
                rows.push(EvalRow {
                    label: "-".into(),
                    cells: vec![None; 6],
                });
            }
            EvalTable {
                title: format!("Per-frame registration ({label})"),
                columns: [
                    "omega",
                    "reg error [m]",
                    "iterations",
                    "e_r [rad]",
                    "e_t [m]",
                    "candidate",
                ]
                .map(String::from)
                .to_vec(),
                rows,
            }
        })
        .collect();
    EvalOutput { summary, frames }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Rotation, Vec3, Vec6};

    #[test]
    fn zero_at_truth() {
        let p = Pose::new(Rotation::from_rpy(0.1, 0.2, 0.3), Vec3::new(1.0, 2.0, 3.0));
        let e = compute_errors(&p, &p, true);
        assert!(e.e_r < 1e-15 && e.e_t == 0.0);
    }

    #[test]
    fn planar_translation_ignores_z() {
        let truth = Pose::from_translation(Vec3::new(0.42, 0.0, -1.26));
        let est = Pose::from_translation(Vec3::new(0.45, 0.04, 0.0));
        assert!((compute_errors(&est, &truth, false).e_t - 0.05).abs() < 1e-12);
        let full = compute_errors(&est, &truth, true).e_t;
        assert!((full - (0.05f64.powi(2) + 1.26f64.powi(2)).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn tangent_perturbation_gives_its_angle() {
        let p = Pose::new(
            Rotation::from_rpy(0.3, -0.4, 2.0),
            Vec3::new(1.0, -1.0, 0.5),
        );
        let delta = Vec6::new(0.0, 0.0, 0.0, 1e-3, -2e-3, 5e-4);
        let q = p.compose(&Pose::exp(&delta));
        let e = compute_errors(&q, &p, true);
        assert!((e.e_r - delta.fixed_rows::<3>(3).norm()).abs() < 1e-9);
    }

    #[test]
    fn histogram_counts_everything() {
        let h = histogram(&[0.0, 0.1, 0.2, 0.4, 1.0], 4);
        assert_eq!(h.counts, vec![3, 1, 0, 1]);
        assert_eq!(h.edges.len(), 5);
        assert_eq!(histogram(&[], 3).counts, vec![0, 0, 0]);
    }

    #[test]
    fn table_renders_missing_cells() {
        let t = EvalTable {
            title: "t".into(),
            columns: vec!["a".into(), "b".into()],
            rows: vec![EvalRow {
                label: "x".into(),
                cells: vec![Some(0.5), None],
            }],
        };
        let text = t.render();
        assert!(text.contains("n/a"));
        assert!(text.contains("0.500000"));
    }
}
