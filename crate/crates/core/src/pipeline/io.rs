//! File formats: pose CSV, ASCII PLY clouds, frame manifests and versioned JSON.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Rotation, Vec3};
use crate::handeye::Extrinsics;
use crate::refinement::PointCloud;
use crate::simulation::{RigConfig, StampedPose, Trajectory};

use super::{PipelineError, SCHEMA_VERSION};

pub const POSE_HEADER: [&str; 8] = ["k", "tx", "ty", "tz", "qw", "qx", "qy", "qz"];
pub const MANIFEST_HEADER: [&str; 3] = ["k", "cloud_a", "cloud_b"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> PipelineError {
    PipelineError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> PipelineError {
    let line = e.position().map_or(0, |p| p.line());
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths {
            len, expected_len, ..
        } => {
            format!("expected {expected_len} fields, found {len}")
        }
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => e.to_string(),
    };
    parse_err(path, line, message)
}

fn read_csv<T: DeserializeOwned>(
    path: &Path,
    header: &[&str],
) -> Result<Vec<(u64, T)>, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let found = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(parse_err(
            path,
            1,
            format!(
                "expected header `{}`, found `{}`",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut rows = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(0, |p| p.line());
                let row = record
                    .deserialize(Some(&found))
                    .map_err(|e| csv_err(path, e))?;
                rows.push((line, row));
            }
            Err(e) => return Err(csv_err(path, e)),
        }
    }
    Ok(rows)
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseRow {
    k: u64,
    tx: f64,
    ty: f64,
    tz: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
}

/// Reads a world-frame pose CSV (`k,tx,ty,tz,qw,qx,qy,qz`).
pub fn load_poses(path: &Path, sensor: &str) -> Result<Trajectory, PipelineError> {
    let rows: Vec<(u64, PoseRow)> = read_csv(path, &POSE_HEADER)?;
    let mut samples = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        let rotation = Rotation::from_wxyz(r.qw, r.qx, r.qy, r.qz)
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        let translation = Vec3::new(r.tx, r.ty, r.tz);
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(parse_err(path, line, "non-finite translation"));
        }
        samples.push(StampedPose {
            k: r.k,
            pose: Pose::new(rotation, translation),
        });
    }
    Trajectory::new(sensor, samples).map_err(|e| parse_err(path, 0, e.to_string()))
}

pub fn save_poses(path: &Path, trajectory: &Trajectory) -> Result<(), PipelineError> {
    let mut out = POSE_HEADER.join(",");
    out.push('\n');
    for s in trajectory.samples() {
        let t = s.pose.translation;
        let [w, x, y, z] = s.pose.rotation.wxyz();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.k, t.x, t.y, t.z, w, x, y, z
        )
        .expect("string write");
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Loads two pose files that must share their timestamps.
pub fn load_pose_pair(
    path_a: &Path,
    path_b: &Path,
) -> Result<(Trajectory, Trajectory), PipelineError> {
    let a = load_poses(path_a, "a")?;
    let b = load_poses(path_b, "b")?;
    let (ka, kb) = (a.timestamps(), b.timestamps());
    if ka != kb {
        let row = ka
            .iter()
            .zip(&kb)
            .position(|(x, y)| x != y)
            .unwrap_or(ka.len().min(kb.len()));
        return Err(PipelineError::FrameMismatch {
            a: path_a.to_path_buf(),
            b: path_b.to_path_buf(),
            row,
        });
    }
    Ok((a, b))
}

/// Writes an ASCII PLY with `double x y z` and, when labeled, `uchar ground`.
pub fn save_cloud(path: &Path, cloud: &PointCloud) -> Result<(), PipelineError> {
    let mut out = String::from("ply\nformat ascii 1.0\n");
    if !cloud.frame.sensor.is_empty() {
        writeln!(
            out,
            "comment frame {} {}",
            cloud.frame.sensor, cloud.frame.k
        )
        .expect("string write");
    }
    writeln!(out, "element vertex {}", cloud.len()).expect("string write");
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    let mask = cloud.ground_mask();
    if mask.is_some() {
        out.push_str("property uchar ground\n");
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.points().iter().enumerate() {
        match mask {
            Some(m) => writeln!(out, "{} {} {} {}", p.x, p.y, p.z, u8::from(m[i])),
            None => writeln!(out, "{} {} {}", p.x, p.y, p.z),
        }
        .expect("string write");
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn load_cloud(path: &Path) -> Result<PointCloud, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i as u64 + 1, l.trim()));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| parse_err(path, 0, format!("unexpected end of file, expected {what}")))
    };

    let (n, magic) = next("`ply`")?;
    if magic != "ply" {
        return Err(parse_err(path, n, "missing `ply` magic"));
    }
    let mut count: Option<usize> = None;
    let mut properties: Vec<String> = Vec::new();
    let mut frame = None;
    loop {
        let (n, line) = next("`end_header`")?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => {}
            ["format", ..] => return Err(parse_err(path, n, "only ASCII PLY is supported")),
            ["comment", "frame", sensor, k] => {
                let k = k
                    .parse()
                    .map_err(|_| parse_err(path, n, "invalid frame index"))?;
                frame = Some((sensor.to_string(), k));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", "vertex", c] => {
                count = Some(
                    c.parse()
                        .map_err(|_| parse_err(path, n, "invalid vertex count"))?,
                );
            }
            ["element", ..] => {
                return Err(parse_err(path, n, "only a vertex element is supported"))
            }
            ["property", "list", ..] => {
                return Err(parse_err(path, n, "list properties are not supported"))
            }
            ["property", _, name] => {
                if count.is_none() {
                    return Err(parse_err(path, n, "property before element"));
                }
                properties.push(name.to_string());
            }
            _ => {
                return Err(parse_err(
                    path,
                    n,
                    format!("unrecognized header line `{line}`"),
                ))
            }
        }
    }
    let count = count.ok_or_else(|| parse_err(path, 0, "missing `element vertex`"))?;
    let column = |name: &str| properties.iter().position(|p| p == name);
    let (Some(ix), Some(iy), Some(iz)) = (column("x"), column("y"), column("z")) else {
        return Err(parse_err(
            path,
            0,
            "vertex element needs x, y and z properties",
        ));
    };
    let ig = column("ground");

    let mut points = Vec::with_capacity(count);
    let mut ground = ig.map(|_| Vec::with_capacity(count));
    for _ in 0..count {
        let (n, line) = next("vertex row")?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != properties.len() {
            return Err(parse_err(
                path,
                n,
                format!(
                    "expected {} fields, found {}",
                    properties.len(),
                    fields.len()
                ),
            ));
        }
        let num = |i: usize| -> Result<f64, PipelineError> {
            fields[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(path, n, format!("invalid number `{}`", fields[i])))
        };
        points.push(Vec3::new(num(ix)?, num(iy)?, num(iz)?));
        if let (Some(g), Some(mask)) = (ig, ground.as_mut()) {
            match fields[g] {
                "0" => mask.push(false),
                "1" => mask.push(true),
                other => {
                    return Err(parse_err(
                        path,
                        n,
                        format!("invalid ground label `{other}`"),
                    ))
                }
            }
        }
    }
    let cloud =
        PointCloud::with_ground(points, ground).map_err(|e| parse_err(path, 0, e.to_string()))?;
    Ok(match frame {
        Some((sensor, k)) => cloud.in_frame(sensor, k),
        None => cloud,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub k: u64,
    pub cloud_a: PathBuf,
    pub cloud_b: PathBuf,
}

/// Reads `k,cloud_a,cloud_b`; paths are relative to the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>, PipelineError> {
    let base = path.parent().unwrap_or(Path::new(""));
    Ok(read_csv::<ManifestEntry>(path, &MANIFEST_HEADER)?
        .into_iter()
        .map(|(_, mut e)| {
            e.cloud_a = base.join(&e.cloud_a);
            e.cloud_b = base.join(&e.cloud_b);
            e
        })
        .collect())
}

pub fn save_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<(), PipelineError> {
    let mut out = MANIFEST_HEADER.join(",");
    out.push('\n');
    for e in entries {
        writeln!(
            out,
            "{},{},{}",
            e.k,
            e.cloud_a.display(),
            e.cloud_b.display()
        )
        .expect("string write");
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Loads every cloud pair listed in a manifest.
pub fn load_frames(manifest: &Path) -> Result<Vec<(PointCloud, PointCloud)>, PipelineError> {
    load_manifest(manifest)?
        .into_iter()
        .map(|e| {
            let a = load_cloud(&e.cloud_a)?;
            let b = load_cloud(&e.cloud_b)?;
            let (sa, sb) = (a.frame.sensor.clone(), b.frame.sensor.clone());
            Ok((a.in_frame(sa, e.k), b.in_frame(sb, e.k)))
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line() as u64, e.to_string()))
}

fn check_version(path: &Path, found: u32) -> Result<(), PipelineError> {
    if found != SCHEMA_VERSION {
        return Err(PipelineError::Config(format!(
            "{}: unsupported schema_version {found} (expected {SCHEMA_VERSION})",
            path.display()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicsFile {
    pub schema_version: u32,
    #[serde(flatten)]
    pub extrinsics: Extrinsics,
}

pub fn save_extrinsics(path: &Path, extrinsics: &Extrinsics) -> Result<(), PipelineError> {
    write_json(
        path,
        &ExtrinsicsFile {
            schema_version: SCHEMA_VERSION,
            extrinsics: extrinsics.clone(),
        },
    )
}

pub fn load_extrinsics(path: &Path) -> Result<Extrinsics, PipelineError> {
    let file: ExtrinsicsFile = read_json(path)?;
    check_version(path, file.schema_version)?;
    Ok(file.extrinsics)
}

/// Ground-truth rig description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub schema_version: u32,
    #[serde(flatten)]
    pub rig: RigConfig,
}

pub fn save_truth(path: &Path, rig: &RigConfig) -> Result<(), PipelineError> {
    write_json(
        path,
        &TruthFile {
            schema_version: SCHEMA_VERSION,
            rig: rig.clone(),
        },
    )
}

pub fn load_truth(path: &Path) -> Result<RigConfig, PipelineError> {
    let file: TruthFile = read_json(path)?;
    check_version(path, file.schema_version)?;
    Ok(file.rig)
}
