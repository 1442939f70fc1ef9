//! Motion-based initialization of the extrinsic `X = T_b^a` from pairs
//! satisfying `A_k X = X B_k` under planar vehicle motion.
//!
//! Rotation is split as `q = q_z(gamma) (x) q_yx`. Because planar motions
//! rotate only about z, `q_z` commutes with them and `q_yx` alone satisfies
//! `q_a (x) q_yx = q_yx (x) q_b`; the stacked system has a two-dimensional
//! null space from which the zero-yaw member is selected. Yaw and planar
//! translation then follow from the first two rows of the translation
//! equation `(R_a - I) t = R t_b - t_a`, linear in `(t_x, t_y, cos, sin)`.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::MotionPair;
use crate::geometry::{
    quat_decompose_yaw_pitchroll, quat_left_matrix, quat_right_matrix, GeometryError, Pose,
    Rotation, Vec3,
};

/// Pitch-roll system is degenerate when its third-smallest singular value
/// falls below this fraction of the largest.
pub const PITCHROLL_RANK_TOL: f64 = 1e-6;
/// Yaw/translation system is degenerate when its smallest singular value
/// falls below this fraction of the largest.
pub const YAW_RANK_TOL: f64 = 1e-8;
/// Axis covariance rank tolerance for the Kabsch baseline.
pub const KABSCH_RANK_TOL: f64 = 1e-6;
/// Fewest inliers the pitch-roll and yaw systems accept.
pub const MIN_INLIERS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HandEyeError {
    #[error("thresholds must be positive (eps_r = {eps_r}, eps_t = {eps_t})")]
    InvalidThreshold { eps_r: f64, eps_t: f64 },
    #[error("need at least {required} motion pairs, got {found}")]
    TooFewPairs { found: usize, required: usize },
    #[error("only {found} inlier motion pairs after filtering; need {required}")]
    TooFewInliers { found: usize, required: usize },
    #[error("degenerate motion in {stage}: singular value ratio {ratio:.3e}")]
    DegenerateMotion { stage: &'static str, ratio: f64 },
}

/// When a pair is rejected by the screw-residual filter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutlierPolicy {
    /// Reject only if both residuals exceed their thresholds.
    #[default]
    Both,
    /// Reject if either residual exceeds its threshold.
    Either,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandEyeConfig {
    pub eps_r: f64,
    pub eps_t: f64,
    #[serde(default)]
    pub policy: OutlierPolicy,
    /// Scale each pair's rows by `1 / (1 + rot_residual / eps_r)`.
    #[serde(default)]
    pub weighted: bool,
}

impl Default for HandEyeConfig {
    fn default() -> Self {
        Self {
            eps_r: 0.01,
            eps_t: 0.01,
            policy: OutlierPolicy::Both,
            weighted: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub total: usize,
    pub inliers: usize,
    /// Rejected pairs whose rotation and translation residuals both exceeded.
    pub over_both: usize,
    pub over_rotation_only: usize,
    pub over_translation_only: usize,
}

/// Marks each pair's `inlier` flag by its screw residuals.
///
/// Returns the flagged pairs (all of them, in order) and counts. Lowering
/// either threshold never increases the inlier count.
pub fn filter_motion_pairs(
    pairs: &[MotionPair],
    eps_r: f64,
    eps_t: f64,
    policy: OutlierPolicy,
) -> Result<(Vec<MotionPair>, FilterStats), HandEyeError> {
    if !(eps_r > 0.0 && eps_t > 0.0) {
        return Err(HandEyeError::InvalidThreshold { eps_r, eps_t });
    }
    let mut stats = FilterStats {
        total: pairs.len(),
        ..FilterStats::default()
    };
    let flagged: Vec<MotionPair> = pairs
        .iter()
        .map(|p| {
            let over_r = p.rot_residual > eps_r;
            let over_t = p.trans_residual > eps_t;
            match (over_r, over_t) {
                (true, true) => stats.over_both += 1,
                (true, false) => stats.over_rotation_only += 1,
                (false, true) => stats.over_translation_only += 1,
                (false, false) => {}
            }
            let outlier = match policy {
                OutlierPolicy::Both => over_r && over_t,
                OutlierPolicy::Either => over_r || over_t,
            };
            MotionPair {
                inlier: !outlier,
                ..p.clone()
            }
        })
        .collect();
    stats.inliers = flagged.iter().filter(|p| p.inlier).count();
    if stats.inliers < MIN_INLIERS {
        return Err(HandEyeError::TooFewInliers {
            found: stats.inliers,
            required: MIN_INLIERS,
        });
    }
    Ok((flagged, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchRollSolution {
    pub q_yx: Rotation,
    /// Singular values of the stacked quaternion system, descending.
    pub singular_values: [f64; 4],
    /// `|Q_N q_yx|` at the returned estimate.
    pub nullspace_residual: f64,
    /// `|x y + z w|` at the returned estimate.
    pub constraint_residual: f64,
}

fn row_weights(pairs: &[&MotionPair], eps_r: Option<f64>) -> Vec<f64> {
    pairs
        .iter()
        .map(|p| eps_r.map_or(1.0, |e| 1.0 / (1.0 + p.rot_residual / e)))
        .collect()
}

/// Singular values (descending) and matching right singular vectors.
fn sorted_svd(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let cols = m.ncols();
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let v = DMatrix::from_fn(cols, order.len(), |r, c| v_t[(order[c], r)]);
    (values, v)
}

fn stacked_quaternion_system(pairs: &[&MotionPair], weights: &[f64]) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(4 * pairs.len(), 4);
    for (i, (p, w)) in pairs.iter().zip(weights).enumerate() {
        let block =
            (quat_left_matrix(&p.motion_a.rotation) - quat_right_matrix(&p.motion_b.rotation)) * *w;
        q.view_mut((4 * i, 0), (4, 4)).copy_from(&block);
    }
    q
}

/// Symmetric bilinear form of `x y + z w` on `(w, x, y, z)` vectors.
fn constraint_form(u: &Vector4<f64>, v: &Vector4<f64>) -> f64 {
    0.5 * (u[1] * v[2] + u[2] * v[1] + u[3] * v[0] + u[0] * v[3])
}

/// Unit-norm blends `l1 v3 + l2 v4` on which `x y + z w` vanishes (or is
/// smallest, when the restricted form is definite).
fn constraint_roots(v3: &Vector4<f64>, v4: &Vector4<f64>) -> Vec<Vector4<f64>> {
    let m = Matrix2::new(
        constraint_form(v3, v3),
        constraint_form(v3, v4),
        constraint_form(v3, v4),
        constraint_form(v4, v4),
    );
    let eig = m.symmetric_eigen();
    let (i_lo, i_hi) = if eig.eigenvalues[0] <= eig.eigenvalues[1] {
        (0, 1)
    } else {
        (1, 0)
    };
    let (mu_lo, mu_hi) = (eig.eigenvalues[i_lo], eig.eigenvalues[i_hi]);
    let e_lo: Vector2<f64> = eig.eigenvectors.column(i_lo).into_owned();
    let e_hi: Vector2<f64> = eig.eigenvectors.column(i_hi).into_owned();
    let lambdas: Vec<Vector2<f64>> = if mu_lo <= 0.0 && mu_hi >= 0.0 && mu_hi - mu_lo > 0.0 {
        let c = (mu_hi / (mu_hi - mu_lo)).sqrt();
        let s = (-mu_lo / (mu_hi - mu_lo)).sqrt();
        vec![e_lo * c + e_hi * s, e_lo * c - e_hi * s]
    } else if mu_lo.abs() <= mu_hi.abs() {
        vec![e_lo]
    } else {
        vec![e_hi]
    };
    lambdas
        .into_iter()
        .map(|l| (v3 * l[0] + v4 * l[1]).normalize())
        .collect()
}

/// Pitch-roll part of the extrinsic rotation from the stacked system
/// `[L(q_a) - R(q_b)] q_yx = 0`.
pub fn solve_pitchroll(pairs: &[MotionPair]) -> Result<PitchRollSolution, HandEyeError> {
    solve_pitchroll_weighted(pairs, None)
}

/// As [`solve_pitchroll`], optionally down-weighting pairs by rotation residual.
pub fn solve_pitchroll_weighted(
    pairs: &[MotionPair],
    weight_eps_r: Option<f64>,
) -> Result<PitchRollSolution, HandEyeError> {
    let inliers: Vec<&MotionPair> = pairs.iter().filter(|p| p.inlier).collect();
    if inliers.len() < MIN_INLIERS {
        return Err(HandEyeError::TooFewInliers {
            found: inliers.len(),
            required: MIN_INLIERS,
        });
    }
    let weights = row_weights(&inliers, weight_eps_r);
    let q_n = stacked_quaternion_system(&inliers, &weights);
    let (sv, v) = sorted_svd(q_n.clone());
    let scale = (inliers.len() as f64).sqrt();
    let ratio = if sv[0] > PITCHROLL_RANK_TOL * scale {
        sv[1] / sv[0]
    } else {
        0.0
    };
    if ratio < PITCHROLL_RANK_TOL {
        return Err(HandEyeError::DegenerateMotion {
            stage: "pitch-roll",
            ratio,
        });
    }
    let v3: Vector4<f64> = v.column(2).fixed_rows::<4>(0).into_owned();
    let v4: Vector4<f64> = v.column(3).fixed_rows::<4>(0).into_owned();

    let residual = |q: &Vector4<f64>| (&q_n * DVector::from_column_slice(q.as_slice())).norm();
    // Root choice: canonical sign, then the zero-yaw branch, then the smaller
    // null-space residual.
    let best = constraint_roots(&v3, &v4)
        .into_iter()
        .map(|q| if q[0] < 0.0 { -q } else { q })
        .min_by(|a, b| {
            let branch = |q: &Vector4<f64>| 1.0 - 2.0 * (q[2] * q[2] + q[3] * q[3]) < 0.0;
            branch(a)
                .cmp(&branch(b))
                .then(residual(a).total_cmp(&residual(b)))
        })
        .expect("at least one root");

    let blended = Rotation::from_wxyz(best[0], best[1], best[2], best[3])
        .expect("unit vector from orthonormal basis");
    // Project onto the constraint manifold exactly.
    let q_yx = match quat_decompose_yaw_pitchroll(&blended) {
        Ok((_, q_yx)) => q_yx,
        Err(GeometryError::GimbalDegenerate { pitch_roll, .. }) => pitch_roll,
        Err(GeometryError::InvalidQuaternion) => unreachable!("input is unit"),
    };
    let [w, x, y, z] = q_yx.wxyz();
    Ok(PitchRollSolution {
        q_yx,
        singular_values: [sv[0], sv[1], sv[2], sv[3]],
        nullspace_residual: residual(&q_yx.as_vector()),
        constraint_residual: (x * y + z * w).abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YawTranslationSolution {
    pub gamma: f64,
    pub t_x: f64,
    pub t_y: f64,
    /// `|A x + b| / sqrt(2N)` at the least-squares solution.
    pub residual: f64,
    /// Singular values of the stacked `2N x 4` system, descending.
    pub singular_values: [f64; 4],
    /// Norm of `(cos, sin)` before renormalization.
    pub trig_norm: f64,
}

/// Yaw and planar translation from the first two rows of the translation
/// equation, with `t_z = 0`.
///
/// Per pair: `R1 [t_x, t_y]^T - Rot(gamma) t1 = -t2`, where `R1` is the upper
/// 2x2 block of `R_a - I`, `t1` the first two entries of `R(q_yx) t_b` and
/// `t2` the first two of `t_a`. Written as `[R1 J] x = -t2` with
/// `x = (t_x, t_y, -cos, -sin)` and `J = [[t11, -t12], [t12, t11]]`.
pub fn solve_yaw_translation(
    pairs: &[MotionPair],
    q_yx: &Rotation,
) -> Result<YawTranslationSolution, HandEyeError> {
    solve_yaw_translation_weighted(pairs, q_yx, None)
}

pub fn solve_yaw_translation_weighted(
    pairs: &[MotionPair],
    q_yx: &Rotation,
    weight_eps_r: Option<f64>,
) -> Result<YawTranslationSolution, HandEyeError> {
    let inliers: Vec<&MotionPair> = pairs.iter().filter(|p| p.inlier).collect();
    if inliers.len() < 2 {
        return Err(HandEyeError::TooFewInliers {
            found: inliers.len(),
            required: 2,
        });
    }
    let weights = row_weights(&inliers, weight_eps_r);
    let n = inliers.len();
    let mut a = DMatrix::zeros(2 * n, 4);
    let mut b = DVector::zeros(2 * n);
    for (i, (p, w)) in inliers.iter().zip(&weights).enumerate() {
        let r1 = p.motion_a.rotation.matrix() - Matrix3::identity();
        let t1 = q_yx.rotate(&p.motion_b.translation);
        let rows = 2 * i;
        a[(rows, 0)] = w * r1[(0, 0)];
        a[(rows, 1)] = w * r1[(0, 1)];
        a[(rows + 1, 0)] = w * r1[(1, 0)];
        a[(rows + 1, 1)] = w * r1[(1, 1)];
        a[(rows, 2)] = w * t1.x;
        a[(rows, 3)] = -w * t1.y;
        a[(rows + 1, 2)] = w * t1.y;
        a[(rows + 1, 3)] = w * t1.x;
        b[rows] = w * p.motion_a.translation.x;
        b[rows + 1] = w * p.motion_a.translation.y;
    }
    let svd = a.clone().svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    let ratio = if sv[0] > 0.0 { sv[3] / sv[0] } else { 0.0 };
    if ratio < YAW_RANK_TOL {
        return Err(HandEyeError::DegenerateMotion {
            stage: "yaw-translation",
            ratio,
        });
    }
    let x = svd.solve(&(-&b), 0.0).expect("U and V computed");
    let residual = (&a * &x + &b).norm() / ((2 * n) as f64).sqrt();
    let (c, s) = (-x[2], -x[3]);
    let trig_norm = c.hypot(s);
    Ok(YawTranslationSolution {
        gamma: (s / trig_norm).atan2(c / trig_norm),
        t_x: x[0],
        t_y: x[1],
        residual,
        singular_values: [sv[0], sv[1], sv[2], sv[3]],
        trig_norm,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtrinsicsSource {
    #[default]
    Init,
    Kabsch,
    Refined,
}

/// Solver diagnostics carried with an estimate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub total_pairs: usize,
    /// Pairs used by the solver (`N`).
    pub filtered_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterStats>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rotation_singular_values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub translation_singular_values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation_condition: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation_condition: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_residual: Option<f64>,
    /// Refinement: number of averaged candidates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<usize>,
}

/// An estimate of `T_b^a` with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrinsics {
    pub transform: Pose,
    pub tz_observable: bool,
    pub source: ExtrinsicsSource,
    #[serde(default)]
    pub diagnostics: SolverDiagnostics,
}

impl Extrinsics {
    pub fn new(transform: Pose, source: ExtrinsicsSource) -> Self {
        Self {
            transform,
            tz_observable: source == ExtrinsicsSource::Refined,
            source,
            diagnostics: SolverDiagnostics::default(),
        }
    }
}

fn condition(sv: &[f64]) -> f64 {
    let last = sv[sv.len() - 1];
    if last > 0.0 {
        sv[0] / last
    } else {
        f64::INFINITY
    }
}

/// Filter, pitch-roll solve, then yaw / planar translation; `t_z` is set to 0.
pub fn initialize_extrinsic(
    pairs: &[MotionPair],
    config: &HandEyeConfig,
) -> Result<Extrinsics, HandEyeError> {
    if pairs.len() < MIN_INLIERS {
        return Err(HandEyeError::TooFewPairs {
            found: pairs.len(),
            required: MIN_INLIERS,
        });
    }
    let (flagged, stats) = filter_motion_pairs(pairs, config.eps_r, config.eps_t, config.policy)?;
    let weight = config.weighted.then_some(config.eps_r);
    let pr = solve_pitchroll_weighted(&flagged, weight)?;
    let yt = solve_yaw_translation_weighted(&flagged, &pr.q_yx, weight)?;
    let rotation = Rotation::from_yaw(yt.gamma).compose(&pr.q_yx);
    Ok(Extrinsics {
        transform: Pose::new(rotation, Vec3::new(yt.t_x, yt.t_y, 0.0)),
        tz_observable: false,
        source: ExtrinsicsSource::Init,
        diagnostics: SolverDiagnostics {
            total_pairs: pairs.len(),
            filtered_count: stats.inliers,
            filter: Some(stats),
            rotation_singular_values: pr.singular_values.to_vec(),
            translation_singular_values: yt.singular_values.to_vec(),
            // The pitch-roll system has a 2-D null space by construction.
            rotation_condition: Some(pr.singular_values[0] / pr.singular_values[1]),
            translation_condition: Some(condition(&yt.singular_values)),
            translation_residual: Some(yt.residual),
            constraint_residual: Some(pr.constraint_residual),
            candidates: None,
        },
    })
}

/// Baseline: rotation by orthogonal Procrustes on the rotation vectors
/// (`phi_a = R phi_b`), translation by least squares on the full
/// `(R_a - I) t = R t_b - t_a`.
pub fn kabsch_baseline(pairs: &[MotionPair]) -> Result<Extrinsics, HandEyeError> {
    if pairs.len() < 3 {
        return Err(HandEyeError::TooFewPairs {
            found: pairs.len(),
            required: 3,
        });
    }
    let mut h = Matrix3::zeros();
    for p in pairs {
        let a = p.motion_a.rotation.log_vec();
        let b = p.motion_b.rotation.log_vec();
        h += b * a.transpose();
    }
    let svd = h.svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    let ratio = if sv[0] > 0.0 { sv[1] / sv[0] } else { 0.0 };
    if ratio < KABSCH_RANK_TOL {
        return Err(HandEyeError::DegenerateMotion {
            stage: "kabsch rotation",
            ratio,
        });
    }
    let u = svd.u.expect("U");
    let v = svd.v_t.expect("V").transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose();
    let rotation = Rotation::from_matrix(&r);

    let n = pairs.len();
    let mut a = DMatrix::zeros(3 * n, 3);
    let mut b = DVector::zeros(3 * n);
    for (i, p) in pairs.iter().enumerate() {
        let block = p.motion_a.rotation.matrix() - Matrix3::identity();
        a.view_mut((3 * i, 0), (3, 3)).copy_from(&block);
        let rhs = rotation.rotate(&p.motion_b.translation) - p.motion_a.translation;
        b.rows_mut(3 * i, 3).copy_from(&rhs);
    }
    let tsvd = a.svd(true, true);
    let mut tsv: Vec<f64> = tsvd.singular_values.iter().copied().collect();
    tsv.sort_by(|x, y| y.total_cmp(x));
    let tol = tsv[0] * KABSCH_RANK_TOL;
    let t = tsvd.solve(&b, tol).expect("U and V computed");
    Ok(Extrinsics {
        transform: Pose::new(rotation, Vec3::new(t[0], t[1], t[2])),
        tz_observable: tsv[2] > tol,
        source: ExtrinsicsSource::Kabsch,
        diagnostics: SolverDiagnostics {
            total_pairs: n,
            filtered_count: n,
            rotation_singular_values: sv.clone(),
            translation_singular_values: tsv.clone(),
            rotation_condition: Some(condition(&sv)),
            translation_condition: Some(condition(&tsv)),
            ..SolverDiagnostics::default()
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointCost {
    /// `sum_k |R_a R - R R_b|_F^2`
    pub rotation: f64,
    /// `sum_k |(R_a - I) t - R t_b + t_a|^2`
    pub translation: f64,
}

impl JointCost {
    pub fn total(&self) -> f64 {
        self.rotation + self.translation
    }
}

/// Both hand-eye residual sums at a candidate; zero iff `A_k X = X B_k` for all pairs.
pub fn evaluate_joint_cost(pairs: &[MotionPair], candidate: &Pose) -> JointCost {
    let r = candidate.rotation.matrix();
    let t = candidate.translation;
    let mut cost = JointCost {
        rotation: 0.0,
        translation: 0.0,
    };
    for p in pairs {
        let ra = p.motion_a.rotation.matrix();
        let rb = p.motion_b.rotation.matrix();
        cost.rotation += (ra * r - r * rb).norm_squared();
        let e =
            (ra - Matrix3::identity()) * t - r * p.motion_b.translation + p.motion_a.translation;
        cost.translation += e.norm_squared();
    }
    cost
}
