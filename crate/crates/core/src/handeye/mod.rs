//! Motion-based (hand-eye) initialization.

mod motion;
mod solver;

pub use motion::{screw_residuals, MotionPair};
pub use solver::{
    evaluate_joint_cost, filter_motion_pairs, initialize_extrinsic, kabsch_baseline,
    solve_pitchroll, solve_pitchroll_weighted, solve_yaw_translation,
    solve_yaw_translation_weighted, Extrinsics, ExtrinsicsSource, FilterStats, HandEyeConfig,
    HandEyeError, JointCost, OutlierPolicy, PitchRollSolution, SolverDiagnostics,
    YawTranslationSolution, KABSCH_RANK_TOL, MIN_INLIERS, PITCHROLL_RANK_TOL, YAW_RANK_TOL,
};
