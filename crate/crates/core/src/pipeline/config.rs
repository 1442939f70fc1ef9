use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::handeye::{HandEyeConfig, OutlierPolicy};
use crate::refinement::{GroundParams, IcpParams, OmegaGate, RefineParams};

use super::{io, PipelineError, SCHEMA_VERSION};

/// Everything `calibrate` needs. Relative paths resolve against the
/// directory of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub poses_a: PathBuf,
    pub poses_b: PathBuf,
    /// Frame manifest; without it only initialization runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    /// Where `calibrate` writes the report.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub eps_r: f64,
    pub eps_t: f64,
    pub outlier_policy: OutlierPolicy,
    pub weighted_rows: bool,
    pub r: f64,
    pub omega_gate: OmegaGate,
    pub candidates: usize,
    pub icp: IcpParams,
    pub ground: GroundParams,
    /// Motion-noise variance the inputs were generated with (informational).
    pub sigma2: f64,
    pub seed: u64,
    pub kabsch_baseline: bool,
    /// Wall-clock timings make reports differ run to run, so they are opt-in.
    pub record_timings: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let refine = RefineParams::default();
        let handeye = HandEyeConfig::default();
        Self {
            schema_version: SCHEMA_VERSION,
            poses_a: PathBuf::new(),
            poses_b: PathBuf::new(),
            frames: None,
            truth: None,
            output: None,
            eps_r: handeye.eps_r,
            eps_t: handeye.eps_t,
            outlier_policy: handeye.policy,
            weighted_rows: handeye.weighted,
            r: refine.r,
            omega_gate: refine.omega_gate,
            candidates: refine.candidates,
            icp: refine.icp,
            ground: refine.ground,
            sigma2: 0.0,
            seed: 0,
            kabsch_baseline: true,
            record_timings: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let config: RunConfig = io::read_json(path)?;
        config.validate()?;
        Ok(config)
    }

    pub fn handeye(&self) -> HandEyeConfig {
        HandEyeConfig {
            eps_r: self.eps_r,
            eps_t: self.eps_t,
            policy: self.outlier_policy,
            weighted: self.weighted_rows,
        }
    }

    pub fn refine(&self) -> RefineParams {
        RefineParams {
            r: self.r,
            omega_gate: self.omega_gate,
            candidates: self.candidates,
            icp: self.icp,
            ground: self.ground,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.schema_version != SCHEMA_VERSION {
            return Err(PipelineError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.poses_a.as_os_str().is_empty() || self.poses_b.as_os_str().is_empty() {
            return fail("poses_a and poses_b are required");
        }
        if !(self.eps_r > 0.0 && self.eps_t > 0.0) {
            return fail("eps_r and eps_t must be positive");
        }
        if !(self.sigma2 >= 0.0) {
            return fail("sigma2 must be non-negative");
        }
        if !(self.ground.inlier_dist > 0.0) || self.ground.max_iters == 0 {
            return fail("ground parameters must be positive");
        }
        self.refine()
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))
    }
}
