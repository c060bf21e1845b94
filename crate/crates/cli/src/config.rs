//! Run configuration: a single JSON document whose omitted fields take the
//! defaults of the two-circle experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tsd_core::optimize::OptimizerConfig;
use tsd_core::verify::Method;
use tsd_core::ProblemParams;

pub const DEFAULT_VERIFY_LEVEL: usize = 8;
pub const DEFAULT_OPTIMIZE_LEVEL: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerificationConfig {
    pub methods: Vec<Method>,
    pub fd_steps: Vec<f64>,
    pub cs_steps: Vec<f64>,
    pub hd_steps: Vec<f64>,
    /// Largest accepted `|dJ − hd| / max(1, |dJ|)`.
    pub hd_tolerance: f64,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        VerificationConfig {
            methods: Method::ALL.to_vec(),
            fd_steps: Method::Fd.default_steps(),
            cs_steps: Method::Cs.default_steps(),
            hd_steps: Method::Hd.default_steps(),
            hd_tolerance: 1e-10,
        }
    }
}

impl VerificationConfig {
    pub fn steps(&self, m: Method) -> &[f64] {
        match m {
            Method::Fd => &self.fd_steps,
            Method::Cs => &self.cs_steps,
            Method::Hd => &self.hd_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Subdivisions per side; `null` selects 8 for `verify` and 16 for
    /// `optimize`.
    pub mesh_level: Option<usize>,
    pub problem: ProblemParams,
    pub optimizer: OptimizerConfig,
    pub verification: VerificationConfig,
    /// `optimize` succeeds when `J_final / J_0` does not exceed this.
    pub target_reduction: f64,
    pub output: PathBuf,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mesh_level: None,
            problem: ProblemParams::default(),
            optimizer: OptimizerConfig::default(),
            verification: VerificationConfig::default(),
            target_reduction: 1e-4,
            output: PathBuf::from("output"),
            threads: 0,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = if text.trim().is_empty() {
            RunConfig::default()
        } else {
            serde_json::from_str(text).map_err(|e| ConfigError(format!("invalid config: {e}")))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.problem.validate().map_err(|e| ConfigError(e.to_string()))?;
        self.optimizer.validate().map_err(|e| ConfigError(e.to_string()))?;
        if self.mesh_level == Some(0) {
            return Err(ConfigError("mesh_level must be at least 1".into()));
        }
        if !self.problem.uhat.is_empty() {
            return Err(ConfigError("uhat is computed from the target design and cannot be set".into()));
        }
        let steps_ok = Method::ALL
            .iter()
            .all(|&m| self.verification.steps(m).iter().all(|&h| h > 0.0 && h.is_finite()));
        if !steps_ok {
            return Err(ConfigError("verification steps must be positive".into()));
        }
        if !(self.target_reduction > 0.0) {
            return Err(ConfigError("target_reduction must be positive".into()));
        }
        Ok(())
    }

    pub fn verify_level(&self) -> usize {
        self.mesh_level.unwrap_or(DEFAULT_VERIFY_LEVEL)
    }

    pub fn optimize_level(&self) -> usize {
        self.mesh_level.unwrap_or(DEFAULT_OPTIMIZE_LEVEL)
    }
}
