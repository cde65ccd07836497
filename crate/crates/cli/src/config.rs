//! The TOML run configuration. Every section is optional.

use std::path::{Path, PathBuf};

use layerkit::dataset::DatasetConfig;
use layerkit::rl::{GrpoConfig, RewardConfig};
use layerkit::workflow::{RemoteConfig, WorkflowConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Failure, Kind, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    #[default]
    Replay,
    Heuristic,
    Remote,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Default corpus for `build-dataset` and `stats`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    /// Default plan for `run`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub dataset: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSection {
    pub kind: PlannerKind,
    pub remote: RemoteConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub paths: Paths,
    pub seeds: Seeds,
    pub dataset: DatasetConfig,
    pub reward: RewardConfig,
    pub grpo: GrpoConfig,
    pub workflow: WorkflowConfig,
    pub planner: PlannerSection,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<CliConfig> {
        let Some(path) = path else {
            return Ok(CliConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        let cfg: CliConfig = toml::from_str(&text).map_err(|e| Failure::new(Kind::Format, format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let mut cfg = cfg;
        for p in [&mut cfg.paths.corpus, &mut cfg.paths.plan].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.exists() {
                return Err(Failure::new(Kind::Io, format!("{}: configured path does not exist", p.display())));
            }
        }
        cfg.reward.validate()?;
        cfg.grpo.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
