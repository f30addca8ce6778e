use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, NetworkSpec};
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::lcr::LcrConfig;

/// One experiment: `runs` independent seeds of `episodes` each. Without an
/// `lcr` table the run is plain DQN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub episodes: usize,
    pub runs: usize,
    /// Run `r` is seeded with `seed + r`.
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default = "one")]
    pub workers: usize,
    /// Write `model_run{r}.bin` after each run.
    #[serde(default = "yes")]
    pub save_models: bool,
    pub env: EnvSpec,
    pub agent: AgentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lcr: Option<LcrConfig>,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: Self = Self::parse(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: PathBuf::from("<string>"),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.runs == 0 {
            return Err(Error::Config("episodes and runs must be positive".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.seed.checked_add(self.runs as u64).is_none() {
            return Err(Error::Config("seed + runs overflows".into()));
        }
        self.agent.validate()?;
        if let Some(l) = &self.lcr {
            l.validate()?;
        }
        // fails early on unknown env names, bad sizes and networks that do not fit
        let env = crate::envs::make(&self.env)?;
        let spec = self
            .agent
            .network
            .clone()
            .unwrap_or_else(|| NetworkSpec::default_for(env.observation_kind()));
        let mut shape = env.observation_shape();
        for layer in spec.encoder_layers(&shape)? {
            shape = layer.output_shape(&shape)?;
        }
        Ok(())
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed + run as u64
    }
}
