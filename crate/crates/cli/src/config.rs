use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use ttsd_core::adapters::{
    AdapterRole, AdapterSet, MockBackend, MockConfig, ReplayBackend, ReplayStore, SubprocessBackend, DEFAULT_TIMEOUT,
};
use ttsd_core::corpus_pipeline::{Stage, StageConfig};

/// Contents of the optional `--config` TOML file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Command line per adapter role; `ADAPTER_<ROLE>_CMD` takes precedence.
    pub adapters: BTreeMap<AdapterRole, String>,
    pub adapter_timeout_s: Option<u64>,
    pub parallelism: Option<usize>,
    pub seed: Option<u64>,
    pub stage: Option<StageConfig>,
    pub paths: Paths,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub artifact_cache: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

impl EngineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: EngineConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if config.parallelism == Some(0) {
            bail!("parallelism must be at least 1");
        }
        if let Some(stage) = &config.stage {
            stage.validate()?;
        }
        Ok(config)
    }

    pub fn stage_config(&self, stage: Option<u8>) -> Result<StageConfig> {
        match (stage, &self.stage) {
            (Some(s), _) => Ok(StageConfig::for_stage(Stage::try_from(s).map_err(anyhow::Error::msg)?)),
            (None, Some(cfg)) => Ok(cfg.clone()),
            (None, None) => Ok(StageConfig::for_stage(Stage::One)),
        }
    }

    fn timeout(&self) -> Duration {
        self.adapter_timeout_s.map(Duration::from_secs).unwrap_or(DEFAULT_TIMEOUT)
    }

    /// Subprocess backends from the config file, overridden per role by the environment.
    pub fn subprocess_adapters(&self) -> AdapterSet {
        let timeout = self.timeout();
        let mut set = AdapterSet::new();
        for role in AdapterRole::ALL {
            let cmd = std::env::var(role.env_var())
                .ok()
                .filter(|c| !c.trim().is_empty())
                .or_else(|| self.adapters.get(&role).cloned());
            if let Some(cmd) = cmd {
                set.register(role, Arc::new(SubprocessBackend::new(cmd, timeout)));
            }
        }
        set
    }
}

/// How adapter calls are served, shared by the commands that need adapters.
#[derive(Debug, Clone, clap::Args)]
pub struct BackendArgs {
    /// Serve every role from recorded artifacts in this directory.
    #[arg(long, value_name = "DIR", conflicts_with = "mock")]
    pub replay: Option<PathBuf>,
    /// Record every artifact into this directory.
    #[arg(long, value_name = "DIR")]
    pub record: Option<PathBuf>,
    /// Use the deterministic mock backend (audio handles are mock JSON files).
    #[arg(long)]
    pub mock: bool,
    /// Embedding noise of the mock backend.
    #[arg(long, default_value_t = 0.0, requires = "mock")]
    pub mock_sigma: f64,
    /// Embedding dimension of the mock backend.
    #[arg(long, default_value_t = 8, requires = "mock")]
    pub mock_dim: usize,
}

impl BackendArgs {
    /// Builds the adapter set; `root` is the directory request paths are
    /// made relative to in replay keys.
    pub fn adapters(&self, config: &EngineConfig, seed: u64, root: &Path) -> Result<AdapterSet> {
        let root = std::fs::canonicalize(root).with_context(|| format!("resolving {}", root.display()))?;
        let store = |dir: &Path| ReplayStore::new(dir).with_path_root(&root);
        let set = if let Some(dir) = &self.replay {
            if !dir.is_dir() {
                bail!("replay directory {} does not exist", dir.display());
            }
            AdapterSet::uniform(Arc::new(ReplayBackend::new(store(dir))))
        } else if self.mock {
            AdapterSet::uniform(Arc::new(MockBackend::new(MockConfig {
                sigma: self.mock_sigma,
                dim: self.mock_dim,
                seed,
            })))
        } else {
            config.subprocess_adapters()
        };
        let record = self.record.as_deref().or(config.paths.artifact_cache.as_deref().filter(|_| self.replay.is_none()));
        Ok(match record {
            Some(dir) => set.recording(store(dir)),
            None => set,
        })
    }
}
