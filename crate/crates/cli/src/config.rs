//! Pipeline configuration, read from TOML. Every field has a default, so
//! an absent config file means "mock backend, stock prompts".

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crs_core::agents::{AgentOptions, PairPolicy, DEFAULT_AGE_TERMS, DEFAULT_GENERIC_GROUPS};
use crs_core::backend::{GenerationParams, LlmBackend, MockScript, PipelineStep, ProviderConfig, StageBackends};
use crs_core::ingest::{DEFAULT_CHUNK_SIZE, DEFAULT_DELIMITER};
use crs_core::prompts::{PromptError, PromptSet};
use crs_core::PprConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Chunk length in Unicode scalar values.
    pub chunk_size: usize,
    /// Field separator of the triplet response format.
    pub delimiter: String,
    /// Maximum concurrent triplet-extraction calls.
    pub parallelism: usize,
    pub output_dir: PathBuf,
    /// Directory of `<template>.txt` overrides; relative to the config file.
    pub prompt_dir: Option<PathBuf>,
    pub ppr: PprConfig,
    pub agents: AgentSettings,
    pub backend: BackendSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            chunk_size: DEFAULT_CHUNK_SIZE,
            delimiter: DEFAULT_DELIMITER.to_owned(),
            parallelism: 4,
            output_dir: PathBuf::from("out"),
            prompt_dir: None,
            ppr: PprConfig::default(),
            agents: AgentSettings::default(),
            backend: BackendSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSettings {
    pub pair_policy: PairPolicy,
    pub requery_limit: u32,
    pub params: GenerationParams,
    pub age_denylist: Vec<String>,
    pub generic_group_labels: Vec<String>,
}

impl Default for AgentSettings {
    fn default() -> Self {
        AgentSettings {
            pair_policy: PairPolicy::default(),
            requery_limit: 1,
            params: GenerationParams::default(),
            age_denylist: DEFAULT_AGE_TERMS.iter().map(|s| s.to_string()).collect(),
            generic_group_labels: DEFAULT_GENERIC_GROUPS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// A default provider plus optional per-step overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSettings {
    pub default: ProviderConfig,
    pub steps: BTreeMap<PipelineStep, ProviderConfig>,
}

impl Default for BackendSettings {
    fn default() -> Self {
        BackendSettings {
            default: ProviderConfig::Mock {
                script: MockScript::default(),
            },
            steps: BTreeMap::new(),
        }
    }
}

impl PipelineConfig {
    /// Reads `path`, or returns the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(PipelineConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config: PipelineConfig =
            toml::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
        if let (Some(dir), Some(base)) = (config.prompt_dir.as_mut(), path.parent()) {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.chunk_size == 0 {
            return Err(CliError::invalid("chunk_size must be at least 1"));
        }
        if self.parallelism == 0 {
            return Err(CliError::invalid("parallelism must be at least 1"));
        }
        if self.delimiter.trim().is_empty() {
            return Err(CliError::invalid("delimiter must not be blank"));
        }
        self.ppr.validate().map_err(CliError::invalid)
    }

    pub fn prompts(&self) -> Result<PromptSet, CliError> {
        match &self.prompt_dir {
            None => Ok(PromptSet::default()),
            Some(dir) => PromptSet::load_dir(dir).map_err(|e| match e {
                PromptError::Io { path, source } => CliError::io(Path::new(&path), source),
                other => CliError::invalid(other),
            }),
        }
    }

    pub fn agent_options(&self) -> Result<AgentOptions, CliError> {
        Ok(AgentOptions {
            prompts: self.prompts()?,
            params: self.agents.params.clone(),
            pair_policy: self.agents.pair_policy,
            requery_limit: self.agents.requery_limit,
            age_denylist: self.agents.age_denylist.clone(),
            generic_group_labels: self.agents.generic_group_labels.clone(),
        })
    }

    /// Builds the provider bindings. `mock_script` replaces the default
    /// provider with a scripted mock.
    pub fn backends(&self, mock_script: Option<&MockScript>) -> Result<StageBackends, CliError> {
        let default = match mock_script {
            Some(script) => ProviderConfig::Mock { script: script.clone() },
            None => self.backend.default.clone(),
        };
        let build = |id: &str, p: &ProviderConfig| -> Result<Arc<dyn LlmBackend>, CliError> {
            p.build(id).map_err(|e| CliError::backend(id, e))
        };
        let mut backends = StageBackends::single(build("default", &default)?);
        for (step, provider) in &self.backend.steps {
            backends = backends.bind(*step, build(&step.to_string(), provider)?);
        }
        Ok(backends)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_config_defaults() {
        let c = PipelineConfig::load(None).unwrap();
        assert_eq!(c.chunk_size, 512);
        assert_eq!(c.ppr.threshold, 0.02);
        assert_eq!(c.ppr.main_seed_score, 1.0);
        assert_eq!(c.ppr.sub_seed_score, 0.5);
        assert!(matches!(c.backend.default, ProviderConfig::Mock { .. }));
        c.backends(None).unwrap();
        assert_eq!(toml::from_str::<PipelineConfig>("").unwrap(), c);
    }

    #[test]
    fn parses_bindings_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("crs.toml");
        fs::write(
            &path,
            r#"
chunk_size = 256
prompt_dir = "prompts"

[ppr]
threshold = 0.05

[agents]
pair_policy = "seed_pairs_only"
params = { temperature = 0.2 }

[backend.default]
kind = "http"
base_url = "http://localhost:8000/v1"
model = "some-model"

[backend.steps.embed]
kind = "mock"
"#,
        )
        .unwrap();
        let c = PipelineConfig::load(Some(&path)).unwrap();
        assert_eq!(c.chunk_size, 256);
        assert_eq!(c.ppr.threshold, 0.05);
        assert_eq!(c.ppr.damping, 0.85);
        assert_eq!(c.agents.pair_policy, PairPolicy::SeedPairsOnly);
        assert_eq!(c.agents.params.temperature, 0.2);
        assert_eq!(c.prompt_dir, Some(dir.path().join("prompts")));
        assert!(matches!(c.backend.default, ProviderConfig::Http(_)));
        assert!(matches!(
            c.backend.steps[&PipelineStep::Embed],
            ProviderConfig::Mock { .. }
        ));
    }

    #[test]
    fn bad_values_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "[ppr]\nthreshold = 1.5\n").unwrap();
        assert_eq!(PipelineConfig::load(Some(&path)).unwrap_err().exit_code(), 3);
        fs::write(&path, "chunk_sise = 3\n").unwrap();
        assert_eq!(PipelineConfig::load(Some(&path)).unwrap_err().exit_code(), 3);
        assert_eq!(
            PipelineConfig::load(Some(&dir.path().join("missing.toml")))
                .unwrap_err()
                .exit_code(),
            2
        );
    }

    #[test]
    fn documented_example_parses() {
        let doc = include_str!("../../../docs/schemas/config.md");
        let toml_block = doc.split("```toml\n").nth(1).unwrap().split("```").next().unwrap();
        let c: PipelineConfig = toml::from_str(toml_block).unwrap();
        c.validate().unwrap();
        assert_eq!(c.agents.generic_group_labels, ["others"]);
        assert!(matches!(c.backend.steps[&PipelineStep::Embed], ProviderConfig::Mock { .. }));
    }
}
