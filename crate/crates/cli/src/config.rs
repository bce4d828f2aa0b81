//! Application configuration: one TOML file shared by every subcommand.
//!
//! Unknown keys are rejected so a typo fails loudly instead of silently
//! falling back to a default. Relative paths are resolved against the
//! directory containing the config file, which keeps checked-in configs
//! portable. Every field is optional; command-line flags override whatever
//! the file says.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

/// The whole config file. Blocks group settings by concern.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    pub paths: PathsBlock,
    pub provider: ProviderBlock,
    pub balance: BalanceBlock,
    pub prompt: PromptBlock,
    pub evaluation: EvaluationBlock,
}

/// Input and output locations.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsBlock {
    pub corpus: Option<PathBuf>,
    pub ontology: Option<PathBuf>,
    pub run_dir: Option<PathBuf>,
    pub cache: Option<PathBuf>,
}

/// Model connection and client pacing settings. `model` picks the built-in
/// endpoint; the remaining fields override its defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderBlock {
    pub model: Option<String>,
    pub endpoint_url: Option<String>,
    pub api_key_env: Option<String>,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
    pub timeout_secs: Option<u64>,
    pub in_flight_limit: Option<usize>,
    pub requests_per_minute: Option<f64>,
}

/// Corpus balancing defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BalanceBlock {
    pub target_per_type: Option<usize>,
    pub seed: Option<u64>,
    pub max_total: Option<usize>,
}

/// Prompt construction defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptBlock {
    /// `ddee` or `ddee-cot`.
    pub style: Option<String>,
    /// Character budget per prompt; absent means unlimited.
    pub budget_chars: Option<usize>,
    /// Gold snippets shown per type when generating definitions.
    pub per_type_examples: Option<usize>,
    /// Directory of template overrides; absent means the embedded set.
    pub templates_dir: Option<PathBuf>,
}

/// Scoring defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationBlock {
    /// `offset` or `text`.
    pub mode: Option<String>,
}

impl AppConfig {
    /// Parse a TOML config file and resolve its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<AppConfig, CliError> {
        let content = std::fs::read_to_string(path).map_err(|e| {
            CliError::Domain(format!("config {}: {e}", path.display()))
        })?;
        let mut config: AppConfig = toml::from_str(&content).map_err(|e| {
            CliError::Domain(format!("config {}: {e}", path.display()))
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.paths.corpus,
            &mut self.paths.ontology,
            &mut self.paths.run_dir,
            &mut self.paths.cache,
            &mut self.prompt.templates_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&p);
            }
        }
    }
}
