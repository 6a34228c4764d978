//! Layered configuration for the command-line tools: built-in defaults,
//! then command-line flags, then a config file, each overriding the last.
//!
//! A config file is TOML, or JSON when its name ends in `.json`:
//!
//! ```toml
//! [model]
//! seq_len = 12
//!
//! [training]
//! batch_size = 4
//! seed = 1
//! ```

use gca_core::corpus::ModelConfig;
use gca_core::training::TrainingConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// A config file or merged configuration that does not parse.
#[derive(Debug, Error)]
#[error("{location}: {message}")]
pub struct SettingsError {
    pub location: String,
    pub message: String,
}

impl SettingsError {
    fn new(location: impl Into<String>, message: impl ToString) -> Self {
        Self {
            location: location.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ResolveError {
    /// The config file is malformed or names unknown fields.
    #[error(transparent)]
    Format(#[from] SettingsError),
    /// The values parse but are not usable.
    #[error(transparent)]
    Invalid(#[from] gca_core::Error),
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub model: Map<String, Value>,
    #[serde(default)]
    pub training: Map<String, Value>,
}

impl ConfigFile {
    pub fn parse(text: &str, json: bool) -> Result<Self, SettingsError> {
        if json {
            serde_json::from_str(text).map_err(|e| SettingsError::new("config", e))
        } else {
            toml::from_str(text).map_err(|e| SettingsError::new("config", e.message()))
        }
    }
}

/// Overlays `flags` (a serialized struct whose unset fields are skipped) and
/// then `file` onto `defaults`.
pub fn layer<T: Serialize + DeserializeOwned>(
    section: &str,
    defaults: &T,
    flags: &impl Serialize,
    file: &Map<String, Value>,
) -> Result<T, SettingsError> {
    let Value::Object(mut merged) = serde_json::to_value(defaults).expect("configs serialize") else {
        unreachable!("configs serialize to objects")
    };
    if let Value::Object(set) = serde_json::to_value(flags).expect("flags serialize") {
        merged.extend(set);
    }
    merged.extend(file.clone());
    serde_json::from_value(Value::Object(merged)).map_err(|e| SettingsError::new(format!("[{section}]"), e))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Scale {
    #[default]
    Desk,
    Full,
}

impl Scale {
    pub fn model(self) -> ModelConfig {
        match self {
            Scale::Desk => ModelConfig::desk_scale(),
            Scale::Full => ModelConfig::full_scale(),
        }
    }

    pub fn training(self) -> TrainingConfig {
        match self {
            Scale::Desk => TrainingConfig::desk_scale(),
            Scale::Full => TrainingConfig::full_scale(),
        }
    }
}

/// Flags named after the [`ModelConfig`] fields.
#[derive(Clone, Debug, Default, clap::Args, Serialize)]
pub struct ModelFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seq_len: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sentence_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disc_sentence_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context_utterances: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
}

/// Flags named after the [`TrainingConfig`] fields.
#[derive(Clone, Debug, Default, clap::Args, Serialize)]
pub struct TrainingFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator_epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discriminator_epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teacher_forcing_epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_teacher_forcing_epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub machine_pairs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adversarial_epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator_lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discriminator_lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teacher_forcing_lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub self_conversation_turns: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_embedding_adversarially: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Resolves both configurations and validates them.
pub fn resolve(
    scale: Scale,
    model: &ModelFlags,
    training: &TrainingFlags,
    file: Option<&ConfigFile>,
) -> Result<(ModelConfig, TrainingConfig), ResolveError> {
    let empty = ConfigFile::default();
    let file = file.unwrap_or(&empty);
    let m: ModelConfig = layer("model", &scale.model(), model, &file.model)?;
    let t: TrainingConfig = layer("training", &scale.training(), training, &file.training)?;
    m.validate()?;
    t.validate()?;
    Ok((m, t))
}
