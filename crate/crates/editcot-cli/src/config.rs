//! TOML configuration with environment-variable interpolation.
//!
//! `${NAME}` references in the config file are expanded from the
//! environment before parsing. The fully-resolved effective config is
//! echoed beside every command's outputs with interpolated values masked
//! back to `${NAME}`, so secrets never land on disk.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use editcot::engine::RunConfig;
use editcot::forge::ForgeConfig;
use editcot::gateway::{LlmBackend, RemoteBackend, RemoteConfig, ScriptedBackend};
use editcot::prompts::{Locale, PromptLibrary};
use editcot::store::MemoryLayout;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env_var: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    Scripted,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_layout: Option<MemoryLayout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adapter_config: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub questions_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retriever_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_file: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<PathBuf>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub reasoner: BackendSection,
    /// Omitted editor aliases the reasoner (the untrained-editor ablation).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub editor: Option<BackendSection>,
    #[serde(default = "default_run")]
    pub run: RunConfig,
    #[serde(default)]
    pub forge: ForgeConfig,
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default = "default_locale")]
    pub locale: String,
}

fn default_run() -> RunConfig {
    RunConfig::default()
}

fn default_locale() -> String {
    "en".into()
}

/// Expand `${NAME}` from the environment; returns the expanded text and the
/// (name, value) pairs used, for masking the echo.
pub fn interpolate_env(text: &str) -> Result<(String, Vec<(String, String)>), CliError> {
    let mut out = String::with_capacity(text.len());
    let mut used = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        rest = &rest[start + 2..];
        let end = rest
            .find('}')
            .ok_or_else(|| CliError::Config("unterminated ${ in config".into()))?;
        let name = &rest[..end];
        rest = &rest[end + 1..];
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(CliError::Config(format!("bad environment reference ${{{name}}}")));
        }
        let value = std::env::var(name)
            .map_err(|_| CliError::Config(format!("environment variable {name} is not set")))?;
        out.push_str(&value);
        used.push((name.to_string(), value));
    }
    out.push_str(rest);
    Ok((out, used))
}

/// The reasoner and editor backends, in that order.
pub type BackendPair = (Box<dyn LlmBackend>, Box<dyn LlmBackend>);

pub struct LoadedConfig {
    pub config: AppConfig,
    /// Interpolated (name, value) pairs, masked out of the echoed config.
    secrets: Vec<(String, String)>,
    /// Directory of the config file; relative paths resolve against it.
    base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let (expanded, secrets) = interpolate_env(&raw)?;
        let config: AppConfig = toml::from_str(&expanded)
            .map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))?;
        if config.forge.conflict_threshold <= 0.0 || config.forge.conflict_threshold > 1.0 {
            return Err(CliError::Config("forge.conflict_threshold must be in (0, 1]".into()));
        }
        let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(LoadedConfig { config, secrets, base_dir })
    }

    /// Resolve a configured path against the config file's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn require_file(&self, role: &str, p: &Option<PathBuf>) -> Result<PathBuf, CliError> {
        let p = p
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("paths.{role} is required for this command")))?;
        let resolved = self.resolve(p);
        if !resolved.is_file() {
            return Err(CliError::Config(format!(
                "paths.{role} does not exist: {}",
                resolved.display()
            )));
        }
        Ok(resolved)
    }

    pub fn locale(&self) -> Result<Locale, CliError> {
        self.config.locale.parse().map_err(CliError::Config)
    }

    pub fn library(&self) -> Result<PromptLibrary, CliError> {
        let locale = self.locale()?;
        match &self.config.paths.templates_dir {
            Some(dir) => PromptLibrary::from_dir(self.resolve(dir), locale)
                .map_err(|e| CliError::Config(format!("templates_dir: {e}"))),
            None => Ok(PromptLibrary::builtin(locale)),
        }
    }

    pub fn memory_layout(&self) -> MemoryLayout {
        self.config.paths.memory_layout.unwrap_or(MemoryLayout::PairedPrePost)
    }

    fn build_backend(&self, name: &str, section: &BackendSection) -> Result<Box<dyn LlmBackend>, CliError> {
        match section.kind {
            BackendKind::Scripted => {
                let script_path = section.script_path.as_ref().ok_or_else(|| {
                    CliError::Config(format!("{name}: scripted backend requires script_path"))
                })?;
                let path = self.resolve(script_path);
                if !path.is_file() {
                    return Err(CliError::Config(format!(
                        "{name}.script_path does not exist: {}",
                        path.display()
                    )));
                }
                let json = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                let backend = ScriptedBackend::from_json(name.to_string(), &json)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                Ok(Box::new(backend))
            }
            BackendKind::Remote => {
                let endpoint = section
                    .endpoint_url
                    .clone()
                    .ok_or_else(|| CliError::Config(format!("{name}: remote backend requires endpoint_url")))?;
                let model = section
                    .model_name
                    .clone()
                    .ok_or_else(|| CliError::Config(format!("{name}: remote backend requires model_name")))?;
                let mut config = RemoteConfig::new(endpoint, model);
                config.api_key_env_var = section.api_key_env_var.clone();
                if let Some(secs) = section.timeout_secs {
                    config.timeout = Duration::from_secs(secs);
                }
                let backend = RemoteBackend::new(name.to_string(), config)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                Ok(Box::new(backend))
            }
        }
    }

    /// Build (reasoner, editor); an absent editor section aliases the
    /// reasoner configuration.
    pub fn backends(&self) -> Result<BackendPair, CliError> {
        let reasoner = self.build_backend("reasoner", &self.config.reasoner)?;
        let editor_section = self.config.editor.as_ref().unwrap_or(&self.config.reasoner);
        let editor = self.build_backend("editor", editor_section)?;
        Ok((reasoner, editor))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.output_dir)
    }

    /// Write the fully-resolved effective config (defaults applied) beside
    /// the command's outputs, masking any interpolated environment values.
    pub fn echo_effective(&self, overrides: &BTreeMap<String, String>) -> Result<PathBuf, CliError> {
        let dir = self.output_dir();
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        let mut text = toml::to_string_pretty(&self.config)
            .map_err(|e| CliError::Runtime(format!("config serialization: {e}")))?;
        for (name, value) in &self.secrets {
            if !value.is_empty() {
                text = text.replace(value.as_str(), &format!("${{{name}}}"));
            }
        }
        if !overrides.is_empty() {
            text.push_str("\n# command-line overrides\n");
            for (k, v) in overrides {
                text.push_str(&format!("# {k} = {v}\n"));
            }
        }
        let path = dir.join("effective-config.toml");
        std::fs::write(&path, text)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}
