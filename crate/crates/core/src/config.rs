//! TOML configuration with `${VAR}` interpolation in string values.

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentSettings, PipelineConfig, QueryMode, Verbosity};
use crate::dataset::TestConventions;
use crate::diff::{PathRules, DEFAULT_CONTEXT_LINES};
use crate::llm::{
    ChatProvider, Embedder, HashEmbedder, OpenAiCompatible, OpenAiEmbedder, ScriptedProvider, TracingProvider,
    DEFAULT_TIMEOUT,
};
use crate::retrieval::{IndexMode, DEFAULT_TOP_K};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("environment variable {0} is not set")]
    MissingEnv(String),
    #[error("invalid config value for {field}: {message}")]
    Invalid { field: &'static str, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatKind {
    #[default]
    Openai,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChatConfig {
    pub provider: ChatKind,
    pub base_url: String,
    pub model: String,
    /// Literal key, usually written as `"${SOME_VAR}"`.
    pub api_key: Option<String>,
    /// Name of the variable holding the key; read when `api_key` is unset.
    pub api_key_env: Option<String>,
    /// Script file for the scripted provider.
    pub script: Option<PathBuf>,
    /// Append every request and response to this JSONL file.
    pub log: Option<PathBuf>,
}

impl Default for ChatConfig {
    fn default() -> Self {
        Self {
            provider: ChatKind::Openai,
            base_url: "http://localhost:8000/v1".into(),
            model: "default".into(),
            api_key: None,
            api_key_env: Some("OPENAI_API_KEY".into()),
            script: None,
            log: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Openai,
    #[default]
    Hash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub provider: EmbeddingKind,
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub api_key_env: Option<String>,
    /// Dimension of the hash embedder.
    pub dim: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            provider: EmbeddingKind::Hash,
            base_url: "http://localhost:8000/v1".into(),
            model: "default".into(),
            api_key: None,
            api_key_env: Some("OPENAI_API_KEY".into()),
            dim: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub max_iterations: u32,
    pub per_prompt_timeout_secs: f64,
    pub prediction_budget_secs: Option<f64>,
    pub decision_sees_diff: bool,
    pub query: QueryMode,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_iterations: 3,
            per_prompt_timeout_secs: DEFAULT_TIMEOUT.as_secs_f64(),
            prediction_budget_secs: None,
            decision_sees_diff: true,
            query: QueryMode::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub repo: PathBuf,
    pub context_lines: u32,
    pub top_k: usize,
    pub mode: IndexMode,
    pub parallelism: usize,
    pub verbosity: Verbosity,
    pub trials: usize,
    pub cache_dir: PathBuf,
    pub path_rules: PathRules,
    pub tests: TestConventions,
    pub agents: AgentConfig,
    pub chat: ChatConfig,
    pub embedding: EmbeddingConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            repo: PathBuf::from("."),
            context_lines: DEFAULT_CONTEXT_LINES,
            top_k: DEFAULT_TOP_K,
            mode: IndexMode::RawCode,
            parallelism: 1,
            verbosity: Verbosity::default(),
            trials: crate::eval::DEFAULT_TRIALS,
            cache_dir: PathBuf::from(".testmaint/cache"),
            path_rules: PathRules::default(),
            tests: TestConventions::default(),
            agents: AgentConfig::default(),
            chat: ChatConfig::default(),
            embedding: EmbeddingConfig::default(),
        }
    }
}

fn var_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap())
}

/// Replaces `${NAME}` with the value of `lookup(NAME)`.
pub fn interpolate(text: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<String, ConfigError> {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for caps in var_re().captures_iter(text) {
        let m = caps.get(0).unwrap();
        out.push_str(&text[last..m.start()]);
        let name = &caps[1];
        out.push_str(&lookup(name).ok_or_else(|| ConfigError::MissingEnv(name.to_string()))?);
        last = m.end();
    }
    out.push_str(&text[last..]);
    Ok(out)
}

fn interpolate_value(value: &mut toml::Value, lookup: &dyn Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
    match value {
        toml::Value::String(s) => *s = interpolate(s, lookup)?,
        toml::Value::Array(items) => {
            for item in items {
                interpolate_value(item, lookup)?;
            }
        }
        toml::Value::Table(table) => {
            for (_, item) in table.iter_mut() {
                interpolate_value(item, lookup)?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn env_lookup(name: &str) -> Option<String> {
    std::env::var(name).ok()
}

fn secs(field: &'static str, value: f64) -> Result<Duration, ConfigError> {
    if !(value.is_finite() && value > 0.0) {
        return Err(ConfigError::Invalid {
            field,
            message: format!("must be a positive number of seconds, got {value}"),
        });
    }
    Ok(Duration::from_secs_f64(value))
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Self::from_toml_with(text, &env_lookup)
    }

    pub fn from_toml_with(text: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut value: toml::Value = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        interpolate_value(&mut value, lookup)?;
        let config: Config = value.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?;
        let mut config = Self::from_toml_str(&text)?;
        // Relative paths in the file are relative to the file.
        if let Some(base) = path.parent() {
            for p in [&mut config.repo, &mut config.cache_dir] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            if let Some(script) = config.chat.script.as_mut().filter(|s| s.is_relative()) {
                *script = base.join(&*script);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &'static str, v: usize| {
            if v == 0 {
                Err(ConfigError::Invalid { field, message: "must be at least 1".into() })
            } else {
                Ok(())
            }
        };
        positive("top_k", self.top_k)?;
        positive("parallelism", self.parallelism)?;
        positive("trials", self.trials)?;
        positive("agents.max_iterations", self.agents.max_iterations as usize)?;
        positive("embedding.dim", self.embedding.dim)?;
        secs("agents.per_prompt_timeout_secs", self.agents.per_prompt_timeout_secs)?;
        if let Some(b) = self.agents.prediction_budget_secs {
            secs("agents.prediction_budget_secs", b)?;
        }
        if self.chat.provider == ChatKind::Scripted && self.chat.script.is_none() {
            return Err(ConfigError::Invalid {
                field: "chat.script",
                message: "the scripted provider needs a script file".into(),
            });
        }
        Ok(())
    }

    pub fn agent_settings(&self) -> AgentSettings {
        AgentSettings {
            max_iterations: self.agents.max_iterations,
            per_prompt_timeout: Duration::from_secs_f64(self.agents.per_prompt_timeout_secs),
            verbosity: self.verbosity,
        }
    }

    pub fn pipeline_config(&self, trace: bool) -> PipelineConfig {
        PipelineConfig {
            agents: self.agent_settings(),
            top_k: self.top_k,
            query_mode: self.agents.query,
            decision_sees_diff: self.agents.decision_sees_diff,
            trace,
            prediction_budget: self.agents.prediction_budget_secs.map(Duration::from_secs_f64),
        }
    }

    fn key(literal: &Option<String>, env: &Option<String>) -> Option<String> {
        literal.clone().or_else(|| env.as_deref().and_then(env_lookup))
    }

    pub fn chat_provider(&self) -> Result<Arc<dyn ChatProvider>, ConfigError> {
        let inner: Arc<dyn ChatProvider> = match self.chat.provider {
            ChatKind::Openai => Arc::new(OpenAiCompatible::new(
                &self.chat.base_url,
                &self.chat.model,
                Self::key(&self.chat.api_key, &self.chat.api_key_env),
            )),
            ChatKind::Scripted => {
                let path = self.chat.script.as_ref().expect("validated");
                Arc::new(
                    ScriptedProvider::from_script_file(path)
                        .map_err(|e| ConfigError::Invalid { field: "chat.script", message: e.to_string() })?,
                )
            }
        };
        match &self.chat.log {
            None => Ok(inner),
            Some(path) => Ok(Arc::new(TracingProvider::new(inner, path).map_err(|e| ConfigError::Invalid {
                field: "chat.log",
                message: format!("{}: {e}", path.display()),
            })?)),
        }
    }

    pub fn embedder(&self) -> Arc<dyn Embedder> {
        match self.embedding.provider {
            EmbeddingKind::Hash => Arc::new(HashEmbedder::new(self.embedding.dim)),
            EmbeddingKind::Openai => Arc::new(OpenAiEmbedder::new(
                &self.embedding.base_url,
                &self.embedding.model,
                Self::key(&self.embedding.api_key, &self.embedding.api_key_env),
                Duration::from_secs_f64(self.agents.per_prompt_timeout_secs),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::PathClass;

    #[test]
    fn defaults() {
        let c = Config::from_toml_with("", &|_| None).unwrap();
        assert_eq!(c.context_lines, 9);
        assert_eq!(c.top_k, 10);
        assert_eq!(c.agents.max_iterations, 3);
        assert_eq!(c.agent_settings().per_prompt_timeout, Duration::from_secs(300));
        assert_eq!(c.trials, 2);
        assert_eq!(c.mode, IndexMode::RawCode);
        assert_eq!(c.agents.prediction_budget_secs, None);
    }

    #[test]
    fn interpolates_and_overrides() {
        let text = r#"
            mode = "summary"
            [chat]
            api_key = "${KEY}"
            base_url = "http://${HOST}/v1"
            [[path_rules]]
            pattern = "**/tests/**"
            class = "test"
        "#;
        let lookup = |n: &str| match n {
            "KEY" => Some("secret".to_string()),
            "HOST" => Some("llm:9000".to_string()),
            _ => None,
        };
        let c = Config::from_toml_with(text, &lookup).unwrap();
        assert_eq!(c.mode, IndexMode::Summary);
        assert_eq!(c.chat.api_key.as_deref(), Some("secret"));
        assert_eq!(c.chat.base_url, "http://llm:9000/v1");
        assert_eq!(crate::diff::classify_path("a/tests/x.py", &c.path_rules), PathClass::Test);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            Config::from_toml_with("[chat]\napi_key = \"${NOPE}\"", &|_| None),
            Err(ConfigError::MissingEnv(v)) if v == "NOPE"
        ));
        assert!(Config::from_toml_with("top_k = 0", &|_| None).is_err());
        assert!(Config::from_toml_with("unknown_key = 1", &|_| None).is_err());
        assert!(Config::from_toml_with("[[path_rules]]\npattern = \"a[\"\nclass = \"test\"", &|_| None).is_err());
        assert!(Config::from_toml_with("[agents]\nper_prompt_timeout_secs = 0", &|_| None).is_err());
    }
}
