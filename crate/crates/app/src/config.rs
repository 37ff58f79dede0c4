//! Pipeline configuration: one TOML file, `BURNOUT_*` environment overrides
//! and command-line flags, applied in that order (later wins).
//!
//! Every key in the file can be overridden by an environment variable named
//! `BURNOUT_` followed by the key path joined with `_` and upper-cased, for
//! example `train.epochs` → `BURNOUT_TRAIN_EPOCHS` and `threshold` →
//! `BURNOUT_THRESHOLD`. Relative paths resolve against the directory of the
//! config file, or the working directory when no file is used.

use std::fmt;
use std::path::{Path, PathBuf};

use burnout_core::corpus::PreprocessConfig;
use burnout_core::dataset::AssemblyPlan;
use burnout_core::encoder::{BackendDescriptor, BackendKind, DEFAULT_MAX_LEN};
use burnout_core::head::TrainConfig;
use serde::{Deserialize, Serialize};

pub const ENV_PREFIX: &str = "BURNOUT_";
/// Config file picked up from the working directory when `--config` is absent.
pub const DEFAULT_CONFIG_FILE: &str = "burnout.toml";

/// Environment variables with the prefix that are not config keys.
const NON_KEY_VARS: &[&str] = &["BURNOUT_LLM_API_KEY", "BURNOUT_LOG"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub comments: PathBuf,
    pub sentences: PathBuf,
    pub verdicts: PathBuf,
    pub manual_labels: PathBuf,
    pub gpt_labeled: PathBuf,
    pub prompts: PathBuf,
    pub batches: PathBuf,
    pub event_log: PathBuf,
    pub dataset: PathBuf,
    pub train: PathBuf,
    pub eval: PathBuf,
    pub model: PathBuf,
    pub vocab: PathBuf,
    pub reports: PathBuf,
    /// Embedding cache directory; caching is off when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            comments: "data/comments.jsonl".into(),
            sentences: "data/sentences.jsonl".into(),
            verdicts: "data/verdicts.jsonl".into(),
            manual_labels: "data/manual_labels.jsonl".into(),
            gpt_labeled: "data/gpt_labeled.jsonl".into(),
            prompts: "data/prompts.jsonl".into(),
            batches: "data/batches.jsonl".into(),
            event_log: "data/labels.jsonl".into(),
            dataset: "data/dataset.jsonl".into(),
            train: "data/train.jsonl".into(),
            eval: "data/eval.jsonl".into(),
            model: "models/model.json".into(),
            vocab: "assets/vocab.txt".into(),
            reports: "reports".into(),
            cache: None,
        }
    }
}

impl PathsConfig {
    fn all_mut(&mut self) -> Vec<(&'static str, &mut PathBuf)> {
        let mut v = vec![
            ("paths.comments", &mut self.comments),
            ("paths.sentences", &mut self.sentences),
            ("paths.verdicts", &mut self.verdicts),
            ("paths.manual_labels", &mut self.manual_labels),
            ("paths.gpt_labeled", &mut self.gpt_labeled),
            ("paths.prompts", &mut self.prompts),
            ("paths.batches", &mut self.batches),
            ("paths.event_log", &mut self.event_log),
            ("paths.dataset", &mut self.dataset),
            ("paths.train", &mut self.train),
            ("paths.eval", &mut self.eval),
            ("paths.model", &mut self.model),
            ("paths.vocab", &mut self.vocab),
            ("paths.reports", &mut self.reports),
        ];
        if let Some(c) = self.cache.as_mut() {
            v.push(("paths.cache", c));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptgenConfig {
    /// Factor lists (TOML); built-in defaults when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factors: Option<PathBuf>,
    /// Prompt template; the bundled template when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template: Option<PathBuf>,
    pub sentences_per_label: usize,
    pub url: String,
    pub model: String,
    pub concurrency: usize,
    /// Zero disables rate limiting.
    pub requests_per_minute: u32,
    pub max_attempts: u32,
    pub timeout_secs: u64,
}

impl Default for PromptgenConfig {
    fn default() -> Self {
        PromptgenConfig {
            factors: None,
            template: None,
            sentences_per_label: 10,
            url: "http://127.0.0.1:8000/v1/generate".into(),
            model: "gpt-3.5-turbo".into(),
            concurrency: 4,
            requests_per_minute: 0,
            max_attempts: 3,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    #[serde(flatten)]
    pub backend: BackendDescriptor,
    pub max_len: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            backend: BackendDescriptor::default(),
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
    /// Allowed CORS origins; `"*"` allows any.
    pub cors_origins: Vec<String>,
    /// Built annotation UI served under `/ui/` when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ui_dir: Option<PathBuf>,
    pub max_batch: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1".into(),
            port: 8080,
            cors_origins: vec!["http://localhost:5173".into()],
            ui_dir: None,
            max_batch: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Burnout probability at or above which a text is labeled burnout.
    pub threshold: f64,
    pub paths: PathsConfig,
    pub preprocess: PreprocessConfig,
    pub promptgen: PromptgenConfig,
    pub assembly: AssemblyPlan,
    pub train: TrainConfig,
    pub encoder: EncoderConfig,
    pub service: ServiceConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            threshold: 0.5,
            paths: PathsConfig::default(),
            preprocess: PreprocessConfig::default(),
            promptgen: PromptgenConfig::default(),
            assembly: AssemblyPlan::default(),
            train: TrainConfig::default(),
            encoder: EncoderConfig::default(),
            service: ServiceConfig::default(),
        }
    }
}

/// One failing key and what is wrong with it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path} is not valid TOML: {reason}")]
    Parse { path: String, reason: String },
    #[error("invalid configuration:\n{}", list(.0))]
    Invalid(Vec<Issue>),
}

fn list(issues: &[Issue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

fn issue(key: impl Into<String>, message: impl Into<String>) -> Issue {
    Issue {
        key: key.into(),
        message: message.into(),
    }
}

/// Overlays `over` onto `base`, recursing into tables.
fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn env_name(path: &[String]) -> String {
    format!("{ENV_PREFIX}{}", path.join("_").to_uppercase())
}

/// Parses an environment value with the type of the value it replaces.
fn parse_env_value(current: &toml::Value, raw: &str) -> Result<toml::Value, String> {
    use toml::Value;
    let raw = raw.trim();
    Ok(match current {
        Value::String(_) => Value::String(raw.to_string()),
        Value::Integer(_) => Value::Integer(raw.parse().map_err(|_| format!("expected an integer, got {raw:?}"))?),
        Value::Float(_) => Value::Float(raw.parse().map_err(|_| format!("expected a number, got {raw:?}"))?),
        Value::Boolean(_) => Value::Boolean(
            raw.parse()
                .map_err(|_| format!("expected true or false, got {raw:?}"))?,
        ),
        _ => {
            let doc: toml::Table = format!("v = {raw}")
                .parse()
                .map_err(|e| format!("expected a TOML value: {e}"))?;
            doc["v"].clone()
        }
    })
}

/// Applies every matching environment override; returns the names used and
/// any parse problems.
fn apply_env(
    value: &mut toml::Value,
    path: &mut Vec<String>,
    env: &dyn Fn(&str) -> Option<String>,
    used: &mut Vec<String>,
    issues: &mut Vec<Issue>,
) {
    if let toml::Value::Table(t) = value {
        for (k, v) in t.iter_mut() {
            path.push(k.clone());
            if v.is_table() {
                apply_env(v, path, env, used, issues);
            } else {
                let name = env_name(path);
                if let Some(raw) = env(&name) {
                    used.push(name.clone());
                    match parse_env_value(v, &raw) {
                        Ok(new) => *v = new,
                        Err(e) => issues.push(issue(format!("{} (from {name})", path.join(".")), e)),
                    }
                }
            }
            path.pop();
        }
    }
}

impl PipelineConfig {
    /// Loads `path` (or the defaults when `None`), applies overrides from the
    /// process environment, resolves paths and validates.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let vars: Vec<(String, String)> = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        Self::load_with_env(path, &vars)
    }

    /// Like [`PipelineConfig::load`] with an explicit environment.
    pub fn load_with_env(path: Option<&Path>, vars: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut value = toml::Value::try_from(PipelineConfig::default()).expect("defaults serialize");
        let base_dir = match path {
            Some(p) => {
                let shown = p.display().to_string();
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: shown.clone(),
                    source,
                })?;
                let file: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse {
                    path: shown,
                    reason: e.to_string(),
                })?;
                merge(&mut value, toml::Value::Table(file));
                p.parent().map(Path::to_path_buf).unwrap_or_default()
            }
            None => PathBuf::new(),
        };

        let mut issues = Vec::new();
        let mut used = Vec::new();
        let lookup = |name: &str| vars.iter().find(|(k, _)| k == name).map(|(_, v)| v.clone());
        apply_env(&mut value, &mut Vec::new(), &lookup, &mut used, &mut issues);
        for (k, _) in vars {
            if !used.contains(k) && !NON_KEY_VARS.contains(&k.as_str()) {
                tracing::warn!(variable = %k, "environment variable does not match any config key");
            }
        }
        if !issues.is_empty() {
            return Err(ConfigError::Invalid(issues));
        }

        let mut config: PipelineConfig = value.try_into().map_err(|e: toml::de::Error| ConfigError::Parse {
            path: path.map_or_else(|| "<defaults>".to_string(), |p| p.display().to_string()),
            reason: e.to_string(),
        })?;
        config.resolve_paths(&base_dir);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        if base.as_os_str().is_empty() {
            return;
        }
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        for (_, p) in self.paths.all_mut() {
            fix(p);
        }
        for p in [
            &mut self.promptgen.factors,
            &mut self.promptgen.template,
            &mut self.service.ui_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        if let BackendKind::InterchangeModel(m) = &mut self.encoder.backend.kind {
            fix(&mut m.path);
        }
    }

    /// Every violated constraint across all sections.
    pub fn issues(&mut self) -> Vec<Issue> {
        let mut out = Vec::new();
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            out.push(issue(
                "threshold",
                format!("{} must lie strictly between 0 and 1", self.threshold),
            ));
        }
        for (key, p) in self.paths.all_mut() {
            if p.as_os_str().is_empty() {
                out.push(issue(key, "must not be empty"));
            }
        }
        if let Err(e) = self.preprocess.validate() {
            out.push(issue("preprocess", e));
        }
        for (k, m) in self.train.issues() {
            out.push(issue(format!("train.{k}"), m));
        }
        for (k, m) in self.assembly.issues() {
            out.push(issue(format!("assembly.{k}"), m));
        }
        if self.encoder.backend.dim == 0 {
            out.push(issue("encoder.dim", "must be positive"));
        }
        if self.encoder.max_len < 2 {
            out.push(issue("encoder.max_len", "must be at least 2"));
        }
        let pg = &self.promptgen;
        if pg.sentences_per_label == 0 {
            out.push(issue("promptgen.sentences_per_label", "must be at least 1"));
        }
        if pg.concurrency == 0 {
            out.push(issue("promptgen.concurrency", "must be at least 1"));
        }
        if pg.max_attempts == 0 {
            out.push(issue("promptgen.max_attempts", "must be at least 1"));
        }
        if !(pg.url.starts_with("http://") || pg.url.starts_with("https://")) {
            out.push(issue("promptgen.url", format!("{:?} is not an http(s) URL", pg.url)));
        }
        if self.service.bind.parse::<std::net::IpAddr>().is_err() {
            out.push(issue(
                "service.bind",
                format!("{:?} is not an IP address", self.service.bind),
            ));
        }
        if self.service.max_batch == 0 {
            out.push(issue("service.max_batch", "must be at least 1"));
        }
        for o in &self.service.cors_origins {
            if o != "*" && axum::http::HeaderValue::from_str(o).is_err() {
                out.push(issue("service.cors_origins", format!("{o:?} is not a valid origin")));
            }
        }
        out
    }

    pub fn validate(&mut self) -> Result<(), ConfigError> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(issues))
        }
    }

    /// The configuration as a TOML document.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
