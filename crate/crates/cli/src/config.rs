//! `socnav.toml`: one file for paths, thresholds, model, training, LLM and
//! survey settings. Relative paths resolve against the file's directory.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use socnav_core::context::RetryPolicy;
use socnav_core::features::{FeatureParams, INPUT_DIM};
use socnav_core::metric::{ModelShape, TrainConfig};
use socnav_core::qa::KappaConfig;
use socnav_core::transforms::TransformConfig;
use socnav_survey::SurveyConfig;

pub const DEFAULT_CONFIG_FILE: &str = "socnav.toml";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub paths: Paths,
    pub features: FeatureParams,
    pub transforms: TransformConfig,
    pub data: DataConfig,
    pub qa: KappaConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub llm: LlmConfig,
    pub survey: Option<SurveyConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: PathBuf,
    /// JSON-lines context embedding cache.
    pub cache: PathBuf,
    /// Control set; `<dataset>/controls.json` when absent, inferred from the
    /// ratings when that file does not exist either.
    pub controls: Option<PathBuf>,
    pub checkpoint: PathBuf,
    /// Figures, logs and reports.
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            dataset: "data".into(),
            cache: "context_cache.jsonl".into(),
            controls: None,
            checkpoint: "model.altm".into(),
            out: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Augmented copies added per training sample (validation and test are
    /// never augmented).
    pub augment_copies: usize,
    /// Express trajectories in the goal frame before feature extraction.
    pub goal_frame: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { augment_copies: 1, goal_frame: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub layers: usize,
    pub head_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let s = ModelShape::new(INPUT_DIM);
        Self { hidden: s.hidden, layers: s.layers, head_hidden: s.head_hidden }
    }
}

impl ModelConfig {
    pub fn shape(&self) -> ModelShape {
        ModelShape { input_dim: INPUT_DIM, hidden: self.hidden, layers: self.layers, head_hidden: self.head_hidden }
    }
}

/// An OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub temperature: f64,
    pub timeout_s: u64,
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    /// Never contact the endpoint; uncached contexts are errors.
    pub offline: bool,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            temperature: 0.0,
            timeout_s: 60,
            max_attempts: 4,
            base_delay_ms: 500,
            max_delay_ms: 8000,
            offline: false,
        }
    }
}

impl LlmConfig {
    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_attempts,
            base_delay: Duration::from_millis(self.base_delay_ms),
            max_delay: Duration::from_millis(self.max_delay_ms),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl Config {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path`, or `socnav.toml` in the working directory when present,
    /// or returns the defaults.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let path = match path {
            Some(p) => p.to_path_buf(),
            None if Path::new(DEFAULT_CONFIG_FILE).is_file() => PathBuf::from(DEFAULT_CONFIG_FILE),
            None => return Ok(Self::default()),
        };
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.paths.dataset);
        resolve(base, &mut self.paths.cache);
        resolve(base, &mut self.paths.checkpoint);
        resolve(base, &mut self.paths.out);
        if let Some(c) = self.paths.controls.as_mut() {
            resolve(base, c);
        }
        if let Some(s) = self.survey.as_mut() {
            resolve(base, &mut s.dataset);
            resolve(base, &mut s.state_dir);
            if let Some(r) = s.ratings_dir.as_mut() {
                resolve(base, r);
            }
            if let Some(d) = s.static_dir.as_mut() {
                resolve(base, d);
            }
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.transforms.validate()?;
        self.qa.validate()?;
        self.train.validate()?;
        self.model.shape().validate()?;
        if let Some(s) = &self.survey {
            s.validate().map_err(anyhow::Error::msg)?;
        }
        Ok(())
    }
}
