use std::path::{Path, PathBuf};

use cnma::{
    Anchoring, Effects, InteractionTerm, Metric, ModelSpec, Orientation, SamplingMode, SetSelection,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Contrast CSV, relative to the config file.
    pub data: PathBuf,
    #[serde(default)]
    pub model: ModelConfig,
    pub question: QuestionConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub effects: Effects,
    #[serde(default)]
    pub anchor: Option<String>,
    #[serde(default)]
    pub interactions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SetConfig {
    Keyword(String),
    Labels(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionConfig {
    pub set: SetConfig,
    /// Defaults to the first element of the set.
    #[serde(default)]
    pub reference: Option<String>,
    pub metric: String,
    #[serde(default)]
    pub orientation: Orientation,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: SamplingMode,
    /// Externally produced draws, relative to the config file.
    #[serde(default)]
    pub samples_file: Option<PathBuf>,
}

fn default_samples() -> usize {
    1000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv, Format::Svg]
}

impl RunConfig {
    /// Reads the config and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.data = base.join(&cfg.data);
        if let Some(s) = &cfg.question.samples_file {
            cfg.question.samples_file = Some(base.join(s));
        }
        cfg.output.dir = base.join(&cfg.output.dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.metric()?;
        self.set_selection()?;
        self.model_spec()?;
        if self.question.samples == 0 {
            return Err(CliError::validation("question.samples must be at least 1"));
        }
        Ok(())
    }

    pub fn metric(&self) -> Result<Metric, CliError> {
        self.question
            .metric
            .parse::<Metric>()
            .map_err(CliError::from)
    }

    pub fn set_selection(&self) -> Result<SetSelection, CliError> {
        match &self.question.set {
            SetConfig::Keyword(k) => match k.as_str() {
                "all-treatments" => Ok(SetSelection::AllTreatments),
                "all-components" => Ok(SetSelection::AllComponents),
                other => Err(CliError::validation(format!(
                    "question.set must be a list, \"all-treatments\" or \"all-components\", got {other:?}"
                ))),
            },
            SetConfig::Labels(labels) => Ok(SetSelection::Labels(labels.clone())),
        }
    }

    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        let mut spec = ModelSpec::additive(self.model.effects);
        if let Some(anchor) = &self.model.anchor {
            spec.anchoring = Anchoring::Anchored(anchor.clone());
        }
        for term in &self.model.interactions {
            spec = spec.with_interaction(InteractionTerm::parse(term)?);
        }
        Ok(spec)
    }
}
