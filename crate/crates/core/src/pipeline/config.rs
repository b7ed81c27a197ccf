use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asg::AsgConfig;
use crate::decompose::Backend;
use crate::refine::RefineConfig;

/// Which refinement stages run after span generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// NMS over the original-query candidates.
    AsgOnly,
    /// Evidence reranking.
    AsgEr,
    /// Evidence-union injection.
    AsgEi,
    /// Reranking and injection.
    #[default]
    Full,
}

impl Mode {
    pub fn needs_evidence(self) -> bool {
        self != Mode::AsgOnly
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::AsgOnly => "asg_only",
            Mode::AsgEr => "asg_er",
            Mode::AsgEi => "asg_ei",
            Mode::Full => "full",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "asg_only" => Ok(Mode::AsgOnly),
            "asg_er" => Ok(Mode::AsgEr),
            "asg_ei" => Ok(Mode::AsgEi),
            "full" => Ok(Mode::Full),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// Chat-completion endpoint settings. Credentials are never stored here;
/// they come from the environment at run time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    pub timeout_s: f64,
    pub retries: u32,
    pub max_in_flight: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            model: "qwen2.5-3b-instruct".into(),
            timeout_s: 30.0,
            retries: 2,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Frame rate assumed for signals whose manifest entry gives none.
    pub fps: f64,
    pub asg: AsgConfig,
    pub refine: RefineConfig,
    pub mode: Mode,
    pub decompose_backend: Backend,
    pub endpoint: EndpointConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    /// Maximum queries processed concurrently. Not part of the fingerprint:
    /// it never changes results.
    pub parallelism: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fps: 5.0,
            asg: AsgConfig::default(),
            refine: RefineConfig::default(),
            mode: Mode::Full,
            decompose_backend: Backend::Provided,
            endpoint: EndpointConfig::default(),
            cache_dir: None,
            parallelism: 1,
        }
    }
}

impl PipelineConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 over the canonical JSON of every result-affecting field.
    pub fn fingerprint(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("parallelism");
        }
        // serde_json maps are ordered by key, so this is canonical.
        let canonical = serde_json::to_string(&value).expect("value serializes");
        sha256_hex(canonical.as_bytes())
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
