//! Query manifests and prediction documents (JSON).

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::asg::{Candidate, Provenance};
use crate::decompose::QueryTriple;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const PREDICTIONS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubQueries {
    pub sub_a: String,
    pub sub_b: String,
}

/// Where a query's similarity curves come from. Paths are relative to the
/// manifest file unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalSource {
    /// Precomputed similarity curves (single-column matrices).
    Similarity {
        original: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sub_a: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sub_b: Option<PathBuf>,
    },
    /// Frame embeddings (`T x D`) plus query embeddings (`1 x D`).
    Embeddings {
        frames: PathBuf,
        query: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sub_a: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sub_b: Option<PathBuf>,
    },
}

impl SignalSource {
    pub fn paths(&self) -> Vec<&Path> {
        match self {
            SignalSource::Similarity {
                original,
                sub_a,
                sub_b,
            } => std::iter::once(original.as_path())
                .chain(sub_a.as_deref())
                .chain(sub_b.as_deref())
                .collect(),
            SignalSource::Embeddings {
                frames,
                query,
                sub_a,
                sub_b,
            } => [frames.as_path(), query.as_path()]
                .into_iter()
                .chain(sub_a.as_deref())
                .chain(sub_b.as_deref())
                .collect(),
        }
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            SignalSource::Similarity {
                original,
                sub_a,
                sub_b,
            } => {
                fix(original);
                sub_a.iter_mut().for_each(fix);
                sub_b.iter_mut().for_each(fix);
            }
            SignalSource::Embeddings {
                frames,
                query,
                sub_a,
                sub_b,
            } => {
                fix(frames);
                fix(query);
                sub_a.iter_mut().for_each(fix);
                sub_b.iter_mut().for_each(fix);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub video_id: String,
    pub query_text: String,
    /// Overrides the configured fps for this query's signals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_queries: Option<SubQueries>,
    /// `[start_s, end_s]`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<[f64; 2]>,
    pub source: SignalSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub queries: Vec<QueryRecord>,
}

impl Manifest {
    pub fn new(queries: Vec<QueryRecord>) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            queries,
        }
    }

    /// Parse and validate; relative paths are resolved against the
    /// manifest's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Parse(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for q in &mut manifest.queries {
            q.source.resolve(base);
        }
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| PipelineError::io(path, e))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(PipelineError::Manifest(format!(
                "unsupported manifest schema_version {}",
                self.schema_version
            )));
        }
        let mut ids = HashSet::new();
        for q in &self.queries {
            if !ids.insert(q.query_id.as_str()) {
                return Err(PipelineError::Manifest(format!(
                    "duplicate query_id `{}`",
                    q.query_id
                )));
            }
            if let Some([s, e]) = q.ground_truth {
                if !(e > s) {
                    return Err(PipelineError::Manifest(format!(
                        "query `{}`: ground truth end must exceed start",
                        q.query_id
                    )));
                }
            }
            if let Some(fps) = q.fps {
                if !(fps > 0.0 && fps.is_finite()) {
                    return Err(PipelineError::Manifest(format!(
                        "query `{}`: fps must be positive",
                        q.query_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, query_id: &str) -> Option<&QueryRecord> {
        self.queries.iter().find(|q| q.query_id == query_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedSpan {
    pub start_s: f64,
    pub end_s: f64,
    pub final_score: f64,
    pub base_score: f64,
    pub bonus_score: f64,
    pub provenance: Provenance,
}

impl From<&Candidate> for PredictedSpan {
    fn from(c: &Candidate) -> Self {
        Self {
            start_s: c.start_s,
            end_s: c.end_s,
            final_score: c.final_score,
            base_score: c.base_score,
            bonus_score: c.bonus_score,
            provenance: c.provenance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPrediction {
    pub query_id: String,
    pub video_id: String,
    pub predictions: Vec<PredictedSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_queries: Option<QueryTriple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDocument {
    pub schema_version: u32,
    pub tool_version: String,
    pub config_fingerprint: String,
    pub queries: Vec<QueryPrediction>,
}

impl PredictionDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("predictions serialize") + "\n"
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let doc: Self = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Parse(format!("{}: {e}", path.display())))?;
        if doc.schema_version != PREDICTIONS_SCHEMA_VERSION {
            return Err(PipelineError::Parse(format!(
                "{}: unsupported predictions schema_version {}",
                path.display(),
                doc.schema_version
            )));
        }
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        fs::write(path, self.to_json()).map_err(|e| PipelineError::io(path, e))
    }

    pub fn failures(&self) -> usize {
        self.queries.iter().filter(|q| q.error.is_some()).count()
    }
}
