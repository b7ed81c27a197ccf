//! End-to-end orchestration: manifests in, ranked spans and metrics out.

mod config;
mod formats;
mod manifest;
mod plot;
mod run;
mod sweep;

use std::path::Path;

use thiserror::Error;

pub use config::{EndpointConfig, Mode, PipelineConfig};
pub use formats::{decode, encode, read_matrix, write_matrix, FormatError, Matrix, MAGIC, VERSION};
pub use manifest::{
    Manifest, PredictedSpan, PredictionDocument, QueryPrediction, QueryRecord, SignalSource,
    SubQueries, MANIFEST_SCHEMA_VERSION, PREDICTIONS_SCHEMA_VERSION,
};
pub use plot::PlotTable;
pub use run::{
    build_decomposer, evaluate, retrieve, EvaluationOutcome, Pipeline, QueryInspection, Retrieval,
    RetrieveError, TextEncoder,
};
pub use sweep::{sweep, SweepParameter, SweepRow, SweepTable};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("unknown query `{0}`")]
    UnknownQuery(String),
    #[error("query `{query_id}` failed: {message}")]
    Query { query_id: String, message: String },
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error("{0}")]
    Config(String),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
