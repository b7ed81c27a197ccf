//! Training-free temporal moment retrieval over per-frame similarity curves.
//!
//! The stages are independent modules: [`signal`] (curves, smoothing, peaks),
//! [`asg`] (adaptive span generation), [`decompose`] (query splitting),
//! [`refine`] (evidence reranking, injection, NMS), [`eval`] (recall@N),
//! [`synthbench`] (synthetic suites) and [`pipeline`] (end-to-end runs).

pub mod asg;
pub mod decompose;
pub mod eval;
pub mod pipeline;
pub mod refine;
pub mod signal;
pub mod synthbench;

pub use asg::{generate_spans, AsgConfig, Candidate, CandidateSet, Provenance};
pub use pipeline::{Mode, Pipeline, PipelineConfig};
pub use refine::{nms, rerank, tiou, RefineConfig, TimeSpan};
pub use signal::{SignalStats, SimilaritySequence};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
