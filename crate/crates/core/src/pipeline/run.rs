use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use thiserror::Error;

use super::config::{Mode, PipelineConfig};
use super::formats::{read_matrix, Matrix};
use super::manifest::{
    Manifest, PredictedSpan, PredictionDocument, QueryPrediction, QueryRecord, SignalSource,
    PREDICTIONS_SCHEMA_VERSION,
};
use super::PipelineError;
use crate::asg::{
    generate_spans, generate_spans_traced, AsgConfig, AsgError, CandidateSet, SetChannel, SpanTrace,
};
use crate::decompose::{
    Backend, DecomposeCache, DecomposeError, Decomposer, HttpChatTransport, LlmDecomposer,
    LlmSettings, QueryTriple,
};
use crate::eval::{
    metrics_report, EvalOptions, GroundTruth, MetricsReport, Predictions, DEFAULT_KS, DEFAULT_NS,
};
use crate::refine::{
    inject, nms, pool, rerank, union_regions, Evidence, RefineConfig, RefineError, RegionSet,
    TimeSpan,
};
use crate::signal::{cosine_similarity_sequence, Channel, SignalError, SimilaritySequence};

/// Environment variable holding the endpoint bearer token.
pub const API_KEY_ENV: &str = "SPANSCOUT_API_KEY";

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("mode `{0}` needs sub-query evidence channels")]
    MissingEvidence(&'static str),
    #[error("channel lengths differ: original {original}, sub_a {sub_a}, sub_b {sub_b}")]
    LengthMismatch {
        original: usize,
        sub_a: usize,
        sub_b: usize,
    },
    #[error(transparent)]
    Asg(#[from] AsgError),
    #[error(transparent)]
    Refine(#[from] RefineError),
}

/// Every intermediate set produced for one query.
#[derive(Debug, Clone)]
pub struct Retrieval {
    /// Span generation over the original channel.
    pub trace: SpanTrace,
    pub p_o: CandidateSet,
    pub reranked: Option<CandidateSet>,
    pub p_a: Option<CandidateSet>,
    pub p_b: Option<CandidateSet>,
    pub regions: RegionSet,
    pub injected: CandidateSet,
    pub final_set: CandidateSet,
}

/// Run span generation and the refinement stages selected by `mode`.
pub fn retrieve(
    raw_o: &SimilaritySequence,
    evidence: Option<Evidence<'_>>,
    asg: &AsgConfig,
    refine: &RefineConfig,
    mode: Mode,
) -> Result<Retrieval, RetrieveError> {
    let trace = generate_spans_traced(raw_o, asg, None, None)?;
    let p_o = trace.set.clone();
    let global_stats = p_o
        .signal_stats
        .expect("span generation always records statistics");

    let evidence = match (mode.needs_evidence(), evidence) {
        (false, _) => None,
        (true, None) => return Err(RetrieveError::MissingEvidence(mode.as_str())),
        (true, Some(ev)) => {
            if ev.sub_a.len() != raw_o.len() || ev.sub_b.len() != raw_o.len() {
                return Err(RetrieveError::LengthMismatch {
                    original: raw_o.len(),
                    sub_a: ev.sub_a.len(),
                    sub_b: ev.sub_b.len(),
                });
            }
            Some(ev)
        }
    };

    let reranked = match (mode, evidence) {
        (Mode::AsgEr | Mode::Full, Some(ev)) => Some(rerank(&p_o, ev, refine.beta)?),
        _ => None,
    };

    let (p_a, p_b, regions, injected) = match (mode, evidence) {
        (Mode::AsgEi | Mode::Full, Some(ev)) => {
            let p_a = generate_spans(ev.sub_a, asg, None, None)?;
            let p_b = generate_spans(ev.sub_b, asg, None, None)?;
            let regions = union_regions(&p_a, &p_b);
            let injected = inject(raw_o, &regions, global_stats, asg, ev, refine)?;
            (Some(p_a), Some(p_b), regions, injected)
        }
        _ => (
            None,
            None,
            RegionSet::default(),
            CandidateSet::empty(SetChannel::Injected, Some(global_stats)),
        ),
    };

    let ranked = reranked.as_ref().unwrap_or(&p_o);
    let pooled = pool(ranked, &injected, SetChannel::Final);
    let final_set = nms(&pooled, refine.nms_tiou, refine.top_k);

    Ok(Retrieval {
        trace,
        p_o,
        reranked,
        p_a,
        p_b,
        regions,
        injected,
        final_set,
    })
}

/// Turns sub-query text into an embedding comparable with frame features.
pub trait TextEncoder: Send + Sync {
    fn encode(&self, text: &str) -> Result<Vec<f32>, String>;
}

/// Loaded matrices keyed by resolved path; read-only during a run.
struct SignalStore {
    matrices: HashMap<PathBuf, Arc<Matrix>>,
}

impl SignalStore {
    fn load<'a>(records: impl IntoIterator<Item = &'a QueryRecord>) -> Result<Self, PipelineError> {
        let mut matrices = HashMap::new();
        for record in records {
            for path in record.source.paths() {
                if !matrices.contains_key(path) {
                    let m = read_matrix(path)?;
                    matrices.insert(path.to_path_buf(), Arc::new(m));
                }
            }
        }
        Ok(Self { matrices })
    }

    fn get(&self, path: &Path) -> &Matrix {
        &self.matrices[path]
    }
}

/// Signals and results for one query, kept for inspection and plotting.
#[derive(Debug, Clone)]
pub struct QueryInspection {
    pub record: QueryRecord,
    pub raw_o: SimilaritySequence,
    pub raw_a: Option<SimilaritySequence>,
    pub raw_b: Option<SimilaritySequence>,
    pub sub_queries: Option<QueryTriple>,
    pub retrieval: Retrieval,
}

impl QueryInspection {
    pub fn ground_truth(&self) -> Option<TimeSpan> {
        self.record.ground_truth.map(|[s, e]| TimeSpan::new(s, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationOutcome {
    pub report: MetricsReport,
    /// Manifest queries without ground truth, left out of every metric.
    pub excluded_without_gt: usize,
    /// Queries whose run recorded an error (scored as misses).
    pub failed_queries: usize,
}

/// Build the decomposition backend named by `config`; `provided` yields
/// `None`. The `llm` backend reads its bearer token from `SPANSCOUT_API_KEY`.
pub fn build_decomposer(config: &PipelineConfig) -> Result<Option<Decomposer>, PipelineError> {
    Ok(match config.decompose_backend {
        Backend::Provided => None,
        Backend::Naive => Some(Decomposer::Naive),
        Backend::Rule => Some(Decomposer::Rule),
        Backend::Llm => {
            let ep = &config.endpoint;
            let transport = HttpChatTransport::new(
                &ep.base_url,
                std::env::var(API_KEY_ENV).ok(),
                Duration::from_secs_f64(ep.timeout_s),
            );
            let cache = match &config.cache_dir {
                Some(dir) => {
                    DecomposeCache::open(dir).map_err(|e| PipelineError::Config(e.to_string()))?
                }
                None => DecomposeCache::in_memory(),
            };
            let settings = LlmSettings {
                model: ep.model.clone(),
                retries: ep.retries,
                max_in_flight: ep.max_in_flight,
            };
            Some(Decomposer::Llm(LlmDecomposer::new(
                Box::new(transport),
                settings,
                cache,
            )))
        }
    })
}

pub struct Pipeline {
    config: PipelineConfig,
    decomposer: Option<Decomposer>,
    encoder: Option<Box<dyn TextEncoder>>,
}

impl Pipeline {
    /// Builds the configured decomposition backend.
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        let decomposer = build_decomposer(&config)?;
        Ok(Self {
            config,
            decomposer,
            encoder: None,
        })
    }

    pub fn with_decomposer(mut self, decomposer: Decomposer) -> Self {
        self.decomposer = Some(decomposer);
        self
    }

    pub fn with_encoder(mut self, encoder: Box<dyn TextEncoder>) -> Self {
        self.encoder = Some(encoder);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Process every query, `config.parallelism` at a time. Output order
    /// follows the manifest. Per-query failures are recorded in the
    /// document; unreadable input files abort the run.
    pub fn run(&self, manifest: &Manifest) -> Result<PredictionDocument, PipelineError> {
        let store = SignalStore::load(&manifest.queries)?;
        let threads = self.config.parallelism.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
        let queries = pool.install(|| {
            manifest
                .queries
                .par_iter()
                .map(|record| self.predict(record, &store))
                .collect::<Vec<_>>()
        });
        Ok(PredictionDocument {
            schema_version: PREDICTIONS_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_fingerprint: self.config.fingerprint(),
            queries,
        })
    }

    /// Full intermediate state for a single query.
    pub fn inspect(
        &self,
        manifest: &Manifest,
        query_id: &str,
    ) -> Result<QueryInspection, PipelineError> {
        let record = manifest
            .get(query_id)
            .ok_or_else(|| PipelineError::UnknownQuery(query_id.to_string()))?;
        let store = SignalStore::load(std::iter::once(record))?;
        self.compute(record, &store)
            .map_err(|message| PipelineError::Query {
                query_id: query_id.to_string(),
                message,
            })
    }

    fn predict(&self, record: &QueryRecord, store: &SignalStore) -> QueryPrediction {
        let mut out = QueryPrediction {
            query_id: record.query_id.clone(),
            video_id: record.video_id.clone(),
            predictions: Vec::new(),
            sub_queries: None,
            error: None,
        };
        match self.compute(record, store) {
            Ok(insp) => {
                out.predictions = insp
                    .retrieval
                    .final_set
                    .candidates
                    .iter()
                    .map(PredictedSpan::from)
                    .collect();
                out.sub_queries = insp.sub_queries;
            }
            Err(message) => {
                log::warn!("query {}: {message}", record.query_id);
                out.error = Some(message);
            }
        }
        out
    }

    fn compute(
        &self,
        record: &QueryRecord,
        store: &SignalStore,
    ) -> Result<QueryInspection, String> {
        let fps = record.fps.unwrap_or(self.config.fps);
        let video = record.video_id.as_str();
        let mut sub_queries = None;

        let (raw_o, raw_a, raw_b) = match &record.source {
            SignalSource::Similarity {
                original,
                sub_a,
                sub_b,
            } => {
                let curve = |path: &Path, channel| {
                    similarity_from(store.get(path), path, fps, video, channel)
                };
                let raw_o = curve(original, Channel::Original)?;
                let (raw_a, raw_b) = match (sub_a, sub_b) {
                    (Some(a), Some(b)) if self.config.mode.needs_evidence() => (
                        Some(curve(a, Channel::SubA)?),
                        Some(curve(b, Channel::SubB)?),
                    ),
                    _ => (None, None),
                };
                (raw_o, raw_a, raw_b)
            }
            SignalSource::Embeddings {
                frames,
                query,
                sub_a,
                sub_b,
            } => {
                let frames_m = store.get(frames);
                let embed = |q: &[f32], channel| {
                    cosine_similarity_sequence(&frames_m.data, frames_m.dim, q, fps, video, channel)
                        .map_err(|e: SignalError| format!("{}: {e}", frames.display()))
                };
                let q = single_row(store.get(query), query)?;
                let raw_o = embed(q, Channel::Original)?;
                let mut evidence = (None, None);
                if self.config.mode.needs_evidence() {
                    if let (Some(a), Some(b)) = (sub_a, sub_b) {
                        let qa = single_row(store.get(a), a)?;
                        let qb = single_row(store.get(b), b)?;
                        evidence = (
                            Some(embed(qa, Channel::SubA)?),
                            Some(embed(qb, Channel::SubB)?),
                        );
                    } else if let Some(encoder) = &self.encoder {
                        let triple = self.sub_queries_for(record)?;
                        let ea = encoder.encode(&triple.sub_a)?;
                        let eb = encoder.encode(&triple.sub_b)?;
                        evidence = (
                            Some(embed(&ea, Channel::SubA)?),
                            Some(embed(&eb, Channel::SubB)?),
                        );
                        sub_queries = Some(triple);
                    }
                }
                (raw_o, evidence.0, evidence.1)
            }
        };

        let evidence = match (&raw_a, &raw_b) {
            (Some(a), Some(b)) => Some(Evidence { sub_a: a, sub_b: b }),
            _ => None,
        };
        let retrieval = retrieve(
            &raw_o,
            evidence,
            &self.config.asg,
            &self.config.refine,
            self.config.mode,
        )
        .map_err(|e| e.to_string())?;

        Ok(QueryInspection {
            record: record.clone(),
            raw_o,
            raw_a,
            raw_b,
            sub_queries,
            retrieval,
        })
    }

    fn sub_queries_for(&self, record: &QueryRecord) -> Result<QueryTriple, String> {
        if let Some(sq) = &record.sub_queries {
            return Ok(QueryTriple {
                original: record.query_text.clone(),
                sub_a: sq.sub_a.clone(),
                sub_b: sq.sub_b.clone(),
                backend: Backend::Provided,
            });
        }
        match &self.decomposer {
            Some(d) => d
                .decompose(&record.query_text)
                .map_err(|e: DecomposeError| e.to_string()),
            None => Err("no sub-queries in the manifest and no decomposition backend".into()),
        }
    }
}

fn similarity_from(
    m: &Matrix,
    path: &Path,
    fps: f64,
    video: &str,
    channel: Channel,
) -> Result<SimilaritySequence, String> {
    if m.dim != 1 {
        return Err(format!(
            "{}: similarity file must have one column, found {}",
            path.display(),
            m.dim
        ));
    }
    SimilaritySequence::new(m.as_vector(), fps, video, channel)
        .map_err(|e| format!("{}: {e}", path.display()))
}

fn single_row<'m>(m: &'m Matrix, path: &Path) -> Result<&'m [f32], String> {
    if m.rows != 1 {
        return Err(format!(
            "{}: query embedding must have exactly one row, found {}",
            path.display(),
            m.rows
        ));
    }
    Ok(m.row(0))
}

/// Join predictions with the manifest's ground truth and score them at the
/// standard `N in {1, 5}`, `K in {0.1, 0.3, 0.5}` cells.
pub fn evaluate(
    doc: &PredictionDocument,
    manifest: &Manifest,
) -> Result<EvaluationOutcome, PipelineError> {
    let mut gts = Vec::new();
    let mut excluded = 0;
    for q in &manifest.queries {
        match q.ground_truth {
            Some([s, e]) => gts.push(GroundTruth {
                query_id: q.query_id.clone(),
                span: TimeSpan::new(s, e),
            }),
            None => excluded += 1,
        }
    }
    if excluded > 0 {
        log::warn!("{excluded} queries have no ground truth and are excluded");
    }
    let mut predictions = Predictions::new();
    for q in &doc.queries {
        let record = manifest
            .get(&q.query_id)
            .ok_or_else(|| PipelineError::UnknownQuery(q.query_id.clone()))?;
        if record.ground_truth.is_some() {
            predictions.insert(
                q.query_id.clone(),
                q.predictions
                    .iter()
                    .map(|p| TimeSpan::new(p.start_s, p.end_s))
                    .collect(),
            );
        }
    }
    let report = metrics_report(
        &predictions,
        &gts,
        &DEFAULT_NS,
        &DEFAULT_KS,
        EvalOptions::default(),
    )?;
    Ok(EvaluationOutcome {
        report,
        excluded_without_gt: excluded,
        failed_queries: doc.failures(),
    })
}
