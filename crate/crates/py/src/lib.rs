//! Python bindings. Curves cross the boundary as lists of floats, spans as
//! `(start_s, end_s)` tuples.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use spanscout::decompose::{naive_split as core_naive, rule_split as core_rule, QueryTriple};
use spanscout::eval::{metrics_report, EvalOptions, GroundTruth, DEFAULT_KS, DEFAULT_NS};
use spanscout::pipeline::{retrieve as core_retrieve, Manifest};
use spanscout::refine::Evidence;
use spanscout::signal::{self, Channel};
use spanscout::synthbench::{self, DistractorSpec, EventSpec, SynthSpec};
use spanscout::{AsgConfig, Mode, Pipeline, PipelineConfig, RefineConfig, SimilaritySequence, TimeSpan};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sequence(values: Vec<f64>, fps: f64, channel: Channel) -> PyResult<SimilaritySequence> {
    SimilaritySequence::new(values, fps, "py", channel).map_err(err)
}

/// A scored span.
#[pyclass(frozen, get_all, skip_from_py_object, module = "spanscout")]
#[derive(Clone)]
struct Candidate {
    start_s: f64,
    end_s: f64,
    start_idx: usize,
    end_idx: usize,
    base_score: f64,
    bonus_score: f64,
    final_score: f64,
    provenance: String,
    peak_idx: usize,
}

#[pymethods]
impl Candidate {
    fn __repr__(&self) -> String {
        format!(
            "Candidate({:.2}s..{:.2}s, final={:.4}, {})",
            self.start_s, self.end_s, self.final_score, self.provenance
        )
    }
}

impl From<&spanscout::Candidate> for Candidate {
    fn from(c: &spanscout::Candidate) -> Self {
        Self {
            start_s: c.start_s,
            end_s: c.end_s,
            start_idx: c.start_idx,
            end_idx: c.end_idx,
            base_score: c.base_score,
            bonus_score: c.bonus_score,
            final_score: c.final_score,
            provenance: format!("{:?}", c.provenance).to_lowercase(),
            peak_idx: c.peak_idx,
        }
    }
}

#[pyfunction]
fn adaptive_ratio(sigma: f64) -> PyResult<f64> {
    signal::adaptive_ratio(sigma).map_err(err)
}

#[pyfunction]
fn smoothing_window(fps: f64, tau_r: f64) -> usize {
    signal::smoothing_window(fps, tau_r)
}

#[pyfunction]
fn moving_average(values: Vec<f64>, window: usize) -> PyResult<Vec<f64>> {
    let seq = sequence(values, 1.0, Channel::Original)?;
    Ok(signal::moving_average(&seq, window).into_values())
}

/// `(index, height, prominence)` per peak, by index.
#[pyfunction]
#[pyo3(signature = (values, distance = 1, prominence_min = 0.0))]
fn find_peaks(values: Vec<f64>, distance: usize, prominence_min: f64) -> PyResult<Vec<(usize, f64, f64)>> {
    let seq = sequence(values, 1.0, Channel::Original)?;
    Ok(signal::find_peaks(&seq, distance, prominence_min)
        .into_iter()
        .map(|p| (p.index, p.height, p.prominence))
        .collect())
}

fn asg_config(prominence_min: f64, min_distance_s: f64, normalization: bool) -> AsgConfig {
    AsgConfig {
        prominence_min,
        min_distance_s,
        normalization,
    }
}

#[pyfunction]
#[pyo3(signature = (values, fps = 5.0, prominence_min = 0.05, min_distance_s = 1.0, normalization = false))]
fn generate_spans(
    values: Vec<f64>,
    fps: f64,
    prominence_min: f64,
    min_distance_s: f64,
    normalization: bool,
) -> PyResult<Vec<Candidate>> {
    let seq = sequence(values, fps, Channel::Original)?;
    let config = asg_config(prominence_min, min_distance_s, normalization);
    let set = spanscout::generate_spans(&seq, &config, None, None).map_err(err)?;
    Ok(set.candidates.iter().map(Candidate::from).collect())
}

#[pyfunction]
fn tiou(a: (f64, f64), b: (f64, f64)) -> PyResult<f64> {
    spanscout::tiou(TimeSpan::new(a.0, a.1), TimeSpan::new(b.0, b.1)).map_err(err)
}

fn pair(t: QueryTriple) -> (String, String) {
    (t.sub_a, t.sub_b)
}

#[pyfunction]
fn naive_split(query: &str) -> PyResult<(String, String)> {
    core_naive(query).map(pair).map_err(err)
}

#[pyfunction]
fn rule_split(query: &str) -> PyResult<(String, String)> {
    core_rule(query).map(pair).map_err(err)
}

/// Ranked spans for one query. `s_a` and `s_b` are required by every mode
/// except `asg_only`.
#[pyfunction]
#[pyo3(signature = (
    s_o, s_a = None, s_b = None, fps = 5.0, mode = "full", prominence_min = 0.05,
    min_distance_s = 1.0, normalization = false, beta = 0.5, nms_tiou = 0.8, top_k = 10
))]
#[allow(clippy::too_many_arguments)]
fn retrieve(
    s_o: Vec<f64>,
    s_a: Option<Vec<f64>>,
    s_b: Option<Vec<f64>>,
    fps: f64,
    mode: &str,
    prominence_min: f64,
    min_distance_s: f64,
    normalization: bool,
    beta: f64,
    nms_tiou: f64,
    top_k: usize,
) -> PyResult<Vec<Candidate>> {
    let mode: Mode = mode.parse().map_err(err)?;
    let raw_o = sequence(s_o, fps, Channel::Original)?;
    let sub_a = s_a.map(|v| sequence(v, fps, Channel::SubA)).transpose()?;
    let sub_b = s_b.map(|v| sequence(v, fps, Channel::SubB)).transpose()?;
    let evidence = match (&sub_a, &sub_b) {
        (Some(sub_a), Some(sub_b)) => Some(Evidence { sub_a, sub_b }),
        _ => None,
    };
    let refine = RefineConfig {
        beta,
        nms_tiou,
        top_k,
        ..RefineConfig::default()
    };
    let asg = asg_config(prominence_min, min_distance_s, normalization);
    let r = core_retrieve(&raw_o, evidence, &asg, &refine, mode).map_err(err)?;
    Ok(r.final_set.candidates.iter().map(Candidate::from).collect())
}

/// Recall table over `{query_id: [(start, end), ...]}` predictions and
/// `{query_id: (start, end)}` ground truth. Keys are labels like `R1@0.5`
/// plus `average`.
#[pyfunction]
fn metrics(
    predictions: BTreeMap<String, Vec<(f64, f64)>>,
    ground_truth: BTreeMap<String, (f64, f64)>,
) -> PyResult<BTreeMap<String, f64>> {
    let preds = predictions
        .into_iter()
        .map(|(k, v)| (k, v.into_iter().map(|(s, e)| TimeSpan::new(s, e)).collect()))
        .collect();
    let gts: Vec<GroundTruth> = ground_truth
        .into_iter()
        .map(|(query_id, (s, e))| GroundTruth {
            query_id,
            span: TimeSpan::new(s, e),
        })
        .collect();
    let report = metrics_report(&preds, &gts, &DEFAULT_NS, &DEFAULT_KS, EvalOptions::default()).map_err(err)?;
    let mut out: BTreeMap<String, f64> = report.cells.iter().map(|c| (c.label(), c.recall)).collect();
    out.insert("average".into(), report.average);
    Ok(out)
}

/// One synthetic case as a dict with `s_o`, `s_a`, `s_b`, `fps` and `gt`.
#[pyfunction]
#[pyo3(signature = (
    seed = 0, duration_s = 300.0, fps = 5.0, center_s = 150.0, width_s = 20.0, amplitude = 0.5,
    noise_sigma = 0.0, distractors = 0, distractor_amplitude = 0.0, distractor_width_s = 10.0
))]
#[allow(clippy::too_many_arguments)]
fn synth_case(
    py: Python<'_>,
    seed: u64,
    duration_s: f64,
    fps: f64,
    center_s: f64,
    width_s: f64,
    amplitude: f64,
    noise_sigma: f64,
    distractors: usize,
    distractor_amplitude: f64,
    distractor_width_s: f64,
) -> PyResult<Py<PyAny>> {
    let spec = SynthSpec {
        duration_s,
        fps,
        event: EventSpec {
            center_s,
            width_s,
            amplitude,
        },
        noise_sigma,
        distractors: DistractorSpec {
            count: distractors,
            amplitude: distractor_amplitude,
            width_s: distractor_width_s,
        },
        seed,
        ..SynthSpec::default()
    };
    let case = synthbench::generate_case(&spec).map_err(err)?;
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("id", &case.id)?;
    dict.set_item("s_o", case.raw_o.values())?;
    dict.set_item("s_a", case.raw_a.values())?;
    dict.set_item("s_b", case.raw_b.values())?;
    dict.set_item("fps", fps)?;
    dict.set_item("gt", (case.gt.span.start_s, case.gt.span.end_s))?;
    dict.set_item("distractor_centers", case.distractor_centers)?;
    Ok(dict.into_any().unbind())
}

/// Run a manifest end to end; returns the prediction document as JSON.
/// `config_json` overrides the defaults when given.
#[pyfunction]
#[pyo3(signature = (manifest_path, config_json = None))]
fn run_manifest(py: Python<'_>, manifest_path: PathBuf, config_json: Option<&str>) -> PyResult<String> {
    let config: PipelineConfig = match config_json {
        Some(text) => serde_json::from_str(text).map_err(err)?,
        None => PipelineConfig::default(),
    };
    py.detach(|| {
        let manifest = Manifest::load(&manifest_path)?;
        Pipeline::new(config)?.run(&manifest).map(|doc| doc.to_json())
    })
    .map_err(err)
}

/// Default pipeline configuration as JSON.
#[pyfunction]
fn default_config() -> String {
    PipelineConfig::default().to_json()
}

#[pymodule]
#[pyo3(name = "spanscout")]
fn spanscout_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Candidate>()?;
    m.add_function(wrap_pyfunction!(adaptive_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(smoothing_window, m)?)?;
    m.add_function(wrap_pyfunction!(moving_average, m)?)?;
    m.add_function(wrap_pyfunction!(find_peaks, m)?)?;
    m.add_function(wrap_pyfunction!(generate_spans, m)?)?;
    m.add_function(wrap_pyfunction!(tiou, m)?)?;
    m.add_function(wrap_pyfunction!(naive_split, m)?)?;
    m.add_function(wrap_pyfunction!(rule_split, m)?)?;
    m.add_function(wrap_pyfunction!(retrieve, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(synth_case, m)?)?;
    m.add_function(wrap_pyfunction!(run_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add("__version__", spanscout::VERSION)?;
    Ok(())
}
