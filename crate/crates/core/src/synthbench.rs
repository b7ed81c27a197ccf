//! Seeded synthetic similarity curves with planted events.
//!
//! Every bump is a trapezoid whose ramps are 10% of its width, centered on
//! the nominal edges, so the half-amplitude extent equals the nominal span.
//! Values are rounded through `f32` so an in-memory case and its on-disk
//! copy are identical.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::GroundTruth;
use crate::pipeline::{
    write_matrix, Manifest, Matrix, PipelineError, QueryRecord, SignalSource, SubQueries,
};
use crate::refine::TimeSpan;
use crate::signal::{Channel, SimilaritySequence};

pub const BASELINE: f64 = 0.05;
pub const RAMP_FRACTION: f64 = 0.1;
const PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("could not place {count} distractors without overlap")]
    Placement { count: usize },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub center_s: f64,
    pub width_s: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct DistractorSpec {
    pub count: usize,
    pub amplitude: f64,
    pub width_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub duration_s: f64,
    pub fps: f64,
    pub event: EventSpec,
    /// Center of the Q_a bump, as a fraction of the event width from its start.
    pub sub_a_offset: f64,
    /// Center of the Q_b bump, same convention.
    pub sub_b_offset: f64,
    /// Width of each sub-event bump relative to the event width.
    pub sub_width_frac: f64,
    /// Amplitude of the sub-event bumps; the event amplitude when unset.
    pub sub_amplitude: Option<f64>,
    pub noise_sigma: f64,
    pub distractors: DistractorSpec,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            duration_s: 300.0,
            fps: 5.0,
            event: EventSpec {
                center_s: 150.0,
                width_s: 20.0,
                amplitude: 0.5,
            },
            sub_a_offset: 1.0 / 3.0,
            sub_b_offset: 2.0 / 3.0,
            sub_width_frac: 0.9,
            sub_amplitude: None,
            noise_sigma: 0.0,
            distractors: DistractorSpec::default(),
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad(format!(
                "duration_s must be positive, got {}",
                self.duration_s
            ));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if self.num_samples() == 0 {
            return bad("duration shorter than one frame".into());
        }
        let e = &self.event;
        if !(e.width_s.is_finite() && e.width_s > 0.0) {
            return bad(format!("event width must be positive, got {}", e.width_s));
        }
        if !(e.amplitude.is_finite() && e.amplitude > 0.0) {
            return bad(format!(
                "event amplitude must be positive, got {}",
                e.amplitude
            ));
        }
        let (lo, hi) = support(e.center_s, e.width_s);
        if !(lo >= 0.0 && hi <= self.duration_s) {
            return bad(format!(
                "event support [{lo}, {hi}] leaves [0, {}]",
                self.duration_s
            ));
        }
        for (name, v) in [
            ("sub_a_offset", self.sub_a_offset),
            ("sub_b_offset", self.sub_b_offset),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.sub_width_frac.is_finite() && self.sub_width_frac > 0.0) {
            return bad(format!(
                "sub_width_frac must be positive, got {}",
                self.sub_width_frac
            ));
        }
        if let Some(a) = self.sub_amplitude {
            if !(a.is_finite() && a >= 0.0) {
                return bad(format!("sub_amplitude must be non-negative, got {a}"));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!(
                "noise_sigma must be non-negative, got {}",
                self.noise_sigma
            ));
        }
        let d = &self.distractors;
        if d.count > 0 {
            if !(d.width_s.is_finite() && d.width_s > 0.0) {
                return bad(format!(
                    "distractor width must be positive, got {}",
                    d.width_s
                ));
            }
            if !(d.amplitude.is_finite() && d.amplitude >= 0.0) {
                return bad(format!(
                    "distractor amplitude must be non-negative, got {}",
                    d.amplitude
                ));
            }
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        (self.duration_s * self.fps).round() as usize
    }

    pub fn ground_truth(&self) -> TimeSpan {
        let half = self.event.width_s / 2.0;
        TimeSpan::new(self.event.center_s - half, self.event.center_s + half)
    }

    fn event_start(&self) -> f64 {
        self.event.center_s - self.event.width_s / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCase {
    pub id: String,
    pub raw_o: SimilaritySequence,
    pub raw_a: SimilaritySequence,
    pub raw_b: SimilaritySequence,
    pub gt: GroundTruth,
    pub spec: SynthSpec,
    /// Centers of the distractor bumps, in seconds.
    pub distractor_centers: Vec<f64>,
}

/// Outer extent of a trapezoid with nominal width `w`.
fn support(center: f64, width: f64) -> (f64, f64) {
    let half = width * (1.0 + RAMP_FRACTION) / 2.0;
    (center - half, center + half)
}

/// Trapezoid value in `[0, 1]` at time `t`.
pub fn trapezoid(t: f64, center: f64, width: f64) -> f64 {
    let ramp = width * RAMP_FRACTION;
    let top_half = (width - ramp) / 2.0;
    let d = (t - center).abs();
    if d <= top_half {
        1.0
    } else if d >= top_half + ramp {
        0.0
    } else {
        1.0 - (d - top_half) / ramp
    }
}

fn frame_time(i: usize, fps: f64) -> f64 {
    (i as f64 + 0.5) / fps
}

fn place_distractors(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, SynthError> {
    let d = &spec.distractors;
    if d.count == 0 {
        return Ok(Vec::new());
    }
    let gap = d.width_s.max(spec.event.width_s) * 0.5;
    let mut taken = vec![support(spec.event.center_s, spec.event.width_s)];
    let (lo, hi) = {
        let (l, h) = support(0.0, d.width_s);
        (-l, spec.duration_s - h)
    };
    if !(hi > lo) {
        return Err(SynthError::Placement { count: d.count });
    }
    let mut centers = Vec::with_capacity(d.count);
    let mut attempts = 0;
    while centers.len() < d.count {
        attempts += 1;
        if attempts > PLACEMENT_ATTEMPTS {
            return Err(SynthError::Placement { count: d.count });
        }
        let c = rng.random_range(lo..hi);
        let (a, b) = support(c, d.width_s);
        if taken.iter().all(|&(x, y)| b + gap <= x || a >= y + gap) {
            taken.push((a, b));
            centers.push(c);
        }
    }
    Ok(centers)
}

fn to_f32_precision(v: f64) -> f64 {
    f64::from(v as f32)
}

pub fn generate_case(spec: &SynthSpec) -> Result<SynthCase, SynthError> {
    generate_case_with_id(spec, format!("synth-seed{}", spec.seed))
}

pub fn generate_case_with_id(
    spec: &SynthSpec,
    id: impl Into<String>,
) -> Result<SynthCase, SynthError> {
    spec.validate()?;
    let id = id.into();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let distractor_centers = place_distractors(spec, &mut rng)?;

    let n = spec.num_samples();
    let fps = spec.fps;
    let e = spec.event;
    let start = spec.event_start();
    let sub_w = e.width_s * spec.sub_width_frac;
    let sub_amp = spec.sub_amplitude.unwrap_or(e.amplitude);
    let center_a = start + spec.sub_a_offset * e.width_s;
    let center_b = start + spec.sub_b_offset * e.width_s;

    let mut o = vec![BASELINE; n];
    let mut a = vec![BASELINE; n];
    let mut b = vec![BASELINE; n];
    for i in 0..n {
        let t = frame_time(i, fps);
        o[i] += e.amplitude * trapezoid(t, e.center_s, e.width_s);
        for &c in &distractor_centers {
            o[i] += spec.distractors.amplitude * trapezoid(t, c, spec.distractors.width_s);
        }
        a[i] += sub_amp * trapezoid(t, center_a, sub_w);
        b[i] += sub_amp * trapezoid(t, center_b, sub_w);
    }
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
        for channel in [&mut o, &mut a, &mut b] {
            for v in channel.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
    }
    let seq = |values: Vec<f64>, channel| {
        let values = values.into_iter().map(to_f32_precision).collect();
        SimilaritySequence::new(values, fps, id.clone(), channel)
            .map_err(|e| SynthError::InvalidSpec(e.to_string()))
    };
    Ok(SynthCase {
        raw_o: seq(o, Channel::Original)?,
        raw_a: seq(a, Channel::SubA)?,
        raw_b: seq(b, Channel::SubB)?,
        gt: GroundTruth {
            query_id: id.clone(),
            span: spec.ground_truth(),
        },
        spec: spec.clone(),
        distractor_centers,
        id,
    })
}

/// Inclusive-exclusive sampling interval; `lo == hi` pins the value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn fixed(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..self.hi)
        } else {
            self.lo
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRanges {
    pub fps: f64,
    pub duration_s: Range,
    pub width_s: Range,
    pub amplitude: Range,
    pub noise_sigma: Range,
    /// Fraction of cases generated without noise.
    pub noiseless_share: f64,
    pub distractor_count: usize,
    pub distractor_amplitude: Range,
    pub distractor_width_s: Range,
    pub sub_amplitude: Option<Range>,
}

impl SuiteRanges {
    /// Single events over moderate noise, no distractors.
    pub fn clean() -> Self {
        Self {
            fps: 5.0,
            duration_s: Range::new(300.0, 1200.0),
            width_s: Range::new(8.0, 40.0),
            amplitude: Range::new(0.3, 0.6),
            noise_sigma: Range::new(0.0, 0.05),
            noiseless_share: 0.25,
            distractor_count: 0,
            distractor_amplitude: Range::fixed(0.0),
            distractor_width_s: Range::fixed(10.0),
            sub_amplitude: None,
        }
    }

    /// Many strong distractors in the original-query curve; the sub-query
    /// curves only respond at the true event.
    pub fn saturation() -> Self {
        Self {
            fps: 5.0,
            duration_s: Range::new(1200.0, 1800.0),
            width_s: Range::new(10.0, 30.0),
            amplitude: Range::new(0.5, 0.6),
            noise_sigma: Range::fixed(0.02),
            noiseless_share: 0.0,
            distractor_count: 20,
            distractor_amplitude: Range::fixed(0.9),
            distractor_width_s: Range::new(10.0, 20.0),
            sub_amplitude: Some(Range::fixed(0.6)),
        }
    }

    /// A weak original-query response next to moderate distractors, with
    /// strong sub-query evidence.
    pub fn discrepancy() -> Self {
        Self {
            fps: 5.0,
            duration_s: Range::new(600.0, 1200.0),
            width_s: Range::new(10.0, 30.0),
            amplitude: Range::new(0.15, 0.25),
            noise_sigma: Range::fixed(0.02),
            noiseless_share: 0.0,
            distractor_count: 12,
            distractor_amplitude: Range::new(0.35, 0.5),
            distractor_width_s: Range::new(10.0, 20.0),
            sub_amplitude: Some(Range::new(0.6, 0.7)),
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "clean" => Some(Self::clean()),
            "saturation" => Some(Self::saturation()),
            "discrepancy" => Some(Self::discrepancy()),
            _ => None,
        }
    }

    fn sample_spec(&self, rng: &mut ChaCha8Rng, case_seed: u64) -> SynthSpec {
        let duration_s = self.duration_s.sample(rng);
        let width_s = self.width_s.sample(rng);
        let amplitude = self.amplitude.sample(rng);
        let noiseless = rng.random_bool(self.noiseless_share.clamp(0.0, 1.0));
        let noise_sigma = if noiseless {
            0.0
        } else {
            self.noise_sigma.sample(rng)
        };
        let (lo, hi) = support(0.0, width_s);
        let center_s = Range::new(-lo, duration_s - hi).sample(rng);
        SynthSpec {
            duration_s,
            fps: self.fps,
            event: EventSpec {
                center_s,
                width_s,
                amplitude,
            },
            noise_sigma,
            distractors: DistractorSpec {
                count: self.distractor_count,
                amplitude: self.distractor_amplitude.sample(rng),
                width_s: self.distractor_width_s.sample(rng),
            },
            sub_amplitude: self.sub_amplitude.map(|r| r.sample(rng)),
            seed: case_seed,
            ..SynthSpec::default()
        }
    }
}

pub fn case_id(i: usize) -> String {
    format!("synth-{i:04}")
}

pub fn generate_suite(
    n_cases: usize,
    ranges: &SuiteRanges,
    seed: u64,
) -> Result<Vec<SynthCase>, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_cases)
        .map(|i| {
            let case_seed = rng.random::<u64>();
            let spec = ranges.sample_spec(&mut rng, case_seed);
            generate_case_with_id(&spec, case_id(i))
        })
        .collect()
}

/// Manifest entry for a case whose curves live under `signals/`.
pub fn manifest_record(case: &SynthCase) -> QueryRecord {
    let file = |suffix: &str| PathBuf::from("signals").join(format!("{}_{suffix}.p2sf", case.id));
    QueryRecord {
        query_id: case.id.clone(),
        video_id: case.id.clone(),
        query_text: "a synthetic event happens".into(),
        fps: Some(case.spec.fps),
        sub_queries: Some(SubQueries {
            sub_a: "the event begins".into(),
            sub_b: "the event ends".into(),
        }),
        ground_truth: Some([case.gt.span.start_s, case.gt.span.end_s]),
        source: SignalSource::Similarity {
            original: file("o"),
            sub_a: Some(file("a")),
            sub_b: Some(file("b")),
        },
    }
}

/// Writes `manifest.json`, `specs.json` and one signal file per channel.
/// Returns the manifest path.
pub fn write_suite(cases: &[SynthCase], dir: &Path) -> Result<PathBuf, SynthError> {
    let signals = dir.join("signals");
    std::fs::create_dir_all(&signals).map_err(|e| PipelineError::io(&signals, e))?;
    let mut records = Vec::with_capacity(cases.len());
    for case in cases {
        let record = manifest_record(case);
        let SignalSource::Similarity {
            original,
            sub_a: Some(sub_a),
            sub_b: Some(sub_b),
        } = &record.source
        else {
            unreachable!("manifest_record always writes similarity sources");
        };
        for (rel, seq) in [
            (original, &case.raw_o),
            (sub_a, &case.raw_a),
            (sub_b, &case.raw_b),
        ] {
            write_matrix(&dir.join(rel), &Matrix::column(seq.values()))
                .map_err(PipelineError::from)?;
        }
        records.push(record);
    }
    let specs: Vec<(&str, &SynthSpec)> = cases.iter().map(|c| (c.id.as_str(), &c.spec)).collect();
    let specs_path = dir.join("specs.json");
    let json = serde_json::to_string_pretty(&specs).expect("specs serialize");
    std::fs::write(&specs_path, json).map_err(|e| PipelineError::io(&specs_path, e))?;

    let manifest_path = dir.join("manifest.json");
    Manifest::new(records).save(&manifest_path)?;
    Ok(manifest_path)
}
