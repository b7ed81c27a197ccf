//! Adaptive span generation: turns a similarity curve into scored spans.
//!
//! The curve is smoothed with a window derived from its own variability,
//! peaks are detected on the smoothed curve, and each peak grows outward
//! while the smoothed value stays strictly above `height * tau_r`.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{
    find_peaks_values, min_distance_samples, moving_average_values, IndexRange, Peak, SignalError,
    SignalStats, SimilaritySequence,
};

#[derive(Debug, Error, PartialEq)]
pub enum AsgError {
    #[error("peak at index {index} has non-positive height {height}")]
    NonPositivePeak { index: usize, height: f64 },
    #[error("peak index {index} lies outside bounds [{start}, {end}]")]
    PeakOutOfBounds {
        index: usize,
        start: usize,
        end: usize,
    },
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    Injected,
}

/// A scored temporal span. Indices are inclusive frame indices into the
/// full-length sequence; seconds follow the `[i / fps, (i + 1) / fps)` frame
/// convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub start_s: f64,
    pub end_s: f64,
    pub start_idx: usize,
    pub end_idx: usize,
    pub base_score: f64,
    pub bonus_score: f64,
    pub final_score: f64,
    pub provenance: Provenance,
    pub peak_idx: usize,
}

impl Candidate {
    pub fn index_range(&self) -> IndexRange {
        IndexRange::new(self.start_idx, self.end_idx)
    }
}

/// Where a candidate set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetChannel {
    Original,
    SubA,
    SubB,
    Injected,
    Final,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
    pub channel: SetChannel,
    pub signal_stats: Option<SignalStats>,
}

impl CandidateSet {
    pub fn empty(channel: SetChannel, signal_stats: Option<SignalStats>) -> Self {
        Self {
            candidates: Vec::new(),
            channel,
            signal_stats,
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn sort(&mut self) {
        self.candidates.sort_by(candidate_order);
    }
}

/// Final score descending, then start index, end index, and original before
/// injected.
pub fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.final_score
        .total_cmp(&a.final_score)
        .then(a.start_idx.cmp(&b.start_idx))
        .then(a.end_idx.cmp(&b.end_idx))
        .then(a.provenance.cmp(&b.provenance))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsgConfig {
    /// Minimum peak prominence on the smoothed curve.
    pub prominence_min: f64,
    /// Minimum gap between peaks, in seconds.
    pub min_distance_s: f64,
    /// Min-max rescale the curve before any statistics are taken.
    pub normalization: bool,
}

impl Default for AsgConfig {
    fn default() -> Self {
        Self {
            prominence_min: 0.05,
            min_distance_s: 1.0,
            normalization: false,
        }
    }
}

/// Grow a peak into the maximal run inside `bounds` where
/// `smoothed > peak.height * tau_r`.
pub fn expand_peak(
    smoothed: &SimilaritySequence,
    peak: &Peak,
    tau_r: f64,
    bounds: IndexRange,
) -> Result<IndexRange, AsgError> {
    if !(peak.height > 0.0) {
        return Err(AsgError::NonPositivePeak {
            index: peak.index,
            height: peak.height,
        });
    }
    if !bounds.contains(peak.index) || bounds.end >= smoothed.len() {
        return Err(AsgError::PeakOutOfBounds {
            index: peak.index,
            start: bounds.start,
            end: bounds.end,
        });
    }
    Ok(expand_values(
        smoothed.values(),
        peak.index,
        peak.height * tau_r,
        bounds,
    ))
}

fn expand_values(values: &[f64], seed: usize, threshold: f64, bounds: IndexRange) -> IndexRange {
    let mut start = seed;
    while start > bounds.start && values[start - 1] > threshold {
        start -= 1;
    }
    let mut end = seed;
    while end < bounds.end && values[end + 1] > threshold {
        end += 1;
    }
    IndexRange::new(start, end)
}

/// One expanded peak, kept for inspection and plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanSeed {
    pub peak: Peak,
    pub tau_expand: f64,
    pub span: IndexRange,
}

/// Intermediate products of a span-generation pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanTrace {
    pub set: CandidateSet,
    /// Restriction of the input that was actually searched.
    pub bounds: Option<IndexRange>,
    /// Smoothed values over `bounds` (or the whole sequence).
    pub smoothed: Vec<f64>,
    /// Peaks in full-sequence indices, after distance and prominence filters.
    pub peaks: Vec<Peak>,
    /// Seeds that produced a surviving candidate, ordered by peak index.
    pub seeds: Vec<SpanSeed>,
}

/// Detect and score candidate spans in `raw`.
///
/// `stats_override` replaces the statistics that would otherwise be computed
/// from the (restricted) signal. `bounds` restricts the search; expansion is
/// clipped to it.
pub fn generate_spans(
    raw: &SimilaritySequence,
    config: &AsgConfig,
    stats_override: Option<SignalStats>,
    bounds: Option<IndexRange>,
) -> Result<CandidateSet, AsgError> {
    generate_spans_traced(raw, config, stats_override, bounds).map(|t| t.set)
}

pub fn generate_spans_traced(
    raw: &SimilaritySequence,
    config: &AsgConfig,
    stats_override: Option<SignalStats>,
    bounds: Option<IndexRange>,
) -> Result<SpanTrace, AsgError> {
    let normalized;
    let source = if config.normalization {
        normalized = raw.min_max_normalized();
        &normalized
    } else {
        raw
    };
    let range = bounds.unwrap_or_else(|| source.full_range());
    let restricted = source.slice(range)?;
    let stats = stats_override.unwrap_or_else(|| SignalStats::from_sequence(&restricted));
    let fps = raw.fps();
    let offset = range.start;

    let smoothed = moving_average_values(restricted.values(), stats.window);
    let distance = min_distance_samples(config.min_distance_s, fps);
    let local_peaks = find_peaks_values(&smoothed, distance, config.prominence_min);
    let local_bounds = IndexRange::new(0, smoothed.len() - 1);

    let mut by_span: HashMap<IndexRange, (Peak, f64)> = HashMap::new();
    for peak in local_peaks.iter().filter(|p| p.height > 0.0) {
        let tau_expand = peak.height * stats.tau_r;
        let span = expand_values(&smoothed, peak.index, tau_expand, local_bounds);
        match by_span.get(&span) {
            Some((kept, _))
                if kept.height > peak.height
                    || (kept.height == peak.height && kept.index < peak.index) => {}
            _ => {
                by_span.insert(span, (*peak, tau_expand));
            }
        }
    }

    let mut seeds: Vec<SpanSeed> = by_span
        .into_iter()
        .map(|(span, (peak, tau_expand))| SpanSeed {
            peak: Peak {
                index: peak.index + offset,
                ..peak
            },
            tau_expand,
            span: IndexRange::new(span.start + offset, span.end + offset),
        })
        .collect();
    seeds.sort_by_key(|s| s.peak.index);

    let mut candidates: Vec<Candidate> = seeds
        .iter()
        .map(|seed| {
            let local = &smoothed[seed.span.start - offset..=seed.span.end - offset];
            let base = local.iter().sum::<f64>() / local.len() as f64;
            Candidate {
                start_s: seed.span.start as f64 / fps,
                end_s: (seed.span.end + 1) as f64 / fps,
                start_idx: seed.span.start,
                end_idx: seed.span.end,
                base_score: base,
                bonus_score: 0.0,
                final_score: base,
                provenance: Provenance::Original,
                peak_idx: seed.peak.index,
            }
        })
        .collect();
    candidates.sort_by(candidate_order);

    let peaks = local_peaks
        .into_iter()
        .map(|p| Peak {
            index: p.index + offset,
            ..p
        })
        .collect();

    let channel = match raw.channel() {
        crate::signal::Channel::Original => SetChannel::Original,
        crate::signal::Channel::SubA => SetChannel::SubA,
        crate::signal::Channel::SubB => SetChannel::SubB,
    };

    Ok(SpanTrace {
        set: CandidateSet {
            candidates,
            channel,
            signal_stats: Some(stats),
        },
        bounds,
        smoothed,
        peaks,
        seeds,
    })
}
