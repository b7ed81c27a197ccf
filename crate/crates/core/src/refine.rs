//! Evidence-based refinement of candidate spans.
//!
//! Sub-query similarity curves act as evidence: candidates that contain
//! strong responses for both the start-state and end-state sub-queries get
//! a score bonus, and regions where the two sub-queries agree are searched
//! again for spans the original query missed. Greedy temporal NMS produces
//! the final list.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asg::{
    candidate_order, generate_spans, AsgConfig, AsgError, Candidate, CandidateSet, Provenance,
    SetChannel,
};
use crate::signal::{IndexRange, SignalStats, SimilaritySequence};

#[derive(Debug, Error, PartialEq)]
pub enum RefineError {
    #[error("span [{start}, {end}] has non-positive length")]
    DegenerateSpan { start: f64, end: f64 },
    #[error("candidate span [{start}, {end}] is out of range for evidence of length {len}")]
    IndexOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error(transparent)]
    Asg(#[from] AsgError),
}

/// Second-valued interval `[start_s, end_s]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSpan {
    pub start_s: f64,
    pub end_s: f64,
}

impl TimeSpan {
    pub fn new(start_s: f64, end_s: f64) -> Self {
        Self { start_s, end_s }
    }

    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

impl From<&Candidate> for TimeSpan {
    fn from(c: &Candidate) -> Self {
        Self::new(c.start_s, c.end_s)
    }
}

/// Temporal intersection over union.
pub fn tiou(a: TimeSpan, b: TimeSpan) -> Result<f64, RefineError> {
    for s in [a, b] {
        if !(s.end_s > s.start_s) {
            return Err(RefineError::DegenerateSpan {
                start: s.start_s,
                end: s.end_s,
            });
        }
    }
    Ok(tiou_unchecked(a, b))
}

fn tiou_unchecked(a: TimeSpan, b: TimeSpan) -> f64 {
    let inter = (a.end_s.min(b.end_s) - a.start_s.max(b.start_s)).max(0.0);
    let union = a.end_s.max(b.end_s) - a.start_s.min(b.start_s);
    inter / union
}

/// How injected candidates combine base and bonus scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectScoring {
    /// `base + beta * bonus`, the same rule as reranked originals.
    #[default]
    Weighted,
    /// `base + bonus`.
    Unweighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub beta: f64,
    pub nms_tiou: f64,
    pub top_k: usize,
    #[serde(default)]
    pub inject_scoring: InjectScoring,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            nms_tiou: 0.8,
            top_k: 10,
            inject_scoring: InjectScoring::Weighted,
        }
    }
}

/// The two sub-query channels, unsmoothed.
#[derive(Debug, Clone, Copy)]
pub struct Evidence<'a> {
    pub sub_a: &'a SimilaritySequence,
    pub sub_b: &'a SimilaritySequence,
}

/// Sum of the channel maxima inside the candidate's inclusive index range.
pub fn evidence_bonus(cand: &Candidate, evidence: Evidence<'_>) -> Result<f64, RefineError> {
    let len = evidence.sub_a.len().min(evidence.sub_b.len());
    if cand.start_idx > cand.end_idx || cand.end_idx >= len {
        return Err(RefineError::IndexOutOfRange {
            start: cand.start_idx,
            end: cand.end_idx,
            len,
        });
    }
    let max_in = |s: &SimilaritySequence| {
        s.values()[cand.start_idx..=cand.end_idx]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    };
    Ok(max_in(evidence.sub_a) + max_in(evidence.sub_b))
}

/// Populate bonus and final scores with `final = base + beta * bonus` and
/// re-sort. The candidate multiset is unchanged.
pub fn rerank(
    set: &CandidateSet,
    evidence: Evidence<'_>,
    beta: f64,
) -> Result<CandidateSet, RefineError> {
    let mut out = set.clone();
    for cand in &mut out.candidates {
        cand.bonus_score = evidence_bonus(cand, evidence)?;
        cand.final_score = cand.base_score + beta * cand.bonus_score;
    }
    out.sort();
    Ok(out)
}

/// Disjoint, non-adjacent index regions sorted by start.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionSet {
    pub regions: Vec<IndexRange>,
}

impl RegionSet {
    /// Merge overlapping or adjacent ranges.
    pub fn from_ranges(mut ranges: Vec<IndexRange>) -> Self {
        ranges.sort();
        let mut regions: Vec<IndexRange> = Vec::with_capacity(ranges.len());
        for r in ranges {
            match regions.last_mut() {
                Some(last) if r.start <= last.end + 1 => last.end = last.end.max(r.end),
                _ => regions.push(r),
            }
        }
        Self { regions }
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

/// Union of every overlapping `(a, b)` pair, merged into maximal regions.
pub fn union_regions(p_a: &CandidateSet, p_b: &CandidateSet) -> RegionSet {
    let mut b_sorted: Vec<IndexRange> = p_b.candidates.iter().map(Candidate::index_range).collect();
    b_sorted.sort();
    let mut emitted = Vec::new();
    for a in p_a.candidates.iter().map(Candidate::index_range) {
        // Only b ranges starting at or before a.end can intersect.
        let upto = b_sorted.partition_point(|b| b.start <= a.end);
        for b in &b_sorted[..upto] {
            if b.end >= a.start {
                emitted.push(IndexRange::new(a.start.min(b.start), a.end.max(b.end)));
            }
        }
    }
    RegionSet::from_ranges(emitted)
}

/// Search the original channel again inside each region, using the global
/// statistics of the full original curve.
pub fn inject(
    raw_o: &SimilaritySequence,
    regions: &RegionSet,
    global_stats: SignalStats,
    asg_config: &AsgConfig,
    evidence: Evidence<'_>,
    refine: &RefineConfig,
) -> Result<CandidateSet, RefineError> {
    let weight = match refine.inject_scoring {
        InjectScoring::Weighted => refine.beta,
        InjectScoring::Unweighted => 1.0,
    };
    let mut out = CandidateSet::empty(SetChannel::Injected, Some(global_stats));
    for &region in &regions.regions {
        let found = generate_spans(raw_o, asg_config, Some(global_stats), Some(region))?;
        for mut cand in found.candidates {
            cand.provenance = Provenance::Injected;
            cand.bonus_score = evidence_bonus(&cand, evidence)?;
            cand.final_score = cand.base_score + weight * cand.bonus_score;
            out.candidates.push(cand);
        }
    }
    out.sort();
    Ok(out)
}

/// Greedy temporal NMS. Exact duplicate spans collapse to the best-scored
/// copy first; then the best remaining candidate is kept and everything with
/// `tiou >= nms_tiou` against it is dropped, until `top_k` survive.
pub fn nms(set: &CandidateSet, nms_tiou: f64, top_k: usize) -> CandidateSet {
    let mut sorted = set.candidates.clone();
    sorted.sort_by(candidate_order);

    let mut seen = HashSet::with_capacity(sorted.len());
    sorted.retain(|c| seen.insert((c.start_idx, c.end_idx)));

    let mut kept: Vec<Candidate> = Vec::new();
    let mut alive = vec![true; sorted.len()];
    for i in 0..sorted.len() {
        if kept.len() >= top_k {
            break;
        }
        if !alive[i] {
            continue;
        }
        let best = TimeSpan::from(&sorted[i]);
        for j in i + 1..sorted.len() {
            if alive[j] && tiou_unchecked(best, TimeSpan::from(&sorted[j])) >= nms_tiou {
                alive[j] = false;
            }
        }
        kept.push(sorted[i].clone());
    }
    CandidateSet {
        candidates: kept,
        channel: SetChannel::Final,
        signal_stats: set.signal_stats,
    }
}

/// Concatenate two sets into one unsorted pool.
pub fn pool(a: &CandidateSet, b: &CandidateSet, channel: SetChannel) -> CandidateSet {
    let mut candidates = a.candidates.clone();
    candidates.extend(b.candidates.iter().cloned());
    CandidateSet {
        candidates,
        channel,
        signal_stats: a.signal_stats.or(b.signal_stats),
    }
}
