//! One-dimensional signal primitives over per-frame similarity curves.
//!
//! Everything here is a pure function of its inputs. Sequences are validated
//! once at construction (non-empty, finite, positive fps) so downstream code
//! can index without re-checking.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("similarity sequence must contain at least one value")]
    Empty,
    #[error("fps must be positive and finite, got {0}")]
    InvalidFps(f64),
    #[error("non-finite similarity value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("dimension mismatch: row {row} has {got} columns, query has {expected}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("embedding matrix has no rows or zero dimension")]
    EmptyMatrix,
    #[error("frame embedding row {0} has zero norm")]
    ZeroNormRow(usize),
    #[error("query embedding has zero norm")]
    ZeroNormQuery,
    #[error("sigma must be non-negative and finite, got {0}")]
    NegativeSigma(f64),
    #[error("index {index} is not an interior local maximum")]
    NotALocalMaximum { index: usize },
    #[error("index range [{start}, {end}] is invalid for a sequence of length {len}")]
    BadRange {
        start: usize,
        end: usize,
        len: usize,
    },
}

/// Which query produced a similarity curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Original,
    SubA,
    SubB,
}

/// Inclusive index range `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndexRange {
    pub start: usize,
    pub end: usize,
}

impl IndexRange {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, index: usize) -> bool {
        self.start <= index && index <= self.end
    }

    pub fn intersects(&self, other: &IndexRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

/// Per-frame similarity between one query and one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySequence {
    values: Vec<f64>,
    fps: f64,
    video_id: String,
    channel: Channel,
}

impl SimilaritySequence {
    pub fn new(
        values: Vec<f64>,
        fps: f64,
        video_id: impl Into<String>,
        channel: Channel,
    ) -> Result<Self, SignalError> {
        if values.is_empty() {
            return Err(SignalError::Empty);
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(SignalError::InvalidFps(fps));
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(SignalError::NonFinite { index, value });
        }
        Ok(Self {
            values,
            fps,
            video_id: video_id.into(),
            channel,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false: construction rejects empty sequences.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn full_range(&self) -> IndexRange {
        IndexRange::new(0, self.values.len() - 1)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Same metadata, new values. Values must be finite and non-empty.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, SignalError> {
        Self::new(values, self.fps, self.video_id.clone(), self.channel)
    }

    /// Copy of the samples inside `range`, keeping fps and channel.
    pub fn slice(&self, range: IndexRange) -> Result<Self, SignalError> {
        if range.start > range.end || range.end >= self.values.len() {
            return Err(SignalError::BadRange {
                start: range.start,
                end: range.end,
                len: self.values.len(),
            });
        }
        Ok(Self {
            values: self.values[range.start..=range.end].to_vec(),
            fps: self.fps,
            video_id: self.video_id.clone(),
            channel: self.channel,
        })
    }

    /// Min-max rescaling to `[0, 1]`; constant sequences map to all zeros.
    pub fn min_max_normalized(&self) -> Self {
        let (lo, hi) = min_max(&self.values);
        let span = hi - lo;
        let values = if span > 0.0 {
            self.values.iter().map(|v| (v - lo) / span).collect()
        } else {
            vec![0.0; self.values.len()]
        };
        Self {
            values,
            fps: self.fps,
            video_id: self.video_id.clone(),
            channel: self.channel,
        }
    }
}

/// Variability summary that drives smoothing and expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalStats {
    pub sigma: f64,
    pub tau_r: f64,
    pub window: usize,
}

impl SignalStats {
    pub fn from_sequence(seq: &SimilaritySequence) -> Self {
        let sigma = population_std(seq);
        let tau_r = adaptive_ratio(sigma).expect("population std is non-negative");
        let window = smoothing_window(seq.fps(), tau_r);
        Self {
            sigma,
            tau_r,
            window,
        }
    }
}

/// A detected local maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub index: usize,
    pub height: f64,
    pub prominence: f64,
}

/// Cosine similarity of every frame row against the query.
///
/// `frames` is a row-major `T x D` buffer.
pub fn cosine_similarity_sequence(
    frames: &[f32],
    dim: usize,
    query: &[f32],
    fps: f64,
    video_id: impl Into<String>,
    channel: Channel,
) -> Result<SimilaritySequence, SignalError> {
    if dim == 0 || frames.is_empty() {
        return Err(SignalError::EmptyMatrix);
    }
    if query.len() != dim {
        return Err(SignalError::DimensionMismatch {
            row: 0,
            expected: query.len(),
            got: dim,
        });
    }
    if frames.len() % dim != 0 {
        return Err(SignalError::DimensionMismatch {
            row: frames.len() / dim,
            expected: dim,
            got: frames.len() % dim,
        });
    }
    let q_norm = l2_norm(query);
    if q_norm == 0.0 {
        return Err(SignalError::ZeroNormQuery);
    }
    let mut values = Vec::with_capacity(frames.len() / dim);
    for (row, frame) in frames.chunks_exact(dim).enumerate() {
        let f_norm = l2_norm(frame);
        if f_norm == 0.0 {
            return Err(SignalError::ZeroNormRow(row));
        }
        let dot: f64 = frame
            .iter()
            .zip(query)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum();
        values.push((dot / (f_norm * q_norm)).clamp(-1.0, 1.0));
    }
    SimilaritySequence::new(values, fps, video_id, channel)
}

fn l2_norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt()
}

/// Population standard deviation (divides by `T`).
pub fn population_std(seq: &SimilaritySequence) -> f64 {
    let values = seq.values();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt()
}

/// Maps signal variability to a ratio in `[0.75, 1.0)`.
pub fn adaptive_ratio(sigma: f64) -> Result<f64, SignalError> {
    if !(sigma >= 0.0) {
        return Err(SignalError::NegativeSigma(sigma));
    }
    Ok(0.5 + 0.5 * logistic(sigma))
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Odd window length nearest to `fps * tau_r`, at least 1.
///
/// When `fps * tau_r` is an even integer the two odd neighbours are equally
/// near; the larger one is returned.
pub fn smoothing_window(fps: f64, tau_r: f64) -> usize {
    let target = fps * tau_r;
    if !(target >= 1.0) {
        return 1;
    }
    let lower_odd = 2 * ((target - 1.0) / 2.0).floor() as usize + 1;
    if target - lower_odd as f64 >= 1.0 {
        lower_odd + 2
    } else {
        lower_odd
    }
}

/// Centered moving average with a window that shrinks at the edges.
///
/// `window` must be odd; an even value is widened by one.
pub fn moving_average(seq: &SimilaritySequence, window: usize) -> SimilaritySequence {
    let values = moving_average_values(seq.values(), window);
    seq.with_values(values)
        .expect("averages of finite values are finite")
}

pub(crate) fn moving_average_values(values: &[f64], window: usize) -> Vec<f64> {
    let half = window.max(1) / 2;
    if half == 0 {
        return values.to_vec();
    }
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let win = &values[lo..=hi];
            let mean = win.iter().sum::<f64>() / win.len() as f64;
            // The rounded sum can land one ulp outside the window's range.
            let (wmin, wmax) = min_max(win);
            mean.clamp(wmin, wmax)
        })
        .collect()
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Interior local maxima. Plateaus strictly above both flanks resolve to
/// their floor midpoint; plateaus touching either end are not maxima.
pub(crate) fn local_maxima(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    let mut peaks = Vec::new();
    if n < 3 {
        return peaks;
    }
    let mut i = 1;
    let last = n - 1;
    while i < last {
        if values[i - 1] < values[i] {
            let mut ahead = i + 1;
            while ahead < last && values[ahead] == values[i] {
                ahead += 1;
            }
            if values[ahead] < values[i] {
                let plateau_end = ahead - 1;
                peaks.push((i + plateau_end) / 2);
                i = ahead;
                continue;
            }
            i = ahead;
            continue;
        }
        i += 1;
    }
    peaks
}

/// Topographic prominence of an interior local maximum.
pub fn prominence(seq: &SimilaritySequence, peak_index: usize) -> Result<f64, SignalError> {
    let values = seq.values();
    if !is_local_maximum(values, peak_index) {
        return Err(SignalError::NotALocalMaximum { index: peak_index });
    }
    Ok(prominence_unchecked(values, peak_index))
}

fn is_local_maximum(values: &[f64], index: usize) -> bool {
    let n = values.len();
    if index == 0 || index + 1 >= n {
        return false;
    }
    let h = values[index];
    let mut left = index;
    while left > 0 && values[left - 1] == h {
        left -= 1;
    }
    let mut right = index;
    while right + 1 < n && values[right + 1] == h {
        right += 1;
    }
    left > 0 && right + 1 < n && values[left - 1] < h && values[right + 1] < h
}

pub(crate) fn prominence_unchecked(values: &[f64], peak_index: usize) -> f64 {
    let height = values[peak_index];
    let mut left_base = height;
    for &v in values[..peak_index].iter().rev() {
        if v > height {
            break;
        }
        left_base = left_base.min(v);
    }
    let mut right_base = height;
    for &v in &values[peak_index + 1..] {
        if v > height {
            break;
        }
        right_base = right_base.min(v);
    }
    height - left_base.max(right_base)
}

/// Peak detection with a minimum index gap and a prominence floor.
///
/// Distance filtering runs first, visiting candidates from highest to lowest
/// (lower index wins ties) and dropping any within `min_distance_samples` of
/// an already kept peak. Survivors are then filtered by prominence. Output is
/// sorted by index.
pub fn find_peaks(
    seq: &SimilaritySequence,
    min_distance_samples: usize,
    prominence_min: f64,
) -> Vec<Peak> {
    find_peaks_values(seq.values(), min_distance_samples, prominence_min)
}

pub(crate) fn find_peaks_values(
    values: &[f64],
    min_distance_samples: usize,
    prominence_min: f64,
) -> Vec<Peak> {
    let candidates = local_maxima(values);
    if candidates.is_empty() {
        return Vec::new();
    }
    let distance = min_distance_samples.max(1);

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        values[candidates[b]]
            .total_cmp(&values[candidates[a]])
            .then(candidates[a].cmp(&candidates[b]))
    });

    // `candidates` is sorted by index, so suppression only needs to walk
    // outward from each kept peak until the gap exceeds `distance`.
    let mut keep = vec![true; candidates.len()];
    for &pos in &order {
        if !keep[pos] {
            continue;
        }
        let center = candidates[pos];
        let mut j = pos;
        while j > 0 && center - candidates[j - 1] <= distance {
            j -= 1;
            keep[j] = false;
        }
        let mut j = pos + 1;
        while j < candidates.len() && candidates[j] - center <= distance {
            keep[j] = false;
            j += 1;
        }
    }

    candidates
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .filter_map(|(&index, _)| {
            let prominence = prominence_unchecked(values, index);
            (prominence >= prominence_min).then_some(Peak {
                index,
                height: values[index],
                prominence,
            })
        })
        .collect()
}

/// `max(1, round(seconds * fps))`.
pub fn min_distance_samples(seconds: f64, fps: f64) -> usize {
    ((seconds * fps).round() as usize).max(1)
}
