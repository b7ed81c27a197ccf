//! Reference implementations written from the rules, not from the library.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spanscout::asg::{Candidate, CandidateSet, Provenance, SetChannel};
use spanscout::signal::{Channel, SimilaritySequence};

pub fn seq(values: Vec<f64>, fps: f64, channel: Channel) -> SimilaritySequence {
    SimilaritySequence::new(values, fps, "v", channel).unwrap()
}

/// Index of the first sample left of `i` whose value differs, if any.
fn left_differs(v: &[f64], i: usize) -> Option<usize> {
    (0..i).rev().find(|&j| v[j] != v[i])
}

fn right_differs(v: &[f64], i: usize) -> Option<usize> {
    (i + 1..v.len()).find(|&j| v[j] != v[i])
}

/// Rule (a): strict interior maxima, plateaus reported at their floor midpoint.
pub fn oracle_local_maxima(v: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 0..v.len() {
        let (Some(l), Some(r)) = (left_differs(v, i), right_differs(v, i)) else {
            continue;
        };
        if v[l] < v[i] && v[r] < v[i] && (l + 1 + r - 1) / 2 == i {
            out.push(i);
        }
    }
    out
}

/// Topographic prominence straight from the definition.
pub fn oracle_prominence(v: &[f64], p: usize) -> f64 {
    let h = v[p];
    let mut left_min = h;
    let mut j = p;
    while j > 0 && v[j - 1] <= h {
        j -= 1;
        left_min = left_min.min(v[j]);
    }
    let mut right_min = h;
    let mut j = p;
    while j + 1 < v.len() && v[j + 1] <= h {
        j += 1;
        right_min = right_min.min(v[j]);
    }
    h - left_min.max(right_min)
}

/// Rules (a)-(c), O(T^2).
pub fn oracle_find_peaks(v: &[f64], distance: usize, prominence_min: f64) -> Vec<usize> {
    let mut cands = oracle_local_maxima(v);
    cands.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for c in cands {
        if kept.iter().all(|&k| k.abs_diff(c) > distance) {
            kept.push(c);
        }
    }
    kept.retain(|&k| oracle_prominence(v, k) >= prominence_min);
    kept.sort_unstable();
    kept
}

/// Random signals with ties, plateaus and edge effects.
pub fn random_signal(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<f64> {
    let n = rng.random_range(1..=max_len);
    match rng.random_range(0..3) {
        0 => (0..n).map(|_| rng.random::<f64>()).collect(),
        1 => (0..n)
            .map(|_| f64::from(rng.random_range(0..6u8)) / 5.0)
            .collect(),
        _ => {
            let mut v = Vec::with_capacity(n);
            let mut x = 0.5;
            while v.len() < n {
                x += rng.random_range(-0.2..0.2);
                let run = rng.random_range(1..4);
                for _ in 0..run {
                    v.push(x);
                }
            }
            v.truncate(n);
            v
        }
    }
}

pub fn two_pass_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn logistic_ratio(sigma: f64) -> f64 {
    0.5 + 0.5 / (1.0 + (-sigma).exp())
}

pub fn cand(start: usize, end: usize, base: f64, fps: f64) -> Candidate {
    Candidate {
        start_s: start as f64 / fps,
        end_s: (end + 1) as f64 / fps,
        start_idx: start,
        end_idx: end,
        base_score: base,
        bonus_score: 0.0,
        final_score: base,
        provenance: Provenance::Original,
        peak_idx: start,
    }
}

pub fn set(candidates: Vec<Candidate>) -> CandidateSet {
    CandidateSet {
        candidates,
        channel: SetChannel::Original,
        signal_stats: None,
    }
}

pub fn interval_tiou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = a.1.max(b.1) - a.0.min(b.0);
    inter / union
}

/// Naive split written against token counts.
pub fn oracle_naive(q: &str) -> (String, String) {
    let t: Vec<&str> = q.split_whitespace().collect();
    if t.len() == 1 {
        return (t[0].to_string(), t[0].to_string());
    }
    let k = t.len() / 2;
    (t[..k].join(" "), t[k..].join(" "))
}

/// Delimiter split: first whole-token delimiter or comma wins.
pub fn oracle_rule(q: &str) -> (String, String) {
    const DELIMS: [&str; 5] = ["and", "while", "then", "before", "after"];
    let t: Vec<&str> = q.split_whitespace().collect();
    for i in 0..t.len() {
        let bare = t[i].strip_suffix(',').unwrap_or(t[i]);
        let (left, right) = if DELIMS.contains(&bare.to_lowercase().as_str()) {
            (t[..i].join(" "), t[i + 1..].join(" "))
        } else if t[i].ends_with(',') {
            let mut l = t[..i].join(" ");
            if !bare.is_empty() {
                if !l.is_empty() {
                    l.push(' ');
                }
                l.push_str(bare);
            }
            (l, t[i + 1..].join(" "))
        } else {
            continue;
        };
        let left = left.trim_end_matches(',').trim().to_string();
        let right = right.trim().to_string();
        if !left.is_empty() && !right.is_empty() {
            return (left, right);
        }
    }
    oracle_naive(q)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
