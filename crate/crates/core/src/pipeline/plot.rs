use std::io::{Read, Write};

use super::run::QueryInspection;
use super::PipelineError;

/// Column-aligned signals for one query. Missing channels are `NaN`.
///
/// Fixed columns: `time_s, s_o, s_a, s_b, smoothed, gt`; then, for each
/// peak that seeded a candidate, `tau_expand_p<idx>` (threshold inside the
/// span, `NaN` outside) and `span_p<idx>` (1 inside, 0 outside).
#[derive(Debug, Clone, PartialEq)]
pub struct PlotTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub const FIXED_COLUMNS: [&str; 6] = ["time_s", "s_o", "s_a", "s_b", "smoothed", "gt"];

impl PlotTable {
    pub fn from_inspection(insp: &QueryInspection) -> Self {
        let n = insp.raw_o.len();
        let fps = insp.raw_o.fps();
        let trace = &insp.retrieval.trace;
        let gt = insp.ground_truth();

        let mut columns: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
        for seed in &trace.seeds {
            columns.push(format!("tau_expand_p{}", seed.peak.index));
            columns.push(format!("span_p{}", seed.peak.index));
        }

        let channel = |s: &Option<crate::signal::SimilaritySequence>, i: usize| {
            s.as_ref().map_or(f64::NAN, |s| s.values()[i])
        };
        let rows = (0..n)
            .map(|i| {
                let t = i as f64 / fps;
                let in_gt = gt.is_some_and(|g| {
                    let mid = (i as f64 + 0.5) / fps;
                    g.start_s <= mid && mid < g.end_s
                });
                let mut row = vec![
                    t,
                    insp.raw_o.values()[i],
                    channel(&insp.raw_a, i),
                    channel(&insp.raw_b, i),
                    trace.smoothed[i],
                    if in_gt { 1.0 } else { 0.0 },
                ];
                for seed in &trace.seeds {
                    let inside = seed.span.contains(i);
                    row.push(if inside { seed.tau_expand } else { f64::NAN });
                    row.push(if inside { 1.0 } else { 0.0 });
                }
                row
            })
            .collect();
        Self { columns, rows }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), PipelineError> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| PipelineError::Parse(e.to_string());
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| PipelineError::Parse(e.to_string()))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, PipelineError> {
        let mut r = csv::Reader::from_reader(reader);
        let csv_err = |e: csv::Error| PipelineError::Parse(e.to_string());
        let columns = r
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(str::to_string)
            .collect::<Vec<_>>();
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record.map_err(csv_err)?;
            let row = record
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| PipelineError::Parse(format!("bad number `{f}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }
}
