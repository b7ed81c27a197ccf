use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::manifest::Manifest;
use super::run::{evaluate, Pipeline};
use super::PipelineError;
use crate::eval::MetricsReport;

/// Hyperparameters that can be swept one at a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Prominence,
    Mtd,
    Beta,
    Nms,
}

impl SweepParameter {
    pub fn apply(self, config: &mut PipelineConfig, value: f64) {
        match self {
            SweepParameter::Prominence => config.asg.prominence_min = value,
            SweepParameter::Mtd => config.asg.min_distance_s = value,
            SweepParameter::Beta => config.refine.beta = value,
            SweepParameter::Nms => config.refine.nms_tiou = value,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SweepParameter::Prominence => "pm",
            SweepParameter::Mtd => "mtd",
            SweepParameter::Beta => "beta",
            SweepParameter::Nms => "nms",
        }
    }
}

impl std::str::FromStr for SweepParameter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prominence" | "pm" => Ok(SweepParameter::Prominence),
            "mtd" => Ok(SweepParameter::Mtd),
            "beta" => Ok(SweepParameter::Beta),
            "nms" => Ok(SweepParameter::Nms),
            other => Err(format!("unknown sweep parameter `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub config_fingerprint: String,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: SweepParameter,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// One line per value: the parameter, every recall cell, and the average,
    /// in percent.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let Some(first) = self.rows.first() else {
            return out;
        };
        let _ = write!(out, "{:>8}", self.parameter.label());
        for cell in &first.report.cells {
            let _ = write!(out, "  {:>7}", cell.label());
        }
        let _ = writeln!(out, "  {:>7}", "Avg.");
        for row in &self.rows {
            let _ = write!(out, "{:>8}", format!("{}", row.value));
            for cell in &row.report.cells {
                let _ = write!(out, "  {:>7.2}", cell.recall * 100.0);
            }
            let _ = writeln!(out, "  {:>7.2}", row.report.average * 100.0);
        }
        out
    }
}

/// Run and evaluate once per value, all other settings from `config`.
pub fn sweep(
    manifest: &Manifest,
    config: &PipelineConfig,
    parameter: SweepParameter,
    values: &[f64],
) -> Result<SweepTable, PipelineError> {
    if values.is_empty() {
        return Err(PipelineError::Config(
            "sweep needs at least one value".into(),
        ));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut cfg = config.clone();
        parameter.apply(&mut cfg, value);
        let doc = Pipeline::new(cfg.clone())?.run(manifest)?;
        let outcome = evaluate(&doc, manifest)?;
        rows.push(SweepRow {
            value,
            config_fingerprint: cfg.fingerprint(),
            report: outcome.report,
        });
    }
    Ok(SweepTable { parameter, rows })
}
