use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{ConfusionCounts, DeltaSet, MetricSet};
use crate::perturbation::StrategyKind;

use super::S3Mode;

pub const RESULT_SCHEMA: u64 = 1;

/// Everything a run produced. Serialized as `results/results.json`; contains
/// no timestamps or absolute paths so identical inputs give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub schema: u64,
    pub metadata: RunMetadata,
    pub baseline: MetricSet,
    pub cells: Vec<CellResult>,
    pub per_image: Vec<PerImageRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub harness_version: String,
    /// Hash of the effective configuration and every input file.
    pub manifest_hash: String,
    pub runner: String,
    pub target_class: String,
    pub fill: u8,
    pub s3_mode: S3Mode,
    pub pm_source: PmSource,
    pub methods: Vec<String>,
    pub thresholds: Vec<f64>,
    pub strategies: Vec<StrategyKind>,
    pub images: usize,
}

/// Where S3 PM references come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PmSource {
    /// The dataset's `pred/` directory.
    Dataset,
    /// The baseline run's predictions.
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub method: String,
    pub threshold: f64,
    pub strategy: StrategyKind,
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellOutcome {
    Ok {
        metrics: MetricSet,
        /// Absent when the cell is scored against a different reference
        /// population than the baseline.
        delta: Option<DeltaSet>,
    },
    Failed {
        error: String,
    },
}

impl CellResult {
    pub fn metrics(&self) -> Option<&MetricSet> {
        match &self.outcome {
            CellOutcome::Ok { metrics, .. } => Some(metrics),
            CellOutcome::Failed { .. } => None,
        }
    }

    pub fn delta(&self) -> Option<&DeltaSet> {
        match &self.outcome {
            CellOutcome::Ok { delta, .. } => delta.as_ref(),
            CellOutcome::Failed { .. } => None,
        }
    }

    pub fn error(&self) -> Option<&str> {
        match &self.outcome {
            CellOutcome::Failed { error } => Some(error),
            CellOutcome::Ok { .. } => None,
        }
    }
}

/// Per-image counts for the baseline (strategy, threshold and method absent)
/// or for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerImageRow {
    pub strategy: Option<StrategyKind>,
    pub threshold: Option<f64>,
    pub method: Option<String>,
    pub image: String,
    pub counts: ConfusionCounts,
}

const THRESHOLD_EPS: f64 = 1e-9;

pub(crate) fn same_threshold(a: f64, b: f64) -> bool {
    (a - b).abs() < THRESHOLD_EPS
}

impl RunResult {
    pub fn cell(&self, method: &str, threshold: f64, strategy: StrategyKind) -> Option<&CellResult> {
        self.cells.iter().find(|c| {
            c.method == method && c.strategy == strategy && same_threshold(c.threshold, threshold)
        })
    }

    pub fn failures(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.error().is_some())
    }

    pub fn has_threshold(&self, threshold: f64) -> bool {
        self.metadata
            .thresholds
            .iter()
            .any(|&t| same_threshold(t, threshold))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("RunResult serializes");
        s.push('\n');
        s
    }

    /// Parses a serialized result, checking the schema version first.
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let json_err = |e| Error::Json {
            path: origin.to_path_buf(),
            source: e,
        };
        let value: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
        let found = value.get("schema").and_then(|s| s.as_u64()).unwrap_or(0);
        if found != RESULT_SCHEMA {
            return Err(Error::Schema {
                found,
                expected: RESULT_SCHEMA,
            });
        }
        serde_json::from_value(value).map_err(json_err)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_json())
    }

    /// One row per image and scope:
    /// `strategy,threshold,method,image,tp,fp,fn,tn`.
    pub fn per_image_csv(&self) -> String {
        let mut out = String::from("strategy,threshold,method,image,tp,fp,fn,tn\n");
        for row in &self.per_image {
            let c = &row.counts;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                row.strategy.map_or("baseline", |s| s.id()),
                row.threshold.map(|t| t.to_string()).unwrap_or_default(),
                row.method.as_deref().unwrap_or("model"),
                row.image,
                c.tp,
                c.fp,
                c.fn_,
                c.tn
            );
        }
        out
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
