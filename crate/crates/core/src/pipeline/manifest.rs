use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perturbation::{FillPolicy, StrategyKind, Threshold};
use crate::report::ReportSpec;
use crate::runner::RunnerSpec;

pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

/// How S3 cells are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum S3Mode {
    /// Edit the image, re-run the model, score against ground truth.
    #[default]
    #[serde(rename = "rerun")]
    Rerun,
    /// Score the relevance mask directly against the reference mask.
    #[serde(rename = "mask", alias = "mask-vs-reference")]
    MaskVsReference,
}

impl fmt::Display for S3Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            S3Mode::Rerun => "rerun",
            S3Mode::MaskVsReference => "mask",
        })
    }
}

impl FromStr for S3Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rerun" => Ok(S3Mode::Rerun),
            "mask" | "mask-vs-reference" => Ok(S3Mode::MaskVsReference),
            other => Err(Error::Config(format!(
                "unknown s3 mode `{other}` (expected rerun or mask)"
            ))),
        }
    }
}

/// Declarative description of an evaluation run, read from JSON.
///
/// Relative `dataset_root` and `output_dir` resolve against the directory
/// holding the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationManifest {
    pub dataset_root: PathBuf,
    pub methods: Vec<String>,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<Threshold>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<StrategyKind>,
    #[serde(default)]
    pub s3_mode: S3Mode,
    #[serde(default)]
    pub fill: FillPolicy,
    pub runner: RunnerSpec,
    pub output_dir: PathBuf,
    #[serde(default = "default_true")]
    pub cache: bool,
    #[serde(default = "default_target_class")]
    pub target_class: String,
    #[serde(default)]
    pub report: ReportSpec,
}

fn default_thresholds() -> Vec<Threshold> {
    DEFAULT_THRESHOLDS
        .iter()
        .map(|&t| Threshold::new(t).expect("default thresholds are in range"))
        .collect()
}

fn default_strategies() -> Vec<StrategyKind> {
    StrategyKind::ALL.to_vec()
}

fn default_true() -> bool {
    true
}

fn default_target_class() -> String {
    "building".into()
}

impl EvaluationManifest {
    /// A manifest with every optional field at its default.
    pub fn new(
        dataset_root: impl Into<PathBuf>,
        methods: Vec<String>,
        runner: RunnerSpec,
        output_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            dataset_root: dataset_root.into(),
            methods,
            thresholds: default_thresholds(),
            strategies: default_strategies(),
            s3_mode: S3Mode::default(),
            fill: FillPolicy::default(),
            runner,
            output_dir: output_dir.into(),
            cache: true,
            target_class: default_target_class(),
            report: ReportSpec::default(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Config(format!("cannot read manifest {}: {e}", path.display())))?;
        let mut manifest: EvaluationManifest =
            serde_json::from_slice(&bytes).map_err(|e| Error::Json {
                path: path.to_path_buf(),
                source: e,
            })?;
        let base = path.parent().unwrap_or(Path::new("."));
        manifest.dataset_root = absolutize(base, &manifest.dataset_root);
        manifest.output_dir = absolutize(base, &manifest.output_dir);
        Ok(manifest)
    }

    /// Checks the invariants that do not need the file system.
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods configured".into()));
        }
        let mut seen = BTreeSet::new();
        for m in &self.methods {
            if m.is_empty() || m.contains(['/', '\\']) || m == "." || m == ".." {
                return Err(Error::Config(format!("invalid method id `{m}`")));
            }
            if !seen.insert(m) {
                return Err(Error::Config(format!("method `{m}` listed twice")));
            }
        }
        if self.thresholds.is_empty() {
            return Err(Error::Config("no thresholds configured".into()));
        }
        if self.thresholds.windows(2).any(|w| w[0].value() >= w[1].value()) {
            return Err(Error::Config(
                "thresholds must be strictly increasing".into(),
            ));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("no strategies configured".into()));
        }
        let unique: BTreeSet<_> = self.strategies.iter().collect();
        if unique.len() != self.strategies.len() {
            return Err(Error::Config("strategy listed twice".into()));
        }
        self.runner.validate()?;
        self.report.validate(&self.thresholds)?;
        Ok(())
    }
}

fn absolutize(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::BuiltinKind;

    fn manifest() -> EvaluationManifest {
        EvaluationManifest::new(
            "/data",
            vec!["gradcam".into()],
            RunnerSpec::builtin(BuiltinKind::IdentityGt),
            "/out",
        )
    }

    #[test]
    fn defaults() {
        let m: EvaluationManifest = serde_json::from_str(
            r#"{"dataset_root": "d", "methods": ["a"], "runner": {"mode": "builtin", "kind": "identity-gt"}, "output_dir": "o"}"#,
        )
        .unwrap();
        let t: Vec<f64> = m.thresholds.iter().map(|t| t.value()).collect();
        assert_eq!(t, vec![0.2, 0.4, 0.6, 0.8]);
        assert_eq!(m.strategies, StrategyKind::ALL.to_vec());
        assert_eq!(m.s3_mode, S3Mode::Rerun);
        assert_eq!(m.fill.fill, 0);
        assert!(m.cache);
        assert_eq!(m.report.focus_threshold, 0.4);
        m.validate().unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let r = serde_json::from_str::<EvaluationManifest>(
            r#"{"dataset_root": "d", "methods": ["a"], "runner": {"mode": "builtin", "kind": "identity-gt"}, "output_dir": "o", "colour": 1}"#,
        );
        assert!(r.is_err());
    }

    #[test]
    fn empty_methods() {
        let mut m = manifest();
        m.methods.clear();
        assert_eq!(m.validate().unwrap_err().to_string(), "configuration error: no methods configured");
    }

    #[test]
    fn thresholds_must_increase() {
        let mut m = manifest();
        m.thresholds = vec![Threshold::new(0.4).unwrap(), Threshold::new(0.2).unwrap()];
        m.report.focus_threshold = 0.4;
        assert!(m.validate().is_err());
        m.thresholds = vec![Threshold::new(0.4).unwrap(), Threshold::new(0.4).unwrap()];
        assert!(m.validate().is_err());
    }

    #[test]
    fn out_of_range_threshold_fails_to_parse() {
        let r = serde_json::from_str::<EvaluationManifest>(
            r#"{"dataset_root": "d", "methods": ["a"], "thresholds": [1.5], "runner": {"mode": "builtin", "kind": "identity-gt"}, "output_dir": "o"}"#,
        );
        assert!(r.is_err());
    }

    #[test]
    fn method_ids_are_path_safe() {
        let mut m = manifest();
        m.methods = vec!["../x".into()];
        assert!(m.validate().is_err());
    }

    #[test]
    fn s3_mode_names() {
        assert_eq!("mask".parse::<S3Mode>().unwrap(), S3Mode::MaskVsReference);
        assert_eq!("rerun".parse::<S3Mode>().unwrap(), S3Mode::Rerun);
        assert!("both".parse::<S3Mode>().is_err());
        let m: S3Mode = serde_json::from_str("\"mask-vs-reference\"").unwrap();
        assert_eq!(m, S3Mode::MaskVsReference);
    }
}
