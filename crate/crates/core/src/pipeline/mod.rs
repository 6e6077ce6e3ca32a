//! Orchestration of a full evaluation run.
//!
//! A run first predicts every original image (the baseline), then for each
//! `(method, threshold, strategy)` cell edits the images, predicts them again
//! and scores the predictions against ground truth. Per-image counts are
//! cached under `<out>/cache/` keyed by the content of every input, so an
//! interrupted run only recomputes the cells it had not finished.
//!
//! Output layout:
//!
//! ```text
//! <out>/edited/<method>/<t>/<strategy>/<id>.png
//! <out>/pred/baseline/<id>.png
//! <out>/pred/<method>/<t>/<strategy>/<id>.png
//! <out>/results/{results.json, cells.csv, per_image.csv, run_info.json}
//! <out>/results/failures.json        (only when a cell failed)
//! ```

mod cache;
mod dataset;
mod manifest;
mod result;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::digest::{sha256_hex, FieldHasher};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, confusion, delta_set, metric_set, ConfusionCounts, DeltaSet, MetricSet};
use crate::perturbation::{perturb, threshold_heatmap, StrategyKind, Threshold};
use crate::raster::{self, MaskRole};
use crate::runner::{run_batch, BatchEntry, BatchManifest, ModelRunner};

use cache::Cache;
pub use dataset::{Dataset, DatasetItem};
pub use manifest::{EvaluationManifest, S3Mode, DEFAULT_THRESHOLDS};
pub use result::{
    CellOutcome, CellResult, PerImageRow, PmSource, RunMetadata, RunResult, RESULT_SCHEMA,
};
pub(crate) use result::{same_threshold, write_text};

/// One `(method, threshold, strategy)` combination.
#[derive(Debug, Clone, PartialEq)]
pub struct CellKey {
    pub method: String,
    pub threshold: Threshold,
    pub strategy: StrategyKind,
}

impl CellKey {
    pub fn new(method: impl Into<String>, threshold: Threshold, strategy: StrategyKind) -> Self {
        Self {
            method: method.into(),
            threshold,
            strategy,
        }
    }

    fn rel_dir(&self) -> PathBuf {
        PathBuf::from(&self.method)
            .join(self.threshold.to_string())
            .join(self.strategy.id())
    }

    fn wrap(&self, image: Option<&str>) -> impl Fn(Error) -> Error + '_ {
        let image = image.map(str::to_string);
        move |e| Error::Cell {
            method: self.method.clone(),
            threshold: self.threshold.value(),
            strategy: self.strategy,
            image: image.clone(),
            source: Box::new(e),
        }
    }
}

/// Baseline predictions on the unedited images.
#[derive(Debug, Clone)]
pub struct Baseline {
    pub metrics: MetricSet,
    pub per_image: Vec<(String, ConfusionCounts)>,
    pm_paths: Vec<PathBuf>,
    pm_digests: Vec<String>,
}

impl Baseline {
    /// PM reference mask file per dataset item, in dataset order.
    pub fn pm_paths(&self) -> &[PathBuf] {
        &self.pm_paths
    }
}

/// Outcome of a single successful cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRun {
    pub metrics: MetricSet,
    pub delta: Option<DeltaSet>,
    pub per_image: Vec<(String, ConfusionCounts)>,
}

struct Digests {
    image: Vec<String>,
    gt: Vec<String>,
    heatmaps: BTreeMap<String, Vec<String>>,
}

pub struct Pipeline {
    manifest: EvaluationManifest,
    dataset: Dataset,
    runner: Arc<dyn ModelRunner>,
    digests: Digests,
    cache: Cache,
    jobs: usize,
}

impl Pipeline {
    /// Validates the manifest, scans the dataset and builds the configured
    /// runner.
    pub fn new(manifest: EvaluationManifest) -> Result<Self> {
        manifest.validate()?;
        let runner = manifest
            .runner
            .instantiate(&manifest.dataset_root, manifest.fill)?;
        Self::with_runner(manifest, Arc::from(runner))
    }

    /// Like [`Pipeline::new`] but with a caller-supplied runner; the
    /// manifest's runner section is ignored.
    pub fn with_runner(manifest: EvaluationManifest, runner: Arc<dyn ModelRunner>) -> Result<Self> {
        manifest.validate()?;
        let dataset = Dataset::scan(&manifest.dataset_root, &manifest.methods)?;
        let digests = digest_inputs(&dataset)?;
        let cache = Cache::new(manifest.output_dir.join("cache"), manifest.cache);
        Ok(Self {
            manifest,
            dataset,
            runner,
            digests,
            cache,
            jobs: 0,
        })
    }

    /// Worker threads for per-image work and concurrent cells; 0 uses every
    /// available core.
    pub fn jobs(mut self, jobs: usize) -> Self {
        self.jobs = jobs;
        self
    }

    pub fn manifest(&self) -> &EvaluationManifest {
        &self.manifest
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    fn out(&self) -> &Path {
        &self.manifest.output_dir
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
    }

    /// Every configured cell, in method, threshold, strategy order.
    pub fn cell_keys(&self) -> Vec<CellKey> {
        let m = &self.manifest;
        let mut keys = Vec::with_capacity(m.methods.len() * m.thresholds.len() * m.strategies.len());
        for method in &m.methods {
            for &t in &m.thresholds {
                for &s in &m.strategies {
                    keys.push(CellKey::new(method.clone(), t, s));
                }
            }
        }
        keys
    }

    fn baseline_key(&self) -> String {
        let mut h = FieldHasher::new();
        h.field("baseline")
            .field(self.runner.identity())
            .field(&self.manifest.target_class);
        for (i, item) in self.dataset.items().iter().enumerate() {
            h.field(&item.id)
                .field(&self.digests.image[i])
                .field(&self.digests.gt[i]);
        }
        h.finish()
    }

    fn uses_rerun(&self, strategy: StrategyKind) -> bool {
        !(strategy.requires_reference() && self.manifest.s3_mode == S3Mode::MaskVsReference)
    }

    fn cell_cache_key(&self, key: &CellKey, baseline: &Baseline) -> String {
        let rerun = self.uses_rerun(key.strategy);
        let mut h = FieldHasher::new();
        h.field("cell")
            .field(&key.method)
            .field(key.threshold.value().to_le_bytes())
            .field(key.strategy.id())
            .field(if rerun { "rerun" } else { "mask" })
            .field(&self.manifest.target_class);
        if rerun {
            h.field(self.runner.identity()).field([self.manifest.fill.fill]);
        }
        let heatmaps = &self.digests.heatmaps[&key.method];
        for (i, item) in self.dataset.items().iter().enumerate() {
            h.field(&item.id)
                .field(&self.digests.image[i])
                .field(&self.digests.gt[i])
                .field(&heatmaps[i]);
            if key.strategy == StrategyKind::S3XaiPm {
                h.field(&baseline.pm_digests[i]);
            }
        }
        h.finish()
    }

    /// Predicts the original images and scores them against ground truth.
    /// Predictions are kept under `<out>/pred/baseline/`.
    pub fn run_baseline(&self) -> Result<Baseline> {
        let wrap = |image: Option<&str>| {
            let image = image.map(str::to_string);
            move |e| Error::Baseline {
                image: image.clone(),
                source: Box::new(e),
            }
        };
        let items = self.dataset.items();
        let pred_dir = self.out().join("pred").join("baseline");
        let cacheable = !self.runner.baseline_only();
        let key = self.baseline_key();

        let cached = cacheable
            .then(|| self.cache.get(&key))
            .flatten()
            .filter(|rows| {
                rows.len() == items.len()
                    && items
                        .iter()
                        .all(|i| pred_dir.join(format!("{}.png", i.id)).is_file())
            });
        let per_image = match cached {
            Some(rows) => {
                log::info!("baseline: using cached counts");
                rows
            }
            None => {
                let batch = BatchManifest::new(
                    self.manifest.target_class.clone(),
                    items
                        .iter()
                        .map(|i| BatchEntry {
                            id: i.id.clone(),
                            image: i.image.clone(),
                        })
                        .collect(),
                );
                let masks = run_batch(self.runner.as_ref(), &batch, &pred_dir).map_err(wrap(None))?;
                let rows = items
                    .par_iter()
                    .map(|item| {
                        let mask = &masks[&item.id];
                        let score = || -> Result<_> {
                            raster::store_mask(mask, pred_dir.join(format!("{}.png", item.id)))?;
                            let gt = raster::load_mask(&item.gt, MaskRole::GroundTruth)?;
                            Ok((item.id.clone(), confusion(mask, &gt)?))
                        };
                        score().map_err(wrap(Some(&item.id)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                if cacheable {
                    self.cache.put(&key, &rows)?;
                }
                rows
            }
        };

        let pm_paths: Vec<PathBuf> = items
            .iter()
            .map(|i| {
                i.pred
                    .clone()
                    .unwrap_or_else(|| pred_dir.join(format!("{}.png", i.id)))
            })
            .collect();
        let pm_digests = pm_paths
            .par_iter()
            .map(|p| file_digest(p))
            .collect::<Result<Vec<_>>>()
            .map_err(wrap(None))?;
        let metrics = metric_set(&aggregate(per_image.iter().map(|(_, c)| c)).map_err(wrap(None))?);
        log::info!(
            "baseline: tp={} fp={} fn={} tn={}",
            metrics.counts.tp,
            metrics.counts.fp,
            metrics.counts.fn_,
            metrics.counts.tn
        );
        Ok(Baseline {
            metrics,
            per_image,
            pm_paths,
            pm_digests,
        })
    }

    /// Writes the edited images of one cell and returns the batch entries
    /// pointing at them.
    pub fn write_edits(&self, key: &CellKey, baseline: &Baseline) -> Result<Vec<BatchEntry>> {
        let dir = self.out().join("edited").join(key.rel_dir());
        let fill = self.manifest.fill;
        self.dataset
            .items()
            .par_iter()
            .enumerate()
            .map(|(i, item)| {
                let edit = || -> Result<BatchEntry> {
                    let image = raster::load_image(&item.image)?;
                    let heatmap = raster::load_heatmap(&item.heatmaps[&key.method], &key.method)?;
                    let reference = match key.strategy {
                        StrategyKind::S3XaiGt => Some(raster::load_mask(&item.gt, MaskRole::GroundTruth)?),
                        StrategyKind::S3XaiPm => {
                            Some(raster::load_mask(&baseline.pm_paths[i], MaskRole::Prediction)?)
                        }
                        _ => None,
                    };
                    let edited = perturb(&image, &heatmap, key.threshold, key.strategy, reference.as_ref(), fill)?;
                    let path = dir.join(format!("{}.png", item.id));
                    raster::store_image(&edited, &path)?;
                    Ok(BatchEntry {
                        id: item.id.clone(),
                        image: path,
                    })
                };
                edit().map_err(key.wrap(Some(&item.id)))
            })
            .collect()
    }

    fn rerun_counts(&self, key: &CellKey, baseline: &Baseline) -> Result<Vec<(String, ConfusionCounts)>> {
        if self.runner.baseline_only() {
            return Err(key.wrap(None)(Error::Runner(format!(
                "runner `{}` only serves unedited images; use a model runner or s3 mask mode",
                self.runner.identity()
            ))));
        }
        let entries = self.write_edits(key, baseline)?;
        let batch = BatchManifest::new(self.manifest.target_class.clone(), entries);
        let pred_dir = self.out().join("pred").join(key.rel_dir());
        let masks = run_batch(self.runner.as_ref(), &batch, &pred_dir).map_err(key.wrap(None))?;
        self.dataset
            .items()
            .par_iter()
            .map(|item| {
                let score = || -> Result<_> {
                    let gt = raster::load_mask(&item.gt, MaskRole::GroundTruth)?;
                    Ok((item.id.clone(), confusion(&masks[&item.id], &gt)?))
                };
                score().map_err(key.wrap(Some(&item.id)))
            })
            .collect()
    }

    fn mask_counts(&self, key: &CellKey, baseline: &Baseline) -> Result<Vec<(String, ConfusionCounts)>> {
        self.dataset
            .items()
            .par_iter()
            .enumerate()
            .map(|(i, item)| {
                let score = || -> Result<_> {
                    let heatmap = raster::load_heatmap(&item.heatmaps[&key.method], &key.method)?;
                    let relevance = threshold_heatmap(&heatmap, key.threshold).with_role(MaskRole::Prediction);
                    let reference = match key.strategy {
                        StrategyKind::S3XaiPm => raster::load_mask(&baseline.pm_paths[i], MaskRole::Prediction)?,
                        _ => raster::load_mask(&item.gt, MaskRole::GroundTruth)?,
                    };
                    Ok((item.id.clone(), confusion(&relevance, &reference)?))
                };
                score().map_err(key.wrap(Some(&item.id)))
            })
            .collect()
    }

    /// Computes one cell. In rerun mode the edited images go through the
    /// runner and are scored against ground truth; S3 cells in mask mode
    /// score the relevance mask against the reference mask directly.
    pub fn run_cell(&self, key: &CellKey, baseline: &Baseline) -> Result<CellRun> {
        let cache_key = self.cell_cache_key(key, baseline);
        let per_image = match self.cache.get(&cache_key) {
            Some(rows) if rows.len() == self.dataset.len() => {
                log::debug!("{}/{}/{}: cached", key.method, key.threshold, key.strategy);
                rows
            }
            _ => {
                let rows = if self.uses_rerun(key.strategy) {
                    self.rerun_counts(key, baseline)?
                } else {
                    self.mask_counts(key, baseline)?
                };
                self.cache.put(&cache_key, &rows).map_err(key.wrap(None))?;
                rows
            }
        };
        let metrics = metric_set(&aggregate(per_image.iter().map(|(_, c)| c)).map_err(key.wrap(None))?);
        // Mask-mode S3 PM scores against a different population.
        let delta = if !self.uses_rerun(key.strategy) && key.strategy == StrategyKind::S3XaiPm {
            None
        } else {
            Some(delta_set(&baseline.metrics, &metrics).map_err(key.wrap(None))?)
        };
        Ok(CellRun {
            metrics,
            delta,
            per_image,
        })
    }

    /// Runs the baseline and every cell without persisting anything beyond
    /// intermediate artifacts and the cache. A failed cell is recorded and
    /// does not stop its siblings; a failed baseline aborts the run.
    pub fn evaluate(&self) -> Result<RunResult> {
        self.pool()?.install(|| self.evaluate_inner())
    }

    fn evaluate_inner(&self) -> Result<RunResult> {
        let baseline = self.run_baseline()?;
        let keys = self.cell_keys();
        let runs: Vec<Result<CellRun>> = keys.par_iter().map(|k| self.run_cell(k, &baseline)).collect();

        let mut per_image: Vec<PerImageRow> = baseline
            .per_image
            .iter()
            .map(|(id, c)| PerImageRow {
                strategy: None,
                threshold: None,
                method: None,
                image: id.clone(),
                counts: *c,
            })
            .collect();
        let mut cells = Vec::with_capacity(keys.len());
        for (key, run) in keys.iter().zip(runs) {
            let outcome = match run {
                Ok(run) => {
                    per_image.extend(run.per_image.iter().map(|(id, c)| PerImageRow {
                        strategy: Some(key.strategy),
                        threshold: Some(key.threshold.value()),
                        method: Some(key.method.clone()),
                        image: id.clone(),
                        counts: *c,
                    }));
                    CellOutcome::Ok {
                        metrics: run.metrics,
                        delta: run.delta,
                    }
                }
                Err(e) => {
                    log::error!("{e}");
                    CellOutcome::Failed { error: e.to_string() }
                }
            };
            cells.push(CellResult {
                method: key.method.clone(),
                threshold: key.threshold.value(),
                strategy: key.strategy,
                outcome,
            });
        }

        Ok(RunResult {
            schema: RESULT_SCHEMA,
            metadata: self.metadata(),
            baseline: baseline.metrics,
            cells,
            per_image,
        })
    }

    fn metadata(&self) -> RunMetadata {
        let m = &self.manifest;
        let runner = self.runner.identity();
        let mut h = FieldHasher::new();
        h.field(&runner)
            .field(&m.target_class)
            .field([m.fill.fill])
            .field(m.s3_mode.to_string());
        for method in &m.methods {
            h.field(method);
        }
        for t in &m.thresholds {
            h.field(t.value().to_le_bytes());
        }
        for s in &m.strategies {
            h.field(s.id());
        }
        for (i, item) in self.dataset.items().iter().enumerate() {
            h.field(&item.id).field(&self.digests.image[i]).field(&self.digests.gt[i]);
            for method in &m.methods {
                h.field(&self.digests.heatmaps[method][i]);
            }
        }
        RunMetadata {
            harness_version: env!("CARGO_PKG_VERSION").to_string(),
            manifest_hash: h.finish(),
            runner,
            target_class: m.target_class.clone(),
            fill: m.fill.fill,
            s3_mode: m.s3_mode,
            pm_source: if self.dataset.has_pred() {
                PmSource::Dataset
            } else {
                PmSource::Baseline
            },
            methods: m.methods.clone(),
            thresholds: m.thresholds.iter().map(|t| t.value()).collect(),
            strategies: m.strategies.clone(),
            images: self.dataset.len(),
        }
    }

    /// [`Pipeline::evaluate`] followed by writing `<out>/results/`.
    pub fn run_all(&self) -> Result<RunResult> {
        let started = chrono::Utc::now();
        let result = self.evaluate()?;
        let finished = chrono::Utc::now();
        let dir = self.out().join("results");
        result.save(dir.join("results.json"))?;
        write_text(&dir.join("cells.csv"), &crate::report::export_csv(&result))?;
        write_text(&dir.join("per_image.csv"), &result.per_image_csv())?;

        let info = RunInfo {
            started_at: started.to_rfc3339(),
            finished_at: finished.to_rfc3339(),
            jobs: self.jobs,
            manifest: &self.manifest,
        };
        write_text(&dir.join("run_info.json"), &to_pretty_json(&info))?;

        let failures_path = dir.join("failures.json");
        let failures: Vec<&CellResult> = result.failures().collect();
        if failures.is_empty() {
            if failures_path.exists() {
                std::fs::remove_file(&failures_path).map_err(|e| Error::io(&failures_path, e))?;
            }
        } else {
            log::error!("{} of {} cells failed", failures.len(), result.cells.len());
            write_text(&failures_path, &to_pretty_json(&failures))?;
        }
        Ok(result)
    }
}

/// Non-deterministic run details kept apart from `results.json`.
#[derive(Serialize)]
struct RunInfo<'a> {
    started_at: String,
    finished_at: String,
    jobs: usize,
    manifest: &'a EvaluationManifest,
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&raster::read_file(path)?))
}

fn digest_inputs(dataset: &Dataset) -> Result<Digests> {
    let items = dataset.items();
    let image = items.par_iter().map(|i| file_digest(&i.image)).collect::<Result<_>>()?;
    let gt = items.par_iter().map(|i| file_digest(&i.gt)).collect::<Result<_>>()?;
    let methods: Vec<&String> = items.first().map(|i| i.heatmaps.keys().collect()).unwrap_or_default();
    let mut heatmaps = BTreeMap::new();
    for m in methods {
        let digests = items
            .par_iter()
            .map(|i| file_digest(&i.heatmaps[m]))
            .collect::<Result<_>>()?;
        heatmaps.insert(m.clone(), digests);
    }
    Ok(Digests { image, gt, heatmaps })
}

/// Confusion counts for every `<id>.png` present in both directories.
/// Fails if either directory has an id the other lacks.
pub fn score_mask_dirs(pred_dir: &Path, ref_dir: &Path) -> Result<Vec<(String, ConfusionCounts)>> {
    let list = |dir: &Path| -> Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("png") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    };
    let pred_ids = list(pred_dir)?;
    let ref_ids = list(ref_dir)?;
    if pred_ids != ref_ids {
        let only_pred: Vec<_> = pred_ids.iter().filter(|i| !ref_ids.contains(i)).collect();
        let only_ref: Vec<_> = ref_ids.iter().filter(|i| !pred_ids.contains(i)).collect();
        return Err(Error::Config(format!(
            "unmatched mask ids: only in {}: {only_pred:?}; only in {}: {only_ref:?}",
            pred_dir.display(),
            ref_dir.display()
        )));
    }
    if pred_ids.is_empty() {
        return Err(Error::Config(format!("no .png masks in {}", pred_dir.display())));
    }
    pred_ids
        .into_iter()
        .map(|id| {
            let pred = raster::load_mask(pred_dir.join(format!("{id}.png")), MaskRole::Prediction)?;
            let reference = raster::load_mask(ref_dir.join(format!("{id}.png")), MaskRole::GroundTruth)?;
            let c = confusion(&pred, &reference)?;
            Ok((id, c))
        })
        .collect()
}
