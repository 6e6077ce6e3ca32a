//! The model boundary.
//!
//! Every runner maps a batch of images to predicted masks. External models
//! speak a file protocol: the harness writes a JSON batch manifest, invokes
//!
//! ```text
//! <command...> --manifest <manifest.json> --out <dir>
//! ```
//!
//! and expects `<dir>/<id>.png` (8-bit single-channel mask) for every entry
//! plus exit status 0. Two builtin runners exist for testing without a model:
//! `identity-gt` returns the ground-truth mask, and `visibility-prob`
//! predicts a pixel positive when a registered probability map is `>= 0.5`
//! and the pixel was not filled by a perturbation.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use crate::digest::FieldHasher;
use crate::error::{Error, Result};
use crate::perturbation::FillPolicy;
use crate::raster::{self, BinaryMask, Heatmap, ImageRaster, MaskRole};

pub const BATCH_SCHEMA: u32 = 1;
pub const DEFAULT_TIMEOUT_SECS: u64 = 600;
const STDERR_TAIL_LINES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunnerSpec {
    #[serde(flatten)]
    pub mode: RunnerMode,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_SECS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum RunnerMode {
    Subprocess {
        command: Vec<String>,
        /// Whether distinct batches may be in flight at the same time.
        #[serde(default)]
        reentrant: bool,
    },
    Precomputed {
        dir: PathBuf,
    },
    Builtin {
        kind: BuiltinKind,
        /// Probability maps for `visibility-prob`, `<prob_dir>/<id>.{npy,png}`.
        /// Relative to the dataset root; defaults to `prob`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prob_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinKind {
    IdentityGt,
    VisibilityProb,
}

impl RunnerSpec {
    pub fn builtin(kind: BuiltinKind) -> Self {
        Self {
            mode: RunnerMode::Builtin {
                kind,
                prob_dir: None,
            },
            timeout_secs: DEFAULT_TIMEOUT_SECS,
        }
    }

    pub fn subprocess<S: Into<String>>(command: impl IntoIterator<Item = S>) -> Self {
        Self {
            mode: RunnerMode::Subprocess {
                command: command.into_iter().map(Into::into).collect(),
                reentrant: false,
            },
            timeout_secs: DEFAULT_TIMEOUT_SECS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout_secs == 0 {
            return Err(Error::Config("runner timeout must be positive".into()));
        }
        if let RunnerMode::Subprocess { command, .. } = &self.mode {
            if command.is_empty() || command[0].trim().is_empty() {
                return Err(Error::Config("subprocess runner needs a command".into()));
            }
        }
        Ok(())
    }

    /// Builds the runner. Relative paths resolve against `dataset_root`;
    /// builtin runners read their ground truth / probability maps from there.
    pub fn instantiate(&self, dataset_root: &Path, fill: FillPolicy) -> Result<Box<dyn ModelRunner>> {
        self.validate()?;
        let timeout = Duration::from_secs(self.timeout_secs);
        Ok(match &self.mode {
            RunnerMode::Subprocess { command, reentrant } => Box::new(SubprocessRunner::new(
                command.clone(),
                *reentrant,
                timeout,
            )),
            RunnerMode::Precomputed { dir } => {
                Box::new(PrecomputedRunner::new(resolve(dataset_root, dir)))
            }
            RunnerMode::Builtin {
                kind: BuiltinKind::IdentityGt,
                ..
            } => Box::new(IdentityGtRunner::new(dataset_root.join("gt"))),
            RunnerMode::Builtin {
                kind: BuiltinKind::VisibilityProb,
                prob_dir,
            } => {
                let dir = resolve(dataset_root, prob_dir.as_deref().unwrap_or(Path::new("prob")));
                Box::new(VisibilityProbRunner::from_dir(&dir, fill)?)
            }
        })
    }
}

fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub id: String,
    pub image: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub schema: u32,
    pub target_class: String,
    pub entries: Vec<BatchEntry>,
}

impl BatchManifest {
    pub fn new(target_class: impl Into<String>, entries: Vec<BatchEntry>) -> Self {
        Self {
            schema: BATCH_SCHEMA,
            target_class: target_class.into(),
            entries,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != BATCH_SCHEMA {
            return Err(Error::Schema {
                found: self.schema as u64,
                expected: BATCH_SCHEMA as u64,
            });
        }
        let mut seen = BTreeSet::new();
        for entry in &self.entries {
            if entry.id.is_empty() || entry.id.contains(['/', '\\']) {
                return Err(Error::BatchManifest(format!("invalid id `{}`", entry.id)));
            }
            if !seen.insert(entry.id.as_str()) {
                return Err(Error::BatchManifest(format!("duplicate id `{}`", entry.id)));
            }
            if !entry.image.is_file() {
                return Err(Error::BatchManifest(format!(
                    "image for `{}` does not exist: {}",
                    entry.id,
                    entry.image.display()
                )));
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = raster::read_file(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

/// Anything that turns a batch of images into predicted masks.
pub trait ModelRunner: Send + Sync {
    /// Stable description used in cache keys and run metadata. Two runners
    /// with the same identity must predict identically.
    fn identity(&self) -> String;

    /// Whether this runner can only produce masks for unedited images.
    fn baseline_only(&self) -> bool {
        false
    }

    /// Produces a mask per manifest entry. `manifest_path` is the manifest
    /// already written to disk and `out_dir` exists.
    fn predict(
        &self,
        manifest: &BatchManifest,
        manifest_path: &Path,
        out_dir: &Path,
    ) -> Result<BTreeMap<String, BinaryMask>>;
}

/// Drives one batch: validates the manifest, writes it to
/// `<out_dir>/manifest.json`, invokes the runner and checks that every entry
/// got a mask with the same dimensions as its image.
pub fn run_batch(
    runner: &dyn ModelRunner,
    manifest: &BatchManifest,
    out_dir: &Path,
) -> Result<BTreeMap<String, BinaryMask>> {
    manifest.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let manifest_path = out_dir.join("manifest.json");
    manifest.write(&manifest_path)?;

    let mut produced = runner.predict(manifest, &manifest_path, out_dir)?;
    let mut masks = BTreeMap::new();
    for entry in &manifest.entries {
        let mask = produced
            .remove(&entry.id)
            .ok_or_else(|| Error::MissingMask {
                id: entry.id.clone(),
            })?;
        let image = raster::load_image(&entry.image)?;
        mask.ensure_dims(image.dims(), &format!("mask for `{}`", entry.id))?;
        masks.insert(entry.id.clone(), mask.with_role(MaskRole::Prediction));
    }
    Ok(masks)
}

pub struct SubprocessRunner {
    command: Vec<String>,
    timeout: Duration,
    reentrant: bool,
    gate: Mutex<()>,
}

impl SubprocessRunner {
    pub fn new(command: Vec<String>, reentrant: bool, timeout: Duration) -> Self {
        Self {
            command,
            timeout,
            reentrant,
            gate: Mutex::new(()),
        }
    }

    fn invoke(&self, manifest_path: &Path, out_dir: &Path) -> Result<()> {
        let display = self.command.join(" ");
        log::debug!("invoking runner: {display} --manifest {}", manifest_path.display());
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .arg("--manifest")
            .arg(manifest_path)
            .arg("--out")
            .arg(out_dir)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::RunnerSpawn {
                command: display.clone(),
                source: e,
            })?;

        let stdout = child.stdout.take().map(|s| forward_lines(s, false));
        let stderr = child.stderr.take().map(|s| forward_lines(s, true));

        let status = match child.wait_timeout(self.timeout).map_err(|e| Error::io(&self.command[0], e))? {
            Some(status) => status,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(Error::RunnerTimeout {
                    secs: self.timeout.as_secs(),
                });
            }
        };
        if let Some(h) = stdout {
            let _ = h.join();
        }
        let tail = stderr.and_then(|h| h.join().ok()).unwrap_or_default();
        if !status.success() {
            return Err(Error::RunnerExit {
                status: status.to_string(),
                stderr_tail: tail,
            });
        }
        Ok(())
    }
}

/// Passes child output through to the log; returns the last stderr lines.
fn forward_lines<R: Read + Send + 'static>(stream: R, is_stderr: bool) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut tail: Vec<String> = Vec::new();
        for line in BufReader::new(stream).lines().map_while(|l| l.ok()) {
            if is_stderr {
                log::info!(target: "segxai::runner", "{line}");
                tail.push(line);
                if tail.len() > STDERR_TAIL_LINES {
                    tail.remove(0);
                }
            } else {
                log::debug!(target: "segxai::runner", "{line}");
            }
        }
        tail.join("\n")
    })
}

impl ModelRunner for SubprocessRunner {
    fn identity(&self) -> String {
        let mut h = FieldHasher::new();
        for part in &self.command {
            h.field(part);
        }
        format!("subprocess:{}", h.finish())
    }

    fn predict(
        &self,
        manifest: &BatchManifest,
        manifest_path: &Path,
        out_dir: &Path,
    ) -> Result<BTreeMap<String, BinaryMask>> {
        {
            let _guard = if self.reentrant {
                None
            } else {
                Some(self.gate.lock().unwrap_or_else(|p| p.into_inner()))
            };
            self.invoke(manifest_path, out_dir)?;
        }
        load_masks_from(out_dir, manifest)
    }
}

fn load_masks_from(dir: &Path, manifest: &BatchManifest) -> Result<BTreeMap<String, BinaryMask>> {
    let mut masks = BTreeMap::new();
    for entry in &manifest.entries {
        let path = dir.join(format!("{}.png", entry.id));
        if !path.is_file() {
            return Err(Error::MissingMask {
                id: entry.id.clone(),
            });
        }
        masks.insert(entry.id.clone(), raster::load_mask(&path, MaskRole::Prediction)?);
    }
    Ok(masks)
}

/// Reads `<dir>/<id>.png`; cannot re-infer edited images.
pub struct PrecomputedRunner {
    dir: PathBuf,
}

impl PrecomputedRunner {
    pub fn new(dir: PathBuf) -> Self {
        Self { dir }
    }
}

impl ModelRunner for PrecomputedRunner {
    fn identity(&self) -> String {
        format!("precomputed:{}", self.dir.display())
    }

    fn baseline_only(&self) -> bool {
        true
    }

    fn predict(
        &self,
        manifest: &BatchManifest,
        _manifest_path: &Path,
        _out_dir: &Path,
    ) -> Result<BTreeMap<String, BinaryMask>> {
        load_masks_from(&self.dir, manifest)
    }
}

/// Returns `<gt_dir>/<id>.png` whatever the input image looks like.
pub struct IdentityGtRunner {
    gt_dir: PathBuf,
}

impl IdentityGtRunner {
    pub fn new(gt_dir: PathBuf) -> Self {
        Self { gt_dir }
    }
}

impl ModelRunner for IdentityGtRunner {
    fn identity(&self) -> String {
        "builtin:identity-gt".into()
    }

    fn predict(
        &self,
        manifest: &BatchManifest,
        _manifest_path: &Path,
        out_dir: &Path,
    ) -> Result<BTreeMap<String, BinaryMask>> {
        let masks = load_masks_from(&self.gt_dir, manifest)?;
        for (id, mask) in &masks {
            raster::store_mask(mask, out_dir.join(format!("{id}.png")))?;
        }
        Ok(masks)
    }
}

/// Synthetic model: positive iff `prob >= 0.5` and the pixel is visible,
/// where a pixel counts as masked when every channel equals the fill sample.
pub fn builtin_visibility_prob(
    image: &ImageRaster,
    prob: &Heatmap,
    fill: FillPolicy,
) -> Result<BinaryMask> {
    crate::perturbation::heatmap_matches(prob, image.dims())?;
    let bits = image
        .pixels()
        .zip(prob.values())
        .map(|(px, &p)| p >= 0.5 && !px.iter().all(|&s| s == fill.fill))
        .collect();
    BinaryMask::new(image.width(), image.height(), bits, MaskRole::Prediction)
}

pub struct VisibilityProbRunner {
    probs: BTreeMap<String, Heatmap>,
    fill: FillPolicy,
    fingerprint: String,
}

impl VisibilityProbRunner {
    pub fn new(probs: BTreeMap<String, Heatmap>, fill: FillPolicy) -> Self {
        let mut h = FieldHasher::new();
        for (id, p) in &probs {
            h.field(id);
            h.field(raster::encode_npy(p.height(), p.width(), p.values()));
        }
        Self {
            probs,
            fill,
            fingerprint: h.finish(),
        }
    }

    /// Registers every `<dir>/<id>.npy` / `<id>.png` probability map.
    pub fn from_dir(dir: &Path, fill: FillPolicy) -> Result<Self> {
        let mut probs = BTreeMap::new();
        let entries = std::fs::read_dir(dir)
            .map_err(|_| Error::Config(format!("probability directory {} not found", dir.display())))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            let is_map = matches!(
                path.extension().and_then(|e| e.to_str()),
                Some("npy") | Some("png")
            );
            if !is_map {
                continue;
            }
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let heatmap = raster::load_heatmap(&path, "probability")?;
            if probs.insert(id.clone(), heatmap).is_some() {
                return Err(Error::Config(format!(
                    "probability map for `{id}` exists in more than one encoding"
                )));
            }
        }
        Ok(Self::new(probs, fill))
    }
}

impl ModelRunner for VisibilityProbRunner {
    fn identity(&self) -> String {
        format!("builtin:visibility-prob:fill={}:{}", self.fill.fill, self.fingerprint)
    }

    fn predict(
        &self,
        manifest: &BatchManifest,
        _manifest_path: &Path,
        out_dir: &Path,
    ) -> Result<BTreeMap<String, BinaryMask>> {
        let mut masks = BTreeMap::new();
        for entry in &manifest.entries {
            let prob = self.probs.get(&entry.id).ok_or_else(|| Error::MissingProbability {
                id: entry.id.clone(),
            })?;
            let image = raster::load_image(&entry.image)?;
            let mask = builtin_visibility_prob(&image, prob, self.fill)?;
            raster::store_mask(&mask, out_dir.join(format!("{}.png", entry.id)))?;
            masks.insert(entry.id.clone(), mask);
        }
        Ok(masks)
    }
}
