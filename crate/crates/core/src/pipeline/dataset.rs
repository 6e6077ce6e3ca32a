use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Files belonging to one dataset image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetItem {
    pub id: String,
    pub image: PathBuf,
    pub gt: PathBuf,
    /// Precomputed prediction from `pred/`, when that directory exists.
    pub pred: Option<PathBuf>,
    pub heatmaps: BTreeMap<String, PathBuf>,
}

/// A scanned dataset root:
///
/// ```text
/// images/<id>.png
/// gt/<id>.png
/// heatmaps/<method>/<id>.{npy,png}
/// pred/<id>.png        (optional)
/// ```
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    items: Vec<DatasetItem>,
}

impl Dataset {
    pub fn scan(root: impl AsRef<Path>, methods: &[String]) -> Result<Self> {
        let root = root.as_ref();
        if !root.is_dir() {
            return Err(Error::Config(format!(
                "dataset root {} is not a directory",
                root.display()
            )));
        }
        let images_dir = require_dir(root, "images")?;
        let gt_dir = require_dir(root, "gt")?;
        let pred_dir = root.join("pred");
        let pred_dir = pred_dir.is_dir().then_some(pred_dir);

        let ids = png_stems(&images_dir)?;
        if ids.is_empty() {
            return Err(Error::Config(format!(
                "no .png images in {}",
                images_dir.display()
            )));
        }

        let mut method_dirs = Vec::with_capacity(methods.len());
        for m in methods {
            let dir = root.join("heatmaps").join(m);
            if !dir.is_dir() {
                return Err(Error::Config(format!(
                    "missing heatmap directory {} for method `{m}`",
                    dir.display()
                )));
            }
            method_dirs.push((m.clone(), dir));
        }

        let mut items = Vec::with_capacity(ids.len());
        for id in ids {
            let gt = gt_dir.join(format!("{id}.png"));
            if !gt.is_file() {
                return Err(Error::Config(format!(
                    "image `{id}` has no ground-truth mask (expected {})",
                    gt.display()
                )));
            }
            let pred = match &pred_dir {
                Some(dir) => {
                    let p = dir.join(format!("{id}.png"));
                    if !p.is_file() {
                        return Err(Error::Config(format!(
                            "pred/ exists but has no mask for image `{id}`"
                        )));
                    }
                    Some(p)
                }
                None => None,
            };
            let mut heatmaps = BTreeMap::new();
            for (m, dir) in &method_dirs {
                heatmaps.insert(m.clone(), find_heatmap(dir, &id, m)?);
            }
            items.push(DatasetItem {
                image: images_dir.join(format!("{id}.png")),
                id,
                gt,
                pred,
                heatmaps,
            });
        }
        Ok(Self {
            root: root.to_path_buf(),
            items,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Items in ascending id order.
    pub fn items(&self) -> &[DatasetItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn has_pred(&self) -> bool {
        self.items.first().is_some_and(|i| i.pred.is_some())
    }
}

fn require_dir(root: &Path, name: &str) -> Result<PathBuf> {
    let dir = root.join(name);
    if dir.is_dir() {
        Ok(dir)
    } else {
        Err(Error::Config(format!(
            "missing {name}/ directory: {}",
            dir.display()
        )))
    }
}

fn png_stems(dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") || !path.is_file() {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            ids.push(stem.to_string());
        }
    }
    ids.sort();
    Ok(ids)
}

fn find_heatmap(dir: &Path, id: &str, method: &str) -> Result<PathBuf> {
    let npy = dir.join(format!("{id}.npy"));
    let png = dir.join(format!("{id}.png"));
    match (npy.is_file(), png.is_file()) {
        (true, false) => Ok(npy),
        (false, true) => Ok(png),
        (true, true) => Err(Error::Config(format!(
            "method `{method}` has both .npy and .png heatmaps for image `{id}`"
        ))),
        (false, false) => Err(Error::Config(format!(
            "method `{method}` has no heatmap for image `{id}` in {}",
            dir.display()
        ))),
    }
}
