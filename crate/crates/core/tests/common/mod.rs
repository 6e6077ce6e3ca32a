#![allow(dead_code)]

pub mod paper;

use segxai::metrics::ConfusionCounts;
use segxai::raster::{BinaryMask, Heatmap, ImageRaster, MaskRole};

use rand::Rng;

/// Plain per-pixel loop, independent of `segxai::metrics::confusion`.
pub fn oracle_counts(pred: &[bool], reference: &[bool]) -> ConfusionCounts {
    assert_eq!(pred.len(), reference.len());
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for i in 0..pred.len() {
        match (pred[i], reference[i]) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    ConfusionCounts { tp, fp, fn_, tn }
}

pub fn random_bits(rng: &mut impl Rng, n: usize, density: f64) -> Vec<bool> {
    (0..n).map(|_| rng.gen_bool(density)).collect()
}

pub fn random_mask(rng: &mut impl Rng, w: u32, h: u32, role: MaskRole) -> BinaryMask {
    let density = rng.gen_range(0.0..=1.0);
    BinaryMask::new(w, h, random_bits(rng, (w * h) as usize, density), role).unwrap()
}

/// Heatmap values drawn from a small grid so that ties with thresholds occur.
pub fn random_heatmap(rng: &mut impl Rng, w: u32, h: u32) -> Heatmap {
    let values = (0..w * h)
        .map(|_| {
            if rng.gen_bool(0.3) {
                rng.gen_range(0..=10) as f32 / 10.0
            } else {
                rng.gen_range(0.0f32..=1.0)
            }
        })
        .collect();
    Heatmap::new(w, h, values, "random").unwrap()
}

pub fn random_image(rng: &mut impl Rng, w: u32, h: u32) -> ImageRaster {
    let channels = if rng.gen_bool(0.5) { 1 } else { 3 };
    let samples = (0..w * h * channels as u32).map(|_| rng.gen()).collect();
    ImageRaster::new(w, h, channels, samples).unwrap()
}

/// Exact `num/den` rounded half away from zero to `decimals`, via integers.
pub fn round_ratio(num: u64, den: u64, scale: u32) -> f64 {
    let s = 10u128.pow(scale);
    let q = (2 * num as u128 * s + den as u128) / (2 * den as u128);
    q as f64 / s as f64
}

pub mod synth {
    use std::collections::BTreeMap;
    use std::path::{Path, PathBuf};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    use segxai::metrics::ConfusionCounts;
    use segxai::perturbation::{StrategyKind, Threshold};
    use segxai::pipeline::EvaluationManifest;
    use segxai::raster::{self, MaskRole};
    use segxai::runner::{BatchManifest, BuiltinKind, ModelRunner, RunnerSpec};
    use segxai::synthetic::{generate, SyntheticSpec};
    use segxai::Result;

    pub struct Fixture {
        pub dir: tempfile::TempDir,
        pub root: PathBuf,
        pub spec: SyntheticSpec,
        pub ids: Vec<String>,
    }

    impl Fixture {
        pub fn new(images: usize) -> Self {
            let dir = tempfile::tempdir().unwrap();
            let root = dir.path().join("data");
            let spec = SyntheticSpec {
                images,
                ..Default::default()
            };
            let ids = generate(&root, &spec).unwrap();
            Self { dir, root, spec, ids }
        }

        pub fn out(&self, name: &str) -> PathBuf {
            self.dir.path().join(name)
        }

        pub fn manifest(&self, out: &str, kind: BuiltinKind) -> EvaluationManifest {
            EvaluationManifest::new(
                &self.root,
                self.spec.method_ids(),
                RunnerSpec::builtin(kind),
                self.out(out),
            )
        }

        fn heatmap_path(&self, method: &str, id: &str) -> PathBuf {
            let dir = self.root.join("heatmaps").join(method);
            let npy = dir.join(format!("{id}.npy"));
            if npy.exists() {
                npy
            } else {
                dir.join(format!("{id}.png"))
            }
        }

        /// Set-algebra oracle for the visibility-prob runner on this
        /// fixture. The images hold no fill-colored pixels, so the model
        /// predicts `prob >= 0.5` on visible pixels and the baseline
        /// prediction (the PM) is `prob >= 0.5` everywhere.
        pub fn oracle(&self, method: &str, t: f64, strategy: StrategyKind) -> ConfusionCounts {
            let mut total = ConfusionCounts::default();
            for id in &self.ids {
                let gt = raster::load_mask(self.root.join(format!("gt/{id}.png")), MaskRole::GroundTruth).unwrap();
                let prob = raster::load_heatmap(self.root.join(format!("prob/{id}.npy")), "prob").unwrap();
                let heat = raster::load_heatmap(self.heatmap_path(method, id), method).unwrap();
                for i in 0..gt.pixel_count() {
                    let g = gt.bits()[i];
                    let p = prob.values()[i] as f64 >= 0.5;
                    let r = heat.values()[i] as f64 >= t;
                    let visible = match strategy {
                        StrategyKind::S1BackgroundOnly => !r,
                        StrategyKind::S2HighlightedOnly => r,
                        StrategyKind::S3XaiGt => r || g,
                        StrategyKind::S3XaiPm => r || p,
                    };
                    let pred = p && visible;
                    match (pred, g) {
                        (true, true) => total.tp += 1,
                        (true, false) => total.fp += 1,
                        (false, true) => total.fn_ += 1,
                        (false, false) => total.tn += 1,
                    }
                }
            }
            total
        }

        /// Model output on the unedited images.
        pub fn oracle_baseline(&self) -> ConfusionCounts {
            let mut total = ConfusionCounts::default();
            for id in &self.ids {
                let gt = raster::load_mask(self.root.join(format!("gt/{id}.png")), MaskRole::GroundTruth).unwrap();
                let prob = raster::load_heatmap(self.root.join(format!("prob/{id}.npy")), "prob").unwrap();
                for i in 0..gt.pixel_count() {
                    match (prob.values()[i] as f64 >= 0.5, gt.bits()[i]) {
                        (true, true) => total.tp += 1,
                        (true, false) => total.fp += 1,
                        (false, true) => total.fn_ += 1,
                        (false, false) => total.tn += 1,
                    }
                }
            }
            total
        }
    }

    pub fn thresholds(values: &[f64]) -> Vec<Threshold> {
        values.iter().map(|&t| Threshold::new(t).unwrap()).collect()
    }

    /// Wraps a runner, counting `predict` calls and optionally failing
    /// batches whose manifest path contains a marker.
    pub struct Counting {
        pub inner: Box<dyn ModelRunner>,
        pub calls: AtomicUsize,
        pub fail_marker: Option<String>,
    }

    impl Counting {
        pub fn new(inner: Box<dyn ModelRunner>) -> Arc<Self> {
            Arc::new(Self {
                inner,
                calls: AtomicUsize::new(0),
                fail_marker: None,
            })
        }

        pub fn failing(inner: Box<dyn ModelRunner>, marker: &str) -> Arc<Self> {
            Arc::new(Self {
                inner,
                calls: AtomicUsize::new(0),
                fail_marker: Some(marker.into()),
            })
        }

        pub fn calls(&self) -> usize {
            self.calls.load(Ordering::SeqCst)
        }
    }

    impl ModelRunner for Counting {
        fn identity(&self) -> String {
            self.inner.identity()
        }

        fn predict(
            &self,
            manifest: &BatchManifest,
            manifest_path: &Path,
            out_dir: &Path,
        ) -> Result<BTreeMap<String, segxai::raster::BinaryMask>> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if let Some(m) = &self.fail_marker {
                if manifest_path.to_string_lossy().contains(m.as_str()) {
                    return Err(segxai::Error::Runner(format!("injected failure for {m}")));
                }
            }
            self.inner.predict(manifest, manifest_path, out_dir)
        }
    }
}
