//! Deterministic toy datasets for tests and demos.
//!
//! Images never contain a pixel whose channels all equal the fill sample, so
//! the visibility-prob runner can tell edited pixels from original ones.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::perturbation::FillPolicy;
use crate::raster::{self, BinaryMask, Heatmap, HeatmapEncoding, ImageRaster, MaskRole};

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub images: usize,
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    /// Method id and heatmap encoding per synthetic explanation method.
    pub methods: Vec<(String, HeatmapEncoding)>,
    pub fill: FillPolicy,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            images: 20,
            width: 32,
            height: 32,
            channels: 3,
            methods: vec![
                ("focused".into(), HeatmapEncoding::Npy),
                ("diffuse".into(), HeatmapEncoding::Png16),
            ],
            fill: FillPolicy::default(),
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn method_ids(&self) -> Vec<String> {
        self.methods.iter().map(|(m, _)| m.clone()).collect()
    }
}

/// Writes `images/`, `gt/`, `prob/` and `heatmaps/<method>/` under `root`
/// and returns the generated ids in order.
///
/// Ground truth is a union of random rectangles. The probability map leans
/// towards ground truth, so the visibility-prob model is imperfect but
/// informative. The first method's heatmap is a noisy copy of the ground
/// truth; later methods are increasingly noisy.
pub fn generate(root: &Path, spec: &SyntheticSpec) -> Result<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (spec.width, spec.height);
    let n = (w * h) as usize;
    let mut ids = Vec::with_capacity(spec.images);

    for i in 0..spec.images {
        let id = format!("img_{i:03}");

        let samples = (0..n * spec.channels as usize)
            .map(|_| loop {
                let s: u8 = rng.gen();
                if s != spec.fill.fill {
                    break s;
                }
            })
            .collect();
        let image = ImageRaster::new(w, h, spec.channels, samples)?;

        let mut gt = vec![false; n];
        for _ in 0..rng.gen_range(1..=3) {
            let (x0, y0) = (rng.gen_range(0..w), rng.gen_range(0..h));
            let (x1, y1) = (rng.gen_range(x0..w) + 1, rng.gen_range(y0..h) + 1);
            for y in y0..y1 {
                for x in x0..x1 {
                    gt[(y * w + x) as usize] = true;
                }
            }
        }
        let gt = BinaryMask::new(w, h, gt, MaskRole::GroundTruth)?;

        let prob: Vec<f32> = gt
            .bits()
            .iter()
            .map(|&g| if g { rng.gen_range(0.3..1.0) } else { rng.gen_range(0.0..0.7) })
            .collect();
        let prob = Heatmap::new(w, h, prob, "prob")?;

        raster::store_image(&image, path(root, "images", &id, "png"))?;
        raster::store_mask(&gt, path(root, "gt", &id, "png"))?;
        raster::store_heatmap(&prob, path(root, "prob", &id, "npy"), HeatmapEncoding::Npy)?;

        for (k, (method, encoding)) in spec.methods.iter().enumerate() {
            let noise = 0.2 + 0.3 * k as f32;
            let values: Vec<f32> = gt
                .bits()
                .iter()
                .map(|&g| {
                    let signal = if g { 0.7 } else { 0.2 };
                    (signal + rng.gen_range(-noise..noise)).clamp(0.0, 1.0)
                })
                .collect();
            let heatmap = Heatmap::new(w, h, values, method.clone())?;
            let dir = root.join("heatmaps").join(method);
            raster::store_heatmap(
                &heatmap,
                dir.join(format!("{id}.{}", encoding.extension())),
                *encoding,
            )?;
        }
        ids.push(id);
    }
    Ok(ids)
}

fn path(root: &Path, dir: &str, id: &str, ext: &str) -> PathBuf {
    root.join(dir).join(format!("{id}.{ext}"))
}
