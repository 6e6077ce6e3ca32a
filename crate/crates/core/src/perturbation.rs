//! Relevance masks and strategy-driven image edits.
//!
//! A heatmap thresholded at `t` yields the relevance mask (pixels with value
//! `>= t`). Each strategy turns the relevance mask into a visibility mask;
//! pixels outside it are overwritten with the fill sample before the edited
//! image goes back through the model.
//!
//! | strategy | visible pixels          |
//! |----------|-------------------------|
//! | `s1`     | not relevant            |
//! | `s2`     | relevant                |
//! | `s3gt`   | relevant or ground truth |
//! | `s3pm`   | relevant or predicted   |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Heatmap, ImageRaster, MaskRole};

/// A saliency cut-off in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidThreshold(value));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Threshold::new(v).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("invalid threshold `{s}`")))?;
        Threshold::new(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyKind {
    /// Highlighted pixels are masked out; background stays.
    #[serde(rename = "s1")]
    S1BackgroundOnly,
    /// Only highlighted pixels stay.
    #[serde(rename = "s2")]
    S2HighlightedOnly,
    /// Highlighted pixels plus the ground-truth mask stay.
    #[serde(rename = "s3gt")]
    S3XaiGt,
    /// Highlighted pixels plus the model's predicted mask stay.
    #[serde(rename = "s3pm")]
    S3XaiPm,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::S1BackgroundOnly,
        StrategyKind::S2HighlightedOnly,
        StrategyKind::S3XaiGt,
        StrategyKind::S3XaiPm,
    ];

    /// Short identifier used in flags, paths and exports.
    pub fn id(self) -> &'static str {
        match self {
            StrategyKind::S1BackgroundOnly => "s1",
            StrategyKind::S2HighlightedOnly => "s2",
            StrategyKind::S3XaiGt => "s3gt",
            StrategyKind::S3XaiPm => "s3pm",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            StrategyKind::S1BackgroundOnly => "S1 (Background Only)",
            StrategyKind::S2HighlightedOnly => "S2 (Highlighted Only)",
            StrategyKind::S3XaiGt => "S3 XAI-GT",
            StrategyKind::S3XaiPm => "S3 XAI-PM",
        }
    }

    pub fn requires_reference(self) -> bool {
        matches!(self, StrategyKind::S3XaiGt | StrategyKind::S3XaiPm)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "s1" => Ok(StrategyKind::S1BackgroundOnly),
            "s2" => Ok(StrategyKind::S2HighlightedOnly),
            "s3gt" | "s3-gt" => Ok(StrategyKind::S3XaiGt),
            "s3pm" | "s3-pm" => Ok(StrategyKind::S3XaiPm),
            other => Err(Error::Config(format!(
                "unknown strategy `{other}` (expected s1, s2, s3gt or s3pm)"
            ))),
        }
    }
}

/// Sample written to every channel of a masked-out pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FillPolicy {
    pub fill: u8,
}

impl FillPolicy {
    pub fn new(fill: u8) -> Self {
        Self { fill }
    }
}

/// Relevance mask: pixel positive iff `heatmap >= threshold`.
pub fn threshold_heatmap(heatmap: &Heatmap, threshold: Threshold) -> BinaryMask {
    let t = threshold.value();
    let bits = heatmap.values().iter().map(|&v| v as f64 >= t).collect();
    BinaryMask::new(heatmap.width(), heatmap.height(), bits, MaskRole::Relevance)
        .expect("heatmap dimensions are already validated")
}

/// Pixels that remain visible under `strategy`.
///
/// `reference` must be the ground-truth mask for [`StrategyKind::S3XaiGt`],
/// the predicted mask for [`StrategyKind::S3XaiPm`], and absent otherwise.
pub fn visible_set(
    strategy: StrategyKind,
    relevance: &BinaryMask,
    reference: Option<&BinaryMask>,
) -> Result<BinaryMask> {
    let visible = match (strategy, reference) {
        (StrategyKind::S1BackgroundOnly, None) => relevance.complement(),
        (StrategyKind::S2HighlightedOnly, None) => relevance.clone(),
        (StrategyKind::S3XaiGt | StrategyKind::S3XaiPm, Some(reference)) => {
            reference.ensure_dims(relevance.dims(), "reference mask")?;
            relevance.union(reference)?
        }
        (s, None) => return Err(Error::MissingReference(s)),
        (s, Some(_)) => return Err(Error::UnexpectedReference(s)),
    };
    Ok(visible.with_role(MaskRole::Visibility))
}

/// Keeps pixels where `visibility` is positive and writes the fill sample on
/// every channel elsewhere.
pub fn apply_visibility(
    image: &ImageRaster,
    visibility: &BinaryMask,
    fill: FillPolicy,
) -> Result<ImageRaster> {
    visibility.ensure_dims(image.dims(), "visibility mask")?;
    let channels = image.channels() as usize;
    let mut samples = image.samples().to_vec();
    for (pixel, &keep) in samples.chunks_exact_mut(channels).zip(visibility.bits()) {
        if !keep {
            pixel.fill(fill.fill);
        }
    }
    ImageRaster::new(image.width(), image.height(), image.channels(), samples)
}

/// Threshold, select and apply in one step.
pub fn perturb(
    image: &ImageRaster,
    heatmap: &Heatmap,
    threshold: Threshold,
    strategy: StrategyKind,
    reference: Option<&BinaryMask>,
    fill: FillPolicy,
) -> Result<ImageRaster> {
    heatmap_matches(heatmap, image.dims())?;
    let relevance = threshold_heatmap(heatmap, threshold);
    let visible = visible_set(strategy, &relevance, reference)?;
    apply_visibility(image, &visible, fill)
}

pub(crate) fn heatmap_matches(heatmap: &Heatmap, expected: (u32, u32)) -> Result<()> {
    if heatmap.dims() != expected {
        return Err(Error::DimensionMismatch {
            what: format!("heatmap ({})", heatmap.method()),
            expected,
            found: heatmap.dims(),
        });
    }
    Ok(())
}
