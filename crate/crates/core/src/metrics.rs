//! Pixel confusion counts, the derived metric set, and baseline deltas.
//!
//! All metrics are exact rationals of the counts:
//!
//! - precision = TP / (TP + FP)
//! - recall    = TP / (TP + FN)
//! - F1        = 2TP / (2TP + FP + FN)
//! - IoU       = TP / (TP + FP + FN)
//!
//! A metric whose denominator is zero is undefined (`None`), never 0 or 1.
//! TP% and FN% are taken over reference-positive pixels, FP% over
//! reference-negative pixels.

use std::borrow::Borrow;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn reference_positive(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn reference_negative(&self) -> u64 {
        self.fp + self.tn
    }

    pub fn predicted_positive(&self) -> u64 {
        self.tp + self.fp
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            tp: self.tp + rhs.tp,
            fp: self.fp + rhs.fp,
            fn_: self.fn_ + rhs.fn_,
            tn: self.tn + rhs.tn,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

impl<'a> Sum<&'a ConfusionCounts> for ConfusionCounts {
    fn sum<I: Iterator<Item = &'a ConfusionCounts>>(iter: I) -> Self {
        iter.copied().sum()
    }
}

/// Tallies `pred` against `reference`. Masks must share dimensions.
pub fn confusion(pred: &BinaryMask, reference: &BinaryMask) -> Result<ConfusionCounts> {
    pred.ensure_dims(reference.dims(), "predicted mask")?;
    let mut c = ConfusionCounts::default();
    for (&p, &r) in pred.bits().iter().zip(reference.bits()) {
        match (p, r) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Component-wise sum; micro metrics are [`metric_set`] of the result.
pub fn aggregate<I>(counts: I) -> Result<ConfusionCounts>
where
    I: IntoIterator,
    I::Item: Borrow<ConfusionCounts>,
{
    let mut iter = counts.into_iter().peekable();
    if iter.peek().is_none() {
        return Err(Error::EmptyAggregate);
    }
    Ok(iter.map(|c| *c.borrow()).sum())
}

/// An exact non-negative fraction `num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    /// `None` when the denominator is zero.
    pub fn new(num: u64, den: u64) -> Option<Self> {
        (den != 0).then_some(Self { num, den })
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `100 * num / den`, computed with a single rounding.
    pub fn percent(self) -> f64 {
        (self.num as f64 * 100.0) / self.den as f64
    }

    /// Round-half-away-from-zero of `num / den * 10^scale_pow10`, exact.
    pub fn scaled_rounded(self, scale_pow10: u32) -> i128 {
        let scaled = self.num as u128 * 10u128.pow(scale_pow10);
        let den = self.den as u128;
        ((2 * scaled + den) / (2 * den)) as i128
    }
}

/// The rational behind each reported statistic.
pub mod ratios {
    use super::{ConfusionCounts, Ratio};

    pub fn precision(c: &ConfusionCounts) -> Option<Ratio> {
        Ratio::new(c.tp, c.tp + c.fp)
    }

    pub fn recall(c: &ConfusionCounts) -> Option<Ratio> {
        Ratio::new(c.tp, c.tp + c.fn_)
    }

    pub fn f1(c: &ConfusionCounts) -> Option<Ratio> {
        Ratio::new(2 * c.tp, 2 * c.tp + c.fp + c.fn_)
    }

    pub fn iou(c: &ConfusionCounts) -> Option<Ratio> {
        Ratio::new(c.tp, c.tp + c.fp + c.fn_)
    }

    /// Fractions (not yet scaled by 100) behind TP%, FP% and FN%.
    pub fn tp_share(c: &ConfusionCounts) -> Option<Ratio> {
        Ratio::new(c.tp, c.reference_positive())
    }

    pub fn fp_share(c: &ConfusionCounts) -> Option<Ratio> {
        Ratio::new(c.fp, c.reference_negative())
    }

    pub fn fn_share(c: &ConfusionCounts) -> Option<Ratio> {
        Ratio::new(c.fn_, c.reference_positive())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub counts: ConfusionCounts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub iou: Option<f64>,
    pub tp_pct: Option<f64>,
    pub fp_pct: Option<f64>,
    pub fn_pct: Option<f64>,
}

pub fn metric_set(c: &ConfusionCounts) -> MetricSet {
    MetricSet {
        counts: *c,
        precision: ratios::precision(c).map(Ratio::value),
        recall: ratios::recall(c).map(Ratio::value),
        f1: ratios::f1(c).map(Ratio::value),
        iou: ratios::iou(c).map(Ratio::value),
        tp_pct: ratios::tp_share(c).map(Ratio::percent),
        fp_pct: ratios::fp_share(c).map(Ratio::percent),
        fn_pct: ratios::fn_share(c).map(Ratio::percent),
    }
}

impl From<ConfusionCounts> for MetricSet {
    fn from(c: ConfusionCounts) -> Self {
        metric_set(&c)
    }
}

/// Signed change of each percentage statistic against the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DeltaSet {
    /// baseline TP% − perturbed TP%
    pub tp_drop_pct: Option<f64>,
    /// perturbed FP% − baseline FP%
    pub fp_increase_pct: Option<f64>,
    /// perturbed FN% − baseline FN%
    pub fn_increase_pct: Option<f64>,
}

/// Deltas against the baseline. Both runs must be scored against the same
/// reference population (equal TP + FN).
pub fn delta_set(baseline: &MetricSet, perturbed: &MetricSet) -> Result<DeltaSet> {
    let (b, p) = (
        baseline.counts.reference_positive(),
        perturbed.counts.reference_positive(),
    );
    if b != p {
        return Err(Error::PopulationMismatch {
            baseline: b,
            perturbed: p,
        });
    }
    Ok(delta_between(baseline, perturbed))
}

/// Pure arithmetic behind [`delta_set`], without the population check.
pub fn delta_between(baseline: &MetricSet, perturbed: &MetricSet) -> DeltaSet {
    let diff = |a: Option<f64>, b: Option<f64>| Some(a? - b?);
    DeltaSet {
        tp_drop_pct: diff(baseline.tp_pct, perturbed.tp_pct),
        fp_increase_pct: diff(perturbed.fp_pct, baseline.fp_pct),
        fn_increase_pct: diff(perturbed.fn_pct, baseline.fn_pct),
    }
}
