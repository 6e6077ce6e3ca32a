mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use segxai::perturbation::{
    apply_visibility, perturb, threshold_heatmap, visible_set, FillPolicy, StrategyKind, Threshold,
};
use segxai::raster::{BinaryMask, Heatmap, ImageRaster, MaskRole};
use segxai::Error;

#[derive(Debug)]
struct Case {
    image: ImageRaster,
    heatmap: Heatmap,
    reference: BinaryMask,
    fill: FillPolicy,
}

fn case() -> impl Strategy<Value = Case> {
    (1u32..=16, 1u32..=16, any::<u64>(), any::<u8>()).prop_map(|(w, h, seed, fill)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Case {
            image: common::random_image(&mut rng, w, h),
            heatmap: common::random_heatmap(&mut rng, w, h),
            reference: common::random_mask(&mut rng, w, h, MaskRole::GroundTruth),
            fill: FillPolicy::new(fill),
        }
    })
}

fn grid_threshold() -> impl Strategy<Value = Threshold> {
    prop_oneof![
        (0u32..=10).prop_map(|k| Threshold::new(k as f64 / 10.0).unwrap()),
        (0.0f64..=1.0).prop_map(|t| Threshold::new(t).unwrap()),
    ]
}

fn visible(c: &Case, s: StrategyKind, t: Threshold) -> BinaryMask {
    let r = threshold_heatmap(&c.heatmap, t);
    let reference = s.requires_reference().then_some(&c.reference);
    visible_set(s, &r, reference).unwrap()
}

fn run(c: &Case, s: StrategyKind, t: Threshold) -> ImageRaster {
    let reference = s.requires_reference().then_some(&c.reference);
    perturb(&c.image, &c.heatmap, t, s, reference, c.fill).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn relevance_is_greater_or_equal(c in case(), t in grid_threshold()) {
        let r = threshold_heatmap(&c.heatmap, t);
        for (i, &v) in c.heatmap.values().iter().enumerate() {
            prop_assert_eq!(r.get(i), v as f64 >= t.value());
        }
    }

    #[test]
    fn visible_sets_follow_the_set_algebra(c in case(), t in grid_threshold()) {
        let r = threshold_heatmap(&c.heatmap, t);
        let s1 = visible(&c, StrategyKind::S1BackgroundOnly, t);
        let s2 = visible(&c, StrategyKind::S2HighlightedOnly, t);
        let s3 = visible(&c, StrategyKind::S3XaiGt, t);
        for i in 0..r.pixel_count() {
            prop_assert_eq!(s1.get(i), !r.get(i));
            prop_assert_eq!(s2.get(i), r.get(i));
            prop_assert_eq!(s3.get(i), r.get(i) || c.reference.get(i));
        }
        prop_assert!(s2.is_subset_of(&s3));
        prop_assert!(c.reference.is_subset_of(&s3));
        prop_assert_eq!(s1.positive_count() + s2.positive_count(), r.pixel_count() as u64);
    }

    #[test]
    fn visible_pixels_are_untouched_and_the_rest_is_fill(c in case(), t in grid_threshold(), k in 0usize..4) {
        let s = StrategyKind::ALL[k];
        let v = visible(&c, s, t);
        let out = run(&c, s, t);
        prop_assert_eq!(out.dims(), c.image.dims());
        prop_assert_eq!(out.channels(), c.image.channels());
        for i in 0..out.pixel_count() {
            if v.get(i) {
                prop_assert_eq!(out.pixel(i), c.image.pixel(i));
            } else {
                prop_assert!(out.pixel(i).iter().all(|&x| x == c.fill.fill));
            }
        }
    }

    #[test]
    fn raising_the_threshold_shrinks_the_highlighted_region(c in case(), a in 0u32..=10, b in 0u32..=10) {
        let (lo, hi) = (a.min(b) as f64 / 10.0, a.max(b) as f64 / 10.0);
        let s2_lo = visible(&c, StrategyKind::S2HighlightedOnly, Threshold::new(lo).unwrap());
        let s2_hi = visible(&c, StrategyKind::S2HighlightedOnly, Threshold::new(hi).unwrap());
        prop_assert!(s2_hi.is_subset_of(&s2_lo));
        let s1_lo = visible(&c, StrategyKind::S1BackgroundOnly, Threshold::new(lo).unwrap());
        let s1_hi = visible(&c, StrategyKind::S1BackgroundOnly, Threshold::new(hi).unwrap());
        prop_assert!(s1_lo.is_subset_of(&s1_hi));
    }

    #[test]
    fn extreme_thresholds(c in case()) {
        let zero = Threshold::new(0.0).unwrap();
        prop_assert_eq!(run(&c, StrategyKind::S2HighlightedOnly, zero), c.image.clone());
        let blank = ImageRaster::filled(c.image.width(), c.image.height(), c.image.channels(), c.fill.fill).unwrap();
        prop_assert_eq!(run(&c, StrategyKind::S1BackgroundOnly, zero), blank);
        if c.heatmap.max_value() < 1.0 {
            let one = Threshold::new(1.0).unwrap();
            prop_assert_eq!(run(&c, StrategyKind::S1BackgroundOnly, one), c.image.clone());
        }
    }

    #[test]
    fn perturbation_is_deterministic(c in case(), t in grid_threshold(), k in 0usize..4) {
        let s = StrategyKind::ALL[k];
        prop_assert_eq!(run(&c, s, t), run(&c, s, t));
    }
}

/// 4x4 S3 XAI-GT example enumerated by hand at threshold 0.5, fill 0.
#[test]
fn s3_gt_hand_fixture() {
    #[rustfmt::skip]
    let heat = vec![
        0.9, 0.6, 0.1, 0.0,
        0.5, 0.4, 0.2, 0.0,
        0.0, 0.0, 0.0, 0.7,
        0.3, 0.0, 0.0, 0.5,
    ];
    #[rustfmt::skip]
    let gt = [
        0, 0, 0, 0,
        0, 1, 1, 0,
        0, 1, 1, 0,
        0, 0, 0, 0,
    ];
    // relevance (>= 0.5): (0,0) (0,1) (1,0) (2,3) (3,3); union with GT.
    #[rustfmt::skip]
    let expected_visible = [
        1, 1, 0, 0,
        1, 1, 1, 0,
        0, 1, 1, 1,
        0, 0, 0, 1,
    ];
    let samples: Vec<u8> = (1..=16).collect();
    let image = ImageRaster::new(4, 4, 1, samples).unwrap();
    let heatmap = Heatmap::new(4, 4, heat, "hand").unwrap();
    let gt = BinaryMask::new(4, 4, gt.iter().map(|&b| b == 1).collect(), MaskRole::GroundTruth).unwrap();
    let out = perturb(
        &image,
        &heatmap,
        Threshold::new(0.5).unwrap(),
        StrategyKind::S3XaiGt,
        Some(&gt),
        FillPolicy::new(0),
    )
    .unwrap();
    #[rustfmt::skip]
    let expected: Vec<u8> = vec![
        1, 2, 0, 0,
        5, 6, 7, 0,
        0, 10, 11, 12,
        0, 0, 0, 16,
    ];
    assert_eq!(out.samples(), &expected[..]);
    let visible = expected_visible.iter().filter(|&&v| v == 1).count();
    assert_eq!(out.samples().iter().filter(|&&s| s != 0).count(), visible);
}

#[test]
fn fill_applies_to_every_channel() {
    let image = ImageRaster::new(2, 1, 3, vec![10, 20, 30, 40, 50, 60]).unwrap();
    let v = BinaryMask::new(2, 1, vec![true, false], MaskRole::Visibility).unwrap();
    let out = apply_visibility(&image, &v, FillPolicy::new(128)).unwrap();
    assert_eq!(out.samples(), &[10, 20, 30, 128, 128, 128]);
}

#[test]
fn reference_requirements_and_dimension_checks() {
    let h = Heatmap::new(2, 2, vec![0.5; 4], "m").unwrap();
    let img = ImageRaster::filled(2, 2, 3, 7).unwrap();
    let gt = BinaryMask::filled(2, 2, true, MaskRole::GroundTruth).unwrap();
    let t = Threshold::new(0.4).unwrap();
    let f = FillPolicy::default();
    assert!(matches!(
        perturb(&img, &h, t, StrategyKind::S3XaiPm, None, f),
        Err(Error::MissingReference(StrategyKind::S3XaiPm))
    ));
    assert!(matches!(
        perturb(&img, &h, t, StrategyKind::S1BackgroundOnly, Some(&gt), f),
        Err(Error::UnexpectedReference(_))
    ));
    let small = ImageRaster::filled(2, 1, 3, 7).unwrap();
    assert!(matches!(
        perturb(&small, &h, t, StrategyKind::S2HighlightedOnly, None, f),
        Err(Error::DimensionMismatch { .. })
    ));
    let wide_gt = BinaryMask::filled(4, 1, true, MaskRole::GroundTruth).unwrap();
    assert!(matches!(
        perturb(&img, &h, t, StrategyKind::S3XaiGt, Some(&wide_gt), f),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn threshold_parsing_and_range() {
    for bad in [-0.01, 1.01, f64::NAN, f64::INFINITY] {
        assert!(matches!(Threshold::new(bad), Err(Error::InvalidThreshold(_))));
    }
    assert_eq!("0.8".parse::<Threshold>().unwrap().value(), 0.8);
    for (s, k) in [
        ("s1", StrategyKind::S1BackgroundOnly),
        ("S2", StrategyKind::S2HighlightedOnly),
        ("s3-gt", StrategyKind::S3XaiGt),
        ("s3pm", StrategyKind::S3XaiPm),
    ] {
        assert_eq!(s.parse::<StrategyKind>().unwrap(), k);
    }
    assert!("s4".parse::<StrategyKind>().is_err());
}
