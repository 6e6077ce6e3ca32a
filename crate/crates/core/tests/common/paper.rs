//! Printed values of the published S1, S2, S3 XAI-GT and S3 XAI-PM tables
//! at threshold 0.4. Column 0 is the unperturbed model.

use segxai::metrics::{delta_between, metric_set, ConfusionCounts};
use segxai::perturbation::StrategyKind;
use segxai::pipeline::{CellOutcome, CellResult, PmSource, RunMetadata, RunResult, S3Mode, RESULT_SCHEMA};

pub const METHODS: [&str; 6] = [
    "Grad-CAM",
    "Grad-CAM++",
    "XGrad-CAM",
    "Score-CAM",
    "Eigen-CAM",
    "Ablation-CAM",
];

/// Reference negatives, recovered from the model column: 2886 FP pixels
/// print as 1.38 %.
pub const NEGATIVES: u64 = 209_323;
pub const POSITIVES: u64 = 52_821;

pub struct PaperTable {
    pub strategy: StrategyKind,
    /// (tp, fp, fn) per column.
    pub counts: [(u64, u64, u64); 7],
    pub tp_pct: [&'static str; 7],
    pub fp_pct: [&'static str; 7],
    pub fn_pct: [&'static str; 7],
    /// Method columns only.
    pub tp_drop: [&'static str; 6],
    pub fp_increase: [&'static str; 6],
    pub fn_increase: [&'static str; 6],
    /// From the companion metric table.
    pub iou: [&'static str; 7],
    pub precision: [&'static str; 7],
    pub recall: [&'static str; 7],
    pub f1: [&'static str; 7],
}

impl PaperTable {
    pub fn confusion(&self, column: usize) -> ConfusionCounts {
        let (tp, fp, fn_) = self.counts[column];
        ConfusionCounts {
            tp,
            fp,
            fn_,
            tn: NEGATIVES - fp,
        }
    }
}

pub fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

pub const S1: PaperTable = PaperTable {
    strategy: StrategyKind::S1BackgroundOnly,
    counts: [
        (49431, 2886, 3390),
        (45259, 2806, 7562),
        (39680, 4275, 13141),
        (45238, 2847, 7583),
        (25906, 3846, 26915),
        (46990, 5622, 5832),
        (45228, 3095, 7593),
    ],
    tp_pct: ["93.58", "85.68", "75.12", "85.64", "49.05", "88.96", "85.62"],
    fp_pct: ["1.38", "1.34", "2.04", "1.36", "1.84", "2.69", "1.48"],
    fn_pct: ["6.42", "14.32", "24.88", "14.36", "50.95", "11.04", "14.38"],
    tp_drop: ["7.90", "18.46", "7.94", "44.53", "4.62", "7.96"],
    fp_increase: ["-0.04", "0.66", "-0.02", "0.46", "1.31", "0.10"],
    fn_increase: ["7.90", "18.46", "7.94", "44.53", "4.62", "7.96"],
    iou: ["0.89", "0.81", "0.69", "0.81", "0.46", "0.80", "0.81"],
    precision: ["0.94", "0.94", "0.90", "0.94", "0.87", "0.89", "0.94"],
    recall: ["0.94", "0.86", "0.75", "0.86", "0.49", "0.89", "0.86"],
    f1: ["0.94", "0.90", "0.82", "0.90", "0.63", "0.89", "0.89"],
};

pub const S2: PaperTable = PaperTable {
    strategy: StrategyKind::S2HighlightedOnly,
    counts: [
        (49431, 2886, 3390),
        (28948, 152690, 23873),
        (25871, 123876, 26950),
        (27938, 148112, 24883),
        (39505, 95918, 13316),
        (25067, 84419, 27754),
        (27003, 141878, 25818),
    ],
    tp_pct: ["93.58", "54.80", "48.98", "52.89", "74.79", "47.46", "51.12"],
    fp_pct: ["1.38", "72.94", "59.18", "70.76", "45.82", "40.33", "67.78"],
    fn_pct: ["6.42", "45.20", "51.02", "47.11", "25.21", "52.54", "48.88"],
    tp_drop: ["38.78", "44.6", "40.69", "18.79", "46.12", "42.46"],
    fp_increase: ["71.56", "57.80", "69.38", "44.44", "41.71", "66.40"],
    fn_increase: ["38.78", "44.60", "40.69", "18.79", "58.96", "42.46"],
    iou: ["0.89", "0.14", "0.15", "0.14", "0.27", "0.18", "0.14"],
    precision: ["0.94", "0.16", "0.17", "0.16", "0.29", "0.23", "0.16"],
    recall: ["0.94", "0.55", "0.49", "0.53", "0.75", "0.47", "0.51"],
    f1: ["0.94", "0.25", "0.26", "0.24", "0.42", "0.31", "0.24"],
};

pub const S3_GT: PaperTable = PaperTable {
    strategy: StrategyKind::S3XaiGt,
    counts: [
        (49431, 2886, 3390),
        (30488, 108607, 22334),
        (32385, 103893, 20436),
        (30603, 107803, 22218),
        (45413, 79348, 7408),
        (33365, 60037, 19456),
        (30950, 107555, 21871),
    ],
    tp_pct: ["93.58", "57.72", "61.31", "57.94", "85.97", "63.17", "58.59"],
    fp_pct: ["1.38", "51.88", "49.63", "51.50", "37.91", "28.68", "51.38"],
    fn_pct: ["6.42", "42.28", "38.69", "42.06", "14.03", "36.83", "41.41"],
    tp_drop: ["35.86", "32.27", "35.64", "7.61", "30.41", "34.99"],
    fp_increase: ["50.5", "48.25", "50.12", "36.53", "27.30", "50.00"],
    fn_increase: ["35.86", "32.27", "35.64", "7.61", "30.41", "34.99"],
    iou: ["0.89", "0.19", "0.21", "0.19", "0.34", "0.30", "0.19"],
    precision: ["0.94", "0.22", "0.24", "0.22", "0.36", "0.36", "0.22"],
    recall: ["0.94", "0.58", "0.61", "0.58", "0.86", "0.63", "0.59"],
    f1: ["0.94", "0.32", "0.34", "0.32", "0.51", "0.46", "0.32"],
};

pub const S3_PM: PaperTable = PaperTable {
    strategy: StrategyKind::S3XaiPm,
    counts: [
        (49431, 2886, 3390),
        (29475, 106346, 23346),
        (31745, 102591, 21076),
        (29512, 105874, 23309),
        (45253, 77490, 7569),
        (32331, 59245, 20490),
        (29913, 105573, 22908),
    ],
    tp_pct: ["93.58", "55.80", "60.10", "55.87", "85.67", "61.21", "56.63"],
    fp_pct: ["1.38", "50.80", "49.01", "50.58", "37.02", "28.30", "50.44"],
    fn_pct: ["6.42", "44.20", "39.90", "44.13", "14.33", "38.79", "43.37"],
    tp_drop: ["37.78", "33.48", "37.71", "7.91", "32.37", "36.95"],
    fp_increase: ["49.42", "48.04", "49.2", "35.64", "26.92", "49.06"],
    fn_increase: ["37.78", "33.48", "37.71", "7.91", "32.37", "36.95"],
    iou: ["0.89", "0.19", "0.20", "0.19", "0.35", "0.29", "0.19"],
    precision: ["0.94", "0.22", "0.24", "0.22", "0.37", "0.35", "0.22"],
    recall: ["0.94", "0.56", "0.60", "0.56", "0.86", "0.61", "0.57"],
    f1: ["0.94", "0.31", "0.34", "0.31", "0.52", "0.45", "0.32"],
};

pub const ALL: [&PaperTable; 4] = [&S1, &S2, &S3_GT, &S3_PM];

/// Printed delta cells that disagree with the printed percentage rows,
/// as (strategy, row, method column 1..=6).
pub const TYPOS: [(StrategyKind, &str, usize); 3] = [
    (StrategyKind::S2HighlightedOnly, "fp_increase", 5),
    (StrategyKind::S2HighlightedOnly, "fn_increase", 5),
    (StrategyKind::S3XaiPm, "fp_increase", 2),
];

/// Columns whose TP + FN is 52822 rather than 52821.
pub const OFF_BY_ONE_POPULATION: [(StrategyKind, usize); 3] = [
    (StrategyKind::S1BackgroundOnly, 5),
    (StrategyKind::S3XaiGt, 1),
    (StrategyKind::S3XaiPm, 4),
];

/// A RunResult holding the published counts at threshold 0.4.
pub fn inject(tables: &[&PaperTable]) -> RunResult {
    inject_methods(tables, &METHODS.map(String::from))
}

pub fn inject_methods(tables: &[&PaperTable], methods: &[String]) -> RunResult {
    let baseline = metric_set(&tables[0].confusion(0));
    let mut cells = Vec::new();
    for method in methods {
        let col = 1 + METHODS.iter().position(|m| m == method).expect("known method");
        for t in tables {
            let m = metric_set(&t.confusion(col));
            cells.push(CellResult {
                method: method.clone(),
                threshold: 0.4,
                strategy: t.strategy,
                outcome: CellOutcome::Ok {
                    metrics: m,
                    delta: Some(delta_between(&baseline, &m)),
                },
            });
        }
    }
    RunResult {
        schema: RESULT_SCHEMA,
        metadata: RunMetadata {
            harness_version: "fixture".into(),
            manifest_hash: String::new(),
            runner: "fixture".into(),
            target_class: "building".into(),
            fill: 0,
            s3_mode: S3Mode::Rerun,
            pm_source: PmSource::Baseline,
            methods: methods.to_vec(),
            thresholds: vec![0.4],
            strategies: tables.iter().map(|t| t.strategy).collect(),
            images: 0,
        },
        baseline,
        cells,
        per_image: Vec::new(),
    }
}
