//! Tables, exports and method rankings rendered from a [`RunResult`].
//!
//! Rendered numbers are exact rationals rounded half away from zero, so a
//! reader who recomputes a metric from the emitted counts gets the emitted
//! digits. Drop/Increase rows are differences of the rendered percentages.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::metrics::{ratios, ConfusionCounts, MetricSet, Ratio};
use crate::perturbation::{StrategyKind, Threshold};
use crate::pipeline::{same_threshold, CellResult, RunResult, RESULT_SCHEMA};

pub const UNDEFINED: &str = "—";
const FAILED: &str = "failed";
const MAX_DECIMALS: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Markdown, ReportFormat::Csv, ReportFormat::Json];
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Config(format!(
                "unknown format `{other}` (expected csv, json or markdown)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Higher,
    Lower,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Higher => "higher better",
            Direction::Lower => "lower better",
        })
    }
}

/// Statistics that carry a best-method flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    TpDrop,
    FpIncrease,
    FnIncrease,
    Iou,
    Precision,
    Recall,
    F1,
}

impl Statistic {
    pub const ALL: [Statistic; 7] = [
        Statistic::TpDrop,
        Statistic::FpIncrease,
        Statistic::FnIncrease,
        Statistic::Iou,
        Statistic::Precision,
        Statistic::Recall,
        Statistic::F1,
    ];

    fn is_delta(self) -> bool {
        matches!(self, Statistic::TpDrop | Statistic::FpIncrease | Statistic::FnIncrease)
    }
}

/// Which way is better, per strategy and statistic.
///
/// Defaults: under S1 a faithful explanation hurts the model, so larger
/// deltas and smaller metrics win. Under S2 and both S3 variants the
/// opposite holds. In a manifest only the entries to change need listing:
///
/// ```json
/// {"s1": {"fn_increase": "lower"}}
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectionTable(BTreeMap<StrategyKind, BTreeMap<Statistic, Direction>>);

impl Default for DirectionTable {
    fn default() -> Self {
        let mut table = BTreeMap::new();
        for s in StrategyKind::ALL {
            let row = Statistic::ALL
                .iter()
                .map(|&st| {
                    let destructive = s == StrategyKind::S1BackgroundOnly;
                    let d = if st.is_delta() == destructive {
                        Direction::Higher
                    } else {
                        Direction::Lower
                    };
                    (st, d)
                })
                .collect();
            table.insert(s, row);
        }
        Self(table)
    }
}

impl DirectionTable {
    pub fn get(&self, strategy: StrategyKind, stat: Statistic) -> Direction {
        self.0[&strategy][&stat]
    }

    pub fn set(&mut self, strategy: StrategyKind, stat: Statistic, direction: Direction) {
        self.0.get_mut(&strategy).expect("every strategy present").insert(stat, direction);
    }
}

impl Serialize for DirectionTable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DirectionTable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let overrides = BTreeMap::<StrategyKind, BTreeMap<Statistic, Direction>>::deserialize(d)?;
        let mut table = DirectionTable::default();
        for (s, row) in overrides {
            for (st, dir) in row {
                table.set(s, st, dir);
            }
        }
        Ok(table)
    }
}

/// How percentage rows are rounded for display.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PercentRounding {
    /// Half away from zero on the exact ratio.
    #[default]
    Exact,
    /// Round the floating-point percentage to one extra decimal, then format
    /// that value to the requested decimals (ties resolved on the binary
    /// value). Matches tables produced by formatting a pre-rounded float.
    Staged,
}

impl FromStr for PercentRounding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "exact" => Ok(PercentRounding::Exact),
            "staged" => Ok(PercentRounding::Staged),
            other => Err(Error::Config(format!(
                "unknown percent rounding `{other}` (expected exact or staged)"
            ))),
        }
    }
}

fn staged_units(r: Ratio, decimals: u32) -> i128 {
    let first: f64 = format!("{:.*}", decimals as usize + 1, r.percent())
        .parse()
        .expect("formatted float parses");
    format!("{:.*}", decimals as usize, first)
        .replace('.', "")
        .parse()
        .expect("formatted float is numeric")
}

/// Report settings, the `report` section of an evaluation manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSpec {
    pub formats: Vec<ReportFormat>,
    pub focus_threshold: f64,
    pub decimals: u32,
    pub percent_rounding: PercentRounding,
    pub directions: DirectionTable,
}

impl Default for ReportSpec {
    fn default() -> Self {
        Self {
            formats: ReportFormat::ALL.to_vec(),
            focus_threshold: 0.4,
            decimals: 2,
            percent_rounding: PercentRounding::Exact,
            directions: DirectionTable::default(),
        }
    }
}

impl ReportSpec {
    pub fn validate(&self, thresholds: &[Threshold]) -> Result<()> {
        if self.formats.is_empty() {
            return Err(Error::Config("no report formats configured".into()));
        }
        if self.decimals > MAX_DECIMALS {
            return Err(Error::Config(format!(
                "at most {MAX_DECIMALS} decimal places are supported"
            )));
        }
        if !thresholds
            .iter()
            .any(|t| same_threshold(t.value(), self.focus_threshold))
        {
            return Err(Error::Config(format!(
                "focus threshold {} is not among the configured thresholds",
                self.focus_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TableCell {
    pub text: String,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TableRow {
    /// Stable identifier, e.g. `tp_pct` or `fn_increase`.
    pub key: String,
    pub label: String,
    pub direction: Option<Direction>,
    pub cells: Vec<TableCell>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

impl Table {
    pub fn row(&self, key: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.key == key)
    }

    /// Rendered texts of a row, one per column.
    pub fn texts(&self, key: &str) -> Option<Vec<&str>> {
        self.row(key)
            .map(|r| r.cells.iter().map(|c| c.text.as_str()).collect())
    }

    /// Columns flagged best in a row.
    pub fn best(&self, key: &str) -> Vec<&str> {
        self.row(key)
            .map(|r| {
                r.cells
                    .iter()
                    .zip(&self.columns)
                    .filter(|(c, _)| c.best)
                    .map(|(_, name)| name.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    /// GitHub-flavored markdown; best cells in bold.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("| Statistic |");
        for c in &self.columns {
            let _ = write!(out, " {c} |");
        }
        out.push_str("\n| --- |");
        for _ in &self.columns {
            out.push_str(" ---: |");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "| {} |", row.label);
            for cell in &row.cells {
                if cell.best {
                    let _ = write!(out, " **{}** |", cell.text);
                } else {
                    let _ = write!(out, " {} |", cell.text);
                }
            }
            out.push('\n');
        }
        out
    }
}

/// `units / 10^decimals` as a fixed-point string.
fn fixed(units: i128, decimals: u32) -> String {
    let scale = 10i128.pow(decimals);
    let sign = if units < 0 { "-" } else { "" };
    let a = units.unsigned_abs();
    let (whole, frac) = (a / scale as u128, a % scale as u128);
    if decimals == 0 {
        format!("{sign}{whole}")
    } else {
        format!("{sign}{whole}.{frac:0width$}", width = decimals as usize)
    }
}

/// Per-column state used while building a table.
enum Column<'a> {
    Model(&'a MetricSet),
    Method(&'a CellResult),
}

impl Column<'_> {
    fn metrics(&self) -> Option<&MetricSet> {
        match self {
            Column::Model(m) => Some(m),
            Column::Method(c) => c.metrics(),
        }
    }

    fn failed(&self) -> bool {
        matches!(self, Column::Method(c) if c.error().is_some())
    }
}

type RatioFn = fn(&ConfusionCounts) -> Option<Ratio>;

struct TableBuilder<'a> {
    strategy: StrategyKind,
    decimals: u32,
    rounding: PercentRounding,
    directions: &'a DirectionTable,
    baseline: &'a MetricSet,
    columns: Vec<Column<'a>>,
    names: Vec<String>,
}

impl<'a> TableBuilder<'a> {
    fn new(result: &'a RunResult, strategy: StrategyKind, threshold: f64, spec: &'a ReportSpec) -> Result<Self> {
        let mut columns = vec![Column::Model(&result.baseline)];
        let mut names = vec!["Model".to_string()];
        for method in &result.metadata.methods {
            let cell = result.cell(method, threshold, strategy).ok_or_else(|| {
                Error::Config(format!(
                    "no result for cell {method}/{threshold}/{strategy}"
                ))
            })?;
            columns.push(Column::Method(cell));
            names.push(method.clone());
        }
        Ok(Self {
            strategy,
            decimals: spec.decimals,
            rounding: spec.percent_rounding,
            directions: &spec.directions,
            baseline: &result.baseline,
            columns,
            names,
        })
    }

    fn row(&self, key: &str, label: &str, stat: Option<Statistic>, values: Vec<Option<Option<i128>>>, render: impl Fn(i128) -> String) -> TableRow {
        // values[i]: None = blank, Some(None) = undefined, Some(Some(v)) = value
        let direction = stat.map(|s| self.directions.get(self.strategy, s));
        let best = direction.and_then(|d| {
            let candidates = values
                .iter()
                .zip(&self.columns)
                .filter(|(_, c)| matches!(c, Column::Method(_)))
                .filter_map(|(v, _)| v.flatten());
            match d {
                Direction::Higher => candidates.max(),
                Direction::Lower => candidates.min(),
            }
        });
        let cells = values
            .iter()
            .zip(&self.columns)
            .map(|(v, col)| {
                if col.failed() {
                    return TableCell {
                        text: FAILED.into(),
                        best: false,
                    };
                }
                match v {
                    None => TableCell {
                        text: String::new(),
                        best: false,
                    },
                    Some(None) => TableCell {
                        text: UNDEFINED.into(),
                        best: false,
                    },
                    Some(Some(x)) => TableCell {
                        text: render(*x),
                        best: matches!(col, Column::Method(_)) && best == Some(*x),
                    },
                }
            })
            .collect();
        let label = match direction {
            Some(d) => format!("{label} ({d})"),
            None => label.to_string(),
        };
        TableRow {
            key: key.into(),
            label,
            direction,
            cells,
        }
    }

    fn counts_row(&self, key: &str, label: &str, get: fn(&ConfusionCounts) -> u64) -> TableRow {
        let values = self
            .columns
            .iter()
            .map(|c| Some(c.metrics().map(|m| get(&m.counts) as i128)))
            .collect();
        self.row(key, label, None, values, |v| v.to_string())
    }

    fn percent_units(&self, m: &MetricSet, f: RatioFn) -> Option<i128> {
        f(&m.counts).map(|r| match self.rounding {
            PercentRounding::Exact => r.scaled_rounded(self.decimals + 2),
            PercentRounding::Staged => staged_units(r, self.decimals),
        })
    }

    fn percent_row(&self, key: &str, label: &str, f: RatioFn) -> TableRow {
        let values = self
            .columns
            .iter()
            .map(|c| Some(c.metrics().and_then(|m| self.percent_units(m, f))))
            .collect();
        let d = self.decimals;
        self.row(key, label, None, values, move |v| fixed(v, d))
    }

    /// `sign * (cell% - baseline%)` on rendered units; blank for the model.
    fn delta_row(&self, key: &str, label: &str, stat: Statistic, f: RatioFn, sign: i128) -> TableRow {
        let base = self.percent_units(self.baseline, f);
        let values = self
            .columns
            .iter()
            .map(|c| match c {
                Column::Model(_) => None,
                Column::Method(cell) => Some(match (cell.metrics(), cell.delta()) {
                    (Some(m), Some(_)) => match (base, self.percent_units(m, f)) {
                        (Some(b), Some(p)) => Some(sign * (p - b)),
                        _ => None,
                    },
                    _ => None,
                }),
            })
            .collect();
        let d = self.decimals;
        self.row(key, label, Some(stat), values, move |v| fixed(v, d))
    }

    fn metric_row(&self, key: &str, label: &str, stat: Statistic, f: RatioFn) -> TableRow {
        let values = self
            .columns
            .iter()
            .map(|c| Some(c.metrics().and_then(|m| f(&m.counts)).map(|r| r.scaled_rounded(self.decimals))))
            .collect();
        let d = self.decimals;
        self.row(key, label, Some(stat), values, move |v| fixed(v, d))
    }
}

/// Pixel counts, their percentages and the change against the model.
pub fn emit_count_table(result: &RunResult, strategy: StrategyKind, threshold: f64, spec: &ReportSpec) -> Result<Table> {
    let b = TableBuilder::new(result, strategy, threshold, spec)?;
    let rows = vec![
        b.counts_row("tp", "TP Pixels", |c| c.tp),
        b.percent_row("tp_pct", "TP Pixels (%)", ratios::tp_share),
        b.delta_row("tp_drop", "Drop %", Statistic::TpDrop, ratios::tp_share, -1),
        b.counts_row("fp", "FP Pixels", |c| c.fp),
        b.percent_row("fp_pct", "FP Pixels (%)", ratios::fp_share),
        b.delta_row("fp_increase", "Increase %", Statistic::FpIncrease, ratios::fp_share, 1),
        b.counts_row("fn", "FN Pixels", |c| c.fn_),
        b.percent_row("fn_pct", "FN Pixels (%)", ratios::fn_share),
        b.delta_row("fn_increase", "Increase %", Statistic::FnIncrease, ratios::fn_share, 1),
    ];
    Ok(Table {
        title: format!("{}, threshold {}: pixel counts", strategy.label(), threshold),
        columns: b.names,
        rows,
    })
}

/// IoU, precision, recall and F1 per column.
pub fn emit_metric_table(result: &RunResult, strategy: StrategyKind, threshold: f64, spec: &ReportSpec) -> Result<Table> {
    let b = TableBuilder::new(result, strategy, threshold, spec)?;
    let rows = vec![
        b.metric_row("iou", "IoU (Micro)", Statistic::Iou, ratios::iou),
        b.metric_row("precision", "Precision", Statistic::Precision, ratios::precision),
        b.metric_row("recall", "Recall", Statistic::Recall, ratios::recall),
        b.metric_row("f1", "F1", Statistic::F1, ratios::f1),
    ];
    Ok(Table {
        title: format!("{}, threshold {}: metrics", strategy.label(), threshold),
        columns: b.names,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TablePair {
    pub strategy: StrategyKind,
    pub threshold: f64,
    pub counts: Table,
    pub metrics: Table,
}

fn pair(result: &RunResult, strategy: StrategyKind, threshold: f64, spec: &ReportSpec) -> Result<TablePair> {
    Ok(TablePair {
        strategy,
        threshold,
        counts: emit_count_table(result, strategy, threshold, spec)?,
        metrics: emit_metric_table(result, strategy, threshold, spec)?,
    })
}

/// One table pair per (strategy, threshold), strategy-major.
pub fn emit_sweep(result: &RunResult, spec: &ReportSpec) -> Result<Vec<TablePair>> {
    let mut pairs = Vec::new();
    for &s in &result.metadata.strategies {
        for &t in &result.metadata.thresholds {
            pairs.push(pair(result, s, t, spec)?);
        }
    }
    Ok(pairs)
}

pub const CSV_HEADER: &str = "strategy,threshold,method,tp,fp,fn,tn,tp_pct,fp_pct,fn_pct,precision,recall,f1,iou,tp_drop_pct,fp_increase_pct,fn_increase_pct";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_row(out: &mut String, strategy: &str, threshold: &str, method: &str, m: &MetricSet, delta: Option<&crate::metrics::DeltaSet>) {
    let c = &m.counts;
    let _ = writeln!(
        out,
        "{strategy},{threshold},{method},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        c.tp,
        c.fp,
        c.fn_,
        c.tn,
        opt(m.tp_pct),
        opt(m.fp_pct),
        opt(m.fn_pct),
        opt(m.precision),
        opt(m.recall),
        opt(m.f1),
        opt(m.iou),
        opt(delta.and_then(|d| d.tp_drop_pct)),
        opt(delta.and_then(|d| d.fp_increase_pct)),
        opt(delta.and_then(|d| d.fn_increase_pct)),
    );
}

fn csv_filtered(result: &RunResult, keep: impl Fn(&CellResult) -> bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    csv_row(&mut out, "baseline", "", "model", &result.baseline, None);
    for cell in result.cells.iter().filter(|c| keep(c)) {
        if let Some(m) = cell.metrics() {
            csv_row(
                &mut out,
                cell.strategy.id(),
                &cell.threshold.to_string(),
                &cell.method,
                m,
                cell.delta(),
            );
        }
    }
    out
}

/// Every successful cell plus a leading `baseline,,model` row, with exact
/// (unrounded) values. Failed cells are listed in `failures.json` instead.
pub fn export_csv(result: &RunResult) -> String {
    csv_filtered(result, |_| true)
}

pub fn export_json(result: &RunResult) -> String {
    result.to_json()
}

pub fn import_json(text: &str) -> Result<RunResult> {
    RunResult::from_json(text, std::path::Path::new("<json>"))
}

/// A rendered output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub name: String,
    pub contents: String,
}

fn pair_markdown(out: &mut String, p: &TablePair, level: &str) {
    let _ = writeln!(out, "{level} {}, threshold {}\n", p.strategy.label(), p.threshold);
    let _ = writeln!(out, "Pixel counts\n\n{}", p.counts.to_markdown());
    let _ = writeln!(out, "Metrics\n\n{}", p.metrics.to_markdown());
}

#[derive(Serialize)]
struct JsonReport<'a> {
    schema: u64,
    strategy: StrategyKind,
    threshold: f64,
    tables: [&'a Table; 2],
}

/// Focus-threshold tables, one file per strategy and format:
/// `report_<strategy>.{md,csv,json}`.
pub fn render_report(result: &RunResult, spec: &ReportSpec) -> Result<Vec<Rendered>> {
    let t = spec.focus_threshold;
    if !result.has_threshold(t) {
        return Err(Error::Config(format!(
            "focus threshold {t} is not among the evaluated thresholds"
        )));
    }
    let mut files = Vec::new();
    for &s in &result.metadata.strategies {
        let p = pair(result, s, t, spec)?;
        for f in formats_in_order(&spec.formats) {
            let (ext, contents) = match f {
                ReportFormat::Markdown => {
                    let mut out = String::new();
                    pair_markdown(&mut out, &p, "#");
                    ("md", out)
                }
                ReportFormat::Csv => (
                    "csv",
                    csv_filtered(result, |c| c.strategy == s && same_threshold(c.threshold, t)),
                ),
                ReportFormat::Json => {
                    let doc = JsonReport {
                        schema: RESULT_SCHEMA,
                        strategy: s,
                        threshold: t,
                        tables: [&p.counts, &p.metrics],
                    };
                    let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
                    text.push('\n');
                    ("json", text)
                }
            };
            files.push(Rendered {
                name: format!("report_{}.{ext}", s.id()),
                contents,
            });
        }
    }
    Ok(files)
}

/// Every (strategy, threshold): `sweep.md` with one section per table
/// pair, `sweep.csv` with every cell and `sweep.json` with the full result.
pub fn render_sweep(result: &RunResult, spec: &ReportSpec) -> Result<Vec<Rendered>> {
    let mut files = Vec::new();
    for f in formats_in_order(&spec.formats) {
        let (name, contents) = match f {
            ReportFormat::Markdown => {
                let mut out = String::from("# Threshold sweep\n\n");
                for p in emit_sweep(result, spec)? {
                    pair_markdown(&mut out, &p, "##");
                }
                ("sweep.md", out)
            }
            ReportFormat::Csv => ("sweep.csv", export_csv(result)),
            ReportFormat::Json => ("sweep.json", export_json(result)),
        };
        files.push(Rendered {
            name: name.into(),
            contents,
        });
    }
    Ok(files)
}

fn formats_in_order(formats: &[ReportFormat]) -> Vec<ReportFormat> {
    let mut f = formats.to_vec();
    f.sort();
    f.dedup();
    f
}

pub fn write_rendered(dir: &std::path::Path, files: &[Rendered]) -> Result<()> {
    for f in files {
        crate::pipeline::write_text(&dir.join(&f.name), &f.contents)?;
    }
    Ok(())
}

/// Per-image metrics plus a micro-aggregated last row, for standalone mask
/// comparison.
pub fn mask_metrics_table(rows: &[(String, ConfusionCounts)], decimals: u32) -> Table {
    let render = |r: Option<Ratio>| r.map_or_else(|| UNDEFINED.to_string(), |r| fixed(r.scaled_rounded(decimals), decimals));
    let line = |key: &str, c: &ConfusionCounts| TableRow {
        key: key.into(),
        label: key.into(),
        direction: None,
        cells: [
            c.tp.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            c.tn.to_string(),
            render(ratios::iou(c)),
            render(ratios::precision(c)),
            render(ratios::recall(c)),
            render(ratios::f1(c)),
        ]
        .into_iter()
        .map(|text| TableCell { text, best: false })
        .collect(),
    };
    let mut out: Vec<TableRow> = rows.iter().map(|(id, c)| line(id, c)).collect();
    let total: ConfusionCounts = rows.iter().map(|(_, c)| c).sum();
    out.push(line("micro", &total));
    Table {
        title: "Mask metrics".into(),
        columns: ["TP", "FP", "FN", "TN", "IoU", "Precision", "Recall", "F1"]
            .map(String::from)
            .to_vec(),
        rows: out,
    }
}
