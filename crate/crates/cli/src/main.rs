use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use segxai::perturbation::{perturb, FillPolicy, StrategyKind, Threshold};
use segxai::pipeline::{score_mask_dirs, EvaluationManifest, Pipeline, RunResult, S3Mode};
use segxai::raster::{self, MaskRole};
use segxai::report::{self, mask_metrics_table, PercentRounding, ReportFormat, ReportSpec};

const EXIT_FAILED_CELLS: u8 = 1;
const EXIT_CONFIG: u8 = 2;

/// Perturbation-based faithfulness evaluation of saliency heatmaps for
/// semantic segmentation.
#[derive(Parser, Debug)]
#[command(name = "segxai", version, propagate_version = true)]
struct Cli {
    /// More log output (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every (method, threshold, strategy) cell and write results and reports.
    Evaluate(EvaluateArgs),
    /// Perturb a single image for inspection.
    Perturb(PerturbArgs),
    /// Score a directory of predicted masks against reference masks.
    Metrics(MetricsArgs),
    /// Render the focus-threshold tables of a finished run, one file per strategy.
    Report(ReportArgs),
    /// Render tables for every (strategy, threshold) of a finished run.
    Sweep(ReportArgs),
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Evaluation manifest (JSON).
    #[arg(long)]
    manifest: PathBuf,

    /// Heatmap thresholds, comma separated.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<Threshold>>,

    /// Strategies to run: s1, s2, s3gt, s3pm (comma separated).
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<StrategyKind>>,

    /// Sample written to every channel of a masked-out pixel.
    #[arg(long)]
    fill: Option<u8>,

    /// How S3 cells are scored: rerun the model, or compare masks directly.
    #[arg(long)]
    s3_mode: Option<S3Mode>,

    /// Worker threads (default: available cores).
    #[arg(long, short = 'j')]
    jobs: Option<usize>,

    /// Recompute every cell and write no cache entries.
    #[arg(long)]
    no_cache: bool,

    #[command(flatten)]
    render: RenderArgs,

    /// Output directory (overrides the manifest's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    /// Report formats: csv, json, markdown (comma separated).
    #[arg(long, value_delimiter = ',')]
    format: Option<Vec<ReportFormat>>,

    /// Threshold rendered by `report`.
    #[arg(long)]
    focus_threshold: Option<f64>,

    /// Decimal places in rendered tables.
    #[arg(long)]
    decimals: Option<u32>,

    /// Percentage rounding: exact, or staged (round to one extra decimal first).
    #[arg(long)]
    percent_rounding: Option<PercentRounding>,
}

impl RenderArgs {
    fn apply(&self, spec: &mut ReportSpec) {
        if let Some(f) = &self.format {
            spec.formats = f.clone();
        }
        if let Some(t) = self.focus_threshold {
            spec.focus_threshold = t;
        }
        if let Some(d) = self.decimals {
            spec.decimals = d;
        }
        if let Some(r) = self.percent_rounding {
            spec.percent_rounding = r;
        }
    }
}

#[derive(Args, Debug)]
struct PerturbArgs {
    /// 8-bit grayscale or RGB PNG.
    #[arg(long)]
    image: PathBuf,

    /// Heatmap (.npy float32 or 16-bit .png).
    #[arg(long)]
    heatmap: PathBuf,

    #[arg(long)]
    threshold: Threshold,

    /// s1, s2, s3gt or s3pm.
    #[arg(long)]
    strategy: StrategyKind,

    /// Ground-truth (s3gt) or predicted (s3pm) mask.
    #[arg(long)]
    reference: Option<PathBuf>,

    #[arg(long, default_value_t = 0)]
    fill: u8,

    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    /// Directory of predicted masks, `<id>.png`.
    #[arg(long)]
    pred: PathBuf,

    /// Directory of reference masks with the same ids.
    #[arg(long = "ref")]
    reference: PathBuf,

    #[arg(long, default_value_t = 2)]
    decimals: u32,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// `results.json`, or a run's output directory.
    #[arg(long)]
    results: PathBuf,

    /// Manifest whose `report` section supplies the defaults.
    #[arg(long)]
    manifest: Option<PathBuf>,

    #[command(flatten)]
    render: RenderArgs,

    /// Directory for the rendered files (default: `reports/` next to `results/`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let outcome = match cli.command {
        Command::Evaluate(a) => evaluate(a),
        Command::Perturb(a) => perturb_one(a).map(|_| ExitCode::SUCCESS),
        Command::Metrics(a) => metrics(a).map(|_| ExitCode::SUCCESS),
        Command::Report(a) => render(a, false).map(|_| ExitCode::SUCCESS),
        Command::Sweep(a) => render(a, true).map(|_| ExitCode::SUCCESS),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e
                .chain()
                .any(|c| c.downcast_ref::<segxai::Error>().is_some_and(segxai::Error::is_config));
            ExitCode::from(if config { EXIT_CONFIG } else { EXIT_FAILED_CELLS })
        }
    }
}

fn evaluate(a: EvaluateArgs) -> anyhow::Result<ExitCode> {
    let mut m = EvaluationManifest::load(&a.manifest)?;
    if let Some(t) = a.thresholds {
        m.thresholds = t;
    }
    if let Some(s) = a.strategies {
        m.strategies = s;
    }
    if let Some(f) = a.fill {
        m.fill = FillPolicy::new(f);
    }
    if let Some(mode) = a.s3_mode {
        m.s3_mode = mode;
    }
    if a.no_cache {
        m.cache = false;
    }
    if let Some(out) = a.out {
        m.output_dir = out;
    }
    a.render.apply(&mut m.report);

    let out = m.output_dir.clone();
    let spec = m.report.clone();
    let jobs = a
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let result = Pipeline::new(m)?.jobs(jobs).run_all()?;

    let reports = out.join("reports");
    report::write_rendered(&reports, &report::render_report(&result, &spec)?)?;
    report::write_rendered(&reports, &report::render_sweep(&result, &spec)?)?;

    let failed = result.failures().count();
    println!(
        "{} images, {} cells ({} failed); results in {}, reports in {}",
        result.metadata.images,
        result.cells.len(),
        failed,
        out.join("results").display(),
        reports.display()
    );
    if failed > 0 {
        for c in result.failures() {
            eprintln!("failed: {}/{}/{}: {}", c.method, c.threshold, c.strategy, c.error().unwrap_or(""));
        }
        return Ok(ExitCode::from(EXIT_FAILED_CELLS));
    }
    Ok(ExitCode::SUCCESS)
}

fn perturb_one(a: PerturbArgs) -> anyhow::Result<()> {
    let image = raster::load_image(&a.image)?;
    let heatmap = raster::load_heatmap(&a.heatmap, "heatmap")?;
    let role = match a.strategy {
        StrategyKind::S3XaiPm => MaskRole::Prediction,
        _ => MaskRole::GroundTruth,
    };
    let reference = a.reference.as_ref().map(|p| raster::load_mask(p, role)).transpose()?;
    let edited = perturb(&image, &heatmap, a.threshold, a.strategy, reference.as_ref(), FillPolicy::new(a.fill))?;
    if edited == image {
        // Nothing was masked; keep the original encoding.
        std::fs::copy(&a.image, &a.out).with_context(|| format!("copying to {}", a.out.display()))?;
    } else {
        raster::store_image(&edited, &a.out)?;
    }
    Ok(())
}

fn metrics(a: MetricsArgs) -> anyhow::Result<()> {
    let rows = score_mask_dirs(&a.pred, &a.reference)?;
    if rows.is_empty() {
        bail!(segxai::Error::Config(format!("no masks found in {}", a.pred.display())));
    }
    print!("{}", mask_metrics_table(&rows, a.decimals).to_markdown());
    Ok(())
}

fn results_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        let nested = p.join("results").join("results.json");
        if nested.is_file() {
            return nested;
        }
        return p.join("results.json");
    }
    p.to_path_buf()
}

fn render(a: ReportArgs, sweep: bool) -> anyhow::Result<()> {
    let path = results_path(&a.results);
    if !path.is_file() {
        bail!(segxai::Error::Config(format!("results file {} not found", path.display())));
    }
    let result = RunResult::load(&path)?;
    let mut spec = match &a.manifest {
        Some(m) => EvaluationManifest::load(m)?.report,
        None => ReportSpec::default(),
    };
    a.render.apply(&mut spec);
    let thresholds = result
        .metadata
        .thresholds
        .iter()
        .map(|&t| Threshold::new(t))
        .collect::<segxai::Result<Vec<_>>>()?;
    if sweep {
        // A sweep renders every threshold.
        if let Some(&first) = result.metadata.thresholds.first() {
            spec.focus_threshold = first;
        }
    }
    spec.validate(&thresholds)?;

    let out = a.out.unwrap_or_else(|| {
        let dir = path.parent().unwrap_or(Path::new("."));
        match dir.file_name() {
            Some(n) if n == "results" => dir.with_file_name("reports"),
            _ => dir.join("reports"),
        }
    });
    let files = if sweep {
        report::render_sweep(&result, &spec)?
    } else {
        report::render_report(&result, &spec)?
    };
    report::write_rendered(&out, &files)?;
    for f in &files {
        println!("{}", out.join(&f.name).display());
    }
    Ok(())
}
