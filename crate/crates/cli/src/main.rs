use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use oneflow::bench::{run_bench2d, BenchConfig};
use oneflow::boundary::{boundary_polyline_2d, polyline_svg, write_polyline_csv};
use oneflow::data::{load_csv, synth, write_csv, Dataset, LabelColumn, SynthName};
use oneflow::eval::{evaluate, KRule, Method};
use oneflow::training::{load_checkpoint, save_checkpoint, train, TrainConfig};

#[derive(Parser)]
#[command(name = "oneflow", version, about = "Minimum-volume one-class anomaly detection with invertible flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a bounding region and write a checkpoint plus its training history.
    Train(TrainArgs),
    /// Score rows against a checkpoint: CSV with index, score, inside.
    Score(ScoreArgs),
    /// AUC and precision/recall/F1 on labelled data, as JSON.
    Eval(EvalArgs),
    /// Compare the volume objective with the likelihood baseline on 2D data.
    Bench2d(BenchArgs),
    /// Generate a synthetic 2D dataset as CSV.
    Synth(SynthArgs),
    /// Export the decision boundary of a 2D checkpoint as CSV or SVG.
    Boundary(BoundaryArgs),
}

#[derive(Args)]
#[group(id = "source", required = true, multiple = false)]
struct DataSource {
    /// CSV file with one row per sample.
    #[arg(long, group = "source")]
    data: Option<PathBuf>,
    /// Built-in 2D generator.
    #[arg(long, group = "source", requires = "n")]
    synth: Option<SynthName>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    #[value(name = "2d")]
    TwoD,
    Tabular,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    source: DataSource,
    /// Rows to generate with --synth.
    #[arg(long)]
    n: Option<usize>,
    /// Seed of the synthetic generator.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    /// Label column to strip from --data: "last", a 0-based index or a header name.
    #[arg(long)]
    label_column: Option<LabelColumn>,
    /// Training config JSON; missing keys take the preset's values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base settings before --config and flag overrides.
    #[arg(long, value_enum, default_value = "default")]
    preset: Preset,
    #[arg(long)]
    variant: Option<Method>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint path; the history goes to `<stem>.history.json` beside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    label_column: Option<LabelColumn>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[group(id = "krule", multiple = false)]
struct KArgs {
    /// Flag exactly this many top scores.
    #[arg(long, group = "krule")]
    k: Option<usize>,
    /// Flag the top ⌈f·n⌉ scores.
    #[arg(long, group = "krule")]
    k_frac: Option<f64>,
    /// Flag as many rows as there are true anomalies (the default).
    #[arg(long, group = "krule")]
    k_true: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Labelled CSV.
    #[arg(long = "data-with-labels", alias = "data")]
    data: PathBuf,
    #[arg(long, default_value = "last")]
    label_column: LabelColumn,
    #[command(flatten)]
    k: KArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    out: PathBuf,
    /// Rows per dataset.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    name: SynthName,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundaryArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value_t = 1024)]
    k_points: usize,
    /// `.svg` writes a picture, anything else CSV; stdout CSV when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Score(a) => cmd_score(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench2d(a) => cmd_bench2d(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Boundary(a) => cmd_boundary(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load(path: &Path, label: Option<&LabelColumn>) -> Result<Dataset> {
    load_csv(path, label).with_context(|| format!("reading {}", path.display()))
}

fn history_path(ckpt: &Path) -> PathBuf {
    let stem = ckpt.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = stem.strip_suffix(".ckpt").unwrap_or(&stem);
    ckpt.with_file_name(format!("{stem}.history.json"))
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let base = match a.preset {
        Preset::Default => TrainConfig::default(),
        Preset::TwoD => TrainConfig::preset_2d(),
        Preset::Tabular => TrainConfig::preset_tabular(),
    };
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut merged = serde_json::to_value(&base)?;
            let overrides: serde_json::Value =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let Some(obj) = overrides.as_object() else {
                bail!("{}: training config must be a JSON object", path.display());
            };
            for (k, v) in obj {
                merged[k] = v.clone();
            }
            TrainConfig::from_json(&merged.to_string()).with_context(|| format!("in {}", path.display()))?
        }
        None => base,
    };
    if let Some(v) = a.variant {
        cfg.variant = v;
    }
    if let Some(alpha) = a.alpha {
        cfg.alpha = alpha;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = train_config(&a)?;
    let data = match (&a.source.data, a.source.synth) {
        (Some(path), _) => load(path, a.label_column.as_ref())?,
        (None, Some(name)) => synth(name, a.n.unwrap_or_default(), a.data_seed)?,
        (None, None) => unreachable!("clap enforces a data source"),
    };
    eprintln!(
        "training {} on {} ({} rows, dim {}) for {} epochs",
        cfg.variant,
        data.name,
        data.n(),
        data.dim(),
        cfg.epochs
    );
    let (region, history) = train(&data, &cfg)?;
    save_checkpoint(&region, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let hpath = history_path(&a.out);
    let file = File::create(&hpath).with_context(|| format!("writing {}", hpath.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &history)?;
    let last = history.last().expect("at least one epoch");
    print_json(&json!({
        "checkpoint": a.out,
        "history": hpath,
        "variant": cfg.variant,
        "alpha": cfg.alpha,
        "radius": region.radius,
        "epochs": history.records.len(),
        "final_mean_cost": last.mean_cost,
        "coverage_on_train": region.coverage(&data.features)?,
    }))
}

fn cmd_score(a: ScoreArgs) -> Result<()> {
    let region = load_checkpoint(&a.ckpt).with_context(|| format!("loading {}", a.ckpt.display()))?;
    let data = load(&a.data, a.label_column.as_ref())?;
    let scores = region.score(&data.features)?;
    let mut out = open_out(a.out.as_deref())?;
    writeln!(out, "index,score,inside")?;
    for (i, s) in scores.iter().enumerate() {
        writeln!(out, "{i},{s:?},{}", u8::from(*s <= region.radius))?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let region = load_checkpoint(&a.ckpt).with_context(|| format!("loading {}", a.ckpt.display()))?;
    let data = load(&a.data, Some(&a.label_column))?;
    let labels = data.labels.as_deref().context("no label column")?;
    let rule = match (a.k.k, a.k.k_frac) {
        (Some(k), _) => KRule::Count(k),
        (None, Some(f)) => KRule::Fraction(f),
        (None, None) => KRule::TrueCount,
    };
    let metrics = evaluate(&region, &data.features, labels, rule)?;
    print_json(&serde_json::to_value(metrics)?)
}

fn cmd_bench2d(a: BenchArgs) -> Result<()> {
    let mut cfg = BenchConfig { n: a.n, data_seed: a.seed, ..BenchConfig::default() };
    cfg.train.seed = a.seed;
    cfg.train.alpha = a.alpha;
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    eprintln!("training {} regions for {} epochs each", cfg.datasets.len() * cfg.methods.len(), cfg.train.epochs);
    let (report, _) = run_bench2d(&cfg, Some(&a.out))?;
    for row in &report.rows {
        eprintln!(
            "{:<14} {:<9} length {:>9.4}  area {:>9.4}",
            row.dataset.as_str(),
            row.method.label(),
            row.length,
            row.area
        );
    }
    print_json(&serde_json::to_value(&report)?)
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let data = synth(a.name, a.n, a.seed)?;
    let mut out = open_out(a.out.as_deref())?;
    write_csv(&data, &mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_boundary(a: BoundaryArgs) -> Result<()> {
    let region = load_checkpoint(&a.ckpt).with_context(|| format!("loading {}", a.ckpt.display()))?;
    let poly = boundary_polyline_2d(&region, a.k_points)?;
    let svg = a.out.as_deref().is_some_and(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("svg")));
    let mut out = open_out(a.out.as_deref())?;
    if svg {
        out.write_all(polyline_svg(&poly, 512)?.as_bytes())?;
    } else {
        write_polyline_csv(&poly, &mut out)?;
    }
    out.flush()?;
    Ok(())
}
