//! Command line front end: generate scenes, train a classifier, write
//! attribution grids, score explanation methods, and compare reports.
//!
//! Exit codes: 0 on success, 2 for configuration errors (including
//! usage errors from argument parsing), 3 for data errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use protoeval::attribution::AttributionGrid;
use protoeval::grid::PgrdGrid;
use protoeval::harness::{
    compare, evaluate, load_dataset, load_model, load_report, overlay_png_bytes, read_json,
    save_dataset, save_model, save_report, write_json, OverlayOptions,
};
use protoeval::interface::{part_importance, PartImportance, PartSet};
use protoeval::metrics::{EvalConfig, Explainer, Method};
use protoeval::protonet::{forward, train, TrainConfig};
use protoeval::scenegen::{generate_dataset, DatasetBundle, GenerationConfig, Scene};
use protoeval::{Error, Result};

#[derive(Parser)]
#[command(
    name = "protoeval",
    version,
    about = "Evaluate bounding-box and summed-map explanations of a prototype classifier"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a part-annotated scene dataset.
    Generate(GenerateArgs),
    /// Train a prototype classifier on a dataset's train split.
    Train(TrainArgs),
    /// Write one scene's attribution grid plus a part-score sidecar.
    Explain(ExplainArgs),
    /// Score one explanation method over a dataset's test split.
    Evaluate(EvaluateArgs),
    /// Tabulate two reports side by side and state the verdict.
    Compare(CompareArgs),
    /// Render an attribution overlay onto a scene as PNG.
    Render(RenderArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Generation config JSON; defaults fill in absent fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory to write the dataset into.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    dataset: PathBuf,
    /// Path for the model JSON.
    #[arg(long)]
    out: PathBuf,
    /// Training config JSON; defaults fill in absent fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ExplainArgs {
    /// Model JSON written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Dataset directory holding the scene.
    #[arg(long)]
    dataset: PathBuf,
    /// Scene id, e.g. test_00003.
    #[arg(long)]
    scene: String,
    /// Explanation method: bb or ssm.
    #[arg(long)]
    method: Method,
    /// Path for the attribution grid; a JSON sidecar lands next to it.
    #[arg(long)]
    out: PathBuf,
    /// Class to explain; defaults to the scene's label.
    #[arg(long)]
    class: Option<usize>,
    /// Per-prototype box quantile for the bb method.
    #[arg(long, default_value_t = 0.95)]
    percentile: f64,
    /// Thresholds for the sidecar's important-part sets.
    #[arg(long, default_value = "0.01,0.1,0.25,0.5")]
    thresholds: String,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Model JSON written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Dataset directory; metrics run over its test split.
    #[arg(long)]
    dataset: PathBuf,
    /// Explanation method: bb or ssm.
    #[arg(long)]
    method: Method,
    /// Comma-separated thresholds for the part-set metrics.
    #[arg(long, default_value = "0.01,0.1,0.25,0.5")]
    thresholds: String,
    /// Path for the report JSON.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the evaluation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Background redraws per scene.
    #[arg(long)]
    draws: Option<usize>,
    /// Chimera pairs to render.
    #[arg(long)]
    pairs: Option<usize>,
    /// Per-prototype box quantile for the bb method.
    #[arg(long, default_value_t = 0.95)]
    percentile: f64,
}

#[derive(Args)]
struct CompareArgs {
    /// First report JSON.
    #[arg(long)]
    a: PathBuf,
    /// Second report JSON.
    #[arg(long)]
    b: PathBuf,
    /// Path for the comparison CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// Scene id to draw under the heatmap.
    #[arg(long)]
    scene: String,
    /// Attribution grid file written by `explain`.
    #[arg(long)]
    grid: PathBuf,
    /// Path for the PNG.
    #[arg(long)]
    out: PathBuf,
    /// Dataset directory holding the scene.
    #[arg(long)]
    dataset: PathBuf,
    /// Heatmap opacity.
    #[arg(long, default_value_t = 0.6)]
    alpha: f64,
    /// Skip the white part-mask outlines.
    #[arg(long)]
    no_outlines: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Generate(args) => run_generate(args),
        Command::Train(args) => run_train(args),
        Command::Explain(args) => run_explain(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Compare(args) => run_compare(args),
        Command::Render(args) => run_render(args),
    }
}

/// PROTOEVAL_THREADS caps the global worker pool; unset leaves the
/// default (one worker per core).
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("PROTOEVAL_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().map_err(|_| {
        Error::Config(format!(
            "PROTOEVAL_THREADS must be a positive integer, got '{raw}'"
        ))
    })?;
    if threads == 0 {
        return Err(Error::Config(
            "PROTOEVAL_THREADS must be at least 1".into(),
        ));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool setup failed: {e}")))
}

fn run_generate(args: &GenerateArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => read_json::<GenerationConfig>(path)?,
        None => GenerationConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let bundle = generate_dataset(&config)?;
    save_dataset(&bundle, &args.out)?;
    println!(
        "wrote {} train and {} test scenes across {} classes to {}",
        bundle.train.len(),
        bundle.test.len(),
        bundle.classes.len(),
        args.out.display()
    );
    Ok(())
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => read_json::<TrainConfig>(path)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let bundle = load_dataset(&args.dataset)?;
    let model = train(&bundle, &config)?;
    save_model(&model, &args.out)?;
    println!(
        "trained {} prototypes over {} classes, saved to {}",
        model.prototypes.len(),
        model.n_classes,
        args.out.display()
    );
    Ok(())
}

/// Everything `explain` knows about one scene, next to the raw grid.
#[derive(Serialize)]
struct ExplainSidecar {
    scene: String,
    method: Method,
    class_id: usize,
    importance: PartImportance,
    part_sets: Vec<PartSet>,
}

fn run_explain(args: &ExplainArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let bundle = load_dataset(&args.dataset)?;
    let scene = find_scene(&bundle, &args.scene)?;
    let class_id = args.class.unwrap_or(scene.class_id);
    if class_id >= model.n_classes {
        return Err(Error::Config(format!(
            "class {class_id} is out of range for a {}-class model",
            model.n_classes
        )));
    }
    let explainer = Explainer {
        model: &model,
        method: args.method,
        box_percentile: args.percentile,
    };
    let pass = forward(&model, &scene.image)?;
    let att = explainer.attribution(&pass, class_id, scene.image.rows, scene.image.cols)?;
    att.to_pgrd().save(&args.out)?;

    let importance = part_importance(&att, &scene.part_masks)?;
    let part_sets = parse_thresholds(&args.thresholds)?
        .into_iter()
        .map(|t| explainer.important_parts(&att, &scene.part_masks, t))
        .collect::<Result<Vec<_>>>()?;
    let sidecar = ExplainSidecar {
        scene: scene.id.clone(),
        method: args.method,
        class_id,
        importance,
        part_sets,
    };
    let sidecar_path = path_with_json_suffix(&args.out);
    write_json(&sidecar_path, &sidecar)?;
    println!(
        "wrote {} and {}",
        args.out.display(),
        sidecar_path.display()
    );
    Ok(())
}

fn run_evaluate(args: &EvaluateArgs) -> Result<()> {
    let mut eval = EvalConfig {
        thresholds: parse_thresholds(&args.thresholds)?,
        box_percentile: args.percentile,
        ..EvalConfig::default()
    };
    if let Some(seed) = args.seed {
        eval.seed = seed;
    }
    if let Some(draws) = args.draws {
        eval.background_draws = draws;
    }
    if let Some(pairs) = args.pairs {
        eval.chimera_pairs = pairs;
    }
    let model = load_model(&args.model)?;
    let bundle = load_dataset(&args.dataset)?;
    let report = evaluate(&bundle, &model, args.method, &eval)?;
    save_report(&report, &args.out)?;
    println!("{} report ({} test scenes):", args.method, bundle.test.len());
    for (name, value) in report.metrics.in_table_order() {
        println!("  {name:<8} {value:.4}");
    }
    println!("saved to {}", args.out.display());
    Ok(())
}

fn run_compare(args: &CompareArgs) -> Result<()> {
    let a = load_report(&args.a)?;
    let b = load_report(&args.b)?;
    let table = compare(&a, &b)?;
    std::fs::write(&args.out, table.to_csv()).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    println!("{:<10} {:>8} {:>8} {:>8}", "metric", "bb", "ssm", "delta");
    for row in &table.rows {
        println!(
            "{:<10} {:>8.4} {:>8.4} {:>+8.4}",
            row.metric, row.bb, row.ssm, row.delta
        );
    }
    println!("pattern: {}", table.verdict);
    println!("saved to {}", args.out.display());
    Ok(())
}

fn run_render(args: &RenderArgs) -> Result<()> {
    let bundle = load_dataset(&args.dataset)?;
    let scene = find_scene(&bundle, &args.scene)?;
    let att = AttributionGrid::from_pgrd(&PgrdGrid::load(&args.grid)?)?;
    let options = OverlayOptions {
        alpha: args.alpha,
        outlines: !args.no_outlines,
    };
    let bytes = overlay_png_bytes(scene, &att, &options)?;
    std::fs::write(&args.out, bytes).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn find_scene<'a>(bundle: &'a DatasetBundle, id: &str) -> Result<&'a Scene> {
    bundle
        .test
        .iter()
        .chain(&bundle.train)
        .find(|s| s.id == id)
        .ok_or_else(|| Error::Data(format!("no scene '{id}' in the dataset")))
}

fn parse_thresholds(spec: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad threshold '{s}' in list")))
        })
        .collect()
}

fn path_with_json_suffix(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}
