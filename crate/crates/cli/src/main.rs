//! `wrinkle`: synthesize scenes, train the pixel classifier, detect
//! wrinkles, plan ironing and draw overlays.
//!
//! Exit status is 0 on success, 1 when a pipeline stage fails (the stage
//! is named on stderr) and 2 for usage or configuration errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use wrinkle_core::classify::SvmModel;
use wrinkle_core::config::PipelineConfig;
use wrinkle_core::gridio::{read_grid, write_atomic};
use wrinkle_core::overlay::render_svg;
use wrinkle_core::pipeline::{self, SceneInputs, Stage, StageError};
use wrinkle_core::planner::waypoints_csv;
use wrinkle_core::report::Report;
use wrinkle_core::scenes;
use wrinkle_core::synth::{capture, SceneSpec};
use wrinkle_core::Error;

#[derive(Parser)]
#[command(
    name = "wrinkle",
    version,
    about = "Wrinkle detection and ironing path planning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene: height map, two captures, two references, labels.
    Synth(SynthArgs),
    /// Train the pixel classifier on a directory of labeled scenes.
    Train(TrainArgs),
    /// Run the full pipeline on one scene and write a JSON report.
    Detect(DetectArgs),
    /// Re-plan from an existing report, e.g. with a different iron or p_min.
    Plan(PlanArgs),
    /// Draw a report over its height map as SVG.
    Overlay(OverlayArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    SingleBump,
    SingleRidge,
    Training,
    Fusion,
    Reference,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description (TOML).
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    spec: Option<PathBuf>,
    /// Use a built-in scene instead of a spec file.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Seed for the preset generator.
    #[arg(long, default_value_t = 0, requires = "preset")]
    seed: u64,
    /// Output directory; created if missing.
    #[arg(long, short)]
    out: PathBuf,
    /// Also write the resolved scene spec as `scene.toml`.
    #[arg(long)]
    write_spec: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory whose subdirectories are `synth` outputs.
    corpus: PathBuf,
    /// Where to write the model.
    #[arg(long, short)]
    model: PathBuf,
    #[arg(long, short)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    /// Scene directory holding the standard file names.
    #[arg(long, required_unless_present_all = ["height", "light1", "light2", "ref1", "ref2"])]
    scene: Option<PathBuf>,
    #[arg(long, conflicts_with = "scene")]
    height: Option<PathBuf>,
    #[arg(long, conflicts_with = "scene")]
    light1: Option<PathBuf>,
    #[arg(long, conflicts_with = "scene")]
    light2: Option<PathBuf>,
    #[arg(long, conflicts_with = "scene")]
    ref1: Option<PathBuf>,
    #[arg(long, conflicts_with = "scene")]
    ref2: Option<PathBuf>,
    #[arg(long, short)]
    model: PathBuf,
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[command(flatten)]
    output: ReportOutput,
    /// Include per-stage timings (makes the report non-reproducible).
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long, short)]
    report: PathBuf,
    /// Height map the report was produced from.
    #[arg(long)]
    height: PathBuf,
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[command(flatten)]
    output: ReportOutput,
}

#[derive(Args)]
struct ReportOutput {
    /// Report path; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Also write plan waypoints as CSV.
    #[arg(long)]
    waypoints: Option<PathBuf>,
}

#[derive(Args)]
struct OverlayArgs {
    #[arg(long, short)]
    report: PathBuf,
    #[arg(long)]
    height: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Stage(StageError),
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        Failure::Stage(e)
    }
}

fn stage<T>(stage: Stage, r: wrinkle_core::Result<T>) -> Result<T, Failure> {
    r.map_err(|source| Failure::Stage(StageError { stage, source }))
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Failure> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => PipelineConfig::load(p)
            .map_err(|e| Failure::Usage(format!("config {}: {e}", p.display()))),
    }
}

fn write_output(path: &Path, bytes: &[u8], stage_name: Stage) -> Result<(), Failure> {
    stage(stage_name, write_atomic(path, bytes))
}

fn emit_report(report: &Report, output: &ReportOutput, at: Stage) -> Result<(), Failure> {
    let json = stage(at, report.to_json())?;
    if let Some(csv) = &output.waypoints {
        write_output(csv, waypoints_csv(&report.plan).as_bytes(), at)?;
    }
    match &output.out {
        Some(p) => write_output(p, json.as_bytes(), at),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn synth(args: &SynthArgs) -> Result<(), Failure> {
    let spec = match (&args.spec, args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("spec {}: {e}", path.display())))?;
            SceneSpec::from_toml_str(&text)
                .map_err(|e| Failure::Usage(format!("spec {}: {e}", path.display())))?
        }
        (None, Some(preset)) => match preset {
            Preset::SingleBump => scenes::single_bump(args.seed).0,
            Preset::SingleRidge => scenes::single_ridge(args.seed).0,
            Preset::Training => scenes::training_scene(args.seed),
            Preset::Fusion => scenes::fusion_scene(args.seed).spec,
            Preset::Reference => scenes::reference_scene(),
        },
        (None, None) => return Err(Failure::Usage("give a spec file or --preset".into())),
    };
    let c = stage(Stage::Synth, capture(&spec))?;
    stage(Stage::Output, pipeline::write_capture(&c, &args.out))?;
    if args.write_spec {
        write_output(
            &args.out.join("scene.toml"),
            spec.to_toml_string().as_bytes(),
            Stage::Output,
        )?;
    }
    Ok(())
}

fn train(args: &TrainArgs) -> Result<(), Failure> {
    let cfg = load_config(args.config.as_deref())?;
    let out = pipeline::train_corpus(&args.corpus, &cfg)?;
    stage(Stage::Output, out.model.save(&args.model))?;
    println!(
        "trained on {} scenes ({} examples), {} held out",
        out.train_scenes, out.train_examples, out.holdout_scenes
    );
    if let Some((acc, rec)) = out.holdout {
        println!("held-out accuracy {acc:.4}, wrinkle recall {rec:.4}");
    }
    Ok(())
}

fn detect(args: &DetectArgs) -> Result<(), Failure> {
    let cfg = load_config(args.config.as_deref())?;
    let inputs = match &args.scene {
        Some(dir) => SceneInputs::from_dir(dir),
        None => {
            let p = |o: &Option<PathBuf>| o.clone().expect("required by clap");
            SceneInputs::from_paths(
                &p(&args.height),
                &p(&args.light1),
                &p(&args.light2),
                &p(&args.ref1),
                &p(&args.ref2),
            )
        }
    };
    let inputs = stage(Stage::Load, inputs)?;
    let model = stage(Stage::Load, SvmModel::load(&args.model))?;
    let report = pipeline::detect(&inputs, &model, &cfg, args.timings)?;
    emit_report(&report, &args.output, Stage::Output)
}

fn plan(args: &PlanArgs) -> Result<(), Failure> {
    let cfg = load_config(args.config.as_deref())?;
    let report = stage(Stage::Load, Report::load(&args.report))?;
    let height = stage(Stage::Load, read_grid(&args.height))?;
    let report = pipeline::replan(&report, &height, &cfg)?;
    emit_report(&report, &args.output, Stage::Output)
}

fn overlay(args: &OverlayArgs) -> Result<(), Failure> {
    let report = stage(Stage::Load, Report::load(&args.report))?;
    let height = stage(Stage::Load, read_grid(&args.height))?;
    write_output(
        &args.out,
        render_svg(&report, &height).as_bytes(),
        Stage::Overlay,
    )
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("WRINKLE_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            Failure::Usage(format!(
                "WRINKLE_THREADS must be a positive integer, got {value:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Detect(a) => detect(a),
        Command::Plan(a) => plan(a),
        Command::Overlay(a) => overlay(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("wrinkle: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(e)) => {
            // a bad config surfaced by a stage is still a configuration error
            let code = if matches!(e.source, Error::InvalidConfig(_)) {
                2
            } else {
                1
            };
            eprintln!("wrinkle: {e}");
            ExitCode::from(code)
        }
    }
}
