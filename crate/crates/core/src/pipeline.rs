//! End-to-end orchestration over scene directories: training over a
//! labeled corpus, detection and re-planning.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::classify::{accuracy, build_training_set, recall, train, SvmModel, TrainingSet};
use crate::config::PipelineConfig;
use crate::curvature::detect_bumps;
use crate::discont::{extract_segments_refined, normalize, score_map};
use crate::error::{Error, Result};
use crate::fusion::{fuse, sort_by_probability};
use crate::gridio::{write_atomic, FloatGrid, GrayImage, LabelMask};
use crate::mixture::build_mixture;
use crate::planner::plan_ironing;
use crate::report::{sha256_hex, GridInfo, Report, SCHEMA_VERSION};
use crate::synth::SceneCapture;

pub const HEIGHT_FILE: &str = "height.fgrid";
pub const LIGHT1_FILE: &str = "light1.pgm";
pub const LIGHT2_FILE: &str = "light2.pgm";
pub const REF1_FILE: &str = "ref1.pgm";
pub const REF2_FILE: &str = "ref2.pgm";
pub const LABELS_FILE: &str = "labels.pgm";

/// Everything `synth` writes into a scene directory.
pub const SCENE_FILES: [&str; 6] = [
    HEIGHT_FILE,
    LIGHT1_FILE,
    LIGHT2_FILE,
    REF1_FILE,
    REF2_FILE,
    LABELS_FILE,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Load,
    Curvature,
    Normalize,
    Classify,
    Extract,
    Fusion,
    Plan,
    Train,
    Overlay,
    Output,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Load => "load",
            Stage::Curvature => "curvature",
            Stage::Normalize => "normalize",
            Stage::Classify => "classify",
            Stage::Extract => "extract",
            Stage::Fusion => "fusion",
            Stage::Plan => "plan",
            Stage::Train => "train",
            Stage::Overlay => "overlay",
            Stage::Output => "output",
        }
    }
}

/// A pipeline error tagged with the stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {}: {}", self.stage.name(), self.source)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// The five rasters detection reads, with digests of their encoded bytes.
#[derive(Clone, Debug)]
pub struct SceneInputs {
    pub height: FloatGrid,
    pub light1: GrayImage,
    pub light2: GrayImage,
    pub ref1: GrayImage,
    pub ref2: GrayImage,
    pub digests: BTreeMap<String, String>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

impl SceneInputs {
    /// Decode from encoded file contents, in the order height, light1,
    /// light2, ref1, ref2.
    pub fn from_bytes(files: [&[u8]; 5]) -> Result<Self> {
        let names = ["height", "light1", "light2", "ref1", "ref2"];
        let digests = names
            .iter()
            .zip(files)
            .map(|(n, b)| (n.to_string(), sha256_hex(b)))
            .collect();
        Ok(Self {
            height: FloatGrid::from_fgrid_bytes(files[0])?,
            light1: GrayImage::from_pgm_bytes(files[1])?,
            light2: GrayImage::from_pgm_bytes(files[2])?,
            ref1: GrayImage::from_pgm_bytes(files[3])?,
            ref2: GrayImage::from_pgm_bytes(files[4])?,
            digests,
        })
    }

    pub fn from_paths(
        height: &Path,
        light1: &Path,
        light2: &Path,
        ref1: &Path,
        ref2: &Path,
    ) -> Result<Self> {
        let b = [height, light1, light2, ref1, ref2]
            .iter()
            .map(|p| read_bytes(p))
            .collect::<Result<Vec<_>>>()?;
        Self::from_bytes([&b[0], &b[1], &b[2], &b[3], &b[4]])
    }

    pub fn from_dir(dir: &Path) -> Result<Self> {
        Self::from_paths(
            &dir.join(HEIGHT_FILE),
            &dir.join(LIGHT1_FILE),
            &dir.join(LIGHT2_FILE),
            &dir.join(REF1_FILE),
            &dir.join(REF2_FILE),
        )
    }

    /// Same result as writing the capture to disk and reading it back.
    pub fn from_capture(c: &SceneCapture) -> Result<Self> {
        Self::from_bytes([
            &c.height.to_fgrid_bytes(),
            &c.light1.to_pgm_bytes(),
            &c.light2.to_pgm_bytes(),
            &c.ref1.to_pgm_bytes(),
            &c.ref2.to_pgm_bytes(),
        ])
    }

    fn check_dimensions(&self) -> Result<()> {
        let (w, h) = (self.height.width(), self.height.height());
        for (name, img) in [
            ("light1", &self.light1),
            ("light2", &self.light2),
            ("ref1", &self.ref1),
            ("ref2", &self.ref2),
        ] {
            if (img.width(), img.height()) != (w, h) {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, height map is {w}x{h}",
                    img.width(),
                    img.height()
                )));
            }
        }
        Ok(())
    }
}

/// Write the six scene files into `dir`, each atomically.
pub fn write_capture(c: &SceneCapture, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files: [(&str, Vec<u8>); 6] = [
        (HEIGHT_FILE, c.height.to_fgrid_bytes()),
        (LIGHT1_FILE, c.light1.to_pgm_bytes()),
        (LIGHT2_FILE, c.light2.to_pgm_bytes()),
        (REF1_FILE, c.ref1.to_pgm_bytes()),
        (REF2_FILE, c.ref2.to_pgm_bytes()),
        (LABELS_FILE, c.labels.to_pgm_bytes()),
    ];
    for (name, bytes) in files {
        write_atomic(&dir.join(name), &bytes)?;
    }
    Ok(())
}

/// Subdirectories of `corpus` holding a label mask, sorted by name.
pub fn corpus_scenes(corpus: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(corpus).map_err(|e| Error::io(corpus, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(corpus, e))?.path();
        if path.join(LABELS_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Training examples from one labeled scene.
pub fn scene_training_set(
    inputs: &SceneInputs,
    labels: &LabelMask,
    negative_ratio: usize,
    seed: u64,
) -> Result<TrainingSet> {
    inputs.check_dimensions()?;
    let norm = normalize(&inputs.light1, &inputs.light2, &inputs.ref1, &inputs.ref2)?;
    build_training_set(norm.view(), labels, negative_ratio, seed)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: SvmModel,
    pub train_scenes: usize,
    pub holdout_scenes: usize,
    pub train_examples: usize,
    /// Pixel accuracy and wrinkle recall on the held-out scenes at 0.5.
    pub holdout: Option<(f64, f64)>,
}

/// Train on labeled scenes. The last `holdout_fraction` of them (by
/// position) are held out and only used for the accuracy estimate.
pub fn train_scenes(
    scenes: &[(SceneInputs, LabelMask)],
    cfg: &PipelineConfig,
) -> std::result::Result<TrainOutcome, StageError> {
    if scenes.is_empty() {
        return Err(Error::Training("corpus has no labeled scenes".into())).at(Stage::Train);
    }
    let n = scenes.len();
    let holdout = ((n as f64 * cfg.classifier.holdout_fraction).floor() as usize).min(n - 1);
    let sets = scenes
        .par_iter()
        .enumerate()
        .map(|(k, (inputs, labels))| {
            let seed = cfg.seed.wrapping_add(k as u64);
            scene_training_set(inputs, labels, cfg.classifier.negative_ratio, seed)
        })
        .collect::<Result<Vec<_>>>()
        .at(Stage::Train)?;
    let mut training = TrainingSet::default();
    let mut held = TrainingSet::default();
    for (k, set) in sets.into_iter().enumerate() {
        if k < n - holdout {
            training.extend(set);
        } else {
            held.extend(set);
        }
    }
    let model = train(&training, &cfg.classifier.hyper(cfg.seed)).at(Stage::Train)?;
    let holdout_metrics =
        (!held.is_empty()).then(|| (accuracy(&model, &held, 0.5), recall(&model, &held, 0.5)));
    Ok(TrainOutcome {
        model,
        train_scenes: n - holdout,
        holdout_scenes: holdout,
        train_examples: training.len(),
        holdout: holdout_metrics,
    })
}

/// Load every labeled scene under `corpus` and train.
pub fn train_corpus(
    corpus: &Path,
    cfg: &PipelineConfig,
) -> std::result::Result<TrainOutcome, StageError> {
    let dirs = corpus_scenes(corpus).at(Stage::Load)?;
    let scenes = dirs
        .iter()
        .map(|d| {
            Ok((
                SceneInputs::from_dir(d)?,
                crate::gridio::read_mask(d.join(LABELS_FILE))?,
            ))
        })
        .collect::<Result<Vec<_>>>()
        .at(Stage::Load)?;
    train_scenes(&scenes, cfg)
}

struct Timer {
    enabled: bool,
    times: BTreeMap<String, f64>,
    last: Instant,
}

impl Timer {
    fn new(enabled: bool) -> Self {
        Self {
            enabled,
            times: BTreeMap::new(),
            last: Instant::now(),
        }
    }

    fn lap(&mut self, stage: Stage) {
        let now = Instant::now();
        self.times
            .insert(stage.name().to_string(), (now - self.last).as_secs_f64());
        self.last = now;
    }

    fn finish(self) -> Option<BTreeMap<String, f64>> {
        self.enabled.then_some(self.times)
    }
}

/// Full detection: curvature scan, discontinuity scan, fusion and plan.
pub fn detect(
    inputs: &SceneInputs,
    model: &SvmModel,
    cfg: &PipelineConfig,
    with_timings: bool,
) -> std::result::Result<Report, StageError> {
    cfg.validate().at(Stage::Load)?;
    inputs.check_dimensions().at(Stage::Load)?;
    let mut timer = Timer::new(with_timings);
    let mut digests = inputs.digests.clone();
    digests.insert("model".to_string(), sha256_hex(&model.to_bytes()));
    timer.lap(Stage::Load);

    let detection = detect_bumps(&inputs.height, &cfg.curvature).at(Stage::Curvature)?;
    let mixture = build_mixture(&detection.bumps);
    timer.lap(Stage::Curvature);

    let norm = normalize(&inputs.light1, &inputs.light2, &inputs.ref1, &inputs.ref2)
        .at(Stage::Normalize)?;
    timer.lap(Stage::Normalize);

    let map = score_map(&norm, model, cfg.discont.score_threshold);
    timer.lap(Stage::Classify);

    let segments = extract_segments_refined(&map, &norm, inputs.height.transform(), &cfg.discont);
    timer.lap(Stage::Extract);

    let wrinkles = fuse(&segments, &mixture, &cfg.fusion);
    timer.lap(Stage::Fusion);

    let home = cfg.plan.home.unwrap_or(inputs.height.origin());
    let plan = plan_ironing(&wrinkles, &cfg.iron, home, &inputs.height).at(Stage::Plan)?;
    timer.lap(Stage::Plan);

    Ok(Report {
        schema_version: SCHEMA_VERSION,
        inputs: digests,
        config: cfg.clone(),
        grid: grid_info(&inputs.height),
        bumps: detection.bumps,
        bump_diagnostics: detection.diagnostics,
        mixture,
        marked_pixels: map.marked_count(),
        wrinkles,
        plan,
        timings: timer.finish(),
    })
}

/// Re-run acceptance and planning on a stored report with a new config.
/// Scores are kept; only `p_min`, the iron and the home position apply.
pub fn replan(
    report: &Report,
    height: &FloatGrid,
    cfg: &PipelineConfig,
) -> std::result::Result<Report, StageError> {
    cfg.validate().at(Stage::Load)?;
    if grid_info(height) != report.grid {
        return Err(Error::DimensionMismatch(
            "height map does not match the report's grid".into(),
        ))
        .at(Stage::Load);
    }
    let mut out = report.clone();
    out.config.fusion = cfg.fusion.clone();
    out.config.iron = cfg.iron.clone();
    out.config.plan = cfg.plan.clone();
    for w in &mut out.wrinkles {
        w.accepted = w.p >= cfg.fusion.p_min;
    }
    sort_by_probability(&mut out.wrinkles);
    let home = cfg.plan.home.unwrap_or(height.origin());
    out.plan = plan_ironing(&out.wrinkles, &cfg.iron, home, height).at(Stage::Plan)?;
    out.timings = None;
    Ok(out)
}

fn grid_info(g: &FloatGrid) -> GridInfo {
    GridInfo {
        width: g.width(),
        height: g.height(),
        cell_size: g.cell_size(),
        origin: g.origin(),
    }
}
