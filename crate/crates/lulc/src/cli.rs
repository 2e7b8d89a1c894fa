//! Command-line surface.
//!
//! Precedence for every setting: command-line flag, then the `--config`
//! file, then (for the output directory only) `LULC_OUT_DIR`, then the
//! built-in default. Diagnostics go to stderr; machine outputs only to files.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lulc_core::dataset::vertical_split;
use lulc_core::distill::{fuse_labels, teacher_to_student};
use lulc_core::eval::{self, AgreementCounts, AgreementMatrix, ConfusionMatrix, EvalSet};
use lulc_core::labels::{default_negative_distances, make_negatives, rasterize_rows};
use lulc_core::model::{recursive_train, ModelSpec, ProbRaster, TrainConfig};
use lulc_core::synth::{gen_pair, SceneConfig};
use lulc_core::{ClassScheme, Extent, Grid, MaskRaster, Provenance, RemapTable};
use serde::{Deserialize, Serialize};

use crate::config::{self, PipelineConfig};
use crate::formats::{self, checkpoint, geojson, report, scheme::Registry};
use crate::{tiles, Error, Result};

pub const OUT_DIR_ENV: &str = "LULC_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "lulc", version, about = "Land-use / land-cover pipeline: labels, training, distillation, evaluation")]
pub struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Maximum worker threads; results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Output directory [env: LULC_OUT_DIR] [default: .]
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Burn GeoJSON label polygons into a class mask.
    #[command(after_help = concat!(
        "Config keys read:\n  paths.labels          label polygons (--labels)\n  scheme.name           class scheme (--scheme)\n",
        "  seed, threads, paths.output_dir"))]
    Rasterize(RasterizeArgs),
    /// Cut a grid into train (left) and test (right) column extents.
    #[command(after_help = concat!(
        "Config keys read:\n  split.train_fraction  train share of columns (--fraction)\n",
        "  threads, paths.output_dir"))]
    Split(SplitArgs),
    /// Train a classifier (optionally recursively) on a sparse mask.
    #[command(after_help = concat!(
        "Config keys read:\n  paths.image, paths.mask       inputs (--image, --mask)\n  scheme.name                   class scheme (--scheme)\n",
        "  model.radius, model.hidden    architecture (--radius, --hidden)\n",
        "  train.learning_rate, train.batch_size, train.min_epochs, train.max_epochs,\n  train.patch_size, train.steps_per_epoch, train.rounds, train.patience,\n  train.weight_strategy, train.augment   schedule (matching flags; --no-augment)\n",
        "  distill.tau                   pseudo-label confidence (--tau)\n",
        "  seed, threads, paths.output_dir"))]
    Train(TrainArgs),
    /// Predict class probabilities and a class map.
    #[command(after_help = "Config keys read:\n  paths.image           input image (--image)\n  threads, paths.output_dir")]
    Predict(PredictArgs),
    /// Turn a high-resolution teacher map into low-resolution weak labels.
    #[command(after_help = concat!(
        "Config keys read:\n  scheme.name             teacher scheme (--teacher-scheme)\n",
        "  distill.student_scheme  student scheme (--student-scheme)\n  distill.remap           teacher->student table (--remap)\n",
        "  distill.factor          subdivision factor (--factor)\n  distill.min_coverage    majority coverage (--min-coverage)\n",
        "  threads, paths.output_dir"))]
    Distill(DistillArgs),
    /// Merge label rasters by priority.
    #[command(after_help = concat!(
        "Config keys read:\n  distill.priorities.manual, distill.priorities.osm, distill.priorities.pseudo\n",
        "                        default priority per provenance\n  threads, paths.output_dir"))]
    Fuse(FuseArgs),
    /// Score a class map against reference labels.
    #[command(after_help = concat!(
        "Config keys read:\n  scheme.name           scheme of prediction and truth (--scheme)\n",
        "  evaluate.set          whole|test|external (--set)\n  evaluate.target       scheme scores are computed in (--target)\n",
        "  evaluate.remap        extra remap tables (--remap)\n  evaluate.extent       test extent file (--extent)\n",
        "  threads, paths.output_dir"))]
    Evaluate(EvaluateArgs),
    /// Pairwise agreement and per-class areas of several maps.
    #[command(after_help = concat!(
        "Config keys read:\n  evaluate.target       common scheme (--target)\n  evaluate.remap        extra remap tables (--remap)\n",
        "  threads, paths.output_dir"))]
    Compare(CompareArgs),
    /// Generate a synthetic high/low-resolution scene pair.
    #[command(after_help = concat!(
        "Config keys read:\n  synth.size, synth.res, synth.factor, synth.bands, synth.scheme,\n  synth.separability, synth.label_fraction   (matching flags)\n",
        "  seed, threads, paths.output_dir"))]
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
#[group(id = "grid_source", multiple = false)]
pub struct GridArgs {
    /// Take the grid from this raster.
    #[arg(long, value_name = "RASTER", group = "grid_source")]
    pub like: Option<PathBuf>,
    /// Explicit grid: origin_x,origin_y,res,width,height.
    #[arg(long, value_name = "SPEC", group = "grid_source")]
    pub grid: Option<String>,
}

impl GridArgs {
    fn resolve(&self, what: &str) -> Result<Grid> {
        match (&self.like, &self.grid) {
            (Some(p), _) => {
                config::require_file("--like", p)?;
                formats::read_grid(p)
            }
            (None, Some(s)) => formats::parse_grid(s),
            (None, None) => Err(Error::usage(format!("{what}: pass --like RASTER or --grid SPEC"))),
        }
    }
}

#[derive(Debug, Args)]
pub struct RasterizeArgs {
    #[arg(long, value_name = "GEOJSON")]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub scheme: Option<String>,
    /// Add hard-negative rings around Building (3 m) and Road (5 m) polygons.
    #[arg(long)]
    pub negatives: bool,
    /// Output mask [default: <out-dir>/mask.tif]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Training extent file; the whole grid when omitted.
    #[arg(long)]
    pub extent: Option<PathBuf>,
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub min_epochs: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// inverse-frequency | uniform
    #[arg(long)]
    pub weight_strategy: Option<String>,
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub radius: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Probability raster [default: <out-dir>/probs.tif]
    #[arg(long)]
    pub probs: Option<PathBuf>,
    /// Class map; Negative is replaced by the runner-up class [default: <out-dir>/map.tif]
    #[arg(long)]
    pub map: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[arg(long)]
    pub teacher: PathBuf,
    #[arg(long)]
    pub teacher_scheme: Option<String>,
    #[arg(long)]
    pub student_scheme: Option<String>,
    #[arg(long)]
    pub remap: Option<PathBuf>,
    /// Student grid.
    #[command(flatten)]
    pub grid: GridArgs,
    /// Student pixels are subdivided factor x factor before the majority vote
    /// [default: student res / teacher res, rounded].
    #[arg(long)]
    pub factor: Option<usize>,
    #[arg(long)]
    pub min_coverage: Option<f64>,
    /// [default: <out-dir>/distilled.tif]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// JSON manifest: {"sources": [{"path": ..., "provenance": "manual", "priority": 3}]};
    /// `priority` defaults from the provenance.
    #[arg(long)]
    pub manifest: PathBuf,
    /// [default: <out-dir>/fused.tif]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Scheme of both inputs unless overridden below.
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub pred_scheme: Option<String>,
    #[arg(long)]
    pub truth_scheme: Option<String>,
    /// Scheme the scores are computed in [default: the truth scheme].
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub remap: Vec<PathBuf>,
    /// whole | test | external
    #[arg(long)]
    pub set: Option<String>,
    #[arg(long)]
    pub extent: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// NAME:SCHEME:PATH, repeated; at least two.
    #[arg(long = "map", value_name = "NAME:SCHEME:PATH", required = true)]
    pub maps: Vec<String>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub remap: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Width and height of the high-resolution grid.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub res: Option<f64>,
    #[arg(long)]
    pub factor: Option<usize>,
    #[arg(long)]
    pub bands: Option<usize>,
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub separability: Option<f64>,
    #[arg(long)]
    pub label_fraction: Option<f64>,
}

/// Parses `args` and runs; returns the process exit status.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Ctx {
    cfg: PipelineConfig,
    threads: usize,
    seed: u64,
    out_dir: PathBuf,
    registry: Registry,
}

impl Ctx {
    fn out(&self, explicit: Option<&PathBuf>, default_name: &str) -> PathBuf {
        explicit.cloned().unwrap_or_else(|| self.out_dir.join(default_name))
    }

    fn scheme(&mut self, flag: Option<&String>, default: &str) -> Result<ClassScheme> {
        let name = flag.or(self.cfg.scheme.name.as_ref()).map(String::as_str).unwrap_or(default);
        self.registry.resolve_scheme(name)
    }

    fn input(&self, flag: Option<&PathBuf>, cfg: Option<&PathBuf>, what: &str) -> Result<PathBuf> {
        let p = flag
            .or(cfg)
            .cloned()
            .ok_or_else(|| Error::usage(format!("missing input: {what}")))?;
        config::require_file(what, &p)?;
        Ok(p)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => {
            config::require_file("--config", p)?;
            PipelineConfig::load(p)?
        }
        None => PipelineConfig::default(),
    };
    let threads = cli.threads.or(cfg.threads).unwrap_or_else(tiles::default_threads);
    if threads == 0 {
        return Err(Error::usage("--threads must be >= 1"));
    }
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| cfg.paths.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let mut ctx = Ctx {
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        cfg,
        threads,
        out_dir,
        registry: Registry::new(),
    };
    match &cli.command {
        Command::Rasterize(a) => cmd_rasterize(&mut ctx, a),
        Command::Split(a) => cmd_split(&mut ctx, a),
        Command::Train(a) => cmd_train(&mut ctx, a),
        Command::Predict(a) => cmd_predict(&mut ctx, a),
        Command::Distill(a) => cmd_distill(&mut ctx, a),
        Command::Fuse(a) => cmd_fuse(&mut ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&mut ctx, a),
        Command::Compare(a) => cmd_compare(&mut ctx, a),
        Command::Synth(a) => cmd_synth(&mut ctx, a),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn check_fraction(name: &str, v: f64, open: bool) -> Result<()> {
    let ok = if open { v > 0.0 && v < 1.0 } else { (0.0..=1.0).contains(&v) };
    if ok {
        Ok(())
    } else {
        Err(Error::usage(format!("{name} out of range: {v}")))
    }
}

fn cmd_rasterize(ctx: &mut Ctx, a: &RasterizeArgs) -> Result<()> {
    let labels = ctx.input(a.labels.as_ref(), ctx.cfg.paths.labels.as_ref(), "labels")?;
    let grid = a.grid.resolve("rasterize")?;
    let scheme = ctx.scheme(a.scheme.as_ref(), "teacher")?;
    let (mut polys, ignored) = geojson::read_polygons(&labels, &scheme)?;
    for i in &ignored {
        eprintln!("warning: feature {} ignored: {}", i.feature, i.reason);
    }
    for (i, p) in polys.iter().enumerate() {
        if let Err(e) = p.validate() {
            eprintln!("warning: polygon {i} skipped: {e}");
        }
    }
    if a.negatives {
        let neg = scheme
            .negative_index()
            .ok_or_else(|| lulc_core::Error::NoNegativeClass(scheme.name.clone()))?;
        let set = make_negatives(&polys, &default_negative_distances(&scheme), &grid, neg);
        for s in &set.skipped {
            eprintln!("warning: no negative ring for polygon {}: {}", s.index, s.reason);
        }
        polys.extend(set.rings);
    }
    let bands = tiles::map_bands(grid.height, ctx.threads, |rows| rasterize_rows(&polys, &grid, &scheme, rows));
    let mut values = Vec::with_capacity(grid.len());
    for b in bands {
        values.extend(b?);
    }
    let mask = MaskRaster::new(grid, values)?;
    let out = ctx.out(a.out.as_ref(), "mask.tif");
    ensure_parent(&out)?;
    formats::write_mask(&out, &mask)
}

fn cmd_split(ctx: &mut Ctx, a: &SplitArgs) -> Result<()> {
    let grid = a.grid.resolve("split")?;
    let fraction = a.fraction.or(ctx.cfg.split.train_fraction).unwrap_or(0.7);
    check_fraction("train fraction", fraction, true)?;
    let (train, test) = vertical_split(&grid, fraction)?;
    ensure_dir(&ctx.out_dir)?;
    formats::write_extent(&ctx.out_dir.join("train_extent.json"), &train, &grid)?;
    formats::write_extent(&ctx.out_dir.join("test_extent.json"), &test, &grid)
}

fn train_config(ctx: &Ctx, a: &TrainArgs) -> Result<TrainConfig> {
    let mut t = ctx.cfg.train_config()?;
    t.seed = ctx.seed;
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = a.$field { t.$field = v; })* };
    }
    set!(rounds, learning_rate, batch_size, min_epochs, max_epochs, patch_size, steps_per_epoch, patience);
    if let Some(s) = &a.weight_strategy {
        t.weight_strategy = config::parse_weight_strategy(s)?;
    }
    if a.no_augment {
        t.augment = false;
    }
    if let Some(tau) = a.tau {
        check_fraction("--tau", tau, false)?;
        t.pseudo_label_threshold = tau;
    }
    t.validate()?;
    Ok(t)
}

fn cmd_train(ctx: &mut Ctx, a: &TrainArgs) -> Result<()> {
    let image_path = ctx.input(a.image.as_ref(), ctx.cfg.paths.image.as_ref(), "image")?;
    let mask_path = ctx.input(a.mask.as_ref(), ctx.cfg.paths.mask.as_ref(), "mask")?;
    let scheme = ctx.scheme(a.scheme.as_ref(), "teacher")?;
    let tc = train_config(ctx, a)?;
    let image = formats::read_image(&image_path)?;
    let mask = formats::read_mask(&mask_path)?;
    scheme.check_mask(&mask)?;
    let extent = match &a.extent {
        Some(p) => {
            config::require_file("--extent", p)?;
            formats::read_extent(p, &mask.grid)?
        }
        None => mask.grid.full_extent(),
    };
    let spec = ModelSpec {
        radius: a.radius.or(ctx.cfg.model.radius).unwrap_or(1),
        hidden: a.hidden.clone().or_else(|| ctx.cfg.model.hidden.clone()).unwrap_or_else(|| vec![32]),
        classes: scheme.num_classes(),
        bands: image.bands,
        seed: ctx.seed,
    };
    spec.validate()?;
    let rounds = recursive_train(&image, &mask, &extent, &spec, &tc)?;
    ensure_dir(&ctx.out_dir)?;
    for (k, r) in rounds.iter().enumerate() {
        let n = k + 1;
        checkpoint::write(&ctx.out_dir.join(format!("round{n}.lcm")), &r.model, &scheme)?;
        report::write_train_log(&ctx.out_dir.join(format!("round{n}_log.csv")), &r.log)?;
        eprintln!(
            "round {n}: {} labeled pixels, {} epochs, final loss {:.5}{}",
            r.labeled_pixels,
            r.log.epochs.len(),
            r.log.final_loss().unwrap_or(f64::NAN),
            if r.log.stopped_early { " (early stop)" } else { "" }
        );
    }
    let last = rounds.last().expect("at least one round");
    checkpoint::write(&ctx.out_dir.join("model.lcm"), &last.model, &scheme)?;
    report::write_train_log(&ctx.out_dir.join("train_log.csv"), &last.log)
}

fn cmd_predict(ctx: &mut Ctx, a: &PredictArgs) -> Result<()> {
    config::require_file("--model", &a.model)?;
    let image_path = ctx.input(a.image.as_ref(), ctx.cfg.paths.image.as_ref(), "image")?;
    let (model, scheme) = checkpoint::read(&a.model)?;
    let image = formats::read_image(&image_path)?;
    let bands = tiles::map_bands(image.grid.height, ctx.threads, |rows| model.predict_rows(&image, rows));
    let mut values = Vec::with_capacity(image.grid.len() * model.spec.classes);
    for b in bands {
        values.extend(b?);
    }
    let probs = ProbRaster::new(image.grid, model.spec.classes, values)?;
    let map = if scheme.negative_index().is_some() {
        eval::relabel_negative(&probs, &scheme)?
    } else {
        probs.argmax()
    };
    let probs_out = ctx.out(a.probs.as_ref(), "probs.tif");
    let map_out = ctx.out(a.map.as_ref(), "map.tif");
    ensure_parent(&probs_out)?;
    ensure_parent(&map_out)?;
    formats::write_prob(&probs_out, &probs)?;
    formats::write_mask(&map_out, &map)
}

fn cmd_distill(ctx: &mut Ctx, a: &DistillArgs) -> Result<()> {
    config::require_file("--teacher", &a.teacher)?;
    let teacher_scheme = ctx.scheme(a.teacher_scheme.as_ref(), "teacher")?;
    let student_name = a
        .student_scheme
        .clone()
        .or_else(|| ctx.cfg.distill.student_scheme.clone())
        .unwrap_or_else(|| "student".into());
    let student_scheme = ctx.registry.resolve_scheme(&student_name)?;
    let remap = match a.remap.as_ref().or(ctx.cfg.distill.remap.as_ref()) {
        Some(p) => {
            config::require_file("remap", p)?;
            ctx.registry.load_table(p)?
        }
        None => ctx.registry.table(&teacher_scheme, &student_scheme)?,
    };
    check_table(&remap, &teacher_scheme, &student_scheme)?;
    let student_grid = a.grid.resolve("distill")?;
    let min_coverage = a.min_coverage.or(ctx.cfg.distill.min_coverage).unwrap_or(0.5);
    check_fraction("min coverage", min_coverage, false)?;
    let teacher = formats::read_mask(&a.teacher)?;
    teacher_scheme.check_mask(&teacher)?;
    let factor = match a.factor.or(ctx.cfg.distill.factor) {
        Some(0) => return Err(Error::usage("factor must be >= 1")),
        Some(f) => f,
        None => ((student_grid.res / teacher.grid.res).round() as usize).max(1),
    };
    let out_mask = teacher_to_student(&teacher, &student_grid, factor, min_coverage, &remap)?;
    let out = ctx.out(a.out.as_ref(), "distilled.tif");
    ensure_parent(&out)?;
    formats::write_mask(&out, &out_mask)
}

fn check_table(t: &RemapTable, source: &ClassScheme, target: &ClassScheme) -> Result<()> {
    if t.source.names() != source.names() || t.target.names() != target.names() {
        return Err(Error::usage(format!(
            "remap table maps `{}` -> `{}`, expected `{}` -> `{}`",
            t.source.name, t.target.name, source.name, target.name
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuseManifest {
    pub sources: Vec<FuseSource>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuseSource {
    pub path: PathBuf,
    #[serde(default)]
    pub provenance: Option<String>,
    #[serde(default)]
    pub priority: Option<i32>,
}

fn cmd_fuse(ctx: &mut Ctx, a: &FuseArgs) -> Result<()> {
    config::require_file("--manifest", &a.manifest)?;
    let manifest: FuseManifest = formats::read_json(&a.manifest)?;
    if manifest.sources.is_empty() {
        return Err(Error::usage("fuse manifest lists no sources"));
    }
    let p = &ctx.cfg.distill.priorities;
    let base = a.manifest.parent().unwrap_or(Path::new(""));
    let mut layers = Vec::with_capacity(manifest.sources.len());
    for s in &manifest.sources {
        let path = if s.path.is_absolute() { s.path.clone() } else { base.join(&s.path) };
        config::require_file("fuse source", &path)?;
        let priority = match (s.priority, s.provenance.as_deref()) {
            (Some(v), _) => v,
            (None, prov) => {
                let prov = match prov {
                    None => Provenance::Manual,
                    Some(t) => Provenance::parse(t).ok_or_else(|| Error::usage(format!("unknown provenance `{t}`")))?,
                };
                let configured = match prov {
                    Provenance::Manual => p.manual,
                    Provenance::Osm => p.osm,
                    Provenance::Pseudo => p.pseudo,
                };
                configured.unwrap_or(prov.default_priority())
            }
        };
        layers.push((formats::read_mask(&path)?, priority));
    }
    let refs: Vec<(&MaskRaster, i32)> = layers.iter().map(|(m, p)| (m, *p)).collect();
    let fused = fuse_labels(&refs)?;
    let out = ctx.out(a.out.as_ref(), "fused.tif");
    ensure_parent(&out)?;
    formats::write_mask(&out, &fused)
}

fn load_tables(ctx: &mut Ctx, flags: &[PathBuf]) -> Result<()> {
    let paths: Vec<PathBuf> = if flags.is_empty() {
        ctx.cfg.evaluate.remap.clone().unwrap_or_default()
    } else {
        flags.to_vec()
    };
    for p in &paths {
        config::require_file("remap", p)?;
        ctx.registry.load_table(p)?;
    }
    Ok(())
}

fn confusion_threaded(pred: &MaskRaster, truth: &MaskRaster, scheme: &ClassScheme, threads: usize) -> Result<ConfusionMatrix> {
    if pred.grid != truth.grid {
        return Err(lulc_core::Error::GridMismatch("prediction and truth grids differ".into()).into());
    }
    scheme.check_mask(pred)?;
    scheme.check_mask(truth)?;
    let w = pred.grid.width;
    let parts = tiles::map_bands(pred.grid.height, threads, |rows| {
        let mut cm = ConfusionMatrix::new(scheme.num_classes());
        let span = rows.start * w..rows.end * w;
        cm.accumulate(&truth.values[span.clone()], &pred.values[span]);
        cm
    });
    let mut cm = ConfusionMatrix::new(scheme.num_classes());
    for p in &parts {
        cm.merge(p)?;
    }
    Ok(cm)
}

fn cmd_evaluate(ctx: &mut Ctx, a: &EvaluateArgs) -> Result<()> {
    config::require_file("--pred", &a.pred)?;
    config::require_file("--truth", &a.truth)?;
    let pred_scheme = ctx.scheme(a.pred_scheme.as_ref().or(a.scheme.as_ref()), "teacher")?;
    let truth_scheme = ctx.scheme(a.truth_scheme.as_ref().or(a.scheme.as_ref()), "teacher")?;
    let target = match a.target.as_ref().or(ctx.cfg.evaluate.target.as_ref()) {
        Some(t) => ctx.registry.resolve_scheme(t)?,
        None => truth_scheme.clone(),
    };
    // Tables name their schemes, so scheme files must be registered first.
    load_tables(ctx, &a.remap)?;
    let set_name = a.set.as_ref().or(ctx.cfg.evaluate.set.as_ref()).map(String::as_str).unwrap_or("whole");
    let set = EvalSet::parse(set_name).ok_or_else(|| Error::usage(format!("unknown evaluation set `{set_name}`")))?;
    let extent_path = a.extent.as_ref().or(ctx.cfg.evaluate.extent.as_ref());
    if set == EvalSet::Test && extent_path.is_none() {
        return Err(Error::usage("--set test needs --extent"));
    }
    if let Some(p) = extent_path {
        config::require_file("--extent", p)?;
    }
    let to_pred = ctx.registry.table(&pred_scheme, &target)?;
    let to_truth = ctx.registry.table(&truth_scheme, &target)?;

    let pred = formats::read_mask(&a.pred)?;
    let truth = formats::read_mask(&a.truth)?;
    pred_scheme.check_mask(&pred)?;
    truth_scheme.check_mask(&truth)?;
    let pred = to_pred.apply(&pred)?;
    let mut truth = to_truth.apply(&truth)?;
    if let Some(p) = extent_path {
        let extent: Extent = formats::read_extent(p, &truth.grid)?;
        truth = truth.restrict(&extent)?;
    }
    let cm = confusion_threaded(&pred, &truth, &target, ctx.threads)?;
    let rep = eval::metrics(&cm, &target, set)?;
    ensure_dir(&ctx.out_dir)?;
    formats::write_json(&ctx.out_dir.join("metrics.json"), &report::metrics_json(&rep))?;
    report::write_metrics_csv(&ctx.out_dir.join("metrics.csv"), &rep)?;
    report::write_confusion_csv(&ctx.out_dir.join("confusion.csv"), &cm, &target)?;
    print!("{}", report::metrics_text(&rep));
    Ok(())
}

fn parse_map_arg(s: &str) -> Result<(String, String, PathBuf)> {
    let mut it = s.splitn(3, ':');
    match (it.next(), it.next(), it.next()) {
        (Some(id), Some(scheme), Some(path)) if !id.is_empty() && !scheme.is_empty() && !path.is_empty() => {
            Ok((id.to_string(), scheme.to_string(), PathBuf::from(path)))
        }
        _ => Err(Error::usage(format!("--map `{s}` is not NAME:SCHEME:PATH"))),
    }
}

fn cmd_compare(ctx: &mut Ctx, a: &CompareArgs) -> Result<()> {
    if a.maps.len() < 2 {
        return Err(Error::usage("compare needs at least two --map arguments"));
    }
    let target_name = a
        .target
        .clone()
        .or_else(|| ctx.cfg.evaluate.target.clone())
        .unwrap_or_else(|| "evaluation".into());
    let target = ctx.registry.resolve_scheme(&target_name)?;
    let mut specs = Vec::with_capacity(a.maps.len());
    for m in &a.maps {
        let (id, scheme_name, path) = parse_map_arg(m)?;
        config::require_file(&format!("map `{id}`"), &path)?;
        let scheme = ctx.registry.resolve_scheme(&scheme_name)?;
        specs.push((id, scheme, path));
    }
    load_tables(ctx, &a.remap)?;
    let mut entries = Vec::with_capacity(specs.len());
    for (id, scheme, path) in specs {
        let table = ctx.registry.table(&scheme, &target)?;
        entries.push((id, scheme, table, path));
    }
    let mut maps = Vec::with_capacity(entries.len());
    for (id, scheme, _, path) in &entries {
        let m = formats::read_mask(path)?;
        scheme.check_mask(&m).map_err(|e| Error::format(path, format!("map `{id}`: {e}")))?;
        maps.push(m);
    }
    let inputs: Vec<(String, &MaskRaster, &RemapTable)> =
        entries.iter().zip(&maps).map(|((id, _, t, _), m)| (id.clone(), m, t)).collect();
    let (harmonized, excluded) = eval::harmonize_all(&inputs)?;
    let grid = harmonized[0].grid;
    let w = grid.width;
    let counts: Vec<AgreementCounts> = eval::pairs(harmonized.len())
        .into_iter()
        .map(|(i, j)| {
            let parts = tiles::map_bands(grid.height, ctx.threads, |rows| {
                let span = rows.start * w..rows.end * w;
                AgreementCounts::count(&harmonized[i].values[span.clone()], &harmonized[j].values[span], &excluded)
            });
            parts.into_iter().fold(AgreementCounts::default(), |mut acc, c| {
                acc.merge(c);
                acc
            })
        })
        .collect();
    let ids: Vec<String> = entries.iter().map(|e| e.0.clone()).collect();
    let matrix = AgreementMatrix::from_counts(ids, &counts)?;
    let areas = entries
        .iter()
        .zip(&maps)
        .map(|((id, scheme, _, _), m)| Ok((id.clone(), eval::area_coverage(m, scheme)?)))
        .collect::<Result<Vec<_>>>()?;

    ensure_dir(&ctx.out_dir)?;
    formats::write_json(&ctx.out_dir.join("agreement.json"), &report::agreement_json(&matrix))?;
    report::write_agreement_csv(&ctx.out_dir.join("agreement.csv"), &matrix)?;
    let area_docs: Vec<serde_json::Value> = areas.iter().map(|(id, t)| report::area_json(id, t)).collect();
    formats::write_json(&ctx.out_dir.join("areas.json"), &area_docs)?;
    report::write_areas_csv(&ctx.out_dir.join("areas.csv"), &areas)?;
    print!("{}", report::agreement_text(&matrix));
    print!("{}", report::areas_text(&areas));
    Ok(())
}

#[derive(Debug, Serialize)]
struct SceneDoc<'a> {
    seed: u64,
    size: usize,
    res: f64,
    factor: usize,
    bands: usize,
    scheme: &'a str,
    separability: f64,
    label_fraction: f64,
    noise_std: f64,
    class_means: Vec<(&'a str, &'a [f64])>,
    label_polygons: usize,
}

fn cmd_synth(ctx: &mut Ctx, a: &SynthArgs) -> Result<()> {
    let s = ctx.cfg.synth.clone();
    let size = a.size.or(s.size).unwrap_or(256);
    let res = a.res.or(s.res).unwrap_or(1.0);
    let factor = a.factor.or(s.factor).unwrap_or(4);
    let scheme_name = a.scheme.clone().or(s.scheme).unwrap_or_else(|| "teacher".into());
    let scheme = ctx.registry.resolve_scheme(&scheme_name)?;
    let d = SceneConfig::default();
    let sc = SceneConfig {
        bands: a.bands.or(s.bands).unwrap_or(d.bands),
        separability: a.separability.or(s.separability).unwrap_or(d.separability),
        label_fraction: a.label_fraction.or(s.label_fraction).unwrap_or(d.label_fraction),
        ..d
    };
    check_fraction("separability", sc.separability, false)?;
    check_fraction("label fraction", sc.label_fraction, true)?;
    sc.validate()?;
    if size == 0 || !size.is_multiple_of(factor.max(1)) {
        return Err(Error::usage(format!("size {size} must be a positive multiple of factor {factor}")));
    }
    let grid = Grid::new(0.0, size as f64 * res, res, size, size).map_err(|e| Error::usage(e.to_string()))?;
    let pair = gen_pair(ctx.seed, &grid, factor, &scheme, &sc)?;

    let dir = &ctx.out_dir;
    ensure_dir(dir)?;
    formats::write_image(&dir.join("hi_image.tif"), &pair.hi.image)?;
    formats::write_mask(&dir.join("hi_truth.tif"), &pair.hi.truth)?;
    geojson::write_polygons(&dir.join("labels.geojson"), &pair.hi.labels, &scheme)?;
    formats::write_image(&dir.join("lo_image.tif"), &pair.lo_image)?;
    formats::write_mask(&dir.join("lo_truth.tif"), &pair.lo_truth)?;
    formats::write_json(&dir.join("scheme.json"), &formats::scheme::SchemeFile::from_scheme(&scheme))?;
    let classes = lulc_core::synth::scene_classes(&scheme);
    let doc = SceneDoc {
        seed: ctx.seed,
        size,
        res,
        factor,
        bands: sc.bands,
        scheme: &scheme.name,
        separability: sc.separability,
        label_fraction: sc.label_fraction,
        noise_std: sc.noise_std(),
        class_means: classes
            .iter()
            .map(|&c| (scheme.name_of(c).unwrap_or("?"), pair.hi.means[c as usize].as_slice()))
            .collect(),
        label_polygons: pair.hi.labels.len(),
    };
    formats::write_json(&dir.join("scene.json"), &doc)
}

