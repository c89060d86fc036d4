//! The `splatfix` command line.
//!
//! Every subcommand accepts `--seed`, `--config file.json` (keys in the file override flags),
//! `--json` (machine-readable summary on stdout) and `--threads`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use splatfix_core::camera::{read_cameras, write_cameras};
use splatfix_core::io::{load_ply, write_ply, write_tensor};
use splatfix_core::metrics::psnr;
use splatfix_core::optim::FitConfig;
use splatfix_core::raster::{render_trajectory, MODALITIES};
use splatfix_core::rng::{derive_seed, stream_rng, streams};
use splatfix_core::simulate::{
    build_dataset, make_scene, sparse_subset, DegradeMode, InitMode, SceneSpec, SimConfig,
};
use splatfix_core::traject::{interpolate, resample, TrajectoryConfig};
use splatfix_core::{Camera, GaussianCloud, GpBufferVideo, RasterConfig, VideoTensor};
use splatfix_refiner::checkpoint;
use splatfix_refiner::flow::{
    read_manifest_samples, read_sample, train, TrainConfig, TrainSample, Trainable,
};
use splatfix_refiner::{refine_video, Dims, ModelConfig, RefinerModel};

use crate::desk::{desk_scene, desk_split, fit_experiment, DeskConfig, FitExperiment};
use crate::eval::evaluate;
use crate::refine::{ModelRefiner, OracleRefiner};
use crate::update::{reconstruct_update, UpdateConfig};

#[derive(Parser, Debug)]
#[command(
    name = "splatfix",
    version,
    about = "Gaussian splat rendering, artifact simulation, refinement and re-fitting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render the five GP-Buffer modalities of a scene along its cameras.
    Render(RenderArgs),
    /// Fit a synthetic scene from dense views and score held-out captures.
    Fit(FitArgs),
    /// Interpolate a smooth camera path through key cameras.
    Traject(TrajectArgs),
    /// Generate a paired corrupted/clean dataset.
    Simulate(SimulateArgs),
    /// Train the flow refiner on a dataset manifest.
    TrainRefiner(TrainArgs),
    /// Refine one dataset sample with a trained model.
    Refine(RefineArgs),
    /// Refine novel views of a sparsely fitted scene and re-fit it.
    Update(UpdateArgs),
    /// Score a cloud on the held-out captures of a synthetic scene.
    Eval(EvalArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct Common {
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON file whose keys override the flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Print a JSON summary to stdout.
    #[arg(long)]
    pub json: bool,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct RenderArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Scene PLY; a synthetic scene from the seed when absent.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Cameras JSON; the synthetic capture path when absent.
    #[arg(long)]
    pub cameras: Option<PathBuf>,
    /// Synthetic image size.
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long)]
    pub splats: Option<usize>,
    /// Render at most this many cameras, evenly resampled.
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long, default_value_t = 16)]
    pub tile_size: usize,
    /// Also write color PNG previews.
    #[arg(long)]
    pub png: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 2000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 20)]
    pub train_views: usize,
    #[arg(long, default_value_t = 3)]
    pub hold_every: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 200)]
    pub splats: usize,
    #[arg(long, default_value_t = 30)]
    pub capture_frames: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TrajectArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Key cameras JSON; a sparse subset of the synthetic captures when absent.
    #[arg(long)]
    pub cameras: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub samples_per_segment: usize,
    /// Resample the path to this many cameras.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Fraction of synthetic captures used as keys.
    #[arg(long, default_value_t = 0.05)]
    pub retained_fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 4)]
    pub samples: usize,
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    #[arg(long, default_value_t = 0.05)]
    pub retained_fraction: f64,
    #[arg(long, default_value_t = 4000)]
    pub clean_iters: usize,
    /// Fixed corrupted-fit iterations; drawn per sample when absent.
    #[arg(long)]
    pub corrupt_iters: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub iter_scale: usize,
    /// Fixed initialization; drawn per sample when absent.
    #[arg(long, value_parser = parse_init_mode)]
    pub init_mode: Option<InitMode>,
    #[arg(long)]
    pub splats: Option<usize>,
    #[arg(long)]
    pub capture_frames: Option<usize>,
    /// Apply the synthetic feed-forward degradation.
    #[arg(long)]
    pub feedforward: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Hidden width, heads and blocks.
    #[arg(long, default_value = "64x4x8")]
    pub dims: String,
    #[arg(long, default_value_t = 5000)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    #[arg(long, default_value_t = 3e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub modality_dropout: f64,
    #[arg(long, default_value_t = 0.1)]
    pub context_dropout: f64,
    /// Save a checkpoint every this many steps; 0 disables.
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
    /// Train only the adapter path, starting from `--init`.
    #[arg(long)]
    pub adapter_only: bool,
    /// Checkpoint to start from.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Checkpoint directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct RefineArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: PathBuf,
    /// Sample directory from `simulate`.
    #[arg(long)]
    pub sample: PathBuf,
    /// Euler steps.
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long)]
    pub png: bool,
    /// Output GPBT file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct UpdateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Trained checkpoint; the ground-truth oracle refiner when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub per_segment_samples: usize,
    #[arg(long, default_value_t = 50)]
    pub ode_steps: usize,
    #[arg(long, default_value_t = 2000)]
    pub update_iters: usize,
    #[arg(long, default_value_t = 0.1)]
    pub retained_fraction: f64,
    #[arg(long, default_value_t = 500)]
    pub corrupt_iters: usize,
    #[arg(long, default_value_t = 200)]
    pub splats: usize,
    #[arg(long, default_value_t = 40)]
    pub capture_frames: usize,
    #[arg(long, value_parser = parse_init_mode, default_value = "random_points")]
    pub init_mode: InitMode,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Cloud to score.
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub retained_fraction: f64,
    #[arg(long, default_value_t = 200)]
    pub splats: usize,
    #[arg(long, default_value_t = 40)]
    pub capture_frames: usize,
    /// Also write the held-out renders as GPBT.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_init_mode(s: &str) -> Result<InitMode, String> {
    InitMode::ALL
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| {
            format!(
                "unknown init mode {s:?}; expected one of {:?}",
                InitMode::ALL.map(|m| m.name())
            )
        })
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

/// Applies `--config` on top of the parsed flags.
fn resolve<A: Serialize + DeserializeOwned>(args: A, config: Option<&Path>) -> anyhow::Result<A> {
    let Some(path) = config else { return Ok(args) };
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let over: Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if !over.is_object() {
        bail!("{} must hold a JSON object", path.display());
    }
    let mut base = serde_json::to_value(&args)?;
    merge(&mut base, over);
    serde_json::from_value(base).with_context(|| format!("applying {}", path.display()))
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, v: &impl Serialize) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)?)
        .with_context(|| format!("writing {}", path.display()))
}

/// Writes each frame of an `H × W × 3` video as `{stem}_{k:04}.png`.
pub fn write_png_frames(
    video: &VideoTensor<f32>,
    dir: &Path,
    stem: &str,
) -> anyhow::Result<Vec<PathBuf>> {
    if video.channels != 3 {
        bail!("PNG previews need three channels, got {}", video.channels);
    }
    create_dir(dir)?;
    let mut out = Vec::with_capacity(video.frames);
    for k in 0..video.frames {
        let bytes: Vec<u8> = video
            .frame(k)
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let path = dir.join(format!("{stem}_{k:04}.png"));
        image::save_buffer(
            &path,
            &bytes,
            video.width as u32,
            video.height as u32,
            image::ColorType::Rgb8,
        )
        .with_context(|| format!("writing {}", path.display()))?;
        out.push(path);
    }
    Ok(out)
}

fn write_buffers(buf: &GpBufferVideo<f64>, dir: &Path) -> anyhow::Result<Vec<String>> {
    let mut files = Vec::new();
    for (name, video) in MODALITIES.iter().zip(buf.modalities()) {
        let file = format!("{name}.gpbt");
        write_tensor(dir.join(&file), video)?;
        files.push(file);
    }
    Ok(files)
}

fn synthetic_spec(size: usize, splats: Option<usize>, frames: Option<usize>) -> SceneSpec {
    SceneSpec {
        width: size,
        height: size,
        splats,
        frames,
        ..SceneSpec::default()
    }
}

fn run_render(a: RenderArgs) -> anyhow::Result<Value> {
    let raster = RasterConfig {
        tile_size: a.tile_size,
        ..RasterConfig::default()
    };
    let (scene, synthetic_cams): (GaussianCloud<f64>, Option<Vec<Camera<f64>>>) = match &a.scene {
        Some(p) => (load_ply(p)?, None),
        None => {
            let (s, c) = make_scene(a.common.seed, &synthetic_spec(a.size, a.splats, None));
            (s, Some(c))
        }
    };
    let mut cams = match (&a.cameras, synthetic_cams) {
        (Some(p), _) => read_cameras(p)?,
        (None, Some(c)) => c,
        (None, None) => bail!("--cameras is required with --scene"),
    };
    if let Some(f) = a.frames {
        cams = resample(&cams, f);
    }
    let buf = render_trajectory(&scene, &cams, &raster)?;
    create_dir(&a.out)?;
    let mut files = write_buffers(&buf, &a.out)?;
    write_cameras(a.out.join("cameras.json"), &cams)?;
    files.push("cameras.json".into());
    if a.scene.is_none() {
        write_ply(a.out.join("scene.ply"), &scene)?;
        files.push("scene.ply".into());
    }
    if a.png {
        write_png_frames(&buf.color.cast(), &a.out.join("preview"), "color")?;
    }
    Ok(json!({
        "command": "render",
        "frames": cams.len(),
        "width": buf.color.width,
        "height": buf.color.height,
        "splats": scene.len(),
        "files": files,
    }))
}

fn run_fit(a: FitArgs) -> anyhow::Result<Value> {
    let base = FitExperiment::default();
    let exp = FitExperiment {
        scene: synthetic_spec(a.size, Some(a.splats), Some(a.capture_frames)),
        train_views: a.train_views,
        hold_every: a.hold_every,
        fit: FitConfig {
            iterations: a.iterations,
            seed: derive_seed(a.common.seed, streams::FIT),
            ..base.fit
        },
    };
    let out = fit_experiment::<f64>(a.common.seed, &exp)?;
    create_dir(&a.out)?;
    write_ply(a.out.join("fitted.ply"), &out.fitted)?;
    let cams: Vec<_> = out.held_out.iter().map(|v| v.camera.clone()).collect();
    let renders = render_trajectory(&out.fitted, &cams, &exp.fit.raster)?;
    write_tensor(a.out.join("heldout_color.gpbt"), &renders.color)?;
    write_json(&a.out.join("report.json"), &out.report)?;
    Ok(json!({
        "command": "fit",
        "train_views": out.train_cameras.len(),
        "held_out_views": out.held_out.len(),
        "report": out.report,
    }))
}

fn run_traject(a: TrajectArgs) -> anyhow::Result<Value> {
    let (keys, scene) = match &a.cameras {
        Some(p) => (read_cameras::<f64>(p)?, None),
        None => {
            let (scene, caps) = make_scene::<f64>(a.common.seed, &SceneSpec::default());
            let idx = sparse_subset(
                caps.len(),
                a.retained_fraction,
                &mut stream_rng(a.common.seed, streams::SUBSET),
            )?;
            (idx.iter().map(|&i| caps[i].clone()).collect(), Some(scene))
        }
    };
    let mut path = interpolate(
        &keys,
        &TrajectoryConfig {
            samples_per_segment: a.samples_per_segment,
        },
    )?;
    if let Some(f) = a.frames {
        path = resample(&path, f);
    }
    create_dir(&a.out)?;
    write_cameras(a.out.join("path.json"), &path)?;
    let mut files = vec!["path.json".to_string()];
    if let Some(scene) = scene {
        let raster = RasterConfig {
            tile_size: 8,
            ..RasterConfig::default()
        };
        write_cameras(a.out.join("keys.json"), &keys)?;
        let video = render_trajectory(&scene, &path, &raster)?.color;
        write_tensor(a.out.join("path_color.gpbt"), &video)?;
        files.extend(["keys.json".to_string(), "path_color.gpbt".to_string()]);
    }
    Ok(json!({
        "command": "traject",
        "keys": keys.len(),
        "path": path.len(),
        "files": files,
    }))
}

fn run_simulate(a: SimulateArgs) -> anyhow::Result<Value> {
    let cfg = SimConfig {
        frames: a.frames,
        retained_fraction: a.retained_fraction,
        clean_iters: a.clean_iters,
        corrupt_iters: a.corrupt_iters,
        iter_scale: a.iter_scale,
        init_mode: a.init_mode,
        degrade_mode: if a.feedforward {
            DegradeMode::FeedforwardSynthetic
        } else {
            DegradeMode::None
        },
        seed: a.common.seed,
        scene: SceneSpec {
            splats: a.splats,
            frames: a.capture_frames,
            ..SceneSpec::default()
        },
        ..SimConfig::default()
    };
    let manifest = build_dataset(a.samples, &cfg, &a.out)?;
    let below = manifest
        .samples
        .iter()
        .filter(|s| s.meta.psnr_corrupted_vs_gt < s.meta.psnr_clean_vs_gt)
        .count();
    Ok(json!({
        "command": "simulate",
        "manifest": a.out.join(splatfix_core::simulate::MANIFEST_FILE),
        "samples": manifest.samples.len(),
        "skipped": manifest.skipped,
        "corrupted_below_clean": below,
    }))
}

fn run_train(a: TrainArgs) -> anyhow::Result<Value> {
    let dims: Dims = a.dims.parse()?;
    let data = read_manifest_samples::<f32>(&a.manifest)?;
    let (mut model, start) = match &a.init {
        Some(p) => {
            let (m, c) = checkpoint::load::<f32>(p)?;
            (m, c.step)
        }
        None => {
            let clean = &data[0].1;
            let cfg = ModelConfig::new(
                dims,
                clean.frames,
                clean.height,
                clean.width,
                derive_seed(a.common.seed, streams::MODEL_INIT),
            )?;
            (RefinerModel::<f32>::new(cfg)?, 0)
        }
    };
    if a.adapter_only && a.init.is_none() {
        bail!("--adapter-only needs --init with a trained backbone");
    }
    let samples = data
        .iter()
        .map(|(buf, clean)| TrainSample::new(&model, buf, clean))
        .collect::<splatfix_refiner::Result<Vec<_>>>()?;
    let cfg = TrainConfig {
        steps: a.steps,
        batch: a.batch,
        lr: a.lr,
        modality_dropout_p: [a.modality_dropout; 5],
        context_dropout_p: a.context_dropout,
        seed: a.common.seed,
        dims: model.cfg.dims,
        checkpoint_every: a.checkpoint_every,
        trainable: if a.adapter_only {
            Trainable::AdapterOnly
        } else {
            Trainable::All
        },
        ..TrainConfig::default()
    };
    let out = a.out.clone();
    let report = train(&mut model, &samples, &cfg, |step, m| {
        checkpoint::save(
            m,
            start + step,
            out.join(format!("step_{:06}", start + step)),
        )
    })?;
    checkpoint::save(&model, start + a.steps, &a.out)?;
    write_json(&a.out.join("train_log.json"), &report)?;
    Ok(json!({
        "command": "train-refiner",
        "samples": samples.len(),
        "steps": a.steps,
        "dims": model.cfg.dims.to_string(),
        "final_loss": report.final_loss,
    }))
}

fn run_refine(a: RefineArgs) -> anyhow::Result<Value> {
    let (model, _) = checkpoint::load::<f32>(&a.model)?;
    let (buf, clean) = read_sample::<f32>(&a.sample)?;
    let refined = refine_video(&model, &buf, a.steps, a.common.seed)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_tensor(&a.out, &refined)?;
    if a.png {
        let dir = a.out.with_extension("preview");
        write_png_frames(&refined, &dir, "refined")?;
    }
    Ok(json!({
        "command": "refine",
        "frames": refined.frames,
        "psnr_refined_vs_clean": psnr(&refined.data, &clean.data)?,
        "psnr_corrupted_vs_clean": psnr(&buf.color.data, &clean.data)?,
    }))
}

fn desk_config(
    splats: usize,
    frames: usize,
    retained: f64,
    corrupt_iters: usize,
    init: InitMode,
) -> DeskConfig {
    let mut cfg = DeskConfig::default();
    cfg.scene.splats = Some(splats);
    cfg.scene.frames = Some(frames);
    cfg.retained_fraction = retained;
    cfg.corrupt_iters = corrupt_iters;
    cfg.init_mode = init;
    cfg
}

fn run_update(a: UpdateArgs) -> anyhow::Result<Value> {
    let desk = desk_config(
        a.splats,
        a.capture_frames,
        a.retained_fraction,
        a.corrupt_iters,
        a.init_mode,
    );
    let scene = desk_scene::<f32>(a.common.seed, &desk)?;
    let cfg = UpdateConfig {
        per_segment_samples: a.per_segment_samples,
        refine_ode_steps: a.ode_steps,
        update_iters: a.update_iters,
        seed: a.common.seed,
        fit: desk.fit.clone(),
    };
    let inputs = scene.input_views();
    let held = scene.held_out_views();
    let raster = &desk.fit.raster;
    let baseline = evaluate(&scene.corrupted, &held, raster)?;
    let (outcome, refiner) = match &a.model {
        Some(p) => {
            let (model, _) = checkpoint::load::<f32>(p)?;
            let r = ModelRefiner {
                model: &model,
                ode_steps: a.ode_steps,
            };
            (
                reconstruct_update(&scene.corrupted, &inputs, &r, &cfg)?,
                "model",
            )
        }
        None => {
            let r = OracleRefiner {
                scene: scene.ground_truth.clone(),
                raster: raster.clone(),
            };
            (
                reconstruct_update(&scene.corrupted, &inputs, &r, &cfg)?,
                "oracle",
            )
        }
    };
    let updated = evaluate(&outcome.cloud, &held, raster)?;
    create_dir(&a.out)?;
    write_ply(a.out.join("corrupted.ply"), &scene.corrupted)?;
    write_ply(a.out.join("updated.ply"), &outcome.cloud)?;
    let cams: Vec<_> = held.iter().map(|v| v.camera.clone()).collect();
    write_tensor(
        a.out.join("heldout_color.gpbt"),
        &render_trajectory(&outcome.cloud, &cams, raster)?.color,
    )?;
    let report = json!({
        "command": "update",
        "refiner": refiner,
        "inputs": inputs.len(),
        "held_out": held.len(),
        "added_views": outcome.added_views,
        "baseline": baseline,
        "updated": updated,
        "improvement_db": updated.mean_psnr - baseline.mean_psnr,
    });
    write_json(&a.out.join("report.json"), &report)?;
    Ok(report)
}

fn run_eval(a: EvalArgs) -> anyhow::Result<Value> {
    let cloud: GaussianCloud<f32> = load_ply(&a.cloud)?;
    let desk = desk_config(
        a.splats,
        a.capture_frames,
        a.retained_fraction,
        1,
        InitMode::RandomPoints,
    );
    let split = desk_split::<f32>(a.common.seed, &desk)?;
    let held = split.held_out_views();
    let report = evaluate(&cloud, &held, &desk.fit.raster)?;
    if let Some(out) = &a.out {
        create_dir(out)?;
        let cams: Vec<_> = held.iter().map(|v| v.camera.clone()).collect();
        write_tensor(
            out.join("heldout_color.gpbt"),
            &render_trajectory(&cloud, &cams, &desk.fit.raster)?.color,
        )?;
        write_json(&out.join("report.json"), &report)?;
    }
    Ok(json!({ "command": "eval", "report": report }))
}

fn setup(common: &Common) -> anyhow::Result<()> {
    if let Some(n) = common.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn dispatch<A: Serialize + DeserializeOwned>(
    args: A,
    common: impl Fn(&A) -> &Common,
    run: impl FnOnce(A) -> anyhow::Result<Value>,
) -> anyhow::Result<(bool, Value)> {
    let config = common(&args).config.clone();
    let args = resolve(args, config.as_deref())?;
    setup(common(&args))?;
    let json = common(&args).json;
    Ok((json, run(args)?))
}

/// Runs one parsed invocation and returns `(json flag, summary)`.
pub fn run(cli: Cli) -> anyhow::Result<(bool, Value)> {
    match cli.command {
        Command::Render(a) => dispatch(a, |a| &a.common, run_render),
        Command::Fit(a) => dispatch(a, |a| &a.common, run_fit),
        Command::Traject(a) => dispatch(a, |a| &a.common, run_traject),
        Command::Simulate(a) => dispatch(a, |a| &a.common, run_simulate),
        Command::TrainRefiner(a) => dispatch(a, |a| &a.common, run_train),
        Command::Refine(a) => dispatch(a, |a| &a.common, run_refine),
        Command::Update(a) => dispatch(a, |a| &a.common, run_update),
        Command::Eval(a) => dispatch(a, |a| &a.common, run_eval),
    }
}

fn summarize(v: &Value) -> String {
    fn walk(prefix: &str, v: &Value, parts: &mut Vec<String>) {
        match v {
            Value::Object(m) => {
                for (k, x) in m {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(&key, x, parts);
                }
            }
            Value::Array(_) => {}
            Value::String(s) => parts.push(format!("{prefix}={s}")),
            other => parts.push(format!("{prefix}={other}")),
        }
    }
    let mut parts = Vec::new();
    walk("", v, &mut parts);
    parts.join(" ")
}

/// The error chain, skipping causes whose text the message already contains.
pub fn error_message(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}

pub fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((true, v)) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&v).expect("summary serializes")
            );
            std::process::ExitCode::SUCCESS
        }
        Ok((false, v)) => {
            println!("{}", summarize(&v));
            std::process::ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", error_message(&e));
            std::process::ExitCode::FAILURE
        }
    }
}
