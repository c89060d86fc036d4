//! Flow-matching tuples, Euler sampling and training.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use splatfix_core::io::read_tensor;
use splatfix_core::optim::Adam;
use splatfix_core::rng::{derive_seed, stream_rng};
use splatfix_core::simulate::{Manifest, SAMPLE_FILES};
use splatfix_core::{GpBufferVideo, VideoTensor};

use crate::error::{Error, Result};
use crate::latent::{
    apply_modality_mask, encode, encode_gpbuffer, LatentVideo, ModalityMask, Normalization,
    KEEP_ALL, NUM_MODALITIES,
};
use crate::mat::{Mat, Real};
use crate::model::{Dims, Inputs, RefinerModel};

/// Flow values live on this dyadic grid so that `v + x0 == x1` holds exactly.
pub const FLOW_GRID: f64 = 1.0 / 65536.0;
/// Noise is clipped to this magnitude before quantization.
pub const NOISE_CLIP: f64 = 8.0;

const NOISE_STREAM: u64 = 0x4e01;
const TRAIN_STREAM: u64 = 0x7121;

fn quantize(v: f64) -> f64 {
    (v / FLOW_GRID).round() * FLOW_GRID
}

/// Quantized, clipped standard normal noise.
pub fn sample_noise<T: Real>(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat<T> {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::lit(quantize(z.clamp(-NOISE_CLIP, NOISE_CLIP)))
        })
        .collect();
    Mat { rows, cols, data }
}

/// One flow-matching training tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowTuple<T> {
    pub x0: Mat<T>,
    /// Clean latent snapped to the flow grid.
    pub x1: Mat<T>,
    pub x_t: Mat<T>,
    pub t: T,
    /// Target velocity `x1 − x0`.
    pub v: Mat<T>,
}

/// Draws `t ~ U[0, 1)` and then the noise, in that order.
pub fn sample_tuple_with<T: Real>(x1: &Mat<T>, rng: &mut impl Rng) -> FlowTuple<T> {
    let t = T::lit(rng.random::<f64>());
    let x1 = x1.map(|v| T::lit(quantize(v.as_f64())));
    let x0 = sample_noise(x1.rows, x1.cols, rng);
    let x_t = x1.zip_map(&x0, |a, b| t * a + (T::one() - t) * b);
    let v = x1.zip_map(&x0, |a, b| a - b);
    FlowTuple { x0, x1, x_t, t, v }
}

pub fn fm_sample_training_tuple<T: Real>(x1: &Mat<T>, seed: u64) -> FlowTuple<T> {
    sample_tuple_with(x1, &mut stream_rng(seed, NOISE_STREAM))
}

/// Tuple at a given time, for probing the interpolation endpoints.
pub fn tuple_at<T: Real>(x1: &Mat<T>, t: T, seed: u64) -> FlowTuple<T> {
    let mut tuple = fm_sample_training_tuple(x1, seed);
    tuple.t = t;
    tuple.x_t = tuple
        .x1
        .zip_map(&tuple.x0, |a, b| t * a + (T::one() - t) * b);
    tuple
}

/// A time-dependent velocity field over token matrices.
pub trait VelocityField<T> {
    fn velocity(&self, x: &Mat<T>, t: T) -> Result<Mat<T>>;
}

/// The model with fixed conditioning and active context tokens.
pub struct Conditioned<'a, T> {
    pub model: &'a RefinerModel<T>,
    pub cond: &'a Mat<T>,
    pub coords: Vec<[usize; 3]>,
}

impl<T: Real> VelocityField<T> for Conditioned<'_, T> {
    fn velocity(&self, x: &Mat<T>, t: T) -> Result<Mat<T>> {
        self.model.velocity(&Inputs {
            x,
            t,
            cond: self.cond,
            coords: &self.coords,
            context: true,
        })
    }
}

/// Explicit Euler from `t = 0` to `1` with uniform steps.
pub fn integrate<T: Real>(
    field: &impl VelocityField<T>,
    x0: Mat<T>,
    steps: usize,
) -> Result<Mat<T>> {
    if steps == 0 {
        return Err(Error::Config("at least one ODE step".into()));
    }
    let dt = T::one() / T::from_usize(steps);
    let mut x = x0;
    for k in 0..steps {
        let t = T::from_usize(k) / T::from_usize(steps);
        let u = field.velocity(&x, t)?;
        if u.shape() != x.shape() {
            return Err(Error::Shape(format!(
                "velocity {:?} for state {:?}",
                u.shape(),
                x.shape()
            )));
        }
        for (xi, ui) in x.data.iter_mut().zip(&u.data) {
            *xi += dt * *ui;
        }
    }
    Ok(x)
}

/// Starting noise of [`generate_with`].
pub fn initial_noise<T: Real>(geom: crate::latent::LatentGeom, seed: u64) -> Mat<T> {
    sample_noise(
        geom.tokens(),
        geom.token_dim(),
        &mut stream_rng(seed, NOISE_STREAM),
    )
}

/// Noise from `seed`, integrated through `field`, decoded and mapped back to `[0, 1]` color.
pub fn generate_with<T: Real>(
    field: &impl VelocityField<T>,
    geom: crate::latent::LatentGeom,
    steps: usize,
    seed: u64,
) -> Result<VideoTensor<T>> {
    let x1 = integrate(field, initial_noise(geom, seed), steps)?;
    let video = crate::latent::decode(&LatentVideo { geom, tokens: x1 })?;
    Ok(video.map(Normalization::color_out))
}

pub fn generate<T: Real>(
    model: &RefinerModel<T>,
    cond: &Mat<T>,
    steps: usize,
    seed: u64,
) -> Result<VideoTensor<T>> {
    let field = Conditioned {
        model,
        cond,
        coords: model.cfg.geom.coords(),
    };
    generate_with(&field, model.cfg.geom, steps, seed)
}

fn check_dims<T: Real>(model: &RefinerModel<T>, v: &VideoTensor<T>, what: &str) -> Result<()> {
    let g = model.cfg.geom;
    if [v.frames, v.height, v.width] != [g.frames, g.height, g.width] {
        return Err(Error::Shape(format!(
            "{what} is {}x{}x{}, model was trained on {}x{}x{}",
            v.frames, v.height, v.width, g.frames, g.height, g.width
        )));
    }
    Ok(())
}

/// Refined color video for corrupted GP-Buffer videos.
pub fn refine_video<T: Real>(
    model: &RefinerModel<T>,
    corrupted: &GpBufferVideo<T>,
    steps: usize,
    seed: u64,
) -> Result<VideoTensor<T>> {
    check_dims(model, &corrupted.color, "input")?;
    let g = model.cfg.geom;
    let cond = encode_gpbuffer(corrupted, &model.cfg.norm, KEEP_ALL, g.ps, g.pt)?;
    generate(model, &cond, steps, seed)
}

/// One paired example in latent form.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample<T> {
    /// Conditioning with every modality present.
    pub cond: Mat<T>,
    /// Normalized clean color latent.
    pub x1: Mat<T>,
}

impl<T: Real> TrainSample<T> {
    pub fn new(
        model: &RefinerModel<T>,
        corrupted: &GpBufferVideo<T>,
        clean: &VideoTensor<T>,
    ) -> Result<Self> {
        check_dims(model, &corrupted.color, "corrupted input")?;
        check_dims(model, clean, "clean target")?;
        let g = model.cfg.geom;
        let cond = encode_gpbuffer(corrupted, &model.cfg.norm, KEEP_ALL, g.ps, g.pt)?;
        let x1 = encode(&clean.map(Normalization::unit), g.ps, g.pt)?.tokens;
        Ok(Self { cond, x1 })
    }
}

/// Corrupted buffers and clean color of one sample directory.
pub fn read_sample<T: Real>(dir: &Path) -> Result<(GpBufferVideo<T>, VideoTensor<T>)> {
    let mut mods = Vec::with_capacity(NUM_MODALITIES);
    for f in &SAMPLE_FILES[..NUM_MODALITIES] {
        mods.push(read_tensor(dir.join(f))?);
    }
    let mods: [VideoTensor<T>; NUM_MODALITIES] = mods.try_into().expect("five modalities");
    let buf = GpBufferVideo::from_modalities(mods)?;
    let clean = read_tensor(dir.join(SAMPLE_FILES[NUM_MODALITIES]))?;
    Ok((buf, clean))
}

/// Every sample listed in a manifest, in manifest order.
pub fn read_manifest_samples<T: Real>(
    manifest_path: &Path,
) -> Result<Vec<(GpBufferVideo<T>, VideoTensor<T>)>> {
    let manifest = Manifest::read(manifest_path)?;
    if manifest.samples.is_empty() {
        return Err(Error::Config(format!(
            "{} lists no samples",
            manifest_path.display()
        )));
    }
    (0..manifest.samples.len())
        .map(|k| read_sample(&manifest.sample_dir(manifest_path, k)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trainable {
    #[default]
    All,
    /// Adapter blocks, conditioning projection and context tokens; the backbone stays frozen.
    AdapterOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    /// Cosine decay ends at `lr · final_lr_frac`.
    pub final_lr_frac: f64,
    pub warmup_steps: usize,
    /// Global gradient-norm clip; `None` disables it.
    pub grad_clip: Option<f64>,
    /// Drop probability per modality, in canonical modality order.
    pub modality_dropout_p: [f64; NUM_MODALITIES],
    pub context_dropout_p: f64,
    pub seed: u64,
    pub dims: Dims,
    /// Checkpoint callback period in steps; 0 disables it.
    pub checkpoint_every: usize,
    pub trainable: Trainable,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 5000,
            batch: 1,
            lr: 3e-3,
            final_lr_frac: 0.02,
            warmup_steps: 100,
            grad_clip: Some(1.0),
            modality_dropout_p: [0.1; NUM_MODALITIES],
            context_dropout_p: 0.1,
            seed: 0,
            dims: Dims::default(),
            checkpoint_every: 0,
            trainable: Trainable::All,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch == 0 {
            return Err(Error::Config("steps and batch must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(0.0..=1.0).contains(&self.final_lr_frac) {
            return Err(Error::Config(
                "learning rate must be positive, final fraction in [0, 1]".into(),
            ));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Config("gradient clip must be positive".into()));
            }
        }
        let probs = self
            .modality_dropout_p
            .iter()
            .chain(std::iter::once(&self.context_dropout_p));
        for p in probs {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::Config(format!(
                    "dropout probability {p} outside [0, 1]"
                )));
            }
        }
        self.dims.validate()
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        let warm = self.warmup_steps.min(self.steps / 10);
        if step < warm {
            return self.lr * (step + 1) as f64 / warm as f64;
        }
        let span = (self.steps - warm).max(1) as f64;
        let frac = (step - warm) as f64 / span;
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * frac).cos());
        self.lr * (self.final_lr_frac + (1.0 - self.final_lr_frac) * cos)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss per step.
    pub losses: Vec<f64>,
    /// Mean over the last 100 steps (or fewer).
    pub final_loss: f64,
}

/// Per-element draws of one training step, in draw order.
#[derive(Clone, Debug, PartialEq)]
pub struct ElementDraw<T> {
    pub sample: usize,
    pub keep: ModalityMask,
    pub context: bool,
    pub tuple: FlowTuple<T>,
}

/// Deterministic draws of `step`, independent of earlier steps.
pub fn step_draws<T: Real>(
    cfg: &TrainConfig,
    samples: &[TrainSample<T>],
    step: usize,
) -> Vec<ElementDraw<T>> {
    let mut rng: ChaCha8Rng = stream_rng(derive_seed(cfg.seed, TRAIN_STREAM), step as u64);
    (0..cfg.batch)
        .map(|_| {
            let sample = rng.random_range(0..samples.len());
            let keep = std::array::from_fn(|m| rng.random::<f64>() >= cfg.modality_dropout_p[m]);
            let context = rng.random::<f64>() >= cfg.context_dropout_p;
            let tuple = sample_tuple_with(&samples[sample].x1, &mut rng);
            ElementDraw {
                sample,
                keep,
                context,
                tuple,
            }
        })
        .collect()
}

/// Trains in place with Adam. `on_checkpoint(step, model)` runs every `checkpoint_every` steps.
pub fn train<T: Real>(
    model: &mut RefinerModel<T>,
    samples: &[TrainSample<T>],
    cfg: &TrainConfig,
    mut on_checkpoint: impl FnMut(usize, &RefinerModel<T>) -> Result<()>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    if cfg.dims != model.cfg.dims {
        return Err(Error::Config(format!(
            "config dims {} differ from model dims {}",
            cfg.dims, model.cfg.dims
        )));
    }
    match cfg.trainable {
        Trainable::All => model.store.set_trainable(|_| true),
        Trainable::AdapterOnly => model
            .store
            .set_trainable(RefinerModel::<T>::is_adapter_param),
    }
    let coords = model.cfg.geom.coords();
    let mut adams: Vec<Adam<T>> = model
        .store
        .iter()
        .map(|p| Adam::new(p.value.len(), T::lit(0.9), T::lit(0.999), T::lit(1e-8)))
        .collect();
    let mut losses = Vec::with_capacity(cfg.steps);
    let inv_batch = T::one() / T::from_usize(cfg.batch);

    for step in 0..cfg.steps {
        let mut total: Option<Vec<Mat<T>>> = None;
        let mut loss_sum = 0.0;
        for draw in step_draws(cfg, samples, step) {
            let cond = apply_modality_mask(&samples[draw.sample].cond, draw.keep);
            let inp = Inputs {
                x: &draw.tuple.x_t,
                t: draw.tuple.t,
                cond: &cond,
                coords: &coords,
                context: draw.context,
            };
            let (loss, grads) = model.loss_and_grads(&inp, &draw.tuple.v)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            loss_sum += loss.as_f64();
            match total.as_mut() {
                None => total = Some(grads),
                Some(acc) => acc
                    .iter_mut()
                    .zip(&grads)
                    .for_each(|(a, g)| a.add_assign(g)),
            }
        }
        let mut grads = total.expect("batch is non-empty");
        let mut sq = 0.0;
        for (g, p) in grads.iter_mut().zip(model.store.iter()) {
            g.data.iter_mut().for_each(|v| *v *= inv_batch);
            if p.trainable {
                sq += g.data.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>();
            }
        }
        let norm = sq.sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        let clip = match cfg.grad_clip {
            Some(c) if norm > c => T::lit(c / norm),
            _ => T::one(),
        };
        let lr = T::lit(cfg.lr_at(step));
        for ((p, g), adam) in model.store.iter_mut().zip(&mut grads).zip(&mut adams) {
            if !p.trainable {
                continue;
            }
            if clip != T::one() {
                g.data.iter_mut().for_each(|v| *v *= clip);
            }
            adam.update(&mut p.value.data, &g.data, lr);
        }
        losses.push(loss_sum / cfg.batch as f64);
        if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 {
            on_checkpoint(step + 1, model)?;
        }
    }
    let tail = &losses[losses.len().saturating_sub(100)..];
    let final_loss = tail.iter().sum::<f64>() / tail.len() as f64;
    Ok(TrainReport { losses, final_loss })
}
