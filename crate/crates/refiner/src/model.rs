//! Flow transformer with interleaved geometry adapter blocks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use splatfix_core::rng::stream_rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::latent::{
    LatentGeom, LatentVideo, Normalization, DEFAULT_PS, DEFAULT_PT, MODALITY_CHANNELS,
    NUM_MODALITIES,
};
use crate::layers::{sinusoid, DitBlock, GaBlock, LayerNorm, Linear};
use crate::mat::{Mat, Real};
use crate::params::{Bound, ParamId, ParamStore};

/// Velocity is `(x̂1 − x_t) / max(1 − t, MIN_REMAINING_TIME)`.
pub const MIN_REMAINING_TIME: f64 = 0.02;
/// Timesteps are scaled by this before the sinusoidal embedding.
pub const TIME_SCALE: f64 = 1000.0;
const TIME_PERIOD: f64 = 10_000.0;
const POS_PERIOD: f64 = 100.0;
const CONTEXT_INIT_STD: f64 = 0.02;
/// Random stream for parameter initialization.
const INIT_STREAM: u64 = 0x1417;

/// Parameter-name prefixes of the adapter path.
pub const ADAPTER_PREFIXES: [&str; 3] = ["ga", "cond_proj", "context"];

/// Hidden width, attention heads and backbone depth, written `DxHxB` on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub d: usize,
    pub heads: usize,
    pub blocks: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            d: 64,
            heads: 4,
            blocks: 8,
        }
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.d, self.heads, self.blocks)
    }
}

impl FromStr for Dims {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('x').collect();
        let bad = || Error::Config(format!("dims must look like 64x4x8, got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let n: Vec<usize> = parts
            .iter()
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let dims = Self {
            d: n[0],
            heads: n[1],
            blocks: n[2],
        };
        dims.validate()?;
        Ok(dims)
    }
}

impl Dims {
    pub fn validate(&self) -> Result<()> {
        if self.d < 6 || !self.d.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "hidden width {} must be even and at least 6",
                self.d
            )));
        }
        if self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "{} heads do not divide width {}",
                self.heads, self.d
            )));
        }
        if self.blocks == 0 {
            return Err(Error::Config("at least one block".into()));
        }
        Ok(())
    }

    pub fn adapter_blocks(&self) -> usize {
        self.blocks / 2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dims: Dims,
    /// Geometry of the color latent.
    pub geom: LatentGeom,
    pub context_tokens: usize,
    pub norm: Normalization,
    pub init_seed: u64,
}

impl ModelConfig {
    /// Default patch sizes for `frames × height × width` color videos.
    pub fn new(
        dims: Dims,
        frames: usize,
        height: usize,
        width: usize,
        init_seed: u64,
    ) -> Result<Self> {
        let cfg = Self {
            dims,
            geom: LatentGeom::new(
                frames,
                height,
                width,
                MODALITY_CHANNELS,
                DEFAULT_PS,
                DEFAULT_PT,
            )?,
            context_tokens: 4,
            norm: Normalization::default(),
            init_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.geom.validate()?;
        self.norm.validate()?;
        if self.geom.channels != MODALITY_CHANNELS {
            return Err(Error::Config(format!(
                "color latent needs {MODALITY_CHANNELS} channels"
            )));
        }
        if self.context_tokens == 0 {
            return Err(Error::Config("at least one context token".into()));
        }
        Ok(())
    }

    pub fn latent_channels(&self) -> usize {
        self.geom.token_dim()
    }

    pub fn cond_channels(&self) -> usize {
        NUM_MODALITIES * self.latent_channels()
    }
}

/// Factorized sinusoidal encoding: disjoint channel bands for the `t`, `y` and `x` coordinates.
pub fn positional_encoding<T: Real>(coords: &[[usize; 3]], d: usize) -> Mat<T> {
    let band = 2 * (d / 6);
    let widths = [band, band, d - 2 * band];
    let mut out = Mat::zeros(coords.len(), d);
    for (k, c) in coords.iter().enumerate() {
        let row = out.row_mut(k);
        let mut o = 0;
        for (axis, w) in widths.iter().enumerate() {
            for (j, v) in sinusoid(c[axis] as f64, *w, POS_PERIOD)
                .into_iter()
                .enumerate()
            {
                row[o + j] = T::lit(v);
            }
            o += w;
        }
    }
    out
}

/// Inputs of one forward pass on token matrices.
#[derive(Clone, Copy, Debug)]
pub struct Inputs<'a, T> {
    /// Noisy latent `x_t`, one row per token.
    pub x: &'a Mat<T>,
    pub t: T,
    /// Stacked geometry conditioning, `5·C_lat` columns.
    pub cond: &'a Mat<T>,
    pub coords: &'a [[usize; 3]],
    /// `false` replaces the context tokens with zeros.
    pub context: bool,
}

#[derive(Clone, Debug)]
pub struct RefinerModel<T> {
    pub cfg: ModelConfig,
    pub store: ParamStore<T>,
    in_proj: Linear,
    time_fc1: Linear,
    time_fc2: Linear,
    cond_proj: Linear,
    context: ParamId,
    dit: Vec<DitBlock>,
    ga: Vec<GaBlock>,
    final_ln: LayerNorm,
    out_head: Linear,
}

impl<T: Real> RefinerModel<T> {
    /// Fresh model. Initialization draws in `f64`, so `f32` and `f64` models agree up to rounding.
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream_rng(cfg.init_seed, INIT_STREAM);
        let mut store = ParamStore::new();
        let (d, h) = (cfg.dims.d, cfg.dims.heads);
        let c_lat = cfg.latent_channels();
        let in_proj = Linear::new(&mut store, "in_proj", c_lat, d, &mut rng);
        let time_fc1 = Linear::new(&mut store, "time.fc1", d, d, &mut rng);
        let time_fc2 = Linear::new(&mut store, "time.fc2", d, d, &mut rng);
        // a 1×1×1 convolution over the token grid
        let cond_proj = Linear::new(&mut store, "cond_proj", cfg.cond_channels(), d, &mut rng);
        let context = store.add(
            "context",
            crate::layers::normal_mat(cfg.context_tokens, d, CONTEXT_INIT_STD, &mut rng),
        );
        let dit = (0..cfg.dims.blocks)
            .map(|i| DitBlock::new(&mut store, &format!("dit{i}"), d, h, &mut rng))
            .collect();
        let ga = (0..cfg.dims.adapter_blocks())
            .map(|i| GaBlock::new(&mut store, &format!("ga{i}"), d, h, &mut rng))
            .collect();
        let final_ln = LayerNorm::new(&mut store, "final_ln", d);
        let out_head = Linear::new(&mut store, "out_head", d, c_lat, &mut rng);
        Ok(Self {
            cfg,
            store,
            in_proj,
            time_fc1,
            time_fc2,
            cond_proj,
            context,
            dit,
            ga,
            final_ln,
            out_head,
        })
    }

    pub fn is_adapter_param(name: &str) -> bool {
        ADAPTER_PREFIXES.iter().any(|p| name.starts_with(p))
    }

    /// Scalar gates of the adapter blocks.
    pub fn gates(&self) -> Vec<ParamId> {
        self.ga.iter().map(|g| g.gate).collect()
    }

    fn check_inputs(&self, inp: &Inputs<'_, T>) -> Result<()> {
        let n = inp.coords.len();
        let c = self.cfg.latent_channels();
        if inp.x.shape() != (n, c) {
            return Err(Error::Shape(format!(
                "x_t is {:?}, expected {:?}",
                inp.x.shape(),
                (n, c)
            )));
        }
        if inp.cond.shape() != (n, self.cfg.cond_channels()) {
            return Err(Error::Shape(format!(
                "conditioning is {:?}, expected {:?}",
                inp.cond.shape(),
                (n, self.cfg.cond_channels())
            )));
        }
        if !inp.t.is_finite() {
            return Err(Error::Config(format!("timestep {} is not finite", inp.t)));
        }
        Ok(())
    }

    fn finite(tape: &Tape<T>, v: Var, block: usize) -> Result<()> {
        if tape.value(v).is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { block })
        }
    }

    /// Records the forward pass and returns `(x̂1, velocity)`. Blocks are numbered in execution
    /// order, adapter blocks included; block 0 is the input embedding.
    pub fn record(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        inp: &Inputs<'_, T>,
        adapter: bool,
    ) -> Result<(Var, Var)> {
        self.check_inputs(inp)?;
        let d = self.cfg.dims.d;
        let x_in = tape.leaf(inp.x.clone());
        let pos = tape.leaf(positional_encoding(inp.coords, d));

        let temb: Vec<T> = sinusoid(inp.t.as_f64() * TIME_SCALE, d, TIME_PERIOD)
            .into_iter()
            .map(T::lit)
            .collect();
        let temb = tape.leaf(Mat {
            rows: 1,
            cols: d,
            data: temb,
        });
        let temb = self.time_fc1.apply(tape, p, temb);
        let temb = tape.silu(temb);
        let temb = self.time_fc2.apply(tape, p, temb);

        let h = self.in_proj.apply(tape, p, x_in);
        let h = tape.add(h, pos);
        let mut x = tape.add_row(h, temb);
        let mut block = 0;
        Self::finite(tape, x, block)?;

        let mut side = None;
        let ctx = if inp.context {
            p.var(self.context)
        } else {
            tape.leaf(Mat::zeros(self.cfg.context_tokens, d))
        };
        if adapter && !self.ga.is_empty() {
            let z = tape.leaf(inp.cond.clone());
            let s = self.cond_proj.apply(tape, p, z);
            side = Some(tape.add(s, pos));
        }

        for (i, blk) in self.dit.iter().enumerate() {
            x = blk.apply(tape, p, x);
            block += 1;
            Self::finite(tape, x, block)?;
            if (i + 1) % 2 == 0 {
                if let (Some(ga), Some(s)) = (self.ga.get(i / 2), side) {
                    let xg = ga.feature(tape, p, s, ctx);
                    x = ga.inject(tape, p, x, xg);
                    side = Some(xg);
                    block += 1;
                    Self::finite(tape, x, block)?;
                }
            }
        }

        let h = self.final_ln.apply(tape, p, x);
        let x1_hat = self.out_head.apply(tape, p, h);
        Self::finite(tape, x1_hat, block + 1)?;
        let diff = tape.sub(x1_hat, x_in);
        let remaining = (T::one() - inp.t).max(T::lit(MIN_REMAINING_TIME));
        let u = tape.scale(diff, T::one() / remaining);
        Ok((x1_hat, u))
    }

    fn run(&self, inp: &Inputs<'_, T>, adapter: bool) -> Result<Mat<T>> {
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape);
        let (_, u) = self.record(&mut tape, &p, inp, adapter)?;
        Ok(tape.value(u).clone())
    }

    /// Velocity on token matrices.
    pub fn velocity(&self, inp: &Inputs<'_, T>) -> Result<Mat<T>> {
        self.run(inp, true)
    }

    /// Velocity with the adapter path removed.
    pub fn backbone_velocity(&self, inp: &Inputs<'_, T>) -> Result<Mat<T>> {
        self.run(inp, false)
    }

    /// Velocity for a latent video in storage order, with context tokens active.
    pub fn forward(&self, x_t: &LatentVideo<T>, t: T, cond: &Mat<T>) -> Result<LatentVideo<T>> {
        if x_t.geom != self.cfg.geom {
            return Err(Error::Shape(format!(
                "latent {:?} does not match model {:?}",
                x_t.geom, self.cfg.geom
            )));
        }
        let coords = x_t.geom.coords();
        let tokens = self.velocity(&Inputs {
            x: &x_t.tokens,
            t,
            cond,
            coords: &coords,
            context: true,
        })?;
        Ok(LatentVideo {
            geom: x_t.geom,
            tokens,
        })
    }

    /// Velocity-matching loss against `target`, and its gradient per parameter.
    pub fn loss_and_grads(&self, inp: &Inputs<'_, T>, target: &Mat<T>) -> Result<(T, Vec<Mat<T>>)> {
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape);
        let (_, u) = self.record(&mut tape, &p, inp, true)?;
        let loss = tape.mse(u, target.clone());
        let value = tape.value(loss).data[0];
        let mut grads = tape.backward(loss);
        Ok((value, self.store.gradients(&p, &mut grads)))
    }

    pub fn loss(&self, inp: &Inputs<'_, T>, target: &Mat<T>) -> Result<T> {
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape);
        let (_, u) = self.record(&mut tape, &p, inp, true)?;
        let loss = tape.mse(u, target.clone());
        Ok(tape.value(loss).data[0])
    }
}
