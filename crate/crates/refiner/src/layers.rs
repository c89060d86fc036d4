//! Transformer building blocks recorded on a tape.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Tape, Var};
use crate::mat::{Mat, Real};
use crate::params::{Bound, ParamId, ParamStore};

pub const LN_EPS: f64 = 1e-6;

/// Matrix of independent `N(0, std²)` draws.
pub fn normal_mat<T: Real>(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Mat<T> {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::lit(z * std)
        })
        .collect();
    Mat { rows, cols, data }
}

/// `y = x·W + b`, `W` of shape `in × out` with LeCun-normal init and zero bias.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        din: usize,
        dout: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = store.add(
            format!("{name}.w"),
            normal_mat(din, dout, (1.0 / din as f64).sqrt(), rng),
        );
        let b = store.add(format!("{name}.b"), Mat::zeros(1, dout));
        Self { w, b }
    }

    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Var {
        let y = tape.matmul(x, p.var(self.w));
        tape.add_row(y, p.var(self.b))
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, d: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Mat::filled(1, d, T::one()));
        let beta = store.add(format!("{name}.beta"), Mat::zeros(1, d));
        Self { gamma, beta }
    }

    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Var {
        let s = tape.standardize(x, T::lit(LN_EPS));
        let g = tape.mul_row(s, p.var(self.gamma));
        tape.add_row(g, p.var(self.beta))
    }
}

/// Multi-head scaled dot-product attention from queries `x` to keys/values `ctx`.
#[derive(Clone, Debug)]
pub struct Attention {
    pub heads: usize,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

impl Attention {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            heads,
            q: Linear::new(store, &format!("{name}.q"), d, d, rng),
            k: Linear::new(store, &format!("{name}.k"), d, d, rng),
            v: Linear::new(store, &format!("{name}.v"), d, d, rng),
            o: Linear::new(store, &format!("{name}.o"), d, d, rng),
        }
    }

    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, p: &Bound, x: Var, ctx: Var) -> Var {
        let d = tape.value(x).cols;
        let dh = d / self.heads;
        let q = self.q.apply(tape, p, x);
        let k = self.k.apply(tape, p, ctx);
        let v = self.v.apply(tape, p, ctx);
        let scale = T::one() / T::from_usize(dh).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (c0, c1) = (h * dh, (h + 1) * dh);
            let qh = tape.slice_cols(q, c0, c1);
            let kh = tape.slice_cols(k, c0, c1);
            let vh = tape.slice_cols(v, c0, c1);
            let s = tape.product(qh, false, kh, true);
            let s = tape.scale(s, scale);
            let a = tape.softmax_rows(s);
            outs.push(tape.matmul(a, vh));
        }
        let cat = if outs.len() == 1 {
            outs[0]
        } else {
            tape.concat_cols(&outs)
        };
        self.o.apply(tape, p, cat)
    }
}

/// Two-layer GELU MLP with a 4× hidden width.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            fc1: Linear::new(store, &format!("{name}.fc1"), d, 4 * d, rng),
            fc2: Linear::new(store, &format!("{name}.fc2"), 4 * d, d, rng),
        }
    }

    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Var {
        let h = self.fc1.apply(tape, p, x);
        let h = tape.gelu(h);
        self.fc2.apply(tape, p, h)
    }
}

/// Pre-norm transformer block: `x + Attn(LN x)`, then `x + MLP(LN x)`.
#[derive(Clone, Debug)]
pub struct DitBlock {
    pub ln1: LayerNorm,
    pub attn: Attention,
    pub ln2: LayerNorm,
    pub mlp: Mlp,
}

impl DitBlock {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), d),
            attn: Attention::new(store, &format!("{name}.attn"), d, heads, rng),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), d),
            mlp: Mlp::new(store, &format!("{name}.mlp"), d, rng),
        }
    }

    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Var {
        let h = self.ln1.apply(tape, p, x);
        let a = self.attn.apply(tape, p, h, h);
        let x = tape.add(x, a);
        let h = self.ln2.apply(tape, p, x);
        let m = self.mlp.apply(tape, p, h);
        tape.add(x, m)
    }
}

/// Geometry adapter block: self-attention over the geometry stream, cross-attention to the
/// context tokens and an MLP. Its output enters the main stream through a scalar gate.
#[derive(Clone, Debug)]
pub struct GaBlock {
    pub ln_self: LayerNorm,
    pub self_attn: Attention,
    pub ln_cross: LayerNorm,
    pub cross_attn: Attention,
    pub ln_mlp: LayerNorm,
    pub mlp: Mlp,
    pub gate: ParamId,
}

impl GaBlock {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            ln_self: LayerNorm::new(store, &format!("{name}.ln_self"), d),
            self_attn: Attention::new(store, &format!("{name}.self_attn"), d, heads, rng),
            ln_cross: LayerNorm::new(store, &format!("{name}.ln_cross"), d),
            cross_attn: Attention::new(store, &format!("{name}.cross_attn"), d, heads, rng),
            ln_mlp: LayerNorm::new(store, &format!("{name}.ln_mlp"), d),
            mlp: Mlp::new(store, &format!("{name}.mlp"), d, rng),
            gate: store.add(format!("{name}.gate"), Mat::zeros(1, 1)),
        }
    }

    /// Geometry feature for stream `s`.
    pub fn feature<T: Real>(&self, tape: &mut Tape<T>, p: &Bound, s: Var, ctx: Var) -> Var {
        let h = self.ln_self.apply(tape, p, s);
        let a = self.self_attn.apply(tape, p, h, h);
        let z = tape.add(s, a);
        let h = self.ln_cross.apply(tape, p, z);
        let c = self.cross_attn.apply(tape, p, h, ctx);
        let c = tape.add(z, c);
        let h = self.ln_mlp.apply(tape, p, c);
        let m = self.mlp.apply(tape, p, h);
        tape.add(c, m)
    }

    /// `x + gate·x_g`.
    pub fn inject<T: Real>(&self, tape: &mut Tape<T>, p: &Bound, x: Var, xg: Var) -> Var {
        let g = tape.mul_scalar(xg, p.var(self.gate));
        tape.add(x, g)
    }
}

/// Sinusoidal features of one coordinate: `dim/2` cosines then `dim/2` sines over
/// geometrically spaced frequencies.
pub fn sinusoid(pos: f64, dim: usize, max_period: f64) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(max_period.ln()) * i as f64 / half as f64).exp();
        out[i] = (pos * freq).cos();
        out[half + i] = (pos * freq).sin();
    }
    out
}
