//! Reverse-mode differentiation over a tape of matrix operations.

use crate::mat::{Mat, Real};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    /// `op(a)·op(b)` with transpose flags.
    Product(Var, bool, Var, bool),
    Add(Var, Var),
    Sub(Var, Var),
    /// Adds a `1 × n` row to every row.
    AddRow(Var, Var),
    Mul(Var, Var),
    /// Multiplies every row elementwise by a `1 × n` row.
    MulRow(Var, Var),
    /// Multiplies by a `1 × 1` variable.
    MulScalar(Var, Var),
    Scale(Var, T),
    MulConst(Var, Mat<T>),
    Gelu(Var),
    Silu(Var),
    /// Row-wise standardization; keeps `1/σ` per row.
    Standardize(Var, Vec<T>),
    SoftmaxRows(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    /// Mean squared difference to a constant target.
    Mse(Var, Mat<T>),
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Mat<T>,
    op: Op<T>,
}

/// Recorded computation. Values are kept so the backward pass can reuse them.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of one scalar output with respect to every recorded value.
#[derive(Clone, Debug)]
pub struct Grads<T> {
    grads: Vec<Option<Mat<T>>>,
}

impl<T: Real> Grads<T> {
    /// Gradient of `v`, or `None` when the output does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Mat<T>> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Mat<T>> {
        self.grads[v.0].take()
    }
}

const GELU_K: f64 = 0.044_715;

fn gelu_parts<T: Real>(x: T) -> (T, T) {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let k = T::lit(GELU_K);
    let half = T::lit(0.5);
    let u = c * (x + k * x * x * x);
    let th = u.tanh();
    let y = half * x * (T::one() + th);
    let dy = half * (T::one() + th)
        + half * x * (T::one() - th * th) * c * (T::one() + T::lit(3.0) * k * x * x);
    (y, dy)
}

fn sigmoid<T: Real>(x: T) -> T {
    splatfix_core::scalar::sigmoid(x)
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat<T> {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Mat<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn product(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Var {
        let v = Mat::product(self.value(a), ta, self.value(b), tb);
        self.push(v, Op::Product(a, ta, b, tb))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.product(a, false, b, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!((r.rows, r.cols), (1, x.cols), "row shape");
        let mut v = x.clone();
        for i in 0..v.rows {
            for (o, b) in v.row_mut(i).iter_mut().zip(&r.data) {
                *o += *b;
            }
        }
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!((r.rows, r.cols), (1, x.cols), "row shape");
        let mut v = x.clone();
        for i in 0..v.rows {
            for (o, b) in v.row_mut(i).iter_mut().zip(&r.data) {
                *o *= *b;
            }
        }
        self.push(v, Op::MulRow(a, row))
    }

    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Var {
        assert_eq!(self.value(s).shape(), (1, 1), "scalar shape");
        let k = self.value(s).data[0];
        let v = self.value(a).map(|x| x * k);
        self.push(v, Op::MulScalar(a, s))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let v = self.value(a).map(|x| x * k);
        self.push(v, Op::Scale(a, k))
    }

    pub fn mul_const(&mut self, a: Var, c: Mat<T>) -> Var {
        let v = self.value(a).zip_map(&c, |x, y| x * y);
        self.push(v, Op::MulConst(a, c))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| gelu_parts(x).0);
        self.push(v, Op::Gelu(a))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * sigmoid(x));
        self.push(v, Op::Silu(a))
    }

    /// `(x - mean) / sqrt(var + eps)` per row.
    pub fn standardize(&mut self, a: Var, eps: T) -> Var {
        let x = self.value(a);
        let n = T::from_usize(x.cols);
        let mut v = x.clone();
        let mut inv = Vec::with_capacity(x.rows);
        for i in 0..x.rows {
            let row = v.row_mut(i);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|r| (*r - mean) * (*r - mean)).sum::<T>() / n;
            let is = T::one() / (var + eps).sqrt();
            for r in row.iter_mut() {
                *r = (*r - mean) * is;
            }
            inv.push(is);
        }
        self.push(v, Op::Standardize(a, inv))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for i in 0..v.rows {
            let row = v.row_mut(i);
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut s = T::zero();
            for r in row.iter_mut() {
                *r = (*r - m).exp();
                s += *r;
            }
            for r in row.iter_mut() {
                *r /= s;
            }
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn slice_cols(&mut self, a: Var, c0: usize, c1: usize) -> Var {
        let v = self.value(a).cols_range(c0, c1);
        self.push(v, Op::SliceCols(a, c0))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut v = Mat::zeros(rows, cols);
        let mut off = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.rows, rows, "concat row mismatch");
            for i in 0..rows {
                v.data[i * cols + off..i * cols + off + m.cols].copy_from_slice(m.row(i));
            }
            off += m.cols;
        }
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn mse(&mut self, a: Var, target: Mat<T>) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape(), target.shape(), "mse shapes");
        let n = T::from_usize(x.len().max(1));
        let s = x
            .data
            .iter()
            .zip(&target.data)
            .map(|(p, t)| (*p - *t) * (*p - *t))
            .sum::<T>()
            / n;
        self.push(Mat::scalar(s), Op::Mse(a, target))
    }

    /// Back-propagates from the `1 × 1` value `out`.
    pub fn backward(&self, out: Var) -> Grads<T> {
        assert_eq!(
            self.value(out).shape(),
            (1, 1),
            "backward needs a scalar output"
        );
        let mut grads: Vec<Option<Mat<T>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Mat::scalar(T::one()));
        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Grads { grads }
    }

    fn propagate(&self, idx: usize, g: &Mat<T>, grads: &mut [Option<Mat<T>>]) {
        let acc = |grads: &mut [Option<Mat<T>>], v: Var, d: Mat<T>| match &mut grads[v.0] {
            Some(e) => e.add_assign(&d),
            slot => *slot = Some(d),
        };
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Product(a, ta, b, tb) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let da = if *ta {
                    Mat::product(bv, *tb, g, true)
                } else {
                    Mat::product(g, false, bv, !*tb)
                };
                let db = if *tb {
                    Mat::product(g, true, av, *ta)
                } else {
                    Mat::product(av, !*ta, g, false)
                };
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.map(|x| -x));
            }
            Op::AddRow(a, r) => {
                acc(grads, *a, g.clone());
                acc(grads, *r, col_sums(g));
            }
            Op::Mul(a, b) => {
                acc(grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                acc(grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
            }
            Op::MulRow(a, r) => {
                let (av, rv) = (self.value(*a), self.value(*r));
                let mut da = g.clone();
                let mut dr = Mat::zeros(1, rv.cols);
                for i in 0..g.rows {
                    for j in 0..g.cols {
                        da.data[i * g.cols + j] = g.at(i, j) * rv.data[j];
                        dr.data[j] += g.at(i, j) * av.at(i, j);
                    }
                }
                acc(grads, *a, da);
                acc(grads, *r, dr);
            }
            Op::MulScalar(a, s) => {
                let k = self.value(*s).data[0];
                let av = self.value(*a);
                let ds = g.data.iter().zip(&av.data).map(|(x, y)| *x * *y).sum::<T>();
                acc(grads, *a, g.map(|x| x * k));
                acc(grads, *s, Mat::scalar(ds));
            }
            Op::Scale(a, k) => acc(grads, *a, g.map(|x| x * *k)),
            Op::MulConst(a, c) => acc(grads, *a, g.zip_map(c, |x, y| x * y)),
            Op::Gelu(a) => acc(
                grads,
                *a,
                g.zip_map(self.value(*a), |d, x| d * gelu_parts(x).1),
            ),
            Op::Silu(a) => acc(
                grads,
                *a,
                g.zip_map(self.value(*a), |d, x| {
                    let s = sigmoid(x);
                    d * s * (T::one() + x * (T::one() - s))
                }),
            ),
            Op::Standardize(a, inv) => {
                let y = &node.value;
                let n = T::from_usize(y.cols);
                let mut da = Mat::zeros(y.rows, y.cols);
                for i in 0..y.rows {
                    let (gr, yr) = (g.row(i), y.row(i));
                    let mg = gr.iter().copied().sum::<T>() / n;
                    let mgy = gr.iter().zip(yr).map(|(a, b)| *a * *b).sum::<T>() / n;
                    for (j, o) in da.row_mut(i).iter_mut().enumerate() {
                        *o = inv[i] * (gr[j] - mg - yr[j] * mgy);
                    }
                }
                acc(grads, *a, da);
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut da = Mat::zeros(y.rows, y.cols);
                for i in 0..y.rows {
                    let (gr, yr) = (g.row(i), y.row(i));
                    let dot = gr.iter().zip(yr).map(|(a, b)| *a * *b).sum::<T>();
                    for (j, o) in da.row_mut(i).iter_mut().enumerate() {
                        *o = yr[j] * (gr[j] - dot);
                    }
                }
                acc(grads, *a, da);
            }
            Op::SliceCols(a, c0) => {
                let av = self.value(*a);
                let mut da = Mat::zeros(av.rows, av.cols);
                for i in 0..g.rows {
                    da.data[i * av.cols + c0..i * av.cols + c0 + g.cols].copy_from_slice(g.row(i));
                }
                acc(grads, *a, da);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let w = self.value(*p).cols;
                    acc(grads, *p, g.cols_range(off, off + w));
                    off += w;
                }
            }
            Op::Mse(a, t) => {
                let av = self.value(*a);
                let k = g.data[0] * T::lit(2.0) / T::from_usize(av.len().max(1));
                acc(grads, *a, av.zip_map(t, |p, q| (p - q) * k));
            }
        }
    }
}

fn col_sums<T: Real>(g: &Mat<T>) -> Mat<T> {
    let mut out = Mat::zeros(1, g.cols);
    for i in 0..g.rows {
        for (o, v) in out.data.iter_mut().zip(g.row(i)) {
            *o += *v;
        }
    }
    out
}
