//! Image quality metrics on `H × W × C` row-major images in `[0, 1]`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Gaussian SSIM window parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimWindow {
    pub size: usize,
    pub sigma: f64,
}

impl Default for SsimWindow {
    fn default() -> Self {
        Self {
            size: 11,
            sigma: 1.5,
        }
    }
}

impl SsimWindow {
    pub fn validate(&self) -> Result<()> {
        if self.size.is_multiple_of(2) || self.size == 0 {
            return Err(Error::Config(format!(
                "ssim window {} must be odd",
                self.size
            )));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config("ssim sigma must be positive".into()));
        }
        Ok(())
    }

    /// Normalized 1-D kernel.
    pub fn kernel<T: Scalar>(&self) -> Vec<T> {
        let r = (self.size / 2) as f64;
        let raw: Vec<f64> = (0..self.size)
            .map(|i| {
                let d = i as f64 - r;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|v| T::lit(v / s)).collect()
    }
}

pub fn mse<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    check_len(a, b)?;
    if a.is_empty() {
        return Ok(T::zero());
    }
    let s: T = a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum();
    Ok(s / T::from_usize(a.len()))
}

/// `10 log10(1 / MSE)`; `+inf` for identical images.
pub fn psnr<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    let m = mse(a, b)?;
    if m == T::zero() {
        return Ok(T::infinity());
    }
    Ok(T::lit(10.0) * (T::one() / m).log10())
}

fn check_len<T>(a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "images have {} and {} values",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Separable zero-padded filtering of one `H × W` plane.
fn blur<T: Scalar>(img: &[T], h: usize, w: usize, k: &[T]) -> Vec<T> {
    let r = k.len() / 2;
    let mut tmp = vec![T::zero(); h * w];
    for y in 0..h {
        let row = &img[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            let mut s = T::zero();
            for xx in lo..=hi {
                s += k[xx + r - x] * row[xx];
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![T::zero(); h * w];
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            let mut s = T::zero();
            for yy in lo..=hi {
                s += k[yy + r - y] * tmp[yy * w + x];
            }
            out[y * w + x] = s;
        }
    }
    out
}

fn plane<T: Scalar>(img: &[T], c: usize, channels: usize) -> Vec<T> {
    img.iter().skip(c).step_by(channels).copied().collect()
}

/// Mean SSIM over all pixels and channels, with its gradient with respect to `a` when
/// `with_grad` is set.
fn ssim_impl<T: Scalar>(
    a: &[T],
    b: &[T],
    h: usize,
    w: usize,
    channels: usize,
    win: SsimWindow,
    with_grad: bool,
) -> Result<(T, Vec<T>)> {
    check_len(a, b)?;
    if a.len() != h * w * channels {
        return Err(Error::Shape(format!(
            "{} values for a {h}x{w}x{channels} image",
            a.len()
        )));
    }
    win.validate()?;
    if a == b {
        // the maximum: rounding would otherwise leave gradient residue around 1e-17
        return Ok((
            T::one(),
            if with_grad {
                vec![T::zero(); a.len()]
            } else {
                Vec::new()
            },
        ));
    }
    let k = win.kernel::<T>();
    let n = T::from_usize(a.len());
    let (c1, c2) = (T::lit(C1), T::lit(C2));
    let two = T::lit(2.0);
    let mut total = T::zero();
    let mut grad = if with_grad {
        vec![T::zero(); a.len()]
    } else {
        Vec::new()
    };
    for ch in 0..channels {
        let x = plane(a, ch, channels);
        let y = plane(b, ch, channels);
        let xx: Vec<T> = x.iter().map(|v| *v * *v).collect();
        let yy: Vec<T> = y.iter().map(|v| *v * *v).collect();
        let xy: Vec<T> = x.iter().zip(&y).map(|(p, q)| *p * *q).collect();
        let mx = blur(&x, h, w, &k);
        let my = blur(&y, h, w, &k);
        let sxx = blur(&xx, h, w, &k);
        let syy = blur(&yy, h, w, &k);
        let sxy = blur(&xy, h, w, &k);
        let mut ga = vec![T::zero(); h * w];
        let mut gb = vec![T::zero(); h * w];
        let mut gc = vec![T::zero(); h * w];
        for p in 0..h * w {
            let (mx, my) = (mx[p], my[p]);
            let vx = sxx[p] - mx * mx;
            let vy = syy[p] - my * my;
            let cov = sxy[p] - mx * my;
            let a1 = two * mx * my + c1;
            let a2 = two * cov + c2;
            let b1 = mx * mx + my * my + c1;
            let b2 = vx + vy + c2;
            let s = (a1 * a2) / (b1 * b2);
            total += s;
            if with_grad {
                let d_mx = two * my * a2 / (b1 * b2) - s * two * mx / b1;
                let d_vx = -s / b2;
                let d_cov = two * a1 / (b1 * b2);
                ga[p] = d_mx - two * mx * d_vx - my * d_cov;
                gb[p] = d_vx;
                gc[p] = d_cov;
            }
        }
        if with_grad {
            let fa = blur(&ga, h, w, &k);
            let fb = blur(&gb, h, w, &k);
            let fc = blur(&gc, h, w, &k);
            for p in 0..h * w {
                grad[p * channels + ch] = (fa[p] + two * x[p] * fb[p] + y[p] * fc[p]) / n;
            }
        }
    }
    Ok((total / n, grad))
}

pub fn ssim<T: Scalar>(
    a: &[T],
    b: &[T],
    h: usize,
    w: usize,
    channels: usize,
    win: SsimWindow,
) -> Result<T> {
    Ok(ssim_impl(a, b, h, w, channels, win, false)?.0)
}

/// SSIM and `∂SSIM/∂a`.
pub fn ssim_with_grad<T: Scalar>(
    a: &[T],
    b: &[T],
    h: usize,
    w: usize,
    channels: usize,
    win: SsimWindow,
) -> Result<(T, Vec<T>)> {
    ssim_impl(a, b, h, w, channels, win, true)
}
