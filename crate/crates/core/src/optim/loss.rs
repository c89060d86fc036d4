use crate::error::{Error, Result};
use crate::metrics::{ssim_with_grad, SsimWindow};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput<T> {
    pub loss: T,
    pub l1: T,
    /// `(1 - SSIM) / 2`
    pub dssim: T,
    /// `∂loss/∂pred`, same layout as the prediction.
    pub grad: Vec<T>,
}

/// `(1 - λ) · L1 + λ · (1 - SSIM) / 2` over `H × W × 3` images.
pub fn loss_l1_dssim<T: Scalar>(
    pred: &[T],
    target: &[T],
    height: usize,
    width: usize,
    lambda: T,
    win: SsimWindow,
) -> Result<LossOutput<T>> {
    if pred.len() != target.len() || pred.len() != height * width * 3 {
        return Err(Error::Shape(format!(
            "pred {} / target {} values for a {height}x{width}x3 image",
            pred.len(),
            target.len()
        )));
    }
    let n = T::from_usize(pred.len());
    let one = T::one();
    let half = T::lit(0.5);
    let l1 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (*p - *t).abs())
        .sum::<T>()
        / n;
    let w1 = (one - lambda) / n;
    let mut grad: Vec<T> = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = *p - *t;
            if d > T::zero() {
                w1
            } else if d < T::zero() {
                -w1
            } else {
                T::zero()
            }
        })
        .collect();
    let dssim = if lambda > T::zero() {
        let (s, g) = ssim_with_grad(pred, target, height, width, 3, win)?;
        let scale = -lambda * half;
        for (out, gs) in grad.iter_mut().zip(&g) {
            *out += scale * *gs;
        }
        (one - s) * half
    } else {
        T::zero()
    };
    Ok(LossOutput {
        loss: (one - lambda) * l1 + lambda * dssim,
        l1,
        dssim,
        grad,
    })
}
