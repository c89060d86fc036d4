//! Real spherical harmonics up to degree 3, in the basis and sign convention of the
//! reference Gaussian splatting renderer.

use crate::linalg::Vec3;
use crate::scalar::Scalar;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Basis values for a unit direction; entries past `(degree+1)²` are zero.
pub fn basis<T: Scalar>(degree: usize, d: Vec3<T>) -> [T; 16] {
    let mut b = [T::zero(); 16];
    b[0] = T::lit(SH_C0);
    if degree == 0 {
        return b;
    }
    let (x, y, z) = (d.x, d.y, d.z);
    let c1 = T::lit(SH_C1);
    b[1] = -c1 * y;
    b[2] = c1 * z;
    b[3] = -c1 * x;
    if degree == 1 {
        return b;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let four = T::lit(4.0);
    b[4] = T::lit(SH_C2[0]) * xy;
    b[5] = T::lit(SH_C2[1]) * yz;
    b[6] = T::lit(SH_C2[2]) * (two * zz - xx - yy);
    b[7] = T::lit(SH_C2[3]) * xz;
    b[8] = T::lit(SH_C2[4]) * (xx - yy);
    if degree == 2 {
        return b;
    }
    b[9] = T::lit(SH_C3[0]) * y * (three * xx - yy);
    b[10] = T::lit(SH_C3[1]) * xy * z;
    b[11] = T::lit(SH_C3[2]) * y * (four * zz - xx - yy);
    b[12] = T::lit(SH_C3[3]) * z * (two * zz - three * xx - three * yy);
    b[13] = T::lit(SH_C3[4]) * x * (four * zz - xx - yy);
    b[14] = T::lit(SH_C3[5]) * z * (xx - yy);
    b[15] = T::lit(SH_C3[6]) * x * (xx - three * yy);
    b
}

/// Partial derivatives `∂b_k/∂(x, y, z)` of each basis function, treating the direction
/// components as independent.
pub fn basis_grad<T: Scalar>(degree: usize, d: Vec3<T>) -> [Vec3<T>; 16] {
    let z0 = Vec3::zeros();
    let mut g = [z0; 16];
    if degree == 0 {
        return g;
    }
    let (x, y, z) = (d.x, d.y, d.z);
    let c1 = T::lit(SH_C1);
    let zero = T::zero();
    g[1] = Vec3::new(zero, -c1, zero);
    g[2] = Vec3::new(zero, zero, c1);
    g[3] = Vec3::new(-c1, zero, zero);
    if degree == 1 {
        return g;
    }
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let four = T::lit(4.0);
    let six = T::lit(6.0);
    let eight = T::lit(8.0);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let c = |i: usize| T::lit(SH_C2[i]);
    g[4] = Vec3::new(y, x, zero) * c(0);
    g[5] = Vec3::new(zero, z, y) * c(1);
    g[6] = Vec3::new(-two * x, -two * y, four * z) * c(2);
    g[7] = Vec3::new(z, zero, x) * c(3);
    g[8] = Vec3::new(two * x, -two * y, zero) * c(4);
    if degree == 2 {
        return g;
    }
    let c = |i: usize| T::lit(SH_C3[i]);
    // y (3xx - yy)
    g[9] = Vec3::new(six * x * y, three * xx - three * yy, zero) * c(0);
    // x y z
    g[10] = Vec3::new(y * z, x * z, x * y) * c(1);
    // y (4zz - xx - yy)
    g[11] = Vec3::new(-two * x * y, four * zz - xx - three * yy, eight * y * z) * c(2);
    // z (2zz - 3xx - 3yy)
    g[12] = Vec3::new(
        -six * x * z,
        -six * y * z,
        six * zz - three * xx - three * yy,
    ) * c(3);
    // x (4zz - xx - yy)
    g[13] = Vec3::new(four * zz - three * xx - yy, -two * x * y, eight * x * z) * c(4);
    // z (xx - yy)
    g[14] = Vec3::new(two * x * z, -two * y * z, xx - yy) * c(5);
    // x (xx - 3yy)
    g[15] = Vec3::new(three * xx - three * yy, -six * x * y, zero) * c(6);
    g
}

/// Unclamped RGB `Σ_k b_k c_k + 0.5` for one primitive's `B × 3` coefficient block.
pub fn eval_color<T: Scalar>(degree: usize, coeffs: &[T], dir: Vec3<T>) -> [T; 3] {
    let b = basis(degree, dir);
    let half = T::lit(0.5);
    let mut rgb = [half; 3];
    for (k, bk) in b.iter().take(coeffs.len() / 3).enumerate() {
        for c in 0..3 {
            rgb[c] += *bk * coeffs[3 * k + c];
        }
    }
    rgb
}

/// SH DC coefficient producing `rgb` for a degree-0 evaluation.
#[inline]
pub fn rgb_to_dc<T: Scalar>(rgb: T) -> T {
    (rgb - T::lit(0.5)) / T::lit(SH_C0)
}
