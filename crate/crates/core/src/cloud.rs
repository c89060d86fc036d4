//! Explicit Gaussian scene representation.
//!
//! Parameters are stored pre-activation: opacity as a logit, scale as a log.
//! Arrays are flat so optimizers can walk each parameter group as one slice.

use crate::error::{Error, Result};
use crate::linalg::{unit_quat_to_rotmat, Mat3, Vec3};
use crate::scalar::{sigmoid, Scalar};

pub const MAX_SH_DEGREE: usize = 3;

/// Number of SH basis functions for a given degree.
#[inline]
pub const fn sh_basis_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianCloud<T> {
    pub sh_degree: usize,
    /// `3N` world-space means.
    pub positions: Vec<T>,
    /// `N` opacity logits.
    pub opacities_raw: Vec<T>,
    /// `N × B × 3`, coefficient-major then channel.
    pub sh_coeffs: Vec<T>,
    /// `3N` log scales.
    pub scales_raw: Vec<T>,
    /// `4N` quaternions `(w, x, y, z)`.
    pub rotations: Vec<T>,
}

impl<T: Scalar> GaussianCloud<T> {
    pub fn empty(sh_degree: usize) -> Self {
        Self {
            sh_degree,
            positions: Vec::new(),
            opacities_raw: Vec::new(),
            sh_coeffs: Vec::new(),
            scales_raw: Vec::new(),
            rotations: Vec::new(),
        }
    }

    /// Cloud of `n` primitives at the origin with unit scale, identity rotation and zero SH.
    pub fn zeros(n: usize, sh_degree: usize) -> Self {
        let b = sh_basis_count(sh_degree);
        let mut rotations = vec![T::zero(); 4 * n];
        for q in rotations.chunks_exact_mut(4) {
            q[0] = T::one();
        }
        Self {
            sh_degree,
            positions: vec![T::zero(); 3 * n],
            opacities_raw: vec![T::zero(); n],
            sh_coeffs: vec![T::zero(); n * b * 3],
            scales_raw: vec![T::zero(); 3 * n],
            rotations,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.opacities_raw.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.opacities_raw.is_empty()
    }

    #[inline]
    pub fn num_basis(&self) -> usize {
        sh_basis_count(self.sh_degree)
    }

    #[inline]
    pub fn position(&self, i: usize) -> Vec3<T> {
        Vec3::from_slice(&self.positions[3 * i..3 * i + 3])
    }

    pub fn set_position(&mut self, i: usize, p: Vec3<T>) {
        self.positions[3 * i..3 * i + 3].copy_from_slice(&p.to_array());
    }

    #[inline]
    pub fn opacity(&self, i: usize) -> T {
        sigmoid(self.opacities_raw[i])
    }

    #[inline]
    pub fn scale(&self, i: usize) -> Vec3<T> {
        let s = &self.scales_raw[3 * i..3 * i + 3];
        Vec3::new(s[0].exp(), s[1].exp(), s[2].exp())
    }

    #[inline]
    pub fn rotation_raw(&self, i: usize) -> [T; 4] {
        let q = &self.rotations[4 * i..4 * i + 4];
        [q[0], q[1], q[2], q[3]]
    }

    /// Normalized rotation quaternion; a zero quaternion maps to identity.
    #[inline]
    pub fn rotation_unit(&self, i: usize) -> [T; 4] {
        let q = self.rotation_raw(i);
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if n > T::zero() {
            q.map(|v| v / n)
        } else {
            [T::one(), T::zero(), T::zero(), T::zero()]
        }
    }

    #[inline]
    pub fn rotation_matrix(&self, i: usize) -> Mat3<T> {
        unit_quat_to_rotmat(self.rotation_unit(i))
    }

    /// World covariance `R S Sᵀ Rᵀ`; derived on demand, never stored.
    pub fn covariance(&self, i: usize) -> Mat3<T> {
        let m = self.rotation_matrix(i).matmul(&Mat3::diag(self.scale(i)));
        m.matmul(&m.transpose())
    }

    /// The `B × 3` SH block of primitive `i`.
    #[inline]
    pub fn sh(&self, i: usize) -> &[T] {
        let stride = self.num_basis() * 3;
        &self.sh_coeffs[i * stride..(i + 1) * stride]
    }

    #[inline]
    pub fn sh_mut(&mut self, i: usize) -> &mut [T] {
        let stride = self.num_basis() * 3;
        &mut self.sh_coeffs[i * stride..(i + 1) * stride]
    }

    pub fn normalize_rotations(&mut self) {
        for q in self.rotations.chunks_exact_mut(4) {
            let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
            if n > T::zero() {
                for v in q.iter_mut() {
                    *v /= n;
                }
            } else {
                q.copy_from_slice(&[T::one(), T::zero(), T::zero(), T::zero()]);
            }
        }
    }

    /// Checks array lengths and the activation invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.sh_degree > MAX_SH_DEGREE {
            return Err(Error::Domain(format!(
                "sh degree {} exceeds {MAX_SH_DEGREE}",
                self.sh_degree
            )));
        }
        let expect = [
            ("positions", self.positions.len(), 3 * n),
            ("sh_coeffs", self.sh_coeffs.len(), n * self.num_basis() * 3),
            ("scales_raw", self.scales_raw.len(), 3 * n),
            ("rotations", self.rotations.len(), 4 * n),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::Shape(format!(
                    "{name}: length {got}, expected {want}"
                )));
            }
        }
        for i in 0..n {
            let a = self.opacity(i);
            // σ saturates to exactly 1 in floating point for large logits.
            if !(a > T::zero() && a <= T::one()) || !self.opacities_raw[i].is_finite() {
                return Err(Error::Domain(format!(
                    "primitive {i}: opacity {a} outside (0,1)"
                )));
            }
            let s = self.scale(i);
            if !(s.x > T::zero() && s.y > T::zero() && s.z > T::zero()) {
                return Err(Error::Domain(format!("primitive {i}: non-positive scale")));
            }
        }
        Ok(())
    }

    /// Axis-aligned bounds of the means.
    pub fn bounds(&self) -> (Vec3<T>, Vec3<T>) {
        let mut lo = Vec3::new(T::infinity(), T::infinity(), T::infinity());
        let mut hi = -lo;
        for i in 0..self.len() {
            let p = self.position(i);
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    pub fn centroid(&self) -> Vec3<T> {
        let mut c = Vec3::zeros();
        for i in 0..self.len() {
            c += self.position(i);
        }
        if self.is_empty() {
            c
        } else {
            c * (T::one() / T::from_usize(self.len()))
        }
    }

    /// Largest distance of a mean from the centroid.
    pub fn extent(&self) -> T {
        let c = self.centroid();
        (0..self.len())
            .map(|i| (self.position(i) - c).norm())
            .fold(T::zero(), T::max)
    }

    /// Keeps the listed primitives, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let b3 = self.num_basis() * 3;
        let mut out = Self::empty(self.sh_degree);
        for &i in indices {
            out.positions
                .extend_from_slice(&self.positions[3 * i..3 * i + 3]);
            out.opacities_raw.push(self.opacities_raw[i]);
            out.sh_coeffs
                .extend_from_slice(&self.sh_coeffs[i * b3..(i + 1) * b3]);
            out.scales_raw
                .extend_from_slice(&self.scales_raw[3 * i..3 * i + 3]);
            out.rotations
                .extend_from_slice(&self.rotations[4 * i..4 * i + 4]);
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> GaussianCloud<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::lit(x.as_f64())).collect();
        GaussianCloud {
            sh_degree: self.sh_degree,
            positions: c(&self.positions),
            opacities_raw: c(&self.opacities_raw),
            sh_coeffs: c(&self.sh_coeffs),
            scales_raw: c(&self.scales_raw),
            rotations: c(&self.rotations),
        }
    }

    /// Parameter groups as `(name, values)` in canonical order.
    pub fn groups(&self) -> [(&'static str, &[T]); 5] {
        [
            ("positions", &self.positions),
            ("opacities", &self.opacities_raw),
            ("sh", &self.sh_coeffs),
            ("scales", &self.scales_raw),
            ("rotations", &self.rotations),
        ]
    }

    pub fn groups_mut(&mut self) -> [(&'static str, &mut Vec<T>); 5] {
        [
            ("positions", &mut self.positions),
            ("opacities", &mut self.opacities_raw),
            ("sh", &mut self.sh_coeffs),
            ("scales", &mut self.scales_raw),
            ("rotations", &mut self.rotations),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_cloud_activations() {
        let c = GaussianCloud::<f64>::zeros(1, 1);
        c.validate().unwrap();
        assert_eq!(c.opacity(0), 0.5);
        assert_eq!(c.scale(0), Vec3::new(1.0, 1.0, 1.0));
        assert_eq!(c.covariance(0), Mat3::identity());
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let mut c = GaussianCloud::<f64>::zeros(2, 0);
        c.scales_raw.pop();
        assert!(matches!(c.validate(), Err(Error::Shape(_))));
    }

    #[test]
    fn normalize_rotations_gives_unit_quaternions() {
        let mut c = GaussianCloud::<f64>::zeros(3, 0);
        c.rotations = vec![2.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        c.normalize_rotations();
        for q in c.rotations.chunks(4) {
            let n: f64 = q.iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
}
