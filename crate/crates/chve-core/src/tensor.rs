//! Small 2x2 tensor type used for the deformation gradient and its dual.

use crate::math;
use core::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

/// Row-major 2x2 matrix: components ordered `[a11, a12, a21, a22]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat2(pub [f64; 4]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([0.0; 4]);

    pub fn identity() -> Mat2 {
        Mat2([1.0, 0.0, 0.0, 1.0])
    }

    pub fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Mat2 {
        Mat2([a11, a12, a21, a22])
    }

    pub fn transpose(self) -> Mat2 {
        Mat2([self.0[0], self.0[2], self.0[1], self.0[3]])
    }

    pub fn det(self) -> f64 {
        self.0[0] * self.0[3] - self.0[1] * self.0[2]
    }

    pub fn trace(self) -> f64 {
        self.0[0] + self.0[3]
    }

    /// Frobenius inner product A : B.
    pub fn ddot(self, other: Mat2) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Frobenius norm |A|.
    pub fn norm(self) -> f64 {
        math::sqrt(self.ddot(self))
    }

    /// Right Cauchy–Green tensor AᵀA.
    pub fn gram(self) -> Mat2 {
        self.transpose() * self
    }

    /// Rotation by angle theta.
    pub fn rotation(theta: f64) -> Mat2 {
        let (s, c) = (libm::sin(theta), libm::cos(theta));
        Mat2([c, -s, s, c])
    }

    /// Singular values (descending) via the closed-form 2x2 SVD.
    pub fn singular_values(self) -> (f64, f64) {
        let [a, b, c, d] = self.0;
        // Eigenvalues of AᵀA through the rotated-sum trick, numerically stable
        // for near-degenerate spectra.
        let e = (a + d) * 0.5;
        let f = (a - d) * 0.5;
        let g = (c + b) * 0.5;
        let h = (c - b) * 0.5;
        let q = math::hypot(e, h);
        let r = math::hypot(f, g);
        (q + r, math::abs(q - r))
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        let mut out = [0.0; 4];
        for i in 0..4 {
            out[i] = self.0[i] + rhs.0[i];
        }
        Mat2(out)
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        let mut out = [0.0; 4];
        for i in 0..4 {
            out[i] = self.0[i] - rhs.0[i];
        }
        Mat2(out)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let a = self.0;
        let b = rhs.0;
        Mat2([
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        ])
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(self, s: f64) -> Mat2 {
        Mat2(self.0.map(|x| x * s))
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        Mat2(self.0.map(|x| -x))
    }
}

impl Index<(usize, usize)> for Mat2 {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.0[2 * i + j]
    }
}

impl IndexMut<(usize, usize)> for Mat2 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.0[2 * i + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinant_and_product() {
        let a = Mat2::new(1.0, 2.0, 3.0, 4.0);
        assert_eq!(a.det(), -2.0);
        let b = a * a.transpose();
        assert_eq!(b.0, [5.0, 11.0, 11.0, 25.0]);
    }

    #[test]
    fn singular_values_match_gram_eigenvalues() {
        let a = Mat2::new(2.0, 1.0, -0.5, 0.25);
        let (s1, s2) = a.singular_values();
        let c = a.gram();
        // trace and determinant of AᵀA reproduce s1²+s2² and (s1 s2)².
        assert!((s1 * s1 + s2 * s2 - c.trace()).abs() < 1e-12);
        assert!((s1 * s1 * s2 * s2 - c.det()).abs() < 1e-12);
        assert!(s1 >= s2 && s2 >= 0.0);
    }

    #[test]
    fn rotation_is_orthogonal() {
        let r = Mat2::rotation(0.7);
        let i = r.transpose() * r;
        for (k, v) in i.0.iter().enumerate() {
            let expect = if k == 0 || k == 3 { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-15);
        }
    }
}
