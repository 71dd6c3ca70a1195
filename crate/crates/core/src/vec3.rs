use core::ops::{Add, AddAssign, Index, IndexMut, Mul, MulAssign, Neg, Sub, SubAssign};
#[allow(unused_imports)]
use num_traits::Float;


/// A point or direction in R³.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);
    pub const X: Vec3 = Vec3([1.0, 0.0, 0.0]);
    pub const Y: Vec3 = Vec3([0.0, 1.0, 0.0]);
    pub const Z: Vec3 = Vec3([0.0, 0.0, 1.0]);

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3([x, y, z])
    }

    #[inline]
    pub fn unit(axis: usize) -> Self {
        let mut v = Vec3::ZERO;
        v.0[axis] = 1.0;
        v
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.0[0]
    }
    #[inline]
    pub fn y(&self) -> f64 {
        self.0[1]
    }
    #[inline]
    pub fn z(&self) -> f64 {
        self.0[2]
    }

    #[inline]
    pub fn dot(&self, o: &Vec3) -> f64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    #[inline]
    pub fn cross(&self, o: &Vec3) -> Vec3 {
        let [a, b, c] = self.0;
        let [d, e, f] = o.0;
        Vec3([b * f - c * e, c * d - a * f, a * e - b * d])
    }

    #[inline]
    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Returns the unit vector, or `None` for a (numerically) zero vector.
    pub fn normalized(&self) -> Option<Vec3> {
        let n = self.norm();
        if n > f64::MIN_POSITIVE {
            Some(*self * (1.0 / n))
        } else {
            None
        }
    }

    #[inline]
    pub fn max_abs(&self) -> f64 {
        self.0[0].abs().max(self.0[1].abs()).max(self.0[2].abs())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vec3 {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        self.0[0] += o.0[0];
        self.0[1] += o.0[1];
        self.0[2] += o.0[2];
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, o: Vec3) {
        self.0[0] -= o.0[0];
        self.0[1] -= o.0[1];
        self.0[2] -= o.0[2];
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl MulAssign<f64> for Vec3 {
    #[inline]
    fn mul_assign(&mut self, s: f64) {
        self.0[0] *= s;
        self.0[1] *= s;
        self.0[2] *= s;
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3([-self.0[0], -self.0[1], -self.0[2]])
    }
}

/// Row-major 3×3 matrix, used for rigid rotations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn mul_vec(&self, v: &Vec3) -> Vec3 {
        let m = &self.0;
        Vec3([
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                *entry = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Mat3(r)
    }

    /// Rotation by `angle` about the unit vector `axis` (Rodrigues).
    pub fn rotation(axis: Vec3, angle: f64) -> Mat3 {
        let k = axis.normalized().unwrap_or(Vec3::Z);
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        let [x, y, z] = k.0;
        Mat3([
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ])
    }

    /// A rotation taking the unit vector `from` onto the unit vector `to`.
    pub fn rotation_between(from: Vec3, to: Vec3) -> Mat3 {
        let axis = from.cross(&to);
        let s = axis.norm();
        let c = from.dot(&to);
        if s < 1e-14 {
            if c > 0.0 {
                return Mat3::IDENTITY;
            }
            // Antiparallel: any perpendicular axis works.
            let trial = if from.x().abs() < 0.9 { Vec3::X } else { Vec3::Y };
            return Mat3::rotation(from.cross(&trial), core::f64::consts::PI);
        }
        Mat3::rotation(axis, s.atan2(c))
    }

    /// Eigenvalues (ascending) and unit eigenvectors of a symmetric matrix,
    /// by cyclic Jacobi rotations.
    pub fn symmetric_eigen(&self) -> ([f64; 3], [Vec3; 3]) {
        let mut a = self.0;
        let mut v = Mat3::IDENTITY.0;
        for _ in 0..50 {
            let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
            if off < 1e-30 * (a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2]).max(1e-300) {
                break;
            }
            for (p, q) in [(0, 1), (0, 2), (1, 2)] {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..3 {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..3 {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
        let mut order = [0, 1, 2];
        order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
        let vals = order.map(|i| a[i][i]);
        let vecs = order.map(|i| Vec3::new(v[0][i], v[1][i], v[2][i]));
        (vals, vecs)
    }
}

/// Symmetric 2×2 tensor stored as `[m11, m12, m22]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sym2(pub [f64; 3]);

impl Sym2 {
    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.0[a + b]
    }

    #[inline]
    pub fn det(&self) -> f64 {
        self.0[0] * self.0[2] - self.0[1] * self.0[1]
    }

    #[inline]
    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[2]
    }

    /// Inverse; `None` when the determinant is not positive-finite.
    pub fn inverse(&self) -> Option<Sym2> {
        let d = self.det();
        if !(d.abs() > f64::MIN_POSITIVE) || !d.is_finite() {
            return None;
        }
        Some(Sym2([self.0[2] / d, -self.0[1] / d, self.0[0] / d]))
    }

    /// Contraction `A^{αβ} B_{αβ}`.
    #[inline]
    pub fn contract(&self, o: &Sym2) -> f64 {
        self.0[0] * o.0[0] + 2.0 * self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_is_right_handed() {
        assert_eq!(Vec3::X.cross(&Vec3::Y), Vec3::Z);
        assert_eq!(Vec3::Y.cross(&Vec3::Z), Vec3::X);
    }

    #[test]
    fn rotation_between_maps_vectors() {
        let a = Vec3::new(0.3, -0.4, 0.2).normalized().unwrap();
        let b = Vec3::new(-0.1, 0.9, 0.5).normalized().unwrap();
        let r = Mat3::rotation_between(a, b);
        assert!((r.mul_vec(&a) - b).norm() < 1e-14);
        let rr = r.mul_mat(&r.transpose());
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((rr.0[i][j] - e).abs() < 1e-14);
            }
        }
        let flip = Mat3::rotation_between(a, -a);
        assert!((flip.mul_vec(&a) + a).norm() < 1e-14);
    }

    #[test]
    fn symmetric_eigen_reconstructs() {
        let m = Mat3([[4.0, 1.0, -0.5], [1.0, 3.0, 0.2], [-0.5, 0.2, 1.0]]);
        let (vals, vecs) = m.symmetric_eigen();
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        for k in 0..3 {
            assert!((m.mul_vec(&vecs[k]) - vecs[k] * vals[k]).norm() < 1e-12);
            assert!((vecs[k].norm() - 1.0).abs() < 1e-12);
        }
        let (d, _) = Mat3([[2.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 5.0]]).symmetric_eigen();
        assert_eq!(d, [-1.0, 2.0, 5.0]);
    }

    #[test]
    fn sym2_inverse() {
        let m = Sym2([2.0, 0.5, 1.0]);
        let inv = m.inverse().unwrap();
        // m · inv = I
        let i11 = m.0[0] * inv.0[0] + m.0[1] * inv.0[1];
        let i12 = m.0[0] * inv.0[1] + m.0[1] * inv.0[2];
        let i22 = m.0[1] * inv.0[1] + m.0[2] * inv.0[2];
        assert!((i11 - 1.0).abs() < 1e-15 && i12.abs() < 1e-15 && (i22 - 1.0).abs() < 1e-15);
        assert!(Sym2([1.0, 1.0, 1.0]).inverse().is_none());
    }
}
