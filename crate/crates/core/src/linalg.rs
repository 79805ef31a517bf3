//! Small fixed-size vectors and matrices over a generic scalar.

use crate::Scalar;
use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vec3<T>(pub [T; 3]);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat3<T>(pub [[T; 3]; 3]);

impl<T: Scalar> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3([x, y, z])
    }

    pub fn zero() -> Self {
        Vec3([T::zero(); 3])
    }

    pub fn unit(axis: usize) -> Self {
        let mut v = Self::zero();
        v.0[axis] = T::one();
        v
    }

    pub fn dot(&self, other: &Self) -> T {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn norm_sq(&self) -> T {
        self.dot(self)
    }

    pub fn scale(&self, s: T) -> Self {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }

    pub fn outer(&self, other: &Self) -> Mat3<T> {
        let mut m = Mat3::zero();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = self.0[i] * other.0[j];
            }
        }
        m
    }

    pub fn max_abs(&self) -> T {
        self.0[0].abs().max(self.0[1].abs()).max(self.0[2].abs())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl<T: Scalar> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<T: Scalar> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl<T: Scalar> AddAssign for Vec3<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Scalar> SubAssign for Vec3<T> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Scalar> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Vec3([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl<T: Scalar> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        self.scale(s)
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> IndexMut<usize> for Vec3<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

impl<T: Scalar> Mat3<T> {
    pub fn zero() -> Self {
        Mat3([[T::zero(); 3]; 3])
    }

    pub fn identity() -> Self {
        Self::diag(T::one(), T::one(), T::one())
    }

    pub fn diag(a: T, b: T, c: T) -> Self {
        let mut m = Self::zero();
        m.0[0][0] = a;
        m.0[1][1] = b;
        m.0[2][2] = c;
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = self.0[j][i];
            }
        }
        m
    }

    pub fn mul_vec(&self, v: &Vec3<T>) -> Vec3<T> {
        let r = |i: usize| self.0[i][0] * v.0[0] + self.0[i][1] * v.0[1] + self.0[i][2] * v.0[2];
        Vec3([r(0), r(1), r(2)])
    }

    pub fn matmul(&self, o: &Self) -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = T::zero();
                for k in 0..3 {
                    s = s + self.0[i][k] * o.0[k][j];
                }
                m.0[i][j] = s;
            }
        }
        m
    }

    pub fn scale(&self, s: T) -> Self {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for v in row.iter_mut() {
                *v = *v * s;
            }
        }
        m
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut m = *self;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = m.0[i][j] + o.0[i][j];
            }
        }
        m
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(-T::one()))
    }

    pub fn det(&self) -> T {
        let a = &self.0;
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == T::zero() || !d.is_finite() {
            return None;
        }
        let a = &self.0;
        let mut m = Self::zero();
        m.0[0][0] = a[1][1] * a[2][2] - a[1][2] * a[2][1];
        m.0[0][1] = a[0][2] * a[2][1] - a[0][1] * a[2][2];
        m.0[0][2] = a[0][1] * a[1][2] - a[0][2] * a[1][1];
        m.0[1][0] = a[1][2] * a[2][0] - a[1][0] * a[2][2];
        m.0[1][1] = a[0][0] * a[2][2] - a[0][2] * a[2][0];
        m.0[1][2] = a[0][2] * a[1][0] - a[0][0] * a[1][2];
        m.0[2][0] = a[1][0] * a[2][1] - a[1][1] * a[2][0];
        m.0[2][1] = a[0][1] * a[2][0] - a[0][0] * a[2][1];
        m.0[2][2] = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        Some(m.scale(T::one() / d))
    }

    pub fn max_abs(&self) -> T {
        let mut m = T::zero();
        for row in &self.0 {
            for v in row {
                m = m.max(v.abs());
            }
        }
        m
    }

    pub fn frobenius(&self) -> T {
        let mut s = T::zero();
        for row in &self.0 {
            for v in row {
                s = s + *v * *v;
            }
        }
        s.sqrt()
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        (0..3).all(|i| (0..3).all(|j| (self.0[i][j] - self.0[j][i]).abs() <= tol))
    }

    /// Factor `self = U Uᵀ` with `U` upper triangular and positive diagonal.
    /// Returns `None` if the matrix is not positive definite.
    pub fn cholesky_upper(&self) -> Option<Self> {
        // Reversing index order turns the usual lower factorization into an upper one.
        let p = |i: usize| 2 - i;
        let mut rev = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                rev.0[i][j] = self.0[p(i)][p(j)];
            }
        }
        let l = rev.cholesky_lower()?;
        let mut u = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                u.0[i][j] = l.0[p(i)][p(j)];
            }
        }
        Some(u)
    }

    /// Factor `self = R Rᵀ` with `R` lower triangular.
    pub fn cholesky_lower(&self) -> Option<Self> {
        let mut l = Self::zero();
        for j in 0..3 {
            let mut d = self.0[j][j];
            for k in 0..j {
                d = d - l.0[j][k] * l.0[j][k];
            }
            if !(d > T::zero()) {
                return None;
            }
            l.0[j][j] = d.sqrt();
            for i in (j + 1)..3 {
                let mut s = self.0[i][j];
                for k in 0..j {
                    s = s - l.0[i][k] * l.0[j][k];
                }
                l.0[i][j] = s / l.0[j][j];
            }
        }
        Some(l)
    }

    /// Cyclic Jacobi eigendecomposition of a symmetric matrix.
    /// Returns eigenvalues in ascending order and the matrix whose columns are eigenvectors.
    pub fn sym_eigen(&self) -> (Vec3<T>, Self) {
        let mut a = *self;
        let mut v = Self::identity();
        let eps = T::epsilon();
        for _sweep in 0..64 {
            let off = a.0[0][1].abs() + a.0[0][2].abs() + a.0[1][2].abs();
            let scale = a.0[0][0].abs() + a.0[1][1].abs() + a.0[2][2].abs();
            if off <= eps * eps * (scale + T::min_positive_value()) || off == T::zero() {
                break;
            }
            for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
                let apq = a.0[p][q];
                if apq == T::zero() {
                    continue;
                }
                let two = T::one() + T::one();
                let theta = (a.0[q][q] - a.0[p][p]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..3 {
                    let akp = a.0[k][p];
                    let akq = a.0[k][q];
                    a.0[k][p] = c * akp - s * akq;
                    a.0[k][q] = s * akp + c * akq;
                }
                for k in 0..3 {
                    let apk = a.0[p][k];
                    let aqk = a.0[q][k];
                    a.0[p][k] = c * apk - s * aqk;
                    a.0[q][k] = s * apk + c * aqk;
                }
                for k in 0..3 {
                    let vkp = v.0[k][p];
                    let vkq = v.0[k][q];
                    v.0[k][p] = c * vkp - s * vkq;
                    v.0[k][q] = s * vkp + c * vkq;
                }
            }
        }
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&i, &j| a.0[i][i].partial_cmp(&a.0[j][j]).unwrap_or(std::cmp::Ordering::Equal));
        let vals = Vec3([a.0[idx[0]][idx[0]], a.0[idx[1]][idx[1]], a.0[idx[2]][idx[2]]]);
        let mut vecs = Self::zero();
        for (col, &src) in idx.iter().enumerate() {
            for k in 0..3 {
                vecs.0[k][col] = v.0[k][src];
            }
        }
        (vals, vecs)
    }

    /// Symmetric square root via the eigendecomposition. `None` if an eigenvalue is negative.
    pub fn sym_sqrt(&self) -> Option<Self> {
        let (vals, vecs) = self.sym_eigen();
        if vals.0.iter().any(|&l| l < T::zero()) {
            return None;
        }
        let d = Self::diag(vals[0].sqrt(), vals[1].sqrt(), vals[2].sqrt());
        Some(vecs.matmul(&d).matmul(&vecs.transpose()))
    }
}
