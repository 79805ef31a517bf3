//! Compressed sparse rows, Jacobi-preconditioned CG and TFQMR, generic over the field.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

/// Scalar field for the linear algebra: `f64` or `Complex64`.
pub trait Field:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + 'static
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_re(x: f64) -> Self;
    fn conj(self) -> Self;
    fn abs(self) -> f64;
    fn re(self) -> f64;
    fn scale(self, s: f64) -> Self;
}

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_re(x: f64) -> Self {
        x
    }
    fn conj(self) -> Self {
        self
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    fn re(self) -> f64 {
        self
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

impl Field for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_re(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn abs(self) -> f64 {
        self.norm()
    }
    fn re(self) -> f64 {
        self.re
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

pub fn dot<F: Field>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |s, (x, y)| s + x.conj() * *y)
}

pub fn norm<F: Field>(a: &[F]) -> f64 {
    a.iter().map(|x| x.abs() * x.abs()).sum::<f64>().sqrt()
}

fn axpy<F: Field>(y: &mut [F], a: F, x: &[F]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * *xi;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Csr<F> {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<F>,
}

impl<F: Field> Csr<F> {
    /// Build from per-row `(column, value)` lists; duplicate columns are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, F)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            let start = col.len();
            for (c, v) in r {
                if col.len() > start && *col.last().unwrap() == c {
                    *val.last_mut().unwrap() += v;
                } else {
                    col.push(c);
                    val.push(v);
                }
            }
            row_ptr.push(col.len());
        }
        Csr { n, row_ptr, col, val }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, F)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col[k], self.val[k]))
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        self.row(i).find(|e| e.0 == j).map(|e| e.1).unwrap_or(F::zero())
    }

    pub fn matvec(&self, x: &[F], y: &mut [F]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut s = F::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            *yi = s;
        }
    }

    pub fn apply(&self, x: &[F]) -> Vec<F> {
        let mut y = vec![F::zero(); self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<F> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn map<G: Field>(&self, f: impl Fn(F) -> G) -> Csr<G> {
        Csr { n: self.n, row_ptr: self.row_ptr.clone(), col: self.col.clone(), val: self.val.iter().map(|&v| f(v)).collect() }
    }

    /// `max |a_ij − a_ji|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Lower and upper bandwidth.
    pub fn bandwidth(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..self.n {
            for (j, _) in self.row(i) {
                if j < i {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }

    pub fn residual_norm(&self, x: &[F], b: &[F]) -> f64 {
        let ax = self.apply(x);
        let r: Vec<F> = b.iter().zip(&ax).map(|(bi, ai)| *bi - *ai).collect();
        norm(&r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrylovOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions { tol: 1e-10, max_iter: 20_000 }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error, Serialize, Deserialize)]
pub enum SolveWarning {
    #[error("no convergence after {iterations} iterations (relative residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("operator is not positive definite (detected at iteration {iteration})")]
    Indefinite { iteration: usize },
    #[error("Krylov breakdown at iteration {iteration}")]
    Breakdown { iteration: usize },
    #[error("zero pivot in banded factorization at row {row}")]
    Singular { row: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct KrylovResult<F> {
    pub x: Vec<F>,
    pub iterations: usize,
    pub residual: f64,
}

fn jacobi<F: Field>(a: &Csr<F>) -> Vec<F> {
    a.diagonal().into_iter().map(|d| if d.abs() > 0.0 { F::one() / d } else { F::one() }).collect()
}

/// Preconditioned conjugate gradients for Hermitian positive definite `a`.
pub fn cg<F: Field>(a: &Csr<F>, b: &[F], opts: &KrylovOptions) -> Result<KrylovResult<F>, SolveWarning> {
    let n = a.n;
    let bn = norm(b);
    if bn == 0.0 {
        return Ok(KrylovResult { x: vec![F::zero(); n], iterations: 0, residual: 0.0 });
    }
    let diag = a.diagonal();
    if diag.iter().any(|d| d.re() <= 0.0) {
        return Err(SolveWarning::Indefinite { iteration: 0 });
    }
    let minv: Vec<F> = diag.iter().map(|d| F::one() / *d).collect();
    let mut x = vec![F::zero(); n];
    let mut r = b.to_vec();
    let mut z: Vec<F> = r.iter().zip(&minv).map(|(ri, mi)| *mi * *ri).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![F::zero(); n];
    for it in 1..=opts.max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap.re() <= 0.0 {
            return Err(SolveWarning::Indefinite { iteration: it });
        }
        let alpha = rz / pap;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        let res = norm(&r) / bn;
        if res <= opts.tol {
            return Ok(KrylovResult { x, iterations: it, residual: res });
        }
        for i in 0..n {
            z[i] = minv[i] * r[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = a.residual_norm(&x, b) / bn;
    Err(SolveWarning::NonConvergence { iterations: opts.max_iter, residual: res })
}

/// Transpose-free QMR with left Jacobi preconditioning for general (complex symmetric) systems.
/// Convergence is confirmed on the true unpreconditioned residual; the iteration restarts
/// from the current iterate when the quasi-residual bound is optimistic.
pub fn tfqmr<F: Field>(a: &Csr<F>, b: &[F], opts: &KrylovOptions) -> Result<KrylovResult<F>, SolveWarning> {
    let n = a.n;
    let bn = norm(b);
    if bn == 0.0 {
        return Ok(KrylovResult { x: vec![F::zero(); n], iterations: 0, residual: 0.0 });
    }
    let minv = jacobi(a);
    let pa = |v: &[F], out: &mut [F]| {
        a.matvec(v, out);
        for i in 0..n {
            out[i] = minv[i] * out[i];
        }
    };
    let pb: Vec<F> = b.iter().zip(&minv).map(|(bi, mi)| *mi * *bi).collect();
    let pbn = norm(&pb);
    let mut x = vec![F::zero(); n];
    let mut total = 0usize;
    let mut tmp = vec![F::zero(); n];
    for _restart in 0..8 {
        // Preconditioned residual.
        pa(&x, &mut tmp);
        let r0: Vec<F> = pb.iter().zip(&tmp).map(|(bi, ai)| *bi - *ai).collect();
        let mut w = r0.clone();
        let mut u1 = r0.clone();
        let mut au1 = vec![F::zero(); n];
        pa(&u1, &mut au1);
        let mut v = au1.clone();
        let mut u2 = vec![F::zero(); n];
        let mut au2 = vec![F::zero(); n];
        let mut d = vec![F::zero(); n];
        let mut tau = norm(&r0);
        let mut theta = 0.0f64;
        let mut eta = F::zero();
        let rt = r0.clone();
        let mut rho = dot(&rt, &r0);
        let mut m = 0usize;
        let mut done = false;
        while total < opts.max_iter {
            total += 1;
            let sigma = dot(&rt, &v);
            if sigma.abs() == 0.0 || rho.abs() == 0.0 {
                break;
            }
            let alpha = rho / sigma;
            for i in 0..n {
                u2[i] = u1[i] - alpha * v[i];
            }
            pa(&u2, &mut au2);
            for j in 0..2 {
                m += 1;
                let (u, au) = if j == 0 { (&u1, &au1) } else { (&u2, &au2) };
                axpy(&mut w, -alpha, au);
                let coef = eta.scale(theta * theta) / alpha;
                for i in 0..n {
                    d[i] = u[i] + coef * d[i];
                }
                theta = norm(&w) / tau;
                let c = 1.0 / (1.0 + theta * theta).sqrt();
                tau *= theta * c;
                eta = alpha.scale(c * c);
                axpy(&mut x, eta, &d);
                if tau * ((m + 1) as f64).sqrt() <= 0.1 * opts.tol * pbn {
                    done = true;
                    break;
                }
            }
            if done {
                break;
            }
            let rho_new = dot(&rt, &w);
            let beta = rho_new / rho;
            rho = rho_new;
            for i in 0..n {
                u1[i] = w[i] + beta * u2[i];
            }
            pa(&u1, &mut au1);
            for i in 0..n {
                v[i] = au1[i] + beta * (au2[i] + beta * v[i]);
            }
        }
        let res = a.residual_norm(&x, b) / bn;
        if res <= opts.tol {
            return Ok(KrylovResult { x, iterations: total, residual: res });
        }
        if total >= opts.max_iter {
            return Err(SolveWarning::NonConvergence { iterations: total, residual: res });
        }
    }
    let res = a.residual_norm(&x, b) / bn;
    if res <= opts.tol {
        Ok(KrylovResult { x, iterations: total, residual: res })
    } else {
        Err(SolveWarning::Breakdown { iteration: total })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lap1d<F: Field>(n: usize, shift: F) -> Csr<F> {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, F::from_re(2.0) + shift)];
                if i > 0 {
                    r.push((i - 1, F::from_re(-1.0)));
                }
                if i + 1 < n {
                    r.push((i + 1, F::from_re(-1.0)));
                }
                r
            })
            .collect();
        Csr::from_rows(rows)
    }

    #[test]
    fn cg_solves_laplacian() {
        let a = lap1d(50, 0.0f64);
        let b = vec![1.0; 50];
        let r = cg(&a, &b, &KrylovOptions::default()).unwrap();
        assert!(a.residual_norm(&r.x, &b) / norm(&b) <= 1e-10);
    }

    #[test]
    fn cg_flags_indefinite() {
        let a = lap1d(50, -1.0f64);
        let b = vec![1.0; 50];
        assert!(matches!(cg(&a, &b, &KrylovOptions::default()), Err(SolveWarning::Indefinite { .. })));
    }

    #[test]
    fn duplicates_are_summed() {
        let a = Csr::from_rows(vec![vec![(0, 1.0), (0, 2.0)]]);
        assert_eq!(a.get(0, 0), 3.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn tfqmr_complex_shifted(n in 5usize..60, s in -3.0f64..3.0, im in 0.05f64..2.0) {
            let a = lap1d(n, Complex64::new(s, im));
            let b: Vec<Complex64> = (0..n).map(|i| Complex64::new((i as f64).sin(), 1.0)).collect();
            let r = tfqmr(&a, &b, &KrylovOptions::default()).unwrap();
            prop_assert!(a.residual_norm(&r.x, &b) / norm(&b) <= 1e-10);
        }
    }
}
