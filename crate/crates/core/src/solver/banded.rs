//! Banded LU with partial pivoting, used directly on small grids.

use super::krylov::{Csr, Field, SolveWarning};

pub struct BandedLu<F> {
    n: usize,
    kl: usize,
    width: usize,
    ab: Vec<F>,
    piv: Vec<usize>,
}

impl<F: Field> BandedLu<F> {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    pub fn factor(a: &Csr<F>) -> Result<Self, SolveWarning> {
        let n = a.n;
        let (kl, ku) = a.bandwidth();
        // Row i stores columns i-kl ..= i+kl+ku to absorb pivoting fill.
        let width = 2 * kl + ku + 1;
        let mut lu = BandedLu { n, kl, width, ab: vec![F::zero(); n * width], piv: vec![0; n] };
        for i in 0..n {
            for (j, v) in a.row(i) {
                let k = lu.idx(i, j);
                lu.ab[k] = v;
            }
        }
        let scale = lu.ab.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.ab[lu.idx(k, k)].abs();
            for i in (k + 1)..=last {
                let v = lu.ab[lu.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > 1e-300 * scale.max(1e-300)) {
                return Err(SolveWarning::Singular { row: k });
            }
            lu.piv[k] = p;
            let jmax = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let (a1, a2) = (lu.idx(k, j), lu.idx(p, j));
                    lu.ab.swap(a1, a2);
                }
            }
            let pivot = lu.ab[lu.idx(k, k)];
            for i in (k + 1)..=last {
                let ik = lu.idx(i, k);
                let l = lu.ab[ik] / pivot;
                lu.ab[ik] = l;
                if l.abs() == 0.0 {
                    continue;
                }
                for j in (k + 1)..=jmax {
                    let kj = lu.ab[lu.idx(k, j)];
                    let ij = lu.idx(i, j);
                    lu.ab[ij] -= l * kj;
                }
            }
        }
        Ok(lu)
    }

    pub fn solve(&self, b: &[F]) -> Vec<F> {
        let n = self.n;
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            for i in (k + 1)..=(k + self.kl).min(n.saturating_sub(1)) {
                x[i] -= self.ab[self.idx(i, k)] * xk;
            }
        }
        let reach = self.width - self.kl - 1;
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in (k + 1)..=(k + reach).min(n - 1) {
                s -= self.ab[self.idx(k, j)] * x[j];
            }
            x[k] = s / self.ab[self.idx(k, k)];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn banded_matches_residual(n in 3usize..40, band in 1usize..5, seed in prop::collection::vec(-1.0f64..1.0, 400)) {
            let mut rows = vec![Vec::new(); n];
            let mut s = 0;
            for (i, row) in rows.iter_mut().enumerate() {
                for j in i.saturating_sub(band)..=(i + band).min(n - 1) {
                    let v = Complex64::new(seed[s % 400], seed[(s + 7) % 400]);
                    s += 1;
                    row.push((j, v));
                }
            }
            let a = Csr::from_rows(rows);
            let b: Vec<Complex64> = (0..n).map(|i| Complex64::new(1.0, i as f64)).collect();
            if let Ok(lu) = BandedLu::factor(&a) {
                let x = lu.solve(&b);
                let cond_guard = x.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1.0);
                prop_assert!(a.residual_norm(&x, &b) <= 1e-8 * cond_guard * n as f64);
            }
        }
    }

    #[test]
    fn needs_pivoting() {
        let a = Csr::from_rows(vec![vec![(0, 0.0), (1, 1.0)], vec![(0, 1.0), (1, 1.0)]]);
        let x = BandedLu::factor(&a).unwrap().solve(&[1.0, 3.0]);
        assert!((x[0] - 2.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }
}
