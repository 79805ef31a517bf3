//! Piecewise-affine `γ` and `q`, the anisotropy field `A`, assumption checks, the
//! extension to `D₀` and the exact sup-norm error functionals.

use crate::geometry::{AugmentedDomain, SlabPartition};
use crate::linalg::{Mat3, Vec3};
use crate::{pt, Error, Matrix3, Point, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub offset: f64,
    pub gradient: Point,
}

impl AffinePiece {
    pub fn constant(c: f64) -> Self {
        AffinePiece { offset: c, gradient: Vec3::zero() }
    }

    pub fn new(offset: f64, gradient: [f64; 3]) -> Self {
        AffinePiece { offset, gradient: Vec3(gradient) }
    }

    pub fn eval(&self, x: &Point) -> f64 {
        self.offset + self.gradient.dot(x)
    }

    pub fn sub(&self, o: &Self) -> Self {
        AffinePiece { offset: self.offset - o.offset, gradient: self.gradient - o.gradient }
    }

    pub fn add(&self, o: &Self) -> Self {
        AffinePiece { offset: self.offset + o.offset, gradient: self.gradient + o.gradient }
    }

    pub fn scale(&self, s: f64) -> Self {
        AffinePiece { offset: self.offset * s, gradient: self.gradient.scale(s) }
    }

    /// `|a| + |b|`, the slab contribution to the triple norm.
    pub fn triple(&self) -> f64 {
        self.offset.abs() + self.gradient.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.offset.is_finite() && self.gradient.is_finite()
    }

    /// Exact `(min, argmin, max, argmax)` over a box, attained at vertices.
    pub fn extremes(&self, lo: &Point, hi: &Point) -> (f64, Point, f64, Point) {
        let mut out = (f64::INFINITY, *lo, f64::NEG_INFINITY, *lo);
        for v in box_vertices(lo, hi) {
            let f = self.eval(&v);
            if f < out.0 {
                out.0 = f;
                out.1 = v;
            }
            if f > out.2 {
                out.2 = f;
                out.3 = v;
            }
        }
        out
    }

    /// Exact `sup |f|` over a box together with a maximising vertex.
    pub fn sup_abs(&self, lo: &Point, hi: &Point) -> (f64, Point) {
        let (mn, amn, mx, amx) = self.extremes(lo, hi);
        if mx.abs() >= mn.abs() {
            (mx.abs(), amx)
        } else {
            (mn.abs(), amn)
        }
    }
}

pub fn box_vertices(lo: &Point, hi: &Point) -> [Point; 8] {
    let mut v = [*lo; 8];
    for (i, p) in v.iter_mut().enumerate() {
        for a in 0..3 {
            p[a] = if (i >> a) & 1 == 1 { hi[a] } else { lo[a] };
        }
    }
    v
}

/// One affine piece per region: `d0` for the extension, `slabs[j-1]` for `D_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseAffineField {
    pub d0: Option<AffinePiece>,
    pub slabs: Vec<AffinePiece>,
}

impl PiecewiseAffineField {
    pub fn piece(&self, region: usize) -> Option<&AffinePiece> {
        if region == 0 {
            self.d0.as_ref()
        } else {
            self.slabs.get(region - 1)
        }
    }

    pub fn triple_norm(&self) -> f64 {
        self.slabs.iter().map(|p| p.triple()).fold(0.0, f64::max)
    }

    pub fn sup_abs(&self, partition: &SlabPartition) -> f64 {
        (1..=self.slabs.len())
            .map(|j| {
                let (lo, hi) = partition.slab_box(j);
                self.slabs[j - 1].sup_abs(&lo, &hi).0
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixField {
    Identity,
    Constant(Matrix3),
    /// `A(x) = I + amplitude · sin(πx) sin(πy) sin(πz) · shape`.
    SinBump { amplitude: f64, shape: Matrix3 },
}

impl MatrixField {
    pub fn eval(&self, x: &Point) -> Matrix3 {
        match self {
            MatrixField::Identity => Mat3::identity(),
            MatrixField::Constant(m) => *m,
            MatrixField::SinBump { amplitude, shape } => {
                let pi = std::f64::consts::PI;
                let s = (pi * x[0]).sin() * (pi * x[1]).sin() * (pi * x[2]).sin();
                Mat3::identity().add(&shape.scale(amplitude * s))
            }
        }
    }

    pub fn is_diagonal(&self) -> bool {
        let offdiag = |m: &Matrix3| (0..3).all(|i| (0..3).all(|j| i == j || m.0[i][j] == 0.0));
        match self {
            MatrixField::Identity => true,
            MatrixField::Constant(m) => offdiag(m),
            MatrixField::SinBump { shape, amplitude } => *amplitude == 0.0 || offdiag(shape),
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            MatrixField::Identity => true,
            MatrixField::Constant(m) => *m == Mat3::identity(),
            MatrixField::SinBump { amplitude, .. } => *amplitude == 0.0,
        }
    }
}

/// Which coefficient to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    Gamma,
    Q,
    Sigma,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CoefValue {
    Scalar(f64),
    Matrix(Matrix3),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientPair {
    pub gamma: PiecewiseAffineField,
    pub q: PiecewiseAffineField,
    pub matrix: MatrixField,
    pub partition: SlabPartition,
    /// Present after [`CoefficientPair::extend_to_d0`].
    pub extension: Option<AugmentedDomain>,
}

impl CoefficientPair {
    pub fn new(partition: SlabPartition, gamma: Vec<AffinePiece>, q: Vec<AffinePiece>, matrix: MatrixField) -> Result<Self> {
        let n = partition.n_slabs();
        if gamma.len() != n || q.len() != n {
            return Err(Error::Coefficients(format!("expected {n} pieces for γ and q, got {} and {}", gamma.len(), q.len())));
        }
        if gamma.iter().chain(q.iter()).any(|p| !p.is_finite()) {
            return Err(Error::Coefficients("non-finite affine piece".into()));
        }
        Ok(CoefficientPair {
            gamma: PiecewiseAffineField { d0: None, slabs: gamma },
            q: PiecewiseAffineField { d0: None, slabs: q },
            matrix,
            partition,
            extension: None,
        })
    }

    /// Pair with the same structure whose pieces are perturbed by `(dγ, dq)`.
    pub fn perturbed(&self, dgamma: &[AffinePiece], dq: &[AffinePiece]) -> Self {
        let mut out = self.clone();
        for (p, d) in out.gamma.slabs.iter_mut().zip(dgamma) {
            *p = p.add(d);
        }
        for (p, d) in out.q.slabs.iter_mut().zip(dq) {
            *p = p.add(d);
        }
        out
    }

    /// Region index of `x` (`0` for `D₀`) with the lower-slab tie-break.
    pub fn locate(&self, x: &Point) -> Result<usize> {
        if let Some(aug) = &self.extension {
            return aug
                .region_of(x)
                .ok_or_else(|| Error::Coefficients(format!("point {:?} outside Ω0", x.0)));
        }
        if self.partition.domain.contains(x) {
            Ok(self.partition.slab_of(x[2]))
        } else {
            Err(Error::Coefficients(format!("point {:?} outside Ω", x.0)))
        }
    }

    pub fn gamma_in(&self, region: usize, x: &Point) -> f64 {
        self.gamma.piece(region).expect("region piece").eval(x)
    }

    pub fn q_in(&self, region: usize, x: &Point) -> f64 {
        self.q.piece(region).expect("region piece").eval(x)
    }

    pub fn matrix_in(&self, region: usize, x: &Point) -> Matrix3 {
        if region == 0 {
            Mat3::identity()
        } else {
            self.matrix.eval(x)
        }
    }

    pub fn sigma_in(&self, region: usize, x: &Point) -> Matrix3 {
        self.matrix_in(region, x).scale(self.gamma_in(region, x))
    }

    pub fn gamma(&self, x: &Point) -> Result<f64> {
        Ok(self.gamma_in(self.locate(x)?, x))
    }

    pub fn q(&self, x: &Point) -> Result<f64> {
        Ok(self.q_in(self.locate(x)?, x))
    }

    pub fn sigma(&self, x: &Point) -> Result<Matrix3> {
        Ok(self.sigma_in(self.locate(x)?, x))
    }

    pub fn eval(&self, x: &Point, which: Which) -> Result<CoefValue> {
        Ok(match which {
            Which::Gamma => CoefValue::Scalar(self.gamma(x)?),
            Which::Q => CoefValue::Scalar(self.q(x)?),
            Which::Sigma => CoefValue::Matrix(self.sigma(x)?),
        })
    }

    /// Sets `σ = Id` and `q = 1` on `D₀`.
    pub fn extend_to_d0(&self, domain: &AugmentedDomain) -> Self {
        let mut out = self.clone();
        out.gamma.d0 = Some(AffinePiece::constant(1.0));
        out.q.d0 = Some(AffinePiece::constant(1.0));
        out.extension = Some(domain.clone());
        out
    }

    pub fn same_partition(&self, other: &Self) -> bool {
        self.partition.cuts == other.partition.cuts && self.partition.domain == other.partition.domain
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationBounds {
    pub gamma_bar: f64,
    pub lambda_bar: f64,
    pub a_bar: f64,
    pub sigma_bar: f64,
    pub q_bar: f64,
    /// Sample points per axis for the matrix-field checks.
    pub samples: usize,
    /// Difference-quotient step for the `C^{1,1}` surrogate.
    pub step: f64,
}

impl Default for ValidationBounds {
    fn default() -> Self {
        ValidationBounds { gamma_bar: 10.0, lambda_bar: 2.0, a_bar: 50.0, sigma_bar: 20.0, q_bar: 20.0, samples: 9, step: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub bound: f64,
    pub witness: Option<Point>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn violations(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

fn sample_points(lo: &Point, hi: &Point, n: usize) -> Vec<Point> {
    let n = n.max(2);
    let mut out = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let t = |a: usize, s: usize| lo[a] + (hi[a] - lo[a]) * s as f64 / (n - 1) as f64;
                out.push(pt(t(0, i), t(1, j), t(2, k)));
            }
        }
    }
    out
}

/// Scaled `C^{1,1}` surrogate `sup|a| + r0 sup|∇a| + r0² sup|∇²a|` for each entry.
fn c11_norm(field: &MatrixField, x: &Point, r0: f64, h: f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in i..3 {
            let f = |p: &Point| field.eval(p).0[i][j];
            let f0 = f(x);
            let mut g2 = 0.0;
            let mut hmax = 0.0f64;
            for a in 0..3 {
                let e = Vec3::<f64>::unit(a).scale(h);
                let (fp, fm) = (f(&(*x + e)), f(&(*x - e)));
                g2 += ((fp - fm) / (2.0 * h)).powi(2);
                // Second differences at h and h/2; the larger one guards against aliasing.
                let d2h = (fp - 2.0 * f0 + fm) / (h * h);
                let e2 = e.scale(0.5);
                let d2h2 = (f(&(*x + e2)) - 2.0 * f0 + f(&(*x - e2))) / (0.25 * h * h);
                hmax = hmax.max(d2h.abs()).max(d2h2.abs());
                for b in (a + 1)..3 {
                    let eb = Vec3::<f64>::unit(b).scale(h);
                    let m = (f(&(*x + e + eb)) - f(&(*x + e - eb)) - f(&(*x - e + eb)) + f(&(*x - e - eb))) / (4.0 * h * h);
                    hmax = hmax.max(m.abs());
                }
            }
            worst = worst.max(f0.abs() + r0 * g2.sqrt() + r0 * r0 * hmax);
        }
    }
    worst
}

pub fn validate(pair: &CoefficientPair, b: &ValidationBounds) -> ValidationReport {
    let mut checks = Vec::new();
    let part = &pair.partition;
    let r0 = part.domain.r0;
    for j in 1..=part.n_slabs() {
        let (lo, hi) = part.slab_box(j);
        let (mn, amn, mx, amx) = pair.gamma.slabs[j - 1].extremes(&lo, &hi);
        checks.push(Check {
            name: format!("C1 gamma lower bound on D{j}"),
            passed: mn >= 1.0 / b.gamma_bar,
            value: mn,
            bound: 1.0 / b.gamma_bar,
            witness: Some(amn),
        });
        checks.push(Check { name: format!("C1 gamma upper bound on D{j}"), passed: mx <= b.gamma_bar, value: mx, bound: b.gamma_bar, witness: Some(amx) });
        let (qs, qw) = pair.q.slabs[j - 1].sup_abs(&lo, &hi);
        checks.push(Check { name: format!("C6 q bound on D{j}"), passed: qs <= b.q_bar, value: qs, bound: b.q_bar, witness: Some(qw) });
    }
    let pts = sample_points(&part.domain.lower, &part.domain.upper, b.samples);
    let mut asym = (0.0f64, None);
    let mut lam_lo = (f64::INFINITY, None);
    let mut lam_hi = (0.0f64, None);
    let mut c11 = (0.0f64, None);
    let mut sig = (0.0f64, None);
    for x in &pts {
        let a = pair.matrix.eval(x);
        let s = a.sub(&a.transpose()).max_abs();
        if s > asym.0 {
            asym = (s, Some(*x));
        }
        let (vals, _) = a.sym_eigen();
        if vals[0] < lam_lo.0 {
            lam_lo = (vals[0], Some(*x));
        }
        if vals[2] > lam_hi.0 {
            lam_hi = (vals[2], Some(*x));
        }
        let c = c11_norm(&pair.matrix, x, r0, b.step);
        if c > c11.0 {
            c11 = (c, Some(*x));
        }
        let j = part.slab_of(x[2]);
        let g = pair.gamma_in(j, x).abs();
        let smax = g * vals[2].abs().max(vals[0].abs());
        if smax > sig.0 {
            sig = (smax, Some(*x));
        }
    }
    checks.push(Check { name: "C3 A symmetric".into(), passed: asym.0 <= 1e-12, value: asym.0, bound: 1e-12, witness: asym.1 });
    checks.push(Check { name: "C3 A C^{1,1} bound".into(), passed: c11.0 <= b.a_bar, value: c11.0, bound: b.a_bar, witness: c11.1 });
    checks.push(Check {
        name: "C4 ellipticity lower".into(),
        passed: lam_lo.0 >= 1.0 / b.lambda_bar,
        value: lam_lo.0,
        bound: 1.0 / b.lambda_bar,
        witness: lam_lo.1,
    });
    checks.push(Check { name: "C4 ellipticity upper".into(), passed: lam_hi.0 <= b.lambda_bar, value: lam_hi.0, bound: b.lambda_bar, witness: lam_hi.1 });
    checks.push(Check { name: "C6 sigma bound".into(), passed: sig.0 <= b.sigma_bar, value: sig.0, bound: b.sigma_bar, witness: sig.1 });
    ValidationReport { checks }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorFunctionals {
    /// `E = max(‖γ₁−γ₂‖_∞(Ω), ‖q₁−q₂‖_∞(Ω))`.
    pub e: f64,
    /// `δ_k = ‖γ₁−γ₂‖_∞(W_k)`.
    pub delta: f64,
    /// `δ̃_k = ‖q₁−q₂‖_∞(W_k)`.
    pub delta_tilde: f64,
    /// `δ*_k = max(δ_k, δ̃_k)`.
    pub delta_star: f64,
}

pub fn error_functionals(p1: &CoefficientPair, p2: &CoefficientPair, k: usize) -> Result<ErrorFunctionals> {
    if !p1.same_partition(p2) {
        return Err(Error::Coefficients("pairs live on different partitions".into()));
    }
    let part = &p1.partition;
    let n = part.n_slabs();
    if k > n {
        return Err(Error::Coefficients(format!("chain index {k} exceeds N = {n}")));
    }
    let mut dg = vec![0.0; n];
    let mut dq = vec![0.0; n];
    for j in 1..=n {
        let (lo, hi) = part.slab_box(j);
        dg[j - 1] = p1.gamma.slabs[j - 1].sub(&p2.gamma.slabs[j - 1]).sup_abs(&lo, &hi).0;
        dq[j - 1] = p1.q.slabs[j - 1].sub(&p2.q.slabs[j - 1]).sup_abs(&lo, &hi).0;
    }
    let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    let e = max(&dg).max(max(&dq));
    let delta = max(&dg[..k]);
    let delta_tilde = max(&dq[..k]);
    Ok(ErrorFunctionals { e, delta, delta_tilde, delta_star: delta.max(delta_tilde) })
}

/// Constants with `c₁ |||f||| ≤ ‖f‖_∞ ≤ c₂ |||f|||` for every piecewise-affine field on the partition.
pub fn triple_norm_constants(partition: &SlabPartition) -> (f64, f64) {
    let mut c1 = f64::INFINITY;
    let mut c2 = 0.0f64;
    for j in 1..=partition.n_slabs() {
        let (lo, hi) = partition.slab_box(j);
        let center = (lo + hi).scale(0.5);
        let wmin = (0..3).map(|a| 0.5 * (hi[a] - lo[a])).fold(f64::INFINITY, f64::min);
        let rmax = box_vertices(&lo, &hi).iter().map(|v| v.norm()).fold(0.0, f64::max);
        // sup|a + b·x| = |a + b·x_c| + Σ|b_i| w_i bounds both |b| and |a| from below.
        c1 = c1.min(1.0 / (1.0 + (1.0 + center.norm()) / wmin));
        c2 = c2.max(1.0f64.max(rmax));
    }
    (c1, c2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterfaceBound {
    /// Reconstructed affine difference.
    pub piece: AffinePiece,
    /// Exact sup of the reconstruction over the slab.
    pub exact_sup: f64,
    /// `C (interface sup + |∂_ν|) (1 + diam)`.
    pub bound: f64,
    pub constant: f64,
    pub interface_sup: f64,
}

/// Reconstruct an affine difference on slab `D_k` from samples on its lower interface
/// plus the normal slope, and bound its sup over the slab.
pub fn affine_bound_from_interface(
    samples: &[(Point, f64)],
    normal_derivative: f64,
    anchor: &Point,
    slab: (Point, Point),
) -> Result<InterfaceBound> {
    if samples.len() < 3 {
        return Err(Error::Coefficients("need at least three interface samples".into()));
    }
    if samples.iter().any(|(p, _)| (p[2] - anchor[2]).abs() > 1e-12) {
        return Err(Error::Coefficients("samples must lie on the interface plane".into()));
    }
    // Least squares for value = A + Bx (x - Px) + By (y - Py).
    let mut ata = Mat3::<f64>::zero();
    let mut atb = Vec3::<f64>::zero();
    let rows: Vec<[f64; 3]> = samples.iter().map(|(p, _)| [1.0, p[0] - anchor[0], p[1] - anchor[1]]).collect();
    for (r, (_, v)) in rows.iter().zip(samples) {
        for i in 0..3 {
            atb[i] += r[i] * v;
            for j in 0..3 {
                ata.0[i][j] += r[i] * r[j];
            }
        }
    }
    let scale = ata.max_abs().max(1e-300);
    if ata.det().abs() < 1e-12 * scale.powi(3) {
        return Err(Error::Coefficients("degenerate interface sample configuration".into()));
    }
    let inv = ata.inverse().ok_or_else(|| Error::Coefficients("degenerate interface sample configuration".into()))?;
    let coef = inv.mul_vec(&atb);
    // Sensitivity of (A, B_t) to the sample values in the sup norm.
    let mut row_l1 = [0.0f64; 3];
    for r in &rows {
        let w = inv.mul_vec(&Vec3(*r));
        for i in 0..3 {
            row_l1[i] += w[i].abs();
        }
    }
    let alpha = row_l1[0];
    let beta = (row_l1[1].powi(2) + row_l1[2].powi(2)).sqrt();
    let constant = 1.0f64.max(alpha).max(beta);
    let gradient = pt(coef[1], coef[2], normal_derivative);
    let piece = AffinePiece { offset: coef[0] - gradient.dot(anchor), gradient };
    let (lo, hi) = slab;
    let exact_sup = piece.sup_abs(&lo, &hi).0;
    let interface_sup = samples.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
    let diam = (hi - lo).norm().max(box_vertices(&lo, &hi).iter().map(|v| (*v - *anchor).norm()).fold(0.0, f64::max));
    let bound = constant * (interface_sup + normal_derivative.abs()) * (1.0 + diam);
    Ok(InterfaceBound { piece, exact_sup, bound, constant, interface_sup })
}
