//! Local Cauchy data on `Σ`: fractional boundary norms, sampled Cauchy subspaces, the
//! subspace distance and the Alessandrini gap.
//!
//! `H^{1/2}_{00}(Σ)` and its dual are realised as the spectral powers `±1/2` of
//! `I + Δ_Σ`, where `Δ_Σ` is the 5-point Laplacian on the face centres of `Σ` with a zero
//! ring. Vectors are stored in whitened coordinates, where the product inner product of
//! `‖(f,g)‖² = ‖f‖²_{1/2} + ‖g‖²_{−1/2}` is Euclidean.

use crate::coefficients::CoefficientPair;
use crate::geometry::Patch;
use crate::solver::{assemble, conormal_trace, form_difference, solve_dirichlet, BoundarySpec, DiscreteOperator, Grid, GridField};
use crate::{pt, Complex64, Error, Point, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

/// Default cap on the number of `Σ` nodes.
pub const NODE_CAP: usize = 2500;
/// Default cap on the condition number of the raw Gram matrix.
pub const GRAM_CONDITION_CAP: f64 = 1e12;

/// Identity of a boundary norm: two subspaces are comparable only when these agree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub patch: Patch,
    pub h: f64,
    pub dims: [usize; 2],
}

#[derive(Clone, Debug)]
pub struct BoundaryNorm {
    pub spec: NormSpec,
    /// Face centres of `Σ`, `x` fastest.
    pub nodes: Vec<Point>,
    /// Eigenvalues of `Δ_Σ`, indexed like the nodes by mode `(p, q)`.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal 1D sine eigenvectors in columns.
    sx: DMatrix<f64>,
    sy: DMatrix<f64>,
}

fn sine_basis(n: usize) -> (DMatrix<f64>, Vec<f64>) {
    let s = (2.0 / (n as f64 + 1.0)).sqrt();
    let m = DMatrix::from_fn(n, n, |i, k| s * (((i + 1) * (k + 1)) as f64 * std::f64::consts::PI / (n as f64 + 1.0)).sin());
    let lam = (1..=n)
        .map(|k| {
            let t = (k as f64 * std::f64::consts::PI / (2.0 * (n as f64 + 1.0))).sin();
            4.0 * t * t
        })
        .collect();
    (m, lam)
}

fn steps(len: f64, h: f64, what: &str) -> Result<usize> {
    let t = len / h;
    if (t - t.round()).abs() > 1e-9 * t.max(1.0) || t.round() < 1.0 {
        return Err(Error::Cauchy(format!("{what} is not a whole number of cells")));
    }
    Ok(t.round() as usize)
}

/// 5-point Laplacian with zero ring on the face centres of `Σ`, diagonalised exactly by
/// tensor sines.
pub fn build_boundary_norm(grid: &Grid, patch: &Patch, cap: usize) -> Result<BoundaryNorm> {
    let h = grid.h;
    for (a, v) in [(0usize, patch.x[0]), (1, patch.y[0])] {
        let t = (v - grid.origin[a]) / h;
        if (t - t.round()).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(Error::Cauchy("Σ is not aligned with the grid".into()));
        }
    }
    let nx = steps(patch.x[1] - patch.x[0], h, "Σ width in x")?;
    let ny = steps(patch.y[1] - patch.y[0], h, "Σ width in y")?;
    if nx * ny > cap {
        return Err(Error::Cauchy(format!("Σ has {} nodes, above the dense cap {cap}", nx * ny)));
    }
    let nodes = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| pt(patch.x[0] + (i as f64 + 0.5) * h, patch.y[0] + (j as f64 + 0.5) * h, patch.z)))
        .collect();
    let (sx, lx) = sine_basis(nx);
    let (sy, ly) = sine_basis(ny);
    let eigenvalues = ly.iter().flat_map(|b| lx.iter().map(move |a| (a + b) / (h * h))).collect();
    Ok(BoundaryNorm { spec: NormSpec { patch: *patch, h, dims: [nx, ny] }, nodes, eigenvalues, sx, sy })
}

impl BoundaryNorm {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Area weight of one node.
    pub fn weight(&self) -> f64 {
        self.spec.h * self.spec.h
    }

    fn transform(&self, f: &[Complex64], forward: bool) -> Vec<Complex64> {
        let [nx, ny] = self.spec.dims;
        let part = |im: bool| {
            let m = DMatrix::from_fn(ny, nx, |j, i| if im { f[j * nx + i].im } else { f[j * nx + i].re });
            if forward {
                self.sy.transpose() * m * &self.sx
            } else {
                &self.sy * m * self.sx.transpose()
            }
        };
        let (re, im) = (part(false), part(true));
        (0..ny).flat_map(|j| (0..nx).map(move |i| (j, i))).map(|(j, i)| Complex64::new(re[(j, i)], im[(j, i)])).collect()
    }

    /// Coefficients in the orthonormal eigenbasis.
    pub fn coefficients(&self, f: &[Complex64]) -> Vec<Complex64> {
        self.transform(f, true)
    }

    /// Node values of `Σ c_k v_k` for Euclidean-orthonormal eigenvectors `v_k`.
    pub fn eigenvector_combination(&self, c: &[Complex64]) -> Vec<Complex64> {
        self.transform(c, false)
    }

    /// `(I + Δ_Σ)^s f`.
    pub fn power(&self, s: f64, f: &[Complex64]) -> Vec<Complex64> {
        let mut c = self.transform(f, true);
        for (v, l) in c.iter_mut().zip(&self.eigenvalues) {
            *v *= (1.0 + l).powf(s);
        }
        self.transform(&c, false)
    }

    /// Coordinates whose Euclidean norm is `‖f‖_s`.
    pub fn whiten(&self, s: f64, f: &[Complex64]) -> Vec<Complex64> {
        let w = self.weight().sqrt();
        self.transform(f, true).into_iter().zip(&self.eigenvalues).map(|(c, l)| c * (w * (1.0 + l).powf(0.5 * s))).collect()
    }

    /// `⟨a, b⟩_s`, conjugate-linear in `a`.
    pub fn inner(&self, s: f64, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        let (wa, wb) = (self.whiten(s, a), self.whiten(s, b));
        wa.iter().zip(&wb).map(|(x, y)| x.conj() * y).sum()
    }

    pub fn norm(&self, s: f64, f: &[Complex64]) -> f64 {
        self.whiten(s, f).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `‖(f, g)‖ = (‖f‖²_{1/2} + ‖g‖²_{−1/2})^{1/2}`.
    pub fn pair_norm(&self, p: &CauchyPair) -> f64 {
        (self.norm(0.5, &p.f).powi(2) + self.norm(-0.5, &p.g).powi(2)).sqrt()
    }

    /// Discrete `L²(Σ)` pairing `∫ a b`, bilinear.
    pub fn pairing(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<Complex64>() * self.weight()
    }

    fn whiten_pair(&self, p: &CauchyPair) -> DVector<Complex64> {
        let mut v = self.whiten(0.5, &p.f);
        v.extend(self.whiten(-0.5, &p.g));
        DVector::from_vec(v)
    }

    /// Tensor sine mode `(p, q)` on `Σ`, zero outside.
    pub fn mode(&self, p: usize, q: usize) -> impl Fn(&Point) -> Complex64 + Sync + Send + 'static {
        let pa = self.spec.patch;
        move |x: &Point| {
            let on = pa.contains_lateral(x) && (x[2] - pa.z).abs() <= 1e-9;
            if !on {
                return Complex64::new(0.0, 0.0);
            }
            let sx = (p as f64 * std::f64::consts::PI * (x[0] - pa.x[0]) / (pa.x[1] - pa.x[0])).sin();
            let sy = (q as f64 * std::f64::consts::PI * (x[1] - pa.y[0]) / (pa.y[1] - pa.y[0])).sin();
            Complex64::new(sx * sy, 0.0)
        }
    }

    /// The first `m` sine modes by increasing frequency.
    pub fn mode_order(&self, m: usize) -> Vec<(usize, usize)> {
        let [nx, ny] = self.spec.dims;
        let (lx, ly) = (self.spec.patch.x[1] - self.spec.patch.x[0], self.spec.patch.y[1] - self.spec.patch.y[0]);
        let mut v: Vec<(usize, usize)> = (1..=nx).flat_map(|p| (1..=ny).map(move |q| (p, q))).collect();
        let key = |&(p, q): &(usize, usize)| (p as f64 / lx).powi(2) + (q as f64 / ly).powi(2);
        v.sort_by(|a, b| key(a).total_cmp(&key(b)).then(a.cmp(b)));
        v.truncate(m);
        v
    }
}

/// Dirichlet trace `f` and conormal trace `g` at the nodes of `Σ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchyPair {
    pub f: Vec<Complex64>,
    pub g: Vec<Complex64>,
}

/// Span of sampled Cauchy pairs with an orthonormal basis in whitened coordinates.
#[derive(Clone, Debug)]
pub struct CauchySubspace {
    pub spec: NormSpec,
    /// `2|Σ| × M`, orthonormal columns.
    pub basis: DMatrix<Complex64>,
    pub modes: Vec<(usize, usize)>,
    pub pairs: Vec<CauchyPair>,
    /// Modes whose Dirichlet solve failed.
    pub skipped: Vec<(usize, usize)>,
    /// Modes whose Dirichlet solve converged with a warning.
    pub warnings: Vec<((usize, usize), String)>,
    /// Condition number of the Gram matrix of the column-normalised raw pairs.
    pub gram_condition: f64,
}

/// Modified Gram–Schmidt with one reorthogonalisation pass.
fn orthonormalize(mut a: DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    for j in 0..a.ncols() {
        for _ in 0..2 {
            for i in 0..j {
                let qi = a.column(i).clone_owned();
                let r = qi.dotc(&a.column(j));
                let mut cj = a.column_mut(j);
                cj.axpy(-r, &qi, Complex64::new(1.0, 0.0));
            }
        }
        let n = a.column(j).norm();
        if !(n > 0.0) {
            return Err(Error::Cauchy("linearly dependent Cauchy pairs".into()));
        }
        a.column_mut(j).unscale_mut(n);
    }
    Ok(a)
}

fn gram_condition(a: &DMatrix<Complex64>) -> f64 {
    let mut b = a.clone();
    for mut c in b.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c.unscale_mut(n);
        }
    }
    let g = b.adjoint() * &b;
    let ev = g.symmetric_eigenvalues();
    let (lo, hi) = ev.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

impl CauchySubspace {
    /// Orthonormalise sampled pairs, dropping trailing pairs while the raw Gram
    /// condition number exceeds `cap`.
    pub fn from_pairs(norm: &BoundaryNorm, modes: Vec<(usize, usize)>, pairs: Vec<CauchyPair>, cap: f64) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Cauchy("no Cauchy pairs".into()));
        }
        let mut modes = modes;
        let mut pairs = pairs;
        loop {
            let cols: Vec<DVector<Complex64>> = pairs.iter().map(|p| norm.whiten_pair(p)).collect();
            let raw = DMatrix::from_columns(&cols);
            let cond = gram_condition(&raw);
            if cond > cap && pairs.len() > 1 {
                log::warn!("Gram condition {cond:.3e} above {cap:.1e}, dropping mode {:?}", modes.last());
                pairs.pop();
                modes.pop();
                continue;
            }
            let basis = orthonormalize(raw)?;
            let sub = CauchySubspace { spec: norm.spec, basis, modes, pairs, skipped: Vec::new(), warnings: Vec::new(), gram_condition: cond };
            let dev = sub.gram_deviation();
            if dev > 1e-10 {
                return Err(Error::Cauchy(format!("orthonormalisation lost accuracy: Gram deviation {dev:.2e}")));
            }
            return Ok(sub);
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `max |QᴴQ − I|`.
    pub fn gram_deviation(&self) -> f64 {
        let g = self.basis.adjoint() * &self.basis;
        let mut m = 0.0f64;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let e = if i == j { 1.0 } else { 0.0 };
                m = m.max((g[(i, j)] - e).norm());
            }
        }
        m
    }

    /// Binary matrix dump (`LSCS`, version, rows, cols, complex `f64` pairs column-major)
    /// and a JSON sidecar at `path.json`.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(b"LSCS")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.basis.nrows() as u32).to_le_bytes())?;
        w.write_all(&(self.basis.ncols() as u32).to_le_bytes())?;
        for v in self.basis.iter() {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        w.flush()?;
        let side = SubspaceSidecar { m: self.dim(), sigma_dims: self.spec.dims, norm: self.spec, modes: self.modes.clone(), skipped: self.skipped.clone(), gram_condition: self.gram_condition };
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let side: SubspaceSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if &b4 != b"LSCS" {
            return Err(Error::Cauchy("not a subspace dump".into()));
        }
        r.read_exact(&mut b4)?;
        let mut u32s = [0usize; 2];
        for v in u32s.iter_mut() {
            r.read_exact(&mut b4)?;
            *v = u32::from_le_bytes(b4) as usize;
        }
        let mut b8 = [0u8; 8];
        let mut vals = Vec::with_capacity(u32s[0] * u32s[1]);
        for _ in 0..u32s[0] * u32s[1] {
            r.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            r.read_exact(&mut b8)?;
            vals.push(Complex64::new(re, f64::from_le_bytes(b8)));
        }
        Ok(CauchySubspace {
            spec: side.norm,
            basis: DMatrix::from_vec(u32s[0], u32s[1], vals),
            modes: side.modes,
            pairs: Vec::new(),
            skipped: side.skipped,
            warnings: Vec::new(),
            gram_condition: side.gram_condition,
        })
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceSidecar {
    pub m: usize,
    pub sigma_dims: [usize; 2],
    pub norm: NormSpec,
    pub modes: Vec<(usize, usize)>,
    pub skipped: Vec<(usize, usize)>,
    pub gram_condition: f64,
}

/// Dirichlet operator on `Ω` carrying data on `Σ`.
pub fn cauchy_operator(pair: &CoefficientPair, grid: Arc<Grid>, norm: &BoundaryNorm) -> Result<DiscreteOperator> {
    assemble(pair, grid, BoundarySpec::CauchyDirichlet, Some(norm.spec.patch))
}

/// Solve the Dirichlet problem for boundary data `f` and return the solution with its Cauchy pair.
pub fn cauchy_datum(
    op: &DiscreteOperator,
    pair: &CoefficientPair,
    norm: &BoundaryNorm,
    f: &(dyn Fn(&Point) -> Complex64 + Sync),
) -> Result<(GridField, CauchyPair, Option<String>)> {
    let sol = solve_dirichlet(op, f)?;
    let trace = conormal_trace(&sol.field, f, pair, &norm.spec.patch)?;
    if trace.len() != norm.len() {
        return Err(Error::Cauchy(format!("trace has {} nodes, Σ has {}", trace.len(), norm.len())));
    }
    let fv = norm.nodes.iter().map(f).collect();
    let gv = trace.into_iter().map(|(_, t)| t).collect();
    Ok((sol.field, CauchyPair { f: fv, g: gv }, sol.warning.map(|w| w.to_string())))
}

/// Sample `m` Cauchy pairs from sine-mode Dirichlet data and orthonormalise them.
pub fn sample_cauchy_space(pair: &CoefficientPair, grid: Arc<Grid>, norm: &BoundaryNorm, m: usize) -> Result<CauchySubspace> {
    sample_cauchy_space_with(pair, grid, norm, m, GRAM_CONDITION_CAP)
}

pub fn sample_cauchy_space_with(pair: &CoefficientPair, grid: Arc<Grid>, norm: &BoundaryNorm, m: usize, cap: f64) -> Result<CauchySubspace> {
    if m == 0 {
        return Err(Error::Cauchy("basis size M must be positive".into()));
    }
    if m > norm.len() {
        return Err(Error::Cauchy(format!("M = {m} exceeds the {} nodes of Σ", norm.len())));
    }
    let op = cauchy_operator(pair, grid, norm)?;
    let modes = norm.mode_order(m);
    let results: Vec<_> = modes
        .par_iter()
        .map(|&(p, q)| {
            let f = norm.mode(p, q);
            cauchy_datum(&op, pair, norm, &f)
        })
        .collect();
    let mut kept = Vec::new();
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    let mut warnings = Vec::new();
    for (mode, r) in modes.into_iter().zip(results) {
        match r {
            Ok((_, cp, w)) => {
                if let Some(w) = w {
                    log::warn!("mode {mode:?}: {w}");
                    warnings.push((mode, w));
                }
                kept.push(mode);
                pairs.push(cp);
            }
            Err(e) => {
                log::warn!("mode {mode:?} skipped: {e}");
                skipped.push(mode);
            }
        }
    }
    let mut sub = CauchySubspace::from_pairs(norm, kept, pairs, cap)?;
    sub.skipped = skipped;
    sub.warnings = warnings;
    Ok(sub)
}

/// Largest singular value of `(I − Q₁Q₁ᴴ) Q₂` for orthonormal `Q₁`, `Q₂`.
pub fn gap(q1: &DMatrix<Complex64>, q2: &DMatrix<Complex64>) -> f64 {
    if q2.ncols() == 0 {
        return 0.0;
    }
    let r = q2 - q1 * (q1.adjoint() * q2);
    let sv = r.singular_values();
    sv.iter().cloned().fold(0.0, f64::max).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceDistance {
    /// `sup` over unit `h ∈ C₂` of the distance to `C₁`.
    pub one_sided: f64,
    /// `sup` over unit `h ∈ C₁` of the distance to `C₂`.
    pub reverse: f64,
    pub symmetric: f64,
}

pub fn subspace_distance(c1: &CauchySubspace, c2: &CauchySubspace) -> Result<SubspaceDistance> {
    if c1.spec != c2.spec || c1.basis.nrows() != c2.basis.nrows() {
        return Err(Error::Cauchy("subspaces use different boundary norms".into()));
    }
    let one_sided = gap(&c1.basis, &c2.basis);
    let reverse = gap(&c2.basis, &c1.basis);
    Ok(SubspaceDistance { one_sided, reverse, symmetric: one_sided.max(reverse) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlessandriniGap {
    /// Discrete `∫_Ω (σ₁−σ₂)∇u₁·∇u₂ + (q₂−q₁)u₁u₂`.
    pub volume: Complex64,
    /// `∫_Σ σ₁∇u₁·ν u₂ − σ₂∇u₂·ν u₁`.
    pub boundary: Complex64,
    /// `d ‖(u₁, σ₁∇u₁·ν)‖ ‖(u₂, σ₂∇u₂·ν)‖`.
    pub bound: f64,
    pub norm1: f64,
    pub norm2: f64,
    /// The left side exceeds the bound beyond round-off.
    pub violated: bool,
}

impl AlessandriniGap {
    pub fn ratio(&self) -> f64 {
        self.volume.norm() / self.bound
    }
}

/// Both sides of `|∫(σ₁−σ₂)∇u₁·∇u₂ + (q₂−q₁)u₁u₂| ≤ d ‖(u₁,σ₁∂_νu₁)‖ ‖(u₂,σ₂∂_νu₂)‖`
/// for Dirichlet solutions `u₁` (operator `op1`, data `f1`) and `u₂` (`op2`, `f2`).
#[allow(clippy::too_many_arguments)]
pub fn alessandrini_gap(
    norm: &BoundaryNorm,
    pair1: &CoefficientPair,
    op1: &DiscreteOperator,
    u1: &GridField,
    f1: &(dyn Fn(&Point) -> Complex64 + Sync),
    pair2: &CoefficientPair,
    op2: &DiscreteOperator,
    u2: &GridField,
    f2: &(dyn Fn(&Point) -> Complex64 + Sync),
    d: f64,
) -> Result<AlessandriniGap> {
    let t1 = conormal_trace(u1, f1, pair1, &norm.spec.patch)?;
    let t2 = conormal_trace(u2, f2, pair2, &norm.spec.patch)?;
    let c1 = CauchyPair { f: norm.nodes.iter().map(f1).collect(), g: t1.into_iter().map(|x| x.1).collect() };
    let c2 = CauchyPair { f: norm.nodes.iter().map(f2).collect(), g: t2.into_iter().map(|x| x.1).collect() };
    let volume = form_difference(op1, op2, u1, u2, &|_| true, f1, f2)?;
    let boundary = norm.pairing(&c1.g, &c2.f) - norm.pairing(&c2.g, &c1.f);
    let (norm1, norm2) = (norm.pair_norm(&c1), norm.pair_norm(&c2));
    let bound = d * norm1 * norm2;
    let violated = volume.norm() > bound * (1.0 + 1e-8) + 1e-9 * norm1 * norm2;
    if violated {
        log::warn!("Alessandrini inequality violated: |lhs| = {:.3e} > {bound:.3e}", volume.norm());
    }
    Ok(AlessandriniGap { volume, boundary, bound, norm1, norm2, violated })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlessandriniIdentity {
    /// Midpoint rule for `∫_Ω (σ₁−σ₂)∇u₁·∇u₂ + (q₂−q₁)u₁u₂` with in-region gradients.
    pub quadrature: Complex64,
    /// The same integral in the scheme's own discrete form.
    pub discrete: Complex64,
    /// `∫_Σ σ₁∇u₁·ν u₂ − σ₂∇u₂·ν u₁`.
    pub boundary: Complex64,
    /// `|quadrature − boundary| / |boundary|`.
    pub residual: f64,
    /// `|discrete − boundary| / |boundary|`.
    pub discrete_residual: f64,
}

/// Both sides of the Alessandrini identity for the boundary mode `(p, q)` on Σ = bottom face,
/// solved for both pairs on an `n`-cell grid of `Ω`.
pub fn alessandrini_identity(pair1: &CoefficientPair, pair2: &CoefficientPair, n: usize, mode: (usize, usize)) -> Result<AlessandriniIdentity> {
    if !pair1.same_partition(pair2) {
        return Err(Error::Cauchy("pairs live on different partitions".into()));
    }
    let grid = Arc::new(Grid::for_omega(&pair1.partition, n)?);
    let norm = build_boundary_norm(&grid, &Patch::bottom_face(&pair1.partition.domain), NODE_CAP)?;
    let f = norm.mode(mode.0, mode.1);
    let op1 = cauchy_operator(pair1, grid.clone(), &norm)?;
    let op2 = cauchy_operator(pair2, grid, &norm)?;
    let (u1, c1, _) = cauchy_datum(&op1, pair1, &norm, &f)?;
    let (u2, c2, _) = cauchy_datum(&op2, pair2, &norm, &f)?;
    let boundary = norm.pairing(&c1.g, &c2.f) - norm.pairing(&c2.g, &c1.f);
    let discrete = form_difference(&op1, &op2, &u1, &u2, &|_| true, &f, &f)?;
    let quadrature = crate::singular::volume_form(pair1, pair2, &u1, &u2, &|_| true, &[])?;
    let scale = boundary.norm();
    if scale == 0.0 {
        return Err(Error::Cauchy("the boundary side vanishes; the pairs are indistinguishable by this datum".into()));
    }
    Ok(AlessandriniIdentity {
        quadrature,
        discrete,
        boundary,
        residual: (quadrature - boundary).norm() / scale,
        discrete_residual: (discrete - boundary).norm() / scale,
    })
}
