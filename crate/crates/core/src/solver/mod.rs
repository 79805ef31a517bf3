//! Cell-centred finite volumes for `div(σ∇u) + qu` on `Ω` or `Ω₀`, complex Robin Green
//! solves, Dirichlet solves for Cauchy data, traces and source-point derivatives.

pub mod banded;
pub mod io;
pub mod krylov;

pub use krylov::{Csr, Field, KrylovOptions, SolveWarning};

use crate::coefficients::CoefficientPair;
use crate::geometry::{AugmentedDomain, Patch, SlabPartition};
use crate::{pt, Complex64, Error, Point, Result};
use banded::BandedLu;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::{Arc, OnceLock};

/// Systems up to this many unknowns are factored directly.
pub const DIRECT_MAX: usize = 3000;

const ALIGN_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: Point,
    pub dims: [usize; 3],
    pub h: f64,
    /// Region per cell: `0` for `D₀`, `j` for `D_j`, `-1` outside the computational domain.
    pub region: Vec<i32>,
    /// Unknown number per cell, `u32::MAX` when inactive.
    pub unknown: Vec<u32>,
    /// Cell index per unknown.
    pub cells: Vec<usize>,
}

fn aligned(v: f64, origin: f64, h: f64) -> bool {
    let t = (v - origin) / h;
    (t - t.round()).abs() <= ALIGN_TOL * t.abs().max(1.0)
}

fn count(len: f64, h: f64, what: &str) -> Result<usize> {
    let t = len / h;
    if (t - t.round()).abs() > ALIGN_TOL * t.max(1.0) || t.round() < 1.0 {
        return Err(Error::Grid(format!("{what} of length {len} is not a multiple of h = {h}")));
    }
    Ok(t.round() as usize)
}

impl Grid {
    fn build(lo: Point, hi: Point, h: f64, region: impl Fn(&Point) -> Option<usize>) -> Result<Grid> {
        let dims = [count(hi[0] - lo[0], h, "x extent")?, count(hi[1] - lo[1], h, "y extent")?, count(hi[2] - lo[2], h, "z extent")?];
        let total = dims[0] * dims[1] * dims[2];
        let mut g = Grid { origin: lo, dims, h, region: vec![-1; total], unknown: vec![u32::MAX; total], cells: Vec::new() };
        for c in 0..total {
            let p = g.center(c);
            if let Some(r) = region(&p) {
                g.region[c] = r as i32;
                g.unknown[c] = g.cells.len() as u32;
                g.cells.push(c);
            }
        }
        Ok(g)
    }

    /// Grid on `Ω` with `n` cells across the x extent.
    pub fn for_omega(partition: &SlabPartition, n: usize) -> Result<Grid> {
        let d = &partition.domain;
        let h = d.extent(0) / n as f64;
        for c in &partition.cuts {
            if !aligned(*c, d.lower[2], h) {
                return Err(Error::Grid(format!("interface z = {c} is not on a grid plane (h = {h})")));
            }
        }
        Grid::build(d.lower, d.upper, h, |p| Some(partition.slab_of(p[2])))
    }

    /// Grid on `Ω₀ = Ω ∪ D₀` with `n` cells across the x extent of `Ω`.
    pub fn for_augmented(aug: &AugmentedDomain, n: usize) -> Result<Grid> {
        let d = aug.domain();
        let h = d.extent(0) / n as f64;
        let part = &aug.partition;
        let mut planes: Vec<(f64, f64, &str)> = part.cuts.iter().map(|c| (*c, d.lower[2], "interface")).collect();
        let (blo, bhi) = aug.bounding_box();
        planes.push((aug.sigma.x[0], blo[0], "Σ x edge"));
        planes.push((aug.sigma.x[1], blo[0], "Σ x edge"));
        planes.push((aug.sigma.y[0], blo[1], "Σ y edge"));
        planes.push((aug.sigma.y[1], blo[1], "Σ y edge"));
        planes.push((aug.sigma0.x[0], blo[0], "Σ0 x edge"));
        planes.push((aug.sigma0.x[1], blo[0], "Σ0 x edge"));
        planes.push((aug.sigma0.y[0], blo[1], "Σ0 y edge"));
        planes.push((aug.sigma0.y[1], blo[1], "Σ0 y edge"));
        planes.push((d.lower[2], blo[2], "D0 depth"));
        for (v, o, what) in planes {
            if !aligned(v, o, h) {
                return Err(Error::Grid(format!("{what} at {v} is not on a grid plane (h = {h})")));
            }
        }
        Grid::build(blo, bhi, h, |p| aug.region_of(p))
    }

    pub fn n_cells(&self) -> usize {
        self.region.len()
    }

    pub fn n_unknowns(&self) -> usize {
        self.cells.len()
    }

    pub fn lin(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn ijk(&self, c: usize) -> [usize; 3] {
        let i = c % self.dims[0];
        let r = c / self.dims[0];
        [i, r % self.dims[1], r / self.dims[1]]
    }

    pub fn center(&self, c: usize) -> Point {
        let [i, j, k] = self.ijk(c);
        self.center_ijk(i, j, k)
    }

    pub fn center_ijk(&self, i: usize, j: usize, k: usize) -> Point {
        let h = self.h;
        pt(self.origin[0] + (i as f64 + 0.5) * h, self.origin[1] + (j as f64 + 0.5) * h, self.origin[2] + (k as f64 + 0.5) * h)
    }

    /// Cell containing `p`, if inside the grid box.
    pub fn cell_of(&self, p: &Point) -> Option<usize> {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let t = ((p[a] - self.origin[a]) / self.h).floor();
            if t < 0.0 || t >= self.dims[a] as f64 {
                return None;
            }
            idx[a] = t as usize;
        }
        Some(self.lin(idx[0], idx[1], idx[2]))
    }

    pub fn active(&self, c: usize) -> bool {
        self.unknown[c] != u32::MAX
    }

    /// Neighbour of cell `c` along `axis` in direction `dir` (±1), inside the grid box.
    pub fn neighbor(&self, c: usize, axis: usize, dir: i32) -> Option<usize> {
        let mut ijk = self.ijk(c);
        let v = ijk[axis] as i64 + dir as i64;
        if v < 0 || v >= self.dims[axis] as i64 {
            return None;
        }
        ijk[axis] = v as usize;
        Some(self.lin(ijk[0], ijk[1], ijk[2]))
    }

    pub fn active_neighbor(&self, c: usize, axis: usize, dir: i32) -> Option<usize> {
        self.neighbor(c, axis, dir).filter(|&n| self.active(n))
    }

    /// Nearest active cell centre to `p`.
    pub fn snap(&self, p: &Point) -> Option<Point> {
        let c = self.cell_of(p)?;
        self.active(c).then(|| self.center(c))
    }

    pub fn is_center(&self, p: &Point) -> bool {
        self.cell_of(p).map(|c| (self.center(c) - *p).max_abs() <= 1e-9 * self.h).unwrap_or(false)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySpec {
    /// Green system on `Ω₀`: Robin on `Σ₀`, homogeneous Dirichlet elsewhere.
    GreenRobin,
    /// Homogeneous Dirichlet on the whole boundary of `Ω`.
    GreenDirichlet,
    /// Dirichlet data on `Σ`, zero on `∂Ω \ Σ`.
    CauchyDirichlet,
    /// Dirichlet data on the whole boundary of `Ω`.
    DirichletAll,
}

/// A boundary face carrying a Dirichlet condition through a ghost value at distance `h/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirichletFace {
    pub row: usize,
    pub center: Point,
    /// `2 σ_aa / h²`, the weight of the boundary value in the row.
    pub coef: f64,
    /// Whether the face takes user data (otherwise it is homogeneous).
    pub data: bool,
}

pub struct DiscreteOperator {
    pub grid: Arc<Grid>,
    pub matrix: Csr<Complex64>,
    pub real: bool,
    pub bc: BoundarySpec,
    pub faces: Vec<DirichletFace>,
    pub sigma: Option<Patch>,
    pub options: KrylovOptions,
    lu: OnceLock<std::result::Result<BandedLu<Complex64>, SolveWarning>>,
}

impl std::fmt::Debug for DiscreteOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteOperator")
            .field("dims", &self.grid.dims)
            .field("h", &self.grid.h)
            .field("unknowns", &self.matrix.n)
            .field("bc", &self.bc)
            .finish()
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Assemble `div(σ∇·) + q` with the given boundary tags.
///
/// `GreenRobin` needs a grid from [`Grid::for_augmented`] and a pair extended to `D₀`;
/// the other tags use [`Grid::for_omega`]. `sigma` selects the data-carrying faces for
/// `CauchyDirichlet`.
pub fn assemble(pair: &CoefficientPair, grid: Arc<Grid>, bc: BoundarySpec, sigma: Option<Patch>) -> Result<DiscreteOperator> {
    let robin = bc == BoundarySpec::GreenRobin;
    let aug = pair.extension.clone();
    if robin && aug.is_none() {
        return Err(Error::Grid("the Robin Green system needs the pair extended to D0".into()));
    }
    if !robin && grid.region.iter().any(|&r| r == 0) {
        return Err(Error::Grid("non-Robin systems live on Ω, not Ω0".into()));
    }
    if bc == BoundarySpec::CauchyDirichlet && sigma.is_none() {
        return Err(Error::Grid("Cauchy solves need the patch Σ".into()));
    }
    let h = grid.h;
    let h2 = h * h;
    let n = grid.n_unknowns();
    let region = |c: usize| grid.region[c] as usize;
    let gam: Vec<f64> = grid.cells.iter().map(|&c| pair.gamma_in(region(c), &grid.center(c))).collect();
    let amat: Vec<_> = grid.cells.iter().map(|&c| pair.matrix_in(region(c), &grid.center(c))).collect();
    let qv: Vec<f64> = grid.cells.iter().map(|&c| pair.q_in(region(c), &grid.center(c))).collect();
    let bottom = grid.origin[2];
    let omega_bottom = pair.partition.domain.lower[2];
    let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::with_capacity(7); n];
    let mut faces = Vec::new();
    for (u, &c) in grid.cells.iter().enumerate() {
        let row = &mut rows[u];
        let mut diag = Complex64::new(qv[u], 0.0);
        for axis in 0..3 {
            for dir in [-1i32, 1] {
                match grid.active_neighbor(c, axis, dir) {
                    Some(nc) => {
                        let v = grid.unknown[nc] as usize;
                        let coef = harmonic(gam[u], gam[v]) * 0.5 * (amat[u].0[axis][axis] + amat[v].0[axis][axis]) / h2;
                        row.push((v, Complex64::new(coef, 0.0)));
                        diag -= coef;
                    }
                    None => {
                        let mut fc = grid.center(c);
                        fc[axis] += dir as f64 * 0.5 * h;
                        let s = gam[u] * amat[u].0[axis][axis];
                        let on_sigma0 = robin
                            && axis == 2
                            && dir == -1
                            && (fc[2] - bottom).abs() <= 1e-9 * h.max(1.0)
                            && aug.as_ref().unwrap().sigma0.contains_lateral(&fc);
                        if on_sigma0 {
                            let k = Complex64::new(2.0 * s / h, 0.0);
                            let theta = k / (k + Complex64::i());
                            diag -= Complex64::i() * theta / h;
                        } else {
                            let coef = 2.0 * s / h2;
                            diag -= coef;
                            let data = match bc {
                                BoundarySpec::DirichletAll => true,
                                BoundarySpec::CauchyDirichlet => {
                                    axis == 2
                                        && dir == -1
                                        && (fc[2] - omega_bottom).abs() <= 1e-9 * h.max(1.0)
                                        && sigma.as_ref().unwrap().contains_lateral(&fc)
                                }
                                _ => false,
                            };
                            faces.push(DirichletFace { row: u, center: fc, coef, data });
                        }
                    }
                }
            }
        }
        row.push((u, diag));
    }
    // Off-diagonal anisotropy through a symmetric energy form on 2×2 cell blocks.
    if !pair.matrix.is_diagonal() {
        let wa = [-1.0, 1.0, -1.0, 1.0];
        let wb = [-1.0, -1.0, 1.0, 1.0];
        for (a, b) in [(0usize, 1usize), (0, 2), (1, 2)] {
            for (u, &c) in grid.cells.iter().enumerate() {
                let Some(ca) = grid.active_neighbor(c, a, 1) else { continue };
                let Some(cb) = grid.active_neighbor(c, b, 1) else { continue };
                let Some(cab) = grid.active_neighbor(ca, b, 1) else { continue };
                let idx = [u, grid.unknown[ca] as usize, grid.unknown[cb] as usize, grid.unknown[cab] as usize];
                let s: f64 = idx.iter().map(|&v| gam[v] * amat[v].0[a][b]).sum::<f64>() / 4.0;
                if s == 0.0 {
                    continue;
                }
                for d in 0..4 {
                    for e in 0..4 {
                        let w = -s * (wa[e] * wb[d] + wb[e] * wa[d]) / (4.0 * h2);
                        if w != 0.0 {
                            rows[idx[d]].push((idx[e], Complex64::new(w, 0.0)));
                        }
                    }
                }
            }
        }
    }
    let matrix = Csr::from_rows(rows);
    let real = matrix.val.iter().all(|v| v.im == 0.0);
    Ok(DiscreteOperator { grid, matrix, real, bc, faces, sigma, options: KrylovOptions::default(), lu: OnceLock::new() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOutcome {
    pub x: Vec<Complex64>,
    pub iterations: usize,
    pub residual: f64,
    /// Set when the real operator was found indefinite but a general solver still converged.
    pub warning: Option<SolveWarning>,
}

impl DiscreteOperator {
    pub fn with_options(mut self, options: KrylovOptions) -> Self {
        self.options = options;
        self
    }

    pub fn n(&self) -> usize {
        self.matrix.n
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.matrix.apply(x)
    }

    fn direct(&self) -> std::result::Result<&BandedLu<Complex64>, SolveWarning> {
        self.lu.get_or_init(|| BandedLu::factor(&self.matrix)).as_ref().map_err(|e| e.clone())
    }

    /// Solve `A x = b`: banded LU on small systems, CG on the negated real operator,
    /// TFQMR for complex systems or when CG detects indefiniteness.
    pub fn solve(&self, b: &[Complex64]) -> std::result::Result<SolveOutcome, SolveWarning> {
        let bn = krylov::norm(b);
        if bn == 0.0 {
            return Ok(SolveOutcome { x: vec![Complex64::new(0.0, 0.0); self.n()], iterations: 0, residual: 0.0, warning: None });
        }
        if self.n() <= DIRECT_MAX {
            let x = self.direct()?.solve(b);
            let residual = self.matrix.residual_norm(&x, b) / bn;
            return Ok(SolveOutcome { x, iterations: 0, residual, warning: None });
        }
        if self.real {
            let neg = self.matrix.map(|v| -v.re);
            let parts = [b.iter().map(|v| -v.re).collect::<Vec<_>>(), b.iter().map(|v| -v.im).collect::<Vec<_>>()];
            let mut xs = Vec::new();
            let mut iters = 0;
            let mut indefinite = None;
            for p in &parts {
                if p.iter().all(|v| *v == 0.0) {
                    xs.push(vec![0.0; self.n()]);
                    continue;
                }
                match krylov::cg(&neg, p, &self.options) {
                    Ok(r) => {
                        iters += r.iterations;
                        xs.push(r.x);
                    }
                    Err(w @ SolveWarning::Indefinite { .. }) => {
                        indefinite = Some(w);
                        break;
                    }
                    Err(w) => return Err(w),
                }
            }
            if indefinite.is_none() {
                let x: Vec<Complex64> = xs[0].iter().zip(&xs[1]).map(|(r, i)| Complex64::new(*r, *i)).collect();
                let residual = self.matrix.residual_norm(&x, b) / bn;
                return Ok(SolveOutcome { x, iterations: iters, residual, warning: None });
            }
            log::warn!("real operator is indefinite, falling back to TFQMR");
            let r = krylov::tfqmr(&self.matrix, b, &self.options)?;
            return Ok(SolveOutcome { x: r.x, iterations: r.iterations, residual: r.residual, warning: indefinite });
        }
        let r = krylov::tfqmr(&self.matrix, b, &self.options)?;
        Ok(SolveOutcome { x: r.x, iterations: r.iterations, residual: r.residual, warning: None })
    }
}

/// Complex values on the active cells of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub grid: Arc<Grid>,
    pub values: Vec<Complex64>,
}

impl GridField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.n_unknowns();
        GridField { grid, values: vec![Complex64::new(0.0, 0.0); n] }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&Point) -> Complex64) -> Self {
        let values = grid.cells.iter().map(|&c| f(&grid.center(c))).collect();
        GridField { grid, values }
    }

    pub fn at_cell(&self, c: usize) -> Option<Complex64> {
        let u = self.grid.unknown[c];
        (u != u32::MAX).then(|| self.values[u as usize])
    }

    /// Value at the cell containing `p`.
    pub fn at(&self, p: &Point) -> Option<Complex64> {
        self.grid.cell_of(p).and_then(|c| self.at_cell(c))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn sub(&self, o: &Self) -> Self {
        GridField { grid: self.grid.clone(), values: self.values.iter().zip(&o.values).map(|(a, b)| a - b).collect() }
    }

    pub fn scale(&self, s: f64) -> Self {
        GridField { grid: self.grid.clone(), values: self.values.iter().map(|a| a * s).collect() }
    }

    /// Central-difference gradient at each active cell, one-sided next to missing neighbours.
    pub fn cell_gradient(&self) -> Vec<[Complex64; 3]> {
        let g = &self.grid;
        let h = g.h;
        g.cells
            .iter()
            .enumerate()
            .map(|(u, &c)| {
                let mut out = [Complex64::new(0.0, 0.0); 3];
                for (a, o) in out.iter_mut().enumerate() {
                    let up = g.active_neighbor(c, a, 1).map(|n| self.values[g.unknown[n] as usize]);
                    let dn = g.active_neighbor(c, a, -1).map(|n| self.values[g.unknown[n] as usize]);
                    *o = match (up, dn) {
                        (Some(p), Some(m)) => (p - m) / (2.0 * h),
                        (Some(p), None) => (p - self.values[u]) / h,
                        (None, Some(m)) => (self.values[u] - m) / h,
                        (None, None) => Complex64::new(0.0, 0.0),
                    };
                }
                out
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteGreenField {
    pub source: Point,
    pub field: GridField,
    pub iterations: usize,
    pub residual: f64,
}

impl DiscreteGreenField {
    pub fn h(&self) -> f64 {
        self.field.grid.h
    }

    /// `max |G(x,y)| |x − y|` over active cells with `|x − y| ≥ 4h`.
    pub fn green_bound(&self) -> f64 {
        let g = &self.field.grid;
        g.cells
            .iter()
            .enumerate()
            .filter_map(|(u, &c)| {
                let r = (g.center(c) - self.source).norm();
                (r >= 4.0 * g.h - 1e-12).then(|| self.field.values[u].norm() * r)
            })
            .fold(0.0, f64::max)
    }
}

/// Solve `A G = −δ_h(y)` with `δ_h = 1/h³` at the source cell.
pub fn solve_green(op: &DiscreteOperator, y: &Point) -> Result<DiscreteGreenField> {
    let g = &op.grid;
    if !g.is_center(y) {
        return Err(Error::Grid(format!("source {:?} is not a cell centre", y.0)));
    }
    let c = g.cell_of(y).unwrap();
    if !g.active(c) {
        return Err(Error::Grid(format!("source {:?} is outside the domain", y.0)));
    }
    let mut b = vec![Complex64::new(0.0, 0.0); op.n()];
    b[g.unknown[c] as usize] = Complex64::new(-1.0 / g.h.powi(3), 0.0);
    let out = op.solve(&b)?;
    if let Some(w) = &out.warning {
        log::warn!("Green solve at {:?}: {w}", y.0);
    }
    Ok(DiscreteGreenField { source: *y, field: GridField { grid: g.clone(), values: out.x }, iterations: out.iterations, residual: out.residual })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirichletSolution {
    pub field: GridField,
    pub warning: Option<SolveWarning>,
    pub iterations: usize,
}

/// Solve the homogeneous equation with Dirichlet data `f` on the data-carrying faces.
pub fn solve_dirichlet(op: &DiscreteOperator, f: &(dyn Fn(&Point) -> Complex64 + Sync)) -> std::result::Result<DirichletSolution, SolveWarning> {
    let mut b = vec![Complex64::new(0.0, 0.0); op.n()];
    for face in op.faces.iter().filter(|f| f.data) {
        b[face.row] -= f(&face.center) * face.coef;
    }
    let out = op.solve(&b)?;
    Ok(DirichletSolution { field: GridField { grid: op.grid.clone(), values: out.x }, warning: out.warning, iterations: out.iterations })
}

/// Normal-derivative rule used by [`conormal_trace`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceScheme {
    /// `2(g − u₁)/h`, the boundary flux of the finite-volume scheme itself.
    #[default]
    Flux,
    /// `(8g − 9u₁ + u₂)/(3h)`, one-sided second order through two cells.
    OneSided,
}

/// Conormal derivative `σ∇u·ν` at the face centres of a horizontal boundary patch, with
/// the default [`TraceScheme::Flux`].
pub fn conormal_trace(
    u: &GridField,
    boundary: &(dyn Fn(&Point) -> Complex64 + Sync),
    pair: &CoefficientPair,
    patch: &Patch,
) -> Result<Vec<(Point, Complex64)>> {
    conormal_trace_with(u, boundary, pair, patch, TraceScheme::Flux)
}

/// Conormal derivative with an explicit normal-derivative rule; tangential derivatives
/// come from the boundary data.
pub fn conormal_trace_with(
    u: &GridField,
    boundary: &(dyn Fn(&Point) -> Complex64 + Sync),
    pair: &CoefficientPair,
    patch: &Patch,
    scheme: TraceScheme,
) -> Result<Vec<(Point, Complex64)>> {
    let g = &u.grid;
    let h = g.h;
    let d = &pair.partition.domain;
    let (nu, k0, step): (f64, usize, i64) = if (patch.z - d.lower[2]).abs() <= 1e-12 {
        (-1.0, ((d.lower[2] - g.origin[2]) / h).round() as usize, 1)
    } else if (patch.z - d.upper[2]).abs() <= 1e-12 {
        (1.0, ((d.upper[2] - g.origin[2]) / h).round() as usize - 1, -1)
    } else {
        return Err(Error::Grid(format!("patch at z = {} is not on ∂Ω", patch.z)));
    };
    let region = if nu < 0.0 { 1 } else { pair.partition.n_slabs() };
    let mut out = Vec::new();
    for j in 0..g.dims[1] {
        for i in 0..g.dims[0] {
            let c1 = g.lin(i, j, k0);
            let mut fc = g.center(c1);
            fc[2] = patch.z;
            if !patch.contains_lateral(&fc) || !g.active(c1) {
                continue;
            }
            let k1 = (k0 as i64 + step) as usize;
            let c2 = g.lin(i, j, k1);
            let (Some(u1), Some(u2)) = (u.at_cell(c1), u.at_cell(c2)) else {
                return Err(Error::Grid("conormal trace needs two active cells below the patch".into()));
            };
            let gb = boundary(&fc);
            let dnu = match scheme {
                TraceScheme::Flux => (gb - u1) * (2.0 / h),
                TraceScheme::OneSided => (gb * 8.0 - u1 * 9.0 + u2) / (3.0 * h),
            };
            let ex = pt(h, 0.0, 0.0);
            let ey = pt(0.0, h, 0.0);
            let dx = (boundary(&(fc + ex)) - boundary(&(fc - ex))) / (2.0 * h);
            let dy = (boundary(&(fc + ey)) - boundary(&(fc - ey))) / (2.0 * h);
            let s = pair.sigma_in(region, &fc);
            // The flux rule takes σ_zz at the cell centre, as the assembled boundary row does.
            let szz = match scheme {
                TraceScheme::Flux => pair.sigma_in(region, &g.center(c1)).0[2][2],
                TraceScheme::OneSided => s.0[2][2],
            };
            // σν has components σ[a][2]·ν.
            let val = dx * (s.0[0][2] * nu) + dy * (s.0[1][2] * nu) + dnu * szz;
            out.push((fc, val));
        }
    }
    Ok(out)
}

/// Discrete form of `∫(σ₁−σ₂)∇u·∇v + (q₂−q₁)uv` over the cells selected by `keep`.
///
/// Computed as `−h³ Σ v_P (A₁−A₂)_{PQ} u_Q` over kept cells. Faces to active cells
/// outside `keep` are removed. Dirichlet faces enter through ghost values `fu`, `fv`.
/// Both operators must live on the same grid with the same boundary tags. The result
/// is exact for the two-point flux part; anisotropic cross terms straddling the cut
/// are not split.
pub fn form_difference(
    op1: &DiscreteOperator,
    op2: &DiscreteOperator,
    u: &GridField,
    v: &GridField,
    keep: &(dyn Fn(usize) -> bool + Sync),
    fu: &(dyn Fn(&Point) -> Complex64 + Sync),
    fv: &(dyn Fn(&Point) -> Complex64 + Sync),
) -> Result<Complex64> {
    let g = &op1.grid;
    if g.as_ref() != op2.grid.as_ref() || op1.faces.len() != op2.faces.len() || op1.bc != op2.bc {
        return Err(Error::Grid("form difference needs operators on one grid".into()));
    }
    let h3 = g.h.powi(3);
    let kept: Vec<bool> = g.cells.iter().map(|&c| keep(c)).collect();
    let z = Complex64::new(0.0, 0.0);
    let mut acc: Complex64 = (0..g.n_unknowns())
        .into_par_iter()
        .filter(|&p| kept[p])
        .map(|p| {
            let mut row = z;
            let mut cut = z;
            let a2: std::collections::HashMap<usize, Complex64> = op2.matrix.row(p).collect();
            let mut cols: Vec<usize> = op1.matrix.row(p).map(|(q, _)| q).collect();
            cols.extend(a2.keys().copied());
            cols.sort_unstable();
            cols.dedup();
            for q in cols {
                let d = op1.matrix.get(p, q) - a2.get(&q).copied().unwrap_or(z);
                if kept[q] {
                    row += d * u.values[q];
                } else {
                    cut += d;
                }
            }
            -(row + cut * u.values[p]) * v.values[p] * h3
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    for (f1, f2) in op1.faces.iter().zip(&op2.faces) {
        if !kept[f1.row] {
            continue;
        }
        let dc = (f1.coef - f2.coef) * h3;
        if dc == 0.0 {
            continue;
        }
        let (a, b) = (fu(&f1.center), fv(&f1.center));
        acc += (a * b - a * v.values[f1.row] - b * u.values[f1.row]) * dc;
    }
    Ok(acc)
}

/// Source-point derivative requested from [`green_source_derivatives`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceDerivative {
    First(usize),
    Second(usize, usize),
}

impl SourceDerivative {
    pub fn order(&self) -> usize {
        match self {
            SourceDerivative::First(_) => 1,
            SourceDerivative::Second(..) => 2,
        }
    }

    /// Shifted sources (in cells) and their weights times `h^order`.
    fn stencil(&self) -> Vec<([i32; 3], f64)> {
        let e = |a: usize, s: i32| {
            let mut v = [0; 3];
            v[a] = s;
            v
        };
        match *self {
            SourceDerivative::First(a) => vec![(e(a, 1), 0.5), (e(a, -1), -0.5)],
            SourceDerivative::Second(a, b) if a == b => vec![(e(a, 1), 1.0), ([0; 3], -2.0), (e(a, -1), 1.0)],
            SourceDerivative::Second(a, b) => {
                let mix = |sa: i32, sb: i32| {
                    let mut v = [0; 3];
                    v[a] = sa;
                    v[b] = sb;
                    v
                };
                vec![(mix(1, 1), 0.25), (mix(1, -1), -0.25), (mix(-1, 1), -0.25), (mix(-1, -1), 0.25)]
            }
        }
    }
}

/// Clearance of `y` (in absolute units) from interfaces and the boundary of `Ω` (or `Ω₀`).
pub fn clearance(pair: &CoefficientPair, y: &Point) -> f64 {
    let d = &pair.partition.domain;
    let mut lo = d.lower;
    let hi = d.upper;
    if let Some(aug) = &pair.extension {
        if aug.in_d0(y) || (y[2] - d.lower[2]).abs() < 1e-12 {
            lo = aug.d0_box().0;
        }
    }
    let mut c = f64::INFINITY;
    for a in 0..3 {
        c = c.min(y[a] - lo[a]).min(hi[a] - y[a]);
    }
    for z in pair.partition.cuts.iter().chain(std::iter::once(&d.lower[2])) {
        c = c.min((y[2] - z).abs());
    }
    c
}

/// Finite differences of Green fields over shifted sources, step `h`. `green` solves for
/// one source; distinct shifts are solved in parallel.
pub fn green_source_derivatives_with<F>(y: &Point, h: f64, derivs: &[SourceDerivative], green: F) -> Result<Vec<GridField>>
where
    F: Fn(&Point) -> Result<GridField> + Sync,
{
    let mut shifts: Vec<[i32; 3]> = derivs.iter().flat_map(|d| d.stencil().into_iter().map(|s| s.0)).collect();
    shifts.sort();
    shifts.dedup();
    let fields: Vec<Result<GridField>> = shifts
        .par_iter()
        .map(|s| green(&(*y + pt(s[0] as f64 * h, s[1] as f64 * h, s[2] as f64 * h))))
        .collect();
    let fields: Vec<GridField> = fields.into_iter().collect::<Result<_>>()?;
    let find = |s: &[i32; 3]| &fields[shifts.binary_search(s).unwrap()];
    Ok(derivs
        .iter()
        .map(|d| {
            let st = d.stencil();
            let base = find(&st[0].0);
            let scale = h.powi(d.order() as i32);
            let mut vals = vec![Complex64::new(0.0, 0.0); base.values.len()];
            for (s, w) in &st {
                for (v, f) in vals.iter_mut().zip(&find(s).values) {
                    *v += f * (*w / scale);
                }
            }
            GridField { grid: base.grid.clone(), values: vals }
        })
        .collect())
}

pub fn green_source_derivatives(op: &DiscreteOperator, pair: &CoefficientPair, y: &Point, derivs: &[SourceDerivative]) -> Result<Vec<GridField>> {
    let order = derivs.iter().map(|d| d.order()).max().unwrap_or(0);
    let h = op.grid.h;
    let cl = clearance(pair, y);
    if cl < (order as f64 + 1.0) * h - 1e-9 * h {
        return Err(Error::Grid(format!("source needs {} cells of clearance, has {:.2}", order + 1, cl / h)));
    }
    green_source_derivatives_with(y, h, derivs, |s| solve_green(op, s).map(|g| g.field))
}
