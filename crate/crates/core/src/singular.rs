//! Singular solutions `S_k(y,z) = ∫_{U_k} (σ₁−σ₂)∇G₁(·,y)·∇G₂(·,z) + (q₂−q₁)G₁G₂`,
//! their source derivatives, and the Green identity tying them to data on `Σ`.
//!
//! Integrals use the midpoint rule on the Green grid. Gradients are central differences
//! taken within one region, so no stencil straddles a coefficient jump.

use crate::cache::GreenProvider;
use crate::fit::LinearFit;
use crate::coefficients::CoefficientPair;
use crate::solver::{form_difference, Grid, GridField, SourceDerivative};
use crate::{Complex64, Error, Point, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Cells per parallel chunk; chunk sums are combined in index order.
const CHUNK: usize = 4096;

/// Clearance in cells from `U_k` required by each derivative order.
pub const CLEARANCE_CELLS: [f64; 3] = [4.0, 5.0, 6.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularEvaluation {
    pub k: usize,
    pub y: Point,
    pub z: Point,
    pub value: Complex64,
    /// `∂_{y_i}∂_{z_j} S_k` when requested.
    pub first: Option<[[Complex64; 3]; 3]>,
    /// `∂²_{y_iy_j}∂²_{z_iz_j} S_k` for the requested `(i, j)`.
    pub second: Vec<((usize, usize), Complex64)>,
}

/// Gradient per active cell from differences inside the cell's own region.
pub fn region_gradient(f: &GridField) -> Vec<[Complex64; 3]> {
    let g = &f.grid;
    let h = g.h;
    let val = |c: usize| f.values[g.unknown[c] as usize];
    let same = |c: usize, a: usize, d: i32| g.active_neighbor(c, a, d).filter(|&n| g.region[n] == g.region[c]);
    g.cells
        .par_iter()
        .map(|&c| {
            let mut out = [Complex64::new(0.0, 0.0); 3];
            for (a, o) in out.iter_mut().enumerate() {
                let u0 = val(c);
                *o = match (same(c, a, 1), same(c, a, -1)) {
                    (Some(p), Some(m)) => (val(p) - val(m)) / (2.0 * h),
                    (Some(p), None) => match same(p, a, 1) {
                        Some(pp) => (val(p) * 4.0 - u0 * 3.0 - val(pp)) / (2.0 * h),
                        None => (val(p) - u0) / h,
                    },
                    (None, Some(m)) => match same(m, a, -1) {
                        Some(mm) => (u0 * 3.0 - val(m) * 4.0 + val(mm)) / (2.0 * h),
                        None => (u0 - val(m)) / h,
                    },
                    (None, None) => Complex64::new(0.0, 0.0),
                };
            }
            out
        })
        .collect()
}

/// Coefficient differences `σ₁−σ₂` and `q₂−q₁` at each active cell.
fn differences(p1: &CoefficientPair, p2: &CoefficientPair, g: &Grid) -> Vec<([[f64; 3]; 3], f64)> {
    g.cells
        .iter()
        .map(|&c| {
            let r = g.region[c] as usize;
            let x = g.center(c);
            let ds = p1.sigma_in(r, &x).sub(&p2.sigma_in(r, &x));
            (ds.0, p2.q_in(r, &x) - p1.q_in(r, &x))
        })
        .collect()
}

/// Midpoint rule for `∫ (σ₁−σ₂)∇f₁·∇f₂ + (q₂−q₁)f₁f₂` over the cells whose region
/// satisfies `select`, skipping cells within `2h` of any point in `exclude`.
pub fn volume_form(
    p1: &CoefficientPair,
    p2: &CoefficientPair,
    f1: &GridField,
    f2: &GridField,
    select: &(dyn Fn(i32) -> bool + Sync),
    exclude: &[Point],
) -> Result<Complex64> {
    let g = &f1.grid;
    if g.as_ref() != f2.grid.as_ref() {
        return Err(Error::Singular("fields live on different grids".into()));
    }
    let d = differences(p1, p2, g);
    let (g1, g2) = (region_gradient(f1), region_gradient(f2));
    let h3 = g.h.powi(3);
    let radius = 2.0 * g.h * (1.0 + 1e-9);
    let n = g.n_unknowns();
    let chunks: Vec<Complex64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|b| {
            let mut acc = Complex64::new(0.0, 0.0);
            for u in b * CHUNK..((b + 1) * CHUNK).min(n) {
                let c = g.cells[u];
                if !select(g.region[c]) {
                    continue;
                }
                let x = g.center(c);
                if exclude.iter().any(|e| (x - *e).norm() <= radius) {
                    continue;
                }
                let (ds, dq) = &d[u];
                let mut s = f1.values[u] * f2.values[u] * *dq;
                for (a, row) in ds.iter().enumerate() {
                    for (b2, &v) in row.iter().enumerate() {
                        if v != 0.0 {
                            s += g1[u][a] * g2[u][b2] * v;
                        }
                    }
                }
                acc += s * h3;
            }
            acc
        })
        .collect();
    Ok(chunks.into_iter().sum())
}

fn same_problem(a: &GreenProvider, b: &GreenProvider) -> Result<()> {
    if a.grid().as_ref() != b.grid().as_ref() || a.pair.extension != b.pair.extension || !a.pair.same_partition(&b.pair) {
        return Err(Error::Singular("the two Green providers use different grids or domains".into()));
    }
    Ok(())
}

/// Top of `W_k`: the `z` where `U_k` begins.
pub fn u_k_floor(pair: &CoefficientPair, k: usize) -> Result<f64> {
    let part = &pair.partition;
    if k >= part.n_slabs() {
        return Err(Error::Singular(format!("U_{k} is empty for N = {}", part.n_slabs())));
    }
    Ok(if k == 0 { part.domain.lower[2] } else { part.slab_z(k).1 })
}

/// Distance from `y` to `U_k`, or an error when `y ∉ W_k`.
pub fn distance_to_u(pair: &CoefficientPair, k: usize, y: &Point) -> Result<f64> {
    let floor = u_k_floor(pair, k)?;
    let r = pair.locate(y).map_err(|_| Error::Singular(format!("source {:?} outside Ω0", y.0)))?;
    if r > k || y[2] >= floor {
        return Err(Error::Singular(format!("source {:?} is not in W_{k}", y.0)));
    }
    Ok(floor - y[2])
}

fn check_clearance(pair: &CoefficientPair, k: usize, h: f64, order: usize, pts: &[&Point]) -> Result<()> {
    let need = CLEARANCE_CELLS[order] * h;
    for y in pts {
        let d = distance_to_u(pair, k, y)?;
        if d < need * (1.0 - 1e-9) {
            return Err(Error::Singular(format!("source {:?} is {:.2} cells from U_{k}, needs {}", y.0, d / h, CLEARANCE_CELLS[order])));
        }
    }
    Ok(())
}

fn in_u(k: usize) -> impl Fn(i32) -> bool + Sync {
    move |r| r > k as i32
}

/// `S_k(y, z)`.
pub fn singular_s(p1: &GreenProvider, p2: &GreenProvider, k: usize, y: &Point, z: &Point) -> Result<Complex64> {
    same_problem(p1, p2)?;
    check_clearance(&p1.pair, k, p1.grid().h, 0, &[y, z])?;
    let (g1, g2) = (p1.green(y)?, p2.green(z)?);
    volume_form(&p1.pair, &p2.pair, &g1, &g2, &in_u(k), &[*y, *z])
}

/// `∂_{y_i}∂_{z_j} S_k(y, z)`.
pub fn singular_ds(p1: &GreenProvider, p2: &GreenProvider, k: usize, y: &Point, z: &Point, i: usize, j: usize) -> Result<Complex64> {
    same_problem(p1, p2)?;
    check_clearance(&p1.pair, k, p1.grid().h, 1, &[y, z])?;
    let d1 = p1.derivative(y, SourceDerivative::First(i))?;
    let d2 = p2.derivative(z, SourceDerivative::First(j))?;
    volume_form(&p1.pair, &p2.pair, &d1, &d2, &in_u(k), &[*y, *z])
}

/// `∂²_{y_iy_j}∂²_{z_iz_j} S_k(y, z)`.
pub fn singular_d2s(p1: &GreenProvider, p2: &GreenProvider, k: usize, y: &Point, z: &Point, i: usize, j: usize) -> Result<Complex64> {
    same_problem(p1, p2)?;
    check_clearance(&p1.pair, k, p1.grid().h, 2, &[y, z])?;
    let d1 = p1.derivative(y, SourceDerivative::Second(i, j))?;
    let d2 = p2.derivative(z, SourceDerivative::Second(i, j))?;
    volume_form(&p1.pair, &p2.pair, &d1, &d2, &in_u(k), &[*y, *z])
}

/// Value, optionally all first derivatives, and the listed second derivatives.
pub fn evaluate(p1: &GreenProvider, p2: &GreenProvider, k: usize, y: &Point, z: &Point, first: bool, second: &[(usize, usize)]) -> Result<SingularEvaluation> {
    let value = singular_s(p1, p2, k, y, z)?;
    let first = if first {
        let mut m = [[Complex64::new(0.0, 0.0); 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = singular_ds(p1, p2, k, y, z, i, j)?;
            }
        }
        Some(m)
    } else {
        None
    };
    let second = second.iter().map(|&(i, j)| singular_d2s(p1, p2, k, y, z, i, j).map(|v| ((i, j), v))).collect::<Result<_>>()?;
    Ok(SingularEvaluation { k, y: *y, z: *z, value, first, second })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenIdentity {
    /// `∫_Σ σ₁∇G₁·ν G₂ − σ₂∇G₂·ν G₁` with the scheme's face fluxes.
    pub lhs: Complex64,
    /// `S_k(y,z)` plus the `W_k ∩ Ω` volume term, by the midpoint rule.
    pub rhs: Complex64,
    pub s_k: Complex64,
    pub w_k: Complex64,
    /// The same volume integral in the scheme's own discrete form.
    pub discrete_volume: Complex64,
    /// `|lhs − rhs| / max(|lhs|, |rhs|)`.
    pub residual: f64,
}

/// Both sides of the Green identity for sources `y, z ∈ D₀`.
pub fn green_identity_residual(p1: &GreenProvider, p2: &GreenProvider, y: &Point, z: &Point, k: usize) -> Result<GreenIdentity> {
    same_problem(p1, p2)?;
    for s in [y, z] {
        if p1.pair.locate(s).ok() != Some(0) || s[2] >= p1.pair.partition.domain.lower[2] {
            return Err(Error::Singular(format!("source {:?} is not in D0", s.0)));
        }
    }
    u_k_floor(&p1.pair, k)?;
    let (g1, g2) = (p1.green(y)?, p2.green(z)?);
    let grid = p1.grid();
    let h = grid.h;
    let zb = p1.pair.partition.domain.lower[2];
    let kb = ((zb - grid.origin[2]) / h).round() as usize;
    let mut lhs = Complex64::new(0.0, 0.0);
    for j in 0..grid.dims[1] {
        for i in 0..grid.dims[0] {
            let (cp, cb) = (grid.lin(i, j, kb), grid.lin(i, j, kb - 1));
            if !(grid.active(cp) && grid.active(cb)) {
                continue;
            }
            let (up, ub) = (grid.unknown[cp] as usize, grid.unknown[cb] as usize);
            let a1 = p1.op.matrix.get(up, ub).re * h;
            let a2 = p2.op.matrix.get(up, ub).re * h;
            let f1 = (g1.values[ub] - g1.values[up]) * a1;
            let f2 = (g2.values[ub] - g2.values[up]) * a2;
            lhs += (g2.values[up] * f1 - g1.values[up] * f2) * (h * h);
        }
    }
    let s_k = volume_form(&p1.pair, &p2.pair, &g1, &g2, &in_u(k), &[*y, *z])?;
    let kk = k as i32;
    let w_k = volume_form(&p1.pair, &p2.pair, &g1, &g2, &move |r| r >= 1 && r <= kk, &[*y, *z])?;
    let zero = |_: &Point| Complex64::new(0.0, 0.0);
    let g = grid.clone();
    let discrete_volume = form_difference(&p1.op, &p2.op, &g1, &g2, &move |c| g.region[c] >= 1, &zero, &zero)?;
    let rhs = s_k + w_k;
    let scale = lhs.norm().max(rhs.norm());
    let residual = if scale == 0.0 { 0.0 } else { (lhs - rhs).norm() / scale };
    Ok(GreenIdentity { lhs, rhs, s_k, w_k, discrete_volume, residual })
}

/// Offsets `(j + ½) h` lying in `[lo, hi]`: the distances from a grid plane at which cell centres sit.
pub fn cell_offsets(h: f64, lo: f64, hi: f64) -> Vec<f64> {
    let tol = 1e-9 * h;
    let first = ((lo - tol) / h - 0.5).ceil().max(0.0) as usize;
    (first..).map(|j| (j as f64 + 0.5) * h).take_while(|&r| r <= hi + tol).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowUp {
    pub k: usize,
    /// Distances from `y` to `U_k`.
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// `ln |S_k(y,y)|` against `ln r`; needs two or more radii.
    pub fit: Option<LinearFit>,
}

/// `|S_k(y,y)|` for `y` below the floor of `U_k` at the given distances, above the
/// lateral point `(x, y)` snapped to cell centres.
pub fn blow_up(p1: &GreenProvider, p2: &GreenProvider, k: usize, lateral: (f64, f64), radii: &[f64]) -> Result<BlowUp> {
    let floor = u_k_floor(&p1.pair, k)?;
    let g = p1.grid().clone();
    let mut out_r = Vec::new();
    let mut values = Vec::new();
    let ys: Vec<Point> = radii
        .iter()
        .map(|&r| g.snap(&crate::pt(lateral.0, lateral.1, floor - r)).ok_or_else(|| Error::Singular(format!("offset {r} leaves the grid"))))
        .collect::<Result<_>>()?;
    p1.prefetch(&ys)?;
    p2.prefetch(&ys)?;
    for y in &ys {
        let r = floor - y[2];
        values.push(singular_s(p1, p2, k, y, y)?.norm());
        out_r.push(r);
    }
    let fit = if out_r.len() >= 2 { Some(crate::fit::loglog(&out_r, &values)?) } else { None };
    Ok(BlowUp { k, radii: out_r, values, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{AffinePiece, MatrixField};
    use crate::geometry::{augment, build_slab_partition, AugmentedDomain, BoxDomain, Patch};
    use crate::pt;

    fn setup(n: usize, dg: f64) -> (GreenProvider, GreenProvider, AugmentedDomain) {
        let p = build_slab_partition(BoxDomain::unit(0.9).unwrap(), 2, &[0.5]).unwrap();
        let base = CoefficientPair::new(p.clone(), vec![AffinePiece::constant(1.0), AffinePiece::constant(1.5)], vec![AffinePiece::constant(0.0); 2], MatrixField::Identity).unwrap();
        let other = base.perturbed(&[AffinePiece::constant(0.0), AffinePiece::constant(dg)], &[AffinePiece::constant(0.0), AffinePiece::constant(0.5 * dg)]);
        let aug = augment(p.clone(), Patch::bottom_face(&p.domain), 0.25, None).unwrap();
        (GreenProvider::new(&base, &aug, n, None).unwrap(), GreenProvider::new(&other, &aug, n, None).unwrap(), aug)
    }

    #[test]
    fn equal_pairs_vanish_and_swap_symmetry() {
        let (a, b, _) = setup(16, 0.2);
        let g = a.grid().clone();
        let y = g.snap(&pt(0.5, 0.5, 0.2)).unwrap();
        let z = g.snap(&pt(0.4, 0.6, 0.15)).unwrap();
        assert_eq!(singular_s(&a, &a, 1, &y, &z).unwrap(), Complex64::new(0.0, 0.0));
        let s12 = singular_s(&a, &b, 1, &y, &z).unwrap();
        let s21 = singular_s(&b, &a, 1, &z, &y).unwrap();
        assert!(s12.norm() > 0.0);
        // Swapping pairs and sources flips the sign of the integrand differences.
        assert!((s12 + s21).norm() <= 1e-10 * s12.norm(), "{s12} {s21}");
    }

    #[test]
    fn clearance_is_enforced() {
        let (a, b, _) = setup(16, 0.2);
        let g = a.grid().clone();
        let near = g.snap(&pt(0.5, 0.5, 0.47)).unwrap();
        assert!(singular_s(&a, &b, 1, &near, &near).is_err());
        let inside_u = g.snap(&pt(0.5, 0.5, 0.7)).unwrap();
        assert!(singular_s(&a, &b, 1, &inside_u, &inside_u).is_err());
    }

    #[test]
    fn first_derivative_matches_difference_of_values() {
        let (a, b, _) = setup(24, 0.2);
        let g = a.grid().clone();
        let h = g.h;
        let y = g.snap(&pt(0.5, 0.5, 0.25)).unwrap();
        let z = g.snap(&pt(0.45, 0.55, 0.25)).unwrap();
        let (i, j) = (2, 0);
        let ds = singular_ds(&a, &b, 1, &y, &z, i, j).unwrap();
        let e = |ax: usize, s: f64| {
            let mut v = pt(0.0, 0.0, 0.0);
            v[ax] = s * h;
            v
        };
        let s = |sy: f64, sz: f64| singular_s(&a, &b, 1, &(y + e(i, sy)), &(z + e(j, sz))).unwrap();
        let fd = (s(1.0, 1.0) - s(1.0, -1.0) - s(-1.0, 1.0) + s(-1.0, -1.0)) / (4.0 * h * h);
        assert!((ds - fd).norm() <= 0.1 * fd.norm(), "{ds} {fd}");
    }

    #[test]
    fn zero_difference_on_u_annihilates() {
        let (a, _, _) = setup(16, 0.0);
        // Differences only on D1 ⊂ W1.
        let other = a.pair.perturbed(&[AffinePiece::constant(0.3), AffinePiece::constant(0.0)], &[AffinePiece::constant(0.0); 2]);
        let b = GreenProvider::new(&other, a.pair.extension.as_ref().unwrap(), 16, None).unwrap();
        let g = a.grid().clone();
        let y = g.snap(&pt(0.5, 0.5, 0.2)).unwrap();
        assert_eq!(singular_s(&a, &b, 1, &y, &y).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn green_identity_discrete_form_is_exact() {
        let (a, b, _) = setup(16, 0.2);
        let g = a.grid().clone();
        let y = g.snap(&pt(0.5, 0.5, -0.1)).unwrap();
        let z = g.snap(&pt(0.45, 0.55, -0.1)).unwrap();
        let gi = green_identity_residual(&a, &b, &y, &z, 1).unwrap();
        assert!((gi.lhs - gi.discrete_volume).norm() <= 1e-7 * gi.lhs.norm(), "{gi:?}");
        assert!(gi.residual < 0.2, "{gi:?}");
        let same = green_identity_residual(&a, &a, &y, &z, 1).unwrap();
        assert!(same.lhs.norm() < 1e-12 && same.rhs.norm() == 0.0);
        assert!(green_identity_residual(&a, &b, &pt(0.5, 0.5, 0.3), &z, 1).is_err());
    }

    #[test]
    fn offsets_and_blow_up() {
        let h = 0.1;
        let o = cell_offsets(h, 0.2, 0.45);
        assert_eq!(o.len(), 3);
        assert!((o[0] - 0.25).abs() < 1e-12 && (o[2] - 0.45).abs() < 1e-12);
        assert!(cell_offsets(h, 0.26, 0.34).is_empty());
        let (a, b, _) = setup(16, 0.2);
        let hh = a.grid().h;
        let r = blow_up(&a, &b, 1, (0.5, 0.5), &[4.5 * hh, 6.5 * hh]).unwrap();
        assert_eq!(r.radii.len(), 2);
        // The singular solution grows as y approaches U_1.
        assert!(r.values[0] > r.values[1], "{r:?}");
    }
}
