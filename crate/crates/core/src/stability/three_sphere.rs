//! Sup-norm three-sphere checks on discrete solutions and an ensemble fit of `C_∞`.
//!
//! The ensemble draws random smooth boundary data as random combinations of a fixed
//! family of basis data. Solutions depend linearly on the data, so each member is the
//! same combination of the basis solutions.

use crate::coefficients::CoefficientPair;
use crate::fit::quantile;
use crate::solver::{assemble, solve_dirichlet, BoundarySpec, Grid, GridField};
use crate::stability::calculus::three_sphere_beta;
use crate::{Complex64, Error, Point, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThreeSphere {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub beta: f64,
    /// `‖u‖_{L∞(B_{r2})}`.
    pub lhs: f64,
    /// `‖u‖^β_{L∞(B_{r1})} ‖u‖^{1−β}_{L∞(B_{r3})}`.
    pub rhs_core: f64,
    /// `lhs / rhs_core`.
    pub constant: f64,
}

/// Sup of `|u|` over cell centres in the closed balls of radii `r1 < r2 < r3` around `center`.
pub fn three_sphere_check(u: &GridField, center: &Point, r1: f64, r2: f64, r3: f64) -> Result<ThreeSphere> {
    let beta = three_sphere_beta(r1, r2, r3)?;
    let g = &u.grid;
    for a in 0..3 {
        let lo = g.origin[a];
        let hi = g.origin[a] + g.dims[a] as f64 * g.h;
        if center[a] - r3 < lo - 1e-12 || center[a] + r3 > hi + 1e-12 {
            return Err(Error::Stability(format!("ball of radius {r3} around {:?} leaves the grid", center.0)));
        }
    }
    let tol = 1e-9 * g.h;
    let (mut m1, mut m2, mut m3) = (0.0f64, 0.0f64, 0.0f64);
    let mut inner = 0usize;
    for c in 0..g.n_cells() {
        let d = (g.center(c) - *center).norm();
        if d > r3 + tol {
            continue;
        }
        let v = u.at_cell(c).ok_or_else(|| Error::Stability(format!("ball of radius {r3} around {:?} leaves the domain", center.0)))?.norm();
        m3 = m3.max(v);
        if d <= r2 + tol {
            m2 = m2.max(v);
        }
        if d <= r1 + tol {
            m1 = m1.max(v);
            inner += 1;
        }
    }
    if inner == 0 {
        return Err(Error::Stability(format!("ball of radius {r1} contains no cell centre")));
    }
    let rhs_core = m1.powf(beta) * m3.powf(1.0 - beta);
    let constant = if rhs_core > 0.0 { m2 / rhs_core } else if m2 == 0.0 { 1.0 } else { f64::INFINITY };
    Ok(ThreeSphere { m1, m2, m3, beta, lhs: m2, rhs_core, constant })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n: usize,
    pub members: usize,
    /// Number of basis boundary data.
    pub basis: usize,
    pub center: Point,
    pub radii: [f64; 3],
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub spec: EnsembleSpec,
    pub beta: f64,
    pub constants: Vec<f64>,
    /// Fitted `C_∞`: the ensemble maximum.
    pub c_inf: f64,
    pub median: f64,
    pub p99: f64,
    /// Members with `lhs ≤ C_∞ rhs_core`.
    pub satisfied: usize,
    pub warnings: Vec<String>,
}

/// Smooth boundary datum `index` of the basis: products of low-frequency cosines with random phases.
fn basis_datum(rng: &mut ChaCha8Rng) -> impl Fn(&Point) -> Complex64 + Sync + Send {
    let k: [f64; 3] = std::array::from_fn(|_| rng.random_range(0..3) as f64 * std::f64::consts::PI);
    let phase: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU));
    move |x: &Point| Complex64::new((0..3).map(|a| (k[a] * x[a] + phase[a]).cos()).product(), 0.0)
}

/// Fit `C_∞` over random solutions of the equation of `pair` with Dirichlet data on all of `∂Ω`.
pub fn three_sphere_ensemble(pair: &CoefficientPair, spec: &EnsembleSpec) -> Result<EnsembleReport> {
    if spec.members == 0 || spec.basis == 0 {
        return Err(Error::Stability("ensemble and basis sizes must be positive".into()));
    }
    let [r1, r2, r3] = spec.radii;
    let beta = three_sphere_beta(r1, r2, r3)?;
    let grid = Arc::new(Grid::for_omega(&pair.partition, spec.n)?);
    let op = assemble(pair, grid.clone(), BoundarySpec::DirichletAll, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let data: Vec<_> = (0..spec.basis).map(|_| basis_datum(&mut rng)).collect();
    let solved: Vec<_> = data.par_iter().map(|f| solve_dirichlet(&op, f)).collect();
    let mut warnings = Vec::new();
    let mut basis = Vec::new();
    for (i, s) in solved.into_iter().enumerate() {
        match s {
            Ok(s) => {
                if let Some(w) = s.warning {
                    warnings.push(format!("basis {i}: {w}"));
                }
                basis.push(s.field);
            }
            Err(e) => warnings.push(format!("basis {i} skipped: {e}")),
        }
    }
    if basis.is_empty() {
        return Err(Error::Stability("no basis solution converged".into()));
    }
    let coeffs: Vec<Vec<f64>> = (0..spec.members).map(|_| (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let checks: Vec<ThreeSphere> = coeffs
        .par_iter()
        .map(|w| {
            let mut vals = vec![Complex64::new(0.0, 0.0); grid.n_unknowns()];
            for (b, &c) in basis.iter().zip(w) {
                for (v, x) in vals.iter_mut().zip(&b.values) {
                    *v += x * c;
                }
            }
            three_sphere_check(&GridField { grid: grid.clone(), values: vals }, &spec.center, r1, r2, r3)
        })
        .collect::<Result<_>>()?;
    let constants: Vec<f64> = checks.iter().map(|c| c.constant).collect();
    let c_inf = constants.iter().cloned().fold(0.0, f64::max);
    let satisfied = checks.iter().filter(|c| c.lhs <= c_inf * c.rhs_core * (1.0 + 1e-12)).count();
    Ok(EnsembleReport {
        spec: spec.clone(),
        beta,
        median: quantile(&constants, 0.5),
        p99: quantile(&constants, 0.99),
        constants,
        c_inf,
        satisfied,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{AffinePiece, MatrixField};
    use crate::geometry::{build_slab_partition, BoxDomain};
    use crate::pt;

    fn grid(n: usize) -> Arc<Grid> {
        let p = build_slab_partition(BoxDomain::unit(0.9).unwrap(), 1, &[]).unwrap();
        Arc::new(Grid::for_omega(&p, n).unwrap())
    }

    #[test]
    fn constant_field_gives_unit_constant() {
        let g = grid(16);
        let u = GridField::from_fn(g.clone(), |_| Complex64::new(2.5, 0.0));
        let c = three_sphere_check(&u, &g.center_ijk(8, 8, 8), 0.1, 0.2, 0.3).unwrap();
        assert_eq!(c.lhs, c.rhs_core);
        assert!((c.constant - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linear_field_matches_hand_computation() {
        let g = grid(17);
        let h = g.h;
        let center = g.center_ijk(8, 8, 8);
        // Radii on whole cells put the extreme of z on a cell centre.
        let (r1, r2, r3) = (2.0 * h, 5.0 * h, 7.0 * h);
        let u = GridField::from_fn(g.clone(), |x| Complex64::new(x[2], 0.0));
        let c = three_sphere_check(&u, &center, r1, r2, r3).unwrap();
        let beta = (2.0 * r3 / (r2 + r3)).ln() / (r3 / r1).ln();
        let m = |r: f64| center[2] + r;
        assert!((c.m1 - m(r1)).abs() < 1e-12 && (c.m2 - m(r2)).abs() < 1e-12 && (c.m3 - m(r3)).abs() < 1e-12);
        let expect = m(r2) / (m(r1).powf(beta) * m(r3).powf(1.0 - beta));
        assert!((c.constant - expect).abs() < 1e-12, "{} {expect}", c.constant);
    }

    #[test]
    fn ball_outside_grid_is_rejected() {
        let g = grid(16);
        let u = GridField::zeros(g.clone());
        assert!(three_sphere_check(&u, &pt(0.1, 0.5, 0.5), 0.05, 0.1, 0.2).is_err());
        assert!(three_sphere_check(&u, &pt(0.5, 0.5, 0.5), 0.3, 0.2, 0.4).is_err());
        // The centre sits on a cell corner, more than 0.05 from every cell centre.
        assert!(three_sphere_check(&u, &pt(0.5, 0.5, 0.5), 0.05, 0.2, 0.4).is_err());
    }

    #[test]
    fn small_ensemble_is_tight() {
        let p = build_slab_partition(BoxDomain::unit(0.9).unwrap(), 2, &[0.5]).unwrap();
        let pair = CoefficientPair::new(p, vec![AffinePiece::constant(1.0), AffinePiece::constant(2.0)], vec![AffinePiece::constant(0.0); 2], MatrixField::Identity).unwrap();
        let spec = EnsembleSpec { n: 16, members: 20, basis: 6, center: pt(0.5, 0.5, 0.5), radii: [0.1, 0.3, 0.4], seed: 7 };
        let r = three_sphere_ensemble(&pair, &spec).unwrap();
        assert_eq!(r.satisfied, 20);
        assert!(r.c_inf.is_finite() && r.c_inf > 0.0);
        assert!(r.p99 < 10.0 * r.median, "{:?}", r.constants);
        let again = three_sphere_ensemble(&pair, &spec).unwrap();
        assert_eq!(r.constants, again.constants);
    }
}
