mod common;

use common::constant_pair;
use lipstab::cauchy::{alessandrini_gap, alessandrini_identity, build_boundary_norm, cauchy_datum, cauchy_operator, sample_cauchy_space, subspace_distance, NODE_CAP};
use lipstab::coefficients::AffinePiece;
use lipstab::geometry::Patch;
use lipstab::solver::{Grid, GridField};
use lipstab::stability::sweep::{run_sweep, SweepSpec};
use lipstab::stability::three_sphere::three_sphere_check;
use lipstab::{pt, Complex64};
use proptest::prelude::*;
use std::sync::Arc;

fn sigma_pair() -> (lipstab::coefficients::CoefficientPair, lipstab::coefficients::CoefficientPair) {
    let base = constant_pair(0.9, &[1.0, 2.0], &[0.0, 0.0], &[0.5]);
    let other = base.perturbed(&[AffinePiece::new(0.1, [0.05, 0.0, 0.1]), AffinePiece::constant(0.2)], &[AffinePiece::constant(0.0), AffinePiece::constant(0.0)]);
    (base, other)
}

#[test]
fn identity_quadrature_converges_and_discrete_form_is_exact() {
    let (a, b) = sigma_pair();
    let coarse = alessandrini_identity(&a, &b, 16, (1, 1)).unwrap();
    let fine = alessandrini_identity(&a, &b, 24, (1, 1)).unwrap();
    assert!(fine.residual < coarse.residual, "{} {}", coarse.residual, fine.residual);
    // Second order: halving h from 1/16 to 1/24 should cut the residual by about 2.25.
    assert!(coarse.residual / fine.residual > 1.6, "{} {}", coarse.residual, fine.residual);
    assert!(coarse.discrete_residual < 1e-9 && fine.discrete_residual < 1e-9);
}

#[test]
fn alessandrini_inequality_holds_with_measured_distance() {
    let (a, b) = sigma_pair();
    let grid = Arc::new(Grid::for_omega(&a.partition, 16).unwrap());
    let norm = build_boundary_norm(&grid, &Patch::bottom_face(&a.partition.domain), NODE_CAP).unwrap();
    let d = subspace_distance(&sample_cauchy_space(&a, grid.clone(), &norm, 12).unwrap(), &sample_cauchy_space(&b, grid.clone(), &norm, 12).unwrap()).unwrap().symmetric;
    let (op1, op2) = (cauchy_operator(&a, grid.clone(), &norm).unwrap(), cauchy_operator(&b, grid.clone(), &norm).unwrap());
    for (m1, m2) in [((1, 1), (1, 1)), ((1, 2), (2, 1)), ((2, 2), (1, 3))] {
        let (f1, f2) = (norm.mode(m1.0, m1.1), norm.mode(m2.0, m2.1));
        let (u1, _, _) = cauchy_datum(&op1, &a, &norm, &f1).unwrap();
        let (u2, _, _) = cauchy_datum(&op2, &b, &norm, &f2).unwrap();
        let gap = alessandrini_gap(&norm, &a, &op1, &u1, &f1, &b, &op2, &u2, &f2, d).unwrap();
        assert!(!gap.violated, "{m1:?} {m2:?}: {gap:?}");
        assert!(gap.volume.norm() <= gap.bound * (1.0 + 1e-8));
    }
}

#[test]
fn sweep_error_tracks_distance_linearly() {
    let base = constant_pair(0.9, &[1.0, 2.0], &[0.0, 0.0], &[0.5]);
    let r = run_sweep(&base, &SweepSpec::lipschitz(16, 8, 8, 3)).unwrap();
    let f = r.fit.unwrap();
    assert!(r.records.len() >= 6);
    assert!(f.slope_ci.0 <= 1.0 && f.slope > 0.7, "{f:?}");
    assert!(r.records.iter().all(|x| x.ratio.is_finite() && x.ratio > 0.0));
}

fn field(seed: u64) -> GridField {
    let p = constant_pair(0.9, &[1.0], &[0.0], &[]);
    let g = Arc::new(Grid::for_omega(&p.partition, 16).unwrap());
    let s = seed as f64;
    GridField::from_fn(g, move |x| Complex64::new((x[0] * (1.0 + s)).sin() + x[1] * x[2] + 0.3, (x[2] * s).cos()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// The three-sphere constant is invariant under scaling of the solution.
    #[test]
    fn three_sphere_constant_is_scale_free(seed in 0u64..5, scale in 1e-3f64..1e3, r1 in 0.06f64..0.1) {
        let u = field(seed);
        let c = pt(0.5, 0.5, 0.5);
        let v = GridField { grid: u.grid.clone(), values: u.values.iter().map(|z| z * scale).collect() };
        let a = three_sphere_check(&u, &c, r1, 0.25, 0.4).unwrap();
        let b = three_sphere_check(&v, &c, r1, 0.25, 0.4).unwrap();
        prop_assert!((a.constant - b.constant).abs() <= 1e-12 * a.constant, "{a:?} {b:?}");
        prop_assert!(a.m1 <= a.m2 && a.m2 <= a.m3);
    }
}
