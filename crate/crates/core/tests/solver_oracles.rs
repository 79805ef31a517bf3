mod common;

use common::{constant_pair, unit_box_green};
use lipstab::geometry::{augment, Patch};
use lipstab::solver::{
    assemble, conormal_trace, conormal_trace_with, green_source_derivatives, solve_dirichlet, solve_green, BoundarySpec, Grid, GridField, SourceDerivative, TraceScheme,
};
use lipstab::{pt, Complex64, Point};
use std::f64::consts::PI;
use std::sync::Arc;

fn box_green_op(n: usize) -> (lipstab::coefficients::CoefficientPair, lipstab::solver::DiscreteOperator) {
    let p = constant_pair(0.9, &[1.0], &[0.0], &[]);
    let g = Arc::new(Grid::for_omega(&p.partition, n).unwrap());
    let op = assemble(&p, g, BoundarySpec::GreenDirichlet, None).unwrap();
    (p, op)
}

#[test]
fn dirichlet_green_matches_box_oracle() {
    let (_, op) = box_green_op(48);
    let g = op.grid.clone();
    let y = g.center_ijk(24, 24, 20);
    let field = solve_green(&op, &y).unwrap();
    assert!(field.residual <= 1e-10);
    for k in [4usize, 8, 12] {
        let x = g.center_ijk(24, 24, 20 + k);
        let num = field.field.at(&x).unwrap().re;
        let (oracle, _) = unit_box_green(&x, &y, 120);
        let free = 1.0 / (4.0 * PI * (x - y).norm());
        let rel = (num - oracle).abs() / oracle;
        println!("dist {:.4}: G {num:.6} oracle {oracle:.6} free {free:.6} rel {rel:.4}", (x - y).norm());
        if k == 12 {
            assert!(rel <= 0.15, "relative error {rel}");
        }
    }
}

#[test]
fn green_bound_surrogate_is_stable() {
    let mut bounds = Vec::new();
    for n in [24usize, 48] {
        let (_, op) = box_green_op(n);
        let y = op.grid.snap(&pt(0.5, 0.5, 0.5)).unwrap();
        bounds.push(solve_green(&op, &y).unwrap().green_bound());
    }
    println!("sup |G| |x-y|: {bounds:?}");
    assert!(bounds.iter().all(|b| b.is_finite() && *b > 0.0));
    assert!((bounds[0] - bounds[1]).abs() / bounds[1] < 0.2);
}

#[test]
fn source_derivative_against_oracle_and_symmetry() {
    let (p, op) = box_green_op(48);
    let g = op.grid.clone();
    let y = g.center_ijk(24, 24, 18);
    let d = green_source_derivatives(&op, &p, &y, &[SourceDerivative::First(2), SourceDerivative::First(0)]).unwrap();
    for k in [8usize, 12] {
        let x = g.center_ijk(24, 24, 18 + k);
        let num = d[0].at(&x).unwrap().re;
        let (_, oracle) = unit_box_green(&x, &y, 120);
        let rel = (num - oracle).abs() / oracle.abs();
        println!("dist {:.4}: dG/dy_z {num:.5} oracle {oracle:.5} rel {rel:.4}", (x - y).norm());
        assert!(rel <= 0.10);
    }
    let a = d[1].at(&g.center_ijk(24 + 6, 24, 22)).unwrap().re;
    let b = d[1].at(&g.center_ijk(24 - 6, 24, 22)).unwrap().re;
    assert!(a * b < 0.0, "{a} {b}");
}

#[test]
fn sine_mode_energy_and_conormal_trace() {
    let p = constant_pair(0.9, &[1.0], &[0.0], &[]);
    let g = Arc::new(Grid::for_omega(&p.partition, 48).unwrap());
    let sigma = Patch::bottom_face(&p.partition.domain);
    let op = assemble(&p, g, BoundarySpec::CauchyDirichlet, Some(sigma)).unwrap();
    let f = |x: &Point| Complex64::new((PI * x[0]).sin() * (PI * x[1]).sin(), 0.0);
    let u = solve_dirichlet(&op, &f).unwrap();
    let trace = conormal_trace(&u.field, &f, &p, &sigma).unwrap();
    let k = 2f64.sqrt() * PI;
    let h2 = op.grid.h * op.grid.h;
    let energy: f64 = trace.iter().map(|(x, t)| f(x).re * t.re * h2).sum();
    let one_sided = conormal_trace_with(&u.field, &f, &p, &sigma, TraceScheme::OneSided).unwrap();
    let e_one: f64 = one_sided.iter().map(|(x, t)| f(x).re * t.re * h2).sum();
    println!("one-sided trace energy {e_one:.6}");
    let exact = 0.25 * k / k.tanh();
    println!("energy {energy:.6} exact {exact:.6}");
    assert!((energy - exact).abs() / exact <= 0.02);
    let worst = trace
        .iter()
        .filter(|(x, _)| f(x).re > 0.5)
        .map(|(x, t)| (t.re - k / k.tanh() * f(x).re).abs() / (k / k.tanh() * f(x).re))
        .fold(0.0, f64::max);
    println!("worst conormal relative error {worst:.4}");
    assert!(worst <= 0.03);
    // Interior values against the separable solution.
    let exact_u = GridField::from_fn(op.grid.clone(), |x| f(x) * ((k * (1.0 - x[2])).sinh() / k.sinh()));
    assert!(u.field.sub(&exact_u).max_abs() < 0.01);
}

#[test]
fn robin_system_solves_where_dirichlet_is_indefinite() {
    // q above the first Dirichlet eigenvalue 3π² of the unit cube.
    let p = constant_pair(0.9, &[1.0], &[40.0], &[]);
    let g = Arc::new(Grid::for_omega(&p.partition, 16).unwrap());
    let sigma = Patch::bottom_face(&p.partition.domain);
    let op = assemble(&p, g, BoundarySpec::CauchyDirichlet, Some(sigma)).unwrap();
    let f = |x: &Point| Complex64::new((PI * x[0]).sin() * (PI * x[1]).sin(), 0.0);
    let warned = match solve_dirichlet(&op, &f) {
        Ok(s) => s.warning.is_some(),
        Err(_) => true,
    };
    assert!(warned, "expected an eigenvalue-regime warning");
    let aug = augment(p.partition.clone(), sigma, 0.25, None).unwrap();
    let e = p.extend_to_d0(&aug);
    let gr = Arc::new(Grid::for_augmented(&aug, 16).unwrap());
    let op = assemble(&e, gr.clone(), BoundarySpec::GreenRobin, None).unwrap();
    let y = gr.center_ijk(8, 8, 10);
    let green = solve_green(&op, &y).unwrap();
    assert!(green.residual <= 1e-10);
    assert!(green.field.values.iter().any(|v| v.im.abs() > 0.0));
}
