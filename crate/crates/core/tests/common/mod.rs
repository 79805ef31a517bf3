#![allow(dead_code)]

use lipstab::coefficients::{AffinePiece, CoefficientPair, MatrixField};
use lipstab::geometry::{build_slab_partition, BoxDomain};
use lipstab::Point;
use std::f64::consts::PI;

/// `sinh(a) sinh(b) / sinh(c)` for `a + b ≤ c`, without overflow.
fn sinh_ratio(a: f64, b: f64, c: f64) -> f64 {
    let num = (1.0 - (-2.0 * a).exp()) * (1.0 - (-2.0 * b).exp());
    0.5 * (a + b - c).exp() * num / (1.0 - (-2.0 * c).exp())
}

/// Dirichlet Green function of the unit cube for `−Δ`, by a sine series in x, y with the
/// exact 1D Green function in z. Returns `(G, ∂_{y_z} G)`.
pub fn unit_box_green(x: &Point, y: &Point, modes: usize) -> (f64, f64) {
    let (zl, zg) = if x[2] < y[2] { (x[2], y[2]) } else { (y[2], x[2]) };
    let mut g = 0.0;
    let mut dg = 0.0;
    for m in 1..=modes {
        let sx = (m as f64 * PI * x[0]).sin() * (m as f64 * PI * y[0]).sin();
        for n in 1..=modes {
            let sy = (n as f64 * PI * x[1]).sin() * (n as f64 * PI * y[1]).sin();
            let k = PI * ((m * m + n * n) as f64).sqrt();
            let a = 4.0 * sx * sy / k;
            g += a * sinh_ratio(k * zl, k * (1.0 - zg), k);
            // d/dy_z of sinh(k z<) sinh(k(1 − z>))/sinh k.
            let d = if y[2] > x[2] {
                // z> = y_z: derivative of sinh(k(1 − y_z)) is −k cosh(k(1 − y_z)).
                -k * cosh_sinh_ratio(k * zl, k * (1.0 - zg), k)
            } else {
                // z< = y_z: derivative of sinh(k y_z) is k cosh(k y_z).
                k * cosh_sinh_ratio(k * (1.0 - zg), k * zl, k)
            };
            dg += a * d;
        }
    }
    (g, dg)
}

/// `sinh(a) cosh(b) / sinh(c)` for `a + b ≤ c`.
fn cosh_sinh_ratio(a: f64, b: f64, c: f64) -> f64 {
    let num = (1.0 - (-2.0 * a).exp()) * (1.0 + (-2.0 * b).exp());
    0.5 * (a + b - c).exp() * num / (1.0 - (-2.0 * c).exp())
}

pub fn constant_pair(r0: f64, gammas: &[f64], qs: &[f64], cuts: &[f64]) -> CoefficientPair {
    let p = build_slab_partition(BoxDomain::unit(r0).unwrap(), gammas.len(), cuts).unwrap();
    CoefficientPair::new(
        p,
        gammas.iter().map(|&g| AffinePiece::constant(g)).collect(),
        qs.iter().map(|&q| AffinePiece::constant(q)).collect(),
        MatrixField::Identity,
    )
    .unwrap()
}
