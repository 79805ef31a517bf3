//! Exponent fits for the deviation of the discrete Green function from the biphase
//! kernel frozen at an interface point.
//!
//! Sources sit at `y = Q − r ν` below the interface, probes `x` above it in the vertical
//! plane through `Q`. Spatial derivatives in `x` are in-region differences, derivatives in
//! `y` are finite differences over shifted sources.

use crate::cache::GreenProvider;
use crate::fit::{loglog, LinearFit};
use crate::fundamental::{build_biphase, eval_h, Side};
use crate::singular::region_gradient;
use crate::solver::{GridField, SourceDerivative};
use crate::{pt, Complex64, Error, Point, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimate {
    /// `|∇_x G − ∇_x H|`, expected power `1 − n + θ₁`.
    GradX,
    /// `|∇_x∇_y G − ∇_x∇_y H|`, expected power `−n + θ₂`.
    MixedXY,
    /// `|∇_y G − ∇_y H|`, expected power `1 − n + θ₃`.
    GradY,
    /// `|∇²_y G − ∇²_y H|`, bounded by the power `1 − n`.
    HessY,
}

impl Estimate {
    pub const ALL: [Estimate; 4] = [Estimate::GradX, Estimate::MixedXY, Estimate::GradY, Estimate::HessY];

    /// Singular power of the bound without the gain `θ`, for `n = 3`.
    pub fn base_power(&self) -> f64 {
        match self {
            Estimate::MixedXY => -3.0,
            _ => -2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticSpec {
    /// Source offsets `r` below the interface; snapped to cell centres.
    pub radii: Vec<f64>,
    /// Smallest offsets discarded before fitting.
    pub drop_smallest: usize,
    /// Probes satisfy `|x − Q| ≤ probe_radius`.
    pub probe_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub r: f64,
    pub x: Point,
    pub distance: f64,
    /// Deviation per estimate, in the order of [`Estimate::ALL`].
    pub deviation: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub estimate: Estimate,
    pub fit: LinearFit,
    /// `slope − base power`.
    pub theta: f64,
    pub theta_ci: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub anchor: Point,
    pub gamma_minus: f64,
    pub gamma_plus: f64,
    pub radii_used: Vec<f64>,
    pub radii_dropped: Vec<f64>,
    pub fits: Vec<ExponentFit>,
    pub records: Vec<ProbeRecord>,
}

impl AsymptoticReport {
    pub fn fit(&self, e: Estimate) -> &ExponentFit {
        self.fits.iter().find(|f| f.estimate == e).expect("all estimates are fitted")
    }
}

fn norm3(v: [Complex64; 3], w: [f64; 3]) -> f64 {
    (0..3).map(|a| (v[a] - w[a]).norm_sqr()).sum::<f64>().sqrt()
}

/// Fit the exponents at interface `Σ_m` (`m ≥ 2`, between slabs `m−1` and `m`).
pub fn asymptotic_exponent_fit(provider: &GreenProvider, interface: usize, spec: &AsymptoticSpec) -> Result<AsymptoticReport> {
    let pair = &provider.pair;
    let grid = provider.grid().clone();
    let h = grid.h;
    let iface = pair
        .partition
        .interfaces
        .iter()
        .find(|i| i.index == interface)
        .ok_or_else(|| Error::Stability(format!("no interior interface with index {interface}")))?;
    // Q: the anchor moved laterally onto cell-centre coordinates, still on Σ_m.
    let snapped = grid.snap(&pt(iface.anchor[0], iface.anchor[1], iface.z - 0.5 * h)).ok_or_else(|| Error::Stability("anchor outside the grid".into()))?;
    let q = pt(snapped[0], snapped[1], iface.z);
    if (q - iface.anchor).norm() > 0.25 * pair.partition.domain.r0 {
        return Err(Error::Stability("snapped anchor leaves B_{r0/4}(P)".into()));
    }
    let (below, above) = (interface - 1, interface);
    let a0 = pair.matrix_in(above, &q);
    let (gm, gp) = (pair.gamma_in(below, &q), pair.gamma_in(above, &q));
    let bp = build_biphase(&a0, gp, gm)?;

    let mut radii: Vec<f64> = spec.radii.iter().map(|r| ((r / h - 0.5).round() + 0.5) * h).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup_by(|a, b| (*a - *b).abs() < 1e-9 * h);
    if let Some(r) = radii.iter().find(|&&r| r <= 4.0 * h * (1.0 + 1e-9)) {
        return Err(Error::Stability(format!("offset {r} is below the resolution limit 4h = {}", 4.0 * h)));
    }
    if radii.iter().any(|&r| r >= pair.partition.domain.r0 / 8.0) {
        log::warn!("offsets above r0/8 = {} are outside the estimate's range", pair.partition.domain.r0 / 8.0);
    }
    if radii.len() <= spec.drop_smallest {
        return Err(Error::Stability(format!("{} offsets leave nothing after dropping {}", radii.len(), spec.drop_smallest)));
    }
    let radii_dropped = radii[..spec.drop_smallest].to_vec();
    let radii_used = radii[spec.drop_smallest..].to_vec();

    // Probes: cell centres of slab `above` in the plane through Q normal to e_y.
    let jq = ((q[1] - grid.origin[1]) / h - 0.5).round() as usize;
    let probes: Vec<usize> = (0..grid.dims[2])
        .flat_map(|k| (0..grid.dims[0]).map(move |i| (i, k)))
        .map(|(i, k)| grid.lin(i, jq, k))
        .filter(|&c| grid.active(c) && grid.region[c] == above as i32 && (grid.center(c) - q).norm() <= spec.probe_radius)
        .collect();
    if probes.is_empty() {
        return Err(Error::Stability("no probe points above the interface".into()));
    }

    let mut records = Vec::new();
    for &r in &radii_used {
        let y = pt(q[0], q[1], q[2] - r);
        let g0 = provider.green(&y)?;
        let first: Vec<GridField> = (0..3).map(|a| provider.derivative(&y, SourceDerivative::First(a))).collect::<Result<_>>()?;
        let mut second = [[0usize; 3]; 3];
        let mut hess = Vec::new();
        for a in 0..3 {
            for b in a..3 {
                second[a][b] = hess.len();
                second[b][a] = hess.len();
                hess.push(provider.derivative(&y, SourceDerivative::Second(a, b))?);
            }
        }
        let grad0 = region_gradient(&g0);
        let grad_first: Vec<_> = first.iter().map(region_gradient).collect();
        for &c in &probes {
            let x = grid.center(c);
            let u = grid.unknown[c] as usize;
            let k = eval_h(&bp, &(x - q), &(y - q), Some(Side::Above))?;
            let d1 = norm3(grad0[u], k.grad_x.0);
            let mut d2 = 0.0;
            for j in 0..3 {
                for i in 0..3 {
                    d2 += (grad_first[j][u][i] - k.mixed.0[i][j]).norm_sqr();
                }
            }
            let d3 = norm3(std::array::from_fn(|j| first[j].values[u]), k.grad_y.0);
            let mut d4 = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    d4 += (hess[second[a][b]].values[u] - k.hess_y.0[a][b]).norm_sqr();
                }
            }
            records.push(ProbeRecord { r, x, distance: (x - y).norm(), deviation: [d1, d2.sqrt(), d3, d4.sqrt()] });
        }
        provider.clear_memory();
    }

    let dist: Vec<f64> = records.iter().map(|p| p.distance).collect();
    let fits = Estimate::ALL
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let dev: Vec<f64> = records.iter().map(|p| p.deviation[i]).collect();
            let fit = loglog(&dist, &dev)?;
            let b = e.base_power();
            Ok(ExponentFit { estimate: e, theta: fit.slope - b, theta_ci: (fit.slope_ci.0 - b, fit.slope_ci.1 - b), fit })
        })
        .collect::<Result<_>>()?;
    Ok(AsymptoticReport { anchor: q, gamma_minus: gm, gamma_plus: gp, radii_used, radii_dropped, fits, records })
}
