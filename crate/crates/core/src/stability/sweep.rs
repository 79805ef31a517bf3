//! Perturbation sweeps: interior error against the Cauchy-data distance, and the
//! boundary sup of the coefficient differences against the same distance.
//!
//! Each sample draws a random piecewise-affine direction, normalised so that its
//! error functional is one, and scales it by a log-uniform magnitude. Samples are
//! independent jobs; results are ordered by sample index.

use crate::cauchy::{build_boundary_norm, sample_cauchy_space, subspace_distance, BoundaryNorm, CauchySubspace, GRAM_CONDITION_CAP, NODE_CAP};
use crate::coefficients::{error_functionals, AffinePiece, CoefficientPair};
use crate::fit::{loglog, ols, LinearFit};
use crate::plot::Scatter;
use crate::solver::Grid;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write;
use std::sync::Arc;

/// Distances at or below this are round-off in the orthonormal bases and count as `d = 0`.
pub const D_FLOOR: f64 = 1e-12;

/// Which slabs a perturbation touches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    AllSlabs,
    /// Only `D₁`, the slab touching `Σ`.
    FirstSlab,
}

/// Quantity regressed against `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    /// `max(‖γ₁−γ₂‖_∞(Ω), ‖q₁−q₂‖_∞(Ω))`.
    Interior,
    /// `‖γ₁−γ₂‖_∞(Σ) + ‖q₁−q₂‖_∞(Σ)`.
    Boundary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub n: usize,
    /// Boundary modes per Cauchy subspace.
    pub m: usize,
    pub samples: usize,
    pub seed: u64,
    /// Log-uniform magnitude range.
    pub magnitude: [f64; 2],
    /// Scale of the random gradients relative to the offsets.
    pub gradient_scale: f64,
    /// Scale of the `q` part relative to the `γ` part.
    pub q_weight: f64,
    pub support: Support,
    pub functional: Functional,
    /// Mode counts for the convergence study on the first included sample.
    pub m_study: Vec<usize>,
}

impl SweepSpec {
    pub fn lipschitz(n: usize, m: usize, samples: usize, seed: u64) -> Self {
        SweepSpec {
            n,
            m,
            samples,
            seed,
            magnitude: [1e-4, 1e-1],
            gradient_scale: 0.5,
            q_weight: 1.0,
            support: Support::AllSlabs,
            functional: Functional::Interior,
            m_study: vec![4, 8, 12, 16],
        }
    }

    pub fn boundary_holder(n: usize, m: usize, samples: usize, seed: u64) -> Self {
        SweepSpec { support: Support::FirstSlab, functional: Functional::Boundary, ..Self::lipschitz(n, m, samples, seed) }
    }

    fn check(&self) -> Result<()> {
        let [lo, hi] = self.magnitude;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Stability(format!("magnitude range {lo}..{hi} is not a positive interval")));
        }
        if self.samples == 0 || self.m == 0 {
            return Err(Error::Stability("sample count and M must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub magnitude: f64,
    pub dgamma: Vec<AffinePiece>,
    pub dq: Vec<AffinePiece>,
}

impl Perturbation {
    /// Compact one-field description for the CSV.
    pub fn label(&self) -> String {
        let piece = |p: &AffinePiece| format!("{:e}:{:e}:{:e}:{:e}", p.offset, p.gradient[0], p.gradient[1], p.gradient[2]);
        let g: Vec<String> = self.dgamma.iter().map(piece).collect();
        let q: Vec<String> = self.dq.iter().map(piece).collect();
        format!("t={:e};dgamma={};dq={}", self.magnitude, g.join("|"), q.join("|"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sample_id: usize,
    pub perturbation: Perturbation,
    pub e: f64,
    pub d: f64,
    pub ratio: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub records: Vec<SweepRecord>,
    /// Samples left out of the fits, with the reason.
    pub excluded: Vec<(usize, String)>,
    /// `ln E` against `ln d`.
    pub fit: Option<LinearFit>,
    pub max_ratio: f64,
    /// `ln(E/d)` against the log magnitude; a significantly negative slope means `E/d`
    /// grows as the perturbation shrinks.
    pub trend: Option<LinearFit>,
    /// `(M, d)` on the first included sample.
    pub m_convergence: Vec<(usize, f64)>,
}

impl SweepResult {
    pub fn ratio_grows_as_perturbation_shrinks(&self) -> bool {
        self.trend.map(|t| t.slope_ci.1 < 0.0).unwrap_or(false)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample_id,perturbation,E,d,ratio\n");
        for r in &self.records {
            writeln!(s, "{},{},{:e},{:e},{:e}", r.sample_id, r.perturbation.label(), r.e, r.d, r.ratio).unwrap();
        }
        s
    }

    pub fn scatter(&self, title: &str) -> Scatter {
        let y_label = match self.spec.functional {
            Functional::Interior => "ln E",
            Functional::Boundary => "ln boundary sup",
        };
        Scatter {
            title: title.into(),
            x_label: "ln d".into(),
            y_label: y_label.into(),
            points: self.records.iter().map(|r| (r.d.ln(), r.e.ln())).collect(),
            line: self.fit.map(|f| (f.slope, f.intercept)),
        }
    }
}

fn random_piece(rng: &mut ChaCha8Rng, grad: f64) -> AffinePiece {
    let offset = rng.random_range(-1.0..1.0);
    let g: [f64; 3] = std::array::from_fn(|_| grad * rng.random_range(-1.0..1.0));
    AffinePiece::new(offset, g)
}

/// Functional value of the perturbation between `base` and `other`.
pub fn functional(base: &CoefficientPair, other: &CoefficientPair, which: Functional) -> Result<f64> {
    match which {
        Functional::Interior => Ok(error_functionals(base, other, base.partition.n_slabs())?.e),
        Functional::Boundary => {
            let ext = base.extension.as_ref();
            let d = &base.partition.domain;
            let (x, y) = match ext {
                Some(a) => (a.sigma.x, a.sigma.y),
                None => ([d.lower[0], d.upper[0]], [d.lower[1], d.upper[1]]),
            };
            let z = d.lower[2];
            let lo = crate::pt(x[0], y[0], z);
            let hi = crate::pt(x[1], y[1], z);
            let dg = base.gamma.slabs[0].sub(&other.gamma.slabs[0]).sup_abs(&lo, &hi).0;
            let dq = base.q.slabs[0].sub(&other.q.slabs[0]).sup_abs(&lo, &hi).0;
            Ok(dg + dq)
        }
    }
}

/// Draw the perturbations of a sweep; deterministic in the seed.
pub fn draw_perturbations(base: &CoefficientPair, spec: &SweepSpec) -> Result<Vec<Perturbation>> {
    spec.check()?;
    let n = base.partition.n_slabs();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (l0, l1) = (spec.magnitude[0].ln(), spec.magnitude[1].ln());
    (0..spec.samples)
        .map(|_| {
            let active = |j: usize| spec.support == Support::AllSlabs || j == 0;
            let zero = AffinePiece::constant(0.0);
            let dg: Vec<AffinePiece> = (0..n).map(|j| if active(j) { random_piece(&mut rng, spec.gradient_scale) } else { zero }).collect();
            let dq: Vec<AffinePiece> = (0..n).map(|j| if active(j) { random_piece(&mut rng, spec.gradient_scale).scale(spec.q_weight) } else { zero }).collect();
            let t = rng.random_range(l0..l1).exp();
            let unit = functional(base, &base.perturbed(&dg, &dq), spec.functional)?;
            if !(unit > 0.0) {
                return Err(Error::Stability("random direction has zero functional".into()));
            }
            let s = t / unit;
            Ok(Perturbation { magnitude: t, dgamma: dg.iter().map(|p| p.scale(s)).collect(), dq: dq.iter().map(|p| p.scale(s)).collect() })
        })
        .collect()
}

struct Sample {
    record: SweepRecord,
    subspace: CauchySubspace,
}

fn run_sample(base: &CoefficientPair, c1: &CauchySubspace, grid: &Arc<Grid>, norm: &BoundaryNorm, spec: &SweepSpec, id: usize, p: Perturbation) -> Result<Sample> {
    let other = base.perturbed(&p.dgamma, &p.dq);
    let c2 = sample_cauchy_space(&other, grid.clone(), norm, spec.m)?;
    let d = subspace_distance(c1, &c2)?.symmetric;
    let e = functional(base, &other, spec.functional)?;
    let warnings = c2.warnings.iter().map(|(m, w)| format!("mode {m:?}: {w}")).chain(c2.skipped.iter().map(|m| format!("mode {m:?} skipped"))).collect();
    Ok(Sample { record: SweepRecord { sample_id: id, perturbation: p, e, d, ratio: e / d, warnings }, subspace: c2 })
}

/// Run a sweep around `base` on an `n`-cell grid of `Ω` with `Σ` the full bottom face.
pub fn run_sweep(base: &CoefficientPair, spec: &SweepSpec) -> Result<SweepResult> {
    let perts = draw_perturbations(base, spec)?;
    let grid = Arc::new(Grid::for_omega(&base.partition, spec.n)?);
    let patch = match &base.extension {
        Some(a) => a.sigma,
        None => crate::geometry::Patch::bottom_face(&base.partition.domain),
    };
    let norm = build_boundary_norm(&grid, &patch, NODE_CAP)?;
    let c1 = sample_cauchy_space(base, grid.clone(), &norm, spec.m)?;
    let samples: Vec<Result<Sample>> = perts.into_par_iter().enumerate().map(|(i, p)| run_sample(base, &c1, &grid, &norm, spec, i, p)).collect();
    let mut records = Vec::new();
    let mut excluded = Vec::new();
    let mut first: Option<CauchySubspace> = None;
    for (i, s) in samples.into_iter().enumerate() {
        match s {
            Ok(s) if s.record.d > D_FLOOR && s.record.d < 1.0 && s.record.e > 0.0 => {
                if first.is_none() {
                    first = Some(s.subspace);
                }
                records.push(s.record);
            }
            Ok(s) => {
                log::warn!("sample {i} excluded: E = {:e}, d = {:e}", s.record.e, s.record.d);
                excluded.push((i, format!("E = {:e}, d = {:e}", s.record.e, s.record.d)));
            }
            Err(e) => {
                log::warn!("sample {i} failed: {e}");
                excluded.push((i, e.to_string()));
            }
        }
    }
    let es: Vec<f64> = records.iter().map(|r| r.e).collect();
    let ds: Vec<f64> = records.iter().map(|r| r.d).collect();
    let fit = loglog(&ds, &es).ok();
    let max_ratio = records.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let lt: Vec<f64> = records.iter().map(|r| r.perturbation.magnitude.ln()).collect();
    let lr: Vec<f64> = records.iter().map(|r| r.ratio.ln()).collect();
    let trend = ols(&lt, &lr).ok();
    let mut m_convergence = Vec::new();
    if let Some(c2) = first {
        for &m in spec.m_study.iter().filter(|&&m| m <= c1.pairs.len() && m <= c2.pairs.len()) {
            let a = CauchySubspace::from_pairs(&norm, c1.modes[..m].to_vec(), c1.pairs[..m].to_vec(), GRAM_CONDITION_CAP)?;
            let b = CauchySubspace::from_pairs(&norm, c2.modes[..m].to_vec(), c2.pairs[..m].to_vec(), GRAM_CONDITION_CAP)?;
            m_convergence.push((m, subspace_distance(&a, &b)?.symmetric));
        }
    }
    Ok(SweepResult { spec: spec.clone(), records, excluded, fit, max_ratio, trend, m_convergence })
}

/// Single-slab constant `γ` offsets: `(offset, d)` per offset, used to check monotonicity of `d`.
pub fn offset_ladder(base: &CoefficientPair, n: usize, m: usize, slab: usize, offsets: &[f64]) -> Result<Vec<(f64, f64)>> {
    let grid = Arc::new(Grid::for_omega(&base.partition, n)?);
    let norm = build_boundary_norm(&grid, &crate::geometry::Patch::bottom_face(&base.partition.domain), NODE_CAP)?;
    let c1 = sample_cauchy_space(base, grid.clone(), &norm, m)?;
    offsets
        .iter()
        .map(|&o| {
            let mut dg = vec![AffinePiece::constant(0.0); base.partition.n_slabs()];
            dg[slab] = AffinePiece::constant(o);
            let dq = vec![AffinePiece::constant(0.0); base.partition.n_slabs()];
            let c2 = sample_cauchy_space(&base.perturbed(&dg, &dq), grid.clone(), &norm, m)?;
            Ok((o, subspace_distance(&c1, &c2)?.symmetric))
        })
        .collect()
}
