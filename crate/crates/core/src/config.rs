//! JSON run configuration for the batch front end.

use crate::coefficients::{validate, AffinePiece, CoefficientPair, MatrixField, ValidationBounds, ValidationReport};
use crate::geometry::{augment, build_slab_partition, AugmentedDomain, BoxDomain, Patch, SlabPartition};
use crate::{pt, Error, Point, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Smallest grid resolution accepted per axis.
pub const MIN_RESOLUTION: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    #[serde(default = "origin")]
    pub lower: Point,
    #[serde(default = "unit_corner")]
    pub upper: Point,
    pub r0: f64,
    /// Constant in `|Ω| ≤ C r0³`; defaults to the smallest admissible value.
    #[serde(default)]
    pub volume_constant: Option<f64>,
    #[serde(default)]
    pub cuts: Vec<f64>,
    /// Accessible patch on the bottom face; the whole face when absent.
    #[serde(default)]
    pub sigma: Option<Patch>,
    #[serde(default = "default_depth")]
    pub d0_depth: f64,
}

fn origin() -> Point {
    pt(0.0, 0.0, 0.0)
}

fn unit_corner() -> Point {
    pt(1.0, 1.0, 1.0)
}

fn default_depth() -> f64 {
    0.25
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub gamma: Vec<AffinePiece>,
    pub q: Vec<AffinePiece>,
    #[serde(default = "identity")]
    pub matrix: MatrixField,
}

fn identity() -> MatrixField {
    MatrixField::Identity
}

/// What to do when a Dirichlet solve reports the eigenvalue regime.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Escalation {
    /// Log the warning and continue.
    #[default]
    Skip,
    /// Stop with the dedicated exit status.
    Abort,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOptions {
    pub m: usize,
    pub samples: usize,
    pub magnitude: [f64; 2],
    pub gradient_scale: f64,
    pub q_weight: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { m: 16, samples: 24, magnitude: [1e-4, 1e-1], gradient_scale: 0.5, q_weight: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThreeSphereOptions {
    pub members: usize,
    pub basis: usize,
    pub center: Point,
    pub radii: [f64; 3],
}

impl Default for ThreeSphereOptions {
    fn default() -> Self {
        ThreeSphereOptions { members: 50, basis: 16, center: pt(0.5, 0.5, 0.5), radii: [0.1, 0.3, 0.4] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsymptoticsOptions {
    /// Interface index `m` of `Σ_m`.
    pub interface: usize,
    /// Source offsets; the cell offsets in `(4h, r0/8)` when empty.
    pub radii: Vec<f64>,
    pub drop_smallest: usize,
    /// Probe radius; `r0/4` when absent.
    pub probe_radius: Option<f64>,
}

impl Default for AsymptoticsOptions {
    fn default() -> Self {
        AsymptoticsOptions { interface: 2, radii: vec![], drop_smallest: 2, probe_radius: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SingularOptions {
    pub k: usize,
    /// Distances to `U_k`; the cell offsets in `[8h, r0/8]` when empty.
    pub radii: Vec<f64>,
    pub lateral: Option<(f64, f64)>,
}

impl Default for SingularOptions {
    fn default() -> Self {
        SingularOptions { k: 1, radii: vec![], lateral: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeOptions {
    /// Source for `green`; the centre of `D₀` when absent.
    pub source: Option<Point>,
    /// Boundary mode `(p, q)` for `solve` and the identity check.
    pub mode: (usize, usize),
    /// Basis size for `cauchy-distance`.
    pub m: usize,
    /// Kernel probe: `A0`, `γ⁺`, `γ⁻` and evaluation points `(x, y)`.
    pub kernel_gammas: (f64, f64),
    pub kernel_points: Vec<(Point, Point)>,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            source: None,
            mode: (1, 1),
            m: 16,
            kernel_gammas: (2.0, 1.0),
            kernel_points: vec![(pt(0.1, 0.05, 0.2), pt(-0.05, 0.1, -0.15)), (pt(0.1, 0.0, 0.2), pt(0.0, 0.05, 0.1))],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Validate,
    Solve,
    Green,
    KernelProbe,
    CauchyDistance,
    Singular,
    Asymptotics,
    ThreeSpheres,
    Sweep,
    BoundaryHolder,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Validate => "validate",
            Experiment::Solve => "solve",
            Experiment::Green => "green",
            Experiment::KernelProbe => "kernel-probe",
            Experiment::CauchyDistance => "cauchy-distance",
            Experiment::Singular => "singular",
            Experiment::Asymptotics => "asymptotics",
            Experiment::ThreeSpheres => "three-spheres",
            Experiment::Sweep => "sweep",
            Experiment::BoundaryHolder => "boundary-holder",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySpec,
    /// Background pair first; the second pair, when present, is the comparison pair.
    pub pairs: Vec<PairSpec>,
    pub grids: Vec<usize>,
    /// Experiments collated by `report`.
    #[serde(default)]
    pub experiments: Vec<Experiment>,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Worker threads; zero uses every core.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub on_indefinite: Escalation,
    #[serde(default)]
    pub bounds: ValidationBounds,
    #[serde(default)]
    pub sweep: SweepOptions,
    #[serde(default)]
    pub three_spheres: ThreeSphereOptions,
    #[serde(default)]
    pub asymptotics: AsymptoticsOptions,
    #[serde(default)]
    pub singular: SingularOptions,
    #[serde(default)]
    pub probe: ProbeOptions,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.check()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Structural checks that do not need a solve.
    pub fn check(&self) -> Result<()> {
        if self.grids.is_empty() {
            return Err(Error::Config("at least one grid resolution is required".into()));
        }
        if let Some(n) = self.grids.iter().find(|&&n| n < MIN_RESOLUTION) {
            return Err(Error::Config(format!("grid resolution {n} is below {MIN_RESOLUTION}")));
        }
        if self.pairs.is_empty() {
            return Err(Error::Config("at least one coefficient pair is required".into()));
        }
        let slabs = self.geometry.cuts.len() + 1;
        for (i, p) in self.pairs.iter().enumerate() {
            if p.gamma.len() != slabs || p.q.len() != slabs {
                return Err(Error::Config(format!("pair {i} needs {slabs} pieces for γ and q")));
            }
        }
        self.augmented().map(|_| ())
    }

    pub fn partition(&self) -> Result<SlabPartition> {
        let g = &self.geometry;
        let c = g.volume_constant.unwrap_or_else(|| {
            let v = (0..3).map(|a| g.upper[a] - g.lower[a]).product::<f64>();
            (v / g.r0.powi(3)).max(1.0)
        });
        let d = BoxDomain::new(g.lower, g.upper, g.r0, c).map_err(|e| Error::Config(e.to_string()))?;
        build_slab_partition(d, g.cuts.len() + 1, &g.cuts).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn augmented(&self) -> Result<AugmentedDomain> {
        let p = self.partition()?;
        let sigma = self.geometry.sigma.unwrap_or_else(|| Patch::bottom_face(&p.domain));
        augment(p, sigma, self.geometry.d0_depth, None).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn pair(&self, i: usize) -> Result<CoefficientPair> {
        let spec = self.pairs.get(i).ok_or_else(|| Error::Config(format!("the configuration has no pair {i}")))?;
        CoefficientPair::new(self.partition()?, spec.gamma.clone(), spec.q.clone(), spec.matrix.clone()).map_err(|e| Error::Config(e.to_string()))
    }

    /// The comparison pair, or an error naming the command that needs it.
    pub fn second_pair(&self, command: &str) -> Result<CoefficientPair> {
        if self.pairs.len() < 2 {
            return Err(Error::Config(format!("{command} needs two coefficient pairs")));
        }
        self.pair(1)
    }

    pub fn validate_pairs(&self) -> Result<Vec<ValidationReport>> {
        (0..self.pairs.len()).map(|i| self.pair(i).map(|p| validate(&p, &self.bounds))).collect()
    }

    pub fn grid(&self) -> usize {
        self.grids[0]
    }
}
