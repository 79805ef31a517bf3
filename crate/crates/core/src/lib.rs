//! Numerical laboratory for the Lipschitz stability of piecewise-affine
//! conductivity and absorption coefficients from local Cauchy data.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: box domain, slab partition, the augmented domain with its Robin patch, chain sets.
//! * [`coefficients`]: piecewise-affine `γ`, `q`, the anisotropy field `A`, assumption checks.
//! * [`fundamental`]: the Laplace kernel and the biphase fundamental solution.
//! * [`solver`]: finite-volume assembly, Green and Dirichlet solves, traces.
//! * [`cauchy`]: fractional boundary norms, sampled Cauchy data, subspace distance.
//! * [`singular`]: singular solutions and the Green identity check.
//! * [`stability`]: modulus calculus, three-sphere checks, exponent fits and sweeps.
//!
//! Closed-form kernels and the scalar estimate calculus are generic over [`Scalar`]
//! (`f32` or `f64`); the PDE machinery works in `f64` and `Complex64`.

pub mod cache;
pub mod cauchy;
pub mod coefficients;
pub mod config;
pub mod fit;
pub mod fundamental;
pub mod geometry;
pub mod linalg;
pub mod plot;
pub mod singular;
pub mod solver;
pub mod stability;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

pub use num_complex::Complex64;

/// Real scalar used by the generic kernels.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub type Point = linalg::Vec3<f64>;
pub type Matrix3 = linalg::Mat3<f64>;
pub type Biphase = fundamental::BiphaseFundamental<f64>;
pub type Kernel = fundamental::KernelValue<f64>;
pub type Budget = stability::calculus::UCBudget<f64>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("coefficients: {0}")]
    Coefficients(String),
    #[error("kernel: {0}")]
    Kernel(String),
    #[error("grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Solve(#[from] solver::SolveWarning),
    #[error("cauchy data: {0}")]
    Cauchy(String),
    #[error("singular solution: {0}")]
    Singular(String),
    #[error("stability: {0}")]
    Stability(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Convenience constructor for points.
pub fn pt(x: f64, y: f64, z: f64) -> Point {
    linalg::Vec3([x, y, z])
}
