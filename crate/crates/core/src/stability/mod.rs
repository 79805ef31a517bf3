//! Estimate calculus, three-sphere verification, asymptotic exponent fits and sweeps.

pub mod asymptotics;
pub mod calculus;
pub mod sweep;
pub mod three_sphere;
