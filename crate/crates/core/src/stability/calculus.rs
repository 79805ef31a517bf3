//! Scalar estimate calculus: the modulus `ω_η` and its iterates, the unique-continuation
//! exponent `τ_r`, the three-sphere exponent `β` and the propagation-of-smallness bound.

use crate::{Error, Result, Scalar};
use serde::{Deserialize, Serialize};

fn e2<T: Scalar>() -> T {
    T::lit((-2.0f64).exp())
}

/// `ω_η(t)`: `2^η e⁻² |ln t|^{−η}` on `(0, e⁻²)`, `e⁻²` above, `0` at `t = 0`.
pub fn omega1<T: Scalar>(t: T, eta: T) -> T {
    if t <= T::zero() {
        return T::zero();
    }
    if t >= e2() {
        return e2();
    }
    let two = T::lit(2.0);
    two.powf(eta) * e2::<T>() * (-t.ln()).powf(-eta)
}

/// `ω_η^{(j)}(t)`, with `ω^{(0)} = t^η` and `ω^{(j)} = ω ∘ ω^{(j−1)}` applied to `t`.
pub fn omega<T: Scalar>(t: T, eta: T, j: usize) -> T {
    if j == 0 {
        return if t <= T::zero() { T::zero() } else { t.powf(eta) };
    }
    let mut v = t;
    for _ in 0..j {
        v = omega1(v, eta);
    }
    v
}

/// Inverse of `ω_η` on `(0, e⁻²)`: `t = exp(−2 (e⁻²/s)^{1/η})`.
pub fn omega1_inverse<T: Scalar>(s: T, eta: T) -> Result<T> {
    if !(s > T::zero() && s < e2()) {
        return Err(Error::Stability(format!("ω inverse needs s in (0, e^-2), got {s}")));
    }
    Ok((-T::lit(2.0) * (e2::<T>() / s).powf(T::one() / eta)).exp())
}

/// Inverse of `ω_η^{(j)}` on its log regime.
pub fn omega_inverse<T: Scalar>(s: T, eta: T, j: usize) -> Result<T> {
    if j == 0 {
        if s < T::zero() {
            return Err(Error::Stability("negative argument".into()));
        }
        return Ok(s.powf(T::one() / eta));
    }
    let mut v = s;
    for _ in 0..j {
        v = omega1_inverse(v, eta)?;
    }
    Ok(v)
}

/// `τ_r = ln((12r₁−2r)/(12r₁−3r)) / ln((6r₁−r)/(2r₁))`.
pub fn tau_r<T: Scalar>(r1: T, r: T) -> Result<T> {
    let c = |x: f64| T::lit(x);
    if !(r > T::zero() && r1 > T::zero()) {
        return Err(Error::Stability("radii must be positive".into()));
    }
    let num_arg = (c(12.0) * r1 - c(2.0) * r) / (c(12.0) * r1 - c(3.0) * r);
    let den_arg = (c(6.0) * r1 - r) / (c(2.0) * r1);
    if !(num_arg > T::zero() && den_arg > T::zero()) || c(12.0) * r1 - c(3.0) * r <= T::zero() {
        return Err(Error::Stability(format!("nonpositive logarithm argument at r1 = {r1}, r = {r}")));
    }
    let den = den_arg.ln();
    if den == T::zero() {
        return Err(Error::Stability("τ_r denominator vanishes".into()));
    }
    Ok(num_arg.ln() / den)
}

/// `β = ln(2r₃/(r₂+r₃)) / ln(r₃/r₁)`.
pub fn three_sphere_beta<T: Scalar>(r1: T, r2: T, r3: T) -> Result<T> {
    if !(T::zero() < r1 && r1 < r2 && r2 < r3) {
        return Err(Error::Stability(format!("radii must satisfy 0 < r1 < r2 < r3, got {r1}, {r2}, {r3}")));
    }
    Ok((T::lit(2.0) * r3 / (r2 + r3)).ln() / (r3 / r1).ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UCBudget<T> {
    pub r1: T,
    pub r: T,
    pub beta: T,
    pub n1: usize,
    pub gamma_tilde: T,
    pub tau: T,
}

impl<T: Scalar> UCBudget<T> {
    /// Exponent `τ_r β^{N₁}` of the smallness ratio.
    pub fn exponent(&self) -> T {
        self.tau * self.beta.powi(self.n1 as i32)
    }

    /// `τ_r/r ≥ 1/(12 r₁ ln 3)`.
    pub fn invariant_holds(&self) -> bool {
        self.tau / self.r >= T::one() / (T::lit(12.0) * self.r1 * T::lit(3.0f64.ln()))
    }
}

/// Budget with `β` from the ball-chain radii `(r₁, 3r₁, 4r₁)`.
pub fn uc_budget<T: Scalar>(r1: T, r: T, n1: usize, n: usize) -> Result<UCBudget<T>> {
    let beta = three_sphere_beta(r1, T::lit(3.0) * r1, T::lit(4.0) * r1)?;
    uc_budget_with_beta(r1, r, n1, n, beta)
}

pub fn uc_budget_with_beta<T: Scalar>(r1: T, r: T, n1: usize, n: usize, beta: T) -> Result<UCBudget<T>> {
    if !(r > T::zero() && r <= r1) {
        return Err(Error::Stability(format!("need 0 < r <= r1, got r = {r}, r1 = {r1}")));
    }
    let tau = tau_r(r1, r)?;
    Ok(UCBudget { r1, r, beta, n1, gamma_tilde: T::lit(n as f64 / 2.0 - 1.0), tau })
}

/// `(E₀+ε₀) (ε₀/(ε₀+E₀))^{τ_r β^{N₁}} r^{−γ̃}` with unit constant.
pub fn propagation_bound<T: Scalar>(eps0: T, e0: T, b: &UCBudget<T>) -> Result<T> {
    if eps0 < T::zero() || e0 < T::zero() || (eps0 == T::zero() && e0 == T::zero()) {
        return Err(Error::Stability("need ε0, E0 ≥ 0, not both zero".into()));
    }
    let s = eps0 + e0;
    Ok(s * (eps0 / s).powf(b.exponent()) * b.r.powf(-b.gamma_tilde))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn omega_examples() {
        assert!(close(omega(1.0, 0.5, 1), (-2.0f64).exp(), 1e-15));
        assert!(close(omega((-4.0f64).exp(), 1.0, 1), 0.5 * (-2.0f64).exp(), 1e-14));
        let t = (-6.0f64).exp();
        let beta: f64 = 0.5;
        assert!(omega1(t / beta, 1.0) <= (1.0f64 * beta.powf(-0.5) * 1.0f64.exp()).ln().abs() * omega1(t, 1.0));
        assert_eq!(omega(0.0, 0.7, 3), 0.0);
        assert!(close(omega(0.25f64, 0.5, 0), 0.5, 1e-15));
    }

    #[test]
    fn tau_and_beta_examples() {
        let tau = tau_r(1.0, 1.0).unwrap();
        assert!(close(tau, (10.0f64 / 9.0).ln() / 2.5f64.ln(), 1e-14));
        assert!((tau - 0.114986).abs() < 1e-6);
        let b = uc_budget(1.0, 1.0, 1, 3).unwrap();
        assert!(b.invariant_holds());
        assert_eq!(b.gamma_tilde, 0.5);
        let beta: f64 = three_sphere_beta(0.25, 0.75, 1.0).unwrap();
        assert!((beta - 0.096322).abs() < 1e-6);
        assert!(three_sphere_beta(0.25, 1.0 - 1e-9, 1.0).unwrap() < 1e-8);
        assert!(three_sphere_beta(0.5, 0.4, 1.0).is_err());
    }

    #[test]
    fn propagation_examples() {
        let b = UCBudget { r1: 1.0, r: 0.25, beta: 1.0, n1: 0, gamma_tilde: 0.5, tau: 0.1 };
        let s = 3.0;
        let eps0 = (-4.0f64).exp() * s;
        let v = propagation_bound(eps0, s - eps0, &b).unwrap();
        assert!(close(v, s * (-0.4f64).exp() * 2.0, 1e-12));
        assert!((v / s - 1.34064).abs() < 1e-5);
        assert!(close(propagation_bound(0.3, 0.0, &b).unwrap(), 0.3 * 2.0, 1e-14));
        assert!(propagation_bound(1e-12, 1.0, &b).unwrap() < propagation_bound(1e-6, 1.0, &b).unwrap());
    }

    #[test]
    fn single_precision() {
        let a: f32 = omega((-4.0f32).exp(), 1.0, 1);
        assert!((a as f64 - 0.5 * (-2.0f64).exp()).abs() < 1e-6);
        assert!((three_sphere_beta(0.25f32, 0.75, 1.0).unwrap() - 0.096322).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn omega_monotone(a in 1e-12f64..1.0, b in 1e-12f64..1.0, eta in 0.05f64..1.0, j in 0usize..4) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(omega(lo, eta, j) <= omega(hi, eta, j) * (1.0 + 1e-14));
        }

        #[test]
        fn t_omega_inverse_t_nondecreasing(a in 1e-3f64..1e6, b in 1e-3f64..1e6, eta in 0.05f64..1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(lo * omega1(1.0 / lo, eta) <= hi * omega1(1.0 / hi, eta) * (1.0 + 1e-12));
        }

        #[test]
        fn composition_inequalities(t in 1e-30f64..1.0, beta in 0.01f64..0.99, eta in 0.05f64..1.0) {
            let lhs1 = omega1(t / beta, eta);
            let rhs1 = (1.0f64.exp() * beta.powf(-0.5)).ln().abs().powf(eta) * omega1(t, eta);
            prop_assert!(lhs1 <= rhs1 * (1.0 + 1e-12));
            prop_assert!(omega1(t.powf(beta), eta) <= (1.0 / beta).powf(eta) * omega1(t, eta) * (1.0 + 1e-12));
        }

        #[test]
        fn iterates_weaken_in_log_regime(t in 1e-300f64..0.1353, eta in 0.05f64..1.0, j in 1usize..4) {
            // ω(s) ≥ s on (0, e⁻²), so each extra iterate is a weaker modulus.
            prop_assert!(omega(t, eta, j + 1) >= omega(t, eta, j) * (1.0 - 1e-12));
            prop_assert!(omega(t, eta, j + 1) <= (-2.0f64).exp() * (1.0 + 1e-15));
        }

        #[test]
        fn inverse_round_trip(s in 1e-4f64..0.1353, eta in 0.5f64..1.0) {
            let t = omega1_inverse(s, eta).unwrap();
            prop_assume!(t.is_normal());
            prop_assert!(close(omega1(t, eta), s, 1e-10));
        }

        #[test]
        fn tau_invariant(r1 in 0.01f64..10.0, f in 0.001f64..0.999) {
            let b = uc_budget(r1, f * r1, 2, 3).unwrap();
            prop_assert!(b.invariant_holds());
        }

        #[test]
        fn beta_in_unit_interval(r1 in 0.01f64..1.0, a in 0.01f64..1.0, c in 0.01f64..1.0) {
            let r2 = r1 * (1.0 + 5.0 * a);
            let r3 = r2 * (1.0 + 5.0 * c);
            let b = three_sphere_beta(r1, r2, r3).unwrap();
            prop_assert!(b > 0.0 && b < 1.0);
        }
    }
}
