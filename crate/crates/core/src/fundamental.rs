//! Laplace kernel in R³ and the biphase fundamental solution for a two-valued
//! scalar coefficient across the flat interface `{z = 0}` with frozen anisotropy `A0`.

use crate::linalg::{Mat3, Vec3};
use crate::{Error, Result, Scalar};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelValue<T> {
    pub value: T,
    pub grad_x: Vec3<T>,
    pub grad_y: Vec3<T>,
    pub hess_x: Mat3<T>,
    pub hess_y: Mat3<T>,
    /// `mixed[i][j] = ∂x_i ∂y_j`.
    pub mixed: Mat3<T>,
}

impl<T: Scalar> KernelValue<T> {
    pub fn zero() -> Self {
        KernelValue {
            value: T::zero(),
            grad_x: Vec3::zero(),
            grad_y: Vec3::zero(),
            hess_x: Mat3::zero(),
            hess_y: Mat3::zero(),
            mixed: Mat3::zero(),
        }
    }

    fn accumulate(&mut self, o: &Self) {
        self.value = self.value + o.value;
        self.grad_x += o.grad_x;
        self.grad_y += o.grad_y;
        self.hess_x = self.hess_x.add(&o.hess_x);
        self.hess_y = self.hess_y.add(&o.hess_y);
        self.mixed = self.mixed.add(&o.mixed);
    }

    pub fn scaled(&self, s: T) -> Self {
        KernelValue {
            value: self.value * s,
            grad_x: self.grad_x.scale(s),
            grad_y: self.grad_y.scale(s),
            hess_x: self.hess_x.scale(s),
            hess_y: self.hess_y.scale(s),
            mixed: self.mixed.scale(s),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad_x.is_finite()
            && self.grad_y.is_finite()
            && [self.hess_x, self.hess_y, self.mixed].iter().all(|m| m.max_abs().is_finite())
    }
}

/// `c · Γ(P x, Q y)` with all derivatives, `Γ(w) = 1/(4π|w|)`.
fn image_term<T: Scalar>(c: T, p: &Mat3<T>, q: &Mat3<T>, x: &Vec3<T>, y: &Vec3<T>) -> Result<KernelValue<T>> {
    let d = p.mul_vec(x) - q.mul_vec(y);
    let rho2 = d.norm_sq();
    if !(rho2 > T::zero()) {
        return Err(Error::Kernel("coincident points".into()));
    }
    let rho = rho2.sqrt();
    let four_pi = T::lit(4.0) * T::PI();
    let g0 = T::one() / (four_pi * rho);
    let g = d.scale(-T::one() / (four_pi * rho * rho2));
    let hd = d.outer(&d).scale(T::lit(3.0) / rho2).sub(&Mat3::identity()).scale(T::one() / (four_pi * rho * rho2));
    let pt = p.transpose();
    let qt = q.transpose();
    Ok(KernelValue {
        value: c * g0,
        grad_x: pt.mul_vec(&g).scale(c),
        grad_y: qt.mul_vec(&g).scale(-c),
        hess_x: pt.matmul(&hd).matmul(p).scale(c),
        hess_y: qt.matmul(&hd).matmul(q).scale(c),
        mixed: pt.matmul(&hd).matmul(q).scale(-c),
    })
}

/// Laplace fundamental solution `1/(4π|x−y|)`, normalised by `−ΔΓ = δ`.
pub fn gamma_laplace<T: Scalar>(x: &Vec3<T>, y: &Vec3<T>) -> Result<KernelValue<T>> {
    let i = Mat3::identity();
    image_term(T::one(), &i, &i, x, y)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiphaseFundamental<T> {
    pub gamma_plus: T,
    pub gamma_minus: T,
    pub a0: Mat3<T>,
    pub l: Mat3<T>,
    pub j: Mat3<T>,
    pub det_j: T,
}

/// Which side of `{z = 0}` an on-interface coordinate belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Above,
    Below,
}

/// Build the kernel parameters. `L = U⁻¹` where `A0 = U Uᵀ` with `U` upper triangular:
/// this gauge keeps `(Lx)_z` proportional to `x_z`, so `L` maps the interface onto itself.
pub fn build_biphase<T: Scalar>(a0: &Mat3<T>, gamma_plus: T, gamma_minus: T) -> Result<BiphaseFundamental<T>> {
    let tol = T::lit(1e-12) * a0.max_abs();
    if !a0.is_symmetric(tol) {
        return Err(Error::Kernel("A0 is not symmetric".into()));
    }
    if !(gamma_plus > T::zero() && gamma_minus > T::zero()) {
        return Err(Error::Kernel("phase values must be positive".into()));
    }
    let u = a0.cholesky_upper().ok_or_else(|| Error::Kernel("A0 is not positive definite".into()))?;
    let l = u.inverse().ok_or_else(|| Error::Kernel("singular Cholesky factor".into()))?;
    let ainv = a0.inverse().ok_or_else(|| Error::Kernel("A0 is singular".into()))?;
    let j = ainv.sym_sqrt().ok_or_else(|| Error::Kernel("A0⁻¹ has a negative eigenvalue".into()))?;
    let det_j = j.det();
    if !(det_j > T::zero()) {
        return Err(Error::Kernel("det J is not positive".into()));
    }
    Ok(BiphaseFundamental { gamma_plus, gamma_minus, a0: *a0, l, j, det_j })
}

impl<T: Scalar> BiphaseFundamental<T> {
    /// `max(‖L⁻¹L⁻ᵀ − A0‖, ‖J² − A0⁻¹‖)` relative to the entries of `A0` and `A0⁻¹`.
    pub fn invariant_residual(&self) -> T {
        let li = self.l.inverse().expect("L invertible");
        let r1 = li.matmul(&li.transpose()).sub(&self.a0).max_abs() / self.a0.max_abs();
        let ainv = self.a0.inverse().expect("A0 invertible");
        let r2 = self.j.matmul(&self.j).sub(&ainv).max_abs() / ainv.max_abs();
        r1.max(r2)
    }

    fn side_of(z: T, hint: Option<Side>) -> Result<Side> {
        if z > T::zero() {
            Ok(Side::Above)
        } else if z < T::zero() {
            Ok(Side::Below)
        } else {
            hint.ok_or_else(|| Error::Kernel("on-interface evaluation needs a side hint".into()))
        }
    }

    /// Evaluate `H(x, y)` and its derivatives. `hint` resolves coordinates lying exactly on `{z = 0}`.
    pub fn eval(&self, x: &Vec3<T>, y: &Vec3<T>, hint: Option<Side>) -> Result<KernelValue<T>> {
        let sx = Self::side_of(x[2], hint)?;
        let sy = Self::side_of(self.l.mul_vec(y)[2], hint)?;
        let (gp, gm) = (self.gamma_plus, self.gamma_minus);
        let l = &self.l;
        let refl = Mat3::diag(T::one(), T::one(), -T::one()).matmul(l);
        let mut out = if sx != sy {
            image_term(T::lit(2.0) / (gp + gm), l, l, x, y)?
        } else {
            let (g1, g2) = if sx == Side::Above { (gp, gm) } else { (gm, gp) };
            let mut k = image_term(T::one() / g1, l, l, x, y)?;
            let coef = (g1 - g2) / (g1 * (g1 + g2));
            if coef != T::zero() {
                k.accumulate(&image_term(coef, l, &refl, x, y)?);
            }
            k
        };
        out = out.scaled(self.det_j);
        Ok(out)
    }
}

pub fn eval_h<T: Scalar>(bp: &BiphaseFundamental<T>, x: &Vec3<T>, y: &Vec3<T>, hint: Option<Side>) -> Result<KernelValue<T>> {
    bp.eval(x, y, hint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pt;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn laplace_examples() {
        let k = gamma_laplace(&pt(0.0, 0.0, 0.0), &pt(1.0, 0.0, 0.0)).unwrap();
        assert!(rel(k.value, 0.25 / std::f64::consts::PI) < 1e-15);
        assert!(rel(k.grad_x.norm(), 0.25 / std::f64::consts::PI) < 1e-15);
        let a = pt(0.3, -0.2, 0.9);
        let b = pt(-0.1, 0.4, 0.1);
        assert_eq!(gamma_laplace(&a, &b).unwrap().value, gamma_laplace(&b, &a).unwrap().value);
        assert!(gamma_laplace(&a, &a).is_err());
    }

    #[test]
    fn build_examples() {
        let b = build_biphase(&Mat3::identity(), 1.0, 1.0).unwrap();
        assert_eq!(b.l, Mat3::identity());
        assert_eq!(b.det_j, 1.0);
        let b = build_biphase(&Mat3::<f64>::diag(4.0, 1.0, 1.0), 1.0, 1.0).unwrap();
        assert!(b.l.sub(&Mat3::diag(0.5, 1.0, 1.0)).max_abs() < 1e-15);
        assert!(b.j.sub(&Mat3::diag(0.5, 1.0, 1.0)).max_abs() < 1e-14);
        // det diag(1/2, 1, 1) = 1/2, the Jacobian 1/√det A0 of the change of variables.
        assert!((b.det_j - 0.5).abs() < 1e-14);
        assert!(build_biphase(&Mat3::diag(1.0, -1.0, 1.0), 1.0, 1.0).is_err());
    }

    #[test]
    fn branch_examples() {
        let b = build_biphase(&Mat3::identity(), 2.0, 1.0).unwrap();
        let cross = b.eval(&pt(0.0, 0.0, 1.0), &pt(0.0, 0.0, -1.0), None).unwrap();
        assert!(rel(cross.value, 1.0 / (12.0 * std::f64::consts::PI)) < 1e-14);
        let above = b.eval(&pt(0.0, 0.0, 1.0), &pt(0.0, 0.0, 2.0), None).unwrap();
        let pi = std::f64::consts::PI;
        assert!(rel(above.value, 0.5 / (4.0 * pi) + 1.0 / (6.0 * 12.0 * pi)) < 1e-14);
        assert!(b.eval(&pt(0.0, 0.0, 0.0), &pt(0.0, 0.0, 1.0), None).is_err());
        assert!(b.eval(&pt(0.0, 0.0, 0.0), &pt(0.0, 0.0, 1.0), Some(Side::Below)).is_ok());
    }

    fn spd() -> impl Strategy<Value = Mat3<f64>> {
        prop::array::uniform9(-0.4f64..0.4).prop_map(|v| {
            let m = Mat3([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]]);
            m.matmul(&m.transpose()).add(&Mat3::identity())
        })
    }

    fn side_point() -> impl Strategy<Value = Vec3<f64>> {
        (-1.0f64..1.0, -1.0f64..1.0, 0.2f64..1.0, any::<bool>()).prop_map(|(a, b, c, s)| pt(a, b, if s { c } else { -c }))
    }

    fn fd_check(b: &BiphaseFundamental<f64>, x: &Vec3<f64>, y: &Vec3<f64>) -> f64 {
        let h = 1e-5;
        let k = b.eval(x, y, None).unwrap();
        let mut worst = 0.0f64;
        let scale_g = k.grad_x.max_abs().max(k.grad_y.max_abs());
        let scale_h = k.hess_y.max_abs().max(k.mixed.max_abs()).max(k.hess_x.max_abs());
        for a in 0..3 {
            let e = Vec3::<f64>::unit(a).scale(h);
            let kxp = b.eval(&(*x + e), y, None).unwrap();
            let kxm = b.eval(&(*x - e), y, None).unwrap();
            let kyp = b.eval(x, &(*y + e), None).unwrap();
            let kym = b.eval(x, &(*y - e), None).unwrap();
            worst = worst.max(((kxp.value - kxm.value) / (2.0 * h) - k.grad_x[a]).abs() / scale_g);
            worst = worst.max(((kyp.value - kym.value) / (2.0 * h) - k.grad_y[a]).abs() / scale_g);
            for c in 0..3 {
                let hy = (kyp.grad_y[c] - kym.grad_y[c]) / (2.0 * h);
                worst = worst.max((hy - k.hess_y.0[c][a]).abs() / scale_h);
                let hx = (kxp.grad_x[c] - kxm.grad_x[c]) / (2.0 * h);
                worst = worst.max((hx - k.hess_x.0[c][a]).abs() / scale_h);
                let mx = (kyp.grad_x[c] - kym.grad_x[c]) / (2.0 * h);
                worst = worst.max((mx - k.mixed.0[c][a]).abs() / scale_h);
            }
        }
        worst
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn equal_phase_collapse(x in side_point(), y in side_point(), g in 0.5f64..3.0) {
            let b = build_biphase(&Mat3::identity(), 1.0, 1.0).unwrap();
            let h = b.eval(&x, &y, None).unwrap();
            let l = gamma_laplace(&x, &y).unwrap();
            prop_assert!(rel(h.value, l.value) < 1e-14);
            let bg = build_biphase(&Mat3::identity(), g, g).unwrap();
            prop_assert!(rel(bg.eval(&x, &y, None).unwrap().value * g, l.value) < 1e-14);
        }

        #[test]
        fn invariants_hold(a in spd(), gp in 0.2f64..5.0, gm in 0.2f64..5.0) {
            let b = build_biphase(&a, gp, gm).unwrap();
            prop_assert!(b.invariant_residual() < 1e-12);
            prop_assert!(b.det_j > 0.0);
            prop_assert!(b.l.0[2][0] == 0.0 && b.l.0[2][1] == 0.0);
        }

        #[test]
        fn derivatives_match_differences(a in spd(), gp in 0.3f64..3.0, gm in 0.3f64..3.0, x in side_point(), y in side_point()) {
            let b = build_biphase(&a, gp, gm).unwrap();
            prop_assume!((x - y).norm() > 0.3);
            prop_assert!(fd_check(&b, &x, &y) < 1e-6);
        }

        #[test]
        fn transmission_conditions(a in spd(), gp in 0.3f64..3.0, gm in 0.3f64..3.0, tx in -1.0f64..1.0, ty in -1.0f64..1.0, y in side_point()) {
            let b = build_biphase(&a, gp, gm).unwrap();
            let x0 = pt(tx, ty, 0.0);
            let up = b.eval(&x0, &y, Some(Side::Above)).unwrap();
            let dn = b.eval(&x0, &y, Some(Side::Below)).unwrap();
            prop_assert!((up.value - dn.value).abs() <= 1e-10 * up.value.abs().max(1e-3));
            let fu = a.mul_vec(&up.grad_x)[2] * gp;
            let fd = a.mul_vec(&dn.grad_x)[2] * gm;
            prop_assert!((fu - fd).abs() <= 1e-10 * up.grad_x.norm().max(1e-3));
        }

        #[test]
        fn tangential_rotation_invariance(phi in 0.0f64..6.28, x in side_point(), y in side_point()) {
            let b = build_biphase(&Mat3::identity(), 2.5, 0.7).unwrap();
            let (c, s) = (phi.cos(), phi.sin());
            let r = Mat3([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]);
            let h0 = b.eval(&x, &y, None).unwrap().value;
            let h1 = b.eval(&r.mul_vec(&x), &r.mul_vec(&y), None).unwrap().value;
            prop_assert!(rel(h1, h0) < 1e-12);
        }
    }

    #[test]
    fn pde_residual_vanishes() {
        let a = Mat3([[1.3, 0.2, 0.1], [0.2, 1.0, -0.15], [0.1, -0.15, 0.8]]);
        let b = build_biphase(&a, 2.0, 0.6).unwrap();
        let y = pt(0.1, -0.2, -0.4);
        let x = pt(0.3, 0.2, 0.5);
        let k = b.eval(&x, &y, None).unwrap();
        let tr: f64 = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| a.0[i][j] * k.hess_x.0[i][j]).sum();
        assert!(tr.abs() < 1e-12 * k.hess_x.max_abs());
        // Discrete operator applied to the closed form converges at second order.
        let res = |h: f64| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    let (ei, ej) = (Vec3::<f64>::unit(i).scale(h), Vec3::<f64>::unit(j).scale(h));
                    let f = |p: Vec3<f64>| b.eval(&p, &y, None).unwrap().value;
                    let d2 = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4.0 * h * h);
                    s += a.0[i][j] * d2;
                }
            }
            s.abs()
        };
        let (r1, r2) = (res(0.02), res(0.01));
        assert!(r1 / r2 > 3.0, "ratio {}", r1 / r2);
    }

    #[test]
    fn single_precision_agrees() {
        let b32 = build_biphase(&Mat3::<f32>::identity(), 2.0, 1.0).unwrap();
        let b64 = build_biphase(&Mat3::<f64>::identity(), 2.0, 1.0).unwrap();
        let v32 = b32.eval(&Vec3([0.1f32, 0.2, 0.7]), &Vec3([0.0f32, 0.0, 0.4]), None).unwrap().value;
        let v64 = b64.eval(&pt(0.1, 0.2, 0.7), &pt(0.0, 0.0, 0.4), None).unwrap().value;
        assert!(rel(v32 as f64, v64) < 1e-5);
    }
}
