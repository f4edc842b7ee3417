//! Closed-form free and harmonic heat kernels and their dilated variants.
//!
//! The harmonic kernel of `∂ₓ² + λx²` is evaluated through `ω² = −4λ` only:
//! `sh(ωt)/ω = t·shc(ω²t²)` and `ch(ωt) = chz(ω²t²)`, so real λ of either sign
//! goes through the same code path.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{chz, shc};
use crate::surface::{surface_mul, surface_pow_half, ComplexVector, SurfaceTime};

/// Below this `|sh(ωt)/(ωt)|` the harmonic kernel is treated as sitting on a pole.
pub const POLE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicParams {
    lambda: f64,
    nu: usize,
}

impl HarmonicParams {
    pub fn new(lambda: f64, nu: usize) -> Result<Self> {
        if nu == 0 || !lambda.is_finite() {
            return Err(Error::InvalidInput(format!(
                "harmonic parameters need nu >= 1 and finite lambda (nu={nu}, lambda={lambda})"
            )));
        }
        Ok(HarmonicParams { lambda, nu })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    /// `ω² = −4λ`.
    pub fn omega_sq(&self) -> Complex64 {
        Complex64::new(-4.0 * self.lambda, 0.0)
    }
}

fn check_dims(x: &ComplexVector, y: &ComplexVector, nu: usize) -> Result<()> {
    if x.dim() != nu || y.dim() != nu {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: nu={nu}, |x|={}, |y|={}",
            x.dim(),
            y.dim()
        )));
    }
    Ok(())
}

fn four_pi_pow(nu: usize) -> f64 {
    (4.0 * PI).powf(-(nu as f64) / 2.0)
}

/// `p^free = (4πt)^{−ν/2} e^{−(x−y)²/4t}` with the prefactor taken on the sheet of `t`.
pub fn p_free(t: SurfaceTime, x: &ComplexVector, y: &ComplexVector, nu: usize) -> Result<Complex64> {
    check_dims(x, y, nu)?;
    let d = x - y;
    let prefactor = four_pi_pow(nu) * surface_pow_half(t, -(nu as i32));
    Ok(prefactor * (-d.square() / (4.0 * t.projection())).exp())
}

/// Shared body of the harmonic kernels.
///
/// `sheet_time` carries the `t^{−ν/2}` factor, `shc_time` is the time entering
/// `ω t` and `exp_time` is the `t` multiplying `shc` in the exponent denominator.
fn harmonic_body(
    sheet_time: SurfaceTime,
    shc_time: Complex64,
    exp_time: Complex64,
    x: &ComplexVector,
    y: &ComplexVector,
    params: &HarmonicParams,
) -> Result<Complex64> {
    let nu = params.nu;
    let z = params.omega_sq() * shc_time * shc_time;
    let s = shc(z);
    if s.norm() < POLE_TOLERANCE {
        return Err(Error::Pole { modulus: s.norm() });
    }
    let c = chz(z);
    let prefactor = four_pi_pow(nu)
        * surface_pow_half(sheet_time, -(nu as i32))
        * s.powf(-(nu as f64) / 2.0);
    let quad = c * (x.square() + y.square()) - 2.0 * x.dot(y);
    Ok(prefactor * (-0.25 * quad / (exp_time * s)).exp())
}

/// Harmonic (Mehler) kernel of `∂ₓ² + λx²`.
pub fn p_harm(
    t: SurfaceTime,
    x: &ComplexVector,
    y: &ComplexVector,
    params: &HarmonicParams,
) -> Result<Complex64> {
    check_dims(x, y, params.nu)?;
    if params.lambda == 0.0 {
        return p_free(t, x, y, params.nu);
    }
    let tp = t.projection();
    harmonic_body(t, tp, tp, x, y, params)
}

/// `p_ε^free = (4π e^{−iε} t)^{−ν/2} exp(−(x−y)²/4t)`.
pub fn p_free_rotated(
    t: SurfaceTime,
    x: &ComplexVector,
    y: &ComplexVector,
    nu: usize,
    epsilon: f64,
) -> Result<Complex64> {
    check_dims(x, y, nu)?;
    let back = surface_mul(SurfaceTime::unit(-epsilon), t);
    let d = x - y;
    let prefactor = four_pi_pow(nu) * surface_pow_half(back, -(nu as i32));
    Ok(prefactor * (-d.square() / (4.0 * t.projection())).exp())
}

/// `p_ε^harm`, the harmonic kernel of `∂ₓ² + λe^{−2iε}x²` seen from the direction `e^{iε}`.
pub fn p_harm_rotated(
    t: SurfaceTime,
    x: &ComplexVector,
    y: &ComplexVector,
    params: &HarmonicParams,
    epsilon: f64,
) -> Result<Complex64> {
    check_dims(x, y, params.nu)?;
    if params.lambda == 0.0 {
        return p_free_rotated(t, x, y, params.nu, epsilon);
    }
    let back = surface_mul(SurfaceTime::unit(-epsilon), t);
    harmonic_body(back, back.projection(), t.projection(), x, y, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::dilate;
    use proptest::prelude::*;

    fn v(x: f64) -> ComplexVector {
        ComplexVector::real(&[x])
    }

    #[test]
    fn free_examples() {
        let inv = (4.0 * PI).powf(-0.5);
        let p = p_free(SurfaceTime::unit(0.0), &v(0.0), &v(0.0), 1).unwrap();
        assert!((p.re - 0.28209479177).abs() < 1e-11 && p.im == 0.0);
        let p = p_free(SurfaceTime::unit(2.0 * PI), &v(0.0), &v(0.0), 1).unwrap();
        assert!((p.re + inv).abs() < 1e-15 && p.im.abs() < 1e-15);
        let z2 = ComplexVector::zeros(2);
        let p = p_free(SurfaceTime::unit(2.0 * PI), &z2, &z2, 2).unwrap();
        assert!((p.re - 1.0 / (4.0 * PI)).abs() < 1e-15 && p.im.abs() < 1e-15);
    }

    #[test]
    fn harmonic_examples() {
        let t = SurfaceTime::real(0.5).unwrap();
        let p = p_harm(t, &v(0.0), &v(0.0), &HarmonicParams::new(-1.0, 1).unwrap()).unwrap();
        // (2π sh 1)^{-1/2}
        assert!((p.re - 0.368005198707560812).abs() < 1e-14);

        // λ = +1 has ω = 2i: sh(2it)/(2i) = sin(2t)/2 and the value is real.
        let params = HarmonicParams::new(1.0, 1).unwrap();
        let t = SurfaceTime::real(0.3).unwrap();
        let p = p_harm(t, &v(0.4), &v(-0.1), &params).unwrap();
        let (s, c) = (0.6f64.sin(), 0.6f64.cos());
        let oracle = (2.0 * PI * s).powf(-0.5)
            * (-0.25 * 2.0 / s * (c * (0.16 + 0.01) - 2.0 * 0.4 * -0.1)).exp();
        assert!((p.re - oracle).abs() < 1e-14 * oracle && p.im.abs() < 1e-16);
    }

    #[test]
    fn lambda_zero_is_free() {
        let params = HarmonicParams::new(0.0, 1).unwrap();
        let t = SurfaceTime::new(0.4, 0.7).unwrap();
        assert_eq!(
            p_harm(t, &v(0.3), &v(1.0), &params).unwrap(),
            p_free(t, &v(0.3), &v(1.0), 1).unwrap()
        );
    }

    #[test]
    fn pole_is_reported() {
        // λ = 1: sin(2t) = 0 at t = π/2
        let params = HarmonicParams::new(1.0, 1).unwrap();
        let t = SurfaceTime::real(PI / 2.0).unwrap();
        assert!(matches!(p_harm(t, &v(0.0), &v(0.0), &params), Err(Error::Pole { .. })));
    }

    #[test]
    fn rotated_examples() {
        let t = SurfaceTime::new(0.3, 0.2).unwrap();
        let (x, y) = (v(0.5), v(-0.25));
        assert_eq!(p_free_rotated(t, &x, &y, 1, 0.0).unwrap(), p_free(t, &x, &y, 1).unwrap());
        let params = HarmonicParams::new(-0.7, 1).unwrap();
        let a = p_harm_rotated(t, &x, &y, &params, 0.0).unwrap();
        let b = p_harm(t, &x, &y, &params).unwrap();
        assert!((a - b).norm() <= 1e-15 * b.norm());

        let p = p_free_rotated(SurfaceTime::unit(PI), &v(0.0), &v(0.0), 1, PI).unwrap();
        assert!((p.re - (4.0 * PI).powf(-0.5)).abs() < 1e-15 && p.im.abs() < 1e-15);
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let t = SurfaceTime::real(1.0).unwrap();
        assert!(p_free(t, &v(0.0), &ComplexVector::zeros(2), 1).is_err());
    }

    proptest! {
        #[test]
        fn kernels_are_symmetric(r in 0.05f64..2.0, th in -1.2f64..1.2, x in -2.0f64..2.0, y in -2.0f64..2.0, lam in -1.0f64..1.0) {
            let t = SurfaceTime::new(r, th).unwrap();
            let params = HarmonicParams::new(lam, 1).unwrap();
            prop_assert_eq!(p_free(t, &v(x), &v(y), 1).unwrap(), p_free(t, &v(y), &v(x), 1).unwrap());
            if let (Ok(a), Ok(b)) = (p_harm(t, &v(x), &v(y), &params), p_harm(t, &v(y), &v(x), &params)) {
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn dilation_covariance(r in 0.05f64..1.0, th in -1.0f64..1.0, eps in 0.0f64..(4.0 * PI), x in -1.5f64..1.5, y in -1.5f64..1.5) {
            let t = SurfaceTime::new(r, th).unwrap();
            let (td, xd, yd) = dilate(t, &v(x), &v(y), eps);
            let free = p_free(t, &v(x), &v(y), 1).unwrap();
            let rot = p_free_rotated(td, &xd, &yd, 1, eps).unwrap();
            prop_assert!((free - rot).norm() <= 1e-13 * free.norm());

            let params = HarmonicParams::new(-0.8, 1).unwrap();
            let h = p_harm(t, &v(x), &v(y), &params).unwrap();
            let hr = p_harm_rotated(td, &xd, &yd, &params, eps).unwrap();
            prop_assert!((h - hr).norm() <= 1e-13 * h.norm());
        }
    }
}
