//! Arithmetic on the Riemann surface of the square root.
//!
//! A point of the surface is a modulus together with an argument in ℝ/4πℤ.
//! Only odd powers of `t^{1/2}` see the difference between the two sheets,
//! which is exactly what the `(4πt)^{-ν/2}` prefactor of the heat kernel needs.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Index, Mul, Neg, Sub};

use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * PI;
pub const FOUR_PI: f64 = 4.0 * PI;

/// Reduce `x` to `[0, period)`.
pub fn wrap(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    // rem_euclid can round up to `period` for tiny negative inputs.
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Reduce `x` to `(-period/2, period/2]`.
pub fn wrap_centered(x: f64, period: f64) -> f64 {
    let r = wrap(x, period);
    if r > period / 2.0 {
        r - period
    } else {
        r
    }
}

/// An angle in radians that remembers when it is an exact rational multiple of π.
///
/// Sector apertures such as `π/2 − 2θ` are reported exactly when `θ` is known
/// exactly; any operation with an inexact operand drops the exact form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Angle {
    radians: f64,
    pi_multiple: Option<Ratio<i64>>,
}

impl Angle {
    pub const ZERO: Angle = Angle {
        radians: 0.0,
        pi_multiple: None,
    };

    pub fn radians(x: f64) -> Self {
        Angle {
            radians: x,
            pi_multiple: None,
        }
    }

    /// The exact angle `num/den · π`.
    pub fn pi_frac(num: i64, den: i64) -> Self {
        Self::from_ratio(Ratio::new(num, den))
    }

    pub fn from_ratio(q: Ratio<i64>) -> Self {
        Angle {
            radians: *q.numer() as f64 / *q.denom() as f64 * PI,
            pi_multiple: Some(q),
        }
    }

    /// Recognise `x` as `p/q · π` with `q ≤ max_den` when it matches to `tol`.
    pub fn recognize(x: f64, max_den: i64, tol: f64) -> Self {
        let ratio = x / PI;
        for den in 1..=max_den {
            let num = (ratio * den as f64).round();
            if ((num / den as f64) * PI - x).abs() <= tol {
                return Self::from_ratio(Ratio::new(num as i64, den));
            }
        }
        Self::radians(x)
    }

    pub fn value(&self) -> f64 {
        self.radians
    }

    pub fn pi_fraction(&self) -> Option<Ratio<i64>> {
        self.pi_multiple
    }

    pub fn is_exact(&self) -> bool {
        self.pi_multiple.is_some()
    }

    pub fn scale(self, k: i64) -> Self {
        match self.pi_multiple {
            Some(q) => Self::from_ratio(q * k),
            None => Self::radians(self.radians * k as f64),
        }
    }
}

impl Add for Angle {
    type Output = Angle;
    fn add(self, rhs: Angle) -> Angle {
        match (self.pi_multiple, rhs.pi_multiple) {
            (Some(a), Some(b)) => Angle::from_ratio(a + b),
            _ => Angle::radians(self.radians + rhs.radians),
        }
    }
}

impl Sub for Angle {
    type Output = Angle;
    fn sub(self, rhs: Angle) -> Angle {
        self + (-rhs)
    }
}

impl Neg for Angle {
    type Output = Angle;
    fn neg(self) -> Angle {
        match self.pi_multiple {
            Some(q) => Angle::from_ratio(-q),
            None => Angle::radians(-self.radians),
        }
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pi_multiple {
            Some(q) if q.is_zero() => write!(f, "0"),
            Some(q) => {
                let sign = if q.is_negative() { "-" } else { "" };
                let (n, d) = (q.numer().abs(), *q.denom());
                match (n, d) {
                    (1, 1) => write!(f, "{sign}π"),
                    (n, 1) => write!(f, "{sign}{n}π"),
                    (1, d) => write!(f, "{sign}π/{d}"),
                    (n, d) => write!(f, "{sign}{n}π/{d}"),
                }
            }
            None => write!(f, "{}", self.radians),
        }
    }
}

/// A point `r·e^{iθ}` of the square-root surface, `θ ∈ [0, 4π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSurfaceTime")]
pub struct SurfaceTime {
    r: f64,
    theta: f64,
}

#[derive(Deserialize)]
struct RawSurfaceTime {
    r: f64,
    theta: f64,
}

impl TryFrom<RawSurfaceTime> for SurfaceTime {
    type Error = Error;
    fn try_from(raw: RawSurfaceTime) -> Result<Self> {
        SurfaceTime::new(raw.r, raw.theta)
    }
}

impl SurfaceTime {
    pub fn new(r: f64, theta: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() || !theta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "surface point needs finite r > 0, got r={r}, theta={theta}"
            )));
        }
        Ok(SurfaceTime {
            r,
            theta: wrap(theta, FOUR_PI),
        })
    }

    /// A positive real time on the principal sheet.
    pub fn real(t: f64) -> Result<Self> {
        Self::new(t, 0.0)
    }

    /// The unit point `e^{iθ}`.
    pub fn unit(theta: f64) -> Self {
        SurfaceTime {
            r: 1.0,
            theta: wrap(theta, FOUR_PI),
        }
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Image in ℂ∖{0}.
    pub fn projection(&self) -> Complex64 {
        Complex64::from_polar(self.r, self.theta)
    }

    pub fn mul(self, other: SurfaceTime) -> SurfaceTime {
        surface_mul(self, other)
    }

    pub fn scale(self, factor: f64) -> Result<SurfaceTime> {
        SurfaceTime::new(self.r * factor, self.theta)
    }

    /// `z^{k/2}` on this sheet.
    pub fn pow_half(self, k: i32) -> Complex64 {
        surface_pow_half(self, k)
    }
}

/// Product on the surface: moduli multiply, arguments add in ℝ/4πℤ.
pub fn surface_mul(a: SurfaceTime, b: SurfaceTime) -> SurfaceTime {
    SurfaceTime {
        r: a.r * b.r,
        theta: wrap(a.theta + b.theta, FOUR_PI),
    }
}

/// `z^{k/2} = r^{k/2} e^{ikθ/2}`.
///
/// For even `k` the argument is first reduced mod 2π so the result only
/// depends on the projection of `z`.
pub fn surface_pow_half(z: SurfaceTime, k: i32) -> Complex64 {
    let modulus = z.r.powf(k as f64 / 2.0);
    let phase = if k % 2 == 0 {
        (k / 2) as f64 * wrap(z.theta, TWO_PI)
    } else {
        k as f64 * z.theta / 2.0
    };
    Complex64::from_polar(modulus, phase)
}

/// A vector of ν complex numbers with the bilinear dot product `λ·μ = Σ λ_j μ_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComplexVector(Vec<Complex64>);

impl ComplexVector {
    pub fn new(components: Vec<Complex64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("vector dimension must be >= 1".into()));
        }
        Ok(ComplexVector(components))
    }

    pub fn real(components: &[f64]) -> Self {
        assert!(!components.is_empty(), "vector dimension must be >= 1");
        ComplexVector(components.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn zeros(nu: usize) -> Self {
        assert!(nu >= 1, "vector dimension must be >= 1");
        ComplexVector(vec![Complex64::zero(); nu])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[Complex64] {
        &self.0
    }

    pub fn dot(&self, other: &ComplexVector) -> Complex64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// `λ² = λ·λ` (no conjugation).
    pub fn square(&self) -> Complex64 {
        self.dot(self)
    }

    /// `|λ| = (λ·λ̄)^{1/2}`.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, factor: Complex64) -> ComplexVector {
        ComplexVector(self.0.iter().map(|c| c * factor).collect())
    }

    pub fn is_real(&self) -> bool {
        self.0.iter().all(|c| c.im == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

impl Index<usize> for ComplexVector {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.0[i]
    }
}

impl Sub for &ComplexVector {
    type Output = ComplexVector;
    fn sub(self, rhs: &ComplexVector) -> ComplexVector {
        ComplexVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Add for &ComplexVector {
    type Output = ComplexVector;
    fn add(self, rhs: &ComplexVector) -> ComplexVector {
        ComplexVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Mul<Complex64> for &ComplexVector {
    type Output = ComplexVector;
    fn mul(self, rhs: Complex64) -> ComplexVector {
        self.scale(rhs)
    }
}

/// The analytic dilation `(t, x, y) ↦ (e^{iε}t, e^{iε/2}x, e^{iε/2}y)`.
///
/// `epsilon` is taken in ℝ/4πℤ; the half angle uses its `[0, 4π)` representative.
pub fn dilate(
    t: SurfaceTime,
    x: &ComplexVector,
    y: &ComplexVector,
    epsilon: f64,
) -> (SurfaceTime, ComplexVector, ComplexVector) {
    let eps = wrap(epsilon, FOUR_PI);
    let spatial = Complex64::from_polar(1.0, eps / 2.0);
    (
        surface_mul(t, SurfaceTime::unit(eps)),
        x.scale(spatial),
        y.scale(spatial),
    )
}

/// Which quotient an argument lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quotient {
    /// ℝ/2πℤ, arguments of points of ℂ.
    TwoPi,
    /// ℝ/4πℤ, arguments of points of the square-root surface.
    FourPi,
}

impl Quotient {
    pub fn period(self) -> f64 {
        match self {
            Quotient::TwoPi => TWO_PI,
            Quotient::FourPi => FOUR_PI,
        }
    }
}

/// The open sector `{r e^{iφ} : φ − rotation ∈ ]−half_angle, half_angle[}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    half_angle: Angle,
    rotation: Angle,
    quotient: Quotient,
}

impl Sector {
    pub fn new(half_angle: Angle, rotation: Angle, quotient: Quotient) -> Result<Self> {
        if !(half_angle.value() > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sector half-angle must be positive, got {half_angle}"
            )));
        }
        Ok(Sector {
            half_angle,
            rotation,
            quotient,
        })
    }

    /// Sector about the positive real axis in ℂ.
    pub fn about_positive_axis(half_angle: Angle) -> Result<Self> {
        Self::new(half_angle, Angle::ZERO, Quotient::TwoPi)
    }

    pub fn half_angle(&self) -> Angle {
        self.half_angle
    }

    pub fn rotation(&self) -> Angle {
        self.rotation
    }

    pub fn quotient(&self) -> Quotient {
        self.quotient
    }

    pub fn rotated(&self, by: Angle) -> Sector {
        Sector {
            rotation: self.rotation + by,
            ..*self
        }
    }

    /// Signed distance of the argument `phi` from the axis, in the sector's quotient.
    fn offset(&self, phi: f64) -> f64 {
        wrap_centered(phi - self.rotation.value(), self.quotient.period())
    }

    fn covers_everything(&self) -> bool {
        self.half_angle.value() > self.quotient.period() / 2.0
    }

    pub fn contains_arg(&self, phi: f64) -> bool {
        self.covers_everything() || self.offset(phi).abs() < self.half_angle.value()
    }

    /// Closure of the sector widened by `slack` radians.
    pub fn contains_arg_closed(&self, phi: f64, slack: f64) -> bool {
        self.covers_everything() || self.offset(phi).abs() <= self.half_angle.value() + slack
    }

    pub fn contains(&self, z: Complex64) -> Result<bool> {
        sector_contains(self, z)
    }

    pub fn contains_surface(&self, z: SurfaceTime) -> bool {
        self.contains_arg(z.theta())
    }
}

/// Open-sector membership of a point of ℂ. The argument of 0 is undefined.
pub fn sector_contains(s: &Sector, z: Complex64) -> Result<bool> {
    if z == Complex64::zero() {
        return Err(Error::InvalidInput(
            "sector membership of 0 is undefined".into(),
        ));
    }
    Ok(s.contains_arg(z.arg()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    #[test]
    fn mul_examples() {
        let p = surface_mul(SurfaceTime::new(1.0, 0.0).unwrap(), SurfaceTime::new(2.0, PI).unwrap());
        assert_eq!((p.r(), p.theta()), (2.0, PI));

        let a = SurfaceTime::new(1.0, 3.0 * PI).unwrap();
        let p = surface_mul(a, a);
        assert_eq!(p.r(), 1.0);
        assert!((p.theta() - 2.0 * PI).abs() < 1e-15);

        let p = surface_mul(
            SurfaceTime::new(0.5, PI / 2.0).unwrap(),
            SurfaceTime::new(4.0, PI / 2.0).unwrap(),
        );
        assert_eq!((p.r(), p.theta()), (2.0, PI));
    }

    #[test]
    fn pow_half_examples() {
        let one = Complex64::new(1.0, 0.0);
        assert_eq!(surface_pow_half(SurfaceTime::unit(0.0), -1), one);
        assert!(close(surface_pow_half(SurfaceTime::unit(2.0 * PI), -1), -one, 1e-15));
        let z = SurfaceTime::new(4.0, 0.0).unwrap();
        assert!(close(surface_pow_half(z, -3), Complex64::new(0.125, 0.0), 1e-15));
    }

    #[test]
    fn dilate_examples() {
        let t = SurfaceTime::new(0.7, 0.3).unwrap();
        let x = ComplexVector::real(&[1.5]);
        let y = ComplexVector::real(&[-0.5]);

        let (t0, x0, y0) = dilate(t, &x, &y, 0.0);
        assert_eq!((t0, &x0, &y0), (t, &x, &y));

        let (t1, x1, y1) = dilate(t, &x, &y, 2.0 * PI);
        assert!((t1.theta() - (0.3 + 2.0 * PI)).abs() < 1e-15);
        assert!(close(x1[0], -x[0], 1e-15) && close(y1[0], -y[0], 1e-15));

        let (t2, x2, _) = dilate(t, &x, &y, PI);
        assert!((t2.theta() - (0.3 + PI)).abs() < 1e-15);
        assert!(close(x2[0], Complex64::new(0.0, 1.5), 1e-15));
    }

    #[test]
    fn sector_examples() {
        let s = Sector::about_positive_axis(Angle::pi_frac(1, 6)).unwrap();
        assert!(s.contains(Complex64::from_polar(1.0, PI / 8.0)).unwrap());

        let s = Sector::about_positive_axis(Angle::pi_frac(1, 4)).unwrap();
        assert!(!s.contains(Complex64::new(-1.0, 0.0)).unwrap());

        let half = Angle::pi_frac(1, 2) - Angle::pi_frac(1, 8).scale(2);
        assert_eq!(half.pi_fraction(), Some(Ratio::new(1, 4)));
        let s = Sector::about_positive_axis(half).unwrap();
        assert!(!s.contains_arg(PI / 4.0));

        assert!(s.contains(Complex64::zero()).is_err());
    }

    #[test]
    fn sector_in_four_pi_quotient_sees_sheets() {
        let s = Sector::new(Angle::pi_frac(1, 2), Angle::ZERO, Quotient::FourPi).unwrap();
        assert!(s.contains_surface(SurfaceTime::unit(0.1)));
        assert!(!s.contains_surface(SurfaceTime::unit(2.0 * PI + 0.1)));
        let wide = Sector::new(Angle::radians(2.5 * PI), Angle::ZERO, Quotient::FourPi).unwrap();
        assert!(wide.contains_surface(SurfaceTime::unit(2.0 * PI)));
    }

    #[test]
    fn angle_display_and_recognition() {
        assert_eq!(Angle::pi_frac(3, 4).to_string(), "3π/4");
        assert_eq!(Angle::pi_frac(-1, 2).to_string(), "-π/2");
        let a = Angle::recognize(PI / 8.0 + 1e-14, 64, 1e-12);
        assert_eq!(a.pi_fraction(), Some(Ratio::new(1, 8)));
        assert!(!Angle::recognize(1.0, 64, 1e-12).is_exact());
    }

    #[test]
    fn serde_shape() {
        let t = SurfaceTime::new(2.0, 1.0).unwrap();
        assert_eq!(serde_json::to_string(&t).unwrap(), r#"{"r":2.0,"theta":1.0}"#);
        let back: SurfaceTime = serde_json::from_str(r#"{"r":1.0,"theta":13.0}"#).unwrap();
        assert!((back.theta() - (13.0 - FOUR_PI)).abs() < 1e-15);
        assert!(serde_json::from_str::<SurfaceTime>(r#"{"r":0.0,"theta":1.0}"#).is_err());
        let v = ComplexVector::real(&[1.0, -2.0]);
        assert_eq!(serde_json::to_string(&v).unwrap(), "[[1.0,0.0],[-2.0,0.0]]");
    }

    fn surface_point() -> impl Strategy<Value = SurfaceTime> {
        (0.01f64..10.0, 0.0f64..FOUR_PI).prop_map(|(r, th)| SurfaceTime::new(r, th).unwrap())
    }

    proptest! {
        #[test]
        fn mul_is_commutative_associative(a in surface_point(), b in surface_point(), c in surface_point()) {
            let ab = surface_mul(a, b);
            let ba = surface_mul(b, a);
            prop_assert_eq!(ab, ba);
            let l = surface_mul(ab, c);
            let r = surface_mul(a, surface_mul(b, c));
            prop_assert!((l.r() - r.r()).abs() <= 1e-12 * l.r());
            prop_assert!(wrap_centered(l.theta() - r.theta(), FOUR_PI).abs() < 1e-12);
            prop_assert_eq!(surface_mul(a, SurfaceTime::unit(0.0)), a);
        }

        #[test]
        fn projection_is_multiplicative(a in surface_point(), b in surface_point()) {
            let lhs = surface_mul(a, b).projection();
            let rhs = a.projection() * b.projection();
            prop_assert!(close(lhs, rhs, 1e-12));
        }

        #[test]
        fn pow_half_squares(z in surface_point(), k in -6i32..6) {
            let p = surface_pow_half(z, k);
            prop_assert!(close(p * p, surface_pow_half(z, 2 * k), 1e-11));
        }

        #[test]
        fn even_powers_ignore_sheet(z in surface_point(), k in -3i32..3) {
            let other = SurfaceTime::new(z.r(), z.theta() + TWO_PI).unwrap();
            prop_assert!(close(surface_pow_half(z, 2 * k), surface_pow_half(other, 2 * k), 1e-12));
        }

        #[test]
        fn dilations_compose(z in surface_point(), e1 in 0.0f64..FOUR_PI, e2 in 0.0f64..FOUR_PI, x in -3.0f64..3.0) {
            let xv = ComplexVector::real(&[x]);
            let (t1, x1, y1) = dilate(z, &xv, &xv, e1);
            let (t2, x2, _) = dilate(t1, &x1, &y1, e2);
            let (t3, x3, _) = dilate(z, &xv, &xv, wrap(e1 + e2, FOUR_PI));
            prop_assert!(wrap_centered(t2.theta() - t3.theta(), FOUR_PI).abs() < 1e-12);
            prop_assert!(close(x2[0], x3[0], 1e-12));
        }
    }
}
