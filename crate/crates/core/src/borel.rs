//! Borel transform of small-time series, Laplace resummation along a ray, and the
//! growth constant controlling `|p̂^conj(τ)|`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::deformation::{small_time_coefficients, CoefficientSeries};
use crate::error::{Error, Result};
use crate::potential::{integrability, IntegrabilityCondition, PotentialMeasure};
use crate::quadrature::GaussLaguerre;
use crate::surface::ComplexVector;

/// Relative agreement required between successive Gauss–Laguerre refinements.
pub const LAPLACE_TOLERANCE: f64 = 1e-10;
const LAGUERRE_SIZES: [usize; 6] = [16, 32, 64, 128, 256, 512];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BorelDomainKind {
    /// Points within distance `kappa` of the ray `[0, ∞)`.
    Strip { kappa: f64 },
    /// Open sector `|arg z| < theta`, optionally intersected with `|z| < radius`.
    Sector { theta: f64, radius: Option<f64> },
    /// `Re(1/z) > 1/T`.
    NevanlinnaDisk { radius: f64 },
}

/// A summability domain, rotated by `e^{i·direction}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BorelDomain {
    pub kind: BorelDomainKind,
    pub direction: f64,
}

impl BorelDomain {
    pub fn strip(kappa: f64, direction: f64) -> Result<Self> {
        Self::checked(BorelDomainKind::Strip { kappa }, kappa, direction)
    }

    pub fn sector(theta: f64, radius: Option<f64>, direction: f64) -> Result<Self> {
        if let Some(r) = radius {
            Self::checked(BorelDomainKind::Sector { theta, radius }, r, direction)?;
        }
        Self::checked(BorelDomainKind::Sector { theta, radius }, theta, direction)
    }

    pub fn nevanlinna_disk(radius: f64, direction: f64) -> Result<Self> {
        Self::checked(BorelDomainKind::NevanlinnaDisk { radius }, radius, direction)
    }

    fn checked(kind: BorelDomainKind, size: f64, direction: f64) -> Result<Self> {
        if !(size > 0.0 && size.is_finite()) || !direction.is_finite() {
            return Err(Error::InvalidInput(format!("invalid Borel domain {kind:?}, direction {direction}")));
        }
        Ok(BorelDomain { kind, direction })
    }
}

pub fn domain_contains(d: &BorelDomain, z: Complex64) -> bool {
    let w = z * Complex64::from_polar(1.0, -d.direction);
    match d.kind {
        BorelDomainKind::Strip { kappa } => {
            let dist = if w.re >= 0.0 { w.im.abs() } else { w.norm() };
            dist < kappa
        }
        BorelDomainKind::Sector { theta, radius } => {
            w != Complex64::new(0.0, 0.0) && w.arg().abs() < theta && radius.is_none_or(|r| w.norm() < r)
        }
        BorelDomainKind::NevanlinnaDisk { radius } => {
            w != Complex64::new(0.0, 0.0) && (Complex64::new(1.0, 0.0) / w).re > 1.0 / radius
        }
    }
}

/// `|z − e^{iδ}T/2| < T/2`, the disk form of the Nevanlinna domain.
pub fn nevanlinna_disk_contains(radius: f64, direction: f64, z: Complex64) -> bool {
    let center = Complex64::from_polar(radius / 2.0, direction);
    (z - center).norm() < radius / 2.0
}

/// Something that can be integrated against `e^{−τ/t}` along a ray.
pub trait BorelSide {
    fn eval(&self, tau: Complex64) -> Complex64;

    /// Known singularities, checked against the integration ray.
    fn singularities(&self) -> Vec<Complex64> {
        Vec::new()
    }
}

impl<F: Fn(Complex64) -> Complex64> BorelSide for F {
    fn eval(&self, tau: Complex64) -> Complex64 {
        self(tau)
    }
}

/// `f̂(τ) = Σ a_r τ^r / r!`
#[derive(Debug, Clone, PartialEq)]
pub struct BorelFunction {
    pub source: CoefficientSeries,
    /// `a_r / r!`
    pub coefficients: Vec<Complex64>,
}

impl BorelFunction {
    /// Truncated power sum together with the modulus of its last term.
    pub fn eval_with_remainder(&self, tau: Complex64) -> (Complex64, f64) {
        let value = horner(&self.coefficients, tau);
        let last = self
            .coefficients
            .last()
            .map(|c| c.norm() * tau.norm().powi(self.coefficients.len() as i32 - 1))
            .unwrap_or(0.0);
        (value, last)
    }
}

impl BorelSide for BorelFunction {
    fn eval(&self, tau: Complex64) -> Complex64 {
        horner(&self.coefficients, tau)
    }
}

fn horner(c: &[Complex64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * z + a)
}

fn borel_coefficients(a: &[Complex64]) -> Vec<Complex64> {
    let mut factorial = 1.0;
    a.iter()
        .enumerate()
        .map(|(r, &c)| {
            if r > 0 {
                factorial *= r as f64;
            }
            c / factorial
        })
        .collect()
}

pub fn borel_transform(s: &CoefficientSeries) -> BorelFunction {
    BorelFunction {
        coefficients: borel_coefficients(&s.coefficients),
        source: s.clone(),
    }
}

fn laguerre(n: usize) -> &'static GaussLaguerre {
    static RULES: OnceLock<Vec<GaussLaguerre>> = OnceLock::new();
    let rules = RULES.get_or_init(|| LAGUERRE_SIZES.iter().map(|&k| GaussLaguerre::new(k)).collect());
    let i = LAGUERRE_SIZES.iter().position(|&k| k == n).expect("tabulated size");
    &rules[i]
}

/// `∫_0^{e^{iδ}∞} f̂(τ) e^{−τ/t} dτ/t`
pub fn laplace_sum<F: BorelSide + ?Sized>(fhat: &F, t: Complex64, direction: f64) -> Result<Complex64> {
    if !(t.is_finite() && t != Complex64::new(0.0, 0.0)) || !direction.is_finite() {
        return Err(Error::InvalidInput(format!("laplace_sum needs finite nonzero t, got {t}")));
    }
    let ray = Complex64::from_polar(1.0, direction);
    let q = ray / t;
    if q.re <= 0.0 {
        return Err(Error::Divergence(format!(
            "Re(e^(i{direction})/t) = {:e} is not positive",
            q.re
        )));
    }
    for p in fhat.singularities() {
        let along = p / ray;
        if along.re >= 0.0 && along.im.abs() <= 1e-8 * along.norm().max(1e-300) {
            return Err(Error::Pole { modulus: p.norm() });
        }
    }
    // τ = e^{iδ} u / Re q turns the damping into e^{−u}.
    let step = ray / q.re;
    let oscillation = Complex64::new(0.0, -q.im / q.re);
    let prefactor = step / t;
    let integrate = |n: usize| -> Complex64 {
        prefactor * laguerre(n).integrate_complex(|u| fhat.eval(step * u) * (oscillation * u).exp())
    };
    let mut previous = integrate(LAGUERRE_SIZES[0]);
    for &n in &LAGUERRE_SIZES[1..] {
        let current = integrate(n);
        if !current.is_finite() {
            break;
        }
        if (current - previous).norm() <= LAPLACE_TOLERANCE * current.norm().max(1e-300) {
            return Ok(current);
        }
        previous = current;
    }
    Err(Error::Divergence(format!(
        "Gauss–Laguerre sums did not settle to {LAPLACE_TOLERANCE:e} with {} nodes",
        LAGUERRE_SIZES[LAGUERRE_SIZES.len() - 1]
    )))
}

/// `[L/M]` rational approximant `P/Q` of a Borel transform, `Q(0) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PadeApproximant {
    pub numerator: Vec<Complex64>,
    pub denominator: Vec<Complex64>,
    pub poles: Vec<Complex64>,
    /// `(L, M)` after dropping rank-deficient denominator freedom.
    pub degrees: (usize, usize),
}

impl PadeApproximant {
    pub fn eval(&self, tau: Complex64) -> Complex64 {
        horner(&self.numerator, tau) / horner(&self.denominator, tau)
    }
}

impl BorelSide for PadeApproximant {
    fn eval(&self, tau: Complex64) -> Complex64 {
        PadeApproximant::eval(self, tau)
    }

    fn singularities(&self) -> Vec<Complex64> {
        self.poles.clone()
    }
}

/// Default `[N/2 / N/2]` degrees for `N` available coefficients.
pub fn default_pade_degrees(available: usize) -> (usize, usize) {
    let half = available.saturating_sub(1) / 2;
    (half, half)
}

pub fn pade_continuation(s: &CoefficientSeries, degrees: (usize, usize)) -> Result<PadeApproximant> {
    let (l, m) = degrees;
    let c = borel_coefficients(&s.coefficients);
    if l + m + 1 > c.len() {
        return Err(Error::InvalidInput(format!(
            "[{l}/{m}] Padé needs {} coefficients, series has {}",
            l + m + 1,
            c.len()
        )));
    }
    let c = &c[..=l + m];
    if c.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return Ok(PadeApproximant {
            numerator: vec![Complex64::new(0.0, 0.0); l + 1],
            denominator: vec![Complex64::new(1.0, 0.0)],
            poles: Vec::new(),
            degrees: (l, 0),
        });
    }
    let (l, m, q) = match solve_denominator(c, l, m) {
        Some(found) => found,
        None => {
            let perturbed: Vec<Complex64> = c
                .iter()
                .enumerate()
                .map(|(k, z)| z * (1.0 + 1e-12 * (k as f64 + 1.0) * if k % 2 == 0 { 1.0 } else { -1.0 }))
                .collect();
            solve_denominator(&perturbed, l, m)
                .ok_or_else(|| Error::Degenerate(format!("[{l}/{m}] Hankel system is inconsistent")))?
        }
    };
    let numerator = (0..=l)
        .map(|i| (0..=i.min(m)).map(|j| q[j] * c[i - j]).sum())
        .collect();
    let poles = polynomial_roots(&q);
    Ok(PadeApproximant {
        numerator,
        denominator: q,
        poles,
        degrees: (l, m),
    })
}

fn unit_polynomial(m: usize) -> Vec<Complex64> {
    let mut q = vec![Complex64::new(0.0, 0.0); m + 1];
    q[0] = Complex64::new(1.0, 0.0);
    q
}

/// Solves `Σ_{j=1}^{M} q_j c_{k−j} = −c_k`, `k = L+1 … L+M`, lowering `L` and `M`
/// together while the Hankel matrix is numerically singular.
fn solve_denominator(c: &[Complex64], mut l: usize, mut m: usize) -> Option<(usize, usize, Vec<Complex64>)> {
    let coeff = |k: isize| if k < 0 { Complex64::new(0.0, 0.0) } else { c[k as usize] };
    loop {
        if m == 0 {
            return Some((l, 0, unit_polynomial(0)));
        }
        let h = DMatrix::from_fn(m, m, |row, col| coeff((l + 1 + row) as isize - (col + 1) as isize));
        let rhs = DVector::from_fn(m, |row, _| -coeff((l + 1 + row) as isize));
        let svd = h.clone().svd(true, true);
        let largest = svd.singular_values.max();
        let smallest = svd.singular_values.min();
        if smallest <= 1e-13 * largest {
            if l == 0 {
                // no smaller diagonal: keep the minimal-norm solution if it is consistent
                let scale = largest.max(rhs.norm());
                let sol = svd.solve(&rhs, 1e-13 * scale).ok()?;
                if !sol.iter().all(|z| z.is_finite()) || (&h * &sol - &rhs).norm() > 1e-9 * scale {
                    return None;
                }
                let mut q = unit_polynomial(m);
                q[1..].copy_from_slice(sol.as_slice());
                return Some((l, m, q));
            }
            l -= 1;
            m -= 1;
            continue;
        }
        let sol = h.lu().solve(&rhs)?;
        if !sol.iter().all(|z| z.is_finite()) {
            return None;
        }
        let mut q = unit_polynomial(m);
        q[1..].copy_from_slice(sol.as_slice());
        return Some((l, m, q));
    }
}

/// Roots of `Σ q_j τ^j` from its companion matrix.
fn polynomial_roots(q: &[Complex64]) -> Vec<Complex64> {
    let degree = match q.iter().rposition(|z| z.norm() > 0.0) {
        Some(d) if d > 0 => d,
        _ => return Vec::new(),
    };
    let lead = q[degree];
    let companion = DMatrix::from_fn(degree, degree, |i, j| {
        if i == 0 {
            -q[degree - 1 - j] / lead
        } else if i == j + 1 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    companion
        .schur()
        .eigenvalues()
        .map(|v| v.iter().copied().collect())
        .unwrap_or_default()
}

/// `C = 2 (∫ exp(2κ/ε_g + ε_g ξ²/2 + R|ξ|) d|μ|)^{1/2}`
pub fn growth_constant_c(m: &PotentialMeasure, kappa: f64, r: f64, eps_gauss: f64) -> Result<f64> {
    if !(kappa > 0.0 && r > 0.0 && eps_gauss > 0.0) || !(kappa.is_finite() && r.is_finite() && eps_gauss.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "growth constant needs κ, R, ε_g > 0 (got {kappa}, {r}, {eps_gauss})"
        )));
    }
    let moment = integrability(m, IntegrabilityCondition::ExpQuadratic(eps_gauss))?;
    if !moment.is_finite() {
        return Err(Error::Infinite(format!("∫ exp({eps_gauss} ξ²) d|μ| diverges")));
    }
    let integral = match m {
        PotentialMeasure::Discrete { atoms, .. } => atoms
            .iter()
            .map(|a| {
                let n = a.xi.norm();
                a.weight.norm() * (2.0 * kappa / eps_gauss + eps_gauss / 2.0 * n * n + r * n).exp()
            })
            .sum(),
        PotentialMeasure::Gaussian { gamma, nu, .. } => {
            (2.0 * kappa / eps_gauss).exp()
                * crate::potential::gaussian_exponential_moment(*gamma, *nu, eps_gauss / 2.0, r)
        }
    };
    if !integral.is_finite() {
        return Err(Error::Infinite(format!("growth integral overflows: {integral}")));
    }
    Ok(2.0 * integral.sqrt())
}

/// `p̂^conj(τ, x, y)` from the first `order + 1` small-time coefficients.
pub fn hat_pconj_eval(
    m: &PotentialMeasure,
    tau: Complex64,
    x: &ComplexVector,
    y: &ComplexVector,
    order: usize,
) -> Result<Complex64> {
    let f = hat_pconj(m, x, y, order)?;
    hat_pconj_at(&f, tau)
}

/// Borel transform of `p^conj(·, x, y)` truncated at `order`; reuse it for many `τ`.
pub fn hat_pconj(m: &PotentialMeasure, x: &ComplexVector, y: &ComplexVector, order: usize) -> Result<BorelFunction> {
    if !matches!(m, PotentialMeasure::Discrete { .. }) {
        return Err(Error::Unsupported("p̂^conj evaluation needs a discrete measure".into()));
    }
    Ok(borel_transform(&small_time_coefficients(m, x, y, order)?))
}

/// Evaluates a truncated entire Borel transform, failing when the tail is not negligible.
pub fn hat_pconj_at(f: &BorelFunction, tau: Complex64) -> Result<Complex64> {
    let c = &f.coefficients;
    let value = horner(c, tau);
    // Tail estimate: the largest of the last two terms (odd/even cancellations).
    let n = c.len();
    let tail = c[n.saturating_sub(2)..]
        .iter()
        .enumerate()
        .map(|(i, a)| a.norm() * tau.norm().powi((n.saturating_sub(2) + i) as i32))
        .fold(0.0, f64::max);
    if !value.is_finite() || tail > 1e-10 * value.norm().max(1.0) {
        return Err(Error::Truncation(format!(
            "Borel series at |τ| = {} has tail {tail:e} after {} terms",
            tau.norm(),
            n
        )));
    }
    Ok(value)
}

/// Angle `π(ε)` of the Borel–Nevanlinna direction for a dilation angle `ε ∈ ℝ/4πℤ`.
pub fn summation_direction(epsilon: f64) -> f64 {
    epsilon.rem_euclid(2.0 * PI)
}
