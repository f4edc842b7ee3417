//! The measure μ behind the potential `c(x) = ∫ exp(i e^{−iε/2} x·ξ) dμ(ξ)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::surface::{Angle, ComplexVector};

/// Analyticity half-angle reported for a Gaussian density unless the caller picks one.
pub fn default_gaussian_alpha() -> Angle {
    Angle::pi_frac(1, 8)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub weight: Complex64,
    pub xi: ComplexVector,
}

impl Atom {
    pub fn new(weight: Complex64, xi: ComplexVector) -> Self {
        Atom { weight, xi }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RawMeasure {
    Discrete {
        #[serde(default)]
        epsilon: f64,
        atoms: Vec<Atom>,
    },
    Gaussian {
        #[serde(default)]
        epsilon: f64,
        gamma: f64,
        nu: usize,
        /// Analyticity half-angle in radians.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
    },
}

/// A discrete complex measure or the Gaussian density `(4πγ)^{−ν/2} e^{−ξ²/4γ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure", into = "RawMeasure")]
pub enum PotentialMeasure {
    Discrete { epsilon: f64, atoms: Vec<Atom> },
    Gaussian { epsilon: f64, gamma: f64, nu: usize, alpha: Angle },
}

impl TryFrom<RawMeasure> for PotentialMeasure {
    type Error = Error;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        match raw {
            RawMeasure::Discrete { epsilon, atoms } => PotentialMeasure::discrete(atoms, epsilon),
            RawMeasure::Gaussian { epsilon, gamma, nu, alpha } => {
                let m = PotentialMeasure::gaussian(gamma, nu, epsilon)?;
                match alpha {
                    Some(a) => m.with_alpha(Angle::recognize(a, 64, 1e-12)),
                    None => Ok(m),
                }
            }
        }
    }
}

impl From<PotentialMeasure> for RawMeasure {
    fn from(m: PotentialMeasure) -> Self {
        match m {
            PotentialMeasure::Discrete { epsilon, atoms } => RawMeasure::Discrete { epsilon, atoms },
            PotentialMeasure::Gaussian { epsilon, gamma, nu, alpha } => RawMeasure::Gaussian {
                epsilon,
                gamma,
                nu,
                alpha: Some(alpha.value()),
            },
        }
    }
}

impl PotentialMeasure {
    pub fn discrete(atoms: Vec<Atom>, epsilon: f64) -> Result<Self> {
        let first = atoms
            .first()
            .ok_or_else(|| Error::InvalidInput("a discrete measure needs at least one atom".into()))?;
        let nu = first.xi.dim();
        for a in &atoms {
            if a.xi.dim() != nu {
                return Err(Error::InvalidInput("atoms have different dimensions".into()));
            }
            if !a.weight.is_finite() || !a.xi.is_finite() {
                return Err(Error::InvalidInput("atom with non-finite weight or position".into()));
            }
        }
        check_epsilon(epsilon)?;
        Ok(PotentialMeasure::Discrete { epsilon, atoms })
    }

    pub fn gaussian(gamma: f64, nu: usize, epsilon: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) || nu == 0 {
            return Err(Error::InvalidInput(format!(
                "gaussian measure needs gamma > 0 and nu >= 1 (gamma={gamma}, nu={nu})"
            )));
        }
        check_epsilon(epsilon)?;
        Ok(PotentialMeasure::Gaussian {
            epsilon,
            gamma,
            nu,
            alpha: default_gaussian_alpha(),
        })
    }

    /// Choose the analyticity half-angle reported for a Gaussian, `0 < α < π/4`.
    pub fn with_alpha(self, alpha: Angle) -> Result<Self> {
        match self {
            PotentialMeasure::Gaussian { epsilon, gamma, nu, .. } => {
                if !(alpha.value() > 0.0 && alpha.value() < PI / 4.0) {
                    return Err(Error::InvalidInput(format!("alpha must lie in (0, π/4), got {alpha}")));
                }
                Ok(PotentialMeasure::Gaussian { epsilon, gamma, nu, alpha })
            }
            PotentialMeasure::Discrete { .. } => {
                Err(Error::InvalidInput("alpha only applies to gaussian measures".into()))
            }
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            PotentialMeasure::Discrete { epsilon, .. } | PotentialMeasure::Gaussian { epsilon, .. } => *epsilon,
        }
    }

    /// Same measure, different dilation direction.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        let mut m = self.clone();
        match &mut m {
            PotentialMeasure::Discrete { epsilon: e, .. } | PotentialMeasure::Gaussian { epsilon: e, .. } => {
                *e = epsilon
            }
        }
        Ok(m)
    }

    pub fn nu(&self) -> usize {
        match self {
            PotentialMeasure::Discrete { atoms, .. } => atoms[0].xi.dim(),
            PotentialMeasure::Gaussian { nu, .. } => *nu,
        }
    }

    /// `max |ξ|` over the support, infinite for a Gaussian.
    pub fn support_radius(&self) -> f64 {
        match self {
            PotentialMeasure::Discrete { atoms, .. } => atoms.iter().map(|a| a.xi.norm()).fold(0.0, f64::max),
            PotentialMeasure::Gaussian { .. } => f64::INFINITY,
        }
    }

    /// `Σ|w|` for a discrete measure, 1 for the Gaussian density.
    pub fn total_variation(&self) -> f64 {
        match self {
            PotentialMeasure::Discrete { atoms, .. } => atoms.iter().map(|a| a.weight.norm()).sum(),
            PotentialMeasure::Gaussian { .. } => 1.0,
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("epsilon must be finite, got {epsilon}")))
    }
}

/// `c(x) = ∫ exp(i e^{−iε/2} x·ξ) dμ(ξ)`.
pub fn c_eval(m: &PotentialMeasure, x: &ComplexVector) -> Result<Complex64> {
    if x.dim() != m.nu() {
        return Err(Error::InvalidInput(format!("x has dimension {}, measure has {}", x.dim(), m.nu())));
    }
    match m {
        PotentialMeasure::Discrete { epsilon, atoms } => {
            let phase = Complex64::i() * Complex64::from_polar(1.0, -epsilon / 2.0);
            Ok(atoms.iter().map(|a| a.weight * (phase * x.dot(&a.xi)).exp()).sum())
        }
        PotentialMeasure::Gaussian { epsilon, gamma, .. } => {
            // ∫ e^{i z·ξ} ĉ(ξ) dξ = e^{−γ z²} with z = e^{−iε/2} x
            Ok((-*gamma * Complex64::from_polar(1.0, -epsilon) * x.square()).exp())
        }
    }
}

/// The `ε = π` potential `c(x) = ∫ exp(x·ξ) dμ(ξ)`.
pub fn schrodinger_growing_potential(m: &PotentialMeasure, x: &ComplexVector) -> Result<Complex64> {
    let e = crate::surface::wrap(m.epsilon(), crate::surface::FOUR_PI);
    if (e - PI).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "the growing potential needs epsilon = π, measure has {}",
            m.epsilon()
        )));
    }
    if x.dim() != m.nu() {
        return Err(Error::InvalidInput(format!("x has dimension {}, measure has {}", x.dim(), m.nu())));
    }
    match m {
        PotentialMeasure::Discrete { atoms, .. } => Ok(atoms.iter().map(|a| a.weight * x.dot(&a.xi).exp()).sum()),
        PotentialMeasure::Gaussian { gamma, .. } => Ok((*gamma * x.square()).exp()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "condition", content = "parameter")]
pub enum IntegrabilityCondition {
    /// `∫ e^{R|ξ|} d|μ|`
    ExpLinear(f64),
    /// `∫ e^{ε_g ξ²} d|μ|`
    ExpQuadratic(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegrabilityReport {
    pub condition: IntegrabilityCondition,
    /// `f64::INFINITY` when the integral diverges.
    pub value: f64,
}

impl IntegrabilityReport {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

pub fn integrability(m: &PotentialMeasure, condition: IntegrabilityCondition) -> Result<IntegrabilityReport> {
    let (linear, quadratic) = match condition {
        IntegrabilityCondition::ExpLinear(r) => (r, 0.0),
        IntegrabilityCondition::ExpQuadratic(e) => (0.0, e),
    };
    if !(linear >= 0.0 && quadratic >= 0.0) || !linear.is_finite() || quadratic.is_nan() {
        return Err(Error::InvalidInput(format!("integrability parameters must be nonnegative: {condition:?}")));
    }
    let value = match m {
        PotentialMeasure::Discrete { atoms, .. } => atoms
            .iter()
            .map(|a| {
                let r = a.xi.norm();
                a.weight.norm() * (linear * r + quadratic * r * r).exp()
            })
            .sum(),
        PotentialMeasure::Gaussian { gamma, nu, .. } => gaussian_exponential_moment(*gamma, *nu, quadratic, linear),
    };
    Ok(IntegrabilityReport { condition, value })
}

/// `Γ(k/2)` for a positive integer `k`.
fn gamma_half(k: usize) -> f64 {
    if k % 2 == 0 {
        (1..k / 2).map(|j| j as f64).product()
    } else {
        // Γ(1/2) = √π, Γ(z + 1) = zΓ(z)
        let mut g = PI.sqrt();
        let mut z = 0.5;
        while z < k as f64 / 2.0 - 0.25 {
            g *= z;
            z += 1.0;
        }
        g
    }
}

/// `∫_{ℝ^ν} (4πγ)^{−ν/2} exp(−ξ²/4γ + q ξ² + R|ξ|) dξ`, infinite when `q ≥ 1/(4γ)`.
pub(crate) fn gaussian_exponential_moment(gamma: f64, nu: usize, q: f64, linear: f64) -> f64 {
    let a = 1.0 / (4.0 * gamma) - q;
    if a <= 0.0 {
        return f64::INFINITY;
    }
    if linear == 0.0 {
        return (4.0 * gamma * a).powf(-(nu as f64) / 2.0);
    }
    // Radial form: |S^{ν−1}| ∫_0^∞ r^{ν−1} e^{−a r² + R r} dr, integrand scaled by its peak.
    let k = (nu - 1) as f64;
    let log_f = |r: f64| -> f64 {
        if r == 0.0 {
            if nu == 1 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            k * r.ln() - a * r * r + linear * r
        }
    };
    let peak_r = (linear + (linear * linear + 8.0 * a * k).sqrt()) / (4.0 * a);
    let peak = log_f(peak_r).max(0.0);
    let r_max = peak_r + (80.0 / a).sqrt() + 1.0;
    let gl = GaussLegendre::new(24);
    let radial = gl.integrate_composite(0.0, r_max, 64, |r| (log_f(r) - peak).exp());
    let sphere = 2.0 * PI.powf(nu as f64 / 2.0) / gamma_half(nu);
    let log_value = radial.ln() + peak + sphere.ln() - (nu as f64 / 2.0) * (4.0 * PI * gamma).ln();
    log_value.exp()
}

/// Which convergence mechanism applies to the measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CaseClassification {
    /// Support in a sector of half-angle θ; θ = 0 for real atoms.
    Case1 { theta: Angle },
    /// Analytic density decaying on a sector of half-angle α.
    Case2 { alpha: Angle },
    Both { theta: Angle, alpha: Angle },
}

pub fn case_classification(m: &PotentialMeasure) -> Result<CaseClassification> {
    match m {
        PotentialMeasure::Gaussian { alpha, .. } => Ok(CaseClassification::Both {
            theta: Angle::pi_frac(0, 1),
            alpha: *alpha,
        }),
        PotentialMeasure::Discrete { atoms, .. } => {
            if atoms.iter().all(|a| a.xi.is_real()) {
                return Ok(CaseClassification::Case1 { theta: Angle::pi_frac(0, 1) });
            }
            let mut theta: f64 = 0.0;
            for a in atoms {
                for c in a.xi.components() {
                    if c.norm() == 0.0 {
                        continue;
                    }
                    let arg = c.arg().abs();
                    if arg >= PI / 4.0 {
                        return Err(Error::Inadmissible(format!(
                            "atom component {c} has argument {arg}, not below π/4"
                        )));
                    }
                    theta = theta.max(arg);
                }
            }
            Ok(CaseClassification::Case1 {
                theta: Angle::recognize(theta, 64, 1e-12),
            })
        }
    }
}
