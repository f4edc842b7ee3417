use std::f64::consts::PI;

use crate::error::{Error, Result};

/// `sup_x |h_n(x)|` for normalized Hermite functions is below this constant.
const HERMITE_FUNCTION_BOUND: f64 = 0.816;

/// Heat kernel of `∂² − κx²` (`λ = −κ` in the generator `∂² + λx²`) from its eigen-expansion
/// `Σ_n e^{−E_n t} ψ_n(x) ψ_n(y)`, `E_n = √κ (2n + 1)`.
///
/// Fails when the bound on the discarded modes exceeds `1e−12` of the computed sum.
pub fn mehler_eigen_kernel(kappa: f64, t: f64, x: f64, y: f64, n_terms: usize) -> Result<f64> {
    if !(kappa > 0.0 && t > 0.0) || !kappa.is_finite() || !t.is_finite() || !x.is_finite() || !y.is_finite() {
        return Err(Error::InvalidInput(format!("Mehler kernel needs κ > 0, t > 0 (got {kappa}, {t})")));
    }
    if n_terms == 0 {
        return Err(Error::InvalidInput("Mehler kernel needs at least one term".into()));
    }
    let root = kappa.sqrt();
    let scale = kappa.powf(0.25);
    let (u, v) = (scale * x, scale * y);
    // ψ_n(x) = κ^{1/8} h_n(κ^{1/4} x)
    let mut hu = (PI.powf(-0.25) * (-u * u / 2.0).exp(), 0.0);
    let mut hv = (PI.powf(-0.25) * (-v * v / 2.0).exp(), 0.0);
    let decay = (-2.0 * root * t).exp();
    let mut weight = (-root * t).exp();
    let mut sum = 0.0;
    for n in 0..n_terms {
        sum += weight * hu.0 * hv.0;
        weight *= decay;
        let k = n as f64;
        let next = |h: (f64, f64), z: f64| {
            (
                (2.0 / (k + 1.0)).sqrt() * z * h.0 - (k / (k + 1.0)).sqrt() * h.1,
                h.0,
            )
        };
        hu = next(hu, u);
        hv = next(hv, v);
    }
    let sum = scale * sum;
    // Σ_{n ≥ N} e^{−E_n t} |ψ_n(x) ψ_n(y)|
    let remainder = scale * HERMITE_FUNCTION_BOUND.powi(2) * weight / (1.0 - decay);
    if remainder > 1e-12 * sum.abs().max(1e-300) {
        return Err(Error::Truncation(format!(
            "{n_terms} Hermite modes leave a remainder bound {remainder:e} against {sum:e}"
        )));
    }
    Ok(sum)
}
