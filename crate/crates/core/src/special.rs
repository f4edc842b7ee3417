//! Even entire functions of `ω t` written in the variable `z = ω²t²`.
//!
//! `sh(ωt)/(ωt)` and `ch(ωt)` only depend on `ω²`, so evaluating them through `z`
//! never has to pick a branch of `ω = 2(−λ)^{1/2}`.

use num_complex::Complex64;

const SERIES_RADIUS: f64 = 1.0;

/// `shc(z) = sh(√z)/√z = Σ z^k/(2k+1)!`.
pub fn shc(z: Complex64) -> Complex64 {
    if z.norm() < SERIES_RADIUS {
        even_series(z, 1)
    } else {
        let w = z.sqrt();
        w.sinh() / w
    }
}

/// `chz(z) = ch(√z) = Σ z^k/(2k)!`.
pub fn chz(z: Complex64) -> Complex64 {
    if z.norm() < SERIES_RADIUS {
        even_series(z, 0)
    } else {
        z.sqrt().cosh()
    }
}

/// `Σ_k z^k / (2k + offset)!` for `|z| < 1`.
fn even_series(z: Complex64, offset: u32) -> Complex64 {
    let mut term = Complex64::new(1.0, 0.0);
    for j in 1..=offset {
        term /= j as f64;
    }
    let mut sum = term;
    for k in 1..40u32 {
        let a = (2 * k + offset - 1) as f64;
        let b = (2 * k + offset) as f64;
        term = term * z / (a * b);
        sum += term;
        if term.norm() <= 1e-18 * sum.norm() {
            break;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_closed_forms_on_both_sides_of_the_switch() {
        for &z in &[
            Complex64::new(0.3, 0.2),
            Complex64::new(-0.9, 0.1),
            Complex64::new(4.0, -1.0),
            Complex64::new(-4.0, 0.0),
            Complex64::new(0.999, 0.0),
            Complex64::new(1.001, 0.0),
        ] {
            let w = z.sqrt();
            assert!((shc(z) - w.sinh() / w).norm() < 1e-14, "shc at {z}");
            assert!((chz(z) - w.cosh()).norm() < 1e-14, "chz at {z}");
        }
        assert_eq!(shc(Complex64::new(0.0, 0.0)), Complex64::new(1.0, 0.0));
        assert_eq!(chz(Complex64::new(0.0, 0.0)), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn negative_argument_is_trigonometric() {
        // ω = 2i (λ = 1), t = 0.3: sh(ωt)/(ωt) = sin(0.6)/0.6
        let z = Complex64::new(-0.36, 0.0);
        assert!((shc(z).re - 0.6f64.sin() / 0.6).abs() < 1e-15);
        assert!((chz(z).re - 0.6f64.cos()).abs() < 1e-15);
        assert!(shc(z).im.abs() < 1e-18);
    }
}
