//! Independent reference solutions: Crank–Nicolson for the heat and Schrödinger
//! equations on a line, and the Hermite expansion of the harmonic oscillator.

mod experiments;
mod mehler;

pub use experiments::{
    delta_family_distances, gaussian_heat_error, harmonic_cross_error, run_experiment, schrodinger_growing_error, Experiment,
    ExperimentConfig, Report, GAUSSIAN_HEAT_ORDER, GAUSSIAN_HEAT_TIMES, SCHRODINGER_TIME,
};
pub use mehler::mehler_eigen_kernel;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::SurfaceTime;

/// Relative level at the boundary above which an evolution is flagged.
pub const BOUNDARY_LEVEL: f64 = 1e-10;

/// Uniform grid on `[x_min, x_max]` with a time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub dt: f64,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n_points: usize, dt: f64) -> Result<Self> {
        if n_points < 16 || !x_min.is_finite() || !x_max.is_finite() || x_max <= x_min || dt.is_nan() || dt <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "grid needs n_points ≥ 16, x_min < x_max and dt > 0 (got {n_points}, [{x_min}, {x_max}], {dt})"
            )));
        }
        Ok(Grid1D { x_min, x_max, n_points, dt })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.x_max
        } else {
            self.x_min + i as f64 * self.dx()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }

    pub fn sample<F: Fn(f64) -> Complex64>(&self, f: F) -> Vec<Complex64> {
        (0..self.n_points).map(|i| f(self.point(i))).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub values: Vec<Complex64>,
    pub steps: usize,
    /// Largest `|u|` next to the boundary, relative to the largest `|u|`, over all steps.
    pub boundary_level: f64,
    pub warning: Option<String>,
}

/// Pre-factored tridiagonal system `−r u_{i−1} + d_i u_i − r u_{i+1}`.
struct Tridiagonal {
    r: Complex64,
    inv_pivot: Vec<Complex64>,
    upper: Vec<Complex64>,
}

impl Tridiagonal {
    fn new(r: Complex64, diag: &[Complex64]) -> Result<Self> {
        let n = diag.len();
        let mut inv_pivot = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        let mut prev_upper = Complex64::new(0.0, 0.0);
        for &d in diag {
            let pivot = d - r * prev_upper;
            if pivot.norm() < 1e-300 {
                return Err(Error::Degenerate("Crank–Nicolson matrix has a zero pivot".into()));
            }
            let inv = 1.0 / pivot;
            prev_upper = r * inv;
            inv_pivot.push(inv);
            upper.push(prev_upper);
        }
        Ok(Tridiagonal { r, inv_pivot, upper })
    }

    fn solve_in_place(&self, rhs: &mut [Complex64]) {
        let n = rhs.len();
        let mut prev = Complex64::new(0.0, 0.0);
        for i in 0..n {
            prev = (rhs[i] + self.r * prev) * self.inv_pivot[i];
            rhs[i] = prev;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            rhs[i] += self.upper[i] * rhs[i + 1];
        }
    }
}

/// Crank–Nicolson for `∂_t u = z (∂² + V) u` with zero Dirichlet data; `z = 1` is the heat
/// equation and `z = i` the Schrödinger equation.
fn crank_nicolson(z: Complex64, v: &[Complex64], phi0: &[Complex64], grid: &Grid1D, t_final: f64) -> Result<Evolution> {
    if phi0.len() != grid.n_points || v.len() != grid.n_points {
        return Err(Error::InvalidInput(format!(
            "sampled data has {} points, grid has {}",
            phi0.len(),
            grid.n_points
        )));
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidInput(format!("t_final must be nonnegative, got {t_final}")));
    }
    if t_final == 0.0 {
        return Ok(Evolution {
            values: phi0.to_vec(),
            steps: 0,
            boundary_level: 0.0,
            warning: None,
        });
    }
    let steps = (t_final / grid.dt - 1e-9).ceil().max(1.0) as usize;
    let dt = t_final / steps as f64;
    let dx = grid.dx();
    let n = grid.n_points;
    let half = z * (dt / 2.0);
    let r = half / (dx * dx);
    let interior = &v[1..n - 1];
    let diag: Vec<Complex64> = interior.iter().map(|vi| 1.0 + 2.0 * r - half * vi).collect();
    let explicit: Vec<Complex64> = interior.iter().map(|vi| 1.0 - 2.0 * r + half * vi).collect();
    let system = Tridiagonal::new(r, &diag)?;

    let mut u: Vec<Complex64> = phi0[1..n - 1].to_vec();
    let mut rhs = vec![Complex64::new(0.0, 0.0); n - 2];
    let mut boundary_level: f64 = 0.0;
    for _ in 0..steps {
        let m = u.len();
        for i in 0..m {
            let left = if i > 0 { u[i - 1] } else { Complex64::new(0.0, 0.0) };
            let right = if i + 1 < m { u[i + 1] } else { Complex64::new(0.0, 0.0) };
            rhs[i] = explicit[i] * u[i] + r * (left + right);
        }
        system.solve_in_place(&mut rhs);
        std::mem::swap(&mut u, &mut rhs);
        let peak = u.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if peak > 0.0 {
            boundary_level = boundary_level.max(u[0].norm().max(u[m - 1].norm()) / peak);
        }
    }
    let mut values = Vec::with_capacity(n);
    values.push(Complex64::new(0.0, 0.0));
    values.extend(u);
    values.push(Complex64::new(0.0, 0.0));
    let warning = (boundary_level > BOUNDARY_LEVEL)
        .then(|| format!("solution reaches the boundary at relative level {boundary_level:e}"));
    Ok(Evolution {
        values,
        steps,
        boundary_level,
        warning,
    })
}

/// Crank–Nicolson for `∂_t u = ∂_x² u + V(x) u` up to `t_final`.
pub fn evolve_heat<V: Fn(f64) -> Complex64>(
    potential: V,
    phi0: &[Complex64],
    grid: &Grid1D,
    t_final: f64,
) -> Result<Evolution> {
    let v = grid.sample(potential);
    crank_nicolson(Complex64::new(1.0, 0.0), &v, phi0, grid, t_final)
}

/// Crank–Nicolson for `∂_𝐭 ψ = i(∂_x² + V(x)) ψ` with real `V`; unitary in the discrete `L²` norm.
pub fn evolve_schrodinger<V: Fn(f64) -> f64>(
    potential: V,
    phi0: &[Complex64],
    grid: &Grid1D,
    t_final: f64,
) -> Result<Evolution> {
    let v = grid.sample(|x| Complex64::new(potential(x), 0.0));
    if v.iter().any(|c| !c.re.is_finite()) {
        return Err(Error::InvalidInput("Schrödinger potential is not finite on the grid".into()));
    }
    crank_nicolson(Complex64::new(0.0, 1.0), &v, phi0, grid, t_final)
}

/// Discrete `L²` norm on the grid.
pub fn l2_norm(values: &[Complex64], grid: &Grid1D) -> f64 {
    (values.iter().map(|c| c.norm_sqr()).sum::<f64>() * grid.dx()).sqrt()
}

/// Trapezoid weights of the grid.
fn trapezoid_weights(grid: &Grid1D) -> Vec<f64> {
    let dx = grid.dx();
    (0..grid.n_points)
        .map(|i| if i == 0 || i + 1 == grid.n_points { dx / 2.0 } else { dx })
        .collect()
}

/// `x ↦ ∫ K(t, x, y) φ_0(y) dy` by the trapezoid rule, at every grid point.
pub fn kernel_action<K>(kernel: K, phi0: &[Complex64], grid: &Grid1D, t: SurfaceTime) -> Result<Vec<Complex64>>
where
    K: Fn(SurfaceTime, f64, f64) -> Result<Complex64> + Sync,
{
    kernel_action_at(kernel, phi0, grid, t, &grid.points())
}

/// [`kernel_action`] evaluated at arbitrary output points `xs`.
pub fn kernel_action_at<K>(
    kernel: K,
    phi0: &[Complex64],
    grid: &Grid1D,
    t: SurfaceTime,
    xs: &[f64],
) -> Result<Vec<Complex64>>
where
    K: Fn(SurfaceTime, f64, f64) -> Result<Complex64> + Sync,
{
    if phi0.len() != grid.n_points {
        return Err(Error::InvalidInput(format!(
            "φ0 has {} samples, grid has {}",
            phi0.len(),
            grid.n_points
        )));
    }
    let weights = trapezoid_weights(grid);
    let ys = grid.points();
    xs.par_iter()
        .map(|&x| {
            let mut acc = Complex64::new(0.0, 0.0);
            for ((&y, &w), &f) in ys.iter().zip(&weights).zip(phi0) {
                if f != Complex64::new(0.0, 0.0) {
                    acc += kernel(t, x, y)? * f * w;
                }
            }
            Ok(acc)
        })
        .collect()
}
