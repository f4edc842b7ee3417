//! Cross-method experiments comparing the deformation kernels with the PDE oracles.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{evolve_heat, evolve_schrodinger, kernel_action, kernel_action_at, mehler_eigen_kernel, Grid1D};
use crate::deformation::{p_conj_batch, p_conj_table, Method, McConfig};
use crate::quadrature::ChebyshevTable2D;
use crate::error::{Error, Result};
use crate::kernels::{p_free, p_free_rotated, p_harm, HarmonicParams};
use crate::potential::{c_eval, schrodinger_growing_potential, Atom, PotentialMeasure};
use crate::surface::{ComplexVector, SurfaceTime};

const LIMITATION: &str = "numerical consistency evidence only; it does not replace the uniqueness argument";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Heat flow with `c(x) = e^{−x²}` against Crank–Nicolson.
    GaussianHeat,
    /// Schrödinger flow with `V(x) = e^{x}` through the `ε = π` kernel.
    SchrodingerGrowing,
    /// Mehler closed form against the Hermite eigen-expansion.
    HarmonicCross,
    /// `∫ p_free(t, x, y) φ(y) dy → φ(x)` as `t → 0⁺`.
    DeltaFamily,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [
        Experiment::GaussianHeat,
        Experiment::SchrodingerGrowing,
        Experiment::HarmonicCross,
        Experiment::DeltaFamily,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::GaussianHeat => "gaussian-heat",
            Experiment::SchrodingerGrowing => "schrodinger-growing",
            Experiment::HarmonicCross => "harmonic-cross",
            Experiment::DeltaFamily => "delta-family",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub note: String,
}

impl Report {
    fn new(experiment: Experiment, max_rel_error: f64, tolerance: f64, extra_pass: bool, note: String) -> Self {
        Report {
            experiment: experiment.name().to_string(),
            max_rel_error,
            tolerance,
            pass: extra_pass && max_rel_error.is_finite() && max_rel_error < tolerance,
            note: format!("{note}; {LIMITATION}"),
        }
    }
}

/// Sampling parameters of the Monte Carlo experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig { samples: 1_000_000, seed: 0 }
    }
}

pub fn run_experiment(experiment: Experiment, config: &ExperimentConfig) -> Result<Report> {
    match experiment {
        Experiment::GaussianHeat => gaussian_heat(config),
        Experiment::SchrodingerGrowing => schrodinger_growing(),
        Experiment::HarmonicCross => harmonic_cross(),
        Experiment::DeltaFamily => delta_family(),
    }
}

fn r1(x: f64) -> ComplexVector {
    ComplexVector::real(&[x])
}

fn sup(values: &[Complex64]) -> f64 {
    values.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

fn sup_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
}

pub const GAUSSIAN_HEAT_ORDER: usize = 8;
pub const GAUSSIAN_HEAT_TIMES: [f64; 3] = [0.05, 0.1, 0.2];
/// Output points satisfy `|x| ≤ 4`; `φ_0 = e^{−y²}` is cut at `|y| = 4.5`.
const HEAT_X_MAX: f64 = 4.0;
const HEAT_Y_MAX: f64 = 4.5;

/// `sup_{|x| ≤ 4} |∫ p φ_0 − u_CN| / ‖φ_0‖_∞` for `c(x) = e^{−x²}` at one time.
///
/// `p^conj` is tabulated in `u = (x + y)/2`, `d = x − y`; the free factor confines
/// `d` to a band of width `O(√t)`, outside which the kernel is dropped.
pub fn gaussian_heat_error(t: f64, config: &ExperimentConfig) -> Result<f64> {
    let m = PotentialMeasure::gaussian(1.0, 1, 0.0)?;
    let grid = Grid1D::new(-8.0, 8.0, 1601, 1e-4)?;
    let phi0 = grid.sample(|x| Complex64::new((-x * x).exp(), 0.0));
    let heat = evolve_heat(|x| c_eval(&m, &r1(x)).unwrap_or_default(), &phi0, &grid, t)?;

    let time = SurfaceTime::real(t)?;
    let band = 8.0 * t.sqrt() + 0.2;
    let u_max = (HEAT_X_MAX + HEAT_Y_MAX) / 2.0;
    let d_nodes = (10.0 + 20.0 * t).ceil() as usize;
    let method = Method::MonteCarlo(McConfig::new(config.samples, config.seed));
    let mut failure = None;
    let table = ChebyshevTable2D::from_batch((-u_max, u_max), (-band, band), 32, d_nodes, |pairs| {
        let xy: Vec<(f64, f64)> = pairs.iter().map(|&(u, d)| (u + d / 2.0, u - d / 2.0)).collect();
        p_conj_batch(&m, 0.0, time, &xy, GAUSSIAN_HEAT_ORDER, &method).unwrap_or_else(|e| {
            failure = Some(e);
            vec![Complex64::new(0.0, 0.0); pairs.len()]
        })
    });
    if let Some(e) = failure {
        return Err(e);
    }

    let support: Vec<usize> = (0..grid.n_points)
        .filter(|&i| grid.point(i).abs() <= HEAT_Y_MAX + 1e-9)
        .collect();
    let sub = Grid1D::new(grid.point(support[0]), grid.point(support[support.len() - 1]), support.len(), grid.dt)?;
    let sub_phi: Vec<Complex64> = support.iter().map(|&i| phi0[i]).collect();
    let outputs: Vec<usize> = (0..grid.n_points)
        .filter(|&i| grid.point(i).abs() <= HEAT_X_MAX + 1e-9)
        .collect();
    let xs: Vec<f64> = outputs.iter().map(|&i| grid.point(i)).collect();
    let action = kernel_action_at(
        |s, x, y| {
            let d = x - y;
            if d.abs() > band {
                return Ok(Complex64::new(0.0, 0.0));
            }
            Ok(p_free(s, &r1(x), &r1(y), 1)? * table.eval((x + y) / 2.0, d))
        },
        &sub_phi,
        &sub,
        time,
        &xs,
    )?;
    let reference: Vec<Complex64> = outputs.iter().map(|&i| heat.values[i]).collect();
    Ok(sup_diff(&action, &reference) / sup(&phi0))
}

fn gaussian_heat(config: &ExperimentConfig) -> Result<Report> {
    let mut worst: f64 = 0.0;
    for t in GAUSSIAN_HEAT_TIMES {
        worst = worst.max(gaussian_heat_error(t, config)?);
    }
    Ok(Report::new(
        Experiment::GaussianHeat,
        worst,
        1e-3,
        true,
        format!(
            "c(x)=exp(-x^2), t in {GAUSSIAN_HEAT_TIMES:?}, |x|<=4, order {GAUSSIAN_HEAT_ORDER}, {} samples per term, seed {}",
            config.samples, config.seed
        ),
    ))
}

/// Smooth bump supported on `[−4, 4]`, equal to 1 at the origin.
fn bump(x: f64) -> f64 {
    let u = x / 4.0;
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

pub const SCHRODINGER_TIME: f64 = 0.01;
const SCHRODINGER_ORDER: usize = 12;

/// Relative sup-distance on `[−2, 2]` between the deformation kernel action and
/// Crank–Nicolson for `∂_𝐭ψ = i(∂² + e^{x})ψ`.
pub fn schrodinger_growing_error() -> Result<f64> {
    let epsilon = PI;
    let m = PotentialMeasure::discrete(vec![Atom::new(Complex64::new(1.0, 0.0), r1(1.0))], epsilon)?;
    let grid = Grid1D::new(-6.0, 6.0, 6001, 1e-5)?;
    let phi0 = grid.sample(|x| Complex64::new(bump(x), 0.0));
    let potential = |x: f64| schrodinger_growing_potential(&m, &r1(x)).map(|v| v.re).unwrap_or(f64::NAN);
    let cn = evolve_schrodinger(potential, &phi0, &grid, SCHRODINGER_TIME)?;

    let time = SurfaceTime::new(SCHRODINGER_TIME, PI / 2.0)?;
    let table = p_conj_table(&m, 0.0, time, (-2.0, 2.0), (-4.0, 4.0), (16, 28), SCHRODINGER_ORDER, &Method::Exact)?;
    // real-line kernel = e^{−iεν/2} p_ε
    let phase = Complex64::from_polar(1.0, -epsilon / 2.0);
    let support: Vec<usize> = (0..grid.n_points).filter(|&i| grid.point(i).abs() <= 4.0).collect();
    let sub = Grid1D::new(grid.point(support[0]), grid.point(support[support.len() - 1]), support.len(), grid.dt)?;
    let sub_phi: Vec<Complex64> = support.iter().map(|&i| phi0[i]).collect();
    let interior: Vec<usize> = (0..grid.n_points).filter(|&i| grid.point(i).abs() <= 2.0).collect();
    let xs: Vec<f64> = interior.iter().map(|&i| grid.point(i)).collect();
    let action = kernel_action_at(
        |s, x, y| Ok(phase * p_free_rotated(s, &r1(x), &r1(y), 1, epsilon)? * table.eval(x, y)),
        &sub_phi,
        &sub,
        time,
        &xs,
    )?;
    let reference: Vec<Complex64> = interior.iter().map(|&i| cn.values[i]).collect();
    Ok(sup_diff(&action, &reference) / sup(&reference))
}

fn schrodinger_growing() -> Result<Report> {
    let err = schrodinger_growing_error()?;
    Ok(Report::new(
        Experiment::SchrodingerGrowing,
        err,
        1e-2,
        true,
        format!("V(x)=exp(x) via epsilon=pi, t={SCHRODINGER_TIME}, bump on [-4,4], compared on [-2,2]"),
    ))
}

/// Largest `|Mehler − p_harm| / |p_harm|` over a 5×5×3 grid with `λ = −1`.
pub fn harmonic_cross_error() -> Result<f64> {
    let params = HarmonicParams::new(-1.0, 1)?;
    let mut worst: f64 = 0.0;
    for t in [0.3, 0.6, 1.2] {
        for x in [-1.5, -0.75, 0.0, 0.5, 1.25] {
            for y in [-1.0, -0.25, 0.0, 0.75, 1.5] {
                let m = mehler_eigen_kernel(1.0, t, x, y, 400)?;
                let p = p_harm(SurfaceTime::real(t)?, &r1(x), &r1(y), &params)?;
                worst = worst.max((m - p).norm() / p.norm());
            }
        }
    }
    Ok(worst)
}

fn harmonic_cross() -> Result<Report> {
    Ok(Report::new(
        Experiment::HarmonicCross,
        harmonic_cross_error()?,
        1e-8,
        true,
        "Hermite expansion vs closed form, lambda=-1, 5x5x3 grid".into(),
    ))
}

/// `sup_x |∫ p_free(t) φ − φ|` for `t = 0.1, 0.01, 0.001`.
pub fn delta_family_distances() -> Result<Vec<f64>> {
    let grid = Grid1D::new(-8.0, 8.0, 3201, 1e-3)?;
    let phi0 = grid.sample(|x| Complex64::new((-x * x).exp(), 0.0));
    [0.1, 0.01, 0.001]
        .into_iter()
        .map(|t| {
            let action = kernel_action(|s, x, y| p_free(s, &r1(x), &r1(y), 1), &phi0, &grid, SurfaceTime::real(t)?)?;
            Ok(sup_diff(&action, &phi0) / sup(&phi0))
        })
        .collect()
}

fn delta_family() -> Result<Report> {
    let d = delta_family_distances()?;
    let monotone = d.windows(2).all(|w| w[1] < w[0]);
    Ok(Report::new(
        Experiment::DeltaFamily,
        d[d.len() - 1],
        1e-2,
        monotone,
        format!("sup distances at t = 0.1, 0.01, 0.001: {d:?}; monotone: {monotone}"),
    ))
}
