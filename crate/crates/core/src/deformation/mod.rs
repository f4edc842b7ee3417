//! The deformation series `p^conj = Σ v_n` and the full kernel `p = p_ε^harm · p^conj`.
//!
//! Everything is evaluated in the frame where the potential reads
//! `Σ w e^{i x·ξ}`: with `ξ_ε = e^{−iε/2} ξ` the rotated terms become
//! `v_n = t^n ∫∫ e^{i(y+s(x−y))·ξ_ε} exp(−t Q(s, ξ_ε)) dμ^n ds`.

pub mod monte_carlo;
pub mod series;

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{p_harm_rotated, HarmonicParams};
use crate::potential::{case_classification, Atom, CaseClassification, PotentialMeasure};
use crate::quadrature::ChebyshevTable2D;
use crate::surface::{wrap_centered, Angle, ComplexVector, Quotient, Sector, SurfaceTime, TWO_PI};

pub use monte_carlo::{Estimator, McConfig};
use monte_carlo::{estimate_terms, FramePoint, McProblem};
use series::{exact_from_c64, run_chain, ChainAtom, ChebyshevFunctions, ExactComplex, ExactPolynomials, Scalar};

/// Default number of terms `v_0 … v_N`.
pub const DEFAULT_ORDER: usize = 10;

/// The series is reported converged when `|v_N| < CONVERGENCE_RATIO · |Σ v_n|`.
pub const CONVERGENCE_RATIO: f64 = 1e-10;

/// Highest coefficient order computed in rational arithmetic; beyond it the
/// rational sizes make the recursion too slow and floating point is used.
pub const EXACT_COEFFICIENT_MAX_ORDER: usize = 16;

/// Absolute size allowed for the neglected tail of `exp(−tQ)` in any `v_n`.
const INNER_TOLERANCE: f64 = 1e-16;

const MAX_INNER_ORDER: usize = 160;

/// Inner order above which `v_n` is evaluated in floating point even when the atoms are exact.
const EXACT_INNER_MAX_ORDER: usize = 32;
const MAX_NODES: usize = 640;

/// `s(1−s)·ₙ ξ⊗ξ = Σ_{j,k} s_{j∧k}(1 − s_{j∨k}) ξ_j·ξ_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimplexQuadraticForm {
    pub n: usize,
}

impl SimplexQuadraticForm {
    pub fn new(n: usize) -> Self {
        SimplexQuadraticForm { n }
    }

    /// `s` is a point of the ordered simplex, `s_1 < … < s_n`.
    pub fn evaluate(&self, s: &[f64], xi: &[ComplexVector]) -> Result<Complex64> {
        if s.len() != self.n || xi.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "quadratic form of order {} given {} times and {} vectors",
                self.n,
                s.len(),
                xi.len()
            )));
        }
        let mut q = Complex64::new(0.0, 0.0);
        for j in 0..self.n {
            for k in 0..self.n {
                let (lo, hi) = (j.min(k), j.max(k));
                q += s[lo] * (1.0 - s[hi]) * xi[j].dot(&xi[k]);
            }
        }
        Ok(q)
    }
}

/// `∫_{0<s_1<…<s_n<1} Π s_i^{p_i} ds = Π_k 1/(Σ_{i≤k} p_i + k)`.
pub fn simplex_monomial_integral(p: &[u32]) -> Result<BigRational> {
    if p.is_empty() {
        return Err(Error::InvalidInput("simplex integral needs n >= 1".into()));
    }
    let mut acc = BigRational::one();
    let mut partial: u64 = 0;
    for (k, &pk) in p.iter().enumerate() {
        partial += pk as u64;
        acc /= BigRational::from_integer(BigInt::from(partial + k as u64 + 1));
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationReport {
    pub order_used: usize,
    /// `|v_N|`
    pub last_term_norm: f64,
    /// Standard error of the Monte Carlo sum, when sampled.
    pub mc_std_error: Option<f64>,
    pub converged: bool,
}

/// Taylor coefficients `a_r` of `t ↦ p^conj(t, x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSeries {
    pub x: ComplexVector,
    pub y: ComplexVector,
    pub coefficients: Vec<Complex64>,
    pub exact: bool,
    #[serde(skip)]
    pub exact_coefficients: Option<Vec<ExactComplex>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Deterministic simplex recursion (discrete measures).
    Exact,
    MonteCarlo(McConfig),
}

/// `e^{iφ}`, exact for multiples of π/2.
fn unit_phase(phi: f64) -> Complex64 {
    let q = phi / (PI / 2.0);
    if q == q.round() && q.abs() < 1e15 {
        match (q as i64).rem_euclid(4) {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    } else {
        Complex64::from_polar(1.0, phi)
    }
}

fn check_points(m: &PotentialMeasure, x: &ComplexVector, y: &ComplexVector) -> Result<()> {
    let nu = m.nu();
    if x.dim() != nu || y.dim() != nu {
        return Err(Error::InvalidInput(format!(
            "points have dimensions {} and {}, measure has {nu}",
            x.dim(),
            y.dim()
        )));
    }
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::InvalidInput("points must be finite".into()));
    }
    Ok(())
}

fn discrete_atoms(m: &PotentialMeasure) -> Result<&[Atom]> {
    match m {
        PotentialMeasure::Discrete { atoms, .. } => Ok(atoms),
        PotentialMeasure::Gaussian { .. } => Err(Error::Unsupported(
            "the simplex recursion needs a discrete measure; use Monte Carlo for gaussian densities".into(),
        )),
    }
}

/// Chain atoms in the `ξ_ε` frame.
fn float_chain_atoms(m: &PotentialMeasure, x: &ComplexVector, y: &ComplexVector) -> Result<Vec<ChainAtom<Complex64>>> {
    let rot = unit_phase(-m.epsilon() / 2.0);
    let d = x - y;
    Ok(discrete_atoms(m)?
        .iter()
        .map(|a| {
            let xi = a.xi.scale(rot);
            ChainAtom {
                scale: a.weight * (Complex64::i() * y.dot(&xi)).exp(),
                b: Complex64::i() * d.dot(&xi),
                xi: xi.components().to_vec(),
            }
        })
        .collect())
}

/// Exact chain atoms when every phase is trivial.
fn exact_chain_atoms(m: &PotentialMeasure, x: &ComplexVector, y: &ComplexVector) -> Result<Option<Vec<ChainAtom<ExactComplex>>>> {
    let float = float_chain_atoms(m, x, y)?;
    let rot = unit_phase(-m.epsilon() / 2.0);
    let mut out = Vec::with_capacity(float.len());
    for (a, orig) in float.iter().zip(discrete_atoms(m)?) {
        let trivial_y = y.dot(&orig.xi.scale(rot)) == Complex64::new(0.0, 0.0);
        if !trivial_y || a.b != Complex64::new(0.0, 0.0) {
            return Ok(None);
        }
        let xi: Option<Vec<ExactComplex>> = a.xi.iter().map(|c| exact_from_c64(*c)).collect();
        match (exact_from_c64(orig.weight), xi) {
            (Some(scale), Some(xi)) => out.push(ChainAtom { scale, xi, b: ExactComplex::zero() }),
            _ => return Ok(None),
        }
    }
    Ok(Some(out))
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Smallest `M` such that truncating `exp(−tQ)` after `τ^M` costs less than
/// `INNER_TOLERANCE` in every `v_n`, `1 ≤ n ≤ n_max`.
fn inner_order_for(n_max: usize, t_abs: f64, atoms: &[ChainAtom<Complex64>], reach: f64) -> Result<usize> {
    let xi_max = atoms
        .iter()
        .map(|a| a.xi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let mass: f64 = atoms.iter().map(|a| a.scale.norm()).sum();
    let mut order = 0;
    for n in 1..=n_max {
        let z = t_abs * (n * n) as f64 * xi_max * xi_max / 4.0;
        if z == 0.0 {
            continue;
        }
        let log_pre = n as f64 * (t_abs * mass).max(1e-300).ln() - factorial(n).ln() + n as f64 * xi_max * reach + z;
        let mut log_term = log_pre + z.ln();
        let mut m = 0;
        while log_term > INNER_TOLERANCE.ln() {
            m += 1;
            if m > MAX_INNER_ORDER {
                return Err(Error::Truncation(format!(
                    "exp(−tQ) needs more than {MAX_INNER_ORDER} terms at |t| = {t_abs} (n = {n})"
                )));
            }
            log_term += z.ln() - ((m + 1) as f64).ln();
        }
        order = order.max(m);
    }
    Ok(order)
}

fn node_count(degree: usize, atoms: &[ChainAtom<Complex64>], n_max: usize) -> Result<usize> {
    let b_max = atoms.iter().map(|a| a.b.norm()).fold(0.0, f64::max);
    let nodes = degree + 24 + (1.5 * n_max as f64 * b_max).ceil() as usize;
    if nodes > MAX_NODES {
        return Err(Error::Truncation(format!(
            "the simplex recursion would need {nodes} Chebyshev nodes (limit {MAX_NODES})"
        )));
    }
    Ok(nodes)
}

/// `J[n][m]` by the exact or floating chain.
enum Chain {
    Exact(Vec<Vec<ExactComplex>>),
    Float(Vec<Vec<Complex64>>),
}

fn run_eval_chain(m: &PotentialMeasure, x: &ComplexVector, y: &ComplexVector, n_max: usize, inner: usize) -> Result<Chain> {
    let nu = m.nu();
    if inner <= EXACT_INNER_MAX_ORDER {
        if let Some(atoms) = exact_chain_atoms(m, x, y)? {
            return Ok(Chain::Exact(run_chain(&ExactPolynomials, &atoms, nu, n_max, |_| inner)));
        }
    }
    let atoms = float_chain_atoms(m, x, y)?;
    let nodes = node_count(n_max + 2 * inner + 1, &atoms, n_max)?;
    let space = ChebyshevFunctions::new(nodes, n_max + 2 * inner + 2);
    Ok(Chain::Float(run_chain(&space, &atoms, nu, n_max, |_| inner)))
}

/// `v_n = t^n Σ_m (−t)^m J_n[m]`
fn terms_from_chain<S: Scalar>(j: &[Vec<S>], t: &S) -> Vec<S> {
    let minus_t = -t.clone();
    let mut tn = S::one();
    j.iter()
        .map(|jn| {
            let mut acc = S::zero();
            let mut pow = S::one();
            for c in jn {
                acc = acc + c.clone() * pow.clone();
                pow = pow * minus_t.clone();
            }
            let v = tn.clone() * acc;
            tn = tn.clone() * t.clone();
            v
        })
        .collect()
}

fn reach(x: &ComplexVector, y: &ComplexVector) -> f64 {
    x.norm().max(y.norm())
}

/// `v_n` by the simplex recursion with `exp(−tQ)` expanded to order `inner_order`.
pub fn v_n_exact(
    m: &PotentialMeasure,
    n: usize,
    t: SurfaceTime,
    x: &ComplexVector,
    y: &ComplexVector,
    inner_order: usize,
) -> Result<Complex64> {
    check_points(m, x, y)?;
    discrete_atoms(m)?;
    if n == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let tp = t.projection();
    let v = match run_eval_chain(m, x, y, n, inner_order)? {
        Chain::Exact(j) => {
            let te = exact_from_c64(tp).ok_or_else(|| Error::InvalidInput("non-finite time".into()))?;
            terms_from_chain(&j, &te)[n].to_c64()
        }
        Chain::Float(j) => terms_from_chain(&j, &tp)[n],
    };
    let atoms = float_chain_atoms(m, x, y)?;
    let needed = inner_order_for(n, t.r(), &atoms, reach(x, y))?;
    if needed > inner_order {
        let z = t.r() * (n * n) as f64 / 4.0;
        return Err(Error::Truncation(format!(
            "inner order {inner_order} too small for n = {n} at |t| = {} (needs {needed}, |tQ| up to {z:.3}·|ξ|²)",
            t.r()
        )));
    }
    Ok(v)
}

/// Sector of times where the series converges.
///
/// Case 1 (support in a sector of half-angle θ): half-angle `π/2 − 2θ` about `e^{iε}`.
/// Gaussian densities with a contour angle `β`: half-angle `π/2` about `e^{i(ε+2β)}`;
/// without one, the union over admissible `β`, half-angle `π/2 + 2α`.
pub fn domain_of_validity(m: &PotentialMeasure, beta: Option<Angle>) -> Result<Sector> {
    let rotation = Angle::recognize(wrap_centered(m.epsilon(), TWO_PI), 64, 1e-12);
    let quarter = Angle::pi_frac(1, 2);
    match (case_classification(m)?, beta) {
        (CaseClassification::Case1 { theta }, None) => {
            Sector::new(quarter - theta.scale(2), rotation, Quotient::TwoPi)
        }
        (CaseClassification::Case1 { .. }, Some(b)) if b.value() == 0.0 => {
            domain_of_validity(m, None)
        }
        (CaseClassification::Case1 { .. }, Some(_)) => Err(Error::InvalidInput(
            "a contour angle only applies to analytic densities".into(),
        )),
        (CaseClassification::Case2 { alpha } | CaseClassification::Both { alpha, .. }, None) => {
            Sector::new(quarter + alpha.scale(2), rotation, Quotient::TwoPi)
        }
        (CaseClassification::Case2 { .. } | CaseClassification::Both { .. }, Some(b)) => {
            if b.value().abs() >= PI / 4.0 {
                return Err(Error::InvalidInput(format!("contour angle {b} must satisfy |β| < π/4")));
            }
            Sector::new(quarter, rotation + b.scale(2), Quotient::TwoPi)
        }
    }
}

/// Boundary rays count as inside: on them `Re(tQ) = 0` and the series still converges.
fn check_domain(m: &PotentialMeasure, t: SurfaceTime, beta: Option<Angle>) -> Result<()> {
    let sector = domain_of_validity(m, beta)?;
    if sector.contains_arg_closed(t.theta(), 1e-12) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "t = {}·e^{{i{}}} lies outside the sector of half-angle {} about {}",
            t.r(),
            t.theta(),
            sector.half_angle(),
            sector.rotation()
        )))
    }
}

/// Contour angle used for a Gaussian density at `t`: the requested one, else `0`
/// inside the closed right half-plane of the frame and `arg(t')/2` beyond it.
fn effective_beta(m: &PotentialMeasure, t: SurfaceTime, beta: Option<Angle>) -> f64 {
    match (m, beta) {
        (_, Some(b)) => b.value(),
        (PotentialMeasure::Gaussian { .. }, None) => {
            let arg = wrap_centered(t.theta() - m.epsilon(), TWO_PI);
            if arg.abs() <= PI / 2.0 {
                0.0
            } else {
                arg / 2.0
            }
        }
        (PotentialMeasure::Discrete { .. }, None) => 0.0,
    }
}

fn mc_problem(m: &PotentialMeasure, t: SurfaceTime, lambda: f64, beta: f64) -> McProblem {
    let eps = m.epsilon();
    McProblem {
        measure: m.clone(),
        t: unit_phase(-eps) * t.projection(),
        weight_phase: unit_phase(eps),
        lambda,
        beta,
    }
}

fn frame_point(m: &PotentialMeasure, x: &ComplexVector, y: &ComplexVector) -> FramePoint {
    let rot = unit_phase(-m.epsilon() / 2.0);
    FramePoint { x: x.scale(rot), y: y.scale(rot) }
}

fn mc_config_for(config: &McConfig, beta: f64) -> McConfig {
    if beta != 0.0 {
        config.with_estimator(Estimator::Full)
    } else {
        *config
    }
}

fn summarize(terms: &[Complex64], std_errors: Option<Vec<f64>>) -> (Complex64, TruncationReport) {
    let sum: Complex64 = terms.iter().sum();
    let last = terms.last().map(|v| v.norm()).unwrap_or(0.0);
    let mc_std_error = std_errors.map(|se| se.iter().map(|s| s * s).sum::<f64>().sqrt());
    let report = TruncationReport {
        order_used: terms.len() - 1,
        last_term_norm: last,
        mc_std_error,
        converged: terms.len() == 1 || last < CONVERGENCE_RATIO * sum.norm(),
    };
    (sum, report)
}

/// `Σ_{n≤N} v_n` at `(t, x, y)`.
pub fn p_conj(
    m: &PotentialMeasure,
    t: SurfaceTime,
    x: &ComplexVector,
    y: &ComplexVector,
    order: usize,
    method: &Method,
    beta: Option<Angle>,
) -> Result<(Complex64, TruncationReport)> {
    p_conj_with_lambda(m, 0.0, t, x, y, order, method, beta)
}

#[allow(clippy::too_many_arguments)]
fn p_conj_with_lambda(
    m: &PotentialMeasure,
    lambda: f64,
    t: SurfaceTime,
    x: &ComplexVector,
    y: &ComplexVector,
    order: usize,
    method: &Method,
    beta: Option<Angle>,
) -> Result<(Complex64, TruncationReport)> {
    check_points(m, x, y)?;
    check_domain(m, t, beta)?;
    match method {
        Method::Exact => {
            if lambda != 0.0 {
                return Err(Error::Unsupported(
                    "the simplex recursion covers the free prefactor only; use Monte Carlo when λ ≠ 0".into(),
                ));
            }
            let terms = chain_terms(m, t, x, y, order)?;
            Ok(summarize(&terms, None))
        }
        Method::MonteCarlo(config) => {
            let b = effective_beta(m, t, beta);
            let problem = mc_problem(m, t, lambda, b);
            let est = estimate_terms(&problem, order, &[frame_point(m, x, y)], &mc_config_for(config, b))?;
            let terms: Vec<Complex64> = est.iter().map(|row| row[0].0).collect();
            let se: Vec<f64> = est.iter().map(|row| row[0].1).collect();
            Ok(summarize(&terms, Some(se)))
        }
    }
}

fn chain_terms(m: &PotentialMeasure, t: SurfaceTime, x: &ComplexVector, y: &ComplexVector, order: usize) -> Result<Vec<Complex64>> {
    let atoms = float_chain_atoms(m, x, y)?;
    let inner = inner_order_for(order, t.r(), &atoms, reach(x, y))?;
    let tp = t.projection();
    Ok(match run_eval_chain(m, x, y, order, inner)? {
        Chain::Exact(j) => {
            let te = exact_from_c64(tp).ok_or_else(|| Error::InvalidInput("non-finite time".into()))?;
            terms_from_chain(&j, &te).iter().map(|v| v.to_c64()).collect()
        }
        Chain::Float(j) => terms_from_chain(&j, &tp),
    })
}

/// `Σ_{n≤N} v_n` in exact rational-complex arithmetic, when every phase is trivial.
pub fn p_conj_exact_rational(
    m: &PotentialMeasure,
    t: SurfaceTime,
    x: &ComplexVector,
    y: &ComplexVector,
    order: usize,
) -> Result<Option<ExactComplex>> {
    check_points(m, x, y)?;
    check_domain(m, t, None)?;
    let atoms = float_chain_atoms(m, x, y)?;
    let inner = inner_order_for(order, t.r(), &atoms, reach(x, y))?;
    match run_eval_chain(m, x, y, order, inner)? {
        Chain::Exact(j) => {
            let te = exact_from_c64(t.projection()).ok_or_else(|| Error::InvalidInput("non-finite time".into()))?;
            Ok(Some(
                terms_from_chain(&j, &te)
                    .into_iter()
                    .fold(ExactComplex::zero(), |acc, v| acc + v),
            ))
        }
        Chain::Float(_) => Ok(None),
    }
}

/// Chebyshev interpolant of `(x, y) ↦ p^conj(t, x, y)` for real `x`, `y` (ν = 1).
///
/// Monte Carlo shares one sample stream across all nodes, so the table is smooth
/// in `(x, y)` and its error is dominated by the common sampling error.
#[allow(clippy::too_many_arguments)]
pub fn p_conj_table(
    m: &PotentialMeasure,
    lambda: f64,
    t: SurfaceTime,
    x_range: (f64, f64),
    y_range: (f64, f64),
    nodes: (usize, usize),
    order: usize,
    method: &Method,
) -> Result<ChebyshevTable2D> {
    check_domain(m, t, None)?;
    let mut failure = None;
    let table = ChebyshevTable2D::from_batch(x_range, y_range, nodes.0, nodes.1, |pairs| {
        p_conj_batch(m, lambda, t, pairs, order, method).unwrap_or_else(|e| {
            failure = Some(e);
            vec![Complex64::new(0.0, 0.0); pairs.len()]
        })
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(table),
    }
}

/// `p^conj` at many real pairs `(x, y)` for `ν = 1`; Monte Carlo reuses one sample stream
/// for all pairs.
pub fn p_conj_batch(
    m: &PotentialMeasure,
    lambda: f64,
    t: SurfaceTime,
    pairs: &[(f64, f64)],
    order: usize,
    method: &Method,
) -> Result<Vec<Complex64>> {
    if m.nu() != 1 {
        return Err(Error::Unsupported("batched evaluation is implemented for ν = 1".into()));
    }
    check_domain(m, t, None)?;
    match method {
        Method::Exact => pairs
            .iter()
            .map(|&(x, y)| {
                p_conj_with_lambda(m, lambda, t, &ComplexVector::real(&[x]), &ComplexVector::real(&[y]), order, method, None)
                    .map(|r| r.0)
            })
            .collect(),
        Method::MonteCarlo(config) => {
            let b = effective_beta(m, t, None);
            let problem = mc_problem(m, t, lambda, b);
            let points: Vec<FramePoint> = pairs
                .iter()
                .map(|&(x, y)| frame_point(m, &ComplexVector::real(&[x]), &ComplexVector::real(&[y])))
                .collect();
            estimate_terms(&problem, order, &points, &mc_config_for(config, b)).map(|est| {
                (0..points.len())
                    .map(|p| est.iter().map(|row| row[p].0).sum())
                    .collect()
            })
        }
    }
}

/// Taylor coefficients `a_0 … a_{R}` of `p^conj(·, x, y)` at `t = 0`.
pub fn small_time_coefficients(
    m: &PotentialMeasure,
    x: &ComplexVector,
    y: &ComplexVector,
    r_max: usize,
) -> Result<CoefficientSeries> {
    check_points(m, x, y)?;
    let nu = m.nu();
    let bound = |k: usize| r_max.saturating_sub(k);
    // a_r = Σ_{n+m=r} (−1)^m J_n[m]
    fn collect<S: Scalar>(j: &[Vec<S>], r_max: usize) -> Vec<S> {
        let mut a = vec![S::zero(); r_max + 1];
        for (n, jn) in j.iter().enumerate() {
            for (m, c) in jn.iter().enumerate() {
                if n + m <= r_max {
                    let signed = if m % 2 == 0 { c.clone() } else { -c.clone() };
                    a[n + m] = a[n + m].clone() + signed;
                }
            }
        }
        a
    }
    let exact_atoms = if r_max <= EXACT_COEFFICIENT_MAX_ORDER {
        exact_chain_atoms(m, x, y)?
    } else {
        None
    };
    if let Some(atoms) = exact_atoms {
        let j = run_chain(&ExactPolynomials, &atoms, nu, r_max, bound);
        let exact = collect(&j, r_max);
        return Ok(CoefficientSeries {
            x: x.clone(),
            y: y.clone(),
            coefficients: exact.iter().map(|c| c.to_c64()).collect(),
            exact: true,
            exact_coefficients: Some(exact),
        });
    }
    let atoms = float_chain_atoms(m, x, y)?;
    let nodes = node_count(2 * r_max + 1, &atoms, r_max)?;
    let space = ChebyshevFunctions::new(nodes, r_max + 1);
    let j = run_chain(&space, &atoms, nu, r_max, bound);
    Ok(CoefficientSeries {
        x: x.clone(),
        y: y.clone(),
        coefficients: collect(&j, r_max),
        exact: false,
        exact_coefficients: None,
    })
}

/// `p = p_ε^harm · p^conj` for the operator `∂² + λ e^{−2iε} x² + c(x)`.
#[allow(clippy::too_many_arguments)]
pub fn full_kernel(
    m: &PotentialMeasure,
    lambda: f64,
    t: SurfaceTime,
    x: &ComplexVector,
    y: &ComplexVector,
    order: usize,
    method: &Method,
    beta: Option<Angle>,
) -> Result<Complex64> {
    full_kernel_with_report(m, lambda, t, x, y, order, method, beta).map(|r| r.0)
}

/// [`full_kernel`] together with the truncation report of its `p^conj` factor.
#[allow(clippy::too_many_arguments)]
pub fn full_kernel_with_report(
    m: &PotentialMeasure,
    lambda: f64,
    t: SurfaceTime,
    x: &ComplexVector,
    y: &ComplexVector,
    order: usize,
    method: &Method,
    beta: Option<Angle>,
) -> Result<(Complex64, TruncationReport)> {
    if lambda != 0.0 && beta.is_some_and(|b| b.value() != 0.0) {
        return Err(Error::Unsupported(
            "contour rotation with a harmonic prefactor is not covered by the deformation formula".into(),
        ));
    }
    let params = HarmonicParams::new(lambda, m.nu())?;
    let prefactor = p_harm_rotated(t, x, y, &params, m.epsilon())?;
    let (conj, report) = p_conj_with_lambda(m, lambda, t, x, y, order, method, beta)?;
    Ok((prefactor * conj, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::p_free;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn r1(x: f64) -> ComplexVector {
        ComplexVector::real(&[x])
    }

    fn atom_measure(atoms: &[(Complex64, f64)], epsilon: f64) -> PotentialMeasure {
        PotentialMeasure::discrete(atoms.iter().map(|&(w, xi)| Atom::new(w, r1(xi))).collect(), epsilon).unwrap()
    }

    fn constant(a: Complex64) -> PotentialMeasure {
        atom_measure(&[(a, 0.0)], 0.0)
    }

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn simplex_monomials() {
        assert_eq!(simplex_monomial_integral(&[0]).unwrap(), rat(1, 1));
        assert_eq!(simplex_monomial_integral(&[1, 0]).unwrap(), rat(1, 6));
        assert_eq!(simplex_monomial_integral(&[0, 0, 0]).unwrap(), rat(1, 6));
        assert!(simplex_monomial_integral(&[]).is_err());
    }

    #[test]
    fn v_n_examples() {
        let t = SurfaceTime::real(0.1).unwrap();
        let unit = atom_measure(&[(c(1.0, 0.0), 1.0)], 0.0);
        assert_eq!(v_n_exact(&unit, 0, t, &r1(0.3), &r1(1.0), 5).unwrap(), c(1.0, 0.0));
        let v1 = v_n_exact(&unit, 1, t, &r1(0.0), &r1(0.0), 12).unwrap();
        assert!((v1.re - 0.098349881610761890).abs() < 1e-16 && v1.im == 0.0);
        let a = c(0.7, -0.2);
        let t2 = SurfaceTime::real(0.4).unwrap();
        for n in 0..6 {
            let v = v_n_exact(&constant(a), n, t2, &r1(0.0), &r1(0.0), 0).unwrap();
            let expect = (a * 0.4).powi(n as i32) / factorial(n);
            assert!((v - expect).norm() < 1e-16, "n={n}");
        }
        assert!(matches!(
            v_n_exact(&unit, 3, SurfaceTime::real(2.0).unwrap(), &r1(0.0), &r1(0.0), 1),
            Err(Error::Truncation(_))
        ));
    }

    #[test]
    fn phases_go_through_the_float_chain() {
        let t = SurfaceTime::real(0.1).unwrap();
        let (x, y) = (r1(0.3), r1(-0.2));
        let unit = atom_measure(&[(c(1.0, 0.0), 1.0)], 0.0);
        let v1 = v_n_exact(&unit, 1, t, &x, &y, 14).unwrap();
        assert!((v1 - c(0.09720015800082698585, 0.004864061960733677402)).norm() < 1e-15);
        let v2 = v_n_exact(&unit, 2, t, &x, &y, 14).unwrap();
        assert!((v2 - c(0.004634800558310112124, 0.0004650311941995082082)).norm() < 1e-15);
        let two = atom_measure(&[(c(0.5, 0.0), 1.0), (c(0.2, 0.1), -2.0)], 0.0);
        let v2 = v_n_exact(&two, 2, t, &x, &y, 16).unwrap();
        assert!((v2 - c(0.002223434008955497889, 0.0006470950670796479730)).norm() < 1e-15);
    }

    #[test]
    fn coefficient_examples() {
        let unit = atom_measure(&[(c(1.0, 0.0), 1.0)], 0.0);
        let s = small_time_coefficients(&unit, &r1(0.0), &r1(0.0), 4).unwrap();
        assert!(s.exact);
        let exact = s.exact_coefficients.unwrap();
        let q = |n, d| ExactComplex::new(rat(n, d), BigRational::zero());
        assert_eq!(exact[0], q(1, 1));
        assert_eq!(exact[1], q(1, 1));
        assert_eq!(exact[2], q(1, 3));

        let a = c(2.0, -1.0);
        let s = small_time_coefficients(&constant(a), &r1(0.5), &r1(0.5), 8).unwrap();
        for (r, coef) in s.coefficients.iter().enumerate() {
            assert!((coef - a.powi(r as i32) / factorial(r)).norm() < 1e-15);
        }

        // a_0 = 1 with nontrivial phases too
        let s = small_time_coefficients(&unit, &r1(0.3), &r1(-1.1), 5).unwrap();
        assert!(!s.exact);
        assert!((s.coefficients[0] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn coefficients_agree_with_terms() {
        // Σ_r a_r t^r against Σ_n v_n at small t
        let m = atom_measure(&[(c(0.5, 0.0), 1.0), (c(0.2, 0.1), -2.0)], 0.0);
        let (x, y) = (r1(0.3), r1(-0.2));
        let s = small_time_coefficients(&m, &x, &y, 16).unwrap();
        let t: f64 = 0.05;
        let series: Complex64 = s.coefficients.iter().enumerate().map(|(r, a)| a * t.powi(r as i32)).sum();
        let (direct, rep) = p_conj(&m, SurfaceTime::real(t).unwrap(), &x, &y, 16, &Method::Exact, None).unwrap();
        assert!(rep.converged);
        assert!((series - direct).norm() < 1e-14, "{series} vs {direct}");
    }

    #[test]
    fn constant_atom_closure_is_exact() {
        for a in [c(1.0, 0.0), c(-0.5, 0.0), c(0.0, 2.0)] {
            let t = SurfaceTime::real(0.2).unwrap();
            let exact = p_conj_exact_rational(&constant(a), t, &r1(0.0), &r1(0.0), 12).unwrap().unwrap();
            let ae = exact_from_c64(a).unwrap();
            let te = exact_from_c64(c(0.2, 0.0)).unwrap();
            let mut taylor = ExactComplex::zero();
            let mut term = ExactComplex::one();
            for n in 0..=12i64 {
                if n > 0 {
                    term = term * ae.clone() * te.clone() / ExactComplex::from_ratio(n, 1);
                }
                taylor = taylor + term.clone();
            }
            assert_eq!(exact, taylor);
            let (v, _) = p_conj(&constant(a), t, &r1(0.0), &r1(0.0), 12, &Method::Exact, None).unwrap();
            assert!((v - (a * 0.2).exp()).norm() < 1e-12);
        }
    }

    #[test]
    fn domain_examples() {
        let real = atom_measure(&[(c(1.0, 0.0), 1.0)], 0.0);
        let s = domain_of_validity(&real, None).unwrap();
        assert_eq!(s.half_angle().pi_fraction(), Some(num_rational::Ratio::new(1, 2)));
        let tilted = PotentialMeasure::discrete(
            vec![Atom::new(c(1.0, 0.0), ComplexVector::new(vec![Complex64::from_polar(1.0, PI / 8.0)]).unwrap())],
            0.0,
        )
        .unwrap();
        let s = domain_of_validity(&tilted, None).unwrap();
        assert_eq!(s.half_angle().pi_fraction(), Some(num_rational::Ratio::new(1, 4)));
        let g = PotentialMeasure::gaussian(1.0, 1, 0.0).unwrap();
        let s = domain_of_validity(&g, None).unwrap();
        assert_eq!(s.half_angle().pi_fraction(), Some(num_rational::Ratio::new(3, 4)));
        let g = g.with_alpha(Angle::radians(PI / 4.0 - 1e-9)).unwrap();
        assert!((domain_of_validity(&g, None).unwrap().half_angle().value() - PI).abs() < 1e-8);

        let outside = SurfaceTime::new(0.1, 2.0).unwrap();
        assert!(matches!(
            p_conj(&real, outside, &r1(0.0), &r1(0.0), 4, &Method::Exact, None),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn full_kernel_examples() {
        let t = SurfaceTime::new(0.3, 0.4).unwrap();
        let (x, y) = (r1(0.2), r1(-0.5));
        let zero = constant(c(0.0, 0.0));
        let p = full_kernel(&zero, 0.0, t, &x, &y, 10, &Method::Exact, None).unwrap();
        assert_eq!(p, p_free(t, &x, &y, 1).unwrap());
        let a = c(0.4, 0.3);
        let p = full_kernel(&constant(a), 0.0, t, &x, &y, 20, &Method::Exact, None).unwrap();
        let expect = p_free(t, &x, &y, 1).unwrap() * (a * t.projection()).exp();
        assert!((p - expect).norm() < 1e-14 * expect.norm());
        // the constant factor is independent of the dilation direction
        let rotated = atom_measure(&[(a, 0.0)], 1.0);
        let t = SurfaceTime::new(0.3, 1.2).unwrap();
        let (v, _) = p_conj(&rotated, t, &x, &y, 20, &Method::Exact, None).unwrap();
        assert!((v - (a * t.projection()).exp()).norm() < 1e-14);
    }

    #[test]
    fn monte_carlo_matches_exact_for_discrete_measures() {
        let m = atom_measure(&[(c(0.5, 0.0), 1.0), (c(0.2, 0.1), -2.0)], 0.0);
        let t = SurfaceTime::new(0.3, 0.2).unwrap();
        let (x, y) = (r1(0.3), r1(-0.2));
        for estimator in [Estimator::Conditional, Estimator::Full] {
            let cfg = McConfig::new(20_000, 7).with_estimator(estimator);
            let problem = mc_problem(&m, t, 0.0, 0.0);
            let est = estimate_terms(&problem, 4, &[frame_point(&m, &x, &y)], &cfg).unwrap();
            for (n, row) in est.iter().enumerate() {
                let exact = v_n_exact(&m, n, t, &x, &y, 40).unwrap();
                let (v, se) = row[0];
                assert!((v - exact).norm() <= 4.0 * se + 1e-15, "{estimator:?} n={n}: {v} vs {exact} ± {se}");
            }
        }
    }

    #[test]
    fn gaussian_first_term() {
        let g = PotentialMeasure::gaussian(1.0, 1, 0.0).unwrap();
        let t = SurfaceTime::real(0.1).unwrap();
        let problem = mc_problem(&g, t, 0.0, 0.0);
        let points = [frame_point(&g, &r1(0.0), &r1(0.0)), frame_point(&g, &r1(0.3), &r1(-0.2))];
        let est = estimate_terms(&problem, 1, &points, &McConfig::new(50_000, 3)).unwrap();
        for ((v, se), expect) in est[1].iter().zip([0.096853408234038925, 0.09470946475770853939]) {
            assert!((v.re - expect).abs() < 4.0 * se + 1e-12 && v.im.abs() < 1e-15, "{v} ± {se}");
            assert!(*se < 1e-4);
        }
        let full = estimate_terms(&problem, 1, &points[..1], &McConfig::new(50_000, 3).with_estimator(Estimator::Full)).unwrap();
        let (v, se) = full[1][0];
        assert!((v.re - 0.096853408234038925).abs() < 4.0 * se);
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let g = PotentialMeasure::gaussian(0.5, 1, 0.0).unwrap();
        let t = SurfaceTime::real(0.2).unwrap();
        let method = Method::MonteCarlo(McConfig::new(3000, 11));
        let a = p_conj(&g, t, &r1(0.1), &r1(0.4), 4, &method, None).unwrap();
        let b = p_conj(&g, t, &r1(0.1), &r1(0.4), 4, &method, None).unwrap();
        assert_eq!(a.0, b.0);
        let other = p_conj(&g, t, &r1(0.1), &r1(0.4), 4, &Method::MonteCarlo(McConfig::new(3000, 12)), None).unwrap();
        assert_ne!(a.0, other.0);
        assert!(a.1.mc_std_error.unwrap() > 0.0);
    }

    #[test]
    fn harmonic_prefactor_keeps_constant_potentials_exact() {
        let a = c(-0.3, 0.2);
        let t = SurfaceTime::real(0.5).unwrap();
        let method = Method::MonteCarlo(McConfig::new(64, 1));
        let (v, rep) = p_conj_with_lambda(&constant(a), -1.0, t, &r1(0.4), &r1(0.1), 25, &method, None).unwrap();
        assert!((v - (a * 0.5).exp()).norm() < 1e-15);
        assert!(rep.mc_std_error.unwrap() < 1e-10);
        assert!(p_conj_with_lambda(&constant(a), -1.0, t, &r1(0.4), &r1(0.1), 5, &Method::Exact, None).is_err());
    }

    #[test]
    fn table_reproduces_pointwise_values() {
        let m = atom_measure(&[(c(1.0, 0.0), 1.0)], PI);
        let t = SurfaceTime::new(0.01, PI / 2.0).unwrap();
        let table = p_conj_table(&m, 0.0, t, (-2.0, 2.0), (-4.0, 4.0), (16, 24), 8, &Method::Exact).unwrap();
        for &(x, y) in &[(0.3, -1.7), (-1.9, 3.9), (1.1, 0.2)] {
            let (v, _) = p_conj(&m, t, &r1(x), &r1(y), 8, &Method::Exact, None).unwrap();
            assert!((table.eval(x, y) - v).norm() < 1e-12, "({x},{y}): {} vs {v}", table.eval(x, y));
        }
    }

    proptest! {
        #[test]
        fn quadratic_form_properties(raw in proptest::collection::vec(0.0f64..1.0, 1..6), xis in proptest::collection::vec(-3.0f64..3.0, 6)) {
            let mut s = raw.clone();
            s.sort_by(|a, b| a.total_cmp(b));
            let n = s.len();
            let xi: Vec<ComplexVector> = xis[..n].iter().map(|v| r1(*v)).collect();
            let form = SimplexQuadraticForm::new(n);
            let q = form.evaluate(&s, &xi).unwrap();
            prop_assert!(q.re >= -1e-12 && q.im == 0.0);
            let zeros: Vec<ComplexVector> = (0..n).map(|_| r1(0.0)).collect();
            prop_assert_eq!(form.evaluate(&s, &zeros).unwrap(), c(0.0, 0.0));
            // reversal: s ↦ 1 − s read backwards, atoms read backwards
            let s_rev: Vec<f64> = s.iter().rev().map(|v| 1.0 - v).collect();
            let xi_rev: Vec<ComplexVector> = xi.iter().rev().cloned().collect();
            let q_rev = form.evaluate(&s_rev, &xi_rev).unwrap();
            prop_assert!((q - q_rev).norm() < 1e-12);
        }

        #[test]
        fn positivity_in_the_validity_sector(raw in proptest::collection::vec(0.0f64..1.0, 1..5),
                                             xis in proptest::collection::vec(-3.0f64..3.0, 5),
                                             frac in -0.999f64..0.999) {
            let m = atom_measure(&[(c(1.0, 0.0), 1.0)], 0.0);
            let sector = domain_of_validity(&m, None).unwrap();
            let t = Complex64::from_polar(1.0, frac * sector.half_angle().value());
            let mut s = raw.clone();
            s.sort_by(|a, b| a.total_cmp(b));
            let xi: Vec<ComplexVector> = xis[..s.len()].iter().map(|v| r1(*v)).collect();
            let q = SimplexQuadraticForm::new(s.len()).evaluate(&s, &xi).unwrap();
            prop_assert!((t * q).re >= -1e-12);
        }

    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn reversed_tuples_give_equal_terms_on_the_diagonal(x in -1.0f64..1.0, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            // v_2 restricted to the tuple (a, b) equals the tuple (b, a) when x = y
            let t = SurfaceTime::real(0.3).unwrap();
            let ab = atom_measure(&[(c(1.0, 0.0), a), (c(1.0, 0.0), b)], 0.0);
            let aa = atom_measure(&[(c(1.0, 0.0), a)], 0.0);
            let bb = atom_measure(&[(c(1.0, 0.0), b)], 0.0);
            let v = |m: &PotentialMeasure| v_n_exact(m, 2, t, &r1(x), &r1(x), 30).unwrap();
            // the cross tuples (a, b) and (b, a) are total minus diagonal; reversal makes them equal
            let cross = v(&ab) - v(&aa) - v(&bb);
            prop_assert!((cross - 2.0 * tuple_term(a, b, 0.3, x)).norm() < 1e-12);
        }
    }

    /// The ordered tuple `(a, b)` of `v_2` at `x = y`, by direct Gauss–Legendre quadrature.
    fn tuple_term(a: f64, b: f64, t: f64, x: f64) -> Complex64 {
        let gl = crate::quadrature::GaussLegendre::new(30);
        let val = gl.integrate(0.0, 1.0, |s2| {
            gl.integrate(0.0, s2, |s1| {
                let q = s1 * (1.0 - s1) * a * a + s2 * (1.0 - s2) * b * b + 2.0 * s1 * (1.0 - s2) * a * b;
                (-t * q).exp()
            })
        });
        (Complex64::i() * x * (a + b)).exp() * t * t * val
    }
}
