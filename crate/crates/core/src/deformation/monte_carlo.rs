//! Monte Carlo estimates of `v_n` through the Gaussian bridge of the prefactor.
//!
//! Writing `u = t s`, `v_n = t^n/n! · E_s[ ∫ Π w e^{i m_k·ξ_k} e^{−Σ H_{jk} ξ_j·ξ_k} dμ^n ]`
//! where `s` are sorted uniforms, `m_k = a_k y + b_k x` is the bridge mean and
//! `H = G/2` half its covariance. For the free prefactor `a = 1−s`, `b = s` and
//! `H_{jk} = t s_{j∧k}(1 − s_{j∨k})`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::POLE_TOLERANCE;
use crate::potential::{Atom, PotentialMeasure};
use crate::special::shc;
use crate::surface::ComplexVector;

/// Samples drawn per deterministic seed block.
pub const BLOCK: usize = 1024;

/// Largest atom-tuple count the conditional estimator enumerates.
pub const MAX_TUPLES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Integrate ξ exactly given `s` (Gaussian integral or tuple sum).
    #[default]
    Conditional,
    /// Sample both `s` and `ξ`.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub estimator: Estimator,
}

impl McConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        McConfig { samples, seed, estimator: Estimator::Conditional }
    }

    pub fn with_estimator(mut self, estimator: Estimator) -> Self {
        self.estimator = estimator;
        self
    }
}

/// The Gaussian bridge of `∂² + λx²` from `y` (at `u = 0`) to `x` (at `u = t`).
#[derive(Debug, Clone, Copy)]
pub struct Bridge {
    t: Complex64,
    omega_sq: Complex64,
    denom: Complex64,
}

impl Bridge {
    pub fn new(t: Complex64, lambda: f64) -> Result<Self> {
        let omega_sq = Complex64::new(-4.0 * lambda, 0.0);
        let sh = shc(omega_sq * t * t);
        if sh.norm() < POLE_TOLERANCE {
            return Err(Error::Pole { modulus: sh.norm() });
        }
        Ok(Bridge { t, omega_sq, denom: t * sh })
    }

    /// `sh(ωu)/ω`
    fn sh(&self, u: Complex64) -> Complex64 {
        u * shc(self.omega_sq * u * u)
    }

    fn geometry(&self, s: &[f64]) -> Geometry {
        let n = s.len();
        let mut g = Geometry { h: vec![Complex64::new(0.0, 0.0); n * n], a: vec![], b: vec![] };
        if self.omega_sq == Complex64::new(0.0, 0.0) {
            for j in 0..n {
                for k in j..n {
                    let v = self.t * s[j] * (1.0 - s[k]);
                    g.h[j * n + k] = v;
                    g.h[k * n + j] = v;
                }
            }
            g.a = s.iter().map(|s| Complex64::new(1.0 - s, 0.0)).collect();
            g.b = s.iter().map(|s| Complex64::new(*s, 0.0)).collect();
        } else {
            let left: Vec<Complex64> = s.iter().map(|s| self.sh(self.t * *s)).collect();
            let right: Vec<Complex64> = s.iter().map(|s| self.sh(self.t * (1.0 - s))).collect();
            for j in 0..n {
                for k in j..n {
                    let v = left[j] * right[k] / self.denom;
                    g.h[j * n + k] = v;
                    g.h[k * n + j] = v;
                }
            }
            g.a = right.iter().map(|r| r / self.denom).collect();
            g.b = left.iter().map(|l| l / self.denom).collect();
        }
        g
    }
}

struct Geometry {
    /// `G/2`, row-major `n × n`
    h: Vec<Complex64>,
    a: Vec<Complex64>,
    b: Vec<Complex64>,
}

/// `A = L D Lᵀ` for complex symmetric `A`; returns `(L, D)` or `None` on a zero pivot.
fn ldlt(a: &[Complex64], n: usize) -> Option<(Vec<Complex64>, Vec<Complex64>)> {
    let mut l = vec![Complex64::new(0.0, 0.0); n * n];
    let mut d = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        let mut dj = a[j * n + j];
        for k in 0..j {
            dj -= l[j * n + k] * l[j * n + k] * d[k];
        }
        if dj.norm() == 0.0 || !dj.is_finite() {
            return None;
        }
        d[j] = dj;
        l[j * n + j] = Complex64::new(1.0, 0.0);
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k] * d[k];
            }
            l[i * n + j] = v / dj;
        }
    }
    Some((l, d))
}

/// Solve `L D Lᵀ z = r`.
fn ldlt_solve(l: &[Complex64], d: &[Complex64], r: &[Complex64]) -> Vec<Complex64> {
    let n = d.len();
    let mut z = r.to_vec();
    for i in 0..n {
        for k in 0..i {
            let v = l[i * n + k] * z[k];
            z[i] -= v;
        }
    }
    for i in 0..n {
        z[i] /= d[i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let v = l[k * n + i] * z[k];
            z[i] -= v;
        }
    }
    z
}

fn bilinear(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// A point `(x, y)` in the frame where the potential reads `Σ w e^{i x·ξ}`.
#[derive(Debug, Clone)]
pub struct FramePoint {
    pub x: ComplexVector,
    pub y: ComplexVector,
}

/// `Σ y_l²`, `Σ x_l y_l`, `Σ x_l²` per point, shared by every Gaussian sample.
struct QuadraticForms {
    y2: Vec<Complex64>,
    xy: Vec<Complex64>,
    x2: Vec<Complex64>,
    real: bool,
}

struct Points<'a> {
    frame: &'a [FramePoint],
    forms: QuadraticForms,
}

impl<'a> Points<'a> {
    fn new(frame: &'a [FramePoint]) -> Self {
        let y2: Vec<Complex64> = frame.iter().map(|p| p.y.dot(&p.y)).collect();
        let xy: Vec<Complex64> = frame.iter().map(|p| p.x.dot(&p.y)).collect();
        let x2: Vec<Complex64> = frame.iter().map(|p| p.x.dot(&p.x)).collect();
        let real = y2.iter().chain(&xy).chain(&x2).all(|c| c.im == 0.0);
        Points { frame, forms: QuadraticForms { y2, xy, x2, real } }
    }
}

/// Everything the estimators need besides the sample stream.
#[derive(Debug, Clone)]
pub struct McProblem {
    pub measure: PotentialMeasure,
    /// Frame time `e^{−iε} t`.
    pub t: Complex64,
    /// `e^{iε}`, multiplying every weight.
    pub weight_phase: Complex64,
    pub lambda: f64,
    /// Contour angle for Gaussian densities.
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    sum: Complex64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, v: Complex64) {
        self.sum += v;
        self.sum_sq += v.norm_sqr();
    }

    fn merge(&mut self, o: &Moments) {
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    /// Mean and standard error of the mean.
    fn finish(&self, count: usize) -> (Complex64, f64) {
        let n = count as f64;
        let mean = self.sum / n;
        let var = (self.sum_sq / n - mean.norm_sqr()).max(0.0);
        let se = if count > 1 { (var / (n - 1.0)).sqrt() } else { 0.0 };
        (mean, se)
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn rng_for(seed: u64, n: usize, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 40) | block as u64);
    rng
}

fn sorted_uniforms(rng: &mut ChaCha8Rng, n: usize, out: &mut Vec<f64>) {
    out.clear();
    out.extend((0..n).map(|_| rng.random::<f64>()));
    out.sort_by(|a, b| a.total_cmp(b));
}

/// One draw of the integrand at every point.
struct Sampler<'a> {
    problem: &'a McProblem,
    bridge: Bridge,
    estimator: Estimator,
    nu: usize,
    /// cumulative `|w|` for atom sampling
    cumulative: Vec<f64>,
}

impl<'a> Sampler<'a> {
    fn new(problem: &'a McProblem, estimator: Estimator) -> Result<Self> {
        let bridge = Bridge::new(problem.t, problem.lambda)?;
        let cumulative = match &problem.measure {
            PotentialMeasure::Discrete { atoms, .. } => atoms
                .iter()
                .scan(0.0, |acc, a| {
                    *acc += a.weight.norm();
                    Some(*acc)
                })
                .collect(),
            PotentialMeasure::Gaussian { .. } => Vec::new(),
        };
        if let PotentialMeasure::Gaussian { .. } = problem.measure {
            if (2.0 * problem.beta).cos() <= 0.0 {
                return Err(Error::InvalidInput(format!("contour angle {} must satisfy |β| < π/4", problem.beta)));
            }
        } else if problem.beta != 0.0 {
            return Err(Error::InvalidInput("a contour angle only applies to gaussian densities".into()));
        }
        Ok(Sampler { problem, bridge, estimator, nu: problem.measure.nu(), cumulative })
    }

    fn draw(&self, n: usize, rng: &mut ChaCha8Rng, s: &mut Vec<f64>, points: &Points, out: &mut [Complex64]) -> Result<()> {
        sorted_uniforms(rng, n, s);
        let g = self.bridge.geometry(s);
        let phase_n = self.problem.weight_phase.powi(n as i32);
        match (&self.problem.measure, self.estimator) {
            (PotentialMeasure::Gaussian { gamma, .. }, Estimator::Conditional) => {
                self.gaussian_conditional(n, *gamma, &g, phase_n, points, out)
            }
            (PotentialMeasure::Gaussian { gamma, .. }, Estimator::Full) => {
                self.gaussian_full(n, *gamma, &g, phase_n, rng, points.frame, out);
                Ok(())
            }
            (PotentialMeasure::Discrete { atoms, .. }, Estimator::Conditional) => {
                self.discrete_conditional(n, atoms, &g, points.frame, out);
                Ok(())
            }
            (PotentialMeasure::Discrete { atoms, .. }, Estimator::Full) => {
                self.discrete_full(n, atoms, &g, rng, points.frame, out);
                Ok(())
            }
        }
    }

    fn gaussian_conditional(
        &self,
        n: usize,
        gamma: f64,
        g: &Geometry,
        phase_n: Complex64,
        points: &Points,
        out: &mut [Complex64],
    ) -> Result<()> {
        let mut a = g.h.clone();
        for k in 0..n {
            a[k * n + k] += 1.0 / (4.0 * gamma);
        }
        let (l, d) = ldlt(&a, n).ok_or_else(|| Error::Domain("singular bridge covariance".into()))?;
        if d.iter().any(|p| p.re <= 0.0) {
            return Err(Error::Domain(
                "conditional estimator needs an accretive covariance; use the full estimator with a contour angle".into(),
            ));
        }
        let nu = self.nu as i32;
        let mut pref = phase_n * (4.0 * gamma).powf(-(n as f64) * self.nu as f64 / 2.0);
        for p in &d {
            pref *= (Complex64::new(1.0, 0.0) / p.sqrt()).powi(nu);
        }
        let za = ldlt_solve(&l, &d, &g.a);
        let zb = ldlt_solve(&l, &d, &g.b);
        let (qa, qab, qb) = (bilinear(&g.a, &za), bilinear(&g.a, &zb), bilinear(&g.b, &zb));
        let forms = &points.forms;
        if forms.real && pref.im == 0.0 && qa.im == 0.0 && qab.im == 0.0 && qb.im == 0.0 {
            let (p, qa, qab, qb) = (pref.re, qa.re, qab.re, qb.re);
            for (i, o) in out.iter_mut().enumerate() {
                let e = forms.y2[i].re * qa + 2.0 * forms.xy[i].re * qab + forms.x2[i].re * qb;
                *o = Complex64::new(p * (-0.25 * e).exp(), 0.0);
            }
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                let e = forms.y2[i] * qa + 2.0 * forms.xy[i] * qab + forms.x2[i] * qb;
                *o = pref * (-0.25 * e).exp();
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn gaussian_full(
        &self,
        n: usize,
        gamma: f64,
        g: &Geometry,
        phase_n: Complex64,
        rng: &mut ChaCha8Rng,
        points: &[FramePoint],
        out: &mut [Complex64],
    ) {
        let beta = self.problem.beta;
        let (c2, s2) = ((2.0 * beta).cos(), (2.0 * beta).sin());
        let sigma = (2.0 * gamma / c2).sqrt();
        let nu = self.nu;
        let xi: Vec<f64> = (0..n * nu).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
        let rot = Complex64::from_polar(1.0, -beta);
        let xi_sq: f64 = xi.iter().map(|v| v * v).sum();
        let weight = phase_n
            * Complex64::from_polar(c2.powf(-((n * nu) as f64) / 2.0), -((n * nu) as f64) * beta)
            * Complex64::new(0.0, s2 * xi_sq / (4.0 * gamma)).exp();
        let mut quad = Complex64::new(0.0, 0.0);
        for j in 0..n {
            for k in 0..n {
                let dot: f64 = (0..nu).map(|l| xi[j * nu + l] * xi[k * nu + l]).sum();
                quad += g.h[j * n + k] * dot;
            }
        }
        let base = weight * (-rot * rot * quad).exp();
        for (o, p) in out.iter_mut().zip(points) {
            let mut lin = Complex64::new(0.0, 0.0);
            for k in 0..n {
                for l in 0..nu {
                    lin += (g.a[k] * p.y[l] + g.b[k] * p.x[l]) * xi[k * nu + l];
                }
            }
            *o = base * (Complex64::i() * rot * lin).exp();
        }
    }

    /// Σ over tuples of `Π w e^{i m·ξ} e^{−ξᵀHξ}` for one `s`.
    fn discrete_conditional(&self, n: usize, atoms: &[Atom], g: &Geometry, points: &[FramePoint], out: &mut [Complex64]) {
        let k = atoms.len();
        let w = self.problem.weight_phase;
        out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
        let mut tuple = vec![0usize; n];
        loop {
            self.accumulate_tuple(&tuple, atoms, g, |a| w * a.weight, points, out);
            // odometer
            let mut i = 0;
            while i < n {
                tuple[i] += 1;
                if tuple[i] < k {
                    break;
                }
                tuple[i] = 0;
                i += 1;
            }
            if i == n {
                break;
            }
        }
    }

    fn discrete_full(
        &self,
        n: usize,
        atoms: &[Atom],
        g: &Geometry,
        rng: &mut ChaCha8Rng,
        points: &[FramePoint],
        out: &mut [Complex64],
    ) {
        let total = *self.cumulative.last().unwrap();
        let tuple: Vec<usize> = (0..n)
            .map(|_| {
                let r = rng.random::<f64>() * total;
                self.cumulative.partition_point(|c| *c <= r).min(atoms.len() - 1)
            })
            .collect();
        let w = self.problem.weight_phase * total;
        out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
        self.accumulate_tuple(&tuple, atoms, g, |a| w * a.weight / a.weight.norm(), points, out);
    }

    fn accumulate_tuple(
        &self,
        tuple: &[usize],
        atoms: &[Atom],
        g: &Geometry,
        weight: impl Fn(&Atom) -> Complex64,
        points: &[FramePoint],
        out: &mut [Complex64],
    ) {
        let n = tuple.len();
        let nu = self.nu;
        let mut prod = Complex64::new(1.0, 0.0);
        let mut quad = Complex64::new(0.0, 0.0);
        let mut sa = vec![Complex64::new(0.0, 0.0); nu];
        let mut sb = vec![Complex64::new(0.0, 0.0); nu];
        for (j, &aj) in tuple.iter().enumerate() {
            let a = &atoms[aj];
            prod *= weight(a);
            for (kk, &ak) in tuple.iter().enumerate() {
                quad += g.h[j * n + kk] * a.xi.dot(&atoms[ak].xi);
            }
            for l in 0..nu {
                sa[l] += g.a[j] * a.xi[l];
                sb[l] += g.b[j] * a.xi[l];
            }
        }
        let base = prod * (-quad).exp();
        for (o, p) in out.iter_mut().zip(points) {
            let lin: Complex64 = (0..nu).map(|l| p.y[l] * sa[l] + p.x[l] * sb[l]).sum();
            *o += base * (Complex64::i() * lin).exp();
        }
    }
}

/// Estimates `v_n` for `n = 0..=n_max` at every point: `result[n][point] = (value, std_error)`.
pub fn estimate_terms(
    problem: &McProblem,
    n_max: usize,
    points: &[FramePoint],
    config: &McConfig,
) -> Result<Vec<Vec<(Complex64, f64)>>> {
    if config.samples == 0 {
        return Err(Error::InvalidInput("Monte Carlo needs at least one sample".into()));
    }
    let sampler = Sampler::new(problem, config.estimator)?;
    if let (PotentialMeasure::Discrete { atoms, .. }, Estimator::Conditional) = (&problem.measure, config.estimator) {
        let tuples = (atoms.len() as f64).powi(n_max as i32);
        if tuples > MAX_TUPLES as f64 {
            return Err(Error::Unsupported(format!(
                "{tuples} atom tuples exceed the enumeration cap; use the full estimator"
            )));
        }
    }
    let prepared = Points::new(points);
    let mut result = vec![vec![(Complex64::new(1.0, 0.0), 0.0); points.len()]];
    let blocks = config.samples.div_ceil(BLOCK);
    for n in 1..=n_max {
        let per_block: Vec<Result<Vec<Moments>>> = (0..blocks)
            .into_par_iter()
            .map(|block| {
                let mut rng = rng_for(config.seed, n, block);
                let count = BLOCK.min(config.samples - block * BLOCK);
                let mut moments = vec![Moments::default(); points.len()];
                let mut s = Vec::with_capacity(n);
                let mut values = vec![Complex64::new(0.0, 0.0); points.len()];
                for _ in 0..count {
                    sampler.draw(n, &mut rng, &mut s, &prepared, &mut values)?;
                    for (m, v) in moments.iter_mut().zip(&values) {
                        m.push(*v);
                    }
                }
                Ok(moments)
            })
            .collect();
        let mut total = vec![Moments::default(); points.len()];
        for block in per_block {
            for (t, b) in total.iter_mut().zip(&block?) {
                t.merge(b);
            }
        }
        let scale = problem.t.powi(n as i32) / factorial(n);
        result.push(
            total
                .iter()
                .map(|m| {
                    let (mean, se) = m.finish(config.samples);
                    (mean * scale, se * scale.norm())
                })
                .collect(),
        );
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ldlt_solves_complex_symmetric_systems() {
        let a = vec![
            Complex64::new(2.0, 0.5),
            Complex64::new(0.3, -0.2),
            Complex64::new(0.3, -0.2),
            Complex64::new(1.5, 1.0),
        ];
        let (l, d) = ldlt(&a, 2).unwrap();
        let r = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.0)];
        let z = ldlt_solve(&l, &d, &r);
        for i in 0..2 {
            let back: Complex64 = (0..2).map(|k| a[i * 2 + k] * z[k]).sum();
            assert!((back - r[i]).norm() < 1e-14);
        }
        let det = a[0] * a[3] - a[1] * a[2];
        assert!((d[0] * d[1] - det).norm() < 1e-14);
    }

    #[test]
    fn harmonic_bridge_tends_to_free() {
        let s = [0.2, 0.5, 0.9];
        let t = Complex64::new(0.4, 0.1);
        let free = Bridge::new(t, 0.0).unwrap().geometry(&s);
        let near = Bridge::new(t, 1e-9).unwrap().geometry(&s);
        for (a, b) in free.h.iter().zip(&near.h) {
            assert!((a - b).norm() < 1e-9);
        }
        for (a, b) in free.b.iter().zip(&near.b) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn harmonic_bridge_mean_solves_the_classical_equation() {
        // m'' = ω² m with m(0) = y, m(t) = x; check via the a, b coefficients at λ = −1 (ω = 2)
        let t = 0.7;
        let g = Bridge::new(Complex64::new(t, 0.0), -1.0).unwrap().geometry(&[0.3]);
        let u = 0.3 * t;
        let expect_a = (2.0 * (t - u)).sinh() / (2.0 * t).sinh();
        let expect_b = (2.0 * u).sinh() / (2.0 * t).sinh();
        assert!((g.a[0].re - expect_a).abs() < 1e-14 && (g.b[0].re - expect_b).abs() < 1e-14);
        // half the covariance at u = v
        let expect_h = (2.0 * u).sinh() * (2.0 * (t - u)).sinh() / (2.0 * (2.0 * t).sinh());
        assert!((g.h[0].re - expect_h).abs() < 1e-14);
    }
}
