//! Recursive evaluation of the simplex integrals `J_n[m]` behind the terms `v_n`.
//!
//! With ordered `s` the quadratic form splits as
//! `Q = Σ_k (1−s_k) ξ_k·(s_k ξ_k + 2W_{k−1})`, `W_k = Σ_{j≤k} s_j ξ_j`, so
//! `exp(−tQ)` factors into one piece per simplex variable that only sees the
//! running sum `W`. The chain below keeps, for every multi-index `α` and power
//! `m` of `τ = −t`, the partial integral
//! `M_k[α][m](u) = ∫_{s_1<…<s_k<u} [τ^m] (integrand) · W_k^α`
//! as a function of the upper limit `u`. Summing atoms at every step keeps the
//! cost linear in the number of atoms instead of exponential in `n`.
//!
//! `v_n = t^n Σ_m (−t)^m J_n[m]` with `J_n[m] = M_n[0][m](1)`.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_complex::{Complex, Complex64};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::quadrature::ChebyshevBasis;

pub type ExactComplex = Complex<BigRational>;

/// Scalars the chain can run on.
pub trait Scalar:
    Clone
    + Zero
    + One
    + PartialEq
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
{
    fn from_ratio(num: i64, den: i64) -> Self;
    fn to_c64(&self) -> Complex64;
}

impl Scalar for Complex64 {
    fn from_ratio(num: i64, den: i64) -> Self {
        Complex64::new(num as f64 / den as f64, 0.0)
    }

    fn to_c64(&self) -> Complex64 {
        *self
    }
}

impl Scalar for ExactComplex {
    fn from_ratio(num: i64, den: i64) -> Self {
        Complex::new(BigRational::new(BigInt::from(num), BigInt::from(den)), BigRational::zero())
    }

    fn to_c64(&self) -> Complex64 {
        Complex64::new(self.re.to_f64().unwrap_or(f64::NAN), self.im.to_f64().unwrap_or(f64::NAN))
    }
}

/// Exact conversion of a floating-point complex number.
pub fn exact_from_c64(z: Complex64) -> Option<ExactComplex> {
    Some(Complex::new(BigRational::from_float(z.re)?, BigRational::from_float(z.im)?))
}

/// Polynomial factors that multiply chain functions.
#[derive(Debug, Clone, Copy)]
pub enum Factor {
    /// `s^j`
    S(usize),
    /// `(1−s)^j`
    OneMinusS(usize),
    /// `(s(1−s))^j`
    Bridge(usize),
}

/// A space of functions of the upper integration limit `u ∈ [0, 1]`.
pub trait FunctionSpace {
    type S: Scalar;
    type F: Clone;

    fn one(&self) -> Self::F;
    fn zero(&self) -> Self::F;
    /// `y += a·x`
    fn axpy(&self, y: &mut Self::F, a: &Self::S, x: &Self::F);
    fn mul_factor(&self, f: &Self::F, factor: Factor) -> Self::F;
    /// `u ↦ ∫_0^u scale·e^{b s} f(s) ds`
    fn integrate_with_exp(&self, f: &Self::F, scale: &Self::S, b: &Self::S) -> Self::F;
    fn at_one(&self, f: &Self::F) -> Self::S;
}

/// Polynomials in `s` with exact rational-complex coefficients (lowest degree first).
pub struct ExactPolynomials;

impl FunctionSpace for ExactPolynomials {
    type S = ExactComplex;
    type F = Vec<ExactComplex>;

    fn one(&self) -> Self::F {
        vec![ExactComplex::one()]
    }

    fn zero(&self) -> Self::F {
        Vec::new()
    }

    fn axpy(&self, y: &mut Self::F, a: &Self::S, x: &Self::F) {
        if y.len() < x.len() {
            y.resize(x.len(), ExactComplex::zero());
        }
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = yi.clone() + a.clone() * xi.clone();
        }
    }

    fn mul_factor(&self, f: &Self::F, factor: Factor) -> Self::F {
        let poly = factor_polynomial(factor);
        if f.is_empty() {
            return Vec::new();
        }
        let mut out = vec![ExactComplex::zero(); f.len() + poly.len() - 1];
        for (i, a) in f.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in poly.iter().enumerate() {
                if *b != 0 {
                    out[i + j] = out[i + j].clone()
                        + a.clone() * ExactComplex::from_ratio(*b, 1);
                }
            }
        }
        out
    }

    fn integrate_with_exp(&self, f: &Self::F, scale: &Self::S, b: &Self::S) -> Self::F {
        assert!(b.is_zero(), "exact chains need a trivial phase");
        let mut out = vec![ExactComplex::zero(); f.len() + 1];
        for (k, c) in f.iter().enumerate() {
            out[k + 1] = c.clone() * scale.clone() / ExactComplex::from_ratio(k as i64 + 1, 1);
        }
        out
    }

    fn at_one(&self, f: &Self::F) -> Self::S {
        f.iter().fold(ExactComplex::zero(), |acc, c| acc + c.clone())
    }
}

/// Integer coefficients of a factor polynomial.
fn factor_polynomial(factor: Factor) -> Vec<i64> {
    let binom = |j: usize| -> Vec<i64> {
        // coefficients of (1−s)^j
        let mut c = vec![1i64];
        for _ in 0..j {
            let mut next = vec![0i64; c.len() + 1];
            for (i, v) in c.iter().enumerate() {
                next[i] += v;
                next[i + 1] -= v;
            }
            c = next;
        }
        c
    };
    match factor {
        Factor::S(j) => {
            let mut c = vec![0i64; j + 1];
            c[j] = 1;
            c
        }
        Factor::OneMinusS(j) => binom(j),
        Factor::Bridge(j) => {
            let mut c = vec![0i64; j];
            c.extend(binom(j));
            c
        }
    }
}

/// Functions stored by their values at Chebyshev–Lobatto nodes on `[0, 1]`.
pub struct ChebyshevFunctions {
    basis: ChebyshevBasis,
    s_pow: Vec<Vec<f64>>,
    one_minus_pow: Vec<Vec<f64>>,
    bridge_pow: Vec<Vec<f64>>,
}

impl ChebyshevFunctions {
    /// `nodes` Chebyshev points, factor tables up to power `max_power`.
    pub fn new(nodes: usize, max_power: usize) -> Self {
        let basis = ChebyshevBasis::new(nodes);
        let table = |g: &dyn Fn(f64) -> f64| -> Vec<Vec<f64>> {
            let mut rows = vec![vec![1.0; nodes]];
            for j in 1..=max_power {
                let prev = &rows[j - 1];
                let row = basis.nodes().iter().zip(prev).map(|(s, p)| p * g(*s)).collect();
                rows.push(row);
            }
            rows
        };
        let s_pow = table(&|s| s);
        let one_minus_pow = table(&|s| 1.0 - s);
        let bridge_pow = table(&|s| s * (1.0 - s));
        ChebyshevFunctions { basis, s_pow, one_minus_pow, bridge_pow }
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }
}

impl FunctionSpace for ChebyshevFunctions {
    type S = Complex64;
    type F = Vec<Complex64>;

    fn one(&self) -> Self::F {
        vec![Complex64::new(1.0, 0.0); self.basis.len()]
    }

    fn zero(&self) -> Self::F {
        vec![Complex64::new(0.0, 0.0); self.basis.len()]
    }

    fn axpy(&self, y: &mut Self::F, a: &Self::S, x: &Self::F) {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += a * xi;
        }
    }

    fn mul_factor(&self, f: &Self::F, factor: Factor) -> Self::F {
        let row = match factor {
            Factor::S(j) => &self.s_pow[j],
            Factor::OneMinusS(j) => &self.one_minus_pow[j],
            Factor::Bridge(j) => &self.bridge_pow[j],
        };
        f.iter().zip(row).map(|(v, r)| v * *r).collect()
    }

    fn integrate_with_exp(&self, f: &Self::F, scale: &Self::S, b: &Self::S) -> Self::F {
        let g: Vec<Complex64> = f
            .iter()
            .zip(self.basis.nodes())
            .map(|(v, s)| v * scale * (b * *s).exp())
            .collect();
        let mut out = self.zero();
        self.basis.integrate_into(&g, &mut out);
        out
    }

    fn at_one(&self, f: &Self::F) -> Self::S {
        *f.last().unwrap()
    }
}

/// One atom of the measure as seen by the chain, already in the frame where
/// the potential is `Σ w e^{i x·ξ}`.
#[derive(Debug, Clone)]
pub struct ChainAtom<S> {
    /// Weight times the constant phase `e^{i y·ξ}`.
    pub scale: S,
    pub xi: Vec<S>,
    /// `i (x − y)·ξ`
    pub b: S,
}

/// Multi-indices `α ∈ ℕ^ν` with `|α| ≤ max_degree`, sorted by degree.
struct MultiIndices {
    list: Vec<Vec<u32>>,
    degree: Vec<usize>,
    lookup: HashMap<Vec<u32>, usize>,
    by_degree: Vec<Vec<usize>>,
}

impl MultiIndices {
    fn new(nu: usize, max_degree: usize) -> Self {
        let mut list: Vec<Vec<u32>> = vec![vec![0; nu]];
        let mut by_degree = vec![vec![0usize]];
        for d in 1..=max_degree {
            let mut layer = Vec::new();
            // raise one component of every index of degree d−1, keeping only the
            // canonical parent (last nonzero component raised)
            for &p in &by_degree[d - 1] {
                let parent = list[p].clone();
                let last = parent.iter().rposition(|&c| c > 0).unwrap_or(0);
                for i in last..nu {
                    let mut child = parent.clone();
                    child[i] += 1;
                    layer.push(list.len());
                    list.push(child);
                }
            }
            by_degree.push(layer);
        }
        let degree = list.iter().map(|a| a.iter().sum::<u32>() as usize).collect();
        let lookup = list.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
        MultiIndices { list, degree, lookup, by_degree }
    }

    fn add(&self, a: usize, b: usize) -> Option<usize> {
        let sum: Vec<u32> = self.list[a].iter().zip(&self.list[b]).map(|(x, y)| x + y).collect();
        self.lookup.get(&sum).copied()
    }

    fn sub(&self, a: usize, b: usize) -> Option<usize> {
        let (x, y) = (&self.list[a], &self.list[b]);
        if x.iter().zip(y).any(|(p, q)| q > p) {
            return None;
        }
        let diff: Vec<u32> = x.iter().zip(y).map(|(p, q)| p - q).collect();
        self.lookup.get(&diff).copied()
    }
}

fn pow<S: Scalar>(x: &S, k: u32) -> S {
    (0..k).fold(S::one(), |acc, _| acc * x.clone())
}

fn factorial<S: Scalar>(k: u32) -> S {
    (1..=k as i64).fold(S::one(), |acc, j| acc * S::from_ratio(j, 1))
}

fn binomial(n: u32, k: u32) -> Option<i64> {
    let mut acc: i128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as i128)? / (i + 1) as i128;
    }
    i64::try_from(acc).ok()
}

/// `Π_j C(α_j, δ_j)`, leaving `i64` only when it would overflow.
fn binomial_product<S: Scalar>(alpha: &[u32], delta: &[u32]) -> S {
    let small = alpha
        .iter()
        .zip(delta)
        .try_fold(1i64, |acc, (&a, &d)| acc.checked_mul(binomial(a, d)?));
    match small {
        Some(c) => S::from_ratio(c, 1),
        None => alpha.iter().zip(delta).fold(S::one(), |acc, (&a, &d)| {
            (0..d).fold(acc, |acc, i| acc * S::from_ratio((a - i) as i64, (i + 1) as i64))
        }),
    }
}

/// Runs the chain for `n = 0..=n_max`.
///
/// `bound(k)` is the largest `|α| + m` kept after `k` steps; it must not increase
/// with `k`. Returns `J[n][m]` for `m ≤ bound(n)`.
pub fn run_chain<Sp: FunctionSpace>(
    space: &Sp,
    atoms: &[ChainAtom<Sp::S>],
    nu: usize,
    n_max: usize,
    bound: impl Fn(usize) -> usize,
) -> Vec<Vec<Sp::S>> {
    type State<F> = Vec<Vec<Option<F>>>;
    let idx = MultiIndices::new(nu, bound(0));
    let empty_state = |b: usize| -> State<Sp::F> {
        idx.degree
            .iter()
            .map(|&d| if d <= b { vec![None; b - d + 1] } else { Vec::new() })
            .collect()
    };

    let b0 = bound(0);
    let mut state = empty_state(b0);
    state[0][0] = Some(space.one());
    let mut result = Vec::with_capacity(n_max + 1);
    let mut j0 = vec![Sp::S::zero(); b0 + 1];
    j0[0] = Sp::S::one();
    result.push(j0);

    for k in 1..=n_max {
        let (bp, bn) = (bound(k - 1), bound(k));
        assert!(bn <= bp, "chain bound must not increase");
        let mut next = empty_state(bn);
        let n_idx = idx.list.len();

        for atom in atoms {
            // ξ^β/β! and ξ^γ for every multi-index in range
            let mono: Vec<Sp::S> = idx
                .list
                .iter()
                .map(|a| {
                    a.iter()
                        .zip(&atom.xi)
                        .fold(Sp::S::one(), |acc, (&e, x)| acc * pow(x, e))
                })
                .collect();
            let mono_fact: Vec<Sp::S> = idx
                .list
                .iter()
                .zip(&mono)
                .map(|(a, m)| m.clone() / a.iter().fold(Sp::S::one(), |acc, &e| acc * factorial(e)))
                .collect();
            let xi_sq = atom.xi.iter().fold(Sp::S::zero(), |acc, x| acc + x.clone() * x.clone());

            // contraction with exp(2τ(1−s) ξ·W) and the bridge factor exp(τ s(1−s) ξ²)
            let mut reduced: State<Sp::F> = empty_state(bn);
            for delta in 0..n_idx {
                let dd = idx.degree[delta];
                if dd > bn {
                    continue;
                }
                let mut contracted: Vec<Option<Sp::F>> = vec![None; bn - dd + 1];
                for m in 0..=bn - dd {
                    let mut acc: Option<Sp::F> = None;
                    for j in 0..=m {
                        let two_j = Sp::S::from_ratio(1i64 << j.min(62), 1);
                        let mut inner: Option<Sp::F> = None;
                        for &beta in idx.by_degree.get(j).map(|v| v.as_slice()).unwrap_or(&[]) {
                            let coef = mono_fact[beta].clone() * two_j.clone();
                            if coef.is_zero() {
                                continue;
                            }
                            let Some(target) = idx.add(delta, beta) else { continue };
                            if idx.degree[target] > bp {
                                continue;
                            }
                            if let Some(Some(f)) = state[target].get(m - j) {
                                let slot = inner.get_or_insert_with(|| space.zero());
                                space.axpy(slot, &coef, f);
                            }
                        }
                        if let Some(f) = inner {
                            let f = if j == 0 { f } else { space.mul_factor(&f, Factor::OneMinusS(j)) };
                            match acc.as_mut() {
                                Some(a) => space.axpy(a, &Sp::S::one(), &f),
                                None => acc = Some(f),
                            }
                        }
                    }
                    contracted[m] = acc;
                }
                for m in 0..=bn - dd {
                    let mut acc: Option<Sp::F> = None;
                    for i in 0..=m {
                        let Some(f) = &contracted[m - i] else { continue };
                        let coef = pow(&xi_sq, i as u32) / factorial(i as u32);
                        if i > 0 && coef.is_zero() {
                            continue;
                        }
                        let g = if i == 0 { f.clone() } else { space.mul_factor(f, Factor::Bridge(i)) };
                        match acc.as_mut() {
                            Some(a) => space.axpy(a, &coef, &g),
                            None => {
                                let mut z = space.zero();
                                space.axpy(&mut z, &coef, &g);
                                acc = Some(z);
                            }
                        }
                    }
                    reduced[delta][m] = acc;
                }
            }

            // W_k^α = Σ_δ C(α,δ) (sξ)^{α−δ} W_{k−1}^δ, then the atom factor and ∫_0^u
            for alpha in 0..n_idx {
                let da = idx.degree[alpha];
                if da > bn {
                    continue;
                }
                for m in 0..=bn - da {
                    let mut by_power: Vec<Option<Sp::F>> = vec![None; da + 1];
                    for gamma in 0..n_idx {
                        let g = idx.degree[gamma];
                        if g > da {
                            break;
                        }
                        let Some(delta) = idx.sub(alpha, gamma) else { continue };
                        let Some(f) = reduced[delta].get(m).and_then(|f| f.as_ref()) else { continue };
                        let c: Sp::S = binomial_product(&idx.list[alpha], &idx.list[delta]);
                        let coef = mono[gamma].clone() * c;
                        if g > 0 && coef.is_zero() {
                            continue;
                        }
                        let slot = by_power[g].get_or_insert_with(|| space.zero());
                        space.axpy(slot, &coef, f);
                    }
                    let mut total: Option<Sp::F> = None;
                    for (g, f) in by_power.into_iter().enumerate() {
                        let Some(f) = f else { continue };
                        let f = if g == 0 { f } else { space.mul_factor(&f, Factor::S(g)) };
                        match total.as_mut() {
                            Some(t) => space.axpy(t, &Sp::S::one(), &f),
                            None => total = Some(f),
                        }
                    }
                    if let Some(f) = total {
                        let integrated = space.integrate_with_exp(&f, &atom.scale, &atom.b);
                        let slot = next[alpha][m].get_or_insert_with(|| space.zero());
                        space.axpy(slot, &Sp::S::one(), &integrated);
                    }
                }
            }
        }

        let jk: Vec<Sp::S> = (0..=bn)
            .map(|m| next[0][m].as_ref().map(|f| space.at_one(f)).unwrap_or_else(Sp::S::zero))
            .collect();
        result.push(jk);
        state = next;
    }
    result
}
