//! Quadrature rules and Chebyshev machinery shared by the kernels, the Borel
//! resummation and the oracles.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// `∫_a^b f` with this rule.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    pub fn integrate_complex<F: FnMut(f64) -> Complex64>(&self, a: f64, b: f64, mut f: F) -> Complex64 {
        let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| f(mid + half * x) * *w)
            .sum::<Complex64>()
            * half
    }

    /// Composite rule over `panels` equal sub-intervals.
    pub fn integrate_composite<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, panels: usize, mut f: F) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|k| self.integrate(a + k as f64 * h, a + (k + 1) as f64 * h, &mut f))
            .sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Laguerre rule for `∫_0^∞ f(x) e^{−x} dx`, built by Golub–Welsch.
#[derive(Debug, Clone)]
pub struct GaussLaguerre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLaguerre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut jacobi = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            jacobi[(i, i)] = (2 * i + 1) as f64;
            if i + 1 < n {
                let b = (i + 1) as f64;
                jacobi[(i, i + 1)] = b;
                jacobi[(i + 1, i)] = b;
            }
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Eigenvector weights are only accurate in absolute terms; redo them (and
        // polish the nodes) from the recurrence so the small tail weights keep relative accuracy.
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for (x0, w0) in pairs {
            let mut x = x0;
            for _ in 0..3 {
                let (ln, ln1, _, _) = laguerre_scaled(n, x);
                let derivative = n as f64 * (ln - ln1) / x;
                let dx = ln / derivative;
                if dx.is_finite() {
                    x -= dx;
                }
            }
            let (_, _, next, log_scale) = laguerre_scaled(n, x);
            let log_w = x.ln() - 2.0 * ((n + 1) as f64).ln() - 2.0 * (next.abs().ln() + log_scale);
            nodes.push(x);
            weights.push(if w0 > 1e-8 { w0 } else { log_w.exp() });
        }
        GaussLaguerre { nodes, weights }
    }

    pub fn integrate_complex<F: FnMut(f64) -> Complex64>(&self, mut f: F) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(x, w)| f(*x) * *w)
            .sum()
    }
}

/// `(L_n, L_{n−1}, L_{n+1})` at `x`, all divided by `e^{log_scale}`.
fn laguerre_scaled(n: usize, x: f64) -> (f64, f64, f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    let mut log_scale = 0.0;
    for k in 0..=n {
        let next = ((2 * k + 1) as f64 - x) * cur / (k + 1) as f64 - k as f64 * prev / (k + 1) as f64;
        if k == n {
            return (cur, prev, next, log_scale);
        }
        prev = cur;
        cur = next;
        let m = cur.abs();
        if m > 1e100 {
            prev /= m;
            cur /= m;
            log_scale += m.ln();
        }
    }
    unreachable!()
}

/// Chebyshev–Lobatto points on `[0, 1]` together with a spectral integration matrix.
///
/// Functions are stored by their values at the nodes (node 0 is `s = 0`, the last
/// node is `s = 1`). Polynomials of degree `< n` are represented exactly.
#[derive(Debug, Clone)]
pub struct ChebyshevBasis {
    nodes: Vec<f64>,
    integration: Vec<f64>,
}

impl ChebyshevBasis {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2);
        let m = n - 1;
        // x_j = −cos(πj/m) on [−1, 1], mapped to [0, 1].
        let xs: Vec<f64> = (0..n).map(|j| -(PI * j as f64 / m as f64).cos()).collect();
        let nodes: Vec<f64> = xs.iter().map(|x| 0.5 * (x + 1.0)).collect();

        // values -> Chebyshev coefficients (DCT-I on Lobatto points)
        let mut to_coef = vec![0.0; n * n];
        for k in 0..n {
            for j in 0..n {
                let cj = if j == 0 || j == m { 0.5 } else { 1.0 };
                // T_k(x_j) with x_j = −cos(πj/m) = cos(π(m−j)/m)
                let tk = (PI * (k * (m - j)) as f64 / m as f64).cos();
                to_coef[k * n + j] = 2.0 / m as f64 * cj * tk;
            }
        }
        for j in 0..n {
            to_coef[j] *= 0.5;
            to_coef[m * n + j] *= 0.5;
        }

        // coefficients of the antiderivative on [−1, 1] (one degree higher, truncated)
        let mut anti = vec![0.0; (n + 1) * n];
        for k in 0..n {
            let mut col = vec![0.0; n + 1];
            match k {
                0 => col[1] = 1.0,
                1 => {
                    col[0] = 0.25;
                    col[2] = 0.25;
                }
                _ => {
                    col[k + 1] += 1.0 / (2.0 * (k + 1) as f64);
                    col[k - 1] -= 1.0 / (2.0 * (k - 1) as f64);
                }
            }
            for (r, v) in col.iter().enumerate() {
                anti[r * n + k] = *v;
            }
        }

        // Evaluate the antiderivative at the nodes, subtract its value at x = −1,
        // scale by 1/2 for the map to [0, 1].
        let mut integration = vec![0.0; n * n];
        let mut eval = vec![0.0; n * (n + 1)];
        for (i, x) in xs.iter().enumerate() {
            let theta = x.clamp(-1.0, 1.0).acos();
            for r in 0..=n {
                let left = if r % 2 == 0 { 1.0 } else { -1.0 };
                eval[i * (n + 1) + r] = (r as f64 * theta).cos() - left;
            }
        }
        // integration = ½ · eval · anti · to_coef, done as two n³ products
        let mut ea = vec![0.0; n * n];
        for i in 0..n {
            for r in 0..=n {
                let e = eval[i * (n + 1) + r];
                if e == 0.0 {
                    continue;
                }
                for k in 0..n {
                    ea[i * n + k] += e * anti[r * n + k];
                }
            }
        }
        for i in 0..n {
            for k in 0..n {
                let a = ea[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    integration[i * n + j] += 0.5 * a * to_coef[k * n + j];
                }
            }
        }
        ChebyshevBasis { nodes, integration }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Values of `u ↦ ∫_0^u f(s) ds` at the nodes.
    pub fn integrate_into(&self, values: &[Complex64], out: &mut [Complex64]) {
        let n = self.nodes.len();
        for i in 0..n {
            let row = &self.integration[i * n..(i + 1) * n];
            let mut acc = Complex64::new(0.0, 0.0);
            for (w, v) in row.iter().zip(values) {
                acc += v * *w;
            }
            out[i] = acc;
        }
    }
}

/// Chebyshev points of the second kind on `[a, b]`.
pub fn chebyshev_points(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let m = (n - 1) as f64;
    (0..n)
        .map(|j| 0.5 * (a + b) - 0.5 * (b - a) * (PI * j as f64 / m).cos())
        .collect()
}

/// Barycentric weights for Chebyshev points of the second kind.
fn barycentric_weights(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n - 1 {
                0.5 * sign
            } else {
                sign
            }
        })
        .collect()
}

/// Barycentric interpolation weights at `x` for the nodes `xs`; exact hits return a unit vector.
fn interpolation_row(xs: &[f64], bw: &[f64], x: f64, out: &mut [f64]) {
    if let Some(k) = xs.iter().position(|&xj| xj == x) {
        out.iter_mut().for_each(|o| *o = 0.0);
        out[k] = 1.0;
        return;
    }
    let mut total = 0.0;
    for ((o, xj), w) in out.iter_mut().zip(xs).zip(bw) {
        *o = w / (x - xj);
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// Tensor-product Chebyshev interpolant of a complex function on a rectangle.
#[derive(Debug, Clone)]
pub struct ChebyshevTable2D {
    xs: Vec<f64>,
    ys: Vec<f64>,
    bx: Vec<f64>,
    by: Vec<f64>,
    /// row-major: values[i * ny + j] = f(xs[i], ys[j])
    values: Vec<Complex64>,
}

impl ChebyshevTable2D {
    /// Build the table from a batch evaluator called once with every node pair.
    pub fn from_batch<F>(x_range: (f64, f64), y_range: (f64, f64), nx: usize, ny: usize, f: F) -> Self
    where
        F: FnOnce(&[(f64, f64)]) -> Vec<Complex64>,
    {
        let xs = chebyshev_points(x_range.0, x_range.1, nx);
        let ys = chebyshev_points(y_range.0, y_range.1, ny);
        let pairs: Vec<(f64, f64)> = xs
            .iter()
            .flat_map(|&x| ys.iter().map(move |&y| (x, y)))
            .collect();
        let values = f(&pairs);
        assert_eq!(values.len(), pairs.len());
        ChebyshevTable2D {
            bx: barycentric_weights(nx),
            by: barycentric_weights(ny),
            xs,
            ys,
            values,
        }
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    pub fn y_range(&self) -> (f64, f64) {
        (self.ys[0], *self.ys.last().unwrap())
    }

    /// Interpolation along `y` for a fixed `x`, returned as a 1-D slice evaluator.
    pub fn at_x(&self, x: f64) -> ChebyshevRow<'_> {
        let mut wx = vec![0.0; self.xs.len()];
        interpolation_row(&self.xs, &self.bx, x, &mut wx);
        let ny = self.ys.len();
        let mut row = vec![Complex64::new(0.0, 0.0); ny];
        for (i, w) in wx.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            for j in 0..ny {
                row[j] += self.values[i * ny + j] * *w;
            }
        }
        ChebyshevRow { table: self, row }
    }

    pub fn eval(&self, x: f64, y: f64) -> Complex64 {
        self.at_x(x).eval(y)
    }
}

pub struct ChebyshevRow<'a> {
    table: &'a ChebyshevTable2D,
    row: Vec<Complex64>,
}

impl ChebyshevRow<'_> {
    pub fn eval(&self, y: f64) -> Complex64 {
        let t = self.table;
        let mut w = vec![0.0; t.ys.len()];
        interpolation_row(&t.ys, &t.by, y, &mut w);
        w.iter().zip(&self.row).map(|(w, v)| v * *w).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(8);
        let v = gl.integrate(0.0, 2.0, |x| x.powi(15) + 3.0 * x * x);
        assert!((v - (2f64.powi(16) / 16.0 + 8.0)).abs() < 1e-9);
        assert!((gl.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn laguerre_moments() {
        let gl = GaussLaguerre::new(20);
        // ∫ x^k e^{-x} = k!
        for (k, fact) in [(0, 1.0), (3, 6.0), (7, 5040.0)] {
            let v = gl.integrate_complex(|x| Complex64::new(x.powi(k), 0.0)).re;
            assert!((v - fact).abs() < 1e-10 * fact, "k={k}");
        }
    }

    #[test]
    fn chebyshev_integration_is_spectral() {
        let basis = ChebyshevBasis::new(24);
        let vals: Vec<Complex64> = basis
            .nodes()
            .iter()
            .map(|s| Complex64::new(0.0, 3.0 * s).exp())
            .collect();
        let mut out = vec![Complex64::new(0.0, 0.0); basis.len()];
        basis.integrate_into(&vals, &mut out);
        for (s, v) in basis.nodes().iter().zip(&out) {
            let exact = (Complex64::new(0.0, 3.0 * s).exp() - 1.0) / Complex64::new(0.0, 3.0);
            assert!((v - exact).norm() < 1e-13);
        }
        assert_eq!(out[0], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn table_interpolates_smooth_functions() {
        let f = |x: f64, y: f64| Complex64::new((x * y).cos(), (-(x - y) * (x - y)).exp());
        let table = ChebyshevTable2D::from_batch((-2.0, 2.0), (-3.0, 3.0), 30, 40, |pairs| {
            pairs.iter().map(|&(x, y)| f(x, y)).collect()
        });
        for &(x, y) in &[(0.1, 0.2), (-1.7, 2.9), (1.99, -2.5), (-2.0, -3.0)] {
            assert!((table.eval(x, y) - f(x, y)).norm() < 1e-9, "({x},{y})");
        }
    }
}
