//! Legendre chaos basis for uniformly distributed germs on `[-1, 1]`.
//!
//! All inner products are taken against the uniform density `f(ζ) = 1/2`,
//! so `⟨Ψ_w²⟩ = 1/(2w+1)` and quadrature weights sum to one.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest polynomial degree accepted by the evaluators.
pub const MAX_DEGREE: usize = 200;

/// Evaluates the Legendre polynomial `P_n(ζ)` by the three-term recurrence.
pub fn legendre_eval(n: usize, zeta: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&zeta) {
        return Err(Error::domain(format!("legendre argument {zeta} outside [-1, 1]")));
    }
    if n > MAX_DEGREE {
        return Err(Error::domain(format!("degree {n} exceeds cap {MAX_DEGREE}")));
    }
    Ok(legendre_unchecked(n, zeta))
}

/// Recurrence without range checks; used on quadrature nodes.
#[inline]
pub(crate) fn legendre_unchecked(n: usize, x: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut p0, mut p1) = (1.0, x);
            for k in 1..n {
                let kf = k as f64;
                let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    }
}

/// Fills `out[k] = P_k(x)` for `k = 0..out.len()`.
pub(crate) fn legendre_all(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for k in 1..out.len().saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = ((2.0 * kf + 1.0) * x * out[k] - kf * out[k - 1]) / (kf + 1.0);
    }
}

/// `⟨Ψ_w²⟩ = 1/(2w+1)` under the uniform density.
pub fn basis_norm_sq(w: usize) -> f64 {
    1.0 / (2 * w + 1) as f64
}

/// Gauss–Legendre nodes and weights in probability-weighted form.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ wᵢ g(ζᵢ)`, i.e. `E[g(ζ)]` for `ζ ~ U(-1, 1)` when `g` is a
    /// polynomial of degree ≤ `2n − 1`.
    pub fn expect(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * g(z))
            .sum()
    }
}

/// `n`-point Gauss–Legendre rule with weights normalised to sum to 1.
///
/// Nodes are found by Newton iteration on `P_n` starting from the
/// Tricomi-type asymptotic guess, then symmetrised.
pub fn gauss_legendre(n: usize) -> QuadratureRule {
    assert!(n >= 1, "gauss_legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
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
        // Weight of the classical rule is 2/((1-x²)P'_n²); halve it for f(ζ)=1/2.
        let w = 1.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    QuadratureRule { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `⟨Ψ_i Ψ_j Ψ_k⟩` under the uniform density, by exact Gauss–Legendre quadrature.
pub fn inner_triple(i: usize, j: usize, k: usize) -> f64 {
    let total = i + j + k;
    if total % 2 == 1 {
        return 0.0;
    }
    let (lo, mid, hi) = sort3(i, j, k);
    if hi > lo + mid {
        return 0.0;
    }
    let rule = gauss_legendre(total / 2 + 1);
    rule.expect(|z| legendre_unchecked(i, z) * legendre_unchecked(j, z) * legendre_unchecked(k, z))
}

fn sort3(a: usize, b: usize, c: usize) -> (usize, usize, usize) {
    let mut v = [a, b, c];
    v.sort_unstable();
    (v[0], v[1], v[2])
}

/// Precomputed `⟨Ψ_k Ψ_i Ψ_j⟩` for `k ≤ max_k` and `i, j ≤ degree`.
#[derive(Debug, Clone)]
pub struct TripleProducts {
    degree: usize,
    max_k: usize,
    table: Vec<f64>,
}

impl TripleProducts {
    pub fn new(degree: usize, max_k: usize) -> Self {
        // Integrand degree is at most 2·degree + max_k.
        let rule = gauss_legendre(degree + max_k / 2 + 1);
        let n = degree + 1;
        let nk = max_k + 1;
        let width = n.max(nk);
        let vals: Vec<Vec<f64>> = rule
            .nodes
            .iter()
            .map(|&z| {
                let mut row = vec![0.0; width];
                legendre_all(z, &mut row);
                row
            })
            .collect();
        let mut table = vec![0.0; nk * n * n];
        for k in 0..nk {
            for i in 0..n {
                for j in 0..n {
                    let parity_ok = (i + j + k) % 2 == 0;
                    let tri_ok = i.abs_diff(j) <= k && k <= i + j;
                    if !(parity_ok && tri_ok) {
                        continue;
                    }
                    let s: f64 = vals
                        .iter()
                        .zip(&rule.weights)
                        .map(|(row, &w)| w * row[k] * row[i] * row[j])
                        .sum();
                    table[(k * n + i) * n + j] = s;
                }
            }
        }
        Self { degree, max_k, table }
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        debug_assert!(k <= self.max_k && i <= self.degree && j <= self.degree);
        let n = self.degree + 1;
        self.table[(k * n + i) * n + j]
    }
}

/// Rule for truncating the two-variable multi-index set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// `j₁ + j₂ ≤ P`.
    #[default]
    TotalDegree,
    /// `max(j₁, j₂) ≤ P`.
    TensorProduct,
}

/// Multi-index `(j₁, j₂)`; the second slot is always zero for one variable.
pub type MultiIndex = [usize; 2];

/// Legendre basis descriptor for one or two germs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub dims: usize,
    pub degree: usize,
    pub truncation: Truncation,
    pub quad_order: usize,
    pub index_set: Vec<MultiIndex>,
}

impl BasisSpec {
    pub fn new(dims: usize, degree: usize, truncation: Truncation) -> Result<Self> {
        if !(1..=2).contains(&dims) {
            return Err(Error::config(format!("basis dimension {dims} not in {{1, 2}}")));
        }
        if degree > MAX_DEGREE {
            return Err(Error::config(format!("degree {degree} exceeds cap {MAX_DEGREE}")));
        }
        let quad_order = (degree + 2).max((3 * degree + 3).div_ceil(2));
        let mut spec = Self {
            dims,
            degree,
            truncation,
            quad_order,
            index_set: Vec::new(),
        };
        spec.index_set = build_index_set(&spec);
        Ok(spec)
    }

    pub fn one_dim(degree: usize) -> Result<Self> {
        Self::new(1, degree, Truncation::TotalDegree)
    }

    pub fn two_dim(degree: usize, truncation: Truncation) -> Result<Self> {
        Self::new(2, degree, truncation)
    }

    /// Number of coefficients, `K + 1`.
    pub fn len(&self) -> usize {
        self.index_set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_set.is_empty()
    }

    /// `⟨Ψ_m²⟩` for the `m`-th multi-index.
    pub fn norm_sq(&self, m: usize) -> f64 {
        let [j1, j2] = self.index_set[m];
        basis_norm_sq(j1) * basis_norm_sq(j2)
    }

    pub fn norms(&self) -> Vec<f64> {
        (0..self.len()).map(|m| self.norm_sq(m)).collect()
    }

    /// Position lookup keyed by multi-index.
    pub fn positions(&self) -> HashMap<MultiIndex, usize> {
        self.index_set.iter().enumerate().map(|(p, &mi)| (mi, p)).collect()
    }

    /// Evaluates `Σ c_m Ψ_m(ζ₁, ζ₂)`; `zeta2` is ignored for one variable.
    pub fn evaluate(&self, coeffs: &[f64], zeta1: f64, zeta2: f64) -> f64 {
        assert_eq!(coeffs.len(), self.len(), "coefficient vector size mismatch");
        let n = self.degree + 1;
        let mut p1 = vec![0.0; n];
        let mut p2 = vec![0.0; n];
        legendre_all(zeta1, &mut p1);
        legendre_all(zeta2, &mut p2);
        self.index_set
            .iter()
            .zip(coeffs)
            .map(|(&[j1, j2], &c)| c * p1[j1] * p2[j2])
            .sum()
    }
}

/// Builds the ordered multi-index list for `spec`.
///
/// One variable: `(0), (1), …, (P)`. Two variables with total degree: graded,
/// and inside each grade `j₁` descends so `(g, 0)` leads. Tensor product:
/// row-major with `j₂` outer and `j₁` inner, so the first `P+1` entries are
/// the `(j₁, 0)` block.
pub fn build_index_set(spec: &BasisSpec) -> Vec<MultiIndex> {
    let p = spec.degree;
    if spec.dims == 1 {
        return (0..=p).map(|j| [j, 0]).collect();
    }
    match spec.truncation {
        Truncation::TotalDegree => (0..=p)
            .flat_map(|g| (0..=g).map(move |j2| [g - j2, j2]))
            .collect(),
        Truncation::TensorProduct => (0..=p)
            .flat_map(|j2| (0..=p).map(move |j1| [j1, j2]))
            .collect(),
    }
}
