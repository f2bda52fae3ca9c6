//! Galerkin projection of `ä = −ω²(ζ) a + ω²(ζ) u` onto a Legendre basis.

use serde::{Deserialize, Serialize};

use crate::basis::{basis_norm_sq, BasisSpec, TripleProducts};
use crate::error::{Error, Result};

/// Compressed-row sparse matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// `out = self · x`.
    #[inline]
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for r in 0..self.n {
            let mut s = 0.0;
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[p] * x[self.col_idx[p]];
            }
            out[r] = s;
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        (self.row_ptr[r]..self.row_ptr[r + 1])
            .find(|&p| self.col_idx[p] == c)
            .map_or(0.0, |p| self.values[p])
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (r, row) in d.iter_mut().enumerate() {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                row[self.col_idx[p]] = self.values[p];
            }
        }
        d
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }
}

/// Projected coefficient dynamics `ä = −M a + g u(t)`.
///
/// `stiffness.get(j, i) = ⟨ω² Ψᵢ Ψⱼ⟩ / ⟨Ψⱼ²⟩`, `forcing[j] = ⟨ω² Ψⱼ⟩ / ⟨Ψⱼ²⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinSystem {
    pub stiffness: CsrMatrix,
    pub forcing: Vec<f64>,
    pub basis: BasisSpec,
}

impl GalerkinSystem {
    pub fn len(&self) -> usize {
        self.forcing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forcing.is_empty()
    }
}

/// Projects the uncertain-frequency oscillator onto `basis`.
///
/// The frequency is `ω = μ + h ζ_active` with `active_dim ∈ {0, 1}` (0 for
/// `ζ₁`). `ω²` is written exactly in Legendre form
/// `(μ² + h²/3) Ψ₀ + 2μh Ψ₁ + (2h²/3) Ψ₂` and contracted with the triple
/// products, so each row couples at most five entries of the active index
/// while acting as the identity on the other.
pub fn assemble_galerkin(
    basis: &BasisSpec,
    mean_freq: f64,
    halfwidth: f64,
    active_dim: usize,
) -> Result<GalerkinSystem> {
    if !(halfwidth >= 0.0 && halfwidth.is_finite()) {
        return Err(Error::config(format!("halfwidth {halfwidth} must be non-negative")));
    }
    if active_dim >= basis.dims {
        return Err(Error::config(format!(
            "active dimension {active_dim} invalid for a {}-variable basis",
            basis.dims
        )));
    }
    let mu = mean_freq;
    let h = halfwidth;
    let field = [mu * mu + h * h / 3.0, 2.0 * mu * h, 2.0 * h * h / 3.0];
    let triples = TripleProducts::new(basis.degree, 2);
    let positions = basis.positions();
    let n = basis.len();

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(5 * n);
    let mut values = Vec::with_capacity(5 * n);
    let mut forcing = vec![0.0; n];
    row_ptr.push(0);

    for (row, &w) in basis.index_set.iter().enumerate() {
        let wa = w[active_dim];
        let norm = basis_norm_sq(wa);
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(5);
        for ia in wa.saturating_sub(2)..=(wa + 2).min(basis.degree) {
            let mut idx = w;
            idx[active_dim] = ia;
            let Some(&col) = positions.get(&idx) else {
                continue;
            };
            let v: f64 = field
                .iter()
                .enumerate()
                .map(|(k, c)| c * triples.get(k, ia, wa))
                .sum::<f64>()
                / norm;
            if v != 0.0 {
                entries.push((col, v));
            }
        }
        entries.sort_unstable_by_key(|e| e.0);
        for (c, v) in entries {
            col_idx.push(c);
            values.push(v);
        }
        row_ptr.push(col_idx.len());

        let others_zero = (0..basis.dims).all(|d| d == active_dim || w[d] == 0);
        if others_zero && wa <= 2 {
            forcing[row] = field[wa] * triples.get(wa, 0, wa) / norm;
        }
    }

    Ok(GalerkinSystem {
        stiffness: CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        },
        forcing,
        basis: basis.clone(),
    })
}
