//! Moments of PCE surrogates.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::energy::ResidualEnergySpec;
use crate::basis::{gauss_legendre, legendre_all, BasisSpec, QuadratureRule};
use crate::dynamics::{PceTrajectory, Propagation, UncertaintySchedule};
use crate::error::{Error, Result};

/// Mean and variance trajectories of position and velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MomentReport {
    pub times: Vec<f64>,
    pub mean_x: Vec<f64>,
    pub var_x: Vec<f64>,
    pub mean_v: Vec<f64>,
    pub var_v: Vec<f64>,
    pub e_vres: Option<f64>,
    pub var_vres: Option<f64>,
}

impl MomentReport {
    /// Appends `other`, dropping its first row when it repeats the last time.
    pub fn extend(&mut self, other: &MomentReport) {
        let skip = usize::from(
            matches!((self.times.last(), other.times.first()), (Some(a), Some(b)) if a == b),
        );
        self.times.extend_from_slice(&other.times[skip..]);
        self.mean_x.extend_from_slice(&other.mean_x[skip..]);
        self.var_x.extend_from_slice(&other.var_x[skip..]);
        self.mean_v.extend_from_slice(&other.mean_v[skip..]);
        self.var_v.extend_from_slice(&other.var_v[skip..]);
        if other.e_vres.is_some() {
            self.e_vres = other.e_vres;
            self.var_vres = other.var_vres;
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,mean_x,var_x,mean_v,var_v")?;
        for k in 0..self.times.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[k], self.mean_x[k], self.var_x[k], self.mean_v[k], self.var_v[k]
            )?;
        }
        Ok(())
    }
}

fn variance_of(coeffs: &[f64], norms: &[f64]) -> f64 {
    coeffs[1..]
        .iter()
        .zip(&norms[1..])
        .map(|(c, g)| c * c * g)
        .sum::<f64>()
        .max(0.0)
}

/// `E = c₀`, `Var = Σ_{i>0} cᵢ² ⟨Ψᵢ²⟩` for both expansions at every timestamp.
pub fn pce_moments(traj: &PceTrajectory) -> MomentReport {
    let norms = traj.basis.norms();
    let mut r = MomentReport {
        times: traj.times.clone(),
        ..Default::default()
    };
    for (a, b) in traj.coeffs_a.iter().zip(&traj.coeffs_b) {
        r.mean_x.push(a[0]);
        r.var_x.push(variance_of(a, &norms));
        r.mean_v.push(b[0]);
        r.var_v.push(variance_of(b, &norms));
    }
    r
}

/// Surrogate values on a tensor quadrature grid, row-major in `(q₁, q₂)`.
fn surrogate_on_grid(coeffs: &[f64], basis: &BasisSpec, rule: &QuadratureRule) -> Vec<f64> {
    let p = basis.degree + 1;
    let nq = rule.len();
    let mut leg = vec![0.0; nq * p];
    for (q, &z) in rule.nodes.iter().enumerate() {
        legendre_all(z, &mut leg[q * p..(q + 1) * p]);
    }
    if basis.dims == 1 {
        return (0..nq)
            .map(|q| coeffs.iter().enumerate().map(|(j, c)| c * leg[q * p + j]).sum())
            .collect();
    }
    // A[j1][j2], then X = L · A · Lᵀ.
    let mut a = vec![0.0; p * p];
    for (&[j1, j2], &c) in basis.index_set.iter().zip(coeffs) {
        a[j1 * p + j2] = c;
    }
    let mut la = vec![0.0; nq * p];
    for q in 0..nq {
        for j1 in 0..p {
            let l = leg[q * p + j1];
            if l == 0.0 {
                continue;
            }
            for j2 in 0..p {
                la[q * p + j2] += l * a[j1 * p + j2];
            }
        }
    }
    let mut x = vec![0.0; nq * nq];
    for q1 in 0..nq {
        for q2 in 0..nq {
            x[q1 * nq + q2] = (0..p).map(|j2| la[q1 * p + j2] * leg[q2 * p + j2]).sum();
        }
    }
    x
}

/// Smallest per-dimension node count that integrates `V²` exactly.
pub fn required_quad_order(basis: &BasisSpec, spec: &ResidualEnergySpec) -> usize {
    // V has degree 2P (+2 in the frequency germ for the nominal form); V² twice that.
    2 * basis.degree + 1 + spec.frequency_degree()
}

/// `E[V]` and `Var(V)` of the surrogate energy using the minimal exact grid.
pub fn pce_residual_moments(
    a: &[f64],
    b: &[f64],
    basis: &BasisSpec,
    spec: &ResidualEnergySpec,
    schedule: &UncertaintySchedule,
) -> Result<(f64, f64)> {
    pce_residual_moments_with_order(a, b, basis, spec, schedule, required_quad_order(basis, spec))
}

/// As [`pce_residual_moments`] on a grid of `order` nodes per dimension.
///
/// With one variable the active frequency is `ω_n(ζ₁)`; with two it is
/// `ω_m(ζ₂)`.
pub fn pce_residual_moments_with_order(
    a: &[f64],
    b: &[f64],
    basis: &BasisSpec,
    spec: &ResidualEnergySpec,
    schedule: &UncertaintySchedule,
    order: usize,
) -> Result<(f64, f64)> {
    if a.len() != basis.len() || b.len() != basis.len() {
        return Err(Error::config("coefficient vectors do not match the basis"));
    }
    spec.validate()?;
    let needed = required_quad_order(basis, spec);
    if order < needed {
        return Err(Error::config(format!(
            "quadrature order {order} below the {needed} nodes needed for exact moments"
        )));
    }
    let rule = gauss_legendre(order);
    let xs = surrogate_on_grid(a, basis, &rule);
    let vs = surrogate_on_grid(b, basis, &rule);
    let nq = rule.len();

    let (weights, omegas): (Vec<f64>, Vec<f64>) = if basis.dims == 1 {
        (
            rule.weights.clone(),
            rule.nodes.iter().map(|&z| schedule.omega_n(z)).collect(),
        )
    } else {
        let mut w = Vec::with_capacity(nq * nq);
        let mut om = Vec::with_capacity(nq * nq);
        for &w1 in &rule.weights {
            for (&z2, &w2) in rule.nodes.iter().zip(&rule.weights) {
                w.push(w1 * w2);
                om.push(schedule.omega_m(z2));
            }
        }
        (w, om)
    };
    let energy: Vec<f64> = xs
        .iter()
        .zip(&vs)
        .zip(&omegas)
        .map(|((&x, &v), &om)| spec.energy(x, v, om))
        .collect();
    let mean: f64 = energy.iter().zip(&weights).map(|(e, w)| e * w).sum();
    let var: f64 = energy
        .iter()
        .zip(&weights)
        .map(|(e, w)| w * (e - mean) * (e - mean))
        .sum();
    Ok((mean, var))
}

/// Mean/variance trajectories over both intervals plus the energy moments at `t2`.
pub fn full_report(
    prop: &Propagation,
    spec: &ResidualEnergySpec,
    schedule: &UncertaintySchedule,
) -> Result<MomentReport> {
    let mut r = pce_moments(&prop.interval1);
    r.extend(&pce_moments(&prop.interval2));
    let (a, b) = prop.interval2.final_state();
    let (e, v) = pce_residual_moments(a, b, &prop.interval2.basis, spec, schedule)?;
    r.e_vres = Some(e);
    r.var_vres = Some(v);
    Ok(r)
}
