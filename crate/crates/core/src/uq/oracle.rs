//! Exact per-realisation solution of the two-interval oscillator.

use rayon::prelude::*;

use super::energy::ResidualEnergySpec;
use crate::dynamics::{Dopri5, OdeOptions, SystemParams, UncertaintySchedule};
use crate::error::Result;
use crate::shaper::ShapedInput;

/// Segment boundaries in `[0, t]`: shaper switches and `t1`.
fn cuts(schedule: &UncertaintySchedule, input: &ShapedInput, t: f64) -> Vec<f64> {
    let mut c: Vec<f64> = std::iter::once(0.0)
        .chain(input.breakpoints())
        .chain(std::iter::once(schedule.t1))
        .filter(|&s| s < t)
        .collect();
    c.sort_by(f64::total_cmp);
    c.dedup();
    c.push(t);
    c
}

/// `(x, ẋ)` at time `t` for the frequency pair `(ω_n, ω_m)`.
///
/// On every segment with constant level `ū` and frequency `ω`,
/// `x = ū + (x₀ − ū) cos ωΔt + (v₀/ω) sin ωΔt`.
pub fn closed_form_trajectory(
    omegas: (f64, f64),
    schedule: &UncertaintySchedule,
    input: &ShapedInput,
    params: &SystemParams,
    t: f64,
) -> (f64, f64) {
    let mut x = params.initial_position;
    let mut v = params.initial_velocity;
    if t <= 0.0 {
        return (x, v);
    }
    for seg in cuts(schedule, input, t).windows(2) {
        let (ta, tb) = (seg[0], seg[1]);
        let w = if ta < schedule.t1 { omegas.0 } else { omegas.1 };
        let level = input.level(0.5 * (ta + tb));
        (x, v) = advance(x, v, w, level, tb - ta);
    }
    (x, v)
}

/// Residual energy at `t2` of the single realisation `(ω_n, ω_m)`.
pub fn residual_energy(
    omegas: (f64, f64),
    schedule: &UncertaintySchedule,
    input: &ShapedInput,
    params: &SystemParams,
    spec: &ResidualEnergySpec,
) -> f64 {
    let (x, v) = closed_form_trajectory(omegas, schedule, input, params, schedule.t2);
    spec.energy(x, v, omegas.1)
}

/// [`residual_energy`] for every pair of `omega_n × omega_m`, `omega_m`
/// varying fastest. Grid points are evaluated in parallel.
pub fn residual_energy_grid(
    omega_n: &[f64],
    omega_m: &[f64],
    schedule: &UncertaintySchedule,
    input: &ShapedInput,
    params: &SystemParams,
    spec: &ResidualEnergySpec,
) -> Vec<f64> {
    (0..omega_n.len() * omega_m.len())
        .into_par_iter()
        .map(|k| {
            let w = (omega_n[k / omega_m.len()], omega_m[k % omega_m.len()]);
            residual_energy(w, schedule, input, params, spec)
        })
        .collect()
}

/// Exact step of `ẍ = ω² (ū − x)` over `dt`.
#[inline]
pub fn advance(x: f64, v: f64, w: f64, level: f64, dt: f64) -> (f64, f64) {
    let (s, c) = (w * dt).sin_cos();
    let dx = x - level;
    (level + dx * c + v / w * s, -dx * w * s + v * c)
}

/// The same realisation integrated numerically with Dormand–Prince.
pub fn rk45_trajectory(
    omegas: (f64, f64),
    schedule: &UncertaintySchedule,
    input: &ShapedInput,
    params: &SystemParams,
    t: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let mut y = [params.initial_position, params.initial_velocity];
    if t <= 0.0 {
        return Ok((y[0], y[1]));
    }
    let mut solver = Dopri5::new(2);
    let opts = OdeOptions::with_tol(tol);
    for seg in cuts(schedule, input, t).windows(2) {
        let (ta, tb) = (seg[0], seg[1]);
        let w2 = if ta < schedule.t1 { omegas.0 } else { omegas.1 }.powi(2);
        let level = input.level(0.5 * (ta + tb));
        solver.integrate(
            |_t, y: &[f64], dy: &mut [f64]| {
                dy[0] = y[1];
                dy[1] = w2 * (level - y[0]);
            },
            ta,
            tb,
            &mut y,
            &opts,
            &[],
            |_, _| {},
        )?;
    }
    Ok((y[0], y[1]))
}
