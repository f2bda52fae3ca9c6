//! Intrusive PCE propagation of the spring–mass system across two
//! uncertainty intervals.
//!
//! On `[0, t1]` the frequency is `ω_n = μ + h₁ζ₁` and the state is expanded in
//! `Ψ(ζ₁)`. On `[t1, t2]` it is `ω_m = μ + h₂ζ₂` and the state is expanded in
//! `Ψ(ζ₁, ζ₂)`; the coefficients at `t1` are carried over by
//! [`restart_at_switch`].

pub mod dopri;
pub mod galerkin;

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, Truncation};
use crate::error::{Error, Result};
use crate::shaper::ShapedInput;

pub use dopri::{Dopri5, OdeOptions, StepStats};
pub use galerkin::{assemble_galerkin, CsrMatrix, GalerkinSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemParams {
    pub mass: f64,
    /// Desired final position `x_f`.
    pub target: f64,
    pub initial_position: f64,
    pub initial_velocity: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            target: 1.0,
            initial_position: 0.0,
            initial_velocity: 0.0,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::config(format!("mass {} must be positive", self.mass)));
        }
        if !(self.target.is_finite()
            && self.initial_position.is_finite()
            && self.initial_velocity.is_finite())
        {
            return Err(Error::config("system parameters must be finite"));
        }
        Ok(())
    }
}

/// Two uniform frequency distributions sharing the mean `mean_freq`,
/// switching at `t1` and observed at `t2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySchedule {
    pub mean_freq: f64,
    pub interval1_bounds: (f64, f64),
    pub interval2_bounds: (f64, f64),
    pub t1: f64,
    pub t2: f64,
}

impl UncertaintySchedule {
    /// Builds a schedule from the mean and the two half-widths.
    pub fn symmetric(mean_freq: f64, halfwidth1: f64, halfwidth2: f64, t1: f64, t2: f64) -> Self {
        Self {
            mean_freq,
            interval1_bounds: (mean_freq - halfwidth1, mean_freq + halfwidth1),
            interval2_bounds: (mean_freq - halfwidth2, mean_freq + halfwidth2),
            t1,
            t2,
        }
    }

    /// `ω_n ~ U(0.75π, 1.25π)`, `ω_m ~ U(0.5π, 1.5π)`, `t1 = 100`, `t2 = 200`.
    pub fn standard() -> Self {
        Self::symmetric(PI, 0.25 * PI, 0.5 * PI, 100.0, 200.0)
    }

    /// Same distributions on the shorter `t1 = 10`, `t2 = 20` horizon.
    pub fn short_horizon() -> Self {
        Self::symmetric(PI, 0.25 * PI, 0.5 * PI, 10.0, 20.0)
    }

    /// Zero-width bounds around `mean_freq`.
    pub fn deterministic(mean_freq: f64, t1: f64, t2: f64) -> Self {
        Self::symmetric(mean_freq, 0.0, 0.0, t1, t2)
    }

    pub fn halfwidth1(&self) -> f64 {
        0.5 * (self.interval1_bounds.1 - self.interval1_bounds.0)
    }

    pub fn halfwidth2(&self) -> f64 {
        0.5 * (self.interval2_bounds.1 - self.interval2_bounds.0)
    }

    /// `ω_n = μ + h₁ζ₁`.
    pub fn omega_n(&self, zeta1: f64) -> f64 {
        self.mean_freq + self.halfwidth1() * zeta1
    }

    /// `ω_m = μ + h₂ζ₂`.
    pub fn omega_m(&self, zeta2: f64) -> f64 {
        self.mean_freq + self.halfwidth2() * zeta2
    }

    /// Nominal oscillation period `2π/μ`.
    pub fn nominal_period(&self) -> f64 {
        2.0 * PI / self.mean_freq
    }

    pub fn validate(&self) -> Result<()> {
        let mu = self.mean_freq;
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::config(format!("mean frequency {mu} must be positive")));
        }
        for (name, (lb, ub)) in [("interval 1", self.interval1_bounds), ("interval 2", self.interval2_bounds)] {
            // Zero-width bounds are allowed: they describe a deterministic interval.
            if !(lb.is_finite() && ub.is_finite() && lb <= ub) {
                return Err(Error::config(format!("{name} bounds ({lb}, {ub}) are not ordered")));
            }
            if lb <= 0.0 {
                return Err(Error::config(format!("{name} admits non-positive frequency {lb}")));
            }
            let mid = 0.5 * (lb + ub);
            if (mid - mu).abs() > 1e-12 * mu.max(1.0) {
                return Err(Error::config(format!("{name} midpoint {mid} differs from mean {mu}")));
            }
        }
        if !(self.t1 > 0.0 && self.t2 > self.t1 && self.t2.is_finite()) {
            return Err(Error::config(format!(
                "need 0 < t1 < t2, got t1 = {}, t2 = {}",
                self.t1, self.t2
            )));
        }
        Ok(())
    }
}

/// Coefficient history of the position (`a`) and velocity (`b = ȧ`) expansions.
#[derive(Debug, Clone, PartialEq)]
pub struct PceTrajectory {
    pub times: Vec<f64>,
    pub coeffs_a: Vec<Vec<f64>>,
    pub coeffs_b: Vec<Vec<f64>>,
    pub interval_tag: u8,
    pub basis: BasisSpec,
    pub stats: StepStats,
}

impl PceTrajectory {
    /// Coefficients `(a, b)` at the last timestamp.
    pub fn final_state(&self) -> (&[f64], &[f64]) {
        (
            self.coeffs_a.last().expect("trajectory is non-empty"),
            self.coeffs_b.last().expect("trajectory is non-empty"),
        )
    }

    pub fn initial_state(&self) -> (&[f64], &[f64]) {
        (&self.coeffs_a[0], &self.coeffs_b[0])
    }

    /// Writes `t, a_0…a_K, b_0…b_K` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let k = self.basis.len();
        let mut header = vec!["t".to_string()];
        header.extend((0..k).map(|i| format!("a_{i}")));
        header.extend((0..k).map(|i| format!("b_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for ((t, a), b) in self.times.iter().zip(&self.coeffs_a).zip(&self.coeffs_b) {
            write!(w, "{t:.16e}")?;
            for v in a.iter().chain(b) {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// JSON header describing the basis and, optionally, the schedule.
    pub fn header_json(&self, schedule: Option<&UncertaintySchedule>) -> serde_json::Value {
        serde_json::json!({
            "interval": self.interval_tag,
            "dims": self.basis.dims,
            "degree": self.basis.degree,
            "truncation": self.basis.truncation,
            "index_set": self.basis.index_set,
            "len": self.basis.len(),
            "schedule": schedule,
            "accepted_steps": self.stats.accepted,
            "rejected_steps": self.stats.rejected,
        })
    }
}

/// Solves `ä = −M a + g u(t)` from `t_start` to `t_end`.
///
/// The interval is split at every input switch strictly inside it and the
/// step controller restarts on each piece. With `output_step = Some(dt)` the
/// trajectory is sampled on the global grid `k·dt` plus both endpoints;
/// otherwise only the endpoints are kept.
#[allow(clippy::too_many_arguments)]
pub fn integrate_interval(
    system: &GalerkinSystem,
    a0: &[f64],
    b0: &[f64],
    input: &ShapedInput,
    t_start: f64,
    t_end: f64,
    tol: f64,
    output_step: Option<f64>,
) -> Result<PceTrajectory> {
    let n = system.len();
    if a0.len() != n || b0.len() != n {
        return Err(Error::config(format!(
            "initial coefficients sized {}/{} for a basis of {n}",
            a0.len(),
            b0.len()
        )));
    }
    if !(t_end > t_start) {
        return Err(Error::config(format!("empty interval [{t_start}, {t_end}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::config(format!("tolerance {tol} must be positive")));
    }

    let mut cuts = vec![t_start];
    cuts.extend(input.breakpoints().into_iter().filter(|&s| s > t_start && s < t_end));
    cuts.push(t_end);

    let mut samples = vec![t_start];
    if let Some(dt) = output_step.filter(|dt| *dt > 0.0) {
        let k0 = (t_start / dt).floor() as i64 + 1;
        let mut k = k0;
        loop {
            let t = k as f64 * dt;
            if t >= t_end {
                break;
            }
            if t > t_start {
                samples.push(t);
            }
            k += 1;
        }
    }
    samples.push(t_end);

    let mut y = Vec::with_capacity(2 * n);
    y.extend_from_slice(a0);
    y.extend_from_slice(b0);

    let mut times = Vec::with_capacity(samples.len());
    let mut coeffs_a = Vec::with_capacity(samples.len());
    let mut coeffs_b = Vec::with_capacity(samples.len());
    let mut solver = Dopri5::new(2 * n);
    let opts = OdeOptions::with_tol(tol);
    let mut stats = StepStats::default();

    let stiffness = &system.stiffness;
    let forcing = &system.forcing;
    let mut emitted = 0usize;
    for seg in cuts.windows(2) {
        let (ta, tb) = (seg[0], seg[1]);
        let level = input.level(0.5 * (ta + tb));
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            let (a, b) = y.split_at(n);
            let (da, db) = dy.split_at_mut(n);
            da.copy_from_slice(b);
            stiffness.mul_vec(a, db);
            for (d, g) in db.iter_mut().zip(forcing) {
                *d = g * level - *d;
            }
        };
        // Each sample is emitted once even when it sits on a cut.
        let seg_samples = &samples[emitted..];
        let mut sink = |t: f64, s: &[f64]| {
            times.push(t);
            coeffs_a.push(s[..n].to_vec());
            coeffs_b.push(s[n..].to_vec());
        };
        let before = seg_samples.partition_point(|&s| s <= tb);
        stats += solver.integrate(rhs, ta, tb, &mut y, &opts, &seg_samples[..before], &mut sink)?;
        emitted += before;
    }

    Ok(PceTrajectory {
        times,
        coeffs_a,
        coeffs_b,
        interval_tag: 0,
        basis: system.basis.clone(),
        stats,
    })
}

/// Embeds the one-variable coefficients at `t1` into a two-variable basis:
/// `a_{(j₁, 0)} = a_{j₁}`, every other entry zero. The embedding is exact.
pub fn restart_at_switch(
    a1: &[f64],
    b1: &[f64],
    basis1: &BasisSpec,
    basis2: &BasisSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if basis1.dims != 1 || basis2.dims != 2 {
        return Err(Error::config("restart maps a one-variable basis into a two-variable basis"));
    }
    if a1.len() != basis1.len() || b1.len() != basis1.len() {
        return Err(Error::config("coefficient vectors do not match the interval-1 basis"));
    }
    let positions = basis2.positions();
    let mut a2 = vec![0.0; basis2.len()];
    let mut b2 = vec![0.0; basis2.len()];
    for (j1, (&a, &b)) in a1.iter().zip(b1).enumerate() {
        let Some(&p) = positions.get(&[j1, 0]) else {
            return Err(Error::config(format!(
                "interval-2 basis lacks index ({j1}, 0) needed for the restart"
            )));
        };
        a2[p] = a;
        b2[p] = b;
    }
    Ok((a2, b2))
}

/// Settings shared by every propagation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationSettings {
    pub degree: usize,
    pub truncation: Truncation,
    pub tol: f64,
    /// Output samples per nominal period; `0` keeps only interval endpoints.
    pub samples_per_period: usize,
}

impl Default for PropagationSettings {
    fn default() -> Self {
        Self {
            degree: 30,
            truncation: Truncation::TotalDegree,
            tol: 1e-12,
            samples_per_period: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub interval1: PceTrajectory,
    pub interval2: PceTrajectory,
}

/// Full two-interval intrusive PCE solve.
pub fn propagate(
    params: &SystemParams,
    schedule: &UncertaintySchedule,
    settings: &PropagationSettings,
    input: &ShapedInput,
) -> Result<Propagation> {
    params.validate()?;
    schedule.validate()?;
    input.design.validate()?;
    let output_step =
        (settings.samples_per_period > 0).then(|| schedule.nominal_period() / settings.samples_per_period as f64);

    let basis1 = BasisSpec::one_dim(settings.degree)?;
    let sys1 = assemble_galerkin(&basis1, schedule.mean_freq, schedule.halfwidth1(), 0)?;
    let mut a0 = vec![0.0; basis1.len()];
    let mut b0 = vec![0.0; basis1.len()];
    a0[0] = params.initial_position;
    b0[0] = params.initial_velocity;
    let mut traj1 = integrate_interval(&sys1, &a0, &b0, input, 0.0, schedule.t1, settings.tol, output_step)?;
    traj1.interval_tag = 1;

    let basis2 = BasisSpec::two_dim(settings.degree, settings.truncation)?;
    let (a1, b1) = traj1.final_state();
    let (a2, b2) = restart_at_switch(a1, b1, &basis1, &basis2)?;
    let sys2 = assemble_galerkin(&basis2, schedule.mean_freq, schedule.halfwidth2(), 1)?;
    let mut traj2 = integrate_interval(&sys2, &a2, &b2, input, schedule.t1, schedule.t2, settings.tol, output_step)?;
    traj2.interval_tag = 2;

    Ok(Propagation {
        interval1: traj1,
        interval2: traj2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shaper::design_robust;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn deterministic_step_response() {
        let b = BasisSpec::one_dim(0).unwrap();
        let sys = assemble_galerkin(&b, PI, 0.0, 0).unwrap();
        let tr = integrate_interval(&sys, &[0.0], &[0.0], &ShapedInput::step(1.0), 0.0, 1.0, 1e-12, None).unwrap();
        let (a, v) = tr.final_state();
        assert_abs_diff_eq!(a[0], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-9);
        assert_eq!(tr.times, vec![0.0, 1.0]);
    }

    #[test]
    fn free_oscillation_conserves_energy() {
        let b = BasisSpec::one_dim(3).unwrap();
        let sys = assemble_galerkin(&b, PI, 0.0, 0).unwrap();
        let mut a0 = vec![0.0; 4];
        a0[0] = 1.0;
        let tr = integrate_interval(&sys, &a0, &[0.0; 4], &ShapedInput::step(0.0), 0.0, 10.0, 1e-12, Some(0.05)).unwrap();
        for ((t, a), b) in tr.times.iter().zip(&tr.coeffs_a).zip(&tr.coeffs_b) {
            assert_abs_diff_eq!(a[0], (PI * t).cos(), epsilon = 1e-8);
            let e = 0.5 * b[0] * b[0] + 0.5 * PI * PI * a[0] * a[0];
            assert_abs_diff_eq!(e, 0.5 * PI * PI, epsilon = 1e-9 * PI * PI);
            assert!(a[1..].iter().all(|c| c.abs() < 1e-10));
        }
    }

    #[test]
    fn velocity_is_derivative_of_position() {
        let b = BasisSpec::one_dim(6).unwrap();
        let sys = assemble_galerkin(&b, PI, 0.25 * PI, 0).unwrap();
        let z = vec![0.0; 7];
        let tr = integrate_interval(&sys, &z, &z, &ShapedInput::step(1.0), 0.0, 4.0, 1e-12, Some(1e-3)).unwrap();
        // Central differences on the dense grid; Hermite error dominates.
        for w in 1..tr.times.len() - 1 {
            let dt = tr.times[w + 1] - tr.times[w - 1];
            for i in 0..7 {
                let fd = (tr.coeffs_a[w + 1][i] - tr.coeffs_a[w - 1][i]) / dt;
                assert!((fd - tr.coeffs_b[w][i]).abs() < 2e-5, "t={} i={i}", tr.times[w]);
            }
        }
    }

    #[test]
    fn output_grid_is_uniform_and_monotone() {
        let b = BasisSpec::one_dim(2).unwrap();
        let sys = assemble_galerkin(&b, PI, 0.1, 0).unwrap();
        let z = vec![0.0; 3];
        let input = ShapedInput::new(design_robust(0.0, PI).unwrap(), 1.0);
        let tr = integrate_interval(&sys, &z, &z, &input, 0.0, 3.0, 1e-10, Some(0.1)).unwrap();
        assert_eq!(tr.times.len(), 31);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*tr.times.last().unwrap(), 3.0);
    }

    #[test]
    fn restart_examples() {
        let b1 = BasisSpec::one_dim(1).unwrap();
        let b2 = BasisSpec::two_dim(1, Truncation::TotalDegree).unwrap();
        let (a2, b2v) = restart_at_switch(&[1.0, 0.2], &[0.0, 0.0], &b1, &b2).unwrap();
        let pos = b2.positions();
        assert_eq!(a2[pos[&[0, 0]]], 1.0);
        assert_eq!(a2[pos[&[1, 0]]], 0.2);
        assert_eq!(a2[pos[&[0, 1]]], 0.0);
        assert!(b2v.iter().all(|&v| v == 0.0));
        let (z, _) = restart_at_switch(&[0.0, 0.0], &[0.0, 0.0], &b1, &b2).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn restart_rejects_mismatch() {
        let b1 = BasisSpec::one_dim(4).unwrap();
        let b2 = BasisSpec::two_dim(3, Truncation::TotalDegree).unwrap();
        assert!(matches!(
            restart_at_switch(&[0.0; 5], &[0.0; 5], &b1, &b2),
            Err(Error::Config(_))
        ));
        assert!(restart_at_switch(&[0.0; 5], &[0.0; 5], &b1, &b1).is_err());
    }

    #[test]
    fn restart_preserves_surrogate_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trunc in [Truncation::TotalDegree, Truncation::TensorProduct] {
            let p = 8;
            let b1 = BasisSpec::one_dim(p).unwrap();
            let b2 = BasisSpec::two_dim(p, trunc).unwrap();
            let a: Vec<f64> = (0..=p).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (a2, _) = restart_at_switch(&a, &a, &b1, &b2).unwrap();
            for _ in 0..100 {
                let (z1, z2) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let lhs = b1.evaluate(&a, z1, 0.0);
                let rhs = b2.evaluate(&a2, z1, z2);
                assert!((lhs - rhs).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn schedule_validation() {
        assert!(UncertaintySchedule::standard().validate().is_ok());
        assert!(UncertaintySchedule::deterministic(PI, 1.0, 2.0).validate().is_ok());
        let mut s = UncertaintySchedule::standard();
        s.interval2_bounds = (0.5 * PI, 1.6 * PI);
        assert!(s.validate().is_err());
        let mut s = UncertaintySchedule::standard();
        s.t2 = s.t1;
        assert!(s.validate().is_err());
        let mut s = UncertaintySchedule::standard();
        s.interval1_bounds = (1.25 * PI, 0.75 * PI);
        assert!(s.validate().is_err());
    }

    #[test]
    fn rejects_bad_integration_arguments() {
        let b = BasisSpec::one_dim(1).unwrap();
        let sys = assemble_galerkin(&b, PI, 0.0, 0).unwrap();
        let inp = ShapedInput::step(1.0);
        assert!(integrate_interval(&sys, &[0.0], &[0.0, 0.0], &inp, 0.0, 1.0, 1e-9, None).is_err());
        assert!(integrate_interval(&sys, &[0.0; 2], &[0.0; 2], &inp, 1.0, 1.0, 1e-9, None).is_err());
        assert!(integrate_interval(&sys, &[0.0; 2], &[0.0; 2], &inp, 0.0, 1.0, 0.0, None).is_err());
    }

    #[test]
    fn csv_layout() {
        let b = BasisSpec::one_dim(1).unwrap();
        let sys = assemble_galerkin(&b, PI, 0.0, 0).unwrap();
        let tr = integrate_interval(&sys, &[0.0; 2], &[0.0; 2], &ShapedInput::step(1.0), 0.0, 1.0, 1e-10, Some(0.5)).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,a_0,a_1,b_0,b_1");
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 3);
        let last: Vec<f64> = rows[2].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(last[0], 1.0);
        assert_eq!(last[1], tr.final_state().0[0]);
    }
}
