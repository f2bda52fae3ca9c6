//! Monte Carlo reference built on the per-realisation oracle.
//!
//! Germ pairs are drawn from a ChaCha8 stream positioned by sample index, so
//! sample `i` is the same no matter how the work is split across threads, and
//! reductions always run in index order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::energy::ResidualEnergySpec;
use super::oracle::{closed_form_trajectory, rk45_trajectory};
use crate::dynamics::{SystemParams, UncertaintySchedule};
use crate::error::{Error, Result};
use crate::shaper::ShapedInput;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Sampler {
    #[default]
    ClosedForm,
    Rk45 { tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub sample_count: usize,
    pub seed: u64,
    #[serde(default)]
    pub sampler: Sampler,
    /// Spread samples over the rayon pool. Results do not depend on it.
    #[serde(default = "default_parallel")]
    pub parallel: bool,
}

fn default_parallel() -> bool {
    true
}

impl McConfig {
    pub fn new(sample_count: usize, seed: u64) -> Self {
        Self {
            sample_count,
            seed,
            sampler: Sampler::ClosedForm,
            parallel: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_count == 0 {
            return Err(Error::config("sample_count must be at least 1"));
        }
        if let Sampler::Rk45 { tol } = self.sampler {
            if !(tol > 0.0) {
                return Err(Error::config(format!("sampler tolerance {tol} must be positive")));
            }
        }
        Ok(())
    }
}

/// Germ pair `(ζ₁, ζ₂) ∈ [−1, 1)²` of sample `index`.
pub fn sample_germs(seed: u64, index: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Two u64 draws per sample, i.e. four 32-bit words.
    rng.set_word_pos(4 * index as u128);
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    (2.0 * u1 - 1.0, 2.0 * u2 - 1.0)
}

/// Sample mean and unbiased variance with their standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub variance: f64,
    pub stderr_mean: f64,
    pub stderr_variance: f64,
    pub sample_count: usize,
    pub seed: u64,
}

impl McEstimate {
    pub fn from_samples(values: &[f64], seed: u64) -> Self {
        let n = values.len();
        let nf = n as f64;
        let mean = values.iter().sum::<f64>() / nf;
        if n < 2 {
            return Self {
                mean,
                variance: 0.0,
                stderr_mean: 0.0,
                stderr_variance: 0.0,
                sample_count: n,
                seed,
            };
        }
        let (mut m2, mut m4) = (0.0, 0.0);
        for v in values {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m4 += d2 * d2;
        }
        let variance = m2 / (nf - 1.0);
        let m4 = m4 / nf;
        let stderr_mean = (variance / nf).sqrt();
        let var_of_var = if n > 3 {
            (m4 - variance * variance * (nf - 3.0) / (nf - 1.0)) / nf
        } else {
            0.0
        };
        Self {
            mean,
            variance,
            stderr_mean,
            stderr_variance: var_of_var.max(0.0).sqrt(),
            sample_count: n,
            seed,
        }
    }
}

fn map_samples<T, F>(cfg: &McConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    cfg.validate()?;
    let n = cfg.sample_count as u64;
    if cfg.parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

fn realise(
    cfg: &McConfig,
    omegas: (f64, f64),
    schedule: &UncertaintySchedule,
    input: &ShapedInput,
    params: &SystemParams,
    t: f64,
) -> Result<(f64, f64)> {
    match cfg.sampler {
        Sampler::ClosedForm => Ok(closed_form_trajectory(omegas, schedule, input, params, t)),
        Sampler::Rk45 { tol } => rk45_trajectory(omegas, schedule, input, params, t, tol),
    }
}

/// Per-sample residual energy at `t2`, in sample order.
pub fn mc_residual_samples(
    cfg: &McConfig,
    params: &SystemParams,
    schedule: &UncertaintySchedule,
    input: &ShapedInput,
    spec: &ResidualEnergySpec,
) -> Result<Vec<f64>> {
    schedule.validate()?;
    spec.validate()?;
    map_samples(cfg, |i| {
        let (z1, z2) = sample_germs(cfg.seed, i);
        let w = (schedule.omega_n(z1), schedule.omega_m(z2));
        let (x, v) = realise(cfg, w, schedule, input, params, schedule.t2)?;
        Ok(spec.energy(x, v, w.1))
    })
}

/// `E[V_res]` and `Var(V_res)` at `t2` by sampling.
pub fn mc_residual_moments(
    cfg: &McConfig,
    params: &SystemParams,
    schedule: &UncertaintySchedule,
    input: &ShapedInput,
    spec: &ResidualEnergySpec,
) -> Result<McEstimate> {
    let v = mc_residual_samples(cfg, params, schedule, input, spec)?;
    Ok(McEstimate::from_samples(&v, cfg.seed))
}

/// Sampled mean and variance of `x` and `ẋ` on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McStateMoments {
    pub times: Vec<f64>,
    pub mean_x: Vec<f64>,
    pub var_x: Vec<f64>,
    pub mean_v: Vec<f64>,
    pub var_v: Vec<f64>,
}

/// Sampled state moments at each of `times`, using the closed-form oracle.
pub fn mc_state_moments(
    cfg: &McConfig,
    params: &SystemParams,
    schedule: &UncertaintySchedule,
    input: &ShapedInput,
    times: &[f64],
) -> Result<McStateMoments> {
    schedule.validate()?;
    let omegas: Vec<(f64, f64)> = map_samples(cfg, |i| {
        let (z1, z2) = sample_germs(cfg.seed, i);
        Ok((schedule.omega_n(z1), schedule.omega_m(z2)))
    })?;
    let at_time = |&t: &f64| {
        let (xs, vs): (Vec<f64>, Vec<f64>) = omegas
            .iter()
            .map(|&w| closed_form_trajectory(w, schedule, input, params, t))
            .unzip();
        (
            McEstimate::from_samples(&xs, cfg.seed),
            McEstimate::from_samples(&vs, cfg.seed),
        )
    };
    let rows: Vec<(McEstimate, McEstimate)> = if cfg.parallel {
        times.par_iter().map(at_time).collect()
    } else {
        times.iter().map(at_time).collect()
    };
    Ok(McStateMoments {
        times: times.to_vec(),
        mean_x: rows.iter().map(|r| r.0.mean).collect(),
        var_x: rows.iter().map(|r| r.0.variance).collect(),
        mean_v: rows.iter().map(|r| r.1.mean).collect(),
        var_v: rows.iter().map(|r| r.1.variance).collect(),
    })
}
