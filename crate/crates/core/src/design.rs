//! Shaper optimisation against residual-energy statistics.
//!
//! Amplitudes live on the probability simplex and delays are ordered inside
//! `(0, t_f]` with the last one pinned at `t_f`. Both constraints are built
//! into the search coordinates: amplitudes are a softmax of `N` free logits
//! (the first is fixed at zero), and the `N` delay gaps are `t_f` times a
//! softmax of `N − 1` free logits. Nelder–Mead then runs unconstrained.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{propagate, PropagationSettings, SystemParams, UncertaintySchedule};
use crate::error::{Error, Result};
use crate::shaper::{ShapedInput, ShaperDesign, ShaperKind};
use crate::uq::{pce_residual_moments, ResidualEnergySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// `Ξ₁ = E[V_res(t2)]`.
    ExpectedResidual,
    /// `Ξ₂ = Var(V_res(t2))`.
    ResidualVariance,
}

/// Everything needed to score a design: the full propagation set-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub params: SystemParams,
    pub schedule: UncertaintySchedule,
    pub settings: PropagationSettings,
    pub energy: ResidualEnergySpec,
    /// Base command level `u`.
    pub command: f64,
}

impl EvaluationConfig {
    pub fn new(schedule: UncertaintySchedule, degree: usize) -> Self {
        Self {
            params: SystemParams::default(),
            schedule,
            settings: PropagationSettings {
                degree,
                samples_per_period: 0,
                ..Default::default()
            },
            energy: ResidualEnergySpec::default(),
            command: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.schedule.validate()?;
        self.energy.validate()?;
        if !self.command.is_finite() {
            return Err(Error::config("command level must be finite"));
        }
        if !(self.settings.tol > 0.0) {
            return Err(Error::config("tolerance must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub statistic: Statistic,
    pub evaluation: EvaluationConfig,
    /// Degree used while searching; the returned value is always re-scored at
    /// `evaluation.settings.degree`. `None` searches at full degree.
    #[serde(default)]
    pub search_degree: Option<usize>,
}

impl ObjectiveSpec {
    pub fn new(statistic: Statistic, evaluation: EvaluationConfig) -> Self {
        Self {
            statistic,
            evaluation,
            search_degree: None,
        }
    }

    fn at_degree(&self, degree: usize) -> Self {
        let mut o = self.clone();
        o.evaluation.settings.degree = degree;
        o.evaluation.settings.samples_per_period = 0;
        o
    }
}

/// `(E[V_res], Var(V_res))` at `t2` for `design`.
pub fn residual_statistics(design: &ShaperDesign, eval: &EvaluationConfig) -> Result<(f64, f64)> {
    let mut settings = eval.settings;
    settings.samples_per_period = 0;
    let input = ShapedInput::new(design.clone(), eval.command);
    let prop = propagate(&eval.params, &eval.schedule, &settings, &input)?;
    let (a, b) = prop.interval2.final_state();
    pce_residual_moments(a, b, &prop.interval2.basis, &eval.energy, &eval.schedule)
}

/// Propagates with the shaped input and returns the selected statistic.
pub fn evaluate_objective(design: &ShaperDesign, objective: &ObjectiveSpec) -> Result<f64> {
    design.validate()?;
    let (e, v) = residual_statistics(design, &objective.evaluation)?;
    Ok(match objective.statistic {
        Statistic::ExpectedResidual => e,
        Statistic::ResidualVariance => v,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    pub max_evals: usize,
    /// Stop once every vertex is within this distance of the best one.
    pub simplex_tol: f64,
    pub initial_step: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_evals: 500,
            simplex_tol: 1e-6,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub design: ShaperDesign,
    pub objective_value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub initial_design: ShaperDesign,
    pub initial_objective: f64,
    pub objective: ObjectiveSpec,
    pub options: OptimizerOptions,
}

impl OptimizationResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("optimisation result serialises")
    }
}

/// Maps unconstrained search coordinates to feasible designs and back.
#[derive(Debug, Clone, Copy)]
struct Coordinates {
    n_delays: usize,
    t_f: f64,
}

const LOGIT_FLOOR: f64 = 1e-12;
/// Gains below this are treated as round-off and the seed is kept.
pub const MIN_IMPROVEMENT: f64 = 1e-15;
/// Smallest delay gap as a fraction of `t_f`; keeps delays strictly ordered.
const GAP_FLOOR: f64 = 1e-9;

impl Coordinates {
    fn dim(&self) -> usize {
        2 * self.n_delays - 1
    }

    fn decode(&self, theta: &[f64], template: &ShaperDesign) -> ShaperDesign {
        let n = self.n_delays;
        let amplitudes = softmax_with_zero(&theta[..n]);
        let gaps: Vec<f64> = softmax_with_zero(&theta[n..])
            .into_iter()
            .map(|g| GAP_FLOOR + (1.0 - n as f64 * GAP_FLOOR) * g)
            .collect();
        let mut delays = Vec::with_capacity(n);
        let mut acc = 0.0;
        for g in &gaps[..n - 1] {
            acc += g * self.t_f;
            delays.push(acc);
        }
        delays.push(self.t_f);
        ShaperDesign {
            kind: ShaperKind::Gsa,
            amplitudes,
            delays,
            damping: template.damping,
            design_freq: template.design_freq,
        }
    }

    fn encode(&self, d: &ShaperDesign) -> Vec<f64> {
        let a0 = d.amplitudes[0].max(LOGIT_FLOOR);
        let mut theta: Vec<f64> = d.amplitudes[1..]
            .iter()
            .map(|a| (a.max(LOGIT_FLOOR) / a0).ln())
            .collect();
        let scale = 1.0 - self.n_delays as f64 * GAP_FLOOR;
        let unfloor = |gap: f64| ((gap / self.t_f - GAP_FLOOR) / scale).max(LOGIT_FLOOR);
        let gap0 = unfloor(d.delays[0]);
        theta.extend(
            d.delays
                .windows(2)
                .map(|w| (unfloor(w[1] - w[0]) / gap0).ln()),
        );
        theta
    }
}

/// Softmax of `[0, x₀, x₁, …]`, renormalised so the entries sum to one.
fn softmax_with_zero(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(0.0f64, f64::max);
    let mut e: Vec<f64> = std::iter::once(0.0).chain(x.iter().copied()).map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter_mut().for_each(|v| *v /= s);
    let s2: f64 = e.iter().sum();
    e.iter_mut().for_each(|v| *v /= s2);
    e
}

fn check_init(init: &ShaperDesign, n_delays: usize, t_f: f64) -> Result<()> {
    init.validate()?;
    if n_delays == 0 {
        return Err(Error::config("the optimised shaper needs at least one delay"));
    }
    if init.n_delays() != n_delays {
        return Err(Error::config(format!(
            "initial design has {} delays, expected {n_delays}",
            init.n_delays()
        )));
    }
    if !(t_f > 0.0) || (init.duration() - t_f).abs() > 1e-12 * t_f {
        return Err(Error::config(format!(
            "initial design must end at t_f = {t_f}, ends at {}",
            init.duration()
        )));
    }
    Ok(())
}

/// Result of [`nelder_mead`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Plain Nelder–Mead (reflection 1, expansion 2, contraction ½, shrink ½).
pub fn nelder_mead<F>(mut f: F, x0: &[f64], step: f64, tol: f64, max_evals: usize) -> Result<SimplexResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> Result<f64> {
        *evals += 1;
        let v = f(x)?;
        Ok(if v.is_nan() { f64::INFINITY } else { v })
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0, &mut evals)?));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x, &mut evals)?;
        simplex.push((x, v));
    }

    let mut iterations = 0;
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diameter < tol {
            converged = true;
            break;
        }
        if evals >= max_evals {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(1.0);
        let fr = eval(&xr, &mut evals)?;
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals)?;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let xc = along(0.5);
            let fc = eval(&xc, &mut evals)?;
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc, &mut evals)?;
            (xc, fc)
        };
        if fc < worst.1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = best.iter().zip(&v.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
            let fx = eval(&x, &mut evals)?;
            *v = (x, fx);
        }
    }
    let (x, value) = simplex.swap_remove(0);
    Ok(SimplexResult {
        x,
        value,
        iterations,
        evaluations: evals,
        converged,
    })
}

/// Searches for the GSA shaper minimising the selected statistic.
///
/// The returned design is never worse than `init` under the full-degree
/// objective: unless the search (possibly run at `search_degree`) improves on
/// it by more than `MIN_IMPROVEMENT`, `init` is returned re-labelled as a GSA design.
pub fn optimize_gsa(
    objective: &ObjectiveSpec,
    n_delays: usize,
    t_f: f64,
    init: &ShaperDesign,
    options: &OptimizerOptions,
) -> Result<OptimizationResult> {
    check_init(init, n_delays, t_f)?;
    objective.evaluation.validate()?;
    let coords = Coordinates { n_delays, t_f };
    let full_degree = objective.evaluation.settings.degree;
    let search = objective.at_degree(objective.search_degree.unwrap_or(full_degree));
    let full = objective.at_degree(full_degree);

    let initial_objective = evaluate_objective(init, &full)?;
    let x0 = coords.encode(init);
    let res = nelder_mead(
        |theta| evaluate_objective(&coords.decode(theta, init), &search),
        &x0,
        options.initial_step,
        options.simplex_tol,
        options.max_evals,
    )?;
    debug_assert_eq!(res.x.len(), coords.dim());

    let candidate = coords.decode(&res.x, init);
    let candidate_value = if search.evaluation.settings.degree == full_degree {
        res.value
    } else {
        evaluate_objective(&candidate, &full)?
    };
    let (design, objective_value) = if candidate_value < initial_objective - MIN_IMPROVEMENT {
        (candidate, candidate_value)
    } else {
        let mut d = init.clone();
        d.kind = ShaperKind::Gsa;
        (d, initial_objective)
    };
    Ok(OptimizationResult {
        design,
        objective_value,
        iterations: res.iterations,
        evaluations: res.evaluations,
        converged: res.converged,
        initial_design: init.clone(),
        initial_objective,
        objective: objective.clone(),
        options: *options,
    })
}

/// `count` feasible starting points scattered around `init`.
///
/// Each one shifts the search coordinates of `init` by independent uniform
/// offsets in `[−scale, scale]`, drawn from a stream keyed by `seed`.
pub fn perturbed_inits(init: &ShaperDesign, count: usize, scale: f64, seed: u64) -> Result<Vec<ShaperDesign>> {
    check_init(init, init.n_delays(), init.duration())?;
    let coords = Coordinates {
        n_delays: init.n_delays(),
        t_f: init.duration(),
    };
    let base = coords.encode(init);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let theta: Vec<f64> = base.iter().map(|b| b + rng.gen_range(-scale..=scale)).collect();
            coords.decode(&theta, init)
        })
        .collect())
}

/// Independent runs from several seeds, in parallel; results keep seed order.
pub fn optimize_gsa_multistart(
    objective: &ObjectiveSpec,
    n_delays: usize,
    t_f: f64,
    inits: &[ShaperDesign],
    options: &OptimizerOptions,
) -> Result<Vec<OptimizationResult>> {
    inits
        .par_iter()
        .map(|init| optimize_gsa(objective, n_delays, t_f, init, options))
        .collect()
}
