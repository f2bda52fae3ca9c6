//! The five experiment commands.

use std::path::PathBuf;
use std::time::Instant;

use pce_shaper::design::{
    optimize_gsa_multistart, perturbed_inits, residual_statistics, EvaluationConfig, ObjectiveSpec,
    OptimizationResult, Statistic,
};
use pce_shaper::dynamics::{propagate, PropagationSettings};
use pce_shaper::shaper::{ShapedInput, ShaperDesign};
use pce_shaper::uq::{
    full_report, mc_residual_moments, mc_residual_samples, mc_state_moments, residual_energy_grid,
    McEstimate, Sampler,
};
use serde::Serialize;
use serde_json::json;
use std::io::Write;

use crate::output::{fmt_f64, OutputDir};
use crate::{CliError, ExperimentConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    McConvergence,
    PceConvergence,
    Timing,
    CompareShapers,
    Heatmap,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::McConvergence => "mc-convergence",
            Self::PceConvergence => "pce-convergence",
            Self::Timing => "timing",
            Self::CompareShapers => "compare-shapers",
            Self::Heatmap => "heatmap",
        }
    }

    /// Validates `cfg`, runs the command and returns the manifest path.
    pub fn run(self, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
        cfg.validate()?;
        match self {
            Self::McConvergence => mc_convergence(cfg),
            Self::PceConvergence => pce_convergence(cfg),
            Self::Timing => timing(cfg),
            Self::CompareShapers => compare_shapers(cfg),
            Self::Heatmap => heatmap(cfg),
        }
    }
}

fn input(cfg: &ExperimentConfig) -> Result<ShapedInput, CliError> {
    Ok(ShapedInput::new(cfg.shapers.input_design()?, cfg.command))
}

fn evaluation(cfg: &ExperimentConfig) -> EvaluationConfig {
    EvaluationConfig {
        params: cfg.system,
        schedule: cfg.schedule.schedule(),
        settings: PropagationSettings {
            samples_per_period: 0,
            ..cfg.pce.settings(cfg.pce.degree)
        },
        energy: cfg.energy,
        command: cfg.command,
    }
}

/// Sample-size ladder; every size uses the leading samples of one stream.
pub fn mc_convergence(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let mut out = OutputDir::create(&cfg.out_dir)?;
    let n_max = *cfg.mc.sample_sizes.iter().max().expect("validated non-empty");
    let samples = mc_residual_samples(
        &cfg.mc_config(n_max, cfg.mc.sampler),
        &cfg.system,
        &cfg.schedule.schedule(),
        &input(cfg)?,
        &cfg.energy,
    )?;
    let rows: Vec<Vec<f64>> = cfg
        .mc
        .sample_sizes
        .iter()
        .map(|&n| {
            let e = McEstimate::from_samples(&samples[..n], cfg.seed);
            vec![n as f64, e.mean, e.variance, e.stderr_mean, e.stderr_variance]
        })
        .collect();
    out.write_csv(
        "mc_convergence.csv",
        &["sample_size", "mean", "variance", "stderr_mean", "stderr_variance"],
        &rows,
    )?;
    let last = rows.last().expect("non-empty");
    out.finish(
        "mc-convergence",
        cfg,
        json!({ "final": { "sample_size": last[0], "mean": last[1], "variance": last[2] } }),
    )
}

/// State moments per degree against a sampled reference on the same grid.
pub fn pce_convergence(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let mut out = OutputDir::create(&cfg.out_dir)?;
    let schedule = cfg.schedule.schedule();
    let input = input(cfg)?;

    let mut reports = Vec::with_capacity(cfg.pce.degrees.len());
    for &p in &cfg.pce.degrees {
        let prop = propagate(&cfg.system, &schedule, &cfg.pce.settings(p), &input)?;
        let report = full_report(&prop, &cfg.energy, &schedule)?;
        out.write_with(&format!("pce_degree_{p:03}.csv"), |w| report.write_csv(w))?;
        reports.push((p, report));
    }

    let times = reports[0].1.times.clone();
    let mc_state = mc_state_moments(
        &cfg.mc_config(cfg.mc.state_samples, Sampler::ClosedForm),
        &cfg.system,
        &schedule,
        &input,
        &times,
    )?;
    let rows: Vec<Vec<f64>> = (0..times.len())
        .map(|k| vec![times[k], mc_state.mean_x[k], mc_state.var_x[k], mc_state.mean_v[k], mc_state.var_v[k]])
        .collect();
    out.write_csv("mc_reference.csv", &["t", "mean_x", "var_x", "mean_v", "var_v"], &rows)?;
    let mc_res = mc_residual_moments(
        &cfg.mc_config(cfg.mc.reference_samples, cfg.mc.sampler),
        &cfg.system,
        &schedule,
        &input,
        &cfg.energy,
    )?;

    let max_err = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let mut summary = Vec::new();
    for (p, r) in &reports {
        let (e, v) = (r.e_vres.unwrap_or(f64::NAN), r.var_vres.unwrap_or(f64::NAN));
        summary.push(vec![
            *p as f64,
            e,
            v,
            (e - mc_res.mean).abs(),
            (v - mc_res.variance).abs(),
            max_err(&r.mean_x, &mc_state.mean_x),
            max_err(&r.var_x, &mc_state.var_x),
            max_err(&r.mean_v, &mc_state.mean_v),
            max_err(&r.var_v, &mc_state.var_v),
        ]);
    }
    out.write_csv(
        "pce_convergence_summary.csv",
        &[
            "degree",
            "e_vres",
            "var_vres",
            "abs_err_e_vres",
            "abs_err_var_vres",
            "max_abs_err_mean_x",
            "max_abs_err_var_x",
            "max_abs_err_mean_v",
            "max_abs_err_var_v",
        ],
        &summary,
    )?;
    out.finish("pce-convergence", cfg, json!({ "mc_reference": mc_res }))
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Serialize)]
struct DegreeTiming {
    degree: usize,
    seconds: Vec<f64>,
    median_seconds: f64,
}

/// Wall-clock cost of the PCE solve per degree and of one sampled run.
pub fn timing(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let mut out = OutputDir::create(&cfg.out_dir)?;
    let schedule = cfg.schedule.schedule();
    let input = input(cfg)?;

    let mut pce = Vec::new();
    for &p in &cfg.timing.degrees {
        let settings = PropagationSettings {
            samples_per_period: 0,
            ..cfg.pce.settings(p)
        };
        let mut seconds = Vec::with_capacity(cfg.timing.repeats);
        for _ in 0..cfg.timing.repeats {
            let t = Instant::now();
            propagate(&cfg.system, &schedule, &settings, &input)?;
            seconds.push(t.elapsed().as_secs_f64());
        }
        pce.push(DegreeTiming {
            degree: p,
            median_seconds: median(&seconds),
            seconds,
        });
    }

    // Sequential sampling, so both sides use one core.
    let mut mc_cfg = cfg.mc_config(cfg.timing.mc_samples, cfg.timing.sampler);
    mc_cfg.parallel = false;
    let mut mc_seconds = Vec::with_capacity(cfg.timing.repeats);
    for _ in 0..cfg.timing.repeats {
        let t = Instant::now();
        mc_residual_moments(&mc_cfg, &cfg.system, &schedule, &input, &cfg.energy)?;
        mc_seconds.push(t.elapsed().as_secs_f64());
    }
    let mc_median = median(&mc_seconds);
    let top = pce.iter().max_by_key(|d| d.degree).expect("validated non-empty");
    let ratio = mc_median / top.median_seconds;

    let report = json!({
        "pce": pce,
        "mc": {
            "sample_count": cfg.timing.mc_samples,
            "sampler": cfg.timing.sampler,
            "parallel": false,
            "seconds": mc_seconds,
            "median_seconds": mc_median,
        },
        "reference_degree": top.degree,
        "mc_over_pce": ratio,
    });
    out.write_json("timing.json", &report)?;
    let rows: Vec<Vec<f64>> = pce.iter().map(|d| vec![d.degree as f64, d.median_seconds]).collect();
    out.write_csv("timing_pce.csv", &["degree", "median_seconds"], &rows)?;
    out.finish("timing", cfg, json!({ "mc_over_pce": ratio, "pce_faster": ratio > 1.0 }))
}

/// Runs the GSA search from the robust design, plus any perturbed starts,
/// and returns the best run first followed by every run in start order.
pub fn optimize(cfg: &ExperimentConfig, statistic: Statistic) -> Result<(OptimizationResult, Vec<OptimizationResult>), CliError> {
    let robust = cfg.shapers.robust()?;
    let mut starts = vec![robust.clone()];
    starts.extend(perturbed_inits(
        &robust,
        cfg.optimizer.perturbed_starts,
        cfg.optimizer.perturbation_scale,
        cfg.seed,
    )?);
    let mut objective = ObjectiveSpec::new(statistic, evaluation(cfg));
    objective.search_degree = cfg.optimizer.search_degree;
    let runs = optimize_gsa_multistart(
        &objective,
        robust.n_delays(),
        robust.duration(),
        &starts,
        &cfg.optimizer.options(),
    )?;
    let best = runs
        .iter()
        .min_by(|a, b| a.objective_value.total_cmp(&b.objective_value))
        .expect("at least one start")
        .clone();
    Ok((best, runs))
}

#[derive(Serialize)]
struct ShaperRow {
    name: &'static str,
    design: ShaperDesign,
    pce_mean: f64,
    pce_variance: f64,
    mc: McEstimate,
}

/// Residual-energy table for the reference and optimised shapers.
pub fn compare_shapers(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let mut out = OutputDir::create(&cfg.out_dir)?;
    let (gsa1, runs1) = optimize(cfg, Statistic::ExpectedResidual)?;
    let (gsa2, runs2) = optimize(cfg, Statistic::ResidualVariance)?;
    let designs = [
        ("unshaped", ShaperDesign::unshaped()),
        ("non_robust", cfg.shapers.nonrobust()?),
        ("robust", cfg.shapers.robust()?),
        ("gsa_xi1", gsa1.design.clone()),
        ("gsa_xi2", gsa2.design.clone()),
    ];

    let eval = evaluation(cfg);
    let schedule = cfg.schedule.schedule();
    let mut rows = Vec::with_capacity(designs.len());
    for (name, design) in designs {
        let (pce_mean, pce_variance) = residual_statistics(&design, &eval)?;
        let mc = mc_residual_moments(
            &cfg.mc_config(cfg.mc.reference_samples, cfg.mc.sampler),
            &cfg.system,
            &schedule,
            &ShapedInput::new(design.clone(), cfg.command),
            &cfg.energy,
        )?;
        rows.push(ShaperRow {
            name,
            design,
            pce_mean,
            pce_variance,
            mc,
        });
    }

    out.write_with("residual_energy.csv", |w| {
        writeln!(
            w,
            "shaper,pce_mean,pce_variance,mc_mean,mc_variance,mc_stderr_mean,mc_stderr_variance"
        )?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.name,
                fmt_f64(r.pce_mean),
                fmt_f64(r.pce_variance),
                fmt_f64(r.mc.mean),
                fmt_f64(r.mc.variance),
                fmt_f64(r.mc.stderr_mean),
                fmt_f64(r.mc.stderr_variance)
            )?;
        }
        Ok(())
    })?;
    out.write_with("shaper_parameters.csv", |w| {
        writeln!(w, "shaper,index,amplitude,delay")?;
        for r in &rows {
            let delays = std::iter::once(0.0).chain(r.design.delays.iter().copied());
            for (i, (a, t)) in r.design.amplitudes.iter().zip(delays).enumerate() {
                writeln!(w, "{},{i},{},{}", r.name, fmt_f64(*a), fmt_f64(t))?;
            }
        }
        Ok(())
    })?;
    out.write_json(
        "compare_shapers.json",
        &json!({ "shapers": rows, "optimization": { "xi1": runs1, "xi2": runs2 } }),
    )?;
    let summary: serde_json::Map<String, serde_json::Value> = rows
        .iter()
        .map(|r| (r.name.to_string(), json!({ "pce": [r.pce_mean, r.pce_variance], "mc": [r.mc.mean, r.mc.variance] })))
        .collect();
    out.finish("compare-shapers", cfg, serde_json::Value::Object(summary))
}

/// `n` evenly spaced points on `[lo, hi]`; a single point sits at the middle.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Per-realisation residual energy of robust versus GSA shapers on a grid.
pub fn heatmap(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let mut out = OutputDir::create(&cfg.out_dir)?;
    let schedule = cfg.schedule.schedule();
    let robust = cfg.shapers.robust()?;
    let gsa = |fixed: &Option<crate::config::FixedDesign>, stat| -> Result<ShaperDesign, CliError> {
        match fixed {
            Some(d) => d.design(&cfg.shapers),
            None => Ok(optimize(cfg, stat)?.0.design),
        }
    };
    let gsa1 = gsa(&cfg.heatmap.gsa_xi1, Statistic::ExpectedResidual)?;
    let gsa2 = gsa(&cfg.heatmap.gsa_xi2, Statistic::ResidualVariance)?;

    let wn = linspace(schedule.interval1_bounds.0, schedule.interval1_bounds.1, cfg.heatmap.points_n);
    let wm = linspace(schedule.interval2_bounds.0, schedule.interval2_bounds.1, cfg.heatmap.points_m);
    let grid = |d: &ShaperDesign| {
        residual_energy_grid(&wn, &wm, &schedule, &ShapedInput::new(d.clone(), cfg.command), &cfg.system, &cfg.energy)
    };
    let (vr, v1, v2) = (grid(&robust), grid(&gsa1), grid(&gsa2));

    let rows: Vec<Vec<f64>> = (0..vr.len())
        .map(|k| {
            let (n, m) = (wn[k / wm.len()], wm[k % wm.len()]);
            vec![n, m, vr[k], v1[k], v2[k], vr[k] - v1[k], vr[k] - v2[k]]
        })
        .collect();
    out.write_csv(
        "heatmap.csv",
        &["omega_n", "omega_m", "v_robust", "v_gsa_xi1", "v_gsa_xi2", "delta_xi1", "delta_xi2"],
        &rows,
    )?;
    out.write_json(
        "heatmap_designs.json",
        &json!({ "robust": robust, "gsa_xi1": gsa1, "gsa_xi2": gsa2 }),
    )?;
    let robust_better = |col: usize| rows.iter().filter(|r| r[col] < 0.0).count();
    out.finish(
        "heatmap",
        cfg,
        json!({
            "points": rows.len(),
            "robust_better_than_xi1": robust_better(5),
            "robust_better_than_xi2": robust_better(6),
        }),
    )
}
