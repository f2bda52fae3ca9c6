//! End-to-end runs on the 10 s / 20 s horizon, where degree 30 is converged.

use std::f64::consts::PI;

use pce_shaper::basis::Truncation;
use pce_shaper::design::{
    evaluate_objective, optimize_gsa_multistart, perturbed_inits, EvaluationConfig, ObjectiveSpec, OptimizerOptions,
    Statistic,
};
use pce_shaper::dynamics::{propagate, PropagationSettings, SystemParams, UncertaintySchedule};
use pce_shaper::shaper::{design_nonrobust, design_robust, ShapedInput};
use pce_shaper::uq::{pce_moments, pce_residual_moments, ResidualEnergySpec};

fn objective(stat: Statistic) -> ObjectiveSpec {
    ObjectiveSpec::new(stat, EvaluationConfig::new(UncertaintySchedule::short_horizon(), 30))
}

fn rel(x: f64, y: f64) -> f64 {
    (x - y).abs() / y.abs()
}

#[test]
fn objective_values_for_reference_shapers() {
    let robust = design_robust(0.0, PI).unwrap();
    let nonrobust = design_nonrobust(0.0, PI).unwrap();
    let e_r = evaluate_objective(&robust, &objective(Statistic::ExpectedResidual)).unwrap();
    let e_n = evaluate_objective(&nonrobust, &objective(Statistic::ExpectedResidual)).unwrap();
    let v_n = evaluate_objective(&nonrobust, &objective(Statistic::ResidualVariance)).unwrap();
    assert!(rel(e_r, 0.0129) < 0.01, "{e_r}");
    assert!(rel(e_n, 0.1453) < 0.01, "{e_n}");
    assert!(rel(v_n, 0.0358) < 0.01, "{v_n}");
}

#[test]
fn perturbed_starts_reach_the_tabulated_optimum() {
    let robust = design_robust(0.0, PI).unwrap();
    let mut starts = vec![robust.clone()];
    starts.extend(perturbed_inits(&robust, 3, 0.2, 7).unwrap());
    let obj = objective(Statistic::ExpectedResidual);
    let runs = optimize_gsa_multistart(&obj, 2, 2.0, &starts, &OptimizerOptions::default()).unwrap();
    assert_eq!(runs.len(), 4);
    for (r, s) in runs.iter().zip(&starts) {
        assert_eq!(&r.initial_design, s);
        assert!(r.objective_value <= r.initial_objective + 1e-15);
        r.design.validate().unwrap();
    }
    let best = runs.iter().map(|r| r.objective_value).fold(f64::INFINITY, f64::min);
    assert!(rel(best, 0.0062) < 0.10, "{best}");
}

#[test]
fn mean_position_matches_the_analytic_average() {
    let s = UncertaintySchedule::short_horizon();
    let settings = PropagationSettings {
        degree: 30,
        samples_per_period: 10,
        ..Default::default()
    };
    let prop = propagate(&SystemParams::default(), &s, &settings, &ShapedInput::step(1.0)).unwrap();
    let m = pce_moments(&prop.interval1);
    let (lb, ub) = s.interval1_bounds;
    for (k, &t) in m.times.iter().enumerate().skip(1) {
        let exact = 1.0 - ((ub * t).sin() - (lb * t).sin()) / ((ub - lb) * t);
        assert!((m.mean_x[k] - exact).abs() < 1e-9, "t={t}: {} vs {exact}", m.mean_x[k]);
    }
}

#[test]
fn truncation_schemes_agree_when_converged() {
    let s = UncertaintySchedule::short_horizon();
    let input = ShapedInput::new(design_robust(0.0, PI).unwrap(), 1.0);
    let stats = |truncation| {
        let settings = PropagationSettings {
            degree: 30,
            truncation,
            samples_per_period: 0,
            ..Default::default()
        };
        let prop = propagate(&SystemParams::default(), &s, &settings, &input).unwrap();
        let (a, b) = prop.interval2.final_state();
        pce_residual_moments(a, b, &prop.interval2.basis, &ResidualEnergySpec::default(), &s).unwrap()
    };
    let (e_td, v_td) = stats(Truncation::TotalDegree);
    let (e_tp, v_tp) = stats(Truncation::TensorProduct);
    assert!(rel(e_td, e_tp) < 1e-3, "{e_td} {e_tp}");
    assert!(rel(v_td, v_tp) < 1e-2, "{v_td} {v_tp}");
}
