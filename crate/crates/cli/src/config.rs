//! Declarative experiment configuration, read from TOML.
//!
//! Frequencies are given in multiples of π so that the usual set-up reads
//! `mean_freq_pi = 1.0`, `halfwidth1_pi = 0.25`, and so on.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use pce_shaper::basis::{Truncation, MAX_DEGREE};
use pce_shaper::design::OptimizerOptions;
use pce_shaper::dynamics::{PropagationSettings, SystemParams, UncertaintySchedule};
use pce_shaper::shaper::{design_nonrobust, design_robust, ShaperDesign, ShaperKind};
use pce_shaper::uq::{McConfig, ResidualEnergySpec, Sampler};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub mean_freq_pi: f64,
    pub halfwidth1_pi: f64,
    pub halfwidth2_pi: f64,
    pub t1: f64,
    pub t2: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            mean_freq_pi: 1.0,
            halfwidth1_pi: 0.25,
            halfwidth2_pi: 0.5,
            t1: 100.0,
            t2: 200.0,
        }
    }
}

impl ScheduleConfig {
    pub fn schedule(&self) -> UncertaintySchedule {
        UncertaintySchedule::symmetric(
            self.mean_freq_pi * PI,
            self.halfwidth1_pi * PI,
            self.halfwidth2_pi * PI,
            self.t1,
            self.t2,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PceConfig {
    /// Degree for single-degree commands.
    pub degree: usize,
    /// Degree ladder for `pce-convergence`.
    pub degrees: Vec<usize>,
    pub truncation: Truncation,
    pub tol: f64,
    pub samples_per_period: usize,
}

impl Default for PceConfig {
    fn default() -> Self {
        Self {
            degree: 30,
            degrees: vec![10, 20, 30],
            truncation: Truncation::TotalDegree,
            tol: 1e-12,
            samples_per_period: 20,
        }
    }
}

impl PceConfig {
    pub fn settings(&self, degree: usize) -> PropagationSettings {
        PropagationSettings {
            degree,
            truncation: self.truncation,
            tol: self.tol,
            samples_per_period: self.samples_per_period,
        }
    }
}

/// Reference shapers and the input used by the sampling and PCE commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShaperConfig {
    pub damping: f64,
    pub design_freq_pi: f64,
    /// Input for `mc-convergence`, `pce-convergence` and `timing`.
    pub input: ShaperKind,
}

impl Default for ShaperConfig {
    fn default() -> Self {
        Self {
            damping: 0.0,
            design_freq_pi: 1.0,
            input: ShaperKind::Unshaped,
        }
    }
}

impl ShaperConfig {
    pub fn nonrobust(&self) -> Result<ShaperDesign, CliError> {
        Ok(design_nonrobust(self.damping, self.design_freq_pi * PI)?)
    }

    pub fn robust(&self) -> Result<ShaperDesign, CliError> {
        Ok(design_robust(self.damping, self.design_freq_pi * PI)?)
    }

    pub fn input_design(&self) -> Result<ShaperDesign, CliError> {
        match self.input {
            ShaperKind::Unshaped => Ok(ShaperDesign::unshaped()),
            ShaperKind::NonRobust => self.nonrobust(),
            ShaperKind::Robust => self.robust(),
            ShaperKind::Gsa => Err(CliError::Config(
                "shapers.input must be unshaped, non_robust or robust".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    /// Sample-size ladder for `mc-convergence`.
    pub sample_sizes: Vec<usize>,
    /// Samples for residual-energy references.
    pub reference_samples: usize,
    /// Samples for state-trajectory references.
    pub state_samples: usize,
    pub sampler: Sampler,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            sample_sizes: vec![1_000, 2_000, 5_000, 10_000, 20_000, 50_000, 100_000],
            reference_samples: 100_000,
            state_samples: 10_000,
            sampler: Sampler::ClosedForm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    pub degrees: Vec<usize>,
    pub mc_samples: usize,
    pub sampler: Sampler,
    pub repeats: usize,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            degrees: vec![5, 10, 15, 20, 25, 30],
            mc_samples: 10_000,
            sampler: Sampler::Rk45 { tol: 1e-12 },
            repeats: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Degree used while searching; `None` searches at `pce.degree`.
    pub search_degree: Option<usize>,
    pub max_evals: usize,
    pub simplex_tol: f64,
    pub initial_step: f64,
    /// Extra starts scattered around the robust design.
    pub perturbed_starts: usize,
    pub perturbation_scale: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let o = OptimizerOptions::default();
        Self {
            search_degree: None,
            max_evals: o.max_evals,
            simplex_tol: o.simplex_tol,
            initial_step: o.initial_step,
            perturbed_starts: 0,
            perturbation_scale: 0.2,
        }
    }
}

impl OptimizerConfig {
    pub fn options(&self) -> OptimizerOptions {
        OptimizerOptions {
            max_evals: self.max_evals,
            simplex_tol: self.simplex_tol,
            initial_step: self.initial_step,
        }
    }
}

/// A fixed shaper given by its amplitudes and delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedDesign {
    pub amplitudes: Vec<f64>,
    pub delays: Vec<f64>,
}

impl FixedDesign {
    pub fn design(&self, shapers: &ShaperConfig) -> Result<ShaperDesign, CliError> {
        let d = ShaperDesign {
            kind: ShaperKind::Gsa,
            amplitudes: self.amplitudes.clone(),
            delays: self.delays.clone(),
            damping: shapers.damping,
            design_freq: shapers.design_freq_pi * PI,
        };
        d.validate()?;
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapConfig {
    pub points_n: usize,
    pub points_m: usize,
    /// GSA designs to compare against; optimised when absent.
    pub gsa_xi1: Option<FixedDesign>,
    pub gsa_xi2: Option<FixedDesign>,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            points_n: 21,
            points_m: 21,
            gsa_xi1: None,
            gsa_xi2: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Base command level `u`.
    pub command: f64,
    pub schedule: ScheduleConfig,
    pub system: SystemParams,
    pub energy: ResidualEnergySpec,
    pub pce: PceConfig,
    pub shapers: ShaperConfig,
    pub mc: McSection,
    pub timing: TimingConfig,
    pub optimizer: OptimizerConfig,
    pub heatmap: HeatmapConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            seed: 42,
            command: 1.0,
            schedule: ScheduleConfig::default(),
            system: SystemParams::default(),
            energy: ResidualEnergySpec::default(),
            pce: PceConfig::default(),
            shapers: ShaperConfig::default(),
            mc: McSection::default(),
            timing: TimingConfig::default(),
            optimizer: OptimizerConfig::default(),
            heatmap: HeatmapConfig::default(),
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub reduced: bool,
}

/// Degree used by `--reduced` runs.
pub const REDUCED_DEGREE: usize = 12;

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out_dir {
            self.out_dir = out.clone();
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if o.reduced {
            self.schedule.t1 = 10.0;
            self.schedule.t2 = 20.0;
            self.pce.degree = REDUCED_DEGREE;
            self.pce.degrees = vec![4, 8, REDUCED_DEGREE];
            self.timing.degrees = vec![4, 8, REDUCED_DEGREE];
            if let Some(p) = self.optimizer.search_degree.as_mut() {
                *p = (*p).min(REDUCED_DEGREE);
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.schedule.schedule().validate()?;
        self.system.validate()?;
        self.energy.validate()?;
        if !self.command.is_finite() {
            return Err(CliError::Config("command must be finite".into()));
        }
        let degrees = self
            .pce
            .degrees
            .iter()
            .chain(&self.timing.degrees)
            .chain(std::iter::once(&self.pce.degree))
            .chain(self.optimizer.search_degree.iter());
        for &p in degrees {
            if p > MAX_DEGREE {
                return Err(CliError::Config(format!("degree {p} exceeds the maximum {MAX_DEGREE}")));
            }
        }
        if self.pce.degrees.is_empty() || self.timing.degrees.is_empty() {
            return Err(CliError::Config("degree ladders must not be empty".into()));
        }
        if !(self.pce.tol > 0.0) {
            return Err(CliError::Config("pce.tol must be positive".into()));
        }
        if self.mc.sample_sizes.is_empty() {
            return Err(CliError::Config("mc.sample_sizes must not be empty".into()));
        }
        for &n in self
            .mc
            .sample_sizes
            .iter()
            .chain([&self.mc.reference_samples, &self.mc.state_samples, &self.timing.mc_samples])
        {
            McConfig::new(n, self.seed).validate()?;
        }
        if self.timing.repeats == 0 {
            return Err(CliError::Config("timing.repeats must be at least 1".into()));
        }
        if self.heatmap.points_n == 0 || self.heatmap.points_m == 0 {
            return Err(CliError::Config("heatmap grids need at least one point".into()));
        }
        self.shapers.input_design()?;
        self.shapers.robust()?;
        Ok(())
    }

    pub fn mc_config(&self, sample_count: usize, sampler: Sampler) -> McConfig {
        McConfig {
            sample_count,
            seed: self.seed,
            sampler,
            parallel: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        c.validate().unwrap();
        let s = c.schedule.schedule();
        assert_eq!(s.interval1_bounds, (0.75 * PI, 1.25 * PI));
        assert_eq!(s.interval2_bounds, (0.5 * PI, 1.5 * PI));
    }

    #[test]
    fn nested_tables_parse() {
        let c = ExperimentConfig::from_toml(
            r#"
            seed = 7
            [schedule]
            t1 = 10.0
            t2 = 20.0
            [pce]
            degrees = [2, 4]
            truncation = "tensor_product"
            [mc]
            sampler = { kind = "rk45", tol = 1e-9 }
            [heatmap.gsa_xi1]
            amplitudes = [0.25, 0.5, 0.25]
            delays = [1.0, 2.0]
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.pce.truncation, Truncation::TensorProduct);
        assert_eq!(c.mc.sampler, Sampler::Rk45 { tol: 1e-9 });
        assert!(c.heatmap.gsa_xi1.is_some());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            ExperimentConfig::from_toml("[pce]\ndegre = 3"),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn overrides_and_reduced_scale() {
        let mut c = ExperimentConfig::default();
        c.apply(&Overrides {
            out_dir: Some("x".into()),
            seed: Some(3),
            reduced: true,
        });
        assert_eq!((c.schedule.t1, c.schedule.t2, c.pce.degree), (10.0, 20.0, 12));
        assert_eq!(c.seed, 3);
        assert_eq!(c.out_dir, PathBuf::from("x"));
    }

    #[test]
    fn invalid_values_fail_validation() {
        let mut c = ExperimentConfig::default();
        c.schedule.t2 = 50.0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.pce.degrees = vec![500];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.mc.sample_sizes = vec![0];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.shapers.input = ShaperKind::Gsa;
        assert!(c.validate().is_err());
    }
}
