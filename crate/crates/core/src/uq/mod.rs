//! Residual-energy statistics from PCE surrogates and from sampling.

pub mod energy;
pub mod mc;
pub mod moments;
pub mod oracle;

pub use energy::{EnergyForm, ResidualEnergySpec};
pub use mc::{
    mc_residual_moments, mc_residual_samples, mc_state_moments, sample_germs, McConfig, McEstimate,
    McStateMoments, Sampler,
};
pub use moments::{
    full_report, pce_moments, pce_residual_moments, pce_residual_moments_with_order,
    required_quad_order, MomentReport,
};
pub use oracle::{advance, closed_form_trajectory, residual_energy, residual_energy_grid, rk45_trajectory};
