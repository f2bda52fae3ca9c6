use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnergyForm {
    /// `m/2 ẋ² + k/2 (x_f − x)²` with `k = m ω²` of the active interval.
    Nominal,
    /// `½ ẋ² + ½ (x − x_f)²`.
    #[default]
    UnitStiffness,
}

/// Residual vibration energy functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResidualEnergySpec {
    pub form: EnergyForm,
    pub target: f64,
    /// Only used by [`EnergyForm::Nominal`].
    pub mass: f64,
}

impl Default for ResidualEnergySpec {
    fn default() -> Self {
        Self {
            form: EnergyForm::UnitStiffness,
            target: 1.0,
            mass: 1.0,
        }
    }
}

impl ResidualEnergySpec {
    pub fn unit(target: f64) -> Self {
        Self {
            target,
            ..Self::default()
        }
    }

    pub fn nominal(target: f64, mass: f64) -> Self {
        Self {
            form: EnergyForm::Nominal,
            target,
            mass,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.target.is_finite() {
            return Err(Error::config("energy target must be finite"));
        }
        if self.form == EnergyForm::Nominal && !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::config(format!("mass {} must be positive", self.mass)));
        }
        Ok(())
    }

    /// Energy of state `(x, v)` under frequency `omega`.
    #[inline]
    pub fn energy(&self, x: f64, v: f64, omega: f64) -> f64 {
        let dx = x - self.target;
        match self.form {
            EnergyForm::UnitStiffness => 0.5 * v * v + 0.5 * dx * dx,
            EnergyForm::Nominal => 0.5 * self.mass * (v * v + omega * omega * dx * dx),
        }
    }

    /// Extra polynomial degree the frequency adds to the energy in its germ.
    pub(crate) fn frequency_degree(&self) -> usize {
        match self.form {
            EnergyForm::UnitStiffness => 0,
            EnergyForm::Nominal => 2,
        }
    }
}
