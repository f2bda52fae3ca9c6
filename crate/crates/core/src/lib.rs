//! Polynomial-chaos propagation of interval frequency uncertainty through an
//! undamped spring–mass system, and time-delay-filter input shaper design
//! against the statistics of the residual vibration energy.
//!
//! The pipeline is: [`basis`] supplies the Legendre chaos basis, [`dynamics`]
//! assembles and integrates the Galerkin system over both uncertainty
//! intervals, [`uq`] turns coefficients into moments (and provides the
//! sampling reference), [`shaper`] realises input shapers, and [`design`]
//! optimises shaper parameters.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]
#![allow(clippy::too_many_arguments)]

pub mod basis;
pub mod design;
pub mod dynamics;
pub mod error;
pub mod shaper;
pub mod uq;

pub use error::{Error, Result};
