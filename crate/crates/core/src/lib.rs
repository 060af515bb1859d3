//! Moment-based distribution steering for discrete-time ensembles of scalar
//! systems with random parameters.
//!
//! The pipeline reduces steering the state density to steering a finite
//! vector of power moments: [`moments::smooth_trajectory`] fixes the moment
//! trajectory, [`gain::optimize_gain`] picks the feedback gain per step,
//! [`realization::realize`] turns the control moments into a density, and
//! [`engine::simulate`] drives a finite swarm with sampled controls.

pub mod distributions;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod gain;
pub mod moments;
pub mod quadrature;
pub mod realization;

pub use distributions::ScalarDistribution;
pub use dynamics::{DynamicsKind, StepMoments};
pub use engine::{EnsembleState, SimulationTrace, SteeringPlan, SteeringProblem, StepPlan};
pub use error::{Error, Result};
pub use gain::GainResult;
pub use moments::{HankelMatrix, MomentVector, TAU_PSD};
pub use realization::{RealizationProblem, RealizedDensity};
