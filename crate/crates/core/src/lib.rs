//! Agent-based Monte Carlo simulation of stablecoin designs along two axes:
//! where the collateral comes from (outside the ecosystem or a native token)
//! and who manages it (a central issuer or individual debt positions).
//!
//! [`engine::run_ensemble`] is the main entry point. Parameter sets for the
//! four designs ship in [`calibration`]; [`io`] reads configuration files and
//! writes CSV and SVG output.

pub mod calibration;
pub mod controls;
pub mod demand;
pub mod engine;
pub mod io;
pub mod model;
pub mod pricing;
pub mod settlement;
pub mod stochastic;

pub use engine::{run_ensemble, run_path, run_sensitivity, EngineError, EnsembleResult, PathResult};
pub use model::{Quadrant, Scenario, SensitivityFactor, SimConfig, StablecoinSpec};
