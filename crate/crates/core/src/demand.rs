//! User, investor and staking demand.

use thiserror::Error;

/// Inputs of the piecewise user demand curve for one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandInputs {
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub fees: f64,
    /// Shock dummy: 0 without a shock, +1 / -1 for positive / negative shocks.
    pub s_t: f64,
    /// Noise already scaled by its magnitude (`r_t · m`).
    pub noise: f64,
    /// Collateral level; `+inf` when nothing is in circulation.
    pub o_t: f64,
    pub o_crit: f64,
    pub upper_bound: f64,
}

/// Whether a demand value had to be pulled back into `[0, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clamp {
    None,
    Floor,
    Ceiling,
}

impl DemandInputs {
    pub fn base(&self) -> f64 {
        self.a - self.b * self.fees + self.d * self.s_t + self.noise
    }
}

fn clamp(x: f64, upper: f64) -> (f64, Clamp) {
    if x < 0.0 {
        (0.0, Clamp::Floor)
    } else if x > upper {
        (upper, Clamp::Ceiling)
    } else {
        (x, Clamp::None)
    }
}

/// User demand with a record of whether clamping kicked in.
pub fn user_demand_clamped(inputs: &DemandInputs) -> (f64, Clamp) {
    let base = inputs.base();
    if inputs.o_t >= 1.0 {
        clamp(base, inputs.upper_bound)
    } else if inputs.o_t >= inputs.o_crit {
        clamp(base * inputs.o_t * inputs.o_t, inputs.upper_bound)
    } else {
        (0.0, Clamp::None)
    }
}

/// Piecewise user demand: the linear base when collateral covers the coin,
/// damped by `o²` between `o_crit` and 1, zero below `o_crit`.
pub fn user_demand(inputs: &DemandInputs) -> f64 {
    user_demand_clamped(inputs).0
}

pub fn investor_demand(l: f64, user_demand: f64) -> f64 {
    l + user_demand
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("staking not applicable to centrally managed collateral")]
pub struct StakingNotApplicable;

/// Staking demand `max(0, f + g·(D_user·fees)/c)`.
pub fn staking_demand(f: f64, g: f64, user_demand: f64, fees: f64, c: f64) -> f64 {
    (f + g * ((user_demand * fees) / c)).max(0.0)
}

/// [`staking_demand`] guarded by the management mode.
pub fn staking_demand_for(
    spec: &crate::model::StablecoinSpec,
    user_demand: f64,
) -> Result<f64, StakingNotApplicable> {
    if spec.quadrant().is_central() {
        return Err(StakingNotApplicable);
    }
    Ok(staking_demand(
        spec.staking.f,
        spec.staking.g,
        user_demand,
        spec.fees,
        spec.endo.c,
    ))
}
