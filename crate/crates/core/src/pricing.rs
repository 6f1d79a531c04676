//! Price equations for the stablecoin and its collateral.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PricingError {
    #[error("no circulating supply")]
    NoSupply,
    #[error("degenerate endogenous pricing parameters")]
    DegenerateEndogenous,
}

/// Stablecoin price as total demand (USD) over circulating units.
pub fn stablecoin_price(total_demand: f64, supply: f64) -> Result<f64, PricingError> {
    if supply > 0.0 {
        Ok(total_demand / supply)
    } else {
        Err(PricingError::NoSupply)
    }
}

/// Closed-form geometric Brownian motion, `p0·exp((mu - σ²/2)·t + σ·W_t)`.
pub fn exogenous_collateral_price(p0: f64, mu: f64, sigma: f64, t: f64, w_t: f64) -> f64 {
    p0 * ((mu - 0.5 * sigma * sigma) * t + sigma * w_t).exp()
}

/// Fair value of one unit of a native collateral token: the fee revenue
/// `D_user · fees` capitalized at the perpetual rate `z`, spread over the
/// circulating units, scaled by `e` and discounted by the opportunity cost `c`.
pub fn endogenous_collateral_price(
    e: f64,
    user_demand: f64,
    fees: f64,
    z: f64,
    c: f64,
    collateral_supply: f64,
) -> Result<f64, PricingError> {
    if !(z > 0.0 && c > 0.0 && collateral_supply > 0.0) {
        return Err(PricingError::DegenerateEndogenous);
    }
    Ok(e * (((user_demand * fees) / z) / collateral_supply) / c)
}
