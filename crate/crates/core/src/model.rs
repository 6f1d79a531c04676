//! Domain types: the 2×2 collateral taxonomy, agent wallets, market state and
//! simulation configuration.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Where the value backing the stablecoin comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollateralSource {
    /// Outside the ecosystem (fiat, gold, an independent crypto asset).
    Exogenous,
    /// A native token of the same ecosystem whose value derives from its fees.
    Endogenous,
}

/// Who holds and manages the collateral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollateralManagement {
    /// A single issuer pools the collateral and mints/redeems against it.
    Central,
    /// Investors lock their own collateral in debt positions.
    Decentral,
}

impl fmt::Display for CollateralSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Exogenous => "exogenous",
            Self::Endogenous => "endogenous",
        })
    }
}

impl fmt::Display for CollateralManagement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Central => "central",
            Self::Decentral => "decentral",
        })
    }
}

/// One cell of the taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Quadrant {
    pub source: CollateralSource,
    pub management: CollateralManagement,
}

impl Quadrant {
    /// All four quadrants in display order (USDT-, Dai-, TerraUSD-, sUSD-like).
    pub const ALL: [Quadrant; 4] = [
        Quadrant::new(CollateralSource::Exogenous, CollateralManagement::Central),
        Quadrant::new(CollateralSource::Exogenous, CollateralManagement::Decentral),
        Quadrant::new(CollateralSource::Endogenous, CollateralManagement::Central),
        Quadrant::new(CollateralSource::Endogenous, CollateralManagement::Decentral),
    ];

    pub const fn new(source: CollateralSource, management: CollateralManagement) -> Self {
        Self { source, management }
    }

    pub fn label(&self) -> &'static str {
        use CollateralManagement::*;
        use CollateralSource::*;
        match (self.source, self.management) {
            (Exogenous, Central) => "exogenous/central",
            (Exogenous, Decentral) => "exogenous/decentral",
            (Endogenous, Central) => "endogenous/central",
            (Endogenous, Decentral) => "endogenous/decentral",
        }
    }

    /// Filesystem-friendly form of [`Quadrant::label`].
    pub fn slug(&self) -> String {
        self.label().replace('/', "-")
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|q| q.label() == label)
    }

    pub fn is_central(&self) -> bool {
        self.management == CollateralManagement::Central
    }

    pub fn is_decentral(&self) -> bool {
        self.management == CollateralManagement::Decentral
    }

    /// The exogenous/central design is backed by the reference currency itself.
    pub fn is_fiat_backed(&self) -> bool {
        self.source == CollateralSource::Exogenous && self.is_central()
    }
}

/// Parameters of the user demand curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandParams {
    /// Base demand in USD.
    pub a: f64,
    /// Fee sensitivity in USD per unit of fee.
    pub b: f64,
    /// Shock magnitude in USD.
    pub d: f64,
    /// Magnitude of the per-tick demand noise in USD.
    pub m: f64,
    /// Collateral level below which users abandon the coin.
    pub o_crit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExoCollateralParams {
    pub p0: f64,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndoCollateralParams {
    /// Calibration scale of the fair-value formula.
    pub e: f64,
    /// Perpetual interest rate.
    pub z: f64,
    /// Opportunity cost (return of the alternative investment).
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StakingParams {
    pub f: f64,
    pub g: f64,
}

/// Full parameterization of one stablecoin design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StablecoinSpec {
    pub source: CollateralSource,
    pub management: CollateralManagement,
    pub demand: DemandParams,
    /// Proportional transaction fee.
    pub fees: f64,
    /// Investors' liquidity margin `l` in USD.
    pub liquidity_margin: f64,
    pub exo: ExoCollateralParams,
    pub endo: EndoCollateralParams,
    pub staking: StakingParams,
    /// Collateral value required per stablecoin at issuance.
    pub collateral_ratio: f64,
    /// Debt positions below this ratio are liquidated.
    pub liquidation_ratio: f64,
}

/// Multiple of `a` used as the ceiling for any demand value.
pub const DEMAND_CAP_MULTIPLE: f64 = 10.0;

impl StablecoinSpec {
    pub fn quadrant(&self) -> Quadrant {
        Quadrant::new(self.source, self.management)
    }

    pub fn demand_upper_bound(&self) -> f64 {
        DEMAND_CAP_MULTIPLE * self.demand.a
    }

    /// Noise-free, unshocked user demand `a - b·fees`, floored at zero.
    pub fn equilibrium_user_demand(&self) -> f64 {
        (self.demand.a - self.demand.b * self.fees).clamp(0.0, self.demand_upper_bound())
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let d = &self.demand;
        check(d.a.is_finite() && d.a > 0.0, "demand.a", "a must be positive")?;
        check(d.b.is_finite(), "demand.b", "b must be finite")?;
        check(d.d.is_finite() && d.d >= 0.0, "demand.d", "d must be non-negative")?;
        check(d.m.is_finite() && d.m >= 0.0, "demand.m", "m must be non-negative")?;
        check(
            d.o_crit > 0.0 && d.o_crit <= 1.0,
            "demand.o_crit",
            "o_crit must lie in (0,1]",
        )?;
        check(
            self.fees >= 0.0 && self.fees < 1.0,
            "coin.fees",
            "fees must lie in [0,1)",
        )?;
        check(
            self.liquidity_margin.is_finite() && self.liquidity_margin >= 0.0,
            "demand.l",
            "l must be non-negative",
        )?;
        check(
            self.exo.p0.is_finite() && self.exo.p0 > 0.0,
            "exogenous.p0",
            "p0 must be positive",
        )?;
        check(self.exo.mu.is_finite(), "exogenous.mu", "mu must be finite")?;
        check(
            self.exo.sigma.is_finite() && self.exo.sigma >= 0.0,
            "exogenous.sigma",
            "sigma must be non-negative",
        )?;
        check(self.endo.e > 0.0, "endogenous.e", "e must be positive")?;
        check(self.endo.z > 0.0, "endogenous.z", "z must be positive")?;
        check(self.endo.c > 0.0, "endogenous.c", "c must be positive")?;
        check(
            self.staking.f.is_finite() && self.staking.g.is_finite(),
            "staking",
            "f and g must be finite",
        )?;
        check(
            self.collateral_ratio >= 1.0,
            "coin.collateral_ratio",
            "collateral_ratio must be at least 1",
        )?;
        check(
            self.liquidation_ratio >= 1.0,
            "coin.liquidation_ratio",
            "liquidation_ratio must be at least 1",
        )?;
        check(
            self.liquidation_ratio <= self.collateral_ratio,
            "coin.liquidation_ratio",
            "liquidation_ratio must not exceed collateral_ratio",
        )?;
        Ok(())
    }
}

fn check(ok: bool, field: &'static str, message: &'static str) -> Result<(), ValidationError> {
    if ok {
        Ok(())
    } else {
        Err(ValidationError {
            field,
            message: message.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{field}: {message}")]
pub struct ValidationError {
    pub field: &'static str,
    pub message: String,
}

/// `"exogenous/central"`, `"endogenous/decentral"`, ...
pub fn quadrant_label(spec: &StablecoinSpec) -> &'static str {
    spec.quadrant().label()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("undefined collateral level: no stablecoins in circulation")]
pub struct UndefinedCollateralLevel;

/// Value of collateral per stablecoin outstanding.
pub fn collateral_level(
    collateral_units: f64,
    collateral_price: f64,
    stablecoin_supply: f64,
) -> Result<f64, UndefinedCollateralLevel> {
    if stablecoin_supply > 0.0 {
        Ok(collateral_units * collateral_price / stablecoin_supply)
    } else {
        Err(UndefinedCollateralLevel)
    }
}

/// Collateral level with the empty-supply case mapped to `+inf`.
pub fn collateral_level_or_inf(units: f64, price: f64, supply: f64) -> f64 {
    collateral_level(units, price, supply).unwrap_or(f64::INFINITY)
}

/// Holdings of a single agent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Wallet {
    pub fiat: f64,
    pub stablecoin: f64,
    pub collateral: f64,
}

impl Wallet {
    pub fn new(fiat: f64, stablecoin: f64, collateral: f64) -> Self {
        Self {
            fiat,
            stablecoin,
            collateral,
        }
    }

    pub fn is_non_negative(&self) -> bool {
        self.fiat >= 0.0 && self.stablecoin >= 0.0 && self.collateral >= 0.0
    }
}

/// Snapshot of the market at the end of a tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub t: u64,
    pub stablecoin_supply: f64,
    pub collateral_supply: f64,
    pub stablecoin_price: f64,
    pub collateral_price: f64,
    pub brownian_value: f64,
    pub user_demand: f64,
    pub investor_demand: f64,
    pub staking_demand: f64,
    pub collateral_level: f64,
}

impl MarketState {
    pub fn total_demand(&self) -> f64 {
        self.user_demand + self.investor_demand
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Baseline,
    #[serde(alias = "negative_shock")]
    Negative,
    #[serde(alias = "positive_shock")]
    Positive,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Baseline, Scenario::Positive, Scenario::Negative];

    /// Shock dummy at tick `t`: zero before `shock_step`, then ±1 for good.
    pub fn shock_dummy(&self, t: usize, shock_step: usize) -> f64 {
        match self {
            Scenario::Baseline => 0.0,
            _ if t < shock_step => 0.0,
            Scenario::Negative => -1.0,
            Scenario::Positive => 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Baseline => "baseline",
            Scenario::Negative => "negative",
            Scenario::Positive => "positive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "baseline" => Some(Self::Baseline),
            "negative" | "negative_shock" => Some(Self::Negative),
            "positive" | "positive_shock" => Some(Self::Positive),
            _ => None,
        }
    }
}

/// The variable a sensitivity sweep scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensitivityFactor {
    ShockMagnitude,
    DemandVolatility,
    Fees,
    CollateralPrice,
}

impl SensitivityFactor {
    pub const ALL: [SensitivityFactor; 4] = [
        SensitivityFactor::ShockMagnitude,
        SensitivityFactor::DemandVolatility,
        SensitivityFactor::Fees,
        SensitivityFactor::CollateralPrice,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::ShockMagnitude => "shock",
            Self::DemandVolatility => "volatility",
            Self::Fees => "fees",
            Self::CollateralPrice => "collateral",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }
}

/// Multipliers applied in every sensitivity sweep.
pub const SENSITIVITY_MULTIPLIERS: [f64; 5] = [0.5, 0.75, 1.0, 1.25, 1.5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub factor: SensitivityFactor,
    pub multiplier: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("collateral price is not analyzable for exogenous/central designs: fiat is both collateral and reference currency")]
pub struct NotAnalyzable;

impl StablecoinSpec {
    /// Copy with one sensitivity factor scaled.
    pub fn scaled(&self, factor: SensitivityFactor, multiplier: f64) -> Result<Self, NotAnalyzable> {
        let mut out = self.clone();
        match factor {
            SensitivityFactor::ShockMagnitude => out.demand.d *= multiplier,
            SensitivityFactor::DemandVolatility => out.demand.m *= multiplier,
            SensitivityFactor::Fees => out.fees *= multiplier,
            SensitivityFactor::CollateralPrice => match (self.source, self.management) {
                (CollateralSource::Exogenous, CollateralManagement::Central) => {
                    return Err(NotAnalyzable)
                }
                (CollateralSource::Exogenous, _) => out.exo.p0 *= multiplier,
                (CollateralSource::Endogenous, _) => out.endo.e *= multiplier,
            },
        }
        Ok(out)
    }
}

/// Everything needed to run an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub spec: StablecoinSpec,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub scenario: Scenario,
    pub shock_step: usize,
    pub n_users: usize,
    pub n_investors: usize,
    /// Starting fiat and collateral of each user; stablecoin balances are
    /// assigned by the equilibrium initialization.
    pub initial_user_wallet: Wallet,
    pub initial_investor_wallet: Wallet,
    /// Collateral units initially pooled by a central issuer. `None` sizes
    /// the reserve at `collateral_ratio` times the initial supply.
    pub issuer_reserve: Option<f64>,
    pub sensitivity: Option<Sensitivity>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        self.spec.validate()?;
        check(self.n_paths >= 1, "simulation.n_paths", "n_paths must be at least 1")?;
        check(
            self.shock_step < self.n_steps.max(1),
            "simulation.shock_step",
            "shock_step must lie in [0, n_steps)",
        )?;
        check(self.n_users >= 1, "simulation.n_users", "n_users must be at least 1")?;
        check(
            self.n_investors >= 1,
            "simulation.n_investors",
            "n_investors must be at least 1",
        )?;
        let (u, i) = (&self.initial_user_wallet, &self.initial_investor_wallet);
        check(
            u.is_non_negative() && i.is_non_negative(),
            "wallets",
            "initial balances must be non-negative",
        )?;
        check(
            i.fiat > u.fiat && i.collateral >= u.collateral,
            "wallets.investor",
            "investor balances must exceed user balances",
        )?;
        if let Some(r) = self.issuer_reserve {
            check(
                r.is_finite() && r >= 0.0,
                "issuer.reserve",
                "reserve must be non-negative",
            )?;
        }
        if let Some(s) = self.sensitivity {
            check(
                s.multiplier > 0.0,
                "sensitivity.multiplier",
                "multiplier must be positive",
            )?;
        }
        Ok(())
    }

    /// Stablecoin parameters after applying the configured sensitivity factor, if any.
    pub fn effective_spec(&self) -> Result<StablecoinSpec, NotAnalyzable> {
        match self.sensitivity {
            Some(s) => self.spec.scaled(s.factor, s.multiplier),
            None => Ok(self.spec.clone()),
        }
    }

    pub fn with_sensitivity(&self, factor: SensitivityFactor, multiplier: f64) -> Self {
        Self {
            sensitivity: Some(Sensitivity { factor, multiplier }),
            ..self.clone()
        }
    }

    pub fn with_scenario(&self, scenario: Scenario) -> Self {
        Self {
            scenario,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration;

    #[test]
    fn labels_match_taxonomy() {
        use CollateralManagement::*;
        use CollateralSource::*;
        assert_eq!(Quadrant::new(Exogenous, Central).label(), "exogenous/central");
        assert_eq!(Quadrant::new(Endogenous, Central).label(), "endogenous/central");
        assert_eq!(
            Quadrant::new(Endogenous, Decentral).label(),
            "endogenous/decentral"
        );
    }

    #[test]
    fn labels_are_a_bijection() {
        let labels: std::collections::HashSet<_> =
            Quadrant::ALL.iter().map(|q| q.label()).collect();
        assert_eq!(labels.len(), 4);
        for q in Quadrant::ALL {
            assert_eq!(Quadrant::from_label(q.label()), Some(q));
        }
    }

    #[test]
    fn collateral_level_examples() {
        assert_eq!(collateral_level(150.0, 1.0, 100.0).unwrap(), 1.5);
        assert_eq!(collateral_level(100.0, 1.0, 100.0).unwrap(), 1.0);
        assert_eq!(collateral_level(400.0, 0.5, 100.0).unwrap(), 2.0);
        assert_eq!(
            collateral_level(10.0, 1.0, 0.0),
            Err(UndefinedCollateralLevel)
        );
        assert_eq!(collateral_level_or_inf(10.0, 1.0, 0.0), f64::INFINITY);
    }

    #[test]
    fn shock_dummy_persists() {
        let s = Scenario::Negative;
        assert_eq!(s.shock_dummy(9, 10), 0.0);
        assert_eq!(s.shock_dummy(10, 10), -1.0);
        assert_eq!(s.shock_dummy(400, 10), -1.0);
        assert_eq!(Scenario::Positive.shock_dummy(11, 10), 1.0);
        assert!((0..50).all(|t| Scenario::Baseline.shock_dummy(t, 0) == 0.0));
    }

    #[test]
    fn fee_bounds_are_enforced() {
        let mut spec = calibration::default_spec(Quadrant::ALL[0]);
        spec.fees = 1.5;
        let err = spec.validate().unwrap_err();
        assert_eq!(err.message, "fees must lie in [0,1)");
    }

    #[test]
    fn liquidation_ratio_above_collateral_ratio_rejected() {
        let mut spec = calibration::default_spec(Quadrant::ALL[1]);
        spec.liquidation_ratio = spec.collateral_ratio + 0.1;
        assert_eq!(spec.validate().unwrap_err().field, "coin.liquidation_ratio");
    }

    #[test]
    fn collateral_sensitivity_on_fiat_backed_is_rejected() {
        let spec = calibration::default_spec(Quadrant::ALL[0]);
        assert_eq!(
            spec.scaled(SensitivityFactor::CollateralPrice, 0.5),
            Err(NotAnalyzable)
        );
        let endo = calibration::default_spec(Quadrant::ALL[2]);
        let scaled = endo.scaled(SensitivityFactor::CollateralPrice, 0.5).unwrap();
        assert_eq!(scaled.endo.e, endo.endo.e * 0.5);
    }

    #[test]
    fn investors_must_start_richer() {
        let mut cfg = calibration::default_config(Quadrant::ALL[0]);
        cfg.initial_investor_wallet = cfg.initial_user_wallet;
        assert!(cfg.validate().is_err());
    }

    proptest::proptest! {
        #[test]
        fn collateral_level_is_homogeneous(units in 0.0f64..1e6, price in 0.0f64..100.0,
                                            supply in 1e-3f64..1e6, k in 1e-3f64..1e3) {
            let a = collateral_level(units, price, supply).unwrap();
            let b = collateral_level(units * k, price, supply * k).unwrap();
            proptest::prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
