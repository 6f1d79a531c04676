//! Path execution, Monte Carlo ensembles and sensitivity sweeps.
//!
//! Every tick runs the same ten steps in order:
//!
//! 1. stablecoin price from last tick's demand and the circulating supply
//! 2. collateral price (fixed, GBM or fee-based fair value), followed by a
//!    liquidation pass under decentral management
//! 3. user demand
//! 4. investor demand
//! 5. staking demand (decentral only)
//! 6. investors close the gap between holdings and demand, trading with
//!    the issuer (central) or through debt positions (decentral)
//! 7. users trade with investors to bring their holdings to their demand
//! 8. staking changes open or repay positions (decentral only)
//! 9. record
//! 10. controls

use rayon::prelude::*;
use thiserror::Error;

use crate::controls::{run_controls, ControlReport};
use crate::demand::{self, Clamp, DemandInputs};
use crate::model::{
    collateral_level_or_inf, CollateralSource, MarketState, NotAnalyzable, Quadrant,
    SensitivityFactor, SimConfig, StablecoinSpec, ValidationError, Wallet,
    SENSITIVITY_MULTIPLIERS,
};
use crate::pricing;
use crate::settlement::{
    self, adjust_staking, central_issuer_trade, liquidate_positions, user_investor_trade, Agents,
    CollateralAsset, Fill, Issuer, IssuerTerms, Ledger,
};
use crate::stochastic::{brownian_increment, demand_noise, PathStreams};

/// USD per coin at which central issuers mint and redeem.
pub const PEG: f64 = 1.0;

/// Tick length; GBM drift and volatility are per tick.
pub const DT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    NotAnalyzable(#[from] NotAnalyzable),
    #[error("invalid configuration: {0}")]
    Invalid(#[from] ValidationError),
    #[error("initial state infeasible: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TickStep {
    StablecoinPrice,
    CollateralPrice,
    Liquidation,
    UserDemand,
    InvestorDemand,
    StakingDemand,
    IssuerTrade,
    PositionIssuance,
    UserTrade,
    StakingAdjustment,
    Record,
    Controls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Clamp,
    PartialFill,
    Liquidation,
    ControlWarning,
    ControlFailure,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Clamp => "clamp",
            Self::PartialFill => "partial_fill",
            Self::Liquidation => "liquidation",
            Self::ControlWarning => "control_warning",
            Self::ControlFailure => "control_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub step: usize,
    pub kind: EventKind,
    pub detail: String,
}

/// Per-tick series of one path.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PathResult {
    pub path_index: usize,
    pub stablecoin_price: Vec<f64>,
    pub collateral_price: Vec<f64>,
    pub user_demand: Vec<f64>,
    pub investor_demand: Vec<f64>,
    pub staking_demand: Vec<f64>,
    pub stablecoin_supply: Vec<f64>,
    pub collateral_supply: Vec<f64>,
    pub collateral_level: Vec<f64>,
    pub events: Vec<Event>,
}

impl PathResult {
    pub fn len(&self) -> usize {
        self.stablecoin_price.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stablecoin_price.is_empty()
    }

    fn record(&mut self, m: &MarketState) {
        self.stablecoin_price.push(m.stablecoin_price);
        self.collateral_price.push(m.collateral_price);
        self.user_demand.push(m.user_demand);
        self.investor_demand.push(m.investor_demand);
        self.staking_demand.push(m.staking_demand);
        self.stablecoin_supply.push(m.stablecoin_supply);
        self.collateral_supply.push(m.collateral_supply);
        self.collateral_level.push(m.collateral_level);
    }

    pub fn count_events(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }
}

/// A path stopped by a failed control.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFailure {
    pub path_index: usize,
    pub tick: usize,
    pub report: ControlReport,
    /// Everything recorded up to and including the failing tick.
    pub partial: PathResult,
}

impl std::fmt::Display for PathFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "path {} aborted at {}", self.path_index, self.report)
    }
}

/// Mutable state of a single path.
#[derive(Debug, Clone)]
pub struct PathState {
    pub spec: StablecoinSpec,
    pub quadrant: Quadrant,
    pub ledger: Ledger,
    pub market: MarketState,
    pub streams: PathStreams,
    pub trace: Option<Vec<(usize, TickStep)>>,
}

impl PathState {
    /// Noise-free equilibrium start: supply equals total demand, every agent
    /// holds its demand share and, under decentral management, positions
    /// back the supply at the issuance ratio.
    pub fn new(config: &SimConfig, spec: StablecoinSpec, path_index: usize) -> Result<Self, EngineError> {
        let quadrant = spec.quadrant();
        let asset = CollateralAsset::for_quadrant(quadrant);
        let user_demand = spec.equilibrium_user_demand();
        let investor_demand = demand::investor_demand(spec.liquidity_margin, user_demand);
        let supply0 = user_demand + investor_demand;
        let n_users = config.n_users;
        let n_investors = config.n_investors;

        let strip = |w: Wallet| Wallet::new(w.fiat, 0.0, w.collateral);
        let mut agents = Agents {
            users: vec![strip(config.initial_user_wallet); n_users],
            investors: vec![strip(config.initial_investor_wallet); n_investors],
        };
        let wallet_units: f64 = agents.all().map(|w| asset.balance(w)).sum();

        let fee_value = |collateral_supply: f64| {
            pricing::endogenous_collateral_price(
                spec.endo.e,
                user_demand,
                spec.fees,
                spec.endo.z,
                spec.endo.c,
                collateral_supply,
            )
            .map_err(|e| EngineError::Infeasible(e.to_string()))
        };

        let mut issuer = Issuer::default();
        if quadrant.is_central() {
            let ratio = spec.collateral_ratio;
            issuer.reserve = match (config.issuer_reserve, spec.source) {
                (Some(r), _) => r,
                (None, _) if quadrant.is_fiat_backed() => ratio * supply0,
                (None, CollateralSource::Exogenous) => ratio * supply0 / spec.exo.p0,
                (None, CollateralSource::Endogenous) => {
                    // reserve = ratio·S0 / P_C where P_C depends on the reserve
                    // through the collateral supply; solve the fixed point.
                    let k = spec.endo.e * user_demand * spec.fees / (spec.endo.z * spec.endo.c);
                    let need = ratio * supply0;
                    if k <= need {
                        return Err(EngineError::Infeasible(
                            "fee value of the native token cannot back the initial supply".into(),
                        ));
                    }
                    need * wallet_units / (k - need)
                }
            };
            for u in agents.users.iter_mut() {
                u.stablecoin = user_demand / n_users as f64;
            }
            for inv in agents.investors.iter_mut() {
                inv.stablecoin = investor_demand / n_investors as f64;
            }
        }
        let mut ledger = Ledger::new(agents, issuer, asset);
        if quadrant.is_central() {
            ledger.stablecoin_supply = supply0;
        }
        let collateral_supply = ledger.collateral_supply;

        let collateral_price = match (quadrant.is_fiat_backed(), spec.source) {
            (true, _) => 1.0,
            (false, CollateralSource::Exogenous) => spec.exo.p0,
            (false, CollateralSource::Endogenous) => fee_value(collateral_supply)?,
        };

        if quadrant.is_decentral() {
            let share = supply0 / n_investors as f64;
            let Ledger {
                agents,
                book,
                stablecoin_supply,
                ..
            } = &mut ledger;
            for (j, inv) in agents.investors.iter_mut().enumerate() {
                let out = book
                    .open_position(
                        j,
                        share,
                        collateral_price,
                        spec.collateral_ratio,
                        inv,
                        asset,
                        stablecoin_supply,
                    )
                    .map_err(|e| EngineError::Infeasible(e.to_string()))?;
                if (out.minted - share).abs() > 1e-9 * share.max(1.0) {
                    return Err(EngineError::Infeasible(format!(
                        "investor {j} lacks collateral for the initial positions"
                    )));
                }
            }
            // Hand users their share of the initial supply.
            let per_investor = user_demand / n_investors as f64;
            let per_user = user_demand / n_users as f64;
            for inv in agents.investors.iter_mut() {
                inv.stablecoin -= per_investor;
            }
            for u in agents.users.iter_mut() {
                u.stablecoin += per_user;
            }
            ledger.stablecoin_supply = supply0;
            ledger.book.commit_tick();
        }

        let staking_demand = if quadrant.is_decentral() {
            demand::staking_demand(
                spec.staking.f,
                spec.staking.g,
                user_demand,
                spec.fees,
                spec.endo.c,
            )
            .min(spec.demand_upper_bound())
        } else {
            0.0
        };
        let backing = ledger.backing_units(quadrant);
        let market = MarketState {
            t: 0,
            stablecoin_supply: ledger.stablecoin_supply,
            collateral_supply,
            stablecoin_price: PEG,
            collateral_price,
            brownian_value: 0.0,
            user_demand,
            investor_demand,
            staking_demand,
            collateral_level: collateral_level_or_inf(backing, collateral_price, ledger.stablecoin_supply),
        };
        Ok(Self {
            spec,
            quadrant,
            ledger,
            market,
            streams: PathStreams::new(config.seed, path_index as u64),
            trace: None,
        })
    }

    fn trace(&mut self, t: usize, step: TickStep) {
        if let Some(tr) = self.trace.as_mut() {
            tr.push((t, step));
        }
    }

    /// Runs one tick. `s_t` is the shock dummy for this tick. Recorded values
    /// and events are appended to `out`.
    pub fn tick(&mut self, t: usize, s_t: f64, out: &mut PathResult) -> Result<(), ControlReport> {
        let spec = self.spec.clone();
        let q = self.quadrant;
        let asset = self.ledger.asset;
        let bound = spec.demand_upper_bound();
        let mut clamps: Vec<String> = Vec::new();
        let prev = self.market;

        // 1. stablecoin price
        let supply = self.ledger.stablecoin_supply;
        let price = pricing::stablecoin_price(prev.total_demand(), supply).unwrap_or(0.0);
        self.trace(t, TickStep::StablecoinPrice);

        // 2. collateral price
        let mut w = prev.brownian_value;
        let collateral_price = if q.is_fiat_backed() {
            1.0
        } else {
            match spec.source {
                CollateralSource::Exogenous => {
                    if t > 0 {
                        w += brownian_increment(&mut self.streams.brownian, DT);
                    }
                    pricing::exogenous_collateral_price(
                        spec.exo.p0,
                        spec.exo.mu,
                        spec.exo.sigma,
                        t as f64 * DT,
                        w,
                    )
                }
                CollateralSource::Endogenous => pricing::endogenous_collateral_price(
                    spec.endo.e,
                    prev.user_demand,
                    spec.fees,
                    spec.endo.z,
                    spec.endo.c,
                    self.ledger.collateral_supply,
                )
                .unwrap_or(0.0),
            }
        };
        let collateral_price = if collateral_price < 0.0 {
            clamps.push(format!("collateral price {collateral_price} floored at 0"));
            0.0
        } else {
            collateral_price
        };
        self.trace(t, TickStep::CollateralPrice);

        if q.is_decentral() && collateral_price != prev.collateral_price {
            let Ledger {
                agents,
                book,
                stablecoin_supply,
                ..
            } = &mut self.ledger;
            let ids = liquidate_positions(
                book,
                collateral_price,
                spec.liquidation_ratio,
                agents,
                stablecoin_supply,
                asset,
            );
            if !ids.is_empty() {
                out.events.push(Event {
                    step: t,
                    kind: EventKind::Liquidation,
                    detail: format!(
                        "{} position(s) liquidated: {}",
                        ids.len(),
                        ids.iter().map(u64::to_string).collect::<Vec<_>>().join(" ")
                    ),
                });
            }
            self.trace(t, TickStep::Liquidation);
        }
        let backing = self.ledger.backing_units(q);
        let o_t = collateral_level_or_inf(backing, collateral_price, self.ledger.stablecoin_supply);

        // 3. user demand
        let noise = demand_noise(&mut self.streams.demand, spec.demand.m);
        let inputs = DemandInputs {
            a: spec.demand.a,
            b: spec.demand.b,
            d: spec.demand.d,
            fees: spec.fees,
            s_t,
            noise,
            o_t,
            o_crit: spec.demand.o_crit,
            upper_bound: bound,
        };
        let (user_demand, clamp) = demand::user_demand_clamped(&inputs);
        match clamp {
            Clamp::None => {}
            Clamp::Floor => clamps.push(format!("user demand {:.6} floored at 0", inputs.base())),
            Clamp::Ceiling => clamps.push(format!("user demand capped at {bound}")),
        }
        self.trace(t, TickStep::UserDemand);

        // 4. investor demand
        let investor_demand = demand::investor_demand(spec.liquidity_margin, user_demand);
        self.trace(t, TickStep::InvestorDemand);

        // 5. staking demand
        let staking_demand = if q.is_decentral() {
            let raw = demand::staking_demand(
                spec.staking.f,
                spec.staking.g,
                user_demand,
                spec.fees,
                spec.endo.c,
            );
            self.trace(t, TickStep::StakingDemand);
            if raw > bound {
                clamps.push(format!("staking demand {raw:.6} capped at {bound}"));
                bound
            } else {
                raw
            }
        } else {
            0.0
        };

        // 6. investors vs issuer / protocol
        let n_investors = self.ledger.agents.investors.len();
        let target = investor_demand / n_investors as f64;
        let mut issuance = Fill::default();
        {
            let Ledger {
                agents,
                issuer,
                book,
                stablecoin_supply,
                ..
            } = &mut self.ledger;
            for (j, inv) in agents.investors.iter_mut().enumerate() {
                let delta = target - inv.stablecoin;
                if delta.abs() <= settlement::DUST {
                    continue;
                }
                let fill = if q.is_central() {
                    let terms = IssuerTerms {
                        price: PEG,
                        fees: spec.fees,
                        collateral_price,
                        asset,
                    };
                    central_issuer_trade(delta, inv, issuer, stablecoin_supply, &terms)
                } else if delta > 0.0 {
                    let o = book
                        .open_position(
                            j,
                            delta,
                            collateral_price,
                            spec.collateral_ratio,
                            inv,
                            asset,
                            stablecoin_supply,
                        )
                        .expect("positive amount");
                    Fill {
                        requested: delta,
                        filled: o.minted,
                    }
                } else {
                    let burned = book.reduce_owner_debt(j, -delta, inv, asset, stablecoin_supply);
                    Fill {
                        requested: delta,
                        filled: -burned,
                    }
                };
                issuance.requested += fill.requested.abs();
                issuance.filled += fill.filled.abs();
            }
        }
        self.trace(
            t,
            if q.is_central() {
                TickStep::IssuerTrade
            } else {
                TickStep::PositionIssuance
            },
        );
        if issuance.is_partial() {
            out.events.push(Event {
                step: t,
                kind: EventKind::PartialFill,
                detail: format!(
                    "issuance: {:.9} of {:.9} filled",
                    issuance.filled, issuance.requested
                ),
            });
        }

        // 7. users vs investors
        let delta_user = user_demand - self.ledger.agents.user_stablecoins();
        let fill = user_investor_trade(delta_user, &mut self.ledger.agents, price, spec.fees);
        if fill.is_partial() {
            out.events.push(Event {
                step: t,
                kind: EventKind::PartialFill,
                detail: format!("user trade: {:.9} of {:.9} filled", fill.filled, fill.requested),
            });
        }
        self.trace(t, TickStep::UserTrade);

        // 8. staking adjustment
        if q.is_decentral() {
            let delta = staking_demand - prev.staking_demand;
            let Ledger {
                agents,
                book,
                stablecoin_supply,
                ..
            } = &mut self.ledger;
            let fill = adjust_staking(
                delta,
                book,
                agents,
                asset,
                collateral_price,
                spec.collateral_ratio,
                stablecoin_supply,
            );
            if fill.is_partial() {
                out.events.push(Event {
                    step: t,
                    kind: EventKind::PartialFill,
                    detail: format!("staking: {:.9} of {:.9} filled", fill.filled, fill.requested),
                });
            }
            self.trace(t, TickStep::StakingAdjustment);
        }

        // 9. record
        let supply = self.ledger.stablecoin_supply;
        let backing = self.ledger.backing_units(q);
        self.market = MarketState {
            t: t as u64,
            stablecoin_supply: supply,
            collateral_supply: self.ledger.collateral_supply,
            stablecoin_price: price,
            collateral_price,
            brownian_value: w,
            user_demand,
            investor_demand,
            staking_demand,
            collateral_level: collateral_level_or_inf(backing, collateral_price, supply),
        };
        out.record(&self.market);
        self.trace(t, TickStep::Record);

        // 10. controls
        let report = run_controls(t, &self.ledger, &self.market, &spec, &clamps);
        self.trace(t, TickStep::Controls);
        self.ledger.book.commit_tick();
        for c in &report.checks {
            for w in &c.warnings {
                out.events.push(Event {
                    step: t,
                    kind: EventKind::ControlWarning,
                    detail: format!("{}: {}", c.name, w),
                });
            }
        }
        if report.passed() {
            Ok(())
        } else {
            for c in report.failures() {
                out.events.push(Event {
                    step: t,
                    kind: EventKind::ControlFailure,
                    detail: format!("{}: {}", c.name, c.detail),
                });
            }
            Err(report)
        }
    }
}

/// Runs one path of `config` (after applying its sensitivity factor).
pub fn run_path(config: &SimConfig, path_index: usize) -> Result<Result<PathResult, PathFailure>, EngineError> {
    let spec = config.effective_spec()?;
    let state = PathState::new(config, spec, path_index)?;
    Ok(run_from_state(config, state, path_index))
}

/// Like [`run_path`] but also returns the per-tick step trace.
pub fn run_path_traced(
    config: &SimConfig,
    path_index: usize,
) -> Result<(Result<PathResult, PathFailure>, Vec<(usize, TickStep)>), EngineError> {
    let spec = config.effective_spec()?;
    let mut state = PathState::new(config, spec, path_index)?;
    state.trace = Some(Vec::new());
    let mut out = PathResult {
        path_index,
        ..Default::default()
    };
    let mut result = Ok(());
    for t in 0..config.n_steps {
        let s_t = config.scenario.shock_dummy(t, config.shock_step);
        if let Err(report) = state.tick(t, s_t, &mut out) {
            result = Err(PathFailure {
                path_index,
                tick: t,
                report,
                partial: out.clone(),
            });
            break;
        }
    }
    let trace = state.trace.take().unwrap_or_default();
    Ok((result.map(|_| out), trace))
}

fn run_from_state(config: &SimConfig, mut state: PathState, path_index: usize) -> Result<PathResult, PathFailure> {
    let mut out = PathResult {
        path_index,
        ..Default::default()
    };
    for series in [
        &mut out.stablecoin_price,
        &mut out.collateral_price,
        &mut out.user_demand,
        &mut out.investor_demand,
        &mut out.staking_demand,
        &mut out.stablecoin_supply,
        &mut out.collateral_supply,
        &mut out.collateral_level,
    ] {
        series.reserve_exact(config.n_steps);
    }
    for t in 0..config.n_steps {
        let s_t = config.scenario.shock_dummy(t, config.shock_step);
        if let Err(report) = state.tick(t, s_t, &mut out) {
            return Err(PathFailure {
                path_index,
                tick: t,
                report,
                partial: out,
            });
        }
    }
    Ok(out)
}

/// Cross-path statistics of one quantity, per tick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeriesStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub p05: Vec<f64>,
    pub p95: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

impl SeriesStats {
    /// Aggregates the columns of `series` (one row per path). Standard
    /// deviations use the population formula.
    pub fn from_series<'a>(series: impl Iterator<Item = &'a [f64]> + Clone, n_steps: usize) -> Self {
        let mut out = SeriesStats::default();
        let mut column = Vec::new();
        for t in 0..n_steps {
            column.clear();
            column.extend(series.clone().filter_map(|s| s.get(t).copied()));
            if column.is_empty() {
                break;
            }
            let n = column.len() as f64;
            let mean = column.iter().sum::<f64>() / n;
            let var = column.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            column.sort_by(f64::total_cmp);
            out.mean.push(mean);
            out.std.push(var.sqrt());
            out.p05.push(quantile_sorted(&column, 0.05));
            out.p95.push(quantile_sorted(&column, 0.95));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Aggregates {
    pub price: SeriesStats,
    pub demand: SeriesStats,
}

impl Aggregates {
    pub fn from_paths(paths: &[PathResult], n_steps: usize) -> Self {
        Self {
            price: SeriesStats::from_series(paths.iter().map(|p| p.stablecoin_price.as_slice()), n_steps),
            demand: SeriesStats::from_series(paths.iter().map(|p| p.user_demand.as_slice()), n_steps),
        }
    }
}

/// All paths of one configuration plus their aggregates. Paths that failed
/// a control are reported in `failures` and left out of the aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub config: SimConfig,
    pub paths: Vec<PathResult>,
    pub failures: Vec<PathFailure>,
    pub aggregates: Aggregates,
}

impl EnsembleResult {
    pub fn n_steps(&self) -> usize {
        self.config.n_steps
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Runs every path of `config` in parallel. Output does not depend on
/// scheduling: each path owns its random streams and results are collected
/// in path order.
pub fn run_ensemble(config: &SimConfig) -> Result<EnsembleResult, EngineError> {
    config.validate()?;
    let spec = config.effective_spec()?;
    spec.validate()?;
    // Surface infeasible initial states before fanning out.
    PathState::new(config, spec.clone(), 0)?;
    let results: Vec<Result<PathResult, PathFailure>> = (0..config.n_paths)
        .into_par_iter()
        .map(|i| {
            let state = PathState::new(config, spec.clone(), i).expect("checked above");
            run_from_state(config, state, i)
        })
        .collect();
    Ok(collect_ensemble(config, results))
}

/// Assembles an ensemble from per-path results in any order.
pub fn collect_ensemble(config: &SimConfig, mut results: Vec<Result<PathResult, PathFailure>>) -> EnsembleResult {
    results.sort_by_key(|r| match r {
        Ok(p) => p.path_index,
        Err(f) => f.path_index,
    });
    let mut paths = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(p) => paths.push(p),
            Err(f) => failures.push(f),
        }
    }
    let aggregates = Aggregates::from_paths(&paths, config.n_steps);
    EnsembleResult {
        config: config.clone(),
        paths,
        failures,
        aggregates,
    }
}

/// One ensemble per multiplier in [`SENSITIVITY_MULTIPLIERS`], all sharing
/// the master seed so runs are paired.
pub fn run_sensitivity(
    config: &SimConfig,
    factor: SensitivityFactor,
) -> Result<Vec<(f64, EnsembleResult)>, EngineError> {
    config.spec.scaled(factor, 1.0)?;
    SENSITIVITY_MULTIPLIERS
        .iter()
        .map(|&m| run_ensemble(&config.with_sensitivity(factor, m)).map(|e| (m, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::default_config;
    use crate::model::Scenario;

    fn small(q: Quadrant) -> SimConfig {
        SimConfig {
            n_paths: 4,
            n_steps: 60,
            shock_step: 20,
            ..default_config(q)
        }
    }

    fn noise_free(q: Quadrant) -> SimConfig {
        let mut c = small(q);
        c.spec.demand.m = 0.0;
        c.spec.exo.sigma = 0.0;
        c
    }

    #[test]
    fn starts_on_peg() {
        for q in Quadrant::ALL {
            let p = run_path(&small(q), 0).unwrap().unwrap();
            assert!((p.stablecoin_price[0] - 1.0).abs() < 1e-12, "{}", q.label());
        }
    }

    #[test]
    fn noise_free_baseline_is_stationary() {
        for q in Quadrant::ALL {
            let p = run_path(&noise_free(q), 0).unwrap().unwrap();
            let u0 = p.user_demand[0];
            for t in 0..p.len() {
                assert!((p.stablecoin_price[t] - 1.0).abs() < 1e-9, "{} t={t}", q.label());
                assert!((p.user_demand[t] - u0).abs() < 1e-9);
            }
            assert_eq!(p.count_events(EventKind::Liquidation), 0);
        }
    }

    #[test]
    fn same_config_same_path() {
        for q in Quadrant::ALL {
            let c = small(q).with_scenario(Scenario::Negative);
            assert_eq!(run_path(&c, 2).unwrap(), run_path(&c, 2).unwrap());
        }
    }

    #[test]
    fn paths_differ_across_indices() {
        let c = small(Quadrant::ALL[1]);
        let a = run_path(&c, 0).unwrap().unwrap();
        let b = run_path(&c, 1).unwrap().unwrap();
        assert_ne!(a.user_demand, b.user_demand);
    }

    #[test]
    fn tick_follows_the_step_order() {
        let (r, trace) = run_path_traced(&small(Quadrant::ALL[3]), 0).unwrap();
        r.unwrap();
        let tick5: Vec<TickStep> = trace.iter().filter(|(t, _)| *t == 5).map(|(_, s)| *s).collect();
        assert_eq!(
            tick5,
            vec![
                TickStep::StablecoinPrice,
                TickStep::CollateralPrice,
                TickStep::Liquidation,
                TickStep::UserDemand,
                TickStep::InvestorDemand,
                TickStep::StakingDemand,
                TickStep::PositionIssuance,
                TickStep::UserTrade,
                TickStep::StakingAdjustment,
                TickStep::Record,
                TickStep::Controls,
            ]
        );
        let (_, trace) = run_path_traced(&small(Quadrant::ALL[0]), 0).unwrap();
        let tick5: Vec<TickStep> = trace.iter().filter(|(t, _)| *t == 5).map(|(_, s)| *s).collect();
        assert_eq!(
            tick5,
            vec![
                TickStep::StablecoinPrice,
                TickStep::CollateralPrice,
                TickStep::UserDemand,
                TickStep::InvestorDemand,
                TickStep::IssuerTrade,
                TickStep::UserTrade,
                TickStep::Record,
                TickStep::Controls,
            ]
        );
    }

    #[test]
    fn output_lengths_match_steps() {
        let r = run_ensemble(&small(Quadrant::ALL[2])).unwrap();
        assert_eq!(r.paths.len(), 4);
        assert!(r.failures.is_empty());
        for p in &r.paths {
            assert_eq!(p.len(), 60);
            assert_eq!(p.collateral_level.len(), 60);
        }
        assert_eq!(r.aggregates.price.mean.len(), 60);
        assert_eq!(r.aggregates.demand.p95.len(), 60);
    }

    #[test]
    fn ensemble_independent_of_thread_count() {
        let c = small(Quadrant::ALL[1]).with_scenario(Scenario::Negative);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool.install(|| run_ensemble(&c).unwrap());
        let parallel = run_ensemble(&c).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn collect_is_order_insensitive() {
        let c = small(Quadrant::ALL[0]);
        let mut results: Vec<_> = (0..c.n_paths).map(|i| run_path(&c, i).unwrap()).collect();
        let forward = collect_ensemble(&c, results.clone());
        results.reverse();
        assert_eq!(forward, collect_ensemble(&c, results));
    }

    #[test]
    fn unit_multiplier_reproduces_plain_run() {
        let c = small(Quadrant::ALL[3]).with_scenario(Scenario::Negative);
        let plain = run_ensemble(&c).unwrap();
        let sweep = run_sensitivity(&c, SensitivityFactor::Fees).unwrap();
        assert_eq!(sweep.len(), 5);
        let (m, one) = &sweep[2];
        assert_eq!(*m, 1.0);
        assert_eq!(one.paths, plain.paths);
        assert_eq!(one.aggregates, plain.aggregates);
    }

    #[test]
    fn collateral_sweep_on_fiat_backed_is_not_analyzable() {
        let err = run_sensitivity(&small(Quadrant::ALL[0]), SensitivityFactor::CollateralPrice).unwrap_err();
        assert_eq!(err, EngineError::NotAnalyzable(NotAnalyzable));
    }

    #[test]
    fn noise_free_spiral_is_monotone_until_abandonment() {
        let mut c = noise_free(Quadrant::ALL[2]).with_scenario(Scenario::Negative);
        c.n_steps = 200;
        let p = run_path(&c, 0).unwrap().unwrap();
        let o_crit = c.spec.demand.o_crit;
        let start = c.shock_step + 1;
        let mut t = start;
        while t + 1 < p.len() && p.collateral_level[t] >= o_crit {
            assert!(
                p.collateral_level[t + 1] <= p.collateral_level[t] + 1e-12,
                "collateral level rose at t={t}"
            );
            t += 1;
        }
        assert!(p.collateral_level[t] < o_crit, "never crossed o_crit");
        assert_eq!(*p.user_demand.last().unwrap(), 0.0);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 1.0), 5.0);
        assert!((quantile_sorted(&v, 0.05) - 1.2).abs() < 1e-12);
        assert!(quantile_sorted(&[], 0.5).is_nan());
    }

    #[test]
    fn stats_use_population_std() {
        let rows = [vec![1.0, 0.0], vec![3.0, 0.0]];
        let s = SeriesStats::from_series(rows.iter().map(|r| r.as_slice()), 2);
        assert_eq!(s.mean, vec![2.0, 0.0]);
        assert_eq!(s.std, vec![1.0, 0.0]);
    }

    #[test]
    fn infeasible_reserve_is_reported() {
        let mut c = small(Quadrant::ALL[2]);
        c.issuer_reserve = None;
        c.spec.collateral_ratio = 50.0;
        assert!(matches!(PathState::new(&c, c.spec.clone(), 0), Err(EngineError::Infeasible(_))));
    }
}
