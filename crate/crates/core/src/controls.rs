//! End-of-tick controls: supply conservation, sanity of prices and demand,
//! and reconciliation of debt positions against their journal.
//!
//! Checks only read state. Conservation and position failures are bugs and
//! abort the path; clamped demand is a model feature and shows up as a
//! warning on an otherwise passing sanity check.

use std::fmt;

use crate::model::{MarketState, StablecoinSpec};
use crate::settlement::{expected_positions, Ledger, PositionBook};

/// Relative tolerance for balance reconciliation (absolute below 1 USD).
pub const CONSERVATION_TOL: f64 = 1e-9;

pub fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= CONSERVATION_TOL * 1f64.max(a.abs()).max(b.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub warnings: Vec<String>,
}

impl CheckResult {
    fn pass(name: &'static str) -> Self {
        Self {
            name,
            passed: true,
            detail: String::new(),
            warnings: Vec::new(),
        }
    }

    fn fail(name: &'static str, detail: String) -> Self {
        debug_assert!(!detail.is_empty());
        Self {
            name,
            passed: false,
            detail,
            warnings: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlReport {
    pub tick: usize,
    pub checks: Vec<CheckResult>,
}

impl ControlReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for ControlReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tick {}:", self.tick)?;
        for c in &self.checks {
            let status = if c.passed { "ok" } else { "FAILED" };
            write!(f, " {}={}", c.name, status)?;
            if !c.passed {
                write!(f, " ({})", c.detail)?;
            }
        }
        Ok(())
    }
}

pub const SUPPLY_CONSERVATION: &str = "supply_conservation";
pub const SANITY: &str = "sanity";
pub const POSITIONS: &str = "positions";

/// Recorded supply of each asset must equal what agents, the issuer pool,
/// and open positions hold; no wallet may be negative.
pub fn check_supply_conservation(ledger: &Ledger) -> CheckResult {
    let mut problems = Vec::new();
    let pairs = [
        ("stablecoin", ledger.stablecoin_supply, ledger.held_stablecoins()),
        ("collateral", ledger.collateral_supply, ledger.held_collateral()),
        ("fiat", ledger.fiat_supply, ledger.held_fiat()),
    ];
    for (asset, recorded, held) in pairs {
        if !approx_eq(recorded, held) {
            problems.push(format!("{asset}: supply {recorded:.12} != held {held:.12}"));
        }
    }
    let tol = CONSERVATION_TOL;
    for (kind, wallets) in [("user", &ledger.agents.users), ("investor", &ledger.agents.investors)] {
        for (i, w) in wallets.iter().enumerate() {
            if w.fiat < -tol || w.stablecoin < -tol || w.collateral < -tol {
                problems.push(format!("{kind} {i} has a negative balance: {w:?}"));
            }
        }
    }
    if ledger.issuer.reserve < -tol {
        problems.push("issuer reserve negative".to_string());
    }
    if problems.is_empty() {
        CheckResult::pass(SUPPLY_CONSERVATION)
    } else {
        CheckResult::fail(SUPPLY_CONSERVATION, problems.join("; "))
    }
}

/// Prices must be finite and non-negative, demand finite and within
/// `[0, bound]`. `clamps` lists clamping events from earlier in the tick;
/// they become warnings.
pub fn check_sanity(market: &MarketState, spec: &StablecoinSpec, clamps: &[String]) -> CheckResult {
    let bound = spec.demand_upper_bound();
    let l = spec.liquidity_margin;
    let values = [
        ("stablecoin_price", market.stablecoin_price, f64::INFINITY),
        ("collateral_price", market.collateral_price, f64::INFINITY),
        ("user_demand", market.user_demand, bound),
        ("investor_demand", market.investor_demand, bound + l),
        ("staking_demand", market.staking_demand, bound),
    ];
    let mut problems = Vec::new();
    for (name, v, upper) in values {
        if !v.is_finite() {
            problems.push(format!("{name} is not finite ({v})"));
        } else if v < 0.0 || v > upper {
            problems.push(format!("{name} = {v} outside [0, {upper}]"));
        }
    }
    if market.collateral_level.is_nan() {
        problems.push("collateral_level is NaN".to_string());
    }
    if market.stablecoin_supply.is_nan() || market.stablecoin_supply < 0.0 {
        problems.push(format!("stablecoin_supply = {}", market.stablecoin_supply));
    }
    let mut result = if problems.is_empty() {
        CheckResult::pass(SANITY)
    } else {
        CheckResult::fail(SANITY, problems.join("; "))
    };
    result.warnings = clamps.to_vec();
    result
}

/// Every open position must match the journal-derived expectation, and open
/// debt must add up to the circulating supply.
pub fn check_positions(book: &PositionBook, stablecoin_supply: f64) -> CheckResult {
    let expected = expected_positions(book);
    let mut problems = Vec::new();
    let mut seen = 0usize;
    for p in book.open_positions() {
        seen += 1;
        match expected.get(&p.id) {
            None => problems.push(format!("position {} has no issuance record", p.id)),
            Some(&(debt, coll)) => {
                if !approx_eq(debt, p.debt) || !approx_eq(coll, p.locked_collateral) {
                    problems.push(format!(
                        "position {} holds debt {} / collateral {}, journal says {} / {}",
                        p.id, p.debt, p.locked_collateral, debt, coll
                    ));
                }
                if !(p.debt > 0.0) || !(p.locked_collateral >= 0.0) {
                    problems.push(format!("position {} has non-positive debt", p.id));
                }
            }
        }
    }
    if seen != expected.len() {
        for id in expected.keys() {
            if book.get(*id).is_none_or(|p| !p.open) {
                problems.push(format!("position {id} missing from the book"));
            }
        }
    }
    let debt = book.total_debt();
    if !approx_eq(debt, stablecoin_supply) {
        problems.push(format!(
            "open debt {debt:.12} != stablecoin supply {stablecoin_supply:.12}"
        ));
    }
    if problems.is_empty() {
        CheckResult::pass(POSITIONS)
    } else {
        CheckResult::fail(POSITIONS, problems.join("; "))
    }
}

/// Runs all applicable checks.
pub fn run_controls(
    tick: usize,
    ledger: &Ledger,
    market: &MarketState,
    spec: &StablecoinSpec,
    clamps: &[String],
) -> ControlReport {
    let mut checks = vec![
        check_supply_conservation(ledger),
        check_sanity(market, spec, clamps),
    ];
    if spec.quadrant().is_decentral() {
        checks.push(check_positions(&ledger.book, ledger.stablecoin_supply));
    }
    ControlReport { tick, checks }
}
