//! Asset movements for one tick: issuer trades under central management,
//! debt positions under decentral management, user/investor trades and
//! liquidations.
//!
//! Nothing here aborts on insufficient balances. Every operation fills as
//! much as the counterparties can afford and reports the fill.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{Quadrant, Wallet};

/// Amounts below this are treated as zero when closing positions.
pub const DUST: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SettlementError {
    #[error("positions must have positive debt")]
    ZeroAmount,
    #[error("position {0} does not exist")]
    UnknownPosition(u64),
    #[error("position {0} already closed")]
    AlreadyClosed(u64),
}

/// Which wallet balance holds the collateral asset. For fiat-backed coins
/// the collateral is the reference currency itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollateralAsset {
    Fiat,
    Token,
}

impl CollateralAsset {
    pub fn for_quadrant(q: Quadrant) -> Self {
        if q.is_fiat_backed() {
            Self::Fiat
        } else {
            Self::Token
        }
    }

    pub fn balance(self, w: &Wallet) -> f64 {
        match self {
            Self::Fiat => w.fiat,
            Self::Token => w.collateral,
        }
    }

    pub fn balance_mut(self, w: &mut Wallet) -> &mut f64 {
        match self {
            Self::Fiat => &mut w.fiat,
            Self::Token => &mut w.collateral,
        }
    }
}

/// Requested versus executed size of a trade, in stablecoin units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Fill {
    pub requested: f64,
    pub filled: f64,
}

impl Fill {
    pub fn none(requested: f64) -> Self {
        Self {
            requested,
            filled: 0.0,
        }
    }

    pub fn is_partial(&self) -> bool {
        self.requested.abs() - self.filled.abs() > 1e-9
    }
}

/// Users and investors of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct Agents {
    pub users: Vec<Wallet>,
    pub investors: Vec<Wallet>,
}

impl Agents {
    pub fn all(&self) -> impl Iterator<Item = &Wallet> {
        self.users.iter().chain(self.investors.iter())
    }

    pub fn investor_stablecoins(&self) -> f64 {
        self.investors.iter().map(|w| w.stablecoin).sum()
    }

    pub fn user_stablecoins(&self) -> f64 {
        self.users.iter().map(|w| w.stablecoin).sum()
    }
}

/// Pooled collateral of a central issuer. Fees charged on issuer trades stay
/// in the pool.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Issuer {
    pub reserve: f64,
}

/// Pricing of an issuer trade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IssuerTerms {
    /// USD per stablecoin the issuer honours.
    pub price: f64,
    pub fees: f64,
    pub collateral_price: f64,
    pub asset: CollateralAsset,
}

/// Mint (`delta > 0`) or redeem (`delta < 0`) stablecoins against the
/// issuer's pool. Minting costs `delta·price·(1+fees)` USD of collateral;
/// redeeming pays `|delta|·price·(1-fees)` USD of collateral out of the pool.
pub fn central_issuer_trade(
    delta: f64,
    investor: &mut Wallet,
    issuer: &mut Issuer,
    supply: &mut f64,
    terms: &IssuerTerms,
) -> Fill {
    if delta == 0.0 {
        return Fill::default();
    }
    let asset = terms.asset;
    if delta > 0.0 {
        let unit_cost = terms.price * (1.0 + terms.fees);
        if unit_cost > 0.0 && terms.collateral_price <= 0.0 {
            return Fill::none(delta);
        }
        let units_per_coin = if unit_cost > 0.0 {
            unit_cost / terms.collateral_price
        } else {
            0.0
        };
        let balance = asset.balance(investor);
        let affordable = if units_per_coin > 0.0 {
            balance / units_per_coin
        } else {
            f64::INFINITY
        };
        let filled = delta.min(affordable);
        let paid = (filled * units_per_coin).min(balance);
        *asset.balance_mut(investor) -= paid;
        issuer.reserve += paid;
        investor.stablecoin += filled;
        *supply += filled;
        Fill {
            requested: delta,
            filled,
        }
    } else {
        let wanted = (-delta).min(investor.stablecoin);
        let payout_value = terms.price * (1.0 - terms.fees);
        let filled = if payout_value <= 0.0 {
            wanted
        } else if terms.collateral_price <= 0.0 {
            0.0
        } else {
            let units_per_coin = payout_value / terms.collateral_price;
            wanted.min(issuer.reserve / units_per_coin)
        };
        let paid = if payout_value > 0.0 && filled > 0.0 {
            (filled * payout_value / terms.collateral_price).min(issuer.reserve)
        } else {
            0.0
        };
        investor.stablecoin -= filled;
        *supply -= filled;
        issuer.reserve -= paid;
        *asset.balance_mut(investor) += paid;
        Fill {
            requested: delta,
            filled: -filled,
        }
    }
}

/// One collateralized debt position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollateralPosition {
    pub id: u64,
    /// Investor index.
    pub owner: usize,
    pub locked_collateral: f64,
    pub debt: f64,
    pub open: bool,
}

impl CollateralPosition {
    pub fn ratio(&self, collateral_price: f64) -> f64 {
        self.locked_collateral * collateral_price / self.debt
    }
}

/// Journal entry for every mutation of the book.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PositionEntry {
    Opened {
        id: u64,
        owner: usize,
        debt: f64,
        collateral: f64,
    },
    Repaid {
        id: u64,
        debt: f64,
        collateral: f64,
    },
    Liquidated {
        id: u64,
        debt: f64,
        collateral: f64,
    },
}

impl PositionEntry {
    pub fn id(&self) -> u64 {
        match *self {
            Self::Opened { id, .. } | Self::Repaid { id, .. } | Self::Liquidated { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpenOutcome {
    pub id: Option<u64>,
    pub minted: f64,
    pub locked: f64,
    pub requested: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolveOutcome {
    Resolved { debt: f64, collateral: f64 },
    /// The owner could not cover the debt; the position stays open.
    Deferred,
}

/// Ordered collection of debt positions plus the journal of this tick.
///
/// `reconciled` holds the expected `(debt, collateral)` of every open
/// position as of the last committed tick; the journal describes everything
/// that happened since.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PositionBook {
    positions: Vec<CollateralPosition>,
    next_id: u64,
    journal: Vec<PositionEntry>,
    reconciled: BTreeMap<u64, (f64, f64)>,
}

impl PositionBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open_positions(&self) -> impl Iterator<Item = &CollateralPosition> {
        self.positions.iter().filter(|p| p.open)
    }

    pub fn get(&self, id: u64) -> Option<&CollateralPosition> {
        self.index_of(id).map(|i| &self.positions[i])
    }

    /// Direct mutable access, bypassing the journal. Intended for tests that
    /// inject faults.
    pub fn get_mut_unchecked(&mut self, id: u64) -> Option<&mut CollateralPosition> {
        self.index_of(id).map(move |i| &mut self.positions[i])
    }

    pub fn total_debt(&self) -> f64 {
        self.open_positions().map(|p| p.debt).sum()
    }

    pub fn total_locked(&self) -> f64 {
        self.open_positions().map(|p| p.locked_collateral).sum()
    }

    pub fn len_open(&self) -> usize {
        self.open_positions().count()
    }

    pub fn journal(&self) -> &[PositionEntry] {
        &self.journal
    }

    pub fn reconciled(&self) -> &BTreeMap<u64, (f64, f64)> {
        &self.reconciled
    }

    fn index_of(&self, id: u64) -> Option<usize> {
        self.positions.binary_search_by_key(&id, |p| p.id).ok()
    }

    /// Folds the journal into the reconciled snapshot and drops closed
    /// positions.
    pub fn commit_tick(&mut self) {
        for entry in self.journal.drain(..) {
            apply_entry(&mut self.reconciled, &entry);
        }
        self.positions.retain(|p| p.open);
    }

    /// Locks `amount · collateral_ratio / collateral_price` units and mints
    /// `amount` stablecoins to the owner. Issuance is scaled down to what
    /// the owner's collateral supports.
    #[allow(clippy::too_many_arguments)]
    pub fn open_position(
        &mut self,
        owner: usize,
        amount: f64,
        collateral_price: f64,
        collateral_ratio: f64,
        wallet: &mut Wallet,
        asset: CollateralAsset,
        supply: &mut f64,
    ) -> Result<OpenOutcome, SettlementError> {
        if !(amount > 0.0) {
            return Err(SettlementError::ZeroAmount);
        }
        let none = OpenOutcome {
            id: None,
            minted: 0.0,
            locked: 0.0,
            requested: amount,
        };
        if !(collateral_price > 0.0) {
            return Ok(none);
        }
        let units_per_coin = collateral_ratio / collateral_price;
        let balance = asset.balance(wallet);
        let minted = amount.min(balance / units_per_coin);
        if minted <= DUST {
            return Ok(none);
        }
        let locked = (minted * units_per_coin).min(balance);
        *asset.balance_mut(wallet) -= locked;
        wallet.stablecoin += minted;
        *supply += minted;
        let id = self.next_id;
        self.next_id += 1;
        self.positions.push(CollateralPosition {
            id,
            owner,
            locked_collateral: locked,
            debt: minted,
            open: true,
        });
        self.journal.push(PositionEntry::Opened {
            id,
            owner,
            debt: minted,
            collateral: locked,
        });
        Ok(OpenOutcome {
            id: Some(id),
            minted,
            locked,
            requested: amount,
        })
    }

    fn lookup(&self, id: u64) -> Result<usize, SettlementError> {
        match self.index_of(id) {
            Some(i) if self.positions[i].open => Ok(i),
            Some(_) => Err(SettlementError::AlreadyClosed(id)),
            None if id < self.next_id => Err(SettlementError::AlreadyClosed(id)),
            None => Err(SettlementError::UnknownPosition(id)),
        }
    }

    /// Burns the full debt from the owner's wallet and releases the locked
    /// collateral. Deferred when the owner holds too few stablecoins.
    pub fn resolve_position(
        &mut self,
        id: u64,
        wallet: &mut Wallet,
        asset: CollateralAsset,
        supply: &mut f64,
    ) -> Result<ResolveOutcome, SettlementError> {
        let i = self.lookup(id)?;
        let p = self.positions[i];
        if wallet.stablecoin < p.debt {
            return Ok(ResolveOutcome::Deferred);
        }
        wallet.stablecoin -= p.debt;
        *asset.balance_mut(wallet) += p.locked_collateral;
        *supply -= p.debt;
        self.positions[i].open = false;
        self.journal.push(PositionEntry::Repaid {
            id,
            debt: p.debt,
            collateral: p.locked_collateral,
        });
        Ok(ResolveOutcome::Resolved {
            debt: p.debt,
            collateral: p.locked_collateral,
        })
    }

    /// Repays up to `amount` of `owner`'s debt, oldest position first. A
    /// partially repaid position keeps its id and releases collateral in
    /// proportion. Returns the debt actually burned.
    pub fn reduce_owner_debt(
        &mut self,
        owner: usize,
        amount: f64,
        wallet: &mut Wallet,
        asset: CollateralAsset,
        supply: &mut f64,
    ) -> f64 {
        let mut remaining = amount.min(wallet.stablecoin);
        let mut burned = 0.0;
        for p in self.positions.iter_mut() {
            if remaining <= DUST {
                break;
            }
            if !p.open || p.owner != owner {
                continue;
            }
            let (debt, collateral) = if remaining >= p.debt - DUST {
                p.open = false;
                (p.debt, p.locked_collateral)
            } else {
                let share = remaining / p.debt;
                (remaining, p.locked_collateral * share)
            };
            if p.open {
                p.debt -= debt;
                p.locked_collateral -= collateral;
            }
            wallet.stablecoin = (wallet.stablecoin - debt).max(0.0);
            *asset.balance_mut(wallet) += collateral;
            *supply -= debt;
            remaining -= debt;
            burned += debt;
            self.journal.push(PositionEntry::Repaid {
                id: p.id,
                debt,
                collateral,
            });
        }
        burned
    }
}

fn apply_entry(map: &mut BTreeMap<u64, (f64, f64)>, entry: &PositionEntry) {
    match *entry {
        PositionEntry::Opened {
            id,
            debt,
            collateral,
            ..
        } => {
            map.insert(id, (debt, collateral));
        }
        PositionEntry::Repaid {
            id,
            debt,
            collateral,
        }
        | PositionEntry::Liquidated {
            id,
            debt,
            collateral,
        } => {
            if let Some(v) = map.get_mut(&id) {
                v.0 -= debt;
                v.1 -= collateral;
                if v.0 <= DUST {
                    map.remove(&id);
                }
            }
        }
    }
}

/// Expected `(debt, collateral)` of each open position: the reconciled
/// snapshot with the pending journal applied.
pub fn expected_positions(book: &PositionBook) -> BTreeMap<u64, (f64, f64)> {
    let mut map = book.reconciled.clone();
    for e in &book.journal {
        apply_entry(&mut map, e);
    }
    map
}

/// Closes every open position whose collateralization fell below
/// `liquidation_ratio`. The debt is burned: first from the owner's
/// stablecoins, then pro rata from the other holders, who are compensated at
/// par out of the seized collateral. Whatever collateral remains returns to
/// the owner.
#[allow(clippy::too_many_arguments)]
pub fn liquidate_positions(
    book: &mut PositionBook,
    collateral_price: f64,
    liquidation_ratio: f64,
    agents: &mut Agents,
    supply: &mut f64,
    asset: CollateralAsset,
) -> Vec<u64> {
    let mut liquidated = Vec::new();
    for i in 0..book.positions.len() {
        let p = book.positions[i];
        if !p.open || p.ratio(collateral_price) >= liquidation_ratio {
            continue;
        }
        book.positions[i].open = false;
        let mut seized = p.locked_collateral;

        let owner = &mut agents.investors[p.owner];
        let from_owner = p.debt.min(owner.stablecoin);
        owner.stablecoin -= from_owner;
        let mut shortfall = p.debt - from_owner;
        let mut burned = from_owner;

        if shortfall > DUST {
            let comp_per_coin = if collateral_price > 0.0 {
                1.0 / collateral_price
            } else {
                0.0
            };
            // Other investors first, then users.
            for group in 0..2 {
                if shortfall <= DUST {
                    break;
                }
                let wallets: Vec<&mut Wallet> = if group == 0 {
                    agents
                        .investors
                        .iter_mut()
                        .enumerate()
                        .filter(|(j, _)| *j != p.owner)
                        .map(|(_, w)| w)
                        .collect()
                } else {
                    agents.users.iter_mut().collect()
                };
                let held: f64 = wallets.iter().map(|w| w.stablecoin).sum();
                if held <= 0.0 {
                    continue;
                }
                let take = shortfall.min(held);
                let comp_total = (take * comp_per_coin).min(seized);
                for w in wallets {
                    let share = w.stablecoin / held;
                    w.stablecoin -= (take * share).min(w.stablecoin);
                    *asset.balance_mut(w) += comp_total * share;
                }
                seized -= comp_total;
                shortfall -= take;
                burned += take;
            }
        }
        *asset.balance_mut(&mut agents.investors[p.owner]) += seized;
        *supply -= burned;
        book.journal.push(PositionEntry::Liquidated {
            id: p.id,
            debt: p.debt,
            collateral: p.locked_collateral,
        });
        liquidated.push(p.id);
    }
    liquidated
}

/// Secondary-market trade between users and investors; supply is unchanged.
///
/// `delta > 0`: users buy `delta` coins in equal shares from investors, who
/// deliver pro rata to their inventory. `delta < 0`: users sell to investors,
/// who buy pro rata to their fiat. Users pay the fee either way.
pub fn user_investor_trade(delta: f64, agents: &mut Agents, price: f64, fees: f64) -> Fill {
    if delta == 0.0 {
        return Fill::default();
    }
    let n_users = agents.users.len() as f64;
    if delta > 0.0 {
        let unit_cost = price * (1.0 + fees);
        let share = delta / n_users;
        let mut wants: Vec<f64> = agents
            .users
            .iter()
            .map(|u| {
                if unit_cost > 0.0 {
                    share.min(u.fiat / unit_cost)
                } else {
                    share
                }
            })
            .collect();
        let wanted: f64 = wants.iter().sum();
        let inventory = agents.investor_stablecoins();
        if wanted > inventory {
            let k = if wanted > 0.0 { inventory / wanted } else { 0.0 };
            wants.iter_mut().for_each(|w| *w *= k);
        }
        let filled: f64 = wants.iter().sum();
        if filled <= 0.0 || inventory <= 0.0 {
            return Fill::none(delta);
        }
        for (u, q) in agents.users.iter_mut().zip(&wants) {
            u.stablecoin += q;
            u.fiat -= (q * unit_cost).min(u.fiat);
        }
        let revenue = filled * unit_cost;
        for inv in agents.investors.iter_mut() {
            let w = inv.stablecoin / inventory;
            inv.stablecoin -= (filled * w).min(inv.stablecoin);
            inv.fiat += revenue * w;
        }
        Fill {
            requested: delta,
            filled,
        }
    } else {
        let proceeds_per_coin = price * (1.0 - fees);
        let share = -delta / n_users;
        let mut offers: Vec<f64> = agents.users.iter().map(|u| share.min(u.stablecoin)).collect();
        let offered: f64 = offers.iter().sum();
        let budget: f64 = agents.investors.iter().map(|w| w.fiat).sum();
        let cost = offered * proceeds_per_coin;
        if cost > budget {
            let k = budget / cost;
            offers.iter_mut().for_each(|o| *o *= k);
        }
        let filled: f64 = offers.iter().sum();
        if filled <= 0.0 {
            return Fill::none(delta);
        }
        let payment = filled * proceeds_per_coin;
        let n_investors = agents.investors.len() as f64;
        for (u, q) in agents.users.iter_mut().zip(&offers) {
            u.stablecoin -= q.min(u.stablecoin);
            u.fiat += q * proceeds_per_coin;
        }
        for inv in agents.investors.iter_mut() {
            let w = if budget > 0.0 {
                inv.fiat / budget
            } else {
                1.0 / n_investors
            };
            inv.stablecoin += filled * w;
            inv.fiat -= (payment * w).min(inv.fiat);
        }
        Fill {
            requested: delta,
            filled: -filled,
        }
    }
}

/// Spreads a staking change evenly across investors: positive changes open
/// new positions, negative changes repay existing ones oldest first.
pub fn adjust_staking(
    delta: f64,
    book: &mut PositionBook,
    agents: &mut Agents,
    asset: CollateralAsset,
    collateral_price: f64,
    collateral_ratio: f64,
    supply: &mut f64,
) -> Fill {
    if delta == 0.0 {
        return Fill::default();
    }
    let share = delta / agents.investors.len() as f64;
    let mut filled = 0.0;
    for (j, inv) in agents.investors.iter_mut().enumerate() {
        if share > 0.0 {
            if let Ok(o) =
                book.open_position(j, share, collateral_price, collateral_ratio, inv, asset, supply)
            {
                filled += o.minted;
            }
        } else {
            filled -= book.reduce_owner_debt(j, -share, inv, asset, supply);
        }
    }
    Fill {
        requested: delta,
        filled,
    }
}

/// Every balance of one path, plus the recorded supplies the controls
/// reconcile against.
#[derive(Debug, Clone, PartialEq)]
pub struct Ledger {
    pub agents: Agents,
    pub issuer: Issuer,
    pub book: PositionBook,
    pub asset: CollateralAsset,
    pub stablecoin_supply: f64,
    /// Units of the collateral asset in existence. Equals `fiat_supply` when
    /// the collateral is fiat.
    pub collateral_supply: f64,
    pub fiat_supply: f64,
}

impl Ledger {
    /// Builds a ledger whose recorded supplies are the sums of the initial
    /// holdings.
    pub fn new(agents: Agents, issuer: Issuer, asset: CollateralAsset) -> Self {
        let mut ledger = Self {
            agents,
            issuer,
            book: PositionBook::new(),
            asset,
            stablecoin_supply: 0.0,
            collateral_supply: 0.0,
            fiat_supply: 0.0,
        };
        ledger.stablecoin_supply = ledger.held_stablecoins();
        ledger.collateral_supply = ledger.held_collateral();
        ledger.fiat_supply = ledger.held_fiat();
        ledger
    }

    pub fn held_stablecoins(&self) -> f64 {
        self.agents.all().map(|w| w.stablecoin).sum()
    }

    /// Collateral units across wallets, the issuer pool and open positions.
    pub fn held_collateral(&self) -> f64 {
        let wallets: f64 = self.agents.all().map(|w| self.asset.balance(w)).sum();
        wallets + self.issuer.reserve + self.book.total_locked()
    }

    pub fn held_fiat(&self) -> f64 {
        match self.asset {
            CollateralAsset::Fiat => self.held_collateral(),
            CollateralAsset::Token => self.agents.all().map(|w| w.fiat).sum(),
        }
    }

    /// Collateral units backing the coin: the issuer pool under central
    /// management, locked position collateral under decentral management.
    pub fn backing_units(&self, quadrant: Quadrant) -> f64 {
        if quadrant.is_central() {
            self.issuer.reserve
        } else {
            self.book.total_locked()
        }
    }
}
