//! Experiment configuration files.
//!
//! Files are TOML with the sections below. Every key is optional; omitted
//! keys are taken from the shipped calibration of the file's quadrant.
//!
//! ```toml
//! [coin]
//! source = "endogenous"        # exogenous | endogenous
//! management = "central"       # central | decentral
//! fees = 0.01
//! collateral_ratio = 1.0
//! liquidation_ratio = 1.0
//!
//! [demand]
//! a = 101.0
//! b = 100.0
//! d = 30.0
//! m = 2.0
//! o_crit = 0.5
//! l = 2.0
//!
//! [exogenous]
//! p0 = 1.0
//! mu = 0.0
//! sigma = 0.02
//!
//! [endogenous]
//! e = 1.0
//! z = 0.05
//! c = 0.05
//!
//! [staking]
//! f = 0.0
//! g = 15.0
//!
//! [simulation]
//! n_paths = 50
//! n_steps = 500
//! seed = 42
//! scenario = "baseline"        # baseline | negative | positive
//! shock_step = 100
//! n_users = 10
//! n_investors = 5
//!
//! [wallets.user]
//! fiat = 1000.0
//! collateral = 0.0
//!
//! [wallets.investor]
//! fiat = 10000.0
//! collateral = 1000.0
//!
//! [issuer]
//! reserve = 250.0              # central designs; omit to size from collateral_ratio
//!
//! [output]
//! dir = "out"
//! charts = true
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration;
use crate::model::{
    CollateralManagement, CollateralSource, DemandParams, EndoCollateralParams,
    ExoCollateralParams, Quadrant, Scenario, SimConfig, StablecoinSpec, StakingParams,
    ValidationError, Wallet,
};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "STABLESIM_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{origin}: line {line}: {message}")]
    Parse {
        origin: String,
        line: usize,
        message: String,
    },
    #[error("{origin}: missing key `{key}`")]
    Missing { origin: String, key: &'static str },
    #[error("invalid configuration: {0}")]
    Invalid(#[from] ValidationError),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoinSection {
    pub source: Option<CollateralSource>,
    pub management: Option<CollateralManagement>,
    pub fees: Option<f64>,
    pub collateral_ratio: Option<f64>,
    pub liquidation_ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSection {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub d: Option<f64>,
    pub m: Option<f64>,
    pub o_crit: Option<f64>,
    pub l: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExogenousSection {
    pub p0: Option<f64>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndogenousSection {
    pub e: Option<f64>,
    pub z: Option<f64>,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StakingSection {
    pub f: Option<f64>,
    pub g: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub n_paths: Option<usize>,
    pub n_steps: Option<usize>,
    pub seed: Option<u64>,
    pub scenario: Option<Scenario>,
    pub shock_step: Option<usize>,
    pub n_users: Option<usize>,
    pub n_investors: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalletSection {
    pub fiat: Option<f64>,
    pub collateral: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalletsSection {
    pub user: Option<WalletSection>,
    pub investor: Option<WalletSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IssuerSection {
    pub reserve: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub charts: Option<bool>,
}

/// A configuration file as written, before defaults are filled in.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub coin: Option<CoinSection>,
    pub demand: Option<DemandSection>,
    pub exogenous: Option<ExogenousSection>,
    pub endogenous: Option<EndogenousSection>,
    pub staking: Option<StakingSection>,
    pub simulation: Option<SimulationSection>,
    pub wallets: Option<WalletsSection>,
    pub issuer: Option<IssuerSection>,
    pub output: Option<OutputSection>,
}

/// A validated experiment: the simulation plus output settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub sim: SimConfig,
    pub output_dir: PathBuf,
    pub charts: bool,
}

pub const DEFAULT_OUTPUT_DIR: &str = "out";

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_error(origin: &str, text: &str, e: toml::de::Error) -> ConfigError {
    let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
    ConfigError::Parse {
        origin: origin.to_string(),
        line,
        message: e.message().to_string(),
    }
}

/// Parses `text` without filling defaults. Unknown sections or keys are
/// rejected with their name and line.
pub fn parse(origin: &str, text: &str) -> Result<ConfigFile, ConfigError> {
    toml::from_str(text).map_err(|e| parse_error(origin, text, e))
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

macro_rules! req {
    ($origin:expr, $opt:expr, $key:literal) => {
        $opt.ok_or_else(|| ConfigError::Missing {
            origin: $origin.to_string(),
            key: $key,
        })?
    };
}

impl ConfigFile {
    pub fn quadrant(&self) -> Option<Quadrant> {
        let coin = self.coin.as_ref()?;
        Some(Quadrant::new(coin.source?, coin.management?))
    }

    /// Converts a file in which every key is present. `issuer.reserve` and
    /// the `[output]` section may still be omitted.
    pub fn into_experiment(self, origin: &str) -> Result<ExperimentSpec, ConfigError> {
        let coin = self.coin.unwrap_or_default();
        let demand = self.demand.unwrap_or_default();
        let exo = self.exogenous.unwrap_or_default();
        let endo = self.endogenous.unwrap_or_default();
        let staking = self.staking.unwrap_or_default();
        let sim = self.simulation.unwrap_or_default();
        let wallets = self.wallets.unwrap_or_default();
        let user = wallets.user.unwrap_or_default();
        let investor = wallets.investor.unwrap_or_default();
        let output = self.output.unwrap_or_default();

        let spec = StablecoinSpec {
            source: req!(origin, coin.source, "coin.source"),
            management: req!(origin, coin.management, "coin.management"),
            demand: DemandParams {
                a: req!(origin, demand.a, "demand.a"),
                b: req!(origin, demand.b, "demand.b"),
                d: req!(origin, demand.d, "demand.d"),
                m: req!(origin, demand.m, "demand.m"),
                o_crit: req!(origin, demand.o_crit, "demand.o_crit"),
            },
            fees: req!(origin, coin.fees, "coin.fees"),
            liquidity_margin: req!(origin, demand.l, "demand.l"),
            exo: ExoCollateralParams {
                p0: req!(origin, exo.p0, "exogenous.p0"),
                mu: req!(origin, exo.mu, "exogenous.mu"),
                sigma: req!(origin, exo.sigma, "exogenous.sigma"),
            },
            endo: EndoCollateralParams {
                e: req!(origin, endo.e, "endogenous.e"),
                z: req!(origin, endo.z, "endogenous.z"),
                c: req!(origin, endo.c, "endogenous.c"),
            },
            staking: StakingParams {
                f: req!(origin, staking.f, "staking.f"),
                g: req!(origin, staking.g, "staking.g"),
            },
            collateral_ratio: req!(origin, coin.collateral_ratio, "coin.collateral_ratio"),
            liquidation_ratio: req!(origin, coin.liquidation_ratio, "coin.liquidation_ratio"),
        };
        let config = SimConfig {
            spec,
            n_paths: req!(origin, sim.n_paths, "simulation.n_paths"),
            n_steps: req!(origin, sim.n_steps, "simulation.n_steps"),
            seed: req!(origin, sim.seed, "simulation.seed"),
            scenario: req!(origin, sim.scenario, "simulation.scenario"),
            shock_step: req!(origin, sim.shock_step, "simulation.shock_step"),
            n_users: req!(origin, sim.n_users, "simulation.n_users"),
            n_investors: req!(origin, sim.n_investors, "simulation.n_investors"),
            initial_user_wallet: Wallet::new(
                req!(origin, user.fiat, "wallets.user.fiat"),
                0.0,
                req!(origin, user.collateral, "wallets.user.collateral"),
            ),
            initial_investor_wallet: Wallet::new(
                req!(origin, investor.fiat, "wallets.investor.fiat"),
                0.0,
                req!(origin, investor.collateral, "wallets.investor.collateral"),
            ),
            issuer_reserve: self.issuer.and_then(|i| i.reserve),
            sensitivity: None,
        };
        config.validate()?;
        Ok(ExperimentSpec {
            sim: config,
            output_dir: output.dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
            charts: output.charts.unwrap_or(true),
        })
    }
}

/// Parses `text` and fills omitted keys from the calibration of its
/// quadrant. `fallback` picks the quadrant when the file names none.
pub fn load_str(origin: &str, text: &str, fallback: Option<Quadrant>) -> Result<ExperimentSpec, ConfigError> {
    let file = parse(origin, text)?;
    let quadrant = match (file.quadrant(), fallback) {
        (Some(q), _) => q,
        (None, Some(q)) => {
            let coin = file.coin.clone().unwrap_or_default();
            if coin.source.is_some() || coin.management.is_some() {
                return Err(ConfigError::Missing {
                    origin: origin.to_string(),
                    key: if coin.source.is_none() {
                        "coin.source"
                    } else {
                        "coin.management"
                    },
                });
            }
            q
        }
        (None, None) => {
            let has_source = file.coin.as_ref().is_some_and(|c| c.source.is_some());
            return Err(ConfigError::Missing {
                origin: origin.to_string(),
                key: if has_source { "coin.management" } else { "coin.source" },
            });
        }
    };
    let mut table: toml::Table = toml::from_str(calibration::source(quadrant))
        .map_err(|e| ConfigError::Other(format!("shipped calibration is broken: {e}")))?;
    let user: toml::Table = toml::from_str(text).map_err(|e| parse_error(origin, text, e))?;
    merge(&mut table, user);
    if let Some(toml::Value::Table(coin)) = table.get_mut("coin") {
        coin.insert("source".into(), toml::Value::String(quadrant.source.to_string()));
        coin.insert(
            "management".into(),
            toml::Value::String(quadrant.management.to_string()),
        );
    }
    let merged: ConfigFile = table
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Other(format!("{origin}: {}", e.message())))?;
    merged.into_experiment(origin)
}

/// Reads and resolves a configuration file.
pub fn load_config(path: &Path, fallback: Option<Quadrant>) -> Result<ExperimentSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    load_str(&path.display().to_string(), &text, fallback)
}

/// Applies a `STABLESIM_SEED`-style override value.
pub fn apply_seed_override(spec: &mut ExperimentSpec, value: Option<&str>) -> Result<(), ConfigError> {
    if let Some(v) = value {
        spec.sim.seed = v
            .trim()
            .parse()
            .map_err(|_| ConfigError::Other(format!("{SEED_ENV}: `{v}` is not an unsigned integer")))?;
    }
    Ok(())
}
