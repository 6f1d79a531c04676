//! Shipped parameter sets, one per quadrant. The files live in the
//! workspace's `calibration/` directory and double as configuration
//! templates.

use std::sync::OnceLock;

use crate::io::config;
use crate::model::{Quadrant, SimConfig, StablecoinSpec};

const EXOGENOUS_CENTRAL: &str = include_str!("../../../calibration/exogenous-central.cfg");
const EXOGENOUS_DECENTRAL: &str = include_str!("../../../calibration/exogenous-decentral.cfg");
const ENDOGENOUS_CENTRAL: &str = include_str!("../../../calibration/endogenous-central.cfg");
const ENDOGENOUS_DECENTRAL: &str = include_str!("../../../calibration/endogenous-decentral.cfg");

fn index(q: Quadrant) -> usize {
    Quadrant::ALL.iter().position(|x| *x == q).expect("known quadrant")
}

/// Raw text of the calibration file for `q`.
pub fn source(q: Quadrant) -> &'static str {
    [
        EXOGENOUS_CENTRAL,
        EXOGENOUS_DECENTRAL,
        ENDOGENOUS_CENTRAL,
        ENDOGENOUS_DECENTRAL,
    ][index(q)]
}

/// File name of the calibration for `q`, e.g. `exogenous-central.cfg`.
pub fn file_name(q: Quadrant) -> String {
    format!("{}.cfg", q.slug())
}

fn all() -> &'static [SimConfig; 4] {
    static CONFIGS: OnceLock<[SimConfig; 4]> = OnceLock::new();
    CONFIGS.get_or_init(|| {
        Quadrant::ALL.map(|q| {
            let name = file_name(q);
            let file = config::parse(&name, source(q)).unwrap_or_else(|e| panic!("{e}"));
            assert_eq!(file.quadrant(), Some(q), "{name} names the wrong quadrant");
            file.into_experiment(&name).unwrap_or_else(|e| panic!("{e}")).sim
        })
    })
}

pub fn default_config(q: Quadrant) -> SimConfig {
    all()[index(q)].clone()
}

pub fn default_spec(q: Quadrant) -> StablecoinSpec {
    all()[index(q)].spec.clone()
}
