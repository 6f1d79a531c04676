//! CSV output: per-path series, per-tick aggregates and the event log.
//!
//! Numbers use nine decimal places; rows are ordered by path, then step.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::{EnsembleResult, Event, PathResult};

pub const PATHS_FILE: &str = "paths.csv";
pub const AGGREGATES_FILE: &str = "aggregates.csv";
pub const EVENTS_FILE: &str = "events.csv";

pub const PATHS_HEADER: &str = "path,step,price_stablecoin,price_collateral,demand_user,demand_investor,demand_staking,supply_stablecoin,supply_collateral,collateral_level";
pub const AGGREGATES_HEADER: &str = "step,price_mean,price_std,price_p05,price_p95,demand_mean,demand_std,demand_p05,demand_p95";
pub const EVENTS_HEADER: &str = "path,step,kind,detail";

fn num(out: &mut String, x: f64) {
    let _ = write!(out, ",{x:.9}");
}

pub fn paths_csv(paths: &[PathResult]) -> String {
    let mut out = String::with_capacity(paths.iter().map(|p| p.len() * 120).sum::<usize>() + 128);
    out.push_str(PATHS_HEADER);
    out.push('\n');
    for p in paths {
        for t in 0..p.len() {
            let _ = write!(out, "{},{}", p.path_index, t);
            for x in [
                p.stablecoin_price[t],
                p.collateral_price[t],
                p.user_demand[t],
                p.investor_demand[t],
                p.staking_demand[t],
                p.stablecoin_supply[t],
                p.collateral_supply[t],
                p.collateral_level[t],
            ] {
                num(&mut out, x);
            }
            out.push('\n');
        }
    }
    out
}

pub fn aggregates_csv(result: &EnsembleResult) -> String {
    let a = &result.aggregates;
    let mut out = String::new();
    out.push_str(AGGREGATES_HEADER);
    out.push('\n');
    for t in 0..a.price.mean.len() {
        let _ = write!(out, "{t}");
        for s in [&a.price, &a.demand] {
            for x in [s.mean[t], s.std[t], s.p05[t], s.p95[t]] {
                num(&mut out, x);
            }
        }
        out.push('\n');
    }
    out
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn push_events(out: &mut String, path: usize, events: &[Event]) {
    for e in events {
        let _ = writeln!(out, "{},{},{},{}", path, e.step, e.kind.name(), quote(&e.detail));
    }
}

/// Events of completed and aborted paths, by path index.
pub fn events_csv(result: &EnsembleResult) -> String {
    let mut out = String::new();
    out.push_str(EVENTS_HEADER);
    out.push('\n');
    let mut sources: Vec<(usize, &[Event])> = result
        .paths
        .iter()
        .map(|p| (p.path_index, p.events.as_slice()))
        .chain(
            result
                .failures
                .iter()
                .map(|f| (f.path_index, f.partial.events.as_slice())),
        )
        .collect();
    sources.sort_by_key(|(i, _)| *i);
    for (i, ev) in sources {
        push_events(&mut out, i, ev);
    }
    out
}

/// Writes the three CSV files into `dir`, creating it if needed.
pub fn write_csv(result: &EnsembleResult, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let files = [
        (PATHS_FILE, paths_csv(&result.paths)),
        (AGGREGATES_FILE, aggregates_csv(result)),
        (EVENTS_FILE, events_csv(result)),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Rebuilds per-path series from `paths.csv` text. Events are not part of
/// that file and come back empty.
pub fn parse_paths_csv(text: &str) -> Result<Vec<PathResult>, CsvError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == PATHS_HEADER => {}
        _ => {
            return Err(CsvError::Format {
                line: 1,
                message: "unexpected header".into(),
            })
        }
    }
    let mut paths: Vec<PathResult> = Vec::new();
    for (i, line) in lines {
        let bad = |message: String| CsvError::Format { line: i + 1, message };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(bad(format!("expected 10 fields, found {}", fields.len())));
        }
        let path: usize = fields[0].parse().map_err(|_| bad("bad path index".into()))?;
        let step: usize = fields[1].parse().map_err(|_| bad("bad step".into()))?;
        let mut v = [0.0; 8];
        for (slot, f) in v.iter_mut().zip(&fields[2..]) {
            *slot = f.parse().map_err(|_| bad(format!("bad number `{f}`")))?;
        }
        if paths.last().is_none_or(|p| p.path_index != path) {
            paths.push(PathResult {
                path_index: path,
                ..Default::default()
            });
        }
        let p = paths.last_mut().expect("pushed above");
        if step != p.len() {
            return Err(bad(format!("step {step} out of order")));
        }
        p.stablecoin_price.push(v[0]);
        p.collateral_price.push(v[1]);
        p.user_demand.push(v[2]);
        p.investor_demand.push(v[3]);
        p.staking_demand.push(v[4]);
        p.stablecoin_supply.push(v[5]);
        p.collateral_supply.push(v[6]);
        p.collateral_level.push(v[7]);
    }
    Ok(paths)
}

pub fn read_paths_csv(path: &Path) -> Result<Vec<PathResult>, CsvError> {
    parse_paths_csv(&fs::read_to_string(path)?)
}
