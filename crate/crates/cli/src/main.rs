//! `stablesim` command-line driver.
//!
//! Exit codes: 0 success, 1 configuration error, 2 control-check failure,
//! 3 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stablesim_core::calibration::default_config;
use stablesim_core::engine::{run_ensemble, run_sensitivity, EngineError, EnsembleResult};
use stablesim_core::io::config::{apply_seed_override, load_config, ConfigError, ExperimentSpec, SEED_ENV};
use stablesim_core::io::svg::ChartError;
use stablesim_core::io::{csv, svg};
use stablesim_core::model::{Quadrant, Scenario, SensitivityFactor, SimConfig};

#[derive(Debug, Parser)]
#[command(name = "stablesim", version, about = "Agent-based Monte Carlo simulator of stablecoin designs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario for one configuration.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_scenario)]
        scenario: Scenario,
    },
    /// Run all scenarios at each sensitivity multiplier of one factor.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_factor)]
        factor: SensitivityFactor,
    },
    /// Run the shipped calibration for all four designs and all scenarios.
    Compare {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip SVG rendering.
        #[arg(long)]
        no_charts: bool,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Design used when the file has no [coin] section,
    /// e.g. "exogenous/central".
    #[arg(long, value_parser = parse_quadrant)]
    quadrant: Option<Quadrant>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    Scenario::parse(s).ok_or_else(|| format!("expected baseline, negative or positive, got `{s}`"))
}

fn parse_factor(s: &str) -> Result<SensitivityFactor, String> {
    SensitivityFactor::parse(s).ok_or_else(|| format!("expected shock, volatility, fees or collateral, got `{s}`"))
}

fn parse_quadrant(s: &str) -> Result<Quadrant, String> {
    Quadrant::from_label(s).ok_or_else(|| {
        let labels: Vec<_> = Quadrant::ALL.iter().map(|q| q.label()).collect();
        format!("expected one of {}, got `{s}`", labels.join(", "))
    })
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

/// Counts aborted paths and reports them on stderr.
#[derive(Default)]
struct Outcome {
    failed_paths: usize,
}

impl Outcome {
    fn absorb(&mut self, label: &str, r: &EnsembleResult) {
        for f in &r.failures {
            eprintln!("{label}: {f}");
        }
        self.failed_paths += r.failures.len();
    }
}

fn resolve_seed(spec: &mut ExperimentSpec, flag: Option<u64>) -> Result<(), Failure> {
    let env = std::env::var(SEED_ENV).ok();
    apply_seed_override(spec, env.as_deref())?;
    if let Some(s) = flag {
        spec.sim.seed = s;
    }
    Ok(())
}

fn load(common: &Common) -> Result<(ExperimentSpec, PathBuf), Failure> {
    let mut spec = load_config(&common.config, common.quadrant)?;
    resolve_seed(&mut spec, common.seed)?;
    let out = common.out.clone().unwrap_or_else(|| spec.output_dir.clone());
    Ok((spec, out))
}

fn write_results(r: &EnsembleResult, dir: &Path) -> Result<(), Failure> {
    csv::write_csv(r, dir).map_err(|e| io_err(dir, e))?;
    Ok(())
}

/// Renders charts; an empty ensemble is reported and skipped.
fn charts(result: Result<Vec<PathBuf>, ChartError>, dir: &Path) -> Result<(), Failure> {
    match result {
        Ok(_) => Ok(()),
        Err(ChartError::Empty) => {
            eprintln!("no completed paths to chart; no SVG written in {}", dir.display());
            Ok(())
        }
        Err(ChartError::Io(e)) => Err(io_err(dir, e)),
    }
}

fn has_paths(r: &EnsembleResult, label: &str) -> bool {
    if r.is_empty() {
        eprintln!("{label}: ensemble is empty; no files written");
        false
    } else {
        true
    }
}

fn cmd_run(common: &Common, scenario: Scenario) -> Result<Outcome, Failure> {
    let (spec, out) = load(common)?;
    let q = spec.sim.spec.quadrant();
    let r = run_ensemble(&spec.sim.with_scenario(scenario))?;
    let mut outcome = Outcome::default();
    outcome.absorb(&format!("{} {}", q.label(), scenario.name()), &r);
    if has_paths(&r, scenario.name()) {
        write_results(&r, &out)?;
        if spec.charts {
            charts(svg::render_scenarios(q, &[(scenario, &r)], &out), &out)?;
        }
    }
    Ok(outcome)
}

fn multiplier_dir(m: f64) -> String {
    format!("x{m}")
}

fn cmd_sweep(common: &Common, factor: SensitivityFactor) -> Result<Outcome, Failure> {
    let (spec, out) = load(common)?;
    let q = spec.sim.spec.quadrant();
    let mut per_scenario = Vec::new();
    for s in Scenario::ALL {
        per_scenario.push((s, run_sensitivity(&spec.sim.with_scenario(s), factor)?));
    }
    let mut outcome = Outcome::default();
    let base = out.join(format!("sweep-{}", factor.name()));
    let mut grid: Vec<(f64, Vec<(Scenario, &EnsembleResult)>)> = Vec::new();
    for (s, runs) in &per_scenario {
        for (m, r) in runs {
            outcome.absorb(&format!("{} {} x{m}", q.label(), s.name()), r);
            if !has_paths(r, &format!("{} x{m}", s.name())) {
                continue;
            }
            write_results(r, &base.join(multiplier_dir(*m)).join(s.name()))?;
            match grid.iter_mut().find(|(gm, _)| gm == m) {
                Some((_, v)) => v.push((*s, r)),
                None => grid.push((*m, vec![(*s, r)])),
            }
        }
    }
    if spec.charts {
        grid.sort_by(|a, b| a.0.total_cmp(&b.0));
        charts(svg::render_sweep(q, factor, &grid, &out), &out)?;
    }
    Ok(outcome)
}

fn cmd_compare(seed: Option<u64>, out: Option<PathBuf>, no_charts: bool) -> Result<Outcome, Failure> {
    let out = out.unwrap_or_else(|| PathBuf::from(stablesim_core::io::config::DEFAULT_OUTPUT_DIR));
    let mut results: Vec<(Quadrant, Vec<(Scenario, EnsembleResult)>)> = Vec::new();
    for q in Quadrant::ALL {
        let mut spec = ExperimentSpec {
            sim: default_config(q),
            output_dir: out.clone(),
            charts: !no_charts,
        };
        resolve_seed(&mut spec, seed)?;
        let base: SimConfig = spec.sim;
        let mut row = Vec::new();
        for s in Scenario::ALL {
            row.push((s, run_ensemble(&base.with_scenario(s))?));
        }
        results.push((q, row));
    }
    let mut outcome = Outcome::default();
    let mut grid: Vec<(Quadrant, Vec<(Scenario, &EnsembleResult)>)> = Vec::new();
    for (q, row) in &results {
        let mut kept = Vec::new();
        for (s, r) in row {
            outcome.absorb(&format!("{} {}", q.label(), s.name()), r);
            if has_paths(r, &format!("{} {}", q.label(), s.name())) {
                write_results(r, &out.join(q.slug()).join(s.name()))?;
                kept.push((*s, r));
            }
        }
        if !no_charts && !kept.is_empty() {
            let dir = out.join(q.slug());
            charts(svg::render_scenarios(*q, &kept, &dir), &dir)?;
        }
        grid.push((*q, kept));
    }
    if !no_charts {
        charts(svg::render_grid(&grid, &out), &out)?;
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Run { common, scenario } => cmd_run(common, *scenario),
        Command::Sweep { common, factor } => cmd_sweep(common, *factor),
        Command::Compare { seed, out, no_charts } => cmd_compare(*seed, out.clone(), *no_charts),
    };
    match result {
        Ok(o) if o.failed_paths > 0 => {
            eprintln!("{} path(s) failed control checks", o.failed_paths);
            ExitCode::from(2)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
