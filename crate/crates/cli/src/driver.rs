//! Single-run drivers: HJB solve, discounted logit, logit equilibrium, Monte
//! Carlo and the condition checks. Each writes its CSV files and a JSON report.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use graphon_logit::csvio::{write_field, write_type_table};
use graphon_logit::dynamics::{self, FixedPointConfig, FixedPointOutcome};
use graphon_logit::hjb::{self, BoundCheck, MonotonicityRow, SolveOutcome};
use graphon_logit::mc::{self, McConfig, Sampler};
use graphon_logit::{Error, FisheryParams, Grid, Scenario};

use crate::config::{Emit, RunConfig};

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub min_u: f64,
    pub max_u: f64,
    pub min_phi: f64,
    pub max_phi: f64,
    pub violation: f64,
    pub holds: bool,
}

impl From<BoundCheck> for BoundReport {
    fn from(b: BoundCheck) -> Self {
        Self {
            min_u: b.min_u,
            max_u: b.max_u,
            min_phi: b.min_phi,
            max_phi: b.max_phi,
            violation: b.violation,
            holds: b.holds,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionSection {
    pub u_bar: f64,
    pub l_u: f64,
    pub value: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotonicitySection {
    pub h_bar: f64,
    pub lipschitz_g: f64,
    pub all_rows_hold: bool,
    /// Off-diagonal kernel weights rule out monotonicity in other types' unknowns.
    pub cross_type_coupling: bool,
    pub rows: Vec<MonotonicityRowReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityRowReport {
    pub y: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphonSectionReport {
    pub symmetry_dev: f64,
    pub integrability_bound: f64,
    pub min_weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub contraction: ContractionSection,
    pub monotonicity: MonotonicitySection,
    pub graphon: GraphonSectionReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub nx: usize,
    pub ny: usize,
    pub mode: String,
    pub iterations: usize,
    pub final_increment: f64,
    pub final_residual: f64,
    pub converged: bool,
    pub bound: BoundReport,
    pub checks: CheckReport,
}

/// Outcome of [`run_case`]; `bound_ok` is false when the converged field
/// leaves `[min U, max U]` by more than the tolerance.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub outcome: SolveOutcome,
    pub report: SolveReport,
    pub bound_ok: bool,
    pub written: Vec<PathBuf>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Contraction and monotonicity conditions plus the kernel report.
/// `u_bar` and `l_u` default to the bounds derived from the scenario.
pub fn check(scenario: &Scenario, u_bar: Option<f64>, l_u: Option<f64>) -> Result<CheckReport> {
    let (du, dl) = scenario.contraction_bounds()?;
    let (u_bar, l_u) = (u_bar.unwrap_or(du), l_u.unwrap_or(dl));
    let c = hjb::contraction_check(u_bar, l_u, scenario.rates());
    let m = hjb::monotonicity_check(scenario)?;
    let a = scenario.kernel().check_assumption4();
    let ys = scenario.grid().y_centers();
    Ok(CheckReport {
        contraction: ContractionSection {
            u_bar,
            l_u,
            value: c.value,
            holds: c.holds,
        },
        monotonicity: MonotonicitySection {
            h_bar: m.h_bar,
            lipschitz_g: m.lipschitz_g,
            all_rows_hold: m.rows.iter().all(|r| r.holds),
            cross_type_coupling: m.cross_type_coupling,
            rows: m
                .rows
                .iter()
                .zip(ys)
                .map(|(r, &y): (&MonotonicityRow, &f64)| MonotonicityRowReport {
                    y,
                    lhs: r.lhs,
                    rhs: r.rhs,
                    holds: r.holds,
                })
                .collect(),
        },
        graphon: GraphonSectionReport {
            symmetry_dev: a.symmetry_dev,
            integrability_bound: a.integrability_bound,
            min_weight: a.min_weight,
        },
    })
}

fn nash_column(grid: &Grid, scenario: &Scenario) -> Vec<f64> {
    let p = scenario.fishery_params().copied().unwrap_or_else(FisheryParams::default);
    dynamics::nash_curve(grid, &p)
}

fn write_alpha(path: &Path, scenario: &Scenario, alpha: &[f64]) -> Result<()> {
    let grid = scenario.grid();
    let nash = nash_column(grid, scenario);
    write_type_table(path, grid, &[("alpha", alpha), ("alpha_nash", &nash)])?;
    Ok(())
}

/// Solves the HJB system for `config` and writes the requested outputs.
pub fn run_case(config: &RunConfig) -> Result<RunSummary> {
    let scenario = config.build_scenario()?;
    let solver = config.solver_config(scenario.rates())?;
    let outcome = match hjb::solve(&scenario, &solver) {
        Ok(o) => o,
        Err(Error::NotConverged(o)) => {
            anyhow::bail!(
                "solver stopped after {} iterations with increment {:e} and residual {:e}",
                o.iterations,
                o.final_increment,
                o.final_residual
            )
        }
        Err(e) => return Err(e.into()),
    };
    let checks = check(&scenario, None, None)?;
    let grid = scenario.grid();
    let report = SolveReport {
        nx: grid.nx(),
        ny: grid.ny(),
        mode: format!("{:?}", solver.mode),
        iterations: outcome.iterations,
        final_increment: outcome.final_increment,
        final_residual: outcome.final_residual,
        converged: outcome.converged,
        bound: outcome.bound.into(),
        checks,
    };

    let dir = &config.outputs.dir;
    ensure_dir(dir)?;
    let mut written = Vec::new();
    for e in &config.outputs.emit {
        let path = match e {
            Emit::Phi => {
                let p = dir.join("phi.csv");
                write_field(&p, grid, &outcome.phi, "phi")?;
                p
            }
            Emit::P => {
                let p = dir.join("p.csv");
                write_field(&p, grid, outcome.m.density(), "p")?;
                p
            }
            Emit::Alpha => {
                let p = dir.join("alpha.csv");
                write_alpha(&p, &scenario, &outcome.alpha)?;
                p
            }
            Emit::Report => {
                let p = dir.join("report.json");
                write_json(&p, &report)?;
                p
            }
        };
        written.push(path);
    }
    Ok(RunSummary {
        bound_ok: outcome.bound.holds,
        outcome,
        report,
        written,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointReport {
    pub kind: &'static str,
    pub nx: usize,
    pub ny: usize,
    pub steps: usize,
    pub residual: f64,
    pub final_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Myopic {
    /// Fixed point of the discounted logit dynamic.
    Discounted,
    /// Stationary point of the logit flow.
    Equilibrium,
}

/// Runs one of the myopic fixed-point solvers and writes `p.csv`,
/// `alpha.csv` and `report.json` as requested.
pub fn run_myopic(config: &RunConfig, which: Myopic, fp: &FixedPointConfig) -> Result<(FixedPointOutcome, FixedPointReport)> {
    let scenario = config.build_scenario()?;
    let (out, kind) = match which {
        Myopic::Discounted => (dynamics::discounted_logit_solve(&scenario, fp)?, "discounted_logit"),
        Myopic::Equilibrium => (dynamics::logit_equilibrium(&scenario, fp)?, "logit_equilibrium"),
    };
    let grid = scenario.grid();
    let report = FixedPointReport {
        kind,
        nx: grid.nx(),
        ny: grid.ny(),
        steps: out.steps,
        residual: out.residual,
        final_step: out.final_step,
    };
    let dir = &config.outputs.dir;
    ensure_dir(dir)?;
    for e in &config.outputs.emit {
        match e {
            Emit::Phi => {}
            Emit::P => write_field(&dir.join("p.csv"), grid, out.m.density(), "p")?,
            Emit::Alpha => write_alpha(&dir.join("alpha.csv"), &scenario, &out.alpha)?,
            Emit::Report => write_json(&dir.join("report.json"), &report)?,
        }
    }
    Ok((out, report))
}

#[derive(Debug, Clone, Serialize)]
pub struct McColumnReport {
    pub column: usize,
    pub y: f64,
    pub delta: f64,
    /// `sum |empirical - expected| dx` against the closed-form occupation measure.
    pub l1_event_loop: f64,
    pub l1_race: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub samples: usize,
    pub seed: u64,
    pub columns: Vec<McColumnReport>,
}

/// Solves the HJB system, then simulates agents of the listed types and
/// compares the histograms with the discounted occupation measure.
///
/// Writes `mc.csv` with columns `j,x,event_loop,race,expected` and
/// `mc_report.json`.
pub fn run_mc(config: &RunConfig, mc_cfg: &McConfig) -> Result<McReport> {
    let scenario = config.build_scenario()?;
    let grid = scenario.grid();
    mc_cfg.validate(grid.ny())?;
    let solver = config.solver_config(scenario.rates())?;
    let outcome = hjb::solve(&scenario, &solver)?;
    let rates = scenario.rates();
    let ev = mc::simulate_discounted_columns(&outcome.pstar, scenario.mu0(), rates, mc_cfg, Sampler::EventLoop, grid)?;
    let race = mc::simulate_discounted_columns(&outcome.pstar, scenario.mu0(), rates, mc_cfg, Sampler::Race, grid)?;

    let dir = &config.outputs.dir;
    ensure_dir(dir)?;
    let path = dir.join("mc.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["j", "x", "event_loop", "race", "expected"])?;
    let mut cols = Vec::new();
    for ((j, e), (_, r)) in ev.iter().zip(&race) {
        let expected = outcome.m.col(*j);
        for i in 0..grid.nx() {
            w.write_record([
                (j + 1).to_string(),
                fmt(grid.x_centers()[i]),
                fmt(e[i]),
                fmt(r[i]),
                fmt(expected[i]),
            ])?;
        }
        cols.push(McColumnReport {
            column: *j,
            y: grid.y_centers()[*j],
            delta: rates.delta()[*j],
            l1_event_loop: mc::l1_distance(e, expected, grid),
            l1_race: mc::l1_distance(r, expected, grid),
        });
    }
    w.flush()?;
    let report = McReport {
        samples: mc_cfg.samples,
        seed: mc_cfg.seed,
        columns: cols,
    };
    write_json(&dir.join("mc_report.json"), &report)?;
    Ok(report)
}

fn fmt(v: f64) -> String {
    graphon_logit::csvio::fmt_f64(v)
}

/// Writes the check report for `config` to `<dir>/check.json`.
pub fn run_check(config: &RunConfig, u_bar: Option<f64>, l_u: Option<f64>) -> Result<CheckReport> {
    let scenario = config.build_scenario()?;
    let report = check(&scenario, u_bar, l_u)?;
    ensure_dir(&config.outputs.dir)?;
    write_json(&config.outputs.dir.join("check.json"), &report)?;
    Ok(report)
}
