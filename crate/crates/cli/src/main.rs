use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use graphon_logit::dynamics::FixedPointConfig;
use graphon_logit::mc::McConfig;
use graphon_logit_cli::config::{KernelName, ModeName, RunConfig};
use graphon_logit_cli::driver::{self, Myopic};
use graphon_logit_cli::study::{self, StudySolver};
use graphon_logit_cli::{expand_preset, CasePreset, Costs};

#[derive(Parser)]
#[command(name = "graphon-logit", version, about = "Graphon-coupled discounted logit equilibria")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CaseArgs {
    /// JSON run configuration; defaults are used for absent sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<CasePreset>,
    /// Use the identity kernel instead of the Gaussian graphon.
    #[arg(long)]
    no_graphon: bool,
    #[arg(long, value_enum)]
    costs: Option<Costs>,
    /// Output directory (overrides `outputs.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid size for both axes (overrides `grid`).
    #[arg(long)]
    n: Option<usize>,
}

impl CaseArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(p) = self.preset {
            cfg = expand_preset(&cfg, p, !self.no_graphon, self.costs);
        } else {
            if self.no_graphon {
                cfg.graphon.kind = KernelName::Identity;
            }
            if let Some(c) = self.costs {
                let p = c.params();
                cfg.utility.c0 = p.c0;
                cfg.utility.c1 = p.c1;
            }
        }
        if let Some(n) = self.n {
            cfg = cfg.with_size(n, n);
        }
        if let Some(o) = &self.out {
            cfg.outputs.dir = o.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the HJB system and write phi.csv, p.csv, alpha.csv, report.json.
    Solve {
        #[command(flatten)]
        case: CaseArgs,
        /// Use damped Picard instead of pseudo-time.
        #[arg(long)]
        picard: bool,
        #[arg(long)]
        omega: Option<f64>,
    },
    /// Fixed point of the discounted logit dynamic.
    Dlogit {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Stationary point of the classical logit flow.
    LogitEq {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Simulate agents against the solved jump kernel.
    Mc {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// 1-based type indices.
        #[arg(long, value_delimiter = ',', required = true)]
        columns: Vec<usize>,
    },
    /// Grid-refinement study on N = 2^M grids.
    Converge {
        #[command(flatten)]
        case: CaseArgs,
        /// Level range `lo..hi`, inclusive.
        #[arg(long, default_value = "4..7")]
        levels: String,
        #[arg(long = "ref", default_value_t = 8)]
        ref_level: u32,
        /// Allow reference levels above 8.
        #[arg(long)]
        long_running: bool,
        /// Use the configured solver (pseudo-time by default) on every level.
        #[arg(long)]
        pseudo_time: bool,
    },
    /// Alpha curves over graphon widths.
    SweepTheta {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long, value_delimiter = ',')]
        thetas: Option<Vec<f64>>,
    },
    /// Contraction, monotonicity and kernel reports.
    Check {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long)]
        ubar: Option<f64>,
        #[arg(long)]
        lu: Option<f64>,
    },
}

fn parse_levels(s: &str) -> Result<std::ops::RangeInclusive<u32>> {
    let (a, b) = s.split_once("..").context("levels must look like 4..8")?;
    let (a, b): (u32, u32) = (a.trim().parse()?, b.trim().parse()?);
    if a > b {
        bail!("empty level range {s}");
    }
    Ok(a..=b)
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve { case, picard, omega } => {
            let mut cfg = case.resolve()?;
            if picard {
                cfg.solver.mode = ModeName::DampedPicard;
            }
            if omega.is_some() {
                cfg.solver.omega = omega;
            }
            let s = driver::run_case(&cfg)?;
            print_json(&s.report)?;
            if !s.bound_ok {
                eprintln!("bound check failed: violation {:e}", s.report.bound.violation);
                return Ok(ExitCode::from(2));
            }
        }
        Command::Dlogit { case, tol } => {
            let fp = FixedPointConfig { tol, ..Default::default() };
            let (_, r) = driver::run_myopic(&case.resolve()?, Myopic::Discounted, &fp)?;
            print_json(&r)?;
        }
        Command::LogitEq { case, tol } => {
            let fp = FixedPointConfig { tol, ..Default::default() };
            let (_, r) = driver::run_myopic(&case.resolve()?, Myopic::Equilibrium, &fp)?;
            print_json(&r)?;
        }
        Command::Mc { case, samples, seed, columns } => {
            if columns.contains(&0) {
                bail!("column indices are 1-based");
            }
            let cols = columns.iter().map(|c| c - 1).collect();
            let r = driver::run_mc(&case.resolve()?, &McConfig::new(samples, seed, cols))?;
            print_json(&r)?;
        }
        Command::Converge { case, levels, ref_level, long_running, pseudo_time } => {
            let levels = parse_levels(&levels)?;
            if ref_level > 8 && !long_running {
                bail!("reference level {ref_level} needs --long-running");
            }
            let mut case = case;
            if case.preset.is_none() && case.config.is_none() {
                case.preset = Some(CasePreset::D);
            }
            let cfg = case.resolve()?;
            let solver = if pseudo_time {
                StudySolver::FromConfig
            } else {
                StudySolver::Picard { eps: 1e-12 }
            };
            let table = study::convergence_study(&cfg, levels, ref_level, solver)?;
            study::write_study(&cfg.outputs.dir, &table)?;
            println!("level      N        error     rate");
            for r in &table.rows {
                let e = r.error.map_or("-".into(), |v| format!("{v:.4e}"));
                let q = r.rate.map_or("-".into(), |v| format!("{v:.3}"));
                println!("{:>5} {:>6} {:>12} {:>8}", r.level, r.n, e, q);
            }
        }
        Command::SweepTheta { case, thetas } => {
            let cfg = case.resolve()?;
            let thetas = thetas.unwrap_or_else(|| match case.preset {
                Some(CasePreset::R | CasePreset::M) => study::RM_THETAS.to_vec(),
                _ => study::DEFAULT_THETAS.to_vec(),
            });
            let pts = study::sweep_theta(&cfg, &thetas, &cfg.outputs.dir)?;
            print_json(&pts)?;
            if pts.iter().any(|p| p.hjb_error.is_some() || p.dlogit_error.is_some()) {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Check { case, ubar, lu } => {
            let r = driver::run_check(&case.resolve()?, ubar, lu)?;
            print_json(&r)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
