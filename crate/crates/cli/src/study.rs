//! Grid-refinement study and graphon-width sweeps.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use graphon_logit::csvio::write_type_table;
use graphon_logit::dynamics::{self, FixedPointConfig};
use graphon_logit::exec::{self, Execution};
use graphon_logit::hjb::{self, SolverConfig};
use graphon_logit::{Field, Grid};

use crate::config::{KernelName, RunConfig};

/// Which solver settings each refinement level uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StudySolver {
    /// Settings from the run configuration (pseudo-time by default).
    FromConfig,
    /// Damped Picard with the suggested damping and this increment tolerance.
    Picard { eps: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub level: u32,
    pub n: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Max over coarse cells of `|phi - interp(phi_ref)|`.
    pub error: Option<f64>,
    /// `log2(error[level] / error[level + 1])`.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyTable {
    pub ref_level: u32,
    pub ref_converged: bool,
    pub rows: Vec<StudyRow>,
}

/// Linear weights of the fine cells around the center of coarse cell `i`:
/// `(i0, i1, t)` with value `(1 - t) f[i0] + t f[i1]`.
///
/// Computed in integer arithmetic so identical grids map onto themselves
/// exactly. Centers outside the span of fine centers are clamped.
fn linear_stencil(i: usize, coarse: usize, fine: usize) -> (usize, usize, f64) {
    // fine index coordinate of the coarse center, times 2 * coarse
    let num = (2 * i + 1) as i64 * fine as i64 - coarse as i64;
    let den = 2 * coarse as i64;
    if num <= 0 {
        return (0, 0, 0.0);
    }
    let i0 = (num / den) as usize;
    if i0 + 1 >= fine {
        return (fine - 1, fine - 1, 0.0);
    }
    (i0, i0 + 1, (num % den) as f64 / den as f64)
}

/// Bilinear interpolation of `fine` (on `fine_grid`) to the cell centers of
/// `coarse_grid`.
pub fn interpolate_to(fine: &Field, fine_grid: &Grid, coarse_grid: &Grid) -> Result<Field> {
    fine.check_grid(fine_grid)?;
    let sx: Vec<_> = (0..coarse_grid.nx())
        .map(|i| linear_stencil(i, coarse_grid.nx(), fine_grid.nx()))
        .collect();
    let sy: Vec<_> = (0..coarse_grid.ny())
        .map(|j| linear_stencil(j, coarse_grid.ny(), fine_grid.ny()))
        .collect();
    Ok(Field::from_fn(coarse_grid.nx(), coarse_grid.ny(), |i, j| {
        let (a0, a1, tx) = sx[i];
        let (b0, b1, ty) = sy[j];
        let lo = (1.0 - tx) * fine.get(a0, b0) + tx * fine.get(a1, b0);
        if ty == 0.0 {
            return lo;
        }
        let hi = (1.0 - tx) * fine.get(a0, b1) + tx * fine.get(a1, b1);
        (1.0 - ty) * lo + ty * hi
    }))
}

struct LevelSolve {
    level: u32,
    grid: Grid,
    phi: Option<Field>,
    iterations: usize,
}

fn solve_level(base: &RunConfig, level: u32, solver: StudySolver) -> Result<LevelSolve> {
    let n = 1usize << level;
    let cfg = base.with_size(n, n);
    let scenario = cfg.build_scenario()?;
    let sc = match solver {
        StudySolver::FromConfig => cfg.solver_config(scenario.rates())?,
        StudySolver::Picard { eps } => SolverConfig {
            execution: Execution::Auto,
            ..SolverConfig::picard(scenario.rates(), eps)
        },
    };
    let grid = scenario.grid().clone();
    Ok(match hjb::solve(&scenario, &sc) {
        Ok(o) => LevelSolve {
            level,
            grid,
            iterations: o.iterations,
            phi: Some(o.phi.into_field()),
        },
        Err(graphon_logit::Error::NotConverged(o)) => LevelSolve {
            level,
            grid,
            iterations: o.iterations,
            phi: None,
        },
        Err(e) => {
            eprintln!("level {level}: {e}");
            LevelSolve {
                level,
                grid,
                iterations: 0,
                phi: None,
            }
        }
    })
}

/// Solves at `N = 2^M` for every level and at the reference level, and
/// tabulates the interpolated max error and the observed rates.
///
/// Levels run in parallel as independent solves.
pub fn convergence_study(base: &RunConfig, levels: std::ops::RangeInclusive<u32>, ref_level: u32, solver: StudySolver) -> Result<StudyTable> {
    if levels.is_empty() {
        bail!("empty level range");
    }
    if ref_level < *levels.end() {
        bail!("reference level {ref_level} is below the finest level {}", levels.end());
    }
    if ref_level > 14 {
        bail!("reference level {ref_level} is too large");
    }
    let mut all: Vec<u32> = levels.clone().collect();
    all.push(ref_level);
    let solves = exec::map_items(Execution::Parallel.is_parallel_for(all.len()), &all, |&l| solve_level(base, l, solver));
    let mut solves = solves.into_iter().collect::<Result<Vec<_>>>()?;
    let reference = solves.pop().expect("reference level");

    let mut rows: Vec<StudyRow> = Vec::new();
    for s in &solves {
        let error = match (&s.phi, &reference.phi) {
            (Some(phi), Some(rphi)) => {
                let interp = interpolate_to(rphi, &reference.grid, &s.grid)?;
                Some(phi.max_abs_diff(&interp))
            }
            _ => None,
        };
        rows.push(StudyRow {
            level: s.level,
            n: s.grid.nx(),
            converged: s.phi.is_some(),
            iterations: s.iterations,
            error,
            rate: None,
        });
    }
    for k in 0..rows.len().saturating_sub(1) {
        if let (Some(a), Some(b)) = (rows[k].error, rows[k + 1].error) {
            if a > 0.0 && b > 0.0 {
                rows[k].rate = Some((a / b).log2());
            }
        }
    }
    Ok(StudyTable {
        ref_level,
        ref_converged: reference.phi.is_some(),
        rows,
    })
}

/// Writes `convergence.csv` with columns `level,N,error,rate` (blank when
/// unavailable) and `convergence.json`.
pub fn write_study(dir: &Path, table: &StudyTable) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("convergence.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["level", "N", "error", "rate", "converged", "iterations"])?;
    let opt = |v: Option<f64>| v.map(graphon_logit::csvio::fmt_f64).unwrap_or_default();
    for r in &table.rows {
        w.write_record([
            r.level.to_string(),
            r.n.to_string(),
            opt(r.error),
            opt(r.rate),
            r.converged.to_string(),
            r.iterations.to_string(),
        ])?;
    }
    w.flush()?;
    let text = serde_json::to_string_pretty(table)?;
    std::fs::write(dir.join("convergence.json"), text + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub theta: f64,
    pub path: PathBuf,
    pub hjb_error: Option<String>,
    pub dlogit_error: Option<String>,
    #[serde(skip)]
    pub alpha_hjb: Option<Vec<f64>>,
    #[serde(skip)]
    pub alpha_dlogit: Option<Vec<f64>>,
}

pub const DEFAULT_THETAS: [f64; 4] = [0.5, 0.25, 0.125, 0.0625];
pub const RM_THETAS: [f64; 2] = [0.5, 0.0078125];

/// File name of the alpha table for one graphon width.
pub fn sweep_file_name(theta: f64) -> String {
    format!("alpha_theta_{theta:?}.csv")
}

/// One HJB solve and one discounted logit solve per `theta`, each writing
/// `alpha_theta_<theta>.csv` with columns `y,alpha_hjb,alpha_dlogit,alpha_nash`.
/// A failed solve leaves its column empty and is recorded in the result.
pub fn sweep_theta(base: &RunConfig, thetas: &[f64], dir: &Path) -> Result<Vec<SweepPoint>> {
    if let Some(t) = thetas.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        bail!("theta must be positive, got {t}");
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let points = exec::map_items(Execution::Parallel.is_parallel_for(thetas.len()), thetas, |&theta| {
        sweep_point(base, theta, dir)
    });
    points.into_iter().collect()
}

fn sweep_point(base: &RunConfig, theta: f64, dir: &Path) -> Result<SweepPoint> {
    let mut cfg = base.clone();
    cfg.graphon.kind = KernelName::Gaussian;
    cfg.graphon.theta = theta;
    let scenario = cfg.build_scenario()?;
    let solver = cfg.solver_config(scenario.rates())?;
    let (alpha_hjb, hjb_error) = match hjb::solve(&scenario, &solver) {
        Ok(o) => (Some(o.alpha), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let (alpha_dlogit, dlogit_error) = match dynamics::discounted_logit_solve(&scenario, &FixedPointConfig::default()) {
        Ok(o) => (Some(o.alpha), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let grid = scenario.grid();
    let params = scenario.fishery_params().copied().unwrap_or_default();
    let nash = dynamics::nash_curve(grid, &params);
    let nan = vec![f64::NAN; grid.ny()];
    let path = dir.join(sweep_file_name(theta));
    write_type_table(
        &path,
        grid,
        &[
            ("alpha_hjb", alpha_hjb.as_deref().unwrap_or(&nan)),
            ("alpha_dlogit", alpha_dlogit.as_deref().unwrap_or(&nan)),
            ("alpha_nash", &nash),
        ],
    )?;
    Ok(SweepPoint {
        theta,
        path,
        hjb_error,
        dlogit_error,
        alpha_hjb,
        alpha_dlogit,
    })
}
