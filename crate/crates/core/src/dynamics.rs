//! Myopic companions of the HJB system: the classical logit flow, its
//! equilibrium, the discounted logit fixed point, and the Nash curve of the
//! fishery game.
//!
//! The two fixed-point solvers relax with a step that halves whenever the
//! residual stops improving for [`PATIENCE`] steps. With sharp logit
//! responses (large `eta`) the best-response map overshoots badly, and a
//! fixed step of 1/2 settles into a cycle.

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::field::Field;
use crate::grid::Grid;
use crate::logit;
use crate::scenario::{cost, FisheryParams, MeasureField, MeasureRole, Scenario};

/// Default relaxation step for the flow and the discounted fixed point.
pub const DEFAULT_STEP: f64 = 0.5;

/// Smallest step the adaptive relaxation will shrink to.
pub const MIN_STEP: f64 = 1.0 / 65536.0;

/// Steps without a new best residual before the relaxation step is halved.
pub const PATIENCE: usize = 50;

/// Density `mu_t` of the logit flow at time `t`.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub p: MeasureField,
    pub t: f64,
}

impl FlowState {
    pub fn new(p: MeasureField) -> Self {
        Self { p, t: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointConfig {
    pub tol: f64,
    pub max_steps: usize,
    /// Initial relaxation step in `(0, 1]`.
    pub step: f64,
    /// Halve the step when the residual stalls.
    pub adaptive: bool,
    pub execution: Execution,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_steps: 200_000,
            step: DEFAULT_STEP,
            adaptive: true,
            execution: Execution::Auto,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", format!("must be positive, got {}", self.tol)));
        }
        if !(self.step > 0.0 && self.step <= 1.0) {
            return Err(Error::param("step", format!("must lie in (0, 1], got {}", self.step)));
        }
        if self.max_steps == 0 {
            return Err(Error::param("max_steps", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointOutcome {
    pub m: MeasureField,
    pub alpha: Vec<f64>,
    /// `max |F(m) - m|` at the returned `m`.
    pub residual: f64,
    pub steps: usize,
    /// Relaxation step in use when the iteration stopped.
    pub final_step: f64,
}

fn logit_of_coupled(coupled: &Field, scenario: &Scenario, out: &mut Field, parallel: bool) {
    let grid = scenario.grid();
    let eta = scenario.rates().eta();
    let dx = grid.dx();
    exec::for_each_column(parallel, grid.nx(), out.as_mut_slice(), |j, col| {
        logit::softmax_into(coupled.col(j), eta[j], dx, col);
    });
}

struct MapBuffers {
    agg: Vec<f64>,
    coupled: Field,
    out: Field,
    parallel: bool,
}

impl MapBuffers {
    fn new(grid: &Grid, execution: Execution) -> Self {
        Self {
            agg: vec![0.0; grid.ny()],
            coupled: Field::zeros_on(grid),
            out: Field::zeros_on(grid),
            parallel: execution.is_parallel_for(grid.cells()),
        }
    }

    /// Logit response to `m`, left in `self.out`.
    fn logit_map(&mut self, m: &Field, scenario: &Scenario) -> Result<()> {
        scenario.aggregates(m, &mut self.agg);
        scenario.coupled_utility_into(&self.agg, &mut self.coupled, self.parallel)?;
        logit_of_coupled(&self.coupled, scenario, &mut self.out, self.parallel);
        Ok(())
    }

    /// Discounted map `F(m)`, left in `self.out`.
    fn discounted_map(&mut self, m: &Field, scenario: &Scenario) -> Result<()> {
        self.logit_map(m, scenario)?;
        let delta = scenario.rates().delta();
        let mu0 = scenario.mu0().density();
        exec::for_each_column(self.parallel, m.nx(), self.out.as_mut_slice(), |j, col| {
            let d = delta[j];
            let (a, b) = (d / (d + 1.0), 1.0 / (d + 1.0));
            for (o, &p0) in col.iter_mut().zip(mu0.col(j)) {
                *o = a * p0 + b * *o;
            }
        });
        Ok(())
    }
}

/// Logit response `exp(eta_j U[i][j]) / sum_k exp(eta_j U[k][j]) dx` with the
/// coupled utility `U` evaluated at `m`.
pub fn logit_map(m: &MeasureField, scenario: &Scenario) -> Result<MeasureField> {
    m.density().check_grid(scenario.grid())?;
    let mut buf = MapBuffers::new(scenario.grid(), Execution::Auto);
    buf.logit_map(m.density(), scenario)?;
    Ok(MeasureField::from_parts_unchecked(buf.out, MeasureRole::MuT))
}

/// One explicit Euler step `p <- (1 - dtau) p + dtau L[p]` of the logit flow.
pub fn flow_step(state: &FlowState, dtau: f64, scenario: &Scenario) -> Result<FlowState> {
    if !(dtau > 0.0 && dtau <= 1.0) {
        return Err(Error::param("dtau", format!("must lie in (0, 1], got {dtau}")));
    }
    let l = logit_map(&state.p, scenario)?;
    let mut next = l.into_density();
    for (n, &p) in next.as_mut_slice().iter_mut().zip(state.p.density().as_slice()) {
        *n = (1.0 - dtau) * p + dtau * *n;
    }
    Ok(FlowState {
        p: MeasureField::from_parts_unchecked(next, MeasureRole::MuT),
        t: state.t + dtau,
    })
}

/// Relaxed fixed-point iteration `m <- (1 - w) m + w F(m)` from `mu0`, shared
/// by the two equilibrium solvers.
fn relax<F>(scenario: &Scenario, cfg: &FixedPointConfig, role: MeasureRole, mut apply: F) -> Result<FixedPointOutcome>
where
    F: FnMut(&mut MapBuffers, &Field) -> Result<()>,
{
    cfg.validate()?;
    let grid = scenario.grid();
    let mut buf = MapBuffers::new(grid, cfg.execution);
    let mut m = scenario.mu0().density().clone();
    let mut step = cfg.step;
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut steps = 0;
    let residual = loop {
        apply(&mut buf, &m)?;
        let residual = m.max_abs_diff(&buf.out);
        if !residual.is_finite() {
            return Err(Error::NonFinite { iteration: steps });
        }
        if residual <= cfg.tol {
            break residual;
        }
        if steps == cfg.max_steps {
            return Err(Error::MaxSteps { steps, residual });
        }
        if residual < best {
            best = residual;
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.adaptive && since_best >= PATIENCE && step > MIN_STEP {
                step = (0.5 * step).max(MIN_STEP);
                since_best = 0;
            }
        }
        for (v, &f) in m.as_mut_slice().iter_mut().zip(buf.out.as_slice()) {
            *v = (1.0 - step) * *v + step * f;
        }
        steps += 1;
    };
    let m = MeasureField::from_parts_unchecked(m, role);
    let alpha = crate::scenario::alpha_from_measure(&m, grid);
    Ok(FixedPointOutcome {
        m,
        alpha,
        residual,
        steps,
        final_step: step,
    })
}

/// Stationary point `L[p] = p` of the logit flow, started from `mu0`.
///
/// `mu0` and the discount rates of the scenario play no role in the
/// equilibrium condition itself.
pub fn logit_equilibrium(scenario: &Scenario, cfg: &FixedPointConfig) -> Result<FixedPointOutcome> {
    relax(scenario, cfg, MeasureRole::MuT, |b, m| b.logit_map(m, scenario))
}

/// Fixed point of the discounted logit dynamic
/// `m = delta/(delta+1) mu0 + 1/(delta+1) L[m]`, started from `mu0`.
pub fn discounted_logit_solve(scenario: &Scenario, cfg: &FixedPointConfig) -> Result<FixedPointOutcome> {
    relax(scenario, cfg, MeasureRole::M, |b, m| b.discounted_map(m, scenario))
}

/// Maximizer of the quasi-potential `2 sqrt(alpha) - c(y) alpha` over `[0, 1]`.
pub fn nash_alpha(y: f64, params: &FisheryParams) -> f64 {
    let c = cost(y, params);
    (1.0 / (c * c)).min(1.0)
}

/// Nash curve over the type centers of `grid`.
pub fn nash_curve(grid: &Grid, params: &FisheryParams) -> Vec<f64> {
    grid.y_centers().iter().map(|&y| nash_alpha(y, params)).collect()
}
