//! Discretized HJB system, its relaxation solvers, and the condition checkers.
//!
//! For each cell the residual is
//!
//! ```text
//! G[i][j] = phi[i][j] - U[i][j] - ln(sum_k exp(eta_j (phi[k][j] - phi[i][j])) dx) / (delta_j eta_j)
//! ```
//!
//! where `U` is the coupled utility evaluated at the occupation measure
//! `m = delta/(delta+1) mu0 + 1/(delta+1) softmax(eta phi)` of `phi` itself.
//! The log term shares one shifted log-partition per column, so a residual
//! evaluation costs one `exp` per cell.

use std::ops::Deref;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::field::Field;
use crate::graphon::GraphonKernel;
use crate::logit::{self, ColumnLse};
use crate::scenario::{MeasureField, MeasureRole, RateProfiles, Scenario};

/// Slack allowed on the discrete min/max principle.
pub const BOUND_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverMode {
    /// `phi <- phi - delta_j dt G`
    PseudoTime,
    /// `phi <- (1 - omega) phi + omega (phi - G)`
    DampedPicard { omega: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub eps: f64,
    pub max_iter: usize,
    pub mode: SolverMode,
    pub execution: Execution,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            eps: 1e-10,
            max_iter: 2_000_000,
            mode: SolverMode::PseudoTime,
            execution: Execution::Auto,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::param("eps", format!("must be positive, got {}", self.eps)));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter", "must be at least 1"));
        }
        if let SolverMode::DampedPicard { omega } = self.mode {
            if !(omega > 0.0 && omega <= 1.0) {
                return Err(Error::param("omega", format!("must lie in (0, 1], got {omega}")));
            }
        }
        Ok(())
    }

    /// Pseudo-time step `1 / (max delta + 1)`, which removes the
    /// within-column error modes in one step for constant rates.
    pub fn unit_relaxation_dt(rates: &RateProfiles) -> f64 {
        1.0 / (rates.delta_bounds().1 + 1.0)
    }

    /// Damping `1 / (1 + 1/delta_min + eta_max/4)` for [`SolverMode::DampedPicard`].
    ///
    /// The residual's Jacobian has eigenvalue 1 on column-constant modes and
    /// about `1 + 1/delta` plus a coupling term of order `eta/4` on the rest,
    /// so this keeps every mode damped without stalling the constant one.
    pub fn suggested_omega(rates: &RateProfiles) -> f64 {
        let d = rates.delta_bounds().0;
        let e = rates.eta_bounds().1;
        (1.0 / (1.0 + 1.0 / d + 0.25 * e)).min(1.0)
    }

    /// Damped Picard with [`Self::suggested_omega`].
    pub fn picard(rates: &RateProfiles, eps: f64) -> Self {
        Self {
            eps,
            mode: SolverMode::DampedPicard {
                omega: Self::suggested_omega(rates),
            },
            ..Self::default()
        }
    }
}

/// Grid values of the HJB unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField(Field);

impl ValueField {
    pub fn new(phi: Field) -> Self {
        Self(phi)
    }

    pub fn into_field(self) -> Field {
        self.0
    }
}

impl Deref for ValueField {
    type Target = Field;
    fn deref(&self) -> &Field {
        &self.0
    }
}

/// Generalized discrete min/max principle `min U <= phi <= max U`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub min_u: f64,
    pub max_u: f64,
    pub min_phi: f64,
    pub max_phi: f64,
    /// Largest amount by which `phi` leaves `[min U, max U]` (0 if inside).
    pub violation: f64,
    pub holds: bool,
}

impl BoundCheck {
    pub fn evaluate(phi: &Field, coupled: &Field) -> Self {
        let (min_u, max_u) = (coupled.min(), coupled.max());
        let (min_phi, max_phi) = (phi.min(), phi.max());
        let violation = (min_u - min_phi).max(max_phi - max_u).max(0.0);
        Self {
            min_u,
            max_u,
            min_phi,
            max_phi,
            violation,
            holds: violation <= BOUND_TOL,
        }
    }

    /// The literal `0 <= phi <= U_bar` form for nonnegative utilities.
    pub fn nonnegative_form_holds(&self, u_bar: f64) -> bool {
        self.min_phi >= -BOUND_TOL && self.max_phi <= u_bar + BOUND_TOL
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub phi: ValueField,
    pub m: MeasureField,
    pub pstar: MeasureField,
    pub alpha: Vec<f64>,
    /// Coupled utility at the returned `m`.
    pub coupled: Field,
    pub iterations: usize,
    pub final_increment: f64,
    pub final_residual: f64,
    pub converged: bool,
    pub bound: BoundCheck,
}

/// Reusable buffers for repeated residual evaluations.
pub(crate) struct Workspace<'a> {
    sc: &'a Scenario,
    parallel: bool,
    pub pstar: Field,
    pub m: Field,
    pub agg: Vec<f64>,
    pub lse: Vec<ColumnLse>,
    pub coupled: Field,
    pub g: Field,
}

impl<'a> Workspace<'a> {
    pub fn new(sc: &'a Scenario, execution: Execution) -> Self {
        let grid = sc.grid();
        Self {
            sc,
            parallel: execution.is_parallel_for(grid.cells()),
            pstar: Field::zeros_on(grid),
            m: Field::zeros_on(grid),
            agg: vec![0.0; grid.ny()],
            lse: vec![
                ColumnLse {
                    phi_max: 0.0,
                    shifted: 0.0
                };
                grid.ny()
            ],
            coupled: Field::zeros_on(grid),
            g: Field::zeros_on(grid),
        }
    }

    /// Fills `pstar`, `lse` and `m` from `phi`.
    pub fn measures(&mut self, phi: &Field) {
        let sc = self.sc;
        let grid = sc.grid();
        let (nx, dx) = (grid.nx(), grid.dx());
        let eta = sc.rates().eta();
        let delta = sc.rates().delta();
        exec::for_each_column_with(
            self.parallel,
            nx,
            self.pstar.as_mut_slice(),
            &mut self.lse,
            |j, col, lse| {
                *lse = logit::softmax_into(phi.col(j), eta[j], dx, col);
            },
        );
        let pstar = &self.pstar;
        let mu0 = sc.mu0().density();
        exec::for_each_column(self.parallel, nx, self.m.as_mut_slice(), |j, col| {
            let d = delta[j];
            let (a, b) = (d / (d + 1.0), 1.0 / (d + 1.0));
            for ((o, &p0), &ps) in col.iter_mut().zip(mu0.col(j)).zip(pstar.col(j)) {
                *o = a * p0 + b * ps;
            }
        });
    }

    /// Fills everything including the residual `g`.
    pub fn residual(&mut self, phi: &Field) -> Result<()> {
        self.measures(phi);
        self.sc.aggregates(&self.m, &mut self.agg);
        self.sc
            .coupled_utility_into(&self.agg, &mut self.coupled, self.parallel)?;
        let sc = self.sc;
        let eta = sc.rates().eta();
        let delta = sc.rates().delta();
        let (coupled, lse) = (&self.coupled, &self.lse);
        exec::for_each_column(self.parallel, sc.grid().nx(), self.g.as_mut_slice(), |j, col| {
            let (e, d) = (eta[j], delta[j]);
            let scale = 1.0 / (d * e);
            for ((o, &p), &u) in col.iter_mut().zip(phi.col(j)).zip(coupled.col(j)) {
                *o = p - u - lse[j].relative(e, p) * scale;
            }
        });
        Ok(())
    }
}

/// Occupation measure `m` induced by `phi`.
pub fn compute_m(phi: &ValueField, scenario: &Scenario) -> Result<MeasureField> {
    phi.check_grid(scenario.grid())?;
    let mut ws = Workspace::new(scenario, Execution::Auto);
    ws.measures(phi);
    Ok(MeasureField::from_parts_unchecked(ws.m, MeasureRole::M))
}

/// Jump kernel `p* = softmax(eta phi)` per column.
pub fn optimal_jump_density(phi: &ValueField, scenario: &Scenario) -> Result<MeasureField> {
    phi.check_grid(scenario.grid())?;
    let mut ws = Workspace::new(scenario, Execution::Auto);
    ws.measures(phi);
    Ok(MeasureField::from_parts_unchecked(ws.pstar, MeasureRole::PStar))
}

/// Residual `G[phi]` of the discretized HJB system.
pub fn hjb_residual(phi: &ValueField, scenario: &Scenario) -> Result<Field> {
    phi.check_grid(scenario.grid())?;
    if !phi.all_finite() {
        return Err(Error::NonFinite { iteration: 0 });
    }
    let mut ws = Workspace::new(scenario, Execution::Auto);
    ws.residual(phi)?;
    Ok(ws.g)
}

/// Runs the relaxation iteration from `phi = 0`.
pub fn solve(scenario: &Scenario, config: &SolverConfig) -> Result<SolveOutcome> {
    solve_from(scenario, config, ValueField(Field::zeros_on(scenario.grid())))
}

/// Runs the relaxation iteration from a given starting field.
pub fn solve_from(scenario: &Scenario, config: &SolverConfig, initial: ValueField) -> Result<SolveOutcome> {
    config.validate()?;
    initial.check_grid(scenario.grid())?;
    let grid = scenario.grid();
    let mut ws = Workspace::new(scenario, config.execution);
    let parallel = ws.parallel;
    let mut phi = initial.into_field();
    let mut incs = vec![0.0f64; grid.ny()];
    let delta = scenario.rates().delta().to_vec();

    let mut iterations = 0;
    let mut increment = f64::INFINITY;
    let mut converged = false;
    while iterations < config.max_iter {
        ws.residual(&phi)?;
        let g = &ws.g;
        let mode = config.mode;
        let dt = config.dt;
        exec::for_each_column_with(parallel, grid.nx(), phi.as_mut_slice(), &mut incs, |j, col, inc| {
            let rate = match mode {
                SolverMode::PseudoTime => delta[j] * dt,
                SolverMode::DampedPicard { omega } => omega,
            };
            let mut worst = 0.0f64;
            for (p, &gv) in col.iter_mut().zip(g.col(j)) {
                let step = rate * gv;
                *p -= step;
                // NaN must win the max
                worst = if step.is_nan() { f64::NAN } else { worst.max(step.abs()) };
            }
            *inc = worst;
        });
        increment = incs.iter().copied().fold(0.0, |a: f64, b| if b.is_nan() { b } else { a.max(b) });
        if !increment.is_finite() {
            return Err(Error::NonFinite { iteration: iterations });
        }
        iterations += 1;
        if increment <= config.eps {
            converged = true;
            break;
        }
    }

    ws.residual(&phi)?;
    if !ws.g.all_finite() {
        return Err(Error::NonFinite { iteration: iterations });
    }
    let final_residual = ws.g.as_slice().iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let m = MeasureField::from_parts_unchecked(ws.m, MeasureRole::M);
    let alpha = crate::scenario::alpha_from_measure(&m, grid);
    let bound = BoundCheck::evaluate(&phi, &ws.coupled);
    let outcome = SolveOutcome {
        phi: ValueField(phi),
        m,
        pstar: MeasureField::from_parts_unchecked(ws.pstar, MeasureRole::PStar),
        alpha,
        coupled: ws.coupled,
        iterations,
        final_increment: increment,
        final_residual,
        converged,
        bound,
    };
    if converged {
        Ok(outcome)
    } else {
        Err(Error::NotConverged(Box::new(outcome)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionReport {
    pub value: f64,
    pub holds: bool,
}

/// Sufficient condition for the HJB map to be a sup-norm contraction.
pub fn contraction_check(u_bar: f64, l_u: f64, rates: &RateProfiles) -> ContractionReport {
    let (d_lo, d_hi) = rates.delta_bounds();
    let eta_hi = rates.eta_bounds().1;
    let ratio = d_hi / d_lo;
    let value = 2.0 * eta_hi * l_u / (d_lo + 1.0) * (2.0 * eta_hi * ratio * u_bar).exp()
        + (1.0 + (eta_hi * ratio * u_bar).exp()) / d_lo;
    ContractionReport {
        value,
        holds: value > 0.0 && value < 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityRow {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub h_bar: f64,
    pub lipschitz_g: f64,
    /// Per type: monotone in the unknowns of the same type.
    pub rows: Vec<MonotonicityRow>,
    /// When the kernel couples distinct types, the scheme is not guaranteed
    /// to be monotone in unknowns of other types regardless of `rows`.
    pub cross_type_coupling: bool,
}

/// Same-type monotonicity rows `h_bar/(delta_j+1) L_g eta_j w[j][j] dy <= 1/delta_j`.
pub fn monotonicity_rows(
    h_bar: f64,
    lipschitz_g: f64,
    rates: &RateProfiles,
    kernel: &GraphonKernel,
) -> Vec<MonotonicityRow> {
    rates
        .delta()
        .iter()
        .zip(rates.eta())
        .enumerate()
        .map(|(j, (&d, &e))| {
            let lhs = h_bar / (d + 1.0) * lipschitz_g * e * kernel.weight(j, j);
            let rhs = 1.0 / d;
            MonotonicityRow {
                lhs,
                rhs,
                holds: lhs <= rhs,
            }
        })
        .collect()
}

pub fn monotonicity_check(scenario: &Scenario) -> Result<MonotonicityReport> {
    let (h_bar, lipschitz_g) = scenario.monotonicity_bounds()?;
    let kernel = scenario.kernel();
    Ok(MonotonicityReport {
        h_bar,
        lipschitz_g,
        rows: monotonicity_rows(h_bar, lipschitz_g, scenario.rates(), kernel),
        cross_type_coupling: kernel.has_cross_type_coupling(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::scenario::{FisheryParams, Utility};

    fn frozen(nx: usize, ny: usize, u: Field, delta: f64, eta: f64) -> Scenario {
        let g = Grid::new(nx, ny).unwrap();
        let rates = RateProfiles::constant(delta, eta, &g).unwrap();
        let k = GraphonKernel::identity(&g);
        Scenario::new(g.clone(), rates, MeasureField::uniform(&g), Utility::Frozen(u), k).unwrap()
    }

    #[test]
    fn residual_two_cell_example() {
        let sc = frozen(2, 1, Field::zeros(2, 1), 1.0, 1.0);
        let phi = ValueField::new(Field::from_columns(2, 1, vec![0.0, 2f64.ln()]).unwrap());
        let g = hjb_residual(&phi, &sc).unwrap();
        assert!((g.get(0, 0) - (-0.405465)).abs() < 1e-6);
        assert!((g.get(1, 0) - 0.980829).abs() < 1e-6);
        assert!((g.get(0, 0) + 1.5f64.ln()).abs() < 1e-15);
        assert!((g.get(1, 0) - (2f64.ln() - 0.75f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn column_constant_phi_has_no_log_term() {
        let u = Field::from_fn(4, 3, |i, j| (i * j) as f64 * 0.1);
        let sc = frozen(4, 3, u.clone(), 0.7, 3.0);
        let phi = ValueField::new(Field::from_fn(4, 3, |_, j| j as f64));
        let g = hjb_residual(&phi, &sc).unwrap();
        for j in 0..3 {
            for i in 0..4 {
                assert!((g.get(i, j) - (j as f64 - u.get(i, j))).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn m_examples() {
        let g = Grid::new(2, 1).unwrap();
        let rates = RateProfiles::constant(1.0, 1.0, &g).unwrap();
        let sc = Scenario::fishery(g.clone(), rates, FisheryParams::default(), GraphonKernel::identity(&g)).unwrap();
        let phi = ValueField::new(Field::from_columns(2, 1, vec![0.0, 2f64.ln()]).unwrap());
        let m = compute_m(&phi, &sc).unwrap();
        assert!((m.col(0)[0] - 5.0 / 6.0).abs() < 1e-15);
        assert!((m.col(0)[1] - 7.0 / 6.0).abs() < 1e-15);

        let flat = ValueField::new(Field::filled(2, 1, 0.3));
        let m = compute_m(&flat, &sc).unwrap();
        assert!(m.col(0).iter().all(|v| (v - 1.0).abs() < 1e-15));

        let big = sc.with_rates(RateProfiles::constant(1e12, 1.0, &g).unwrap()).unwrap();
        let m = compute_m(&phi, &big).unwrap();
        assert!(m.col(0).iter().all(|v| (v - 1.0).abs() < 1e-11));
    }

    #[test]
    fn contraction_examples() {
        let g = Grid::new(2, 4).unwrap();
        let r = contraction_check(1.0, 0.1, &RateProfiles::constant(100.0, 0.01, &g).unwrap());
        assert!((r.value - 0.02012).abs() < 1e-5 && r.holds);
        let r = contraction_check(1.0, 0.1, &RateProfiles::constant(1e9, 0.01, &g).unwrap());
        assert!(r.value < 1e-8 && r.holds);
        let r = contraction_check(0.0, 0.0, &RateProfiles::constant(0.005, 200.0, &g).unwrap());
        assert!(r.value >= 400.0 && !r.holds);
    }

    #[test]
    fn monotonicity_examples() {
        let g = Grid::new(2, 10).unwrap();
        let rates = RateProfiles::constant(0.5, 2.0, &g).unwrap();
        let k = GraphonKernel::uniform(&g);
        let rows = monotonicity_rows(1.0, 1.0, &rates, &k);
        for r in &rows {
            assert!((r.lhs - 0.133333).abs() < 1e-6 && r.rhs == 2.0 && r.holds);
        }
        let rates = RateProfiles::constant(0.5, 1e9, &g).unwrap();
        assert!(monotonicity_rows(1.0, 1.0, &rates, &k).iter().all(|r| !r.holds));

        let sc = Scenario::fishery(g.clone(), RateProfiles::constant(0.5, 2.0, &g).unwrap(), FisheryParams::default(), GraphonKernel::identity(&g)).unwrap();
        let rep = monotonicity_check(&sc).unwrap();
        assert!(!rep.cross_type_coupling);
        let sc = sc.with_kernel(GraphonKernel::gaussian(0.5, &g).unwrap()).unwrap();
        assert!(monotonicity_check(&sc).unwrap().cross_type_coupling);
    }

    #[test]
    fn config_validation() {
        let mut c = SolverConfig::default();
        assert!(c.validate().is_ok());
        c.dt = 0.0;
        assert!(c.validate().is_err());
        let c = SolverConfig { mode: SolverMode::DampedPicard { omega: 1.5 }, ..Default::default() };
        assert!(c.validate().is_err());
        let c = SolverConfig { max_iter: 0, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn divergence_is_caught() {
        let g = Grid::new(8, 2).unwrap();
        let rates = RateProfiles::constant(0.5, 2.0, &g).unwrap();
        let sc = Scenario::fishery(g.clone(), rates, FisheryParams::default(), GraphonKernel::identity(&g)).unwrap();
        let cfg = SolverConfig { dt: 50.0, ..Default::default() };
        assert!(matches!(solve(&sc, &cfg), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn iteration_cap_returns_diagnostics() {
        let g = Grid::new(8, 2).unwrap();
        let rates = RateProfiles::constant(0.5, 2.0, &g).unwrap();
        let sc = Scenario::fishery(g.clone(), rates, FisheryParams::default(), GraphonKernel::identity(&g)).unwrap();
        let cfg = SolverConfig { max_iter: 3, ..Default::default() };
        match solve(&sc, &cfg) {
            Err(Error::NotConverged(out)) => {
                assert_eq!(out.iterations, 3);
                assert!(!out.converged);
                assert!(out.final_increment > cfg.eps);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn small_case_converges_with_bounds() {
        let g = Grid::new(16, 8).unwrap();
        let rates = RateProfiles::constant(0.5, 2.0, &g).unwrap();
        let sc = Scenario::fishery(g.clone(), rates, FisheryParams::default(), GraphonKernel::gaussian(0.5, &g).unwrap()).unwrap();
        let cfg = SolverConfig::default();
        let out = solve(&sc, &cfg).unwrap();
        assert!(out.converged && out.bound.holds);
        assert!(out.final_residual <= cfg.eps / (0.5 * cfg.dt) * 1.01);
        assert!(out.m.max_mass_error(&g) <= 1e-12);
        let g2 = hjb_residual(&out.phi, &sc).unwrap();
        assert!(g2.as_slice().iter().all(|v| v.abs() <= out.final_residual * 1.0001 + 1e-15));
    }
}
