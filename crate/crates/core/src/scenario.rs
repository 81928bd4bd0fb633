//! Utility models, heterogeneous rate profiles and initial measures.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exec;
use crate::field::Field;
use crate::graphon::{self, GraphonKernel};
use crate::grid::Grid;

/// Mass tolerance for every [`MeasureField`].
pub const MASS_TOL: f64 = 1e-12;

/// Shape of a per-type rate profile evaluated at type cell centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateProfile {
    Constant(f64),
    /// `0.005 + 0.095 (1 - y)`: longest horizon at the upstream end.
    LinearR,
    /// `0.005 + 0.095 y`
    LinearM,
}

impl RateProfile {
    pub fn evaluate(&self, grid: &Grid) -> Result<Vec<f64>> {
        let ys = grid.y_centers();
        match *self {
            RateProfile::Constant(v) => {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::param("rate", format!("must be positive, got {v}")));
                }
                Ok(vec![v; ys.len()])
            }
            RateProfile::LinearR => Ok(ys.iter().map(|y| 0.005 + 0.095 * (1.0 - y)).collect()),
            RateProfile::LinearM => Ok(ys.iter().map(|y| 0.005 + 0.095 * y).collect()),
        }
    }
}

/// Discount rates `delta_j` and entropic parameters `eta_j` per type cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RateProfiles {
    delta: Vec<f64>,
    eta: Vec<f64>,
    delta_bounds: (f64, f64),
    eta_bounds: (f64, f64),
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

impl RateProfiles {
    pub fn new(delta: Vec<f64>, eta: Vec<f64>) -> Result<Self> {
        if delta.len() != eta.len() {
            return Err(Error::LengthMismatch {
                expected: delta.len(),
                got: eta.len(),
            });
        }
        if delta.is_empty() {
            return Err(Error::param("delta", "empty profile"));
        }
        for (name, v) in [("delta", &delta), ("eta", &eta)] {
            if let Some(bad) = v.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
                return Err(Error::param(name, format!("entries must be positive and finite, found {bad}")));
            }
        }
        let delta_bounds = bounds(&delta);
        let eta_bounds = bounds(&eta);
        Ok(Self {
            delta,
            eta,
            delta_bounds,
            eta_bounds,
        })
    }

    pub fn from_profiles(delta: RateProfile, eta: RateProfile, grid: &Grid) -> Result<Self> {
        Self::new(delta.evaluate(grid)?, eta.evaluate(grid)?)
    }

    pub fn constant(delta: f64, eta: f64, grid: &Grid) -> Result<Self> {
        Self::from_profiles(RateProfile::Constant(delta), RateProfile::Constant(eta), grid)
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    /// `(min, max)` of `delta`.
    pub fn delta_bounds(&self) -> (f64, f64) {
        self.delta_bounds
    }

    pub fn eta_bounds(&self) -> (f64, f64) {
        self.eta_bounds
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureRole {
    Mu0,
    M,
    PStar,
    MuT,
    Empirical,
}

impl fmt::Display for MeasureRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MeasureRole::Mu0 => "mu0",
            MeasureRole::M => "m",
            MeasureRole::PStar => "pstar",
            MeasureRole::MuT => "mu_t",
            MeasureRole::Empirical => "empirical",
        };
        f.write_str(s)
    }
}

/// Per-type probability densities over actions.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureField {
    density: Field,
    role: MeasureRole,
}

impl MeasureField {
    /// Validates nonnegativity and unit column mass.
    pub fn new(density: Field, role: MeasureRole, grid: &Grid) -> Result<Self> {
        density.check_grid(grid)?;
        for (j, col) in density.columns().enumerate() {
            if let Some(v) = col.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::InvalidDensity(format!("column {j} has entry {v}")));
            }
            let mass = grid.mass(col);
            if (mass - 1.0).abs() > MASS_TOL {
                return Err(Error::InvalidDensity(format!(
                    "column {j} has mass {mass} (off by {:e})",
                    mass - 1.0
                )));
            }
        }
        Ok(Self { density, role })
    }

    /// Rescales each column to unit mass before validating.
    pub fn normalized(mut density: Field, role: MeasureRole, grid: &Grid) -> Result<Self> {
        density.check_grid(grid)?;
        for j in 0..grid.ny() {
            let mass = grid.mass(density.col(j));
            if !(mass > 0.0 && mass.is_finite()) {
                return Err(Error::InvalidDensity(format!("column {j} has mass {mass}")));
            }
            density.col_mut(j).iter_mut().for_each(|v| *v /= mass);
        }
        Self::new(density, role, grid)
    }

    pub fn uniform(grid: &Grid) -> Self {
        Self {
            density: Field::filled(grid.nx(), grid.ny(), 1.0),
            role: MeasureRole::Mu0,
        }
    }

    /// Loads `x,y,p` densities at cell centers and renormalizes per column.
    pub fn from_csv(path: &Path, grid: &Grid) -> Result<Self> {
        let f = crate::csvio::read_field(path, grid, "p")?;
        Self::normalized(f, MeasureRole::Mu0, grid)
    }

    pub(crate) fn from_parts_unchecked(density: Field, role: MeasureRole) -> Self {
        Self { density, role }
    }

    pub fn density(&self) -> &Field {
        &self.density
    }

    pub fn into_density(self) -> Field {
        self.density
    }

    pub fn role(&self) -> MeasureRole {
        self.role
    }

    pub fn col(&self, j: usize) -> &[f64] {
        self.density.col(j)
    }

    /// Largest `|sum_i p_ij dx - 1|` over columns.
    pub fn max_mass_error(&self, grid: &Grid) -> f64 {
        self.density
            .columns()
            .map(|c| (grid.mass(c) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Per-column L1 distance `sum_i |p_ij - q_ij| dx`.
    pub fn l1_per_column(&self, other: &MeasureField, grid: &Grid) -> Vec<f64> {
        self.density
            .columns()
            .zip(other.density.columns())
            .map(|(a, b)| a.iter().zip(b).map(|(a, b)| (a - b).abs()).sum::<f64>() * grid.dx())
            .collect()
    }
}

/// Mean action per type: `alpha_j = sum_i x_i p_ij dx`.
pub fn alpha_from_measure(m: &MeasureField, grid: &Grid) -> Vec<f64> {
    m.density.columns().map(|c| grid.mean_action(c)).collect()
}

/// Parameters of the river-fishery utility `u = x (A(alpha) - c(y))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisheryParams {
    /// Cost at the downstream end.
    pub c0: f64,
    /// Cost at the upstream end.
    pub c1: f64,
    pub rho: f64,
    /// Regularizer under the square root of the gain.
    pub gamma: f64,
}

impl Default for FisheryParams {
    fn default() -> Self {
        Self {
            c0: std::f64::consts::SQRT_2,
            c1: 10f64.sqrt(),
            rho: 0.05,
            gamma: 1e-9,
        }
    }
}

impl FisheryParams {
    /// Raised cost pair `(2, sqrt(14))`.
    pub fn high_costs() -> Self {
        Self {
            c0: 2.0,
            c1: 14f64.sqrt(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 0.0 && self.c1 > 0.0) {
            return Err(Error::param("c0/c1", "costs must be positive"));
        }
        if !(self.rho > 0.0) {
            return Err(Error::param("rho", "must be positive"));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::param("gamma", "must be nonnegative"));
        }
        Ok(())
    }
}

/// `c(y) = c0 + (c1 - c0)(1 + tanh(rho (y - 1/2))) / 2`
pub fn cost(y: f64, p: &FisheryParams) -> f64 {
    p.c0 + 0.5 * (p.c1 - p.c0) * (1.0 + (p.rho * (y - 0.5)).tanh())
}

/// `A(alpha) = 1 / sqrt(alpha + gamma)`
pub fn gain(alpha: f64, p: &FisheryParams) -> Result<f64> {
    let arg = alpha + p.gamma;
    if !(arg > 0.0) {
        return Err(Error::NonPositiveGainArgument(arg));
    }
    Ok(1.0 / arg.sqrt())
}

/// `|A'(alpha)|` at `alpha`; the Lipschitz constant of the gain on `[alpha, inf)`.
pub fn gain_lipschitz(alpha: f64, p: &FisheryParams) -> f64 {
    0.5 * (alpha + p.gamma).powf(-1.5)
}

pub type GFn = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;
pub type HFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Bounds a general utility must declare for the condition checkers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeclaredBounds {
    pub lipschitz_g: f64,
    pub lipschitz_h: f64,
    /// `max h` over actions.
    pub h_bar: f64,
    /// Upper bound of the coupled utility.
    pub u_bar: f64,
    /// Lipschitz constant of the coupled utility in the measure.
    pub lipschitz_u: f64,
}

/// Local utility `u(x, y, m) = g(x, y, v)` with
/// `v = int h dm - delta/(delta+1) int h dmu0`.
#[derive(Clone)]
pub struct GeneralUtility {
    pub g: Arc<GFn>,
    pub h: Arc<HFn>,
    pub bounds: Option<DeclaredBounds>,
}

impl fmt::Debug for GeneralUtility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralUtility")
            .field("bounds", &self.bounds)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum Utility {
    Fishery(FisheryParams),
    General(GeneralUtility),
    /// Measure-independent local utility.
    Frozen(Field),
}

/// A complete model instance on a fixed grid.
#[derive(Debug, Clone)]
pub struct Scenario {
    grid: Grid,
    rates: RateProfiles,
    mu0: MeasureField,
    utility: Utility,
    kernel: GraphonKernel,
    /// `int h dmu0` per type (`h(x) = x` for the fishery).
    mu0_h_mean: Vec<f64>,
    /// `c(y_j)` for the fishery, `h(x_i)` for general utilities.
    cache: Vec<f64>,
    /// Coupled utility of a frozen local utility.
    frozen_coupled: Option<Field>,
}

impl Scenario {
    pub fn new(
        grid: Grid,
        rates: RateProfiles,
        mu0: MeasureField,
        utility: Utility,
        kernel: GraphonKernel,
    ) -> Result<Self> {
        if rates.len() != grid.ny() {
            return Err(Error::LengthMismatch {
                expected: grid.ny(),
                got: rates.len(),
            });
        }
        mu0.density().check_grid(&grid)?;
        if kernel.ny() != grid.ny() {
            return Err(Error::LengthMismatch {
                expected: grid.ny(),
                got: kernel.ny(),
            });
        }
        let (mu0_h_mean, cache, frozen_coupled) = match &utility {
            Utility::Fishery(p) => {
                p.validate()?;
                let xbar = alpha_from_measure(&mu0, &grid);
                let c = grid.y_centers().iter().map(|&y| cost(y, p)).collect();
                (xbar, c, None)
            }
            Utility::General(gu) => {
                let hx: Vec<f64> = grid.x_centers().iter().map(|&x| (gu.h)(x)).collect();
                let hbar0 = mu0
                    .density()
                    .columns()
                    .map(|c| hx.iter().zip(c).map(|(h, p)| h * p).sum::<f64>() * grid.dx())
                    .collect();
                (hbar0, hx, None)
            }
            Utility::Frozen(u) => {
                u.check_grid(&grid)?;
                let coupled = graphon::convolve(u, &kernel, &grid)?;
                (vec![0.0; grid.ny()], Vec::new(), Some(coupled))
            }
        };
        Ok(Self {
            grid,
            rates,
            mu0,
            utility,
            kernel,
            mu0_h_mean,
            cache,
            frozen_coupled,
        })
    }

    /// Fishery utility with uniform initial measure.
    pub fn fishery(
        grid: Grid,
        rates: RateProfiles,
        params: FisheryParams,
        kernel: GraphonKernel,
    ) -> Result<Self> {
        let mu0 = MeasureField::uniform(&grid);
        Self::new(grid, rates, mu0, Utility::Fishery(params), kernel)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rates(&self) -> &RateProfiles {
        &self.rates
    }

    pub fn mu0(&self) -> &MeasureField {
        &self.mu0
    }

    pub fn utility(&self) -> &Utility {
        &self.utility
    }

    pub fn kernel(&self) -> &GraphonKernel {
        &self.kernel
    }

    pub fn fishery_params(&self) -> Option<&FisheryParams> {
        match &self.utility {
            Utility::Fishery(p) => Some(p),
            _ => None,
        }
    }

    /// Same scenario with different rates (kernel, utility and `mu0` kept).
    pub fn with_rates(&self, rates: RateProfiles) -> Result<Self> {
        Self::new(
            self.grid.clone(),
            rates,
            self.mu0.clone(),
            self.utility.clone(),
            self.kernel.clone(),
        )
    }

    pub fn with_kernel(&self, kernel: GraphonKernel) -> Result<Self> {
        Self::new(
            self.grid.clone(),
            self.rates.clone(),
            self.mu0.clone(),
            self.utility.clone(),
            kernel,
        )
    }

    /// Scalar summary of `m` per type that the local utility depends on:
    /// `alpha_j` for the fishery, `v_j` for general utilities, 0 when frozen.
    pub fn aggregates(&self, m: &Field, out: &mut [f64]) {
        let g = &self.grid;
        match &self.utility {
            Utility::Fishery(_) => {
                for (o, c) in out.iter_mut().zip(m.columns()) {
                    *o = g.mean_action(c);
                }
            }
            Utility::General(_) => {
                for (j, (o, c)) in out.iter_mut().zip(m.columns()).enumerate() {
                    let hm = self.cache.iter().zip(c).map(|(h, p)| h * p).sum::<f64>() * g.dx();
                    let d = self.rates.delta[j];
                    *o = hm - d / (d + 1.0) * self.mu0_h_mean[j];
                }
            }
            Utility::Frozen(_) => out.iter_mut().for_each(|o| *o = 0.0),
        }
    }

    /// Local utility `u[i][j]` given the per-type aggregates.
    pub fn local_utility(&self, aggregates: &[f64]) -> Result<Field> {
        self.check_aggregates(aggregates)?;
        let g = &self.grid;
        match &self.utility {
            Utility::Fishery(p) => {
                let b = self.fishery_margins(p, aggregates)?;
                Ok(Field::from_fn(g.nx(), g.ny(), |i, j| g.x_centers()[i] * b[j]))
            }
            Utility::General(gu) => Ok(Field::from_fn(g.nx(), g.ny(), |i, j| {
                (gu.g)(g.x_centers()[i], g.y_centers()[j], aggregates[j])
            })),
            Utility::Frozen(u) => Ok(u.clone()),
        }
    }

    fn check_aggregates(&self, aggregates: &[f64]) -> Result<()> {
        if aggregates.len() != self.grid.ny() {
            return Err(Error::LengthMismatch {
                expected: self.grid.ny(),
                got: aggregates.len(),
            });
        }
        Ok(())
    }

    /// `gain(alpha_j) - c(y_j)` per type.
    fn fishery_margins(&self, p: &FisheryParams, alpha: &[f64]) -> Result<Vec<f64>> {
        alpha
            .iter()
            .zip(&self.cache)
            .map(|(&a, &c)| Ok(gain(a, p)? - c))
            .collect()
    }

    /// Coupled (graphon-convolved) utility written into `out`.
    ///
    /// The fishery utility is rank one in `(x, type)`, so its convolution
    /// reduces to convolving the per-type margin; other utilities go through
    /// the full convolution.
    pub fn coupled_utility_into(&self, aggregates: &[f64], out: &mut Field, parallel: bool) -> Result<()> {
        self.check_aggregates(aggregates)?;
        out.check_grid(&self.grid)?;
        match &self.utility {
            Utility::Fishery(p) => {
                let b = self.fishery_margins(p, aggregates)?;
                let mut s = vec![0.0; self.grid.ny()];
                self.kernel.apply_to_types(&b, &mut s, parallel);
                let xs = self.grid.x_centers();
                exec::for_each_column(parallel, self.grid.nx(), out.as_mut_slice(), |j, col| {
                    for (o, x) in col.iter_mut().zip(xs) {
                        *o = x * s[j];
                    }
                });
            }
            Utility::General(_) => {
                let u = self.local_utility(aggregates)?;
                graphon::convolve_into(&u, &self.kernel, out, parallel);
            }
            Utility::Frozen(_) => {
                if let Some(c) = &self.frozen_coupled {
                    out.as_mut_slice().copy_from_slice(c.as_slice());
                }
            }
        }
        Ok(())
    }

    pub fn coupled_utility(&self, aggregates: &[f64]) -> Result<Field> {
        let mut out = Field::zeros_on(&self.grid);
        let parallel = exec::Execution::Auto.is_parallel_for(self.grid.cells());
        self.coupled_utility_into(aggregates, &mut out, parallel)?;
        Ok(out)
    }

    /// Coupled utility evaluated at a measure.
    pub fn coupled_utility_at(&self, m: &MeasureField) -> Result<Field> {
        let mut agg = vec![0.0; self.grid.ny()];
        self.aggregates(m.density(), &mut agg);
        self.coupled_utility(&agg)
    }

    /// Smallest mean action reachable by the discounted occupation measure of
    /// type `j`: the `mu0` share plus the logit share at the lowest cell.
    fn fishery_alpha_floor(&self, j: usize) -> f64 {
        let d = self.rates.delta[j];
        d / (d + 1.0) * self.mu0_h_mean[j] + self.grid.x_centers()[0] / (d + 1.0)
    }

    /// `(h_bar, L_g)` for the monotonicity condition.
    pub fn monotonicity_bounds(&self) -> Result<(f64, f64)> {
        match &self.utility {
            Utility::Fishery(p) => {
                let lg = (0..self.grid.ny())
                    .map(|j| gain_lipschitz(self.fishery_alpha_floor(j), p))
                    .fold(0.0, f64::max);
                Ok((1.0, lg))
            }
            Utility::General(gu) => {
                let b = gu.bounds.ok_or(Error::MissingBounds)?;
                Ok((b.h_bar, b.lipschitz_g))
            }
            Utility::Frozen(_) => Ok((0.0, 0.0)),
        }
    }

    /// `(U_bar, L_U)` for the contraction condition: declared for general
    /// utilities, derived from the admissible mean-action range for the fishery.
    pub fn contraction_bounds(&self) -> Result<(f64, f64)> {
        match &self.utility {
            Utility::Fishery(p) => {
                let mut ubar = 0.0f64;
                let mut lu = 0.0f64;
                for j in 0..self.grid.ny() {
                    let a = self.fishery_alpha_floor(j);
                    let c = self.cache[j];
                    ubar = ubar.max((gain(a, p)? - c).abs()).max((gain(1.0, p)? - c).abs());
                    lu = lu.max(gain_lipschitz(a, p));
                }
                Ok((ubar, lu))
            }
            Utility::General(gu) => {
                let b = gu.bounds.ok_or(Error::MissingBounds)?;
                Ok((b.u_bar, b.lipschitz_u))
            }
            Utility::Frozen(u) => {
                let c = self.frozen_coupled.as_ref().unwrap_or(u);
                Ok((c.min().abs().max(c.max().abs()), 0.0))
            }
        }
    }
}
