//! Run configuration, case presets, and their expansion into solver inputs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use graphon_logit::hjb::{SolverConfig, SolverMode};
use graphon_logit::scenario::RateProfile;
use graphon_logit::{FisheryParams, GraphonKernel, Grid, MeasureField, RateProfiles, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridSection,
    pub solver: SolverSection,
    pub graphon: GraphonSection,
    pub rates: RatesSection,
    pub utility: UtilitySection,
    pub initial: InitialSection,
    pub outputs: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridSection { nx: 300, ny: 300 },
            solver: SolverSection::default(),
            graphon: GraphonSection::default(),
            rates: RatesSection {
                delta: RateSpec::constant(0.5),
                eta: RateSpec::constant(2.0),
            },
            utility: UtilitySection::default(),
            initial: InitialSection::default(),
            outputs: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    PseudoTime,
    DampedPicard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub dt: f64,
    pub eps: f64,
    pub max_iter: usize,
    pub mode: ModeName,
    /// Damping for `damped_picard`; derived from the rates when absent.
    pub omega: Option<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            dt: d.dt,
            eps: d.eps,
            max_iter: d.max_iter,
            mode: ModeName::PseudoTime,
            omega: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    Gaussian,
    Uniform,
    Identity,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphonSection {
    pub kind: KernelName,
    pub theta: f64,
    /// `l,j,w` table for `custom`.
    pub path: Option<PathBuf>,
    /// Rescale custom kernels to unit column mass.
    pub normalize: bool,
}

impl Default for GraphonSection {
    fn default() -> Self {
        Self {
            kind: KernelName::Gaussian,
            theta: 0.5,
            path: None,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    Constant,
    #[serde(rename = "linear_R")]
    LinearR,
    #[serde(rename = "linear_M")]
    LinearM,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSpec {
    pub kind: ProfileName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl RateSpec {
    pub fn constant(v: f64) -> Self {
        Self {
            kind: ProfileName::Constant,
            value: Some(v),
        }
    }

    fn profile(&self, name: &str) -> Result<RateProfile> {
        match (self.kind, self.value) {
            (ProfileName::Constant, Some(v)) => Ok(RateProfile::Constant(v)),
            (ProfileName::Constant, None) => bail!("rates.{name}: constant profile needs a value"),
            (ProfileName::LinearR, None) => Ok(RateProfile::LinearR),
            (ProfileName::LinearM, None) => Ok(RateProfile::LinearM),
            (_, Some(_)) => bail!("rates.{name}: linear profiles take no value"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub delta: RateSpec,
    pub eta: RateSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UtilitySection {
    pub c0: f64,
    pub c1: f64,
    pub rho: f64,
    pub gamma: f64,
}

impl Default for UtilitySection {
    fn default() -> Self {
        FisheryParams::default().into()
    }
}

impl From<FisheryParams> for UtilitySection {
    fn from(p: FisheryParams) -> Self {
        Self {
            c0: p.c0,
            c1: p.c1,
            rho: p.rho,
            gamma: p.gamma,
        }
    }
}

impl From<UtilitySection> for FisheryParams {
    fn from(u: UtilitySection) -> Self {
        Self {
            c0: u.c0,
            c1: u.c1,
            rho: u.rho,
            gamma: u.gamma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Uniform,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub kind: InitialKind,
    /// `x,y,p` density file for `csv`.
    pub path: Option<PathBuf>,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            kind: InitialKind::Uniform,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emit {
    Phi,
    P,
    Alpha,
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub emit: Vec<Emit>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            emit: vec![Emit::Phi, Emit::P, Emit::Alpha, Emit::Report],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[value(rename_all = "UPPER")]
pub enum CasePreset {
    A,
    B,
    C,
    D,
    R,
    M,
}

impl CasePreset {
    pub const ALL: [CasePreset; 6] = [Self::A, Self::B, Self::C, Self::D, Self::R, Self::M];

    pub fn name(self) -> &'static str {
        match self {
            Self::A => "A",
            Self::B => "B",
            Self::C => "C",
            Self::D => "D",
            Self::R => "R",
            Self::M => "M",
        }
    }

    pub fn rates(self) -> RatesSection {
        let (delta, eta) = match self {
            Self::A => (RateSpec::constant(0.5), 2.0),
            Self::B => (RateSpec::constant(0.5), 200.0),
            Self::C => (RateSpec::constant(0.005), 2.0),
            Self::D => (RateSpec::constant(0.005), 200.0),
            Self::R => (RateSpec { kind: ProfileName::LinearR, value: None }, 200.0),
            Self::M => (RateSpec { kind: ProfileName::LinearM, value: None }, 200.0),
        };
        RatesSection {
            delta,
            eta: RateSpec::constant(eta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Costs {
    #[default]
    Default,
    High,
}

impl Costs {
    pub fn params(self) -> FisheryParams {
        match self {
            Costs::Default => FisheryParams::default(),
            Costs::High => FisheryParams::high_costs(),
        }
    }
}

/// Overlays a preset onto `base`: rates always, the graphon as Gaussian with
/// `theta = 1/2` or identity, and the cost pair when `costs` is given.
pub fn expand_preset(base: &RunConfig, preset: CasePreset, graphon: bool, costs: Option<Costs>) -> RunConfig {
    let mut cfg = base.clone();
    cfg.rates = preset.rates();
    cfg.graphon = if graphon {
        GraphonSection::default()
    } else {
        GraphonSection {
            kind: KernelName::Identity,
            ..GraphonSection::default()
        }
    };
    if let Some(c) = costs {
        let p = c.params();
        cfg.utility.c0 = p.c0;
        cfg.utility.c1 = p.c1;
    }
    cfg
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Same case on an `n x n` grid.
    pub fn with_size(&self, nx: usize, ny: usize) -> Self {
        let mut c = self.clone();
        c.grid = GridSection { nx, ny };
        c
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Ok(Grid::new(self.grid.nx, self.grid.ny)?)
    }

    pub fn build_rates(&self, grid: &Grid) -> Result<RateProfiles> {
        let d = self.rates.delta.profile("delta")?;
        let e = self.rates.eta.profile("eta")?;
        Ok(RateProfiles::from_profiles(d, e, grid)?)
    }

    pub fn build_kernel(&self, grid: &Grid) -> Result<GraphonKernel> {
        let g = &self.graphon;
        Ok(match g.kind {
            KernelName::Gaussian => GraphonKernel::gaussian(g.theta, grid)?,
            KernelName::Uniform => GraphonKernel::uniform(grid),
            KernelName::Identity => GraphonKernel::identity(grid),
            KernelName::Custom => {
                let path = g.path.as_ref().context("graphon.path is required for a custom kernel")?;
                GraphonKernel::from_csv(path, grid, g.normalize)?
            }
        })
    }

    pub fn build_scenario(&self) -> Result<Scenario> {
        let grid = self.build_grid()?;
        let rates = self.build_rates(&grid)?;
        let kernel = self.build_kernel(&grid)?;
        let params: FisheryParams = self.utility.into();
        let mu0 = match self.initial.kind {
            InitialKind::Uniform => MeasureField::uniform(&grid),
            InitialKind::Csv => {
                let path = self.initial.path.as_ref().context("initial.path is required for a csv initial measure")?;
                MeasureField::from_csv(path, &grid)?
            }
        };
        Ok(Scenario::new(
            grid,
            rates,
            mu0,
            graphon_logit::Utility::Fishery(params),
            kernel,
        )?)
    }

    pub fn solver_config(&self, rates: &RateProfiles) -> Result<SolverConfig> {
        let s = &self.solver;
        let mode = match s.mode {
            ModeName::PseudoTime => SolverMode::PseudoTime,
            ModeName::DampedPicard => SolverMode::DampedPicard {
                omega: s.omega.unwrap_or_else(|| SolverConfig::suggested_omega(rates)),
            },
        };
        let cfg = SolverConfig {
            dt: s.dt,
            eps: s.eps,
            max_iter: s.max_iter,
            mode,
            ..SolverConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_d_expands_to_constant_rates() {
        let c = expand_preset(&RunConfig::default(), CasePreset::D, false, None);
        assert_eq!(c.rates.delta, RateSpec::constant(0.005));
        assert_eq!(c.rates.eta, RateSpec::constant(200.0));
        assert_eq!(c.graphon.kind, KernelName::Identity);
        let sc = c.with_size(8, 4).build_scenario().unwrap();
        assert!(sc.rates().delta().iter().all(|&d| d == 0.005));
        assert!(sc.rates().eta().iter().all(|&e| e == 200.0));
    }

    #[test]
    fn preset_r_uses_linear_profile() {
        let c = expand_preset(&RunConfig::default(), CasePreset::R, true, None).with_size(4, 10);
        let sc = c.build_scenario().unwrap();
        for (d, y) in sc.rates().delta().iter().zip(sc.grid().y_centers()) {
            assert!((d - (0.005 + 0.095 * (1.0 - y))).abs() < 1e-15);
        }
        assert!(sc.rates().eta().iter().all(|&e| e == 200.0));
        assert_eq!(c.graphon.kind, KernelName::Gaussian);
        assert_eq!(c.graphon.theta, 0.5);
    }

    #[test]
    fn high_costs() {
        let c = expand_preset(&RunConfig::default(), CasePreset::A, true, Some(Costs::High));
        assert_eq!((c.utility.c0, c.utility.c1), (2.0, 14f64.sqrt()));
    }

    #[test]
    fn expansion_is_pure() {
        let base = RunConfig::default();
        for p in CasePreset::ALL {
            assert_eq!(expand_preset(&base, p, true, None), expand_preset(&base, p, true, None));
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"grid": {"nx": 4, "ny": 4, "nz": 1}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"grid": {"nx": 4, "ny": 2}}"#).unwrap();
        assert_eq!(c.grid, GridSection { nx: 4, ny: 2 });
        assert_eq!(c.solver, SolverSection::default());
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = expand_preset(&RunConfig::default(), CasePreset::M, true, Some(Costs::High));
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
    }
}
