//! Monte Carlo simulation of the single-agent jump process.
//!
//! An agent of type `y` starts from `mu0`, and at the jumps of a unit-rate
//! Poisson clock resamples its action cell from the jump density `p*`. The law
//! at an independent `Exp(delta)` time is the discounted occupation measure,
//! and the law at a fixed time `t` solves the transient forward equation.
//!
//! Every sample draws from its own ChaCha stream keyed by `(seed, column,
//! sample)`, and histograms are integer counts, so results do not depend on
//! how samples are spread over threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::grid::Grid;
use crate::scenario::{MeasureField, RateProfiles};

/// Samples per work item handed to the thread pool.
const BLOCK: usize = 4096;

/// Tolerance on the unit mass of input densities.
const INPUT_MASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    /// Samples per type column.
    pub samples: usize,
    pub seed: u64,
    /// Type indices to simulate.
    pub columns: Vec<usize>,
    pub execution: Execution,
}

impl McConfig {
    pub fn new(samples: usize, seed: u64, columns: Vec<usize>) -> Self {
        Self {
            samples,
            seed,
            columns,
            execution: Execution::Auto,
        }
    }

    pub fn validate(&self, ny: usize) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::param("samples", "must be at least 1"));
        }
        if let Some(&j) = self.columns.iter().find(|&&j| j >= ny) {
            return Err(Error::param("columns", format!("index {j} is out of range for {ny} types")));
        }
        Ok(())
    }
}

/// How the state at the observation time is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampler {
    /// Explicit simulation of the exponential jump clock.
    #[default]
    EventLoop,
    /// Closed form: `mu0` if no jump happened before the observation time,
    /// otherwise one draw from `p*`.
    Race,
}

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the stream for one sample.
pub fn sample_seed(master: u64, column: usize, sample: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ column as u64) ^ sample as u64)
}

/// Inverse-CDF sampler over grid cells.
struct CellSampler {
    cdf: Vec<f64>,
}

impl CellSampler {
    fn new(density: &[f64], grid: &Grid, name: &str) -> Result<Self> {
        if density.len() != grid.nx() {
            return Err(Error::LengthMismatch {
                expected: grid.nx(),
                got: density.len(),
            });
        }
        if density.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidDensity(format!("{name} has a negative or non-finite entry")));
        }
        let mut acc = 0.0;
        let cdf: Vec<f64> = density
            .iter()
            .map(|p| {
                acc += p * grid.dx();
                acc
            })
            .collect();
        if (acc - 1.0).abs() > INPUT_MASS_TOL {
            return Err(Error::InvalidDensity(format!("{name} has mass {acc}")));
        }
        Ok(Self { cdf })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = self.cdf[self.cdf.len() - 1];
        let u = rng.random::<f64>() * total;
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

/// Observation time of one sample.
#[derive(Clone, Copy)]
enum Horizon {
    /// Independent `Exp(rate)` killing time.
    Killed(f64),
    Fixed(f64),
}

struct Job<'a> {
    start: CellSampler,
    jump: CellSampler,
    horizon: Horizon,
    sampler: Sampler,
    seed: u64,
    column: usize,
    samples: usize,
    grid: &'a Grid,
}

impl Job<'_> {
    fn one(&self, rng: &mut ChaCha8Rng) -> usize {
        let clock = Exp::new(1.0).expect("unit rate");
        match self.sampler {
            Sampler::EventLoop => {
                let mut x = self.start.draw(rng);
                let end = match self.horizon {
                    Horizon::Killed(rate) => Exp::new(rate).expect("validated rate").sample(rng),
                    Horizon::Fixed(t) => t,
                };
                let mut t = clock.sample(rng);
                while t <= end {
                    x = self.jump.draw(rng);
                    t += clock.sample(rng);
                }
                x
            }
            Sampler::Race => {
                let stay = match self.horizon {
                    Horizon::Killed(rate) => rate / (rate + 1.0),
                    Horizon::Fixed(t) => (-t).exp(),
                };
                if rng.random::<f64>() < stay {
                    self.start.draw(rng)
                } else {
                    self.jump.draw(rng)
                }
            }
        }
    }

    fn counts(&self, range: std::ops::Range<usize>) -> Vec<u64> {
        let mut counts = vec![0u64; self.grid.nx()];
        for s in range {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(self.seed, self.column, s));
            counts[self.one(&mut rng)] += 1;
        }
        counts
    }

    fn run(&self, execution: Execution) -> Vec<f64> {
        let blocks: Vec<std::ops::Range<usize>> = (0..self.samples)
            .step_by(BLOCK)
            .map(|a| a..(a + BLOCK).min(self.samples))
            .collect();
        let parallel = execution.is_parallel_for(self.samples);
        let parts = exec::map_items(parallel, &blocks, |r| self.counts(r.clone()));
        let mut total = vec![0u64; self.grid.nx()];
        for p in parts {
            total.iter_mut().zip(p).for_each(|(t, c)| *t += c);
        }
        let scale = 1.0 / (self.samples as f64 * self.grid.dx());
        total.into_iter().map(|c| c as f64 * scale).collect()
    }
}

/// Empirical density of the state at an `Exp(delta)` time, for type stream
/// `column`. Its expectation is `delta/(delta+1) mu0 + 1/(delta+1) p*`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_discounted(
    pstar_col: &[f64],
    mu0_col: &[f64],
    delta: f64,
    cfg: &McConfig,
    column: usize,
    sampler: Sampler,
    grid: &Grid,
) -> Result<Vec<f64>> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::param("delta", format!("must be positive, got {delta}")));
    }
    run_column(pstar_col, mu0_col, Horizon::Killed(delta), cfg, column, sampler, grid)
}

/// Empirical density of the state at time `t`, for type stream `column`.
/// Its expectation is `exp(-t) mu0 + (1 - exp(-t)) p*`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_mu_t(
    pstar_col: &[f64],
    mu0_col: &[f64],
    t: f64,
    cfg: &McConfig,
    column: usize,
    sampler: Sampler,
    grid: &Grid,
) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::param("t", format!("must be nonnegative, got {t}")));
    }
    run_column(pstar_col, mu0_col, Horizon::Fixed(t), cfg, column, sampler, grid)
}

fn run_column(
    pstar_col: &[f64],
    mu0_col: &[f64],
    horizon: Horizon,
    cfg: &McConfig,
    column: usize,
    sampler: Sampler,
    grid: &Grid,
) -> Result<Vec<f64>> {
    if cfg.samples == 0 {
        return Err(Error::param("samples", "must be at least 1"));
    }
    let job = Job {
        start: CellSampler::new(mu0_col, grid, "mu0")?,
        jump: CellSampler::new(pstar_col, grid, "p*")?,
        horizon,
        sampler,
        seed: cfg.seed,
        column,
        samples: cfg.samples,
        grid,
    };
    Ok(job.run(cfg.execution))
}

/// Runs [`simulate_discounted`] for every column listed in `cfg`.
pub fn simulate_discounted_columns(
    pstar: &MeasureField,
    mu0: &MeasureField,
    rates: &RateProfiles,
    cfg: &McConfig,
    sampler: Sampler,
    grid: &Grid,
) -> Result<Vec<(usize, Vec<f64>)>> {
    cfg.validate(grid.ny())?;
    cfg.columns
        .iter()
        .map(|&j| {
            let h = simulate_discounted(pstar.col(j), mu0.col(j), rates.delta()[j], cfg, j, sampler, grid)?;
            Ok((j, h))
        })
        .collect()
}

/// Expected law `w mu0 + (1 - w) p*` of either simulation.
pub fn mixture(mu0_col: &[f64], pstar_col: &[f64], w: f64) -> Vec<f64> {
    mu0_col
        .iter()
        .zip(pstar_col)
        .map(|(a, b)| w * a + (1.0 - w) * b)
        .collect()
}

/// `sum_i |a_i - b_i| dx`
pub fn l1_distance(a: &[f64], b: &[f64], grid: &Grid) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() * grid.dx()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peaked(grid: &Grid) -> Vec<f64> {
        let raw: Vec<f64> = grid.x_centers().iter().map(|x| (-8.0 * (x - 0.8).powi(2)).exp() + 0.05).collect();
        let z: f64 = raw.iter().sum::<f64>() * grid.dx();
        raw.into_iter().map(|v| v / z).collect()
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let g = Grid::new(16, 1).unwrap();
        let mu0 = vec![1.0; 16];
        let p = peaked(&g);
        let mut cfg = McConfig::new(10_000, 42, vec![0]);
        cfg.execution = Execution::Sequential;
        let a = simulate_discounted(&p, &mu0, 1.0, &cfg, 0, Sampler::EventLoop, &g).unwrap();
        cfg.execution = Execution::Parallel;
        let b = simulate_discounted(&p, &mu0, 1.0, &cfg, 0, Sampler::EventLoop, &g).unwrap();
        assert_eq!(a, b);
        cfg.seed = 43;
        let c = simulate_discounted(&p, &mu0, 1.0, &cfg, 0, Sampler::EventLoop, &g).unwrap();
        assert_ne!(a, c);
        assert!((g.quad_x(&a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn limits() {
        let g = Grid::new(8, 1).unwrap();
        let mu0 = vec![1.0; 8];
        let mut p = vec![0.0; 8];
        p[7] = 8.0;
        let cfg = McConfig::new(20_000, 7, vec![0]);
        let h = simulate_discounted(&p, &mu0, 1e6, &cfg, 0, Sampler::EventLoop, &g).unwrap();
        assert!(l1_distance(&h, &mu0, &g) < 0.03);
        let h = simulate_mu_t(&p, &mu0, 0.0, &cfg, 0, Sampler::EventLoop, &g).unwrap();
        assert!(l1_distance(&h, &mu0, &g) < 0.03);
        let h = simulate_mu_t(&p, &mu0, 40.0, &cfg, 0, Sampler::EventLoop, &g).unwrap();
        assert_eq!(h, p);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = Grid::new(4, 2).unwrap();
        let cfg = McConfig::new(10, 1, vec![0]);
        let ok = vec![1.0; 4];
        assert!(simulate_discounted(&[1.0, 1.0, 1.0, -1.0], &ok, 1.0, &cfg, 0, Sampler::Race, &g).is_err());
        assert!(simulate_discounted(&[2.0; 4], &ok, 1.0, &cfg, 0, Sampler::Race, &g).is_err());
        assert!(simulate_discounted(&ok, &ok, 0.0, &cfg, 0, Sampler::Race, &g).is_err());
        assert!(simulate_mu_t(&ok, &ok, -1.0, &cfg, 0, Sampler::Race, &g).is_err());
        assert!(McConfig::new(10, 1, vec![2]).validate(2).is_err());
        assert!(McConfig::new(0, 1, vec![0]).validate(2).is_err());
    }

    #[test]
    fn seeds_differ_across_columns_and_samples() {
        assert_ne!(sample_seed(1, 0, 0), sample_seed(1, 1, 0));
        assert_ne!(sample_seed(1, 0, 0), sample_seed(1, 0, 1));
        assert_ne!(sample_seed(1, 0, 0), sample_seed(2, 0, 0));
    }
}
