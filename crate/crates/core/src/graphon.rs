//! Discretized graphon kernels and the graphon convolution.
//!
//! A kernel is stored as quadrature weights `q[l][j] = w[l][j] * dy`, column
//! `j` contiguous, so that the coupled utility is
//! `U[i][j] = sum_l u[i][l] * q[l][j]` summed in ascending `l`. Built kernels
//! are normalized per column (`sum_l q[l][j] = 1`), which makes the
//! convolution a weighted average over types.

use std::path::Path;

use statrs::function::erf::{erf, erfc};

use crate::error::{Error, Result};
use crate::exec;
use crate::field::Field;
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    Gaussian { theta: f64 },
    Uniform,
    Identity,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphonKernel {
    kind: KernelKind,
    ny: usize,
    dy: f64,
    /// `q[j * ny + l] = w[l][j] * dy`
    q: Vec<f64>,
    column_mass: Vec<f64>,
    normalized: bool,
}

/// Discrete version of the symmetry and integrability conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assumption4Report {
    pub symmetry_dev: f64,
    pub integrability_bound: f64,
    pub min_weight: f64,
}

impl GraphonKernel {
    /// Cell-averaged Gaussian `exp(-(s - y_j)^2 / (2 theta^2))`, normalized per column.
    pub fn gaussian(theta: f64, grid: &Grid) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::param("theta", format!("must be positive, got {theta}")));
        }
        let ny = grid.ny();
        let dy = grid.dy();
        let scale = theta * std::f64::consts::SQRT_2;
        let mut q = vec![0.0; ny * ny];
        for (j, col) in q.chunks_mut(ny).enumerate() {
            let yj = grid.y_centers()[j];
            for (l, v) in col.iter_mut().enumerate() {
                let lo = (l as f64 * dy - yj) / scale;
                let hi = ((l + 1) as f64 * dy - yj) / scale;
                *v = erf_diff(lo, hi);
            }
        }
        Ok(Self::normalized_from(KernelKind::Gaussian { theta }, ny, dy, q))
    }

    /// Constant kernel `w = 1`.
    pub fn uniform(grid: &Grid) -> Self {
        let ny = grid.ny();
        let q = vec![1.0; ny * ny];
        Self::normalized_from(KernelKind::Uniform, ny, grid.dy(), q)
    }

    /// No coupling across types: `w[l][j] = 1{l = j} / dy`.
    pub fn identity(grid: &Grid) -> Self {
        let ny = grid.ny();
        let mut q = vec![0.0; ny * ny];
        for j in 0..ny {
            q[j * ny + j] = 1.0;
        }
        Self {
            kind: KernelKind::Identity,
            ny,
            dy: grid.dy(),
            q,
            column_mass: vec![1.0; ny],
            normalized: true,
        }
    }

    /// Kernel from raw `w[l][j]` values (indexed `w[j * ny + l]`).
    pub fn custom(w: Vec<f64>, grid: &Grid, normalize: bool) -> Result<Self> {
        let ny = grid.ny();
        if w.len() != ny * ny {
            return Err(Error::LengthMismatch {
                expected: ny * ny,
                got: w.len(),
            });
        }
        if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::param(
                "w",
                format!("graphon weights must be finite and nonnegative, found {bad}"),
            ));
        }
        let dy = grid.dy();
        if normalize {
            if let Some(j) = (0..ny).find(|&j| w[j * ny..(j + 1) * ny].iter().all(|&v| v == 0.0)) {
                return Err(Error::param("w", format!("column {} has zero mass", j + 1)));
            }
            Ok(Self::normalized_from(KernelKind::Custom, ny, dy, w))
        } else {
            let q: Vec<f64> = w.iter().map(|v| v * dy).collect();
            let column_mass = q.chunks(ny).map(|c| c.iter().sum()).collect();
            Ok(Self {
                kind: KernelKind::Custom,
                ny,
                dy,
                q,
                column_mass,
                normalized: false,
            })
        }
    }

    /// Loads a kernel from CSV with header `l,j,w` (1-based indices,
    /// `j` outer, `l` inner). Missing entries are zero.
    pub fn from_csv(path: &Path, grid: &Grid, normalize: bool) -> Result<Self> {
        let ny = grid.ny();
        let rows = crate::csvio::read_triples(path, ["l", "j", "w"])?;
        let mut w = vec![0.0; ny * ny];
        for (line, [l, j, v]) in rows.into_iter().enumerate() {
            let l = crate::csvio::as_index(l, ny, path, line, "l")?;
            let j = crate::csvio::as_index(j, ny, path, line, "j")?;
            w[j * ny + l] = v;
        }
        Self::custom(w, grid, normalize)
    }

    fn normalized_from(kind: KernelKind, ny: usize, dy: f64, mut q: Vec<f64>) -> Self {
        for col in q.chunks_mut(ny) {
            let total: f64 = col.iter().sum();
            col.iter_mut().for_each(|v| *v /= total);
        }
        let column_mass = q.chunks(ny).map(|c| c.iter().sum()).collect();
        Self {
            kind,
            ny,
            dy,
            q,
            column_mass,
            normalized: true,
        }
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Kernel value `w[l][j]` (density with respect to the source type).
    pub fn w(&self, l: usize, j: usize) -> f64 {
        self.q[j * self.ny + l] / self.dy
    }

    /// Quadrature weight `w[l][j] * dy`.
    pub fn weight(&self, l: usize, j: usize) -> f64 {
        self.q[j * self.ny + l]
    }

    /// Weights feeding output type `j`, indexed by source type `l`.
    pub fn weights_into(&self, j: usize) -> &[f64] {
        &self.q[j * self.ny..(j + 1) * self.ny]
    }

    pub fn column_mass(&self) -> &[f64] {
        &self.column_mass
    }

    pub fn has_cross_type_coupling(&self) -> bool {
        (0..self.ny).any(|j| {
            self.weights_into(j)
                .iter()
                .enumerate()
                .any(|(l, &v)| l != j && v != 0.0)
        })
    }

    pub fn check_assumption4(&self) -> Assumption4Report {
        let mut symmetry_dev = 0.0f64;
        let mut min_weight = f64::INFINITY;
        for j in 0..self.ny {
            for l in 0..self.ny {
                symmetry_dev = symmetry_dev.max((self.w(l, j) - self.w(j, l)).abs());
                min_weight = min_weight.min(self.w(l, j));
            }
        }
        Assumption4Report {
            symmetry_dev,
            integrability_bound: self.column_mass.iter().copied().fold(0.0, f64::max),
            min_weight,
        }
    }

    /// Applies the kernel to a per-type vector: `out[j] = sum_l b[l] * q[l][j]`.
    pub fn apply_to_types(&self, b: &[f64], out: &mut [f64], parallel: bool) {
        debug_assert_eq!(b.len(), self.ny);
        exec::fill_indexed(parallel, out, |j| {
            self.weights_into(j)
                .iter()
                .zip(b)
                .fold(0.0, |acc, (q, v)| acc + v * q)
        });
    }
}

/// `erf(hi) - erf(lo)` without cancellation in the tails.
fn erf_diff(lo: f64, hi: f64) -> f64 {
    let h = hi - lo;
    if h < 1e-3 {
        // two-term midpoint rule avoids cancellation between nearby erf values
        let m = 0.5 * (lo + hi);
        let f = (-m * m).exp();
        return std::f64::consts::FRAC_2_SQRT_PI * h * f * (1.0 + h * h * (4.0 * m * m - 2.0) / 24.0);
    }
    if lo >= 0.0 {
        erfc(lo) - erfc(hi)
    } else if hi <= 0.0 {
        erfc(-hi) - erfc(-lo)
    } else {
        erf(hi) - erf(lo)
    }
}

/// Graphon convolution `result[i][j] = sum_l u[i][l] * w[l][j] * dy`.
pub fn convolve(u: &Field, kernel: &GraphonKernel, grid: &Grid) -> Result<Field> {
    u.check_grid(grid)?;
    if kernel.ny() != grid.ny() {
        return Err(Error::LengthMismatch {
            expected: grid.ny(),
            got: kernel.ny(),
        });
    }
    let mut out = Field::zeros_on(grid);
    let parallel = exec::Execution::Auto.is_parallel_for(grid.cells() * grid.ny());
    convolve_into(u, kernel, &mut out, parallel);
    Ok(out)
}

pub(crate) fn convolve_into(u: &Field, kernel: &GraphonKernel, out: &mut Field, parallel: bool) {
    let nx = u.nx();
    exec::for_each_column(parallel, nx, out.as_mut_slice(), |j, col| {
        col.iter_mut().for_each(|v| *v = 0.0);
        for (l, &q) in kernel.weights_into(j).iter().enumerate() {
            if q == 0.0 {
                continue;
            }
            for (o, &ul) in col.iter_mut().zip(u.col(l)) {
                *o += ul * q;
            }
        }
    });
}
