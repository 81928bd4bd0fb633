//! Uniform midpoint discretization of the action x type square `[0,1]^2`.
//!
//! Action cells are indexed by `i` (`x_i = (i + 1/2) dx` with zero-based `i`),
//! type cells by `j`. Every integral over actions or types in this crate is
//! the midpoint rule on these cells, summed in ascending index order.

use crate::error::{Error, Result};

/// Summation strategy for quadrature. `Ascending` is what every solver uses;
/// `Compensated` exists to measure rounding drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Summation {
    #[default]
    Ascending,
    Compensated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Grid {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 1 {
            return Err(Error::Sizing { nx, ny });
        }
        let dx = 1.0 / nx as f64;
        let dy = 1.0 / ny as f64;
        let x = (0..nx).map(|i| (i as f64 + 0.5) * dx).collect();
        let y = (0..ny).map(|j| (j as f64 + 0.5) * dy).collect();
        Ok(Self {
            nx,
            ny,
            dx,
            dy,
            x,
            y,
        })
    }

    /// Square grid with `2^level` cells per side.
    pub fn dyadic(level: u32) -> Result<Self> {
        let n = 1usize << level;
        Self::new(n, n)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn x_centers(&self) -> &[f64] {
        &self.x
    }

    pub fn y_centers(&self) -> &[f64] {
        &self.y
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Midpoint rule over actions: `sum_i values_i * dx`.
    pub fn quad_x(&self, values: &[f64]) -> Result<f64> {
        self.quad_x_with(values, Summation::Ascending)
    }

    pub fn quad_x_with(&self, values: &[f64], summation: Summation) -> Result<f64> {
        if values.len() != self.nx {
            return Err(Error::LengthMismatch {
                expected: self.nx,
                got: values.len(),
            });
        }
        let s = match summation {
            Summation::Ascending => values.iter().sum::<f64>(),
            Summation::Compensated => neumaier_sum(values),
        };
        Ok(s * self.dx)
    }

    /// Unchecked ascending midpoint sum over one action column.
    pub(crate) fn mass(&self, col: &[f64]) -> f64 {
        debug_assert_eq!(col.len(), self.nx);
        col.iter().sum::<f64>() * self.dx
    }

    /// Unchecked `sum_i x_i * col_i * dx`.
    pub(crate) fn mean_action(&self, col: &[f64]) -> f64 {
        debug_assert_eq!(col.len(), self.nx);
        self.x.iter().zip(col).map(|(x, p)| x * p).sum::<f64>() * self.dx
    }
}

fn neumaier_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}
