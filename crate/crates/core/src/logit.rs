//! Max-shifted softmax over one action column.

use crate::grid::Grid;

/// Log-partition of one column, kept in shifted form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnLse {
    /// `max_k phi_k`
    pub phi_max: f64,
    /// `ln(sum_k exp(eta (phi_k - phi_max)) dx)`
    pub shifted: f64,
}

impl ColumnLse {
    /// `ln(sum_k exp(eta phi_k) dx)`
    pub fn value(&self, eta: f64) -> f64 {
        eta * self.phi_max + self.shifted
    }

    /// `ln(sum_k exp(eta (phi_k - phi_i)) dx)` for one entry `phi_i`.
    pub fn relative(&self, eta: f64, phi_i: f64) -> f64 {
        self.shifted + eta * (self.phi_max - phi_i)
    }
}

/// Writes the logit density `exp(eta phi_k) / sum_k exp(eta phi_k) dx` into
/// `out` and returns the column log-partition.
pub fn softmax_into(phi: &[f64], eta: f64, dx: f64, out: &mut [f64]) -> ColumnLse {
    debug_assert_eq!(phi.len(), out.len());
    let phi_max = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &p) in out.iter_mut().zip(phi) {
        let e = (eta * (p - phi_max)).exp();
        *o = e;
        sum += e;
    }
    let z = sum * dx;
    out.iter_mut().for_each(|o| *o /= z);
    ColumnLse {
        phi_max,
        shifted: z.ln(),
    }
}

/// Column log-partition without materializing the density.
pub fn column_lse(phi: &[f64], eta: f64, dx: f64) -> ColumnLse {
    let phi_max = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = phi.iter().map(|&p| (eta * (p - phi_max)).exp()).sum();
    ColumnLse {
        phi_max,
        shifted: (sum * dx).ln(),
    }
}

/// Logit (softmax) density of one value column.
pub fn logit_density(phi: &[f64], eta: f64, grid: &Grid) -> Vec<f64> {
    let mut out = vec![0.0; phi.len()];
    softmax_into(phi, eta, grid.dx(), &mut out);
    out
}

/// Entropy-regularized objective at a density `q` seen from action `i`:
/// `sum_k q_k (phi_k - phi_i) dx - (1/eta) sum_k q_k ln q_k dx`.
pub fn entropy_objective(q: &[f64], phi: &[f64], i: usize, eta: f64, dx: f64) -> f64 {
    let gain: f64 = q.iter().zip(phi).map(|(q, p)| q * (p - phi[i])).sum::<f64>() * dx;
    let ent: f64 = q
        .iter()
        .map(|&q| if q > 0.0 { q * q.ln() } else { 0.0 })
        .sum::<f64>()
        * dx;
    gain - ent / eta
}
