//! Zero-mean / unit-variance scaling of GP inputs and outputs.

use serde::{Deserialize, Serialize};

/// Floor on the per-dimension standard deviation. A degenerate dimension
/// (all samples identical) is scaled by this instead of zero, which turns
/// the corresponding GP channel into a constant predictor.
pub const STD_FLOOR: f64 = 1e-12;

/// Per-dimension affine map `z = (x - mean) / std` fitted on training data.
///
/// The Euclidean distance inside the squared-exponential kernel only makes
/// sense on commensurate axes, so inputs are scaled to zero mean and unit
/// variance before training; outputs are scaled the same way to honor the
/// zero-mean prior. Queries are scaled and predictions rescaled with the
/// same maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl Standardizer {
    /// Fits means and population standard deviations on `rows`.
    pub fn fit<const D: usize>(rows: &[[f64; D]]) -> Self {
        let n = rows.len().max(1) as f64;
        let mut means = vec![0.0; D];
        for row in rows {
            for (m, x) in means.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut vars = vec![0.0; D];
        for row in rows {
            for (v, (x, m)) in vars.iter_mut().zip(row.iter().zip(&means)) {
                *v += (x - m) * (x - m);
            }
        }
        let stds = vars.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        Standardizer { means, stds }
    }

    pub fn dims(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    /// Maps a point into standardized coordinates.
    pub fn apply<const D: usize>(&self, x: [f64; D]) -> [f64; D] {
        debug_assert_eq!(D, self.means.len());
        let mut z = [0.0; D];
        for i in 0..D {
            z[i] = (x[i] - self.means[i]) / self.stds[i];
        }
        z
    }

    /// Maps a standardized point back to physical coordinates.
    pub fn invert<const D: usize>(&self, z: [f64; D]) -> [f64; D] {
        debug_assert_eq!(D, self.means.len());
        let mut x = [0.0; D];
        for i in 0..D {
            x[i] = z[i] * self.stds[i] + self.means[i];
        }
        x
    }

    /// Rebuilds a standardizer from stored coefficients.
    pub fn from_parts(means: Vec<f64>, stds: Vec<f64>) -> Self {
        Standardizer { means, stds }
    }
}
