//! Squared-exponential covariance and its Gram matrices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::GpError;

/// Kernel and noise hyperparameters, in standardized units.
///
/// Stored as log-values so that any optimizer iterate maps back to a
/// positive parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    log_signal_variance: f64,
    log_length_scale: f64,
    log_noise_variance: f64,
}

impl Hyperparams {
    /// Builds from plain (positive, finite) values.
    pub fn new(
        signal_variance: f64,
        length_scale: f64,
        noise_variance: f64,
    ) -> Result<Self, GpError> {
        for (name, v) in [
            ("signal_variance", signal_variance),
            ("length_scale", length_scale),
            ("noise_variance", noise_variance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(GpError::InvalidHyperparam {
                    name,
                    value: v,
                });
            }
        }
        Ok(Hyperparams {
            log_signal_variance: signal_variance.ln(),
            log_length_scale: length_scale.ln(),
            log_noise_variance: noise_variance.ln(),
        })
    }

    /// Builds directly from log-values `(log σ_f², log l, log σ_n²)`.
    /// Any finite or `-inf` entry is acceptable; `exp` maps it to `[0, ∞)`.
    pub fn from_logs(logs: [f64; 3]) -> Self {
        Hyperparams {
            log_signal_variance: logs[0],
            log_length_scale: logs[1],
            log_noise_variance: logs[2],
        }
    }

    /// `(log σ_f², log l, log σ_n²)` — the optimizer's coordinates.
    pub fn logs(&self) -> [f64; 3] {
        [
            self.log_signal_variance,
            self.log_length_scale,
            self.log_noise_variance,
        ]
    }

    pub fn signal_variance(&self) -> f64 {
        self.log_signal_variance.exp()
    }

    pub fn length_scale(&self) -> f64 {
        self.log_length_scale.exp()
    }

    pub fn noise_variance(&self) -> f64 {
        self.log_noise_variance.exp()
    }
}

/// Squared-exponential covariance,
/// `k(x, x') = σ_f² · exp(−‖x − x'‖² / (2 l²))`,
/// with one shared length scale across both (standardized) input dimensions.
pub fn kernel_eval(x: [f64; 2], x_prime: [f64; 2], h: &Hyperparams) -> f64 {
    let d2 = sqdist(x, x_prime);
    let l = h.length_scale();
    h.signal_variance() * (-0.5 * d2 / (l * l)).exp()
}

fn sqdist(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Pairwise squared distances of the training inputs; computed once per fit
/// and reused by every likelihood evaluation.
pub(crate) fn squared_distance_matrix(points: &[[f64; 2]]) -> DMatrix<f64> {
    let n = points.len();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = sqdist(points[i], points[j]);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Noise-free Gram matrix `K` from precomputed squared distances.
pub(crate) fn gram(sq: &DMatrix<f64>, h: &Hyperparams) -> DMatrix<f64> {
    let sf2 = h.signal_variance();
    let inv_2l2 = 0.5 / (h.length_scale() * h.length_scale());
    let n = sq.nrows();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = sf2 * (-sq[(i, j)] * inv_2l2).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Covariance vector `k_*` between the training inputs and one query.
pub(crate) fn covariance_vector(
    train: &[[f64; 2]],
    x_star: [f64; 2],
    h: &Hyperparams,
) -> DVector<f64> {
    let sf2 = h.signal_variance();
    let inv_2l2 = 0.5 / (h.length_scale() * h.length_scale());
    DVector::from_iterator(
        train.len(),
        train
            .iter()
            .map(|x| sf2 * (-sqdist(*x, x_star) * inv_2l2).exp()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(sf2: f64, l: f64, sn2: f64) -> Hyperparams {
        Hyperparams::new(sf2, l, sn2).unwrap()
    }

    #[test]
    fn identical_points_give_signal_variance() {
        let hp = h(1.0, 1.0, 0.1);
        assert_eq!(kernel_eval([0.3, -0.7], [0.3, -0.7], &hp), 1.0);
    }

    #[test]
    fn unit_diagonal_example() {
        // k((0,0),(1,1)) with σ_f² = 2, l = 1 is 2·exp(−1).
        let hp = h(2.0, 1.0, 0.1);
        let v = kernel_eval([0.0, 0.0], [1.0, 1.0], &hp);
        assert!((v - 2.0 * (-1.0f64).exp()).abs() < 1e-12);
        assert!((v - 0.735759).abs() < 1e-6);
    }

    #[test]
    fn zero_signal_variance_gives_zero() {
        let hp = Hyperparams::from_logs([f64::NEG_INFINITY, 0.0, 0.0]);
        assert_eq!(kernel_eval([0.1, 0.2], [5.0, -3.0], &hp), 0.0);
        assert_eq!(kernel_eval([0.1, 0.2], [0.1, 0.2], &hp), 0.0);
    }

    #[test]
    fn symmetric_in_arguments() {
        let hp = h(1.7, 0.8, 0.01);
        let a = [0.3, 1.4];
        let b = [-2.0, 0.5];
        assert_eq!(kernel_eval(a, b, &hp), kernel_eval(b, a, &hp));
    }

    #[test]
    fn rejects_nonpositive_values() {
        assert!(Hyperparams::new(0.0, 1.0, 1.0).is_err());
        assert!(Hyperparams::new(1.0, -2.0, 1.0).is_err());
        assert!(Hyperparams::new(1.0, 1.0, f64::NAN).is_err());
    }
}
