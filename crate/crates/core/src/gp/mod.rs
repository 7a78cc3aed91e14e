//! Exact Gaussian-process regression for the two pressure models.
//!
//! Each bellows gets one GP with inputs `x = (q, s)` and output `y = p`.
//! Inputs and outputs are standardized before training; hyperparameters are
//! fitted by maximizing the marginal likelihood; prediction reuses the
//! cached Cholesky factor and Woodbury vector `α = (K + σ_n²I)⁻¹ y`, so a
//! query costs O(n) for the mean and O(n²) for the variance.

mod dataset;
mod document;
mod kernel;
mod likelihood;
mod optimizer;
mod standardize;

pub use dataset::{Channel, DataError, Dataset, DATASET_CSV_HEADER};
pub use kernel::{kernel_eval, Hyperparams};
pub use likelihood::{log_marginal_likelihood, lml_gradient, BASE_JITTER, MAX_JITTER};
pub use optimizer::{FitOptions, NOISE_VARIANCE_FLOOR};
pub use standardize::Standardizer;

use nalgebra::{Cholesky, DVector, Dyn};
use thiserror::Error;

use crate::seed::derive_seed;
use kernel::{covariance_vector, gram, squared_distance_matrix};

#[derive(Debug, Error)]
pub enum GpError {
    #[error("kernel matrix not positive definite up to jitter {max_jitter:e}")]
    CholeskyFailure { max_jitter: f64 },
    #[error("all {restarts} optimizer restarts ended in Cholesky failure")]
    FitFailure { restarts: usize },
    #[error("hyperparameter {name} must be positive and finite, got {value}")]
    InvalidHyperparam { name: &'static str, value: f64 },
    #[error("non-finite query input ({0}, {1})")]
    NonFiniteInput(f64, f64),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("model document: {0}")]
    Document(String),
}

/// Posterior at one query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// Predictive mean, rescaled to physical output units (bar).
    pub mean: f64,
    /// Predictive variance in squared standardized output units;
    /// bounded by the prior variance `σ_f²`.
    pub variance: f64,
}

/// A fitted pressure model: standardizers, optimized hyperparameters, the
/// Cholesky factor of `K + σ_n²I` and the Woodbury vector `α`. Immutable
/// after [`TrainedGp::fit`] and safe to share across threads for concurrent
/// predictions.
#[derive(Debug, Clone)]
pub struct TrainedGp {
    hyperparams: Hyperparams,
    input_standardizer: Standardizer,
    output_standardizer: Standardizer,
    train_inputs: Vec<[f64; 2]>,
    chol: Cholesky<f64, Dyn>,
    woodbury: DVector<f64>,
    jitter: f64,
    log_marginal_likelihood: f64,
}

impl TrainedGp {
    /// Fits one pressure channel: standardizes inputs and outputs, maximizes
    /// the marginal likelihood over the configured restarts, and caches the
    /// Cholesky factor and Woodbury vector for prediction.
    ///
    /// The restart seed is `opts.seed` mixed with the channel index, so the
    /// same options fit both channels without sharing initial iterates.
    pub fn fit(data: &Dataset, channel: Channel, opts: &FitOptions) -> Result<Self, GpError> {
        let input_standardizer = Standardizer::fit(data.inputs());
        let outputs: Vec<[f64; 1]> = data.outputs(channel).iter().map(|&y| [y]).collect();
        let output_standardizer = Standardizer::fit(&outputs);

        let train_inputs: Vec<[f64; 2]> = data
            .inputs()
            .iter()
            .map(|&x| input_standardizer.apply(x))
            .collect();
        let y_std = DVector::from_iterator(
            outputs.len(),
            outputs.iter().map(|y| output_standardizer.apply(*y)[0]),
        );

        let sq = squared_distance_matrix(&train_inputs);
        let seed = derive_seed(opts.seed, channel.index());
        let (hyperparams, lml) = optimizer::maximize(&sq, &y_std, opts, seed)?;

        let k = gram(&sq, &hyperparams);
        let factor = likelihood::factorize(&k, hyperparams.noise_variance())?;
        let woodbury = factor.chol.solve(&y_std);

        Ok(TrainedGp {
            hyperparams,
            input_standardizer,
            output_standardizer,
            train_inputs,
            chol: factor.chol,
            woodbury,
            jitter: factor.jitter,
            log_marginal_likelihood: lml,
        })
    }

    /// Predictive mean and variance at `x_* = (q_d in deg, s_d in Nm/rad)`.
    ///
    /// Standardizes the query, computes `μ_* = k_*ᵀ α` and
    /// `σ_* = k(x_*,x_*) − ‖L⁻¹ k_*‖²`, and rescales the mean back to bar.
    pub fn predict(&self, q_deg: f64, stiffness: f64) -> Result<Prediction, GpError> {
        let k_star = self.query_covariance(q_deg, stiffness)?;
        let mean_std = k_star.dot(&self.woodbury);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k_star)
            .expect("factor diagonal is positive");
        let variance = (self.hyperparams.signal_variance() - v.norm_squared()).max(0.0);
        Ok(Prediction {
            mean: self.output_standardizer.invert([mean_std])[0],
            variance,
        })
    }

    /// Mean-only prediction in bar; the O(n) path used in the control loop,
    /// where only the covariance vector `k_*` is recalculated per cycle.
    pub fn predict_mean(&self, q_deg: f64, stiffness: f64) -> Result<f64, GpError> {
        let k_star = self.query_covariance(q_deg, stiffness)?;
        let mean_std = k_star.dot(&self.woodbury);
        Ok(self.output_standardizer.invert([mean_std])[0])
    }

    fn query_covariance(&self, q_deg: f64, stiffness: f64) -> Result<DVector<f64>, GpError> {
        if !(q_deg.is_finite() && stiffness.is_finite()) {
            return Err(GpError::NonFiniteInput(q_deg, stiffness));
        }
        let x_std = self.input_standardizer.apply([q_deg, stiffness]);
        Ok(covariance_vector(&self.train_inputs, x_std, &self.hyperparams))
    }

    pub fn len(&self) -> usize {
        self.train_inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_inputs.is_empty()
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    pub fn input_standardizer(&self) -> &Standardizer {
        &self.input_standardizer
    }

    pub fn output_standardizer(&self) -> &Standardizer {
        &self.output_standardizer
    }

    /// Standardized training inputs, in fit order.
    pub fn train_inputs(&self) -> &[[f64; 2]] {
        &self.train_inputs
    }

    /// The cached solve `(K + σ_n²I)⁻¹ y`; constant during control.
    pub fn woodbury_vector(&self) -> &[f64] {
        self.woodbury.as_slice()
    }

    /// Diagonal jitter that was needed to factorize the kernel matrix.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Log marginal likelihood at the fitted hyperparameters.
    pub fn fit_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    /// Lower-triangular Cholesky factor of `K + σ_n²I` (row-major copy).
    pub fn cholesky_lower(&self) -> nalgebra::DMatrix<f64> {
        self.chol.l_dirty().lower_triangle()
    }
}
