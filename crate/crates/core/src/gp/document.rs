//! Versioned text persistence for trained models.
//!
//! The document stores hyperparameters, standardizers, the standardized
//! training inputs and the Woodbury vector. The Cholesky factor is not
//! stored; loading refactorizes with the same jitter policy, which is
//! deterministic, so a round trip reproduces predictions bit for bit.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::kernel::{gram, squared_distance_matrix, Hyperparams};
use super::likelihood::factorize;
use super::standardize::Standardizer;
use super::{GpError, TrainedGp};

const FORMAT: &str = "vsa-gp-model";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct GpDocument {
    format: String,
    version: u32,
    /// Input axes, for the record: (q in deg, s in Nm/rad).
    input_names: [String; 2],
    /// Output unit, for the record: pressure in bar.
    output_name: String,
    /// Authoritative hyperparameters, stored in the optimizer's log
    /// coordinates so reloading is bit-exact.
    log_hyperparams: [f64; 3],
    /// Readable copies of exp(log_hyperparams): σ_f², l, σ_n².
    signal_variance: f64,
    length_scale: f64,
    noise_variance: f64,
    input_means: Vec<f64>,
    input_stds: Vec<f64>,
    output_mean: f64,
    output_std: f64,
    train_inputs: Vec<[f64; 2]>,
    woodbury: Vec<f64>,
    log_marginal_likelihood: f64,
}

impl TrainedGp {
    /// Serializes the model as a self-describing JSON document.
    pub fn to_document(&self) -> String {
        let h = self.hyperparams();
        let doc = GpDocument {
            format: FORMAT.into(),
            version: VERSION,
            input_names: ["q_deg".into(), "s_nm_per_rad".into()],
            output_name: "p_bar".into(),
            log_hyperparams: h.logs(),
            signal_variance: h.signal_variance(),
            length_scale: h.length_scale(),
            noise_variance: h.noise_variance(),
            input_means: self.input_standardizer().means().to_vec(),
            input_stds: self.input_standardizer().stds().to_vec(),
            output_mean: self.output_standardizer().means()[0],
            output_std: self.output_standardizer().stds()[0],
            train_inputs: self.train_inputs().to_vec(),
            woodbury: self.woodbury_vector().to_vec(),
            log_marginal_likelihood: self.fit_likelihood(),
        };
        serde_json::to_string_pretty(&doc).expect("document serialization cannot fail")
    }

    /// Restores a model from [`TrainedGp::to_document`] output, rebuilding
    /// the Cholesky factor from the stored inputs and hyperparameters.
    pub fn from_document(text: &str) -> Result<Self, GpError> {
        let doc: GpDocument =
            serde_json::from_str(text).map_err(|e| GpError::Document(e.to_string()))?;
        if doc.format != FORMAT {
            return Err(GpError::Document(format!(
                "unknown format `{}`, expected `{FORMAT}`",
                doc.format
            )));
        }
        if doc.version != VERSION {
            return Err(GpError::Document(format!(
                "unsupported version {}, expected {VERSION}",
                doc.version
            )));
        }
        if doc.train_inputs.len() != doc.woodbury.len() {
            return Err(GpError::Document(format!(
                "{} training inputs but {} Woodbury entries",
                doc.train_inputs.len(),
                doc.woodbury.len()
            )));
        }
        if doc.log_hyperparams.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(GpError::Document("non-finite hyperparameters".into()));
        }
        let hyperparams = Hyperparams::from_logs(doc.log_hyperparams);
        let sq = squared_distance_matrix(&doc.train_inputs);
        let k = gram(&sq, &hyperparams);
        let factor = factorize(&k, hyperparams.noise_variance())?;
        Ok(TrainedGp {
            hyperparams,
            input_standardizer: Standardizer::from_parts(doc.input_means, doc.input_stds),
            output_standardizer: Standardizer::from_parts(
                vec![doc.output_mean],
                vec![doc.output_std],
            ),
            train_inputs: doc.train_inputs,
            chol: factor.chol,
            woodbury: DVector::from_vec(doc.woodbury),
            jitter: factor.jitter,
            log_marginal_likelihood: doc.log_marginal_likelihood,
        })
    }
}
