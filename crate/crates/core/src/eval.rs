//! Repeated randomized k-fold cross-validation of the two pressure models.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::{Channel, DataError, Dataset, FitOptions, GpError, TrainedGp};
use crate::plant::{PRESSURE_MAX, PRESSURE_MIN};
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction/truth lists of unequal length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("cannot split {n} records into {folds} folds")]
    InvalidFoldCount { n: usize, folds: usize },
    #[error("empty test fold")]
    EmptyFold,
    #[error("fit failed in repeat {repeat}, fold {fold}: {source}")]
    FitFailed {
        repeat: usize,
        fold: usize,
        #[source]
        source: GpError,
    },
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Cross-validation protocol settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    /// Number of folds `n_f`.
    pub folds: usize,
    /// Number of randomized repetitions `n_CV`.
    pub repeats: usize,
    /// Seed of the fold shuffles (fit seeds are derived from the GP options).
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 10,
            repeats: 20,
            seed: 42,
        }
    }
}

/// Two-channel mean absolute error over a test set, bar:
///
/// `e = (1/(2·n_test)) Σ_j |ŷ_I,j − y_I,j| + |ŷ_II,j − y_II,j|`.
pub fn mae(
    pred_i: &[f64],
    pred_ii: &[f64],
    truth_i: &[f64],
    truth_ii: &[f64],
) -> Result<f64, EvalError> {
    let n = pred_i.len();
    for other in [pred_ii.len(), truth_i.len(), truth_ii.len()] {
        if other != n {
            return Err(EvalError::LengthMismatch(n, other));
        }
    }
    if n == 0 {
        return Err(EvalError::EmptyFold);
    }
    let sum: f64 = (0..n)
        .map(|j| (pred_i[j] - truth_i[j]).abs() + (pred_ii[j] - truth_ii[j]).abs())
        .sum();
    Ok(sum / (2.0 * n as f64))
}

/// Partitions `0..n` into `folds` disjoint index sets covering every index
/// exactly once. Sizes differ by at most one; the remainder goes to the
/// first folds. Deterministic in `seed`.
pub fn kfold_split(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if folds < 2 || folds > n {
        return Err(EvalError::InvalidFoldCount { n, folds });
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);

    let base = n / folds;
    let remainder = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut cursor = 0;
    for f in 0..folds {
        let size = base + usize::from(f < remainder);
        out.push(indices[cursor..cursor + size].to_vec());
        cursor += size;
    }
    Ok(out)
}

/// One (repeat, fold) result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvEntry {
    pub repeat: usize,
    pub fold: usize,
    pub n_test: usize,
    pub mae_bar: f64,
}

/// Header of the CV report CSV.
pub const CV_CSV_HEADER: &str = "repeat,fold,n_test,mae_bar";

/// All `repeats × folds` MAE values plus the two candidate aggregations
/// (the mean of the fold MAEs and the test-size-weighted pooled MAE).
#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub entries: Vec<CvEntry>,
}

impl CvReport {
    /// Arithmetic mean of the per-fold MAE entries, bar.
    pub fn grand_mean_bar(&self) -> f64 {
        self.entries.iter().map(|e| e.mae_bar).sum::<f64>() / self.entries.len().max(1) as f64
    }

    /// Pooled MAE: total absolute error over all test predictions, bar.
    pub fn pooled_mae_bar(&self) -> f64 {
        let weighted: f64 = self
            .entries
            .iter()
            .map(|e| e.mae_bar * e.n_test as f64)
            .sum();
        let total: usize = self.entries.iter().map(|e| e.n_test).sum();
        weighted / total.max(1) as f64
    }

    /// Grand mean as a fraction of the 0–0.4 bar operating range.
    pub fn grand_mean_fraction_of_range(&self) -> f64 {
        self.grand_mean_bar() / (PRESSURE_MAX - PRESSURE_MIN)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CV_CSV_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.repeat, e.fold, e.n_test, e.mae_bar
            ));
        }
        out
    }
}

/// Runs the full protocol: for every repeat the data is reshuffled into
/// `folds` folds; for every fold both GPs are fitted on the remaining data
/// and evaluated on the held-out part with [`mae`]. Jobs are independent
/// and run in parallel; the report is assembled in (repeat, fold) order and
/// is bit-deterministic in `(dataset, cfg, gp_opts)`.
pub fn cross_validate(
    data: &Dataset,
    cfg: &CvConfig,
    gp_opts: &FitOptions,
) -> Result<CvReport, EvalError> {
    let n = data.len();
    if cfg.repeats == 0 {
        return Err(EvalError::InvalidFoldCount { n, folds: cfg.folds });
    }
    let mut splits = Vec::with_capacity(cfg.repeats);
    for repeat in 0..cfg.repeats {
        splits.push(kfold_split(n, cfg.folds, derive_seed(cfg.seed, repeat as u64))?);
    }

    let jobs: Vec<(usize, usize)> = (0..cfg.repeats)
        .flat_map(|r| (0..cfg.folds).map(move |f| (r, f)))
        .collect();

    let entries: Vec<CvEntry> = jobs
        .par_iter()
        .map(|&(repeat, fold)| {
            let test_idx = &splits[repeat][fold];
            let train_idx: Vec<usize> = (0..cfg.folds)
                .filter(|f| *f != fold)
                .flat_map(|f| splits[repeat][f].iter().copied())
                .collect();

            let train = data.subset(&train_idx)?;
            let job = (repeat * cfg.folds + fold) as u64;
            let opts = FitOptions {
                seed: derive_seed(gp_opts.seed, job),
                ..gp_opts.clone()
            };
            let fit = |channel| {
                TrainedGp::fit(&train, channel, &opts).map_err(|source| EvalError::FitFailed {
                    repeat,
                    fold,
                    source,
                })
            };
            let gp_i = fit(Channel::I)?;
            let gp_ii = fit(Channel::II)?;

            let mut pred_i = Vec::with_capacity(test_idx.len());
            let mut pred_ii = Vec::with_capacity(test_idx.len());
            let mut truth_i = Vec::with_capacity(test_idx.len());
            let mut truth_ii = Vec::with_capacity(test_idx.len());
            for &t in test_idx {
                let [q, s] = data.inputs()[t];
                pred_i.push(gp_i.predict_mean(q, s)?);
                pred_ii.push(gp_ii.predict_mean(q, s)?);
                truth_i.push(data.outputs(Channel::I)[t]);
                truth_ii.push(data.outputs(Channel::II)[t]);
            }
            Ok(CvEntry {
                repeat,
                fold,
                n_test: test_idx.len(),
                mae_bar: mae(&pred_i, &pred_ii, &truth_i, &truth_ii)?,
            })
        })
        .collect::<Result<_, EvalError>>()?;

    Ok(CvReport { entries })
}
