//! Log marginal likelihood and its gradient in log-hyperparameter space.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::kernel::{gram, squared_distance_matrix, Hyperparams};
use super::GpError;

/// Jitter added to the diagonal before every Cholesky factorization.
pub const BASE_JITTER: f64 = 1e-10;
/// Largest jitter tried before the factorization is reported as failed.
pub const MAX_JITTER: f64 = 1e-6;

pub(crate) struct Factor {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

/// Factorizes `K + σ_n²·I` with jitter escalation: start at `BASE_JITTER`,
/// multiply by 10 on failure, give up past `MAX_JITTER`.
pub(crate) fn factorize(k: &DMatrix<f64>, noise_variance: f64) -> Result<Factor, GpError> {
    let n = k.nrows();
    let mut jitter = BASE_JITTER;
    loop {
        let mut ky = k.clone();
        for i in 0..n {
            ky[(i, i)] += noise_variance + jitter;
        }
        match Cholesky::new(ky) {
            Some(chol) => return Ok(Factor { chol, jitter }),
            None => {
                jitter *= 10.0;
                if jitter > MAX_JITTER * (1.0 + 1e-12) {
                    return Err(GpError::CholeskyFailure {
                        max_jitter: MAX_JITTER,
                    });
                }
            }
        }
    }
}

fn lml_from_factor(factor: &Factor, y: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let l = factor.chol.l_dirty();
    let log_det_half: f64 = (0..y.len()).map(|i| l[(i, i)].ln()).sum();
    -0.5 * y.dot(alpha) - log_det_half - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// `log p(y | X, h)` for one standardized output channel, via the Cholesky
/// factor of `K + σ_n²·I`:
///
/// `log p = −½ yᵀα − Σ_i log L_ii − (n/2) log 2π`.
///
/// Fails with [`GpError::CholeskyFailure`] when the kernel matrix is not
/// numerically positive definite even at the maximum jitter, which signals
/// degenerate hyperparameters; the optimizer treats that as a rejected step.
pub fn log_marginal_likelihood(
    inputs: &[[f64; 2]],
    outputs: &[f64],
    h: &Hyperparams,
) -> Result<f64, GpError> {
    let sq = squared_distance_matrix(inputs);
    let y = DVector::from_column_slice(outputs);
    eval_lml(&sq, &y, h).map(|(lml, _)| lml)
}

/// Gradient of the log marginal likelihood with respect to
/// `(log σ_f², log l, log σ_n²)`:
///
/// `∂/∂θ_j = ½ tr((ααᵀ − (K+σ_n²I)⁻¹) · ∂(K+σ_n²I)/∂θ_j)`
///
/// with `∂K/∂log σ_f² = K`, `∂K/∂log l = K ∘ D²/l²` and
/// `∂(K+σ_n²I)/∂log σ_n² = σ_n²·I`.
pub fn lml_gradient(
    inputs: &[[f64; 2]],
    outputs: &[f64],
    h: &Hyperparams,
) -> Result<[f64; 3], GpError> {
    let sq = squared_distance_matrix(inputs);
    let y = DVector::from_column_slice(outputs);
    eval_lml_and_gradient(&sq, &y, h).map(|(_, g)| g)
}

/// LML only; the optimizer's line-search evaluations take this cheaper path.
pub(crate) fn eval_lml(
    sq: &DMatrix<f64>,
    y: &DVector<f64>,
    h: &Hyperparams,
) -> Result<(f64, Factor), GpError> {
    let k = gram(sq, h);
    let factor = factorize(&k, h.noise_variance())?;
    let alpha = factor.chol.solve(y);
    Ok((lml_from_factor(&factor, y, &alpha), factor))
}

/// LML and gradient in one pass, sharing the factorization.
///
/// The contraction `½ tr((ααᵀ − K_y⁻¹)·∂K)` is evaluated as:
/// * log σ_f²: `∂K = K_f`, and with `K_y α = y` the trace collapses to
///   `½[(yᵀα − σ‖α‖²) − (n − σ·tr(K_y⁻¹))]`, `σ` the noise-plus-jitter
///   diagonal — no matrix contraction needed;
/// * log l: `∂K = K_f ∘ D²/l²`, an elementwise sum over the strict lower
///   triangle (the diagonal of D² is zero);
/// * log σ_n²: `∂K_y = σ_n²·I`, so `½σ_n²(‖α‖² − tr(K_y⁻¹))`.
pub(crate) fn eval_lml_and_gradient(
    sq: &DMatrix<f64>,
    y: &DVector<f64>,
    h: &Hyperparams,
) -> Result<(f64, [f64; 3]), GpError> {
    let n = y.len();
    let k = gram(sq, h);
    let factor = factorize(&k, h.noise_variance())?;
    let alpha = factor.chol.solve(y);
    let lml = lml_from_factor(&factor, y, &alpha);

    let w = lower_triangular_inverse(factor.chol.l_dirty());
    let tr_kinv: f64 = w.iter().map(|v| v * v).sum();
    let k_inv_lower = lower_wtw(&w);

    let sigma_eff = h.noise_variance() + factor.jitter;
    let y_dot_alpha = y.dot(&alpha);
    let alpha_norm2 = alpha.norm_squared();

    let g_sf2 = 0.5
        * ((y_dot_alpha - sigma_eff * alpha_norm2) - (n as f64 - sigma_eff * tr_kinv));
    let g_sn2 = 0.5 * h.noise_variance() * (alpha_norm2 - tr_kinv);

    let mut acc = 0.0;
    for j in 0..n {
        for i in (j + 1)..n {
            acc += (alpha[i] * alpha[j] - k_inv_lower[(i, j)]) * k[(i, j)] * sq[(i, j)];
        }
    }
    let g_len = acc / (h.length_scale() * h.length_scale());

    Ok((lml, [g_sf2, g_len, g_sn2]))
}

/// Inverse of a lower-triangular matrix by column-oriented forward
/// substitution; only the lower part of `l` is read.
fn lower_triangular_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut w = DMatrix::zeros(n, n);
    for j in 0..n {
        w[(j, j)] = 1.0;
        for k in j..n {
            let x = w[(k, j)] / l[(k, k)];
            w[(k, j)] = x;
            if x != 0.0 {
                let l_col = l.column(k);
                let mut w_col = w.column_mut(j);
                for i in (k + 1)..n {
                    w_col[i] -= l_col[i] * x;
                }
            }
        }
    }
    w
}

/// Lower triangle of `WᵀW` for lower-triangular `W`:
/// `(WᵀW)_{ij} = Σ_{k ≥ max(i,j)} W_{ki} W_{kj}`.
fn lower_wtw(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let ci = w.column(i);
            let cj = w.column(j);
            let mut s = 0.0;
            for k in i..n {
                s += ci[k] * cj[k];
            }
            out[(i, j)] = s;
        }
    }
    out
}
