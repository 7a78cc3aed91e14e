//! Reference checks of the GP implementation against independent oracles:
//! a dense-inverse evaluation of the exact-inference equations and central
//! finite differences of the log marginal likelihood. The oracles use plain
//! LU inversion and never touch the Cholesky code path they verify.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vsa_core::gp::{
    kernel_eval, log_marginal_likelihood, lml_gradient, Channel, Dataset, FitOptions,
    Hyperparams, TrainedGp, BASE_JITTER,
};

/// Dense-inverse log marginal likelihood:
/// `−½ yᵀ(K+σ²I)⁻¹y − ½ log det(K+σ²I) − (n/2) log 2π`,
/// with the same base jitter on the diagonal as the implementation.
fn dense_lml(inputs: &[[f64; 2]], y: &[f64], h: &Hyperparams) -> f64 {
    let n = inputs.len();
    let ky = dense_ky(inputs, h);
    let det = ky.determinant();
    let inv = ky.try_inverse().expect("oracle matrix invertible");
    let yv = DVector::from_column_slice(y);
    let quad = (yv.transpose() * &inv * &yv)[(0, 0)];
    -0.5 * quad - 0.5 * det.ln() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

fn dense_ky(inputs: &[[f64; 2]], h: &Hyperparams) -> DMatrix<f64> {
    let n = inputs.len();
    DMatrix::from_fn(n, n, |i, j| {
        kernel_eval(inputs[i], inputs[j], h)
            + if i == j {
                h.noise_variance() + BASE_JITTER
            } else {
                0.0
            }
    })
}

/// Dense-inverse predictive mean and variance in standardized coordinates.
fn dense_predict(
    inputs: &[[f64; 2]],
    y_std: &[f64],
    h: &Hyperparams,
    x_std: [f64; 2],
) -> (f64, f64) {
    let inv = dense_ky(inputs, h).try_inverse().expect("oracle matrix invertible");
    let k_star = DVector::from_iterator(
        inputs.len(),
        inputs.iter().map(|x| kernel_eval(*x, x_std, h)),
    );
    let yv = DVector::from_column_slice(y_std);
    let mean = (k_star.transpose() * &inv * &yv)[(0, 0)];
    let var = kernel_eval(x_std, x_std, h) - (k_star.transpose() * &inv * &k_star)[(0, 0)];
    (mean, var)
}

fn random_case(rng: &mut ChaCha8Rng, n: usize) -> (Vec<[f64; 2]>, Vec<f64>, Hyperparams) {
    let inputs: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
        .collect();
    let y: Vec<f64> = inputs
        .iter()
        .map(|x| (1.3 * x[0]).sin() + 0.7 * x[1] + 0.05 * rng.random_range(-1.0..1.0))
        .collect();
    // Well-conditioned draws so the base jitter never escalates and the
    // oracle sees the same matrix as the implementation.
    let h = Hyperparams::new(
        rng.random_range(0.2..3.0),
        rng.random_range(0.3..2.5),
        rng.random_range(0.05..1.0),
    )
    .unwrap();
    (inputs, y, h)
}

#[test]
fn lml_matches_dense_inverse_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for n in [1, 2, 5, 12, 20] {
        let (inputs, y, h) = random_case(&mut rng, n);
        let ours = log_marginal_likelihood(&inputs, &y, &h).unwrap();
        let oracle = dense_lml(&inputs, &y, &h);
        assert!(
            (ours - oracle).abs() <= 1e-8 * oracle.abs().max(1.0),
            "n = {n}: {ours} vs oracle {oracle}"
        );
    }
}

#[test]
fn prediction_matches_dense_inverse_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for n in [2, 7, 20] {
        let (inputs, p1, _) = random_case(&mut rng, n);
        let p1: Vec<f64> = p1.iter().map(|v| 0.2 + 0.03 * v).collect();
        let data = Dataset::new(inputs, p1, vec![0.1; n]).unwrap();
        let opts = FitOptions {
            restarts: 2,
            max_iterations: 60,
            seed: n as u64,
            ..FitOptions::default()
        };
        let gp = TrainedGp::fit(&data, Channel::I, &opts).unwrap();

        // Rebuild the standardized-space oracle from the fitted model.
        let y_std: Vec<f64> = data
            .outputs(Channel::I)
            .iter()
            .map(|&v| {
                (v - gp.output_standardizer().means()[0]) / gp.output_standardizer().stds()[0]
            })
            .collect();
        for _ in 0..5 {
            let q = rng.random_range(-3.0..3.0);
            let s = rng.random_range(-1.0..1.0);
            let ours = gp.predict(q, s).unwrap();
            let x_std = gp.input_standardizer().apply([q, s]);
            let (mean_std, var) =
                dense_predict(gp.train_inputs(), &y_std, gp.hyperparams(), x_std);
            let mean = mean_std * gp.output_standardizer().stds()[0]
                + gp.output_standardizer().means()[0];
            assert!(
                (ours.mean - mean).abs() <= 1e-8 * mean.abs().max(1.0),
                "mean {} vs oracle {mean}",
                ours.mean
            );
            assert!(
                (ours.variance - var.max(0.0)).abs() <= 1e-8 * var.abs().max(1.0),
                "variance {} vs oracle {var}",
                ours.variance
            );
        }
    }
}

#[test]
fn gradient_matches_central_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let step = 1e-5;
    for case in 0..20 {
        let (inputs, y, h) = random_case(&mut rng, 10);
        let grad = lml_gradient(&inputs, &y, &h).unwrap();
        let logs = h.logs();
        for axis in 0..3 {
            let mut hi = logs;
            let mut lo = logs;
            hi[axis] += step;
            lo[axis] -= step;
            let f_hi = log_marginal_likelihood(&inputs, &y, &Hyperparams::from_logs(hi)).unwrap();
            let f_lo = log_marginal_likelihood(&inputs, &y, &Hyperparams::from_logs(lo)).unwrap();
            let fd = (f_hi - f_lo) / (2.0 * step);
            assert!(
                (grad[axis] - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                "case {case}, axis {axis}: analytic {} vs fd {fd}",
                grad[axis]
            );
        }
    }
}

#[test]
fn prediction_is_invariant_under_training_point_reordering() {
    // Fit once, then permute the stored (input, woodbury) rows of the model
    // document jointly; the exact-inference equations are symmetric in the
    // training points, so predictions must not move.
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let n = 20;
    let (inputs, p1, _) = random_case(&mut rng, n);
    let p1: Vec<f64> = p1.iter().map(|v| 0.2 + 0.03 * v).collect();
    let data = Dataset::new(inputs, p1, vec![0.1; n]).unwrap();
    let gp = TrainedGp::fit(&data, Channel::I, &FitOptions::light(5)).unwrap();

    let mut doc: serde_json::Value = serde_json::from_str(&gp.to_document()).unwrap();
    let perm: Vec<usize> = {
        let mut p: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        p.shuffle(&mut rng);
        p
    };
    for field in ["train_inputs", "woodbury"] {
        let rows = doc[field].as_array().unwrap().clone();
        doc[field] = serde_json::Value::Array(perm.iter().map(|&i| rows[i].clone()).collect());
    }
    let permuted = TrainedGp::from_document(&doc.to_string()).unwrap();

    for _ in 0..20 {
        let q = rng.random_range(-3.0..3.0);
        let s = rng.random_range(-1.0..1.0);
        let a = gp.predict(q, s).unwrap();
        let b = permuted.predict(q, s).unwrap();
        assert!((a.mean - b.mean).abs() <= 1e-10, "{} vs {}", a.mean, b.mean);
        assert!(
            (a.variance - b.variance).abs() <= 1e-10,
            "{} vs {}",
            a.variance,
            b.variance
        );
    }
}

#[test]
fn standardization_absorbs_affine_input_maps() {
    // The same data expressed in shifted/scaled physical units (exact
    // dyadic transforms) must give identical predictions at transformed
    // queries: the standardizers absorb the affine map.
    let inputs: Vec<[f64; 2]> = (0..25)
        .map(|i| [(i % 5) as f64 * 0.25, (i / 5) as f64 * 0.5])
        .collect();
    let outputs: Vec<f64> = inputs
        .iter()
        .map(|x| 0.2 + 0.05 * (x[0] - 0.5) + 0.02 * x[1])
        .collect();
    let shifted: Vec<[f64; 2]> = inputs.iter().map(|x| [4.0 * x[0] + 64.0, 0.5 * x[1] - 8.0]).collect();

    let data_a = Dataset::new(inputs.clone(), outputs.clone(), vec![0.1; 25]).unwrap();
    let data_b = Dataset::new(shifted, outputs, vec![0.1; 25]).unwrap();
    let opts = FitOptions::light(3);
    let gp_a = TrainedGp::fit(&data_a, Channel::I, &opts).unwrap();
    let gp_b = TrainedGp::fit(&data_b, Channel::I, &opts).unwrap();

    for i in 0..40 {
        let q = i as f64 * 0.035;
        let s = (i % 7) as f64 * 0.3;
        let a = gp_a.predict(q, s).unwrap();
        let b = gp_b.predict(4.0 * q + 64.0, 0.5 * s - 8.0).unwrap();
        assert!(
            (a.mean - b.mean).abs() <= 1e-8 * a.mean.abs().max(1.0),
            "{} vs {}",
            a.mean,
            b.mean
        );
    }
}
