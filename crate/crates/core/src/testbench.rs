//! Virtual test bench: automated acquisition of (angle, stiffness, pressure)
//! training data.
//!
//! Each data point follows the four-step protocol of the real bench:
//!
//! 1. command the pressure pair to the valve controllers,
//! 2. wait 5 s in free mode for the steady-state angle `q_i`,
//! 3. re-zero the motor coordinate, `q̃_m = q_m − q_i`,
//! 4. drive the motor through ±1° and record torques at 500 Hz.
//!
//! Torque is regressed against the measured motor angle once per sweep
//! direction around the zero crossings; the mean of the two slopes is the
//! stiffness measurement `s_i`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::{DataError, Dataset};
use crate::plant::{
    read_sensors, step, ExternalCoupling, PlantError, PlantParams, PlantState, SensorReading,
};
use crate::seed::derive_seed;

/// Free-mode settling time before a measurement, s.
pub const SETTLE_DURATION_S: f64 = 5.0;
/// Settling is rejected if the joint still moves faster than this, rad/s.
pub const SETTLE_VELOCITY_LIMIT: f64 = 1e-3;
/// Motor sweep: one sine period of this length, s.
pub const SWEEP_PERIOD_S: f64 = 4.0;
/// Motor sweep amplitude, deg.
pub const SWEEP_AMPLITUDE_DEG: f64 = 1.0;
/// Regression window around a zero crossing, deg (half the sweep amplitude).
pub const REGRESSION_WINDOW_DEG: f64 = 0.5;
/// Simulation step of the bench, s (the bench cycle time).
pub const SIM_DT: f64 = 1e-3;
/// Sensor sampling interval during the sweep, s (500 Hz torque reads).
pub const SAMPLE_DT: f64 = 2e-3;
/// Minimum samples required inside a regression window.
pub const MIN_REGRESSION_SAMPLES: usize = 10;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("joint not settled after {SETTLE_DURATION_S} s: |q̇| = {velocity} rad/s")]
    NotSettled { velocity: f64 },
    #[error("only {found} samples in the ±{window}° regression window, need {MIN_REGRESSION_SAMPLES}")]
    InsufficientSamples { found: usize, window: f64 },
    #[error("no {direction} zero crossing in the sweep")]
    NoCrossing { direction: &'static str },
    #[error("grid point {index} (p1 = {p1} bar, p2 = {p2} bar): {source}")]
    AtGridPoint {
        index: usize,
        p1: f64,
        p2: f64,
        #[source]
        source: Box<BenchError>,
    },
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Full-factorial pressure grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub pressure_min_bar: f64,
    pub pressure_max_bar: f64,
    /// Points per pressure axis; the dataset has `points_per_axis²` records.
    pub points_per_axis: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            pressure_min_bar: 0.0,
            pressure_max_bar: 0.4,
            points_per_axis: 23,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), PlantError> {
        if self.points_per_axis < 2 {
            return Err(PlantError::InvalidParams(format!(
                "points_per_axis must be at least 2, got {}",
                self.points_per_axis
            )));
        }
        if !(self.pressure_min_bar.is_finite()
            && self.pressure_max_bar.is_finite()
            && self.pressure_min_bar < self.pressure_max_bar
            && self.pressure_min_bar >= 0.0)
        {
            return Err(PlantError::InvalidParams(format!(
                "invalid pressure range [{}, {}]",
                self.pressure_min_bar, self.pressure_max_bar
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points_per_axis * self.points_per_axis
    }

    pub fn is_empty(&self) -> bool {
        self.points_per_axis == 0
    }

    /// The commanded pairs, p1-major, both axes evenly spaced inclusive.
    pub fn pressure_pairs(&self) -> Vec<[f64; 2]> {
        let m = self.points_per_axis;
        let axis: Vec<f64> = (0..m)
            .map(|i| {
                self.pressure_min_bar
                    + (self.pressure_max_bar - self.pressure_min_bar) * i as f64
                        / (m - 1) as f64
            })
            .collect();
        let mut pairs = Vec::with_capacity(m * m);
        for &p1 in &axis {
            for &p2 in &axis {
                pairs.push([p1, p2]);
            }
        }
        pairs
    }
}

/// One torque/angle sample of the motor sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSample {
    /// Measured motor angle relative to the re-zeroed origin, deg.
    pub motor_angle_deg: f64,
    /// Measured torque, Nm.
    pub torque_nm: f64,
}

/// Result of one automated stiffness measurement.
#[derive(Debug, Clone)]
pub struct StiffnessMeasurement {
    /// Encoder-quantized steady-state angle, deg.
    pub steady_angle_deg: f64,
    /// Regression slope at the up-going crossing, Nm/rad.
    pub slope_up: f64,
    /// Regression slope at the down-going crossing, Nm/rad.
    pub slope_down: f64,
    /// Mean of the two slopes, Nm/rad.
    pub stiffness: f64,
    /// The recorded sweep, in sample order.
    pub samples: Vec<SweepSample>,
}

/// Sweep direction at a zero crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDirection {
    Up,
    Down,
}

/// Motor sweep command `q̃_m(t)` in deg: one sine period,
/// amplitude ±1°, period 4 s, starting and ending at 0°. The interior
/// crossings regressed are the down-going one at half period and the
/// up-going return to zero at the end.
pub fn motor_trajectory(t: f64) -> f64 {
    SWEEP_AMPLITUDE_DEG * (2.0 * std::f64::consts::PI * t / SWEEP_PERIOD_S).sin()
}

/// Ordinary least squares of torque against motor angle (converted to rad)
/// over the contiguous monotone segment around the chosen zero crossing,
/// restricted to `|q̃_m| ≤ window_deg`.
pub fn zero_crossing_regression(
    samples: &[SweepSample],
    direction: SweepDirection,
    window_deg: f64,
) -> Result<f64, BenchError> {
    let segment = crossing_segment(samples, direction)?;
    let windowed: Vec<&SweepSample> = segment
        .iter()
        .filter(|s| s.motor_angle_deg.abs() <= window_deg)
        .copied()
        .collect();
    if windowed.len() < MIN_REGRESSION_SAMPLES {
        return Err(BenchError::InsufficientSamples {
            found: windowed.len(),
            window: window_deg,
        });
    }
    let n = windowed.len() as f64;
    let mean_q: f64 =
        windowed.iter().map(|s| s.motor_angle_deg.to_radians()).sum::<f64>() / n;
    let mean_t: f64 = windowed.iter().map(|s| s.torque_nm).sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for s in &windowed {
        let dq = s.motor_angle_deg.to_radians() - mean_q;
        sxy += dq * (s.torque_nm - mean_t);
        sxx += dq * dq;
    }
    Ok(sxy / sxx)
}

/// Splits the sweep into maximal monotone runs and picks the one matching
/// `direction` whose angle range contains zero. When several qualify (the
/// sine touches zero at both ends of the rising half), the one enclosing a
/// sign change wins, then the latest.
fn crossing_segment(
    samples: &[SweepSample],
    direction: SweepDirection,
) -> Result<Vec<&SweepSample>, BenchError> {
    let name = match direction {
        SweepDirection::Up => "up-going",
        SweepDirection::Down => "down-going",
    };
    if samples.len() < 2 {
        return Err(BenchError::NoCrossing { direction: name });
    }
    let rising = matches!(direction, SweepDirection::Up);

    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    let mut prev_dir: Option<bool> = None;
    for i in 1..samples.len() {
        let d = samples[i].motor_angle_deg - samples[i - 1].motor_angle_deg;
        if d == 0.0 {
            continue;
        }
        let dir = d > 0.0;
        if prev_dir.is_some_and(|p| p != dir) {
            runs.push((start, i - 1));
            start = i - 1;
        }
        prev_dir = Some(dir);
    }
    runs.push((start, samples.len() - 1));

    let mut best: Option<(usize, usize)> = None;
    let mut best_signed = false;
    // Zero containment is tested with a hair of slack: a sweep that ends
    // where it started computes its final zero to rounding error only
    // (sin(2π) ≈ −2.4e-16).
    let eps = 1e-9;
    for &(a, b) in &runs {
        let d = samples[b].motor_angle_deg - samples[a].motor_angle_deg;
        if (d > 0.0) != rising || d == 0.0 {
            continue;
        }
        let lo = samples[a].motor_angle_deg.min(samples[b].motor_angle_deg);
        let hi = samples[a].motor_angle_deg.max(samples[b].motor_angle_deg);
        if !(lo <= eps && hi >= -eps) {
            continue;
        }
        let signed = lo < -eps && hi > eps;
        if best.is_none() || (signed && !best_signed) || signed == best_signed {
            best = Some((a, b));
            best_signed = signed;
        }
    }
    match best {
        Some((a, b)) => Ok(samples[a..=b].iter().collect()),
        None => Err(BenchError::NoCrossing { direction: name }),
    }
}

/// A plant wired to the virtual bench: owns the state and the sensor RNG.
#[derive(Debug, Clone)]
pub struct Bench {
    params: PlantParams,
    state: PlantState,
    rng: ChaCha8Rng,
}

impl Bench {
    pub fn new(params: PlantParams, seed: u64) -> Result<Self, BenchError> {
        params.validate()?;
        Ok(Bench {
            params,
            state: PlantState::at_rest(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn params(&self) -> &PlantParams {
        &self.params
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn read(&mut self) -> SensorReading {
        read_sensors(&self.state, &self.params, &mut self.rng)
    }

    /// Advances the plant one bench cycle.
    pub fn step(
        &mut self,
        commanded_bar: [f64; 2],
        coupling: &ExternalCoupling,
    ) -> Result<(), BenchError> {
        self.state = step(&self.state, commanded_bar, coupling, SIM_DT, &self.params)?;
        Ok(())
    }

    /// Protocol steps 1–3: command `p_d`, wait 5 s in free mode, return the
    /// encoder-quantized steady-state angle that re-zeroes the motor
    /// coordinate.
    pub fn settle(&mut self, p_d: [f64; 2]) -> Result<f64, BenchError> {
        let steps = (SETTLE_DURATION_S / SIM_DT).round() as usize;
        for _ in 0..steps {
            self.step(p_d, &ExternalCoupling::Free)?;
        }
        if self.state.velocity_rad_s.abs() > SETTLE_VELOCITY_LIMIT {
            return Err(BenchError::NotSettled {
                velocity: self.state.velocity_rad_s.abs(),
            });
        }
        Ok(self.read().angle_deg)
    }

    /// Protocol steps 1–4 plus the dual regression: settles at `p_d`,
    /// drives the ±1° motor sweep rigidly around the re-zeroed origin while
    /// sampling torque at 500 Hz, regresses both zero crossings and averages
    /// the slopes.
    pub fn measure_stiffness(&mut self, p_d: [f64; 2]) -> Result<StiffnessMeasurement, BenchError> {
        let steady_angle_deg = self.settle(p_d)?;

        let sweep_steps = (SWEEP_PERIOD_S / SIM_DT).round() as usize;
        let sample_every = (SAMPLE_DT / SIM_DT).round() as usize;
        let mut samples = Vec::with_capacity(sweep_steps / sample_every + 1);

        let mut record = |bench: &mut Bench| {
            let reading = read_sensors(&bench.state, &bench.params, &mut bench.rng);
            samples.push(SweepSample {
                // Rigid connection: the measured motor angle is the joint
                // angle, re-zeroed at q_i.
                motor_angle_deg: bench.state.angle_rad.to_degrees() - steady_angle_deg,
                torque_nm: reading.torque_nm,
            });
        };

        record(self);
        for k in 1..=sweep_steps {
            let t = k as f64 * SIM_DT;
            let command_deg = steady_angle_deg + motor_trajectory(t);
            self.step(
                p_d,
                &ExternalCoupling::MotorLocked {
                    motor_angle_rad: command_deg.to_radians(),
                },
            )?;
            if k % sample_every == 0 {
                record(self);
            }
        }

        let slope_up = zero_crossing_regression(&samples, SweepDirection::Up, REGRESSION_WINDOW_DEG)?;
        let slope_down =
            zero_crossing_regression(&samples, SweepDirection::Down, REGRESSION_WINDOW_DEG)?;
        Ok(StiffnessMeasurement {
            steady_angle_deg,
            slope_up,
            slope_down,
            stiffness: 0.5 * (slope_up + slope_down),
            samples,
        })
    }
}

/// Runs the measurement protocol over the full-factorial grid and collects
/// the dataset `(q_i, s_i) → (p_1, p_2)`, with pressures as measured by the
/// valve sensors at steady state.
///
/// Grid points are measured by independent bench instances (parallelized),
/// each with a seed derived from `seed` and the point index; records appear
/// in grid order. `on_point(index, total)` is called as points complete.
pub fn generate_dataset<F>(
    params: &PlantParams,
    grid: &GridSpec,
    seed: u64,
    on_point: F,
) -> Result<Dataset, BenchError>
where
    F: Fn(usize, usize) + Sync,
{
    grid.validate()?;
    params.validate()?;
    let pairs = grid.pressure_pairs();
    let total = pairs.len();

    let records: Vec<(f64, f64, [f64; 2])> = pairs
        .par_iter()
        .enumerate()
        .map(|(index, &p_d)| {
            let mut bench = Bench::new(*params, derive_seed(seed, index as u64))
                .map_err(|e| at_point(index, p_d, e))?;
            let m = bench
                .measure_stiffness(p_d)
                .map_err(|e| at_point(index, p_d, e))?;
            // Pressures as the valve sensors report them at steady state.
            let pressures = bench.read().pressures_bar;
            on_point(index, total);
            Ok((m.steady_angle_deg, m.stiffness, pressures))
        })
        .collect::<Result<_, BenchError>>()?;

    let inputs = records.iter().map(|r| [r.0, r.1]).collect();
    let outputs_i = records.iter().map(|r| r.2[0]).collect();
    let outputs_ii = records.iter().map(|r| r.2[1]).collect();
    Ok(Dataset::new(inputs, outputs_i, outputs_ii)?)
}

fn at_point(index: usize, p: [f64; 2], source: BenchError) -> BenchError {
    BenchError::AtGridPoint {
        index,
        p1: p[0],
        p2: p[1],
        source: Box::new(source),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{analytic_stiffness, equilibrium_angle};

    #[test]
    fn trajectory_endpoints_and_peak() {
        assert_eq!(motor_trajectory(0.0), 0.0);
        assert!((motor_trajectory(1.0) - 1.0).abs() < 1e-12);
        assert!(motor_trajectory(2.0).abs() < 1e-12);
        assert!(motor_trajectory(4.0).abs() < 1e-12);
    }

    #[test]
    fn trajectory_has_two_regressable_interior_crossings() {
        let samples: Vec<SweepSample> = (0..=2000)
            .map(|k| SweepSample {
                motor_angle_deg: motor_trajectory(k as f64 * SAMPLE_DT),
                torque_nm: 0.0,
            })
            .collect();
        assert!(crossing_segment(&samples, SweepDirection::Down).is_ok());
        assert!(crossing_segment(&samples, SweepDirection::Up).is_ok());
        // The down-going crossing is the sign change at half period; the
        // up-going one is the return to zero at the sweep end.
        let down = crossing_segment(&samples, SweepDirection::Down).unwrap();
        assert!(down.iter().any(|s| s.motor_angle_deg > 0.0));
        assert!(down.iter().any(|s| s.motor_angle_deg < 0.0));
        let up = crossing_segment(&samples, SweepDirection::Up).unwrap();
        assert!(up.iter().all(|s| s.motor_angle_deg <= 1e-12));
    }

    #[test]
    fn regression_recovers_an_exact_line() {
        let samples: Vec<SweepSample> = (-40..=40)
            .map(|i| {
                let q = i as f64 * 0.02; // deg
                SweepSample {
                    motor_angle_deg: q,
                    torque_nm: 0.5 * q.to_radians(),
                }
            })
            .collect();
        let slope = zero_crossing_regression(&samples, SweepDirection::Up, 0.5).unwrap();
        assert!((slope - 0.5).abs() < 1e-12);
    }

    #[test]
    fn regression_needs_enough_samples() {
        let samples: Vec<SweepSample> = (0..5)
            .map(|i| SweepSample {
                motor_angle_deg: i as f64 * 0.1 - 0.2,
                torque_nm: 0.0,
            })
            .collect();
        assert!(matches!(
            zero_crossing_regression(&samples, SweepDirection::Up, 0.5),
            Err(BenchError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn settle_examples() {
        // Symmetric pressures settle at 0°.
        let mut bench = Bench::new(PlantParams::default(), 0).unwrap();
        let q = bench.settle([0.2, 0.2]).unwrap();
        assert_eq!(q, 0.0);

        // (0.4, 0) bar: equilibrium 0.24 rad = 13.7510°, encoder-quantized
        // to 13.65°.
        let mut bench = Bench::new(PlantParams::default(), 0).unwrap();
        let q = bench.settle([0.4, 0.0]).unwrap();
        assert!((q - 13.65).abs() < 1e-9, "{q}");
    }

    #[test]
    fn settle_is_independent_of_the_initial_state() {
        let params = PlantParams::default();
        let mut a = Bench::new(params, 0).unwrap();
        a.settle([0.1, 0.3]).unwrap();
        let q_a = a.settle([0.3, 0.05]).unwrap();

        let mut b = Bench::new(params, 0).unwrap();
        let q_b = b.settle([0.3, 0.05]).unwrap();
        assert_eq!(q_a, q_b);
    }

    #[test]
    fn stiffness_measurement_matches_the_plant_on_ideal_sensors() {
        let params = PlantParams::noiseless();
        for p_d in [[0.2, 0.2], [0.0, 0.0], [0.4, 0.1]] {
            let mut bench = Bench::new(params, 0).unwrap();
            let m = bench.measure_stiffness(p_d).unwrap();
            let truth = analytic_stiffness(p_d[0], p_d[1], &params);
            let rel = (m.stiffness - truth).abs() / truth;
            assert!(rel < 0.02, "{p_d:?}: {} vs {truth}", m.stiffness);
            // Hysteresis-free plant: both slopes agree.
            assert!(
                (m.slope_up - m.slope_down).abs() / truth < 1e-6,
                "up {} down {}",
                m.slope_up,
                m.slope_down
            );
        }
    }

    #[test]
    fn stiffness_depends_only_on_the_pressure_sum() {
        let params = PlantParams::default();
        let mut a = Bench::new(params, 0).unwrap();
        let s_a = a.measure_stiffness([0.3, 0.1]).unwrap().stiffness;
        let mut b = Bench::new(params, 0).unwrap();
        let s_b = b.measure_stiffness([0.1, 0.3]).unwrap().stiffness;
        let rel = (s_a - s_b).abs() / s_a;
        assert!(rel < 0.02, "{s_a} vs {s_b}");
    }

    #[test]
    fn underdamped_plant_reports_not_settled() {
        let params = PlantParams {
            damping: 1e-6,
            ..PlantParams::default()
        };
        let mut bench = Bench::new(params, 0).unwrap();
        assert!(matches!(
            bench.settle([0.4, 0.0]),
            Err(BenchError::NotSettled { .. })
        ));
    }

    #[test]
    fn dithered_measurement_mean_is_unbiased() {
        // Torque noise of two quanta dithers the quantization stair; the
        // mean over repeated measurements recovers the true stiffness.
        let params = PlantParams {
            noise: crate::plant::SensorNoise {
                torque_noise_std_nm: 0.002,
                ..Default::default()
            },
            ..PlantParams::default()
        };
        let truth = analytic_stiffness(0.2, 0.2, &params);
        let mut sum = 0.0;
        for seed in 0..100 {
            let mut bench = Bench::new(params, seed).unwrap();
            sum += bench.measure_stiffness([0.2, 0.2]).unwrap().stiffness;
        }
        let mean = sum / 100.0;
        assert!(
            (mean - truth).abs() / truth < 0.01,
            "empirical mean {mean} vs {truth}"
        );
    }

    #[test]
    fn small_grid_dataset_shape_and_determinism() {
        let params = PlantParams::default();
        let grid = GridSpec {
            points_per_axis: 2,
            ..GridSpec::default()
        };
        let a = generate_dataset(&params, &grid, 7, |_, _| {}).unwrap();
        assert_eq!(a.len(), 4);
        let b = generate_dataset(&params, &grid, 7, |_, _| {}).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn dataset_records_track_the_closed_forms() {
        let params = PlantParams::noiseless();
        let grid = GridSpec {
            points_per_axis: 3,
            ..GridSpec::default()
        };
        let data = generate_dataset(&params, &grid, 1, |_, _| {}).unwrap();
        for (x, pair) in data.inputs().iter().zip(grid.pressure_pairs()) {
            let q_true = equilibrium_angle(pair[0], pair[1], &params).to_degrees();
            let s_true = analytic_stiffness(pair[0], pair[1], &params);
            assert!((x[0] - q_true).abs() <= 0.35, "angle {} vs {q_true}", x[0]);
            assert!((x[1] - s_true).abs() / s_true <= 0.02);
        }
        // Full grid coverage, no duplicate records.
        for i in 0..data.len() {
            for j in 0..i {
                assert_ne!(data.inputs()[i], data.inputs()[j]);
            }
        }
    }
}
