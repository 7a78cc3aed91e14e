//! Learning-based position and stiffness control.
//!
//! Per cycle: the two GPs predict feedforward pressures from the setpoint
//! `(q_d, s_d)`; a low-gain PI controller turns the encoder angle error into
//! a pressure difference `Δp_FB`; the merge law splits that difference
//! equally between the bellows,
//!
//! `p_d = p_FF + (Δp_FB / 2)·(1, −1)`,
//!
//! which leaves the mean pressure — and with it the commanded stiffness —
//! untouched. Joint stiffness is not measurable during operation, so only
//! the angle is fed back.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::{GpError, TrainedGp};
use crate::plant::{PlantError, PlantParams, PRESSURE_MAX, PRESSURE_MIN};
use crate::testbench::{Bench, BenchError};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("empty setpoint schedule")]
    EmptySchedule,
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Bench(#[from] BenchError),
}

/// PI gains and loop timing. The defaults are the iteratively tuned
/// trade-off between tracking accuracy and added stiffness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Proportional gain, bar/deg.
    pub kp_bar_per_deg: f64,
    /// Integral gain, bar/(s·deg).
    pub ki_bar_per_s_deg: f64,
    /// Control cycle time, s.
    pub cycle_time_s: f64,
    /// Lower actuation bound, bar.
    pub pressure_min_bar: f64,
    /// Upper actuation bound, bar.
    pub pressure_max_bar: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            kp_bar_per_deg: 0.025,
            ki_bar_per_s_deg: 0.05,
            cycle_time_s: 1e-3,
            pressure_min_bar: PRESSURE_MIN,
            pressure_max_bar: PRESSURE_MAX,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        if self.kp_bar_per_deg < 0.0 || self.ki_bar_per_s_deg < 0.0 {
            return Err(ControlError::InvalidConfig("gains must be non-negative".into()));
        }
        if !(self.cycle_time_s > 0.0 && self.cycle_time_s <= 0.01) {
            return Err(ControlError::InvalidConfig(format!(
                "cycle_time_s {} outside (0, 0.01]",
                self.cycle_time_s
            )));
        }
        if self.pressure_min_bar >= self.pressure_max_bar {
            return Err(ControlError::InvalidConfig("empty pressure range".into()));
        }
        Ok(())
    }

    /// Pure feedforward: both gains zero.
    pub fn is_pure_feedforward(&self) -> bool {
        self.kp_bar_per_deg == 0.0 && self.ki_bar_per_s_deg == 0.0
    }
}

/// Feedback output is clamped (via the integral state) to this magnitude.
pub const FEEDBACK_LIMIT_BAR: f64 = 0.4;

/// PI controller state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PiState {
    /// Accumulated error, deg·s, clamped so the output stays in bounds.
    pub integral_deg_s: f64,
    /// Last Δp_FB, bar.
    pub last_output_bar: f64,
}

impl PiState {
    pub fn zero() -> Self {
        PiState::default()
    }
}

/// One PI update: integrates the error and returns
/// `Δp_FB = K_P·e + K_I·∫e dt`, with back-calculation anti-windup keeping
/// `|Δp_FB| ≤ 0.4 bar`.
pub fn pi_step(
    state: &PiState,
    error_deg: f64,
    dt: f64,
    cfg: &ControllerConfig,
) -> (PiState, f64) {
    let kp = cfg.kp_bar_per_deg;
    let ki = cfg.ki_bar_per_s_deg;
    let mut integral = state.integral_deg_s + error_deg * dt;
    let mut output = kp * error_deg + ki * integral;
    if output.abs() > FEEDBACK_LIMIT_BAR {
        output = output.clamp(-FEEDBACK_LIMIT_BAR, FEEDBACK_LIMIT_BAR);
        if ki > 0.0 {
            integral = (output - kp * error_deg) / ki;
        }
    }
    (
        PiState {
            integral_deg_s: integral,
            last_output_bar: output,
        },
        output,
    )
}

/// Feedforward pressures from the two trained GPs at `(q_d, s_d)`,
/// clamped to the actuation bounds. Standardization of the query and
/// rescaling of the outputs happen inside the prediction.
pub fn feedforward(
    gp_i: &TrainedGp,
    gp_ii: &TrainedGp,
    q_d_deg: f64,
    s_d: f64,
) -> Result<[f64; 2], GpError> {
    let p1 = gp_i.predict_mean(q_d_deg, s_d)?;
    let p2 = gp_ii.predict_mean(q_d_deg, s_d)?;
    Ok([
        p1.clamp(PRESSURE_MIN, PRESSURE_MAX),
        p2.clamp(PRESSURE_MIN, PRESSURE_MAX),
    ])
}

/// Result of the merge law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeOutcome {
    /// Commanded pressures after clamping to the actuation bounds, bar.
    pub pressures_bar: [f64; 2],
    /// The raw split before clamping; its sum equals the feedforward sum
    /// up to floating-point rounding.
    pub raw_bar: [f64; 2],
    /// True when clamping engaged (mean pressure no longer preserved).
    pub clamped: bool,
}

/// Splits the feedback pressure difference equally between the bellows:
/// `p_d = p_FF + (Δp_FB/2)·(1, −1)`, then clamps per bellows.
pub fn merge(p_ff_bar: [f64; 2], dp_fb_bar: f64) -> MergeOutcome {
    let half = 0.5 * dp_fb_bar;
    let raw = [p_ff_bar[0] + half, p_ff_bar[1] - half];
    let pressures = [
        raw[0].clamp(PRESSURE_MIN, PRESSURE_MAX),
        raw[1].clamp(PRESSURE_MIN, PRESSURE_MAX),
    ];
    MergeOutcome {
        pressures_bar: pressures,
        raw_bar: raw,
        clamped: pressures != raw,
    }
}

/// One target configuration of the tracking experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setpoint {
    pub angle_deg: f64,
    pub stiffness: f64,
    pub hold_s: f64,
}

/// Default tracking schedule: seven target angles, each commanded at a
/// low stiffness and then at double that stiffness, 10 s holds.
pub fn default_schedule() -> Vec<Setpoint> {
    let mut schedule = Vec::new();
    for angle in [-10.0, -5.0, -2.0, 0.0, 2.0, 5.0, 10.0] {
        for stiffness in [0.3, 0.6] {
            schedule.push(Setpoint {
                angle_deg: angle,
                stiffness,
                hold_s: 10.0,
            });
        }
    }
    schedule
}

/// One control-loop tick of the log.
#[derive(Debug, Clone, Copy)]
pub struct TrackingRecord {
    pub t_s: f64,
    pub q_d_deg: f64,
    pub q_meas_deg: f64,
    pub s_d: f64,
    pub p_ff_bar: [f64; 2],
    pub dp_fb_bar: f64,
    pub p_d_bar: [f64; 2],
    pub p_bar: [f64; 2],
    pub clamped: bool,
}

/// Stiffness verification for one setpoint (the gray-area measurement).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StiffnessCheck {
    pub setpoint: usize,
    pub q_d_deg: f64,
    pub s_d: f64,
    /// Commanded pressures the measurement ran at, bar.
    pub p_d_bar: [f64; 2],
    /// Stiffness measured with the bench protocol, Nm/rad.
    pub measured: f64,
}

/// Header of the tracking CSV interchange format.
pub const TRACKING_CSV_HEADER: &str =
    "t_s,q_d_deg,q_meas_deg,s_d,p1_ff,p2_ff,dp_fb,p1_d,p2_d,p1,p2";

/// Fraction of each hold treated as steady state (its trailing part).
pub const STEADY_WINDOW_FRACTION: f64 = 0.5;

/// Complete record of a tracking run.
#[derive(Debug, Clone)]
pub struct TrackingLog {
    pub config: ControllerConfig,
    pub records: Vec<TrackingRecord>,
    /// Tick range of each setpoint hold, in `records`.
    pub setpoint_spans: Vec<(usize, usize)>,
    pub checks: Vec<StiffnessCheck>,
    pub schedule: Vec<Setpoint>,
}

/// Per-setpoint tracking summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetpointSummary {
    pub q_d_deg: f64,
    pub s_d: f64,
    /// Mean |q_meas − q_d| over the trailing half of the hold, deg.
    pub steady_mae_deg: f64,
    pub measured_stiffness: Option<f64>,
    /// (measured − desired)/desired, when measured.
    pub stiffness_rel_error: Option<f64>,
}

/// Whole-run tracking summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackingSummary {
    pub per_setpoint: Vec<SetpointSummary>,
    /// Steady-state MAE pooled over all holds, deg.
    pub overall_steady_mae_deg: f64,
    pub clamp_events: usize,
    pub pure_feedforward: bool,
}

impl TrackingLog {
    pub fn summary(&self) -> TrackingSummary {
        let mut per_setpoint = Vec::with_capacity(self.setpoint_spans.len());
        let mut pooled_abs = 0.0;
        let mut pooled_n = 0usize;
        for (i, &(start, len)) in self.setpoint_spans.iter().enumerate() {
            let sp = self.schedule[i];
            let steady_from = start + ((len as f64) * (1.0 - STEADY_WINDOW_FRACTION)) as usize;
            let window = &self.records[steady_from..start + len];
            let abs_sum: f64 = window
                .iter()
                .map(|r| (r.q_meas_deg - r.q_d_deg).abs())
                .sum();
            pooled_abs += abs_sum;
            pooled_n += window.len();
            let check = self.checks.iter().find(|c| c.setpoint == i);
            per_setpoint.push(SetpointSummary {
                q_d_deg: sp.angle_deg,
                s_d: sp.stiffness,
                steady_mae_deg: abs_sum / window.len().max(1) as f64,
                measured_stiffness: check.map(|c| c.measured),
                stiffness_rel_error: check.map(|c| (c.measured - sp.stiffness) / sp.stiffness),
            });
        }
        TrackingSummary {
            per_setpoint,
            overall_steady_mae_deg: pooled_abs / pooled_n.max(1) as f64,
            clamp_events: self.records.iter().filter(|r| r.clamped).count(),
            pure_feedforward: self.config.is_pure_feedforward(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACKING_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.t_s,
                r.q_d_deg,
                r.q_meas_deg,
                r.s_d,
                r.p_ff_bar[0],
                r.p_ff_bar[1],
                r.dp_fb_bar,
                r.p_d_bar[0],
                r.p_d_bar[1],
                r.p_bar[0],
                r.p_bar[1],
            ));
        }
        out
    }
}

/// Runs the closed loop over the schedule on a fresh plant.
///
/// Per tick: read the encoder, predict the feedforward pressures, update
/// the PI on the quantized angle error, merge, actuate. The integral is
/// reset on every setpoint change. With `measure_stiffness` set, each hold
/// ends with the bench stiffness protocol at the final commanded pressures,
/// with the feedback paused while the motor drives the joint.
pub fn run_tracking_experiment(
    params: &PlantParams,
    gp_i: &TrainedGp,
    gp_ii: &TrainedGp,
    schedule: &[Setpoint],
    cfg: &ControllerConfig,
    seed: u64,
    measure_stiffness: bool,
) -> Result<TrackingLog, ControlError> {
    if schedule.is_empty() {
        return Err(ControlError::EmptySchedule);
    }
    cfg.validate()?;
    let mut bench = Bench::new(*params, seed)?;

    let mut records = Vec::new();
    let mut spans = Vec::with_capacity(schedule.len());
    let mut checks = Vec::new();

    for (index, sp) in schedule.iter().enumerate() {
        let mut pi = PiState::zero();
        let ticks = (sp.hold_s / cfg.cycle_time_s).round() as usize;
        let start = records.len();
        let mut last_command = [0.0, 0.0];

        for _ in 0..ticks {
            let t = bench.state().time_s;
            let reading = bench.read();
            let p_ff = feedforward(gp_i, gp_ii, sp.angle_deg, sp.stiffness)?;
            let error = sp.angle_deg - reading.angle_deg;
            let (next_pi, dp_fb) = pi_step(&pi, error, cfg.cycle_time_s, cfg);
            pi = next_pi;
            let merged = merge(p_ff, dp_fb);
            last_command = merged.pressures_bar;
            bench.step(merged.pressures_bar, &crate::plant::ExternalCoupling::Free)?;
            records.push(TrackingRecord {
                t_s: t,
                q_d_deg: sp.angle_deg,
                q_meas_deg: reading.angle_deg,
                s_d: sp.stiffness,
                p_ff_bar: p_ff,
                dp_fb_bar: dp_fb,
                p_d_bar: merged.pressures_bar,
                p_bar: bench.state().pressures_bar,
                clamped: merged.clamped,
            });
        }
        spans.push((start, records.len() - start));

        if measure_stiffness {
            let m = bench.measure_stiffness(last_command)?;
            checks.push(StiffnessCheck {
                setpoint: index,
                q_d_deg: sp.angle_deg,
                s_d: sp.stiffness,
                p_d_bar: last_command,
                measured: m.stiffness,
            });
        }
    }

    Ok(TrackingLog {
        config: *cfg,
        records,
        setpoint_spans: spans,
        checks,
        schedule: schedule.to_vec(),
    })
}
