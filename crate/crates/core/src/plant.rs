//! Synthetic ground-truth VSA standing in for the physical actuator.
//!
//! Two antagonistic bellows act on one joint. Each behaves as a preloaded
//! spring whose rate grows with pressure, so the pressure difference steers
//! the equilibrium angle while the pressure sum sets the joint stiffness:
//!
//! `τ(q, p) = (k0 + k1·p1)(q0 − q) − (k0 + k1·p2)(q0 + q)`
//!
//! which gives the closed forms
//!
//! `q* = q0·k1·(p1 − p2) / (2k0 + k1·(p1 + p2))` and
//! `s  = −∂τ/∂q = 2k0 + k1·(p1 + p2)`.
//!
//! On top of the torque law sit joint dynamics (inertia + viscous damping),
//! a first-order valve lag on the commanded pressures, and quantizing
//! sensors with the resolutions of the real test-bench hardware.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Operating pressure range, bar relative to ambient.
pub const PRESSURE_MIN: f64 = 0.0;
pub const PRESSURE_MAX: f64 = 0.4;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("timestep {0} s outside (0, 0.01]")]
    InvalidTimestep(f64),
    #[error("invalid plant parameter: {0}")]
    InvalidParams(String),
}

/// Sensor imperfections. Quanta default to the hardware resolutions
/// (encoder 0.35°, torque sensor 0.001 Nm, valve pressure sensor 5 mbar);
/// Gaussian torque noise is off by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorNoise {
    pub encoder_quantum_deg: f64,
    pub torque_quantum_nm: f64,
    pub pressure_quantum_bar: f64,
    /// Standard deviation of additive Gaussian torque noise, Nm.
    pub torque_noise_std_nm: f64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        SensorNoise {
            encoder_quantum_deg: 0.35,
            torque_quantum_nm: 0.001,
            pressure_quantum_bar: 0.005,
            torque_noise_std_nm: 0.0,
        }
    }
}

impl SensorNoise {
    /// Ideal sensors: no quantization, no noise.
    pub fn ideal() -> Self {
        SensorNoise {
            encoder_quantum_deg: 0.0,
            torque_quantum_nm: 0.0,
            pressure_quantum_bar: 0.0,
            torque_noise_std_nm: 0.0,
        }
    }
}

/// Ground-truth actuator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    /// Bellows preload offset `q0`, rad.
    pub rest_offset_rad: f64,
    /// Pressure-independent spring rate `k0`, Nm/rad.
    pub base_rate: f64,
    /// Pressure-dependent rate `k1`, Nm/(rad·bar).
    pub pressure_rate: f64,
    /// Joint inertia `J`, kg·m².
    pub inertia: f64,
    /// Viscous damping `d`, Nm·s/rad.
    pub damping: f64,
    /// Valve pressure-control lag `T_v`, s.
    pub valve_time_constant_s: f64,
    /// Symmetric hard stop, rad. Beyond the reachable envelope by default,
    /// so it never engages in normal operation.
    pub angle_limit_rad: f64,
    pub noise: SensorNoise,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            rest_offset_rad: 0.3,
            base_rate: 0.05,
            pressure_rate: 1.0,
            inertia: 1e-3,
            damping: 0.05,
            valve_time_constant_s: 0.05,
            angle_limit_rad: 0.35,
            noise: SensorNoise::default(),
        }
    }
}

impl PlantParams {
    /// Default mechanics with ideal sensors.
    pub fn noiseless() -> Self {
        PlantParams {
            noise: SensorNoise::ideal(),
            ..PlantParams::default()
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("rest_offset_rad", self.rest_offset_rad),
            ("base_rate", self.base_rate),
            ("pressure_rate", self.pressure_rate),
            ("inertia", self.inertia),
            ("damping", self.damping),
            ("valve_time_constant_s", self.valve_time_constant_s),
            ("angle_limit_rad", self.angle_limit_rad),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(PlantError::InvalidParams(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        let q = [
            self.noise.encoder_quantum_deg,
            self.noise.torque_quantum_nm,
            self.noise.pressure_quantum_bar,
            self.noise.torque_noise_std_nm,
        ];
        if q.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(PlantError::InvalidParams(
                "sensor quanta must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Instantaneous plant state; a plain value, advanced by the pure
/// transition function [`step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub angle_rad: f64,
    pub velocity_rad_s: f64,
    /// Actual bellows pressures after the valve lag, bar.
    pub pressures_bar: [f64; 2],
    pub time_s: f64,
}

impl PlantState {
    pub fn at_rest() -> Self {
        PlantState {
            angle_rad: 0.0,
            velocity_rad_s: 0.0,
            pressures_bar: [0.0, 0.0],
            time_s: 0.0,
        }
    }
}

/// How the joint couples to the test-bench motor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExternalCoupling {
    /// No external torque; the joint follows its own dynamics.
    Free,
    /// Rigid connection: the joint angle tracks the motor command exactly.
    MotorLocked { motor_angle_rad: f64 },
}

/// Net joint torque at angle `q` for bellows pressures `(p1, p2)`, Nm.
/// Antisymmetric under the simultaneous swap `(p1 ↔ p2, q ↔ −q)`.
pub fn net_torque(angle_rad: f64, p1: f64, p2: f64, params: &PlantParams) -> f64 {
    let a = params.base_rate + params.pressure_rate * p1;
    let b = params.base_rate + params.pressure_rate * p2;
    a * (params.rest_offset_rad - angle_rad) - b * (params.rest_offset_rad + angle_rad)
}

/// Unique zero of [`net_torque`] in `q` (the denominator is strictly
/// positive for non-negative pressures).
pub fn equilibrium_angle(p1: f64, p2: f64, params: &PlantParams) -> f64 {
    params.rest_offset_rad * params.pressure_rate * (p1 - p2)
        / (2.0 * params.base_rate + params.pressure_rate * (p1 + p2))
}

/// Joint stiffness `s = −∂τ/∂q`, Nm/rad. Depends only on the pressure sum.
pub fn analytic_stiffness(p1: f64, p2: f64, params: &PlantParams) -> f64 {
    2.0 * params.base_rate + params.pressure_rate * (p1 + p2)
}

fn clamp_pressure(p: f64) -> f64 {
    p.clamp(PRESSURE_MIN, PRESSURE_MAX)
}

/// Advances the state by `dt`: first-order valve lag
/// `dp/dt = (p_d − p)/T_v` on both bellows and, in free mode,
/// `J·q̈ = τ(q, p) − d·q̇` integrated with RK4. In motor-locked mode the
/// angle tracks the command and the velocity is its numerical derivative.
/// Pressures are clamped to the operating range and the angle to the stops.
pub fn step(
    state: &PlantState,
    commanded_bar: [f64; 2],
    coupling: &ExternalCoupling,
    dt: f64,
    params: &PlantParams,
) -> Result<PlantState, PlantError> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(PlantError::InvalidTimestep(dt));
    }
    let p_d = [clamp_pressure(commanded_bar[0]), clamp_pressure(commanded_bar[1])];

    let mut next = match coupling {
        ExternalCoupling::Free => {
            // y = (q, q̇, p1, p2)
            let deriv = |y: [f64; 4]| {
                let tau = net_torque(y[0], y[2], y[3], params);
                [
                    y[1],
                    (tau - params.damping * y[1]) / params.inertia,
                    (p_d[0] - y[2]) / params.valve_time_constant_s,
                    (p_d[1] - y[3]) / params.valve_time_constant_s,
                ]
            };
            let y0 = [
                state.angle_rad,
                state.velocity_rad_s,
                state.pressures_bar[0],
                state.pressures_bar[1],
            ];
            let y = rk4(y0, dt, deriv);
            PlantState {
                angle_rad: y[0],
                velocity_rad_s: y[1],
                pressures_bar: [y[2], y[3]],
                time_s: state.time_s + dt,
            }
        }
        ExternalCoupling::MotorLocked { motor_angle_rad } => {
            let deriv = |y: [f64; 2]| {
                [
                    (p_d[0] - y[0]) / params.valve_time_constant_s,
                    (p_d[1] - y[1]) / params.valve_time_constant_s,
                ]
            };
            let p = rk4(
                [state.pressures_bar[0], state.pressures_bar[1]],
                dt,
                deriv,
            );
            PlantState {
                angle_rad: *motor_angle_rad,
                velocity_rad_s: (motor_angle_rad - state.angle_rad) / dt,
                pressures_bar: [p[0], p[1]],
                time_s: state.time_s + dt,
            }
        }
    };

    next.pressures_bar = [
        clamp_pressure(next.pressures_bar[0]),
        clamp_pressure(next.pressures_bar[1]),
    ];
    let limit = params.angle_limit_rad;
    if next.angle_rad.abs() > limit {
        next.angle_rad = next.angle_rad.clamp(-limit, limit);
        if matches!(coupling, ExternalCoupling::Free) {
            next.velocity_rad_s = 0.0;
        }
    }
    Ok(next)
}

fn rk4<const N: usize>(y: [f64; N], dt: f64, f: impl Fn([f64; N]) -> [f64; N]) -> [f64; N] {
    let add = |a: [f64; N], b: [f64; N], scale: f64| {
        let mut out = a;
        for i in 0..N {
            out[i] += scale * b[i];
        }
        out
    };
    let k1 = f(y);
    let k2 = f(add(y, k1, dt / 2.0));
    let k3 = f(add(y, k2, dt / 2.0));
    let k4 = f(add(y, k3, dt));
    let mut out = y;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// One sensor frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorReading {
    /// Encoder angle, degrees, quantized.
    pub angle_deg: f64,
    /// Torque-sensor value, Nm, quantized. Reports the constraint torque
    /// the motor applies in locked mode, `−net_torque(q, p)`.
    pub torque_nm: f64,
    /// Valve pressure sensors, bar, quantized.
    pub pressures_bar: [f64; 2],
}

/// Rounds to the nearest multiple of `quantum`; a non-positive quantum
/// passes the value through.
pub fn quantize(value: f64, quantum: f64) -> f64 {
    if quantum > 0.0 {
        (value / quantum).round() * quantum
    } else {
        value
    }
}

/// Samples the sensors. Gaussian torque noise (if configured) is drawn from
/// `rng` before quantization; with zero noise no random numbers are
/// consumed and repeated reads are identical.
pub fn read_sensors(
    state: &PlantState,
    params: &PlantParams,
    rng: &mut impl Rng,
) -> SensorReading {
    let noise = &params.noise;
    let mut torque = -net_torque(
        state.angle_rad,
        state.pressures_bar[0],
        state.pressures_bar[1],
        params,
    );
    if noise.torque_noise_std_nm > 0.0 {
        let normal = Normal::new(0.0, noise.torque_noise_std_nm)
            .expect("validated standard deviation");
        torque += normal.sample(rng);
    }
    SensorReading {
        angle_deg: quantize(state.angle_rad.to_degrees(), noise.encoder_quantum_deg),
        torque_nm: quantize(torque, noise.torque_quantum_nm),
        pressures_bar: [
            quantize(state.pressures_bar[0], noise.pressure_quantum_bar),
            quantize(state.pressures_bar[1], noise.pressure_quantum_bar),
        ],
    }
}
