//! Learning-based simultaneous position and stiffness control of an
//! antagonistic pneumatic variable-stiffness actuator (VSA), end to end on a
//! synthetic plant.
//!
//! The crate is organized around the stations of the pipeline:
//!
//! * [`plant`] — synthetic ground-truth actuator: antagonistic bellows torque
//!   law, joint dynamics, valve lag, quantizing sensors.
//! * [`testbench`] — virtual test bench that records training data via the
//!   automated stiffness-measurement protocol (settle, re-zero, ±1° motor
//!   sweep, dual zero-crossing torque regressions).
//! * [`gp`] — exact Gaussian-process regression with a squared-exponential
//!   kernel, marginal-likelihood hyperparameter training and cached-Woodbury
//!   prediction; two of these learn the inverse map (angle, stiffness) →
//!   bellows pressures.
//! * [`control`] — GP feedforward plus low-gain PI feedback on the joint
//!   angle, and the closed-loop tracking experiment.
//! * [`eval`] — repeated randomized k-fold cross-validation with the
//!   two-channel mean absolute error.

pub mod control;
pub mod eval;
pub mod gp;
pub mod plant;
pub mod seed;
pub mod testbench;
