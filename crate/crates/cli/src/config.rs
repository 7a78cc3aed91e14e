//! Run configuration: one TOML document covering every subsystem, with
//! dotted-path command-line overrides.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

use vsa_core::control::{ControllerConfig, Setpoint};
use vsa_core::eval::CvConfig;
use vsa_core::gp::FitOptions;
use vsa_core::plant::PlantParams;
use vsa_core::testbench::GridSpec;

/// The tracking schedule in compact form: every angle is commanded at each
/// stiffness level in turn (low first), matching the experiment layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSpec {
    pub angles_deg: Vec<f64>,
    pub stiffness_levels: Vec<f64>,
    pub hold_s: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            angles_deg: vec![-10.0, -5.0, -2.0, 0.0, 2.0, 5.0, 10.0],
            stiffness_levels: vec![0.3, 0.6],
            hold_s: 10.0,
        }
    }
}

impl ScheduleSpec {
    pub fn expand(&self) -> Vec<Setpoint> {
        let mut out = Vec::with_capacity(self.angles_deg.len() * self.stiffness_levels.len());
        for &angle in &self.angles_deg {
            for &stiffness in &self.stiffness_levels {
                out.push(Setpoint {
                    angle_deg: angle,
                    stiffness,
                    hold_s: self.hold_s,
                });
            }
        }
        out
    }
}

/// Tracking-run switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingSpec {
    /// Measure the joint stiffness with the bench protocol after each hold.
    pub measure_stiffness: bool,
}

impl Default for TrackingSpec {
    fn default() -> Self {
        TrackingSpec {
            measure_stiffness: true,
        }
    }
}

/// Everything a run needs; serialized verbatim into the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed of the data-generation and tracking sensor streams. The GP and
    /// CV sections carry their own seeds; `--seed` overrides all of them.
    pub seed: u64,
    pub plant: PlantParams,
    pub grid: GridSpec,
    pub gp: FitOptions,
    pub controller: ControllerConfig,
    pub cv: CvConfig,
    pub schedule: ScheduleSpec,
    pub tracking: TrackingSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            plant: PlantParams::default(),
            grid: GridSpec::default(),
            gp: FitOptions::default(),
            controller: ControllerConfig::default(),
            cv: CvConfig::default(),
            schedule: ScheduleSpec::default(),
            tracking: TrackingSpec::default(),
        }
    }
}

impl RunConfig {
    /// Loads the configuration: the file if given (defaults otherwise),
    /// then dotted-path overrides, then the seed override.
    pub fn load(
        path: Option<&Path>,
        overrides: &[String],
        seed: Option<u64>,
    ) -> Result<RunConfig> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?,
            None => toml::to_string(&RunConfig::default())?,
        };
        let mut value: toml::Value = toml::from_str(&text)
            .with_context(|| "parsing config as TOML")?;
        for assignment in overrides {
            apply_override(&mut value, assignment)?;
        }
        let mut config: RunConfig = value
            .try_into()
            .map_err(|e| anyhow!("invalid config: {e}"))?;
        if let Some(s) = seed {
            config.seed = s;
            config.gp.seed = s;
            config.cv.seed = s;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate().map_err(|e| anyhow!("{e}"))?;
        self.grid.validate().map_err(|e| anyhow!("{e}"))?;
        self.controller.validate().map_err(|e| anyhow!("{e}"))?;
        if self.schedule.angles_deg.is_empty() || self.schedule.stiffness_levels.is_empty() {
            bail!("schedule must contain at least one angle and one stiffness level");
        }
        if self.gp.restarts == 0 || self.gp.max_iterations == 0 {
            bail!("gp.restarts and gp.max_iterations must be positive");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// Applies one `section.key=value` override to the parsed TOML tree. The
/// value side uses TOML syntax (strings quoted, arrays bracketed).
fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<()> {
    let (path, raw_value) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{assignment}` is not of the form key=value"))?;
    let fragment: toml::Value = toml::from_str(&format!("x = {}", raw_value.trim()))
        .with_context(|| format!("parsing override value `{raw_value}`"))?;
    let value = fragment
        .get("x")
        .cloned()
        .ok_or_else(|| anyhow!("empty override value in `{assignment}`"))?;

    let keys: Vec<&str> = path.trim().split('.').collect();
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        node = node
            .as_table_mut()
            .ok_or_else(|| anyhow!("`{key}` is not a table"))?
            .entry(key.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    node.as_table_mut()
        .ok_or_else(|| anyhow!("cannot set `{path}`"))?
        .insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}
