//! `vsa` — experiment orchestration for the learning-based VSA control
//! pipeline: dataset recording on the virtual test bench, GP training,
//! cross-validation and closed-loop tracking, each reproducible from a
//! config file and a seed.

mod config;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::RunConfig;
use vsa_core::control::{run_tracking_experiment, TrackingLog};
use vsa_core::eval::{cross_validate, CvReport};
use vsa_core::gp::{Channel, Dataset, TrainedGp};
use vsa_core::seed::derive_seed;
use vsa_core::testbench::{generate_dataset, Bench};

#[derive(Parser)]
#[command(
    name = "vsa",
    about = "Learning-based position and stiffness control of a pneumatic VSA, desk-scale",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file (TOML); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long, default_value = "run-out")]
    out_dir: PathBuf,
    /// Overrides every seed in the config at once.
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted-path config override, e.g. `--set grid.points_per_axis=5`.
    /// The value side uses TOML syntax. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Record a training dataset on the virtual test bench.
    GenerateData {
        #[command(flatten)]
        common: Common,
    },
    /// Train the two pressure models on a recorded dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV produced by generate-data.
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Repeated randomized k-fold cross-validation of the two models.
    CrossValidate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Closed-loop position and stiffness tracking over a setpoint schedule.
    Track {
        #[command(flatten)]
        common: Common,
        /// Channel-I model document from `train`.
        #[arg(long)]
        model_i: PathBuf,
        /// Channel-II model document from `train`.
        #[arg(long)]
        model_ii: PathBuf,
    },
    /// Single-point stiffness probe with the bench protocol.
    MeasureStiffness {
        #[command(flatten)]
        common: Common,
        /// Commanded agonist pressure, bar.
        #[arg(long)]
        p1: f64,
        /// Commanded antagonist pressure, bar.
        #[arg(long)]
        p2: f64,
    },
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            // One machine-readable error line on stderr.
            eprintln!("{}", serde_json::json!({ "error": format!("{e:#}") }));
            std::process::ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenerateData { common } => cmd_generate_data(&common),
        Command::Train { common, dataset } => cmd_train(&common, &dataset),
        Command::CrossValidate { common, dataset } => cmd_cross_validate(&common, &dataset),
        Command::Track {
            common,
            model_i,
            model_ii,
        } => cmd_track(&common, &model_i, &model_ii),
        Command::MeasureStiffness { common, p1, p2 } => cmd_measure_stiffness(&common, p1, p2),
    }
}

/// Prepared output context: effective config plus the snapshot bytes that
/// must land in the output directory.
struct Run {
    config: RunConfig,
    out_dir: PathBuf,
    snapshot: String,
}

impl Run {
    fn prepare(common: &Common) -> Result<Run> {
        let config = RunConfig::load(common.config.as_deref(), &common.overrides, common.seed)?;
        // Copied verbatim when the file is the whole story; re-serialized
        // when overrides changed the effective config.
        let snapshot = match (&common.config, common.overrides.is_empty(), common.seed) {
            (Some(path), true, None) => std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?,
            _ => config.to_toml()?,
        };
        std::fs::create_dir_all(&common.out_dir)
            .with_context(|| format!("creating {}", common.out_dir.display()))?;
        Ok(Run {
            config,
            out_dir: common.out_dir.clone(),
            snapshot,
        })
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    /// Writes the config snapshot and verifies it landed intact; a missing
    /// or mangled snapshot fails the run.
    fn finish(&self) -> Result<()> {
        let path = self.write("config.toml", &self.snapshot)?;
        let back = std::fs::read_to_string(&path)
            .with_context(|| format!("config snapshot missing at {}", path.display()))?;
        if back != self.snapshot {
            bail!("config snapshot at {} does not match the run config", path.display());
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct DatasetMeta {
    seed: u64,
    records: usize,
    grid: vsa_core::testbench::GridSpec,
    plant: vsa_core::plant::PlantParams,
    wall_time_s: f64,
}

fn cmd_generate_data(common: &Common) -> Result<()> {
    let run = Run::prepare(common)?;
    let cfg = &run.config;
    let total = cfg.grid.len();
    eprintln!("recording {total} grid points...");
    let done = AtomicUsize::new(0);
    let started = Instant::now();
    let data = generate_dataset(&cfg.plant, &cfg.grid, cfg.seed, |_, _| {
        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
        if n.is_multiple_of(50) || n == total {
            eprintln!("  {n}/{total}");
        }
    })?;
    let wall = started.elapsed().as_secs_f64();

    let csv_path = run.write("dataset.csv", &data.to_csv())?;
    let meta = DatasetMeta {
        seed: cfg.seed,
        records: data.len(),
        grid: cfg.grid,
        plant: cfg.plant,
        wall_time_s: wall,
    };
    run.write("dataset.meta.json", &serde_json::to_string_pretty(&meta)?)?;
    run.finish()?;
    println!("wrote {} records to {}", data.len(), csv_path.display());
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Dataset::from_csv(&text).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_train(common: &Common, dataset: &Path) -> Result<()> {
    let run = Run::prepare(common)?;
    let data = load_dataset(dataset)?;
    for (channel, file) in [(Channel::I, "model_i.json"), (Channel::II, "model_ii.json")] {
        let gp = TrainedGp::fit(&data, channel, &run.config.gp)
            .with_context(|| format!("fitting channel {}", channel.name()))?;
        let h = gp.hyperparams();
        println!(
            "channel {}: signal_variance = {:.6e}, length_scale = {:.6e}, noise_variance = {:.6e}, log marginal likelihood = {:.3}",
            channel.name(),
            h.signal_variance(),
            h.length_scale(),
            h.noise_variance(),
            gp.fit_likelihood(),
        );
        run.write(file, &gp.to_document())?;
    }
    run.finish()?;
    println!("models written to {}", run.out_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct CvSummary {
    records: usize,
    folds: usize,
    repeats: usize,
    entries: usize,
    grand_mean_mae_bar: f64,
    pooled_mae_bar: f64,
    grand_mean_percent_of_range: f64,
    pooled_percent_of_range: f64,
}

fn cmd_cross_validate(common: &Common, dataset: &Path) -> Result<()> {
    let run = Run::prepare(common)?;
    let data = load_dataset(dataset)?;
    let report: CvReport = cross_validate(&data, &run.config.cv, &run.config.gp)?;
    let range = vsa_core::plant::PRESSURE_MAX - vsa_core::plant::PRESSURE_MIN;
    let summary = CvSummary {
        records: data.len(),
        folds: run.config.cv.folds,
        repeats: run.config.cv.repeats,
        entries: report.entries.len(),
        grand_mean_mae_bar: report.grand_mean_bar(),
        pooled_mae_bar: report.pooled_mae_bar(),
        grand_mean_percent_of_range: 100.0 * report.grand_mean_fraction_of_range(),
        pooled_percent_of_range: 100.0 * report.pooled_mae_bar() / range,
    };
    run.write("cv_report.csv", &report.to_csv())?;
    run.write("cv_summary.json", &serde_json::to_string_pretty(&summary)?)?;
    run.finish()?;
    println!(
        "CV over {} entries: grand mean MAE {:.4e} bar ({:.2}% of range)",
        summary.entries, summary.grand_mean_mae_bar, summary.grand_mean_percent_of_range
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<TrainedGp> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    TrainedGp::from_document(&text).with_context(|| format!("loading model {}", path.display()))
}

fn cmd_track(common: &Common, model_i: &Path, model_ii: &Path) -> Result<()> {
    let run = Run::prepare(common)?;
    let cfg = &run.config;
    let gp_i = load_model(model_i)?;
    let gp_ii = load_model(model_ii)?;
    let schedule = cfg.schedule.expand();
    let log: TrackingLog = run_tracking_experiment(
        &cfg.plant,
        &gp_i,
        &gp_ii,
        &schedule,
        &cfg.controller,
        derive_seed(cfg.seed, 0x7 + 1),
        cfg.tracking.measure_stiffness,
    )?;
    let summary = log.summary();
    run.write("tracking.csv", &log.to_csv())?;
    run.write(
        "tracking_summary.json",
        &serde_json::to_string_pretty(&summary)?,
    )?;
    run.finish()?;

    if summary.pure_feedforward {
        println!("mode: pure feedforward (both gains zero)");
    }
    println!(
        "steady-state angle MAE {:.4} deg over {} setpoints ({} clamp events)",
        summary.overall_steady_mae_deg,
        summary.per_setpoint.len(),
        summary.clamp_events
    );
    for sp in &summary.per_setpoint {
        match (sp.measured_stiffness, sp.stiffness_rel_error) {
            (Some(m), Some(rel)) => println!(
                "  q_d {:+7.2} deg  s_d {:.3} -> measured {:.4} Nm/rad ({:+.2}%)  steady MAE {:.4} deg",
                sp.q_d_deg,
                sp.s_d,
                m,
                100.0 * rel,
                sp.steady_mae_deg
            ),
            _ => println!(
                "  q_d {:+7.2} deg  s_d {:.3}  steady MAE {:.4} deg",
                sp.q_d_deg, sp.s_d, sp.steady_mae_deg
            ),
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct MeasurementOut {
    p_demand_bar: [f64; 2],
    steady_angle_deg: f64,
    slope_up_nm_per_rad: f64,
    slope_down_nm_per_rad: f64,
    stiffness_nm_per_rad: f64,
    samples: usize,
}

fn cmd_measure_stiffness(common: &Common, p1: f64, p2: f64) -> Result<()> {
    let run = Run::prepare(common)?;
    let mut bench = Bench::new(run.config.plant, run.config.seed)?;
    let m = bench.measure_stiffness([p1, p2])?;
    let out = MeasurementOut {
        p_demand_bar: [p1, p2],
        steady_angle_deg: m.steady_angle_deg,
        slope_up_nm_per_rad: m.slope_up,
        slope_down_nm_per_rad: m.slope_down,
        stiffness_nm_per_rad: m.stiffness,
        samples: m.samples.len(),
    };
    let text = serde_json::to_string_pretty(&out)?;
    run.write("measurement.json", &text)?;
    run.finish()?;
    println!("{text}");
    Ok(())
}
