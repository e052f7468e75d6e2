//! Command-line surface: dataset generation, training, reachability
//! export, and the arm benchmark. Everything here is deterministic given
//! its flags; reports go to the writer passed in (stdout in the binary)
//! so tests can capture them.

pub mod csvio;
pub mod model;
pub mod svg;

pub use csvio::{
    read_dataset_csv, read_delta_file, write_boxes_csv, write_dataset_csv, BOXES_HEADER,
    DATASET_HEADER,
};
pub use model::{ModelFile, ModelMeta, TrainMethod, MODEL_FORMAT_VERSION};
pub use svg::write_boxes_svg;

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};

use crate::elm::{fit_output_layer, init_random, mse, ElmConfig};
use crate::error::{Error, Result};
use crate::interval::Activation;
use crate::reach::{network_reach, output_radius, ShallowNet, UncertainDataset};
use crate::robotarm::{sample_dataset, ArmGeometry, Zone};
use crate::robust::{train_robust, RobustTrainConfig};

/// Train shallow networks that stay accurate under interval-bounded
/// input perturbations, and certify their reachable output sets.
#[derive(Debug, Parser)]
#[command(name = "reachelm", version)]
pub struct CliArgs {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a two-joint arm dataset and write it as CSV
    Gen(GenOpts),
    /// Fit the output layer of a seeded random network and save the model
    Train(TrainOpts),
    /// Export per-sample reachable output boxes for a saved model
    Reach(ReachOpts),
    /// Run a named benchmark comparing plain and robust training
    Bench {
        #[command(subcommand)]
        suite: BenchSuite,
    },
}

#[derive(Debug, Subcommand)]
pub enum BenchSuite {
    /// Two-joint planar arm, both methods on one shared dataset
    RobotArm(BenchOpts),
}

#[derive(Debug, Args)]
pub struct GenOpts {
    /// Angular zone to sample: normal, buffering, or forbidden
    #[arg(long, value_parser = Zone::from_str)]
    pub zone: Zone,
    /// Number of samples
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Upper arm length
    #[arg(long, default_value_t = 1.0)]
    pub l1: f64,
    /// Forearm length
    #[arg(long, default_value_t = 1.0)]
    pub l2: f64,
    /// Output CSV path
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainOpts {
    /// Training dataset CSV
    #[arg(long)]
    pub data: PathBuf,
    /// elm (plain least squares) or robust (certified SDP fit)
    #[arg(long, value_parser = TrainMethod::from_str)]
    pub method: TrainMethod,
    /// Uniform per-coordinate input radius
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    /// File with one radius per input coordinate; overrides --delta
    #[arg(long)]
    pub delta_file: Option<PathBuf>,
    /// Hidden layer width
    #[arg(long, default_value_t = 10)]
    pub hidden: usize,
    /// Seed for the random hidden layer
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "sigmoid", value_parser = Activation::from_str)]
    pub activation: Activation,
    /// Tikhonov weight for the plain least-squares fit
    #[arg(long, default_value_t = 1e-10)]
    pub ridge: f64,
    /// One multiplier per hidden unit instead of one per deviation
    #[arg(long)]
    pub shared_lambda: bool,
    /// Lower bound on the S-procedure multipliers
    #[arg(long, default_value_t = 0.0)]
    pub lambda_floor: f64,
    /// Where to save the trained model
    #[arg(short, long)]
    pub out: PathBuf,
    /// Emit key=value lines instead of the aligned report
    #[arg(long)]
    pub porcelain: bool,
}

#[derive(Debug, Args)]
pub struct ReachOpts {
    /// Saved model file
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset CSV providing input centers and target points
    #[arg(long)]
    pub data: PathBuf,
    /// Uniform per-coordinate input radius
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    /// Output CSV of per-sample boxes
    #[arg(short, long)]
    pub out: PathBuf,
    /// Also draw the boxes and targets as an SVG figure
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Emit key=value lines instead of plain text
    #[arg(long)]
    pub porcelain: bool,
}

#[derive(Debug, Args)]
pub struct BenchOpts {
    /// Number of training samples from the normal zone
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    /// Seed shared by the sampler and the hidden layer
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Uniform per-coordinate input radius
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    /// Hidden layer width
    #[arg(long, default_value_t = 10)]
    pub hidden: usize,
    /// One multiplier per hidden unit instead of one per deviation
    #[arg(long)]
    pub shared_lambda: bool,
    /// Also write the dataset, both models, and the table to a directory
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Outcome of a training run, echoed back to the user.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub method: TrainMethod,
    pub n_samples: usize,
    pub n_hidden: usize,
    pub activation: Activation,
    pub seed: u64,
    /// Largest per-coordinate input radius in effect.
    pub delta: f64,
    pub radius: f64,
    pub mse: f64,
    pub gamma: Option<f64>,
    pub solver_iterations: Option<usize>,
    pub wall_time: Duration,
}

impl RunReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<12}{}", "method", self.method);
        let _ = writeln!(s, "{:<12}{}", "samples", self.n_samples);
        let _ = writeln!(s, "{:<12}{}", "hidden", self.n_hidden);
        let _ = writeln!(s, "{:<12}{}", "activation", self.activation.name());
        let _ = writeln!(s, "{:<12}{}", "seed", self.seed);
        let _ = writeln!(s, "{:<12}{}", "delta", self.delta);
        let _ = writeln!(s, "{:<12}{:.6e}", "radius", self.radius);
        let _ = writeln!(s, "{:<12}{:.6e}", "mse", self.mse);
        if let Some(g) = self.gamma {
            let _ = writeln!(s, "{:<12}{:.6e}", "gamma", g);
        }
        if let Some(it) = self.solver_iterations {
            let _ = writeln!(s, "{:<12}{}", "iterations", it);
        }
        let _ = writeln!(s, "{:<12}{:.2}s", "wall_time", self.wall_time.as_secs_f64());
        s
    }

    pub fn render_porcelain(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method={}", self.method);
        let _ = writeln!(s, "samples={}", self.n_samples);
        let _ = writeln!(s, "hidden={}", self.n_hidden);
        let _ = writeln!(s, "activation={}", self.activation.name());
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "delta={:.17e}", self.delta);
        let _ = writeln!(s, "radius={:.17e}", self.radius);
        let _ = writeln!(s, "mse={:.17e}", self.mse);
        if let Some(g) = self.gamma {
            let _ = writeln!(s, "gamma={g:.17e}");
        }
        if let Some(it) = self.solver_iterations {
            let _ = writeln!(s, "iterations={it}");
        }
        let _ = writeln!(s, "wall_time_s={:.3}", self.wall_time.as_secs_f64());
        s
    }
}

/// Maps crate errors onto the documented process exit codes: 2 for I/O,
/// 3 for solver breakdowns, 64 for bad argument values, 65 for malformed
/// or mismatched data. Usage errors caught by the flag parser never reach
/// this function; the binary maps those to 64 itself.
pub fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io(_) => 2,
        Error::Solver(_) => 3,
        Error::InvalidArgument { .. } => 64,
        _ => 65,
    }
}

pub fn run<W: Write>(args: &CliArgs, out: &mut W) -> Result<()> {
    match &args.command {
        Command::Gen(opts) => cmd_gen(opts),
        Command::Train(opts) => cmd_train(opts, out).map(|_| ()),
        Command::Reach(opts) => cmd_reach(opts, out).map(|_| ()),
        Command::Bench { suite } => match suite {
            BenchSuite::RobotArm(opts) => cmd_bench(opts, out),
        },
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::InvalidArgument {
            name: "delta",
            reason: format!("must be finite and non-negative, got {delta}"),
        });
    }
    Ok(())
}

pub fn cmd_gen(opts: &GenOpts) -> Result<()> {
    let geom = ArmGeometry {
        l1: opts.l1,
        l2: opts.l2,
    };
    let data = sample_dataset(&geom, opts.zone, opts.n, opts.seed)?;
    write_dataset_csv(&opts.out, &data)?;
    eprintln!(
        "wrote {} {} samples to {}",
        data.n_samples(),
        opts.zone,
        opts.out.display()
    );
    Ok(())
}

pub fn cmd_train<W: Write>(opts: &TrainOpts, out: &mut W) -> Result<RunReport> {
    check_delta(opts.delta)?;
    let start = Instant::now();
    let data = read_dataset_csv(&opts.data)?;
    let udata = match &opts.delta_file {
        Some(path) => {
            let deltas = read_delta_file(path)?;
            UncertainDataset::from_column_deltas(&data, &deltas)?
        }
        None => UncertainDataset::from_uniform_delta(&data, opts.delta)?,
    };

    let cfg = ElmConfig {
        n_hidden: opts.hidden,
        activation: opts.activation,
        seed: opts.seed,
        ridge: opts.ridge,
        ..ElmConfig::default()
    };
    let net0 = init_random(&cfg, data.inputs.ncols(), data.targets.ncols())?;

    let (net, gamma, solver_iterations) = match opts.method {
        TrainMethod::Elm => (fit_output_layer(&net0, &data, opts.ridge)?, None, None),
        TrainMethod::Robust => {
            let rcfg = RobustTrainConfig {
                shared_lambda: opts.shared_lambda,
                lambda_floor: opts.lambda_floor,
                ..RobustTrainConfig::default()
            };
            let (net, result) = train_robust(&net0, &udata, &rcfg)?;
            let iters = result.solver_report.as_ref().map(|r| r.iterations);
            (net, Some(result.gamma), iters)
        }
    };

    let report = RunReport {
        method: opts.method,
        n_samples: data.n_samples(),
        n_hidden: opts.hidden,
        activation: opts.activation,
        seed: opts.seed,
        delta: udata.radii().max(),
        radius: output_radius(&net, &udata)?,
        mse: mse(&net, &data.inputs, &data.targets)?,
        gamma,
        solver_iterations,
        wall_time: start.elapsed(),
    };

    let meta = ModelMeta {
        seed: opts.seed,
        method: opts.method,
        delta: report.delta,
        gamma,
    };
    ModelFile { net, meta }.save(&opts.out)?;

    let text = if opts.porcelain {
        report.render_porcelain()
    } else {
        report.render()
    };
    out.write_all(text.as_bytes())?;
    Ok(report)
}

pub fn cmd_reach<W: Write>(opts: &ReachOpts, out: &mut W) -> Result<f64> {
    check_delta(opts.delta)?;
    let model = ModelFile::load(&opts.model)?;
    let data = read_dataset_csv(&opts.data)?;
    let udata = UncertainDataset::from_uniform_delta(&data, opts.delta)?;
    let (boxes, targets) = reach_boxes(&model.net, &udata)?;
    write_boxes_csv(&opts.out, &boxes)?;
    if let Some(svg_path) = &opts.svg {
        write_boxes_svg(svg_path, &boxes, &targets)?;
    }
    let radius = output_radius(&model.net, &udata)?;
    if opts.porcelain {
        writeln!(out, "radius={radius:.17e}")?;
    } else {
        writeln!(out, "radius {radius:.6e}")?;
    }
    Ok(radius)
}

/// Computes one output box per sample. The box CSV and the SVG figure are
/// planar, so the model must have exactly two outputs.
fn reach_boxes(
    net: &ShallowNet,
    data: &UncertainDataset,
) -> Result<(Vec<[f64; 4]>, Vec<[f64; 2]>)> {
    if net.n2() != 2 {
        return Err(Error::dims(
            "reach boxes",
            "a model with 2 outputs".to_string(),
            format!("{}", net.n2()),
        ));
    }
    let mut boxes = Vec::with_capacity(data.n_samples());
    let mut targets = Vec::with_capacity(data.n_samples());
    for i in 0..data.n_samples() {
        let (_, output) = network_reach(net, &data.input_box(i)?)?;
        let c = output.center();
        let r = output.radius();
        boxes.push([c[0], c[1], r[0], r[1]]);
        targets.push([data.targets()[(i, 0)], data.targets()[(i, 1)]]);
    }
    Ok((boxes, targets))
}

pub fn cmd_bench<W: Write>(opts: &BenchOpts, out: &mut W) -> Result<()> {
    check_delta(opts.delta)?;
    let geom = ArmGeometry::default();
    let data = sample_dataset(&geom, Zone::Normal, opts.n, opts.seed)?;
    let udata = UncertainDataset::from_uniform_delta(&data, opts.delta)?;

    let cfg = ElmConfig {
        n_hidden: opts.hidden,
        seed: opts.seed,
        ..ElmConfig::default()
    };
    let net0 = init_random(&cfg, 2, 2)?;

    let elm_net = fit_output_layer(&net0, &data, cfg.ridge)?;
    let rcfg = RobustTrainConfig {
        shared_lambda: opts.shared_lambda,
        ..RobustTrainConfig::default()
    };
    let (robust_net, robust_result) = train_robust(&net0, &udata, &rcfg)?;

    let mut table = String::new();
    let _ = writeln!(table, "{:<8}{:<16}{:<16}{}", "method", "radius", "mse", "gamma");
    for (name, net, gamma) in [
        ("elm", &elm_net, None),
        ("robust", &robust_net, Some(robust_result.gamma)),
    ] {
        let radius = output_radius(net, &udata)?;
        let err = mse(net, &data.inputs, &data.targets)?;
        let gamma_text = match gamma {
            Some(g) => format!("{g:.6e}"),
            None => "-".to_string(),
        };
        let _ = writeln!(
            table,
            "{name:<8}{:<16}{:<16}{gamma_text}",
            format!("{radius:.6e}"),
            format!("{err:.6e}"),
        );
    }
    out.write_all(table.as_bytes())?;

    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir)?;
        write_dataset_csv(&dir.join("dataset.csv"), &data)?;
        let elm_meta = ModelMeta {
            seed: opts.seed,
            method: TrainMethod::Elm,
            delta: 0.0,
            gamma: None,
        };
        ModelFile {
            net: elm_net,
            meta: elm_meta,
        }
        .save(&dir.join("elm.model"))?;
        let robust_meta = ModelMeta {
            seed: opts.seed,
            method: TrainMethod::Robust,
            delta: opts.delta,
            gamma: Some(robust_result.gamma),
        };
        ModelFile {
            net: robust_net,
            meta: robust_meta,
        }
        .save(&dir.join("robust.model"))?;
        fs::write(dir.join("report.txt"), &table)?;
    }
    Ok(())
}
