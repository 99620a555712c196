//! `alpa` command-line tool: Padé derivation, gradient curves, data
//! generation, training and the multi-loss benchmark.

pub mod bench;
pub mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use alpa_core::datagen::{generate, stratified_split, Decay, LongTailProfile};
use alpa_core::gradcheck::{
    alpa_curve_spec, default_curve_specs, emit_grad_curves, logit_grid, loss_presets,
    max_term_gradient_error, DEFAULT_GRID_SIZE,
};
use alpa_core::losses::{one_hot, ClassCounts, LossSpec};
use alpa_core::metrics::MetricsReport;
use alpa_core::pade::{pade_from_taylor, taylor_neg_bce, taylor_pos_bce, CANONICAL_ALPA};
use alpa_core::trainer::{
    cross_validate, evaluate, max_parameter_gradient_error, train_with_validation, Architecture,
    Checkpoint, EpochRecord, EvalSet, ModelParams,
};
use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "alpa",
    version,
    about = "Padé-approximated asymmetric losses for long-tailed data"
)]
pub struct Cli {
    /// Seed override (train: training/split seed; bench: single seed; gen-data: generator seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (grad-curve, gen-data) or directory (train, bench).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Padé approximants of the BCE terms.
    Pade {
        #[command(subcommand)]
        action: PadeAction,
    },
    /// Negative-branch gradient curves as CSV.
    GradCurve(GradCurveArgs),
    /// Synthetic long-tailed dataset as CSV.
    GenData(GenDataArgs),
    /// Train one loss on a stratified split (or k-fold with --cv).
    Train(TrainArgs),
    /// Compare several losses on identical splits across seeds.
    Bench,
    /// Finite-difference check of every loss preset.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Subcommand)]
pub enum PadeAction {
    Derive(PadeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PadeTarget {
    /// -ln(p) around p = 1.
    BcePos,
    /// -ln(1 - p) around p = 0.
    BceNeg,
}

#[derive(Debug, Args)]
pub struct PadeArgs {
    #[arg(long, value_enum)]
    pub target: PadeTarget,
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    /// Taylor order; defaults to m + n.
    #[arg(long)]
    pub order: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradCurveArgs {
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    pub grid: usize,
    /// Negative focusing parameter of the ALPA curve.
    #[arg(long, default_value_t = 4.0)]
    pub gamma_neg: f64,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_max: usize,
    #[arg(long, default_value_t = 50.0)]
    pub ratio: f64,
    #[arg(long, value_enum, default_value_t = DecayArg::Exponential)]
    pub decay: DecayArg,
    #[arg(long, default_value_t = 8)]
    pub dims: usize,
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecayArg {
    Exponential,
    Step,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run k-fold cross-validation on the training split instead.
    #[arg(long)]
    pub cv: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, default_value_t = 101)]
    pub points: usize,
}

/// Runs a parsed command, writing human/JSON output to `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> anyhow::Result<()> {
    match &cli.command {
        Command::Pade {
            action: PadeAction::Derive(args),
        } => cmd_pade_derive(args, stdout),
        Command::GradCurve(args) => cmd_grad_curve(args, cli.out.as_deref(), stdout),
        Command::GenData(args) => cmd_gen_data(cli, args, stdout),
        Command::Train(args) => cmd_train(cli, args, stdout),
        Command::Bench => cmd_bench(cli, stdout),
        Command::Gradcheck(args) => cmd_gradcheck(cli, args, stdout),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn require_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| ConfigError("--config <FILE> is required for this command".into()))?;
    Ok(RunConfig::load(path)?)
}

fn output_dir(cli: &Cli, config: &RunConfig) -> anyhow::Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| config.output.dir.clone());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

#[derive(Serialize)]
struct PadeOutput {
    target: &'static str,
    m: usize,
    n: usize,
    order: usize,
    expansion_point: f64,
    num: Vec<f64>,
    den: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    canonical: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

pub fn cmd_pade_derive(args: &PadeArgs, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let order = args.order.unwrap_or(args.m + args.n).max(1);
    let (series, name) = match args.target {
        PadeTarget::BcePos => (taylor_pos_bce(order)?, "bce-pos"),
        PadeTarget::BceNeg => (taylor_neg_bce(order)?, "bce-neg"),
    };
    let approx = pade_from_taylor(&series, args.m, args.n)?;
    let c = CANONICAL_ALPA;
    let (canonical, note) = if args.m == 1 && args.n == 1 {
        let (block, den_name, den_value) = match args.target {
            PadeTarget::BcePos => (
                serde_json::json!({ "a0": c.a0, "a1": c.a1, "b1": c.b1 }),
                "b1",
                c.b1,
            ),
            PadeTarget::BceNeg => (
                serde_json::json!({ "c0": c.c0, "c1": c.c1, "d1": c.d1 }),
                "d1",
                c.d1,
            ),
        };
        let solved = approx.den()[1];
        let note = if solved == den_value {
            format!("solver den[1] matches canonical {den_name}")
        } else {
            format!(
                "mismatch: solver den[1] = {solved} in the expansion variable, \
                 canonical {den_name} = {den_value}; the ALPA losses use the canonical \
                 constants"
            )
        };
        (Some(block), Some(note))
    } else {
        (None, None)
    };
    let output = PadeOutput {
        target: name,
        m: args.m,
        n: args.n,
        order,
        expansion_point: approx.expansion_point(),
        num: approx.num().to_vec(),
        den: approx.den().to_vec(),
        canonical,
        note,
    };
    writeln!(stdout, "{}", serde_json::to_string_pretty(&output)?)?;
    Ok(())
}

pub fn cmd_grad_curve(
    args: &GradCurveArgs,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> anyhow::Result<()> {
    let mut specs = default_curve_specs();
    for (label, spec) in &mut specs {
        if label == "alpa" {
            *spec = alpa_curve_spec(args.gamma_neg);
        }
    }
    let curves = emit_grad_curves(args.grid, &specs)?;
    match out {
        Some(path) => {
            let mut buf = Vec::new();
            curves.write_csv(&mut buf)?;
            fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
        }
        None => curves.write_csv(stdout)?,
    }
    Ok(())
}

pub fn cmd_gen_data(cli: &Cli, args: &GenDataArgs, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let mut profile =
        match &cli.config {
            Some(_) => {
                let config = require_config(cli)?;
                config.dataset.generate.clone().ok_or_else(|| {
                    ConfigError("gen-data needs a [dataset.generate] section".into())
                })?
            }
            None => LongTailProfile {
                num_classes: args.classes,
                n_max: args.n_max,
                imbalance_ratio: args.ratio,
                decay: match args.decay {
                    DecayArg::Exponential => Decay::Exponential,
                    DecayArg::Step => Decay::Step,
                },
                dims: args.dims,
                cluster_separation: args.separation,
                noise_sigma: args.sigma,
                seed: 0,
            },
        };
    if let Some(seed) = cli.seed {
        profile.seed = seed;
    }
    let ds = generate(&profile)?;
    match &cli.out {
        Some(path) => {
            let mut buf = Vec::new();
            ds.write_csv(&mut buf)?;
            fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
            writeln!(
                stdout,
                "wrote {} samples, class counts {:?}",
                ds.len(),
                ds.class_counts()
            )?;
        }
        None => ds.write_csv(stdout)?,
    }
    Ok(())
}

#[derive(Serialize)]
pub struct RunReport<'a> {
    #[serde(flatten)]
    pub metrics: &'a MetricsReport,
    pub loss_spec: &'a LossSpec,
    pub seed: u64,
}

#[derive(Serialize)]
struct HistoryFile<'a> {
    evaluated_on: EvalSet,
    epochs: &'a [EpochRecord],
}

#[derive(Serialize)]
struct FoldReport<'a> {
    fold: usize,
    #[serde(flatten)]
    metrics: &'a MetricsReport,
}

#[derive(Serialize)]
struct CvReport<'a> {
    folds: Vec<FoldReport<'a>>,
    mean_balanced_accuracy: f64,
    mean_overall_accuracy: f64,
    loss_spec: &'a LossSpec,
    seed: u64,
}

pub fn cmd_train(cli: &Cli, args: &TrainArgs, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let config = require_config(cli)?;
    let loss = config.require_loss()?.clone();
    let seed = cli.seed.unwrap_or(config.seeds[0]);
    let train_config = config.training.to_train_config(loss.clone(), seed);
    let ds = config.load_dataset()?;
    let (train_set, test_set) = stratified_split(&ds, config.split.train_fraction, seed)?;
    let dir = output_dir(cli, &config)?;

    if let Some(k) = args.cv {
        let cv = cross_validate(&train_set, k, seed, &train_config)?;
        let report = CvReport {
            folds: cv
                .folds
                .iter()
                .enumerate()
                .map(|(i, f)| FoldReport {
                    fold: i,
                    metrics: &f.validation,
                })
                .collect(),
            mean_balanced_accuracy: cv.mean_balanced_accuracy,
            mean_overall_accuracy: cv.mean_overall_accuracy,
            loss_spec: &loss,
            seed,
        };
        write_json(&dir.join("cv_report.json"), &report)?;
        for fold in &report.folds {
            writeln!(
                stdout,
                "fold {}: balanced accuracy {:.4}",
                fold.fold, fold.metrics.balanced_accuracy
            )?;
        }
        writeln!(
            stdout,
            "mean balanced accuracy {:.4}, mean accuracy {:.4}",
            cv.mean_balanced_accuracy, cv.mean_overall_accuracy
        )?;
        return Ok(());
    }

    let history = train_with_validation(&train_set, Some(&test_set), &train_config)?;
    let metrics = evaluate(&history.model, &test_set)?;
    write_json(
        &dir.join("checkpoint.json"),
        &Checkpoint::new(&history.model, &train_config),
    )?;
    write_json(
        &dir.join("history.json"),
        &HistoryFile {
            evaluated_on: history.evaluated_on,
            epochs: &history.epochs,
        },
    )?;
    write_json(
        &dir.join("report.json"),
        &RunReport {
            metrics: &metrics,
            loss_spec: &loss,
            seed,
        },
    )?;
    writeln!(
        stdout,
        "balanced accuracy {:.4}, accuracy {:.4}; artifacts in {}",
        metrics.balanced_accuracy,
        metrics.overall_accuracy,
        dir.display()
    )?;
    Ok(())
}

pub fn cmd_bench(cli: &Cli, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let config = require_config(cli)?;
    config.require_bench_losses()?;
    let seeds = match cli.seed {
        Some(seed) => vec![seed],
        None => config.seeds.clone(),
    };
    let result = bench::run_bench(&config, &seeds)?;
    let dir = output_dir(cli, &config)?;
    write_json(&dir.join("bench.json"), &result)?;
    write!(stdout, "{}", bench::format_table(&result))?;
    Ok(())
}

pub const TERM_TOLERANCE: f64 = 1e-6;
pub const MODEL_TOLERANCE: f64 = 1e-4;

/// Per-preset worst relative errors: per-term on a logit grid over
/// `[-5, 5]`, and end to end through a Linear model on an 8-sample batch.
pub fn gradient_report(
    seed: u64,
    step: f64,
    points: usize,
) -> anyhow::Result<Vec<(String, f64, f64)>> {
    if points < 2 {
        bail!("need at least 2 grid points");
    }
    let z = logit_grid(-5.0, 5.0, points);
    let classes = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = ModelParams::init(Architecture::Linear, 3, classes, 0, 1.0, &mut rng);
    let features = ndarray_batch(&mut rng, 8, 3);
    let labels: Vec<usize> = (0..8).map(|i| i % classes).collect();
    let targets = one_hot(&labels, classes)?;
    let counts = ClassCounts::new(vec![400, 120, 30, 8])?;
    let mut rows = Vec::new();
    for (label, spec) in loss_presets() {
        let term = max_term_gradient_error(&spec, &z, step, 1.0)?;
        let model_err = max_parameter_gradient_error(
            &model,
            features.view(),
            targets.view(),
            &spec,
            Some(&counts),
            step,
        )?;
        rows.push((label, term, model_err));
    }
    Ok(rows)
}

fn ndarray_batch(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ndarray::Array2<f64> {
    use rand::Rng;
    ndarray::Array2::from_shape_fn((rows, cols), |_| rng.random_range(-2.0..2.0))
}

pub fn cmd_gradcheck(
    cli: &Cli,
    args: &GradcheckArgs,
    stdout: &mut dyn Write,
) -> anyhow::Result<()> {
    let rows = gradient_report(cli.seed.unwrap_or(0), args.step, args.points)?;
    writeln!(
        stdout,
        "{:<14} {:>14} {:>14}",
        "loss", "term rel err", "model rel err"
    )?;
    let mut failed = Vec::new();
    for (label, term, model) in &rows {
        let ok = *term <= TERM_TOLERANCE && *model <= MODEL_TOLERANCE;
        writeln!(
            stdout,
            "{label:<14} {term:>14.3e} {model:>14.3e} {}",
            if ok { "ok" } else { "FAIL" }
        )?;
        if !ok {
            failed.push(label.as_str());
        }
    }
    if !failed.is_empty() {
        bail!("gradient check failed for {}", failed.join(", "));
    }
    Ok(())
}
