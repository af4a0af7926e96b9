//! Command-line surface: subcommands, experiment configs, and exit codes.
//!
//! Every run echoes its resolved configuration into `report.toml` next to
//! its CSV outputs. Exit codes: 0 all checks pass, 1 a check failed, 2 the
//! config or an input document failed to parse, 3 validation rejected the
//! inputs. A subcommand either takes inline flags or `--config <file>` with
//! a TOML document whose `family` matches the subcommand.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::ddp::{self, DdpConfig};
use crate::dirichlet::{self, DirichletMeasure, Location, Partition};
use crate::error::{Error, Result};
use crate::gp::{self, BenchMethod, GpPrior};
use crate::inversion::{batch_invert, brute_force_invert, sequential_invert, verify_inversion};
use crate::measure::product_kernel;
use crate::report::{fmt_f64, write_csv, RunReport};
use crate::scalar::{Rat, Scalar};
use crate::selftest;
use crate::supervised::{
    posterior_predictive_batch, posterior_predictive_recursive, SupervisedModel, TestInputs,
    TrainingSample,
};
use crate::tol;

#[derive(Parser, Debug)]
#[command(
    name = "seqbayes",
    version,
    about = "Batch vs online Bayesian inference on finite spaces, Gaussian processes, and (dependent) Dirichlet processes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Posterior predictive of a finite supervised model from files
    Predict(PredictArgs),
    /// Batch-vs-online inversion check on randomized finite models
    Invert(InvertArgs),
    /// Gaussian-process regression (batch | recursive | compare | bench)
    Gp(GpArgs),
    /// Dirichlet-process operations (posterior | project | sample | check)
    Dp(DpArgs),
    /// Dependent Dirichlet process (sample | project | mean-check | predict)
    Ddp(DdpArgs),
    /// GP streaming benchmark (shorthand for `gp --gp-mode bench`)
    Bench(BenchArgs),
    /// Run the full acceptance suite and print one line per criterion
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalarModeArg {
    ExactRational,
    Float64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictMethodArg {
    Batch,
    Recursive,
    Compare,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelArg {
    Rbf,
    Matern32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GpModeArg {
    Batch,
    Recursive,
    Compare,
    Bench,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DpOpArg {
    Posterior,
    Project,
    Sample,
    Check,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DdpOpArg {
    Sample,
    Project,
    MeanCheck,
    Predict,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PredictArgs {
    /// Model document (TOML)
    #[arg(long)]
    pub model: PathBuf,
    /// Training sample document (TOML); omit for the prior predictive
    #[arg(long)]
    pub sample: Option<PathBuf>,
    /// Comma-separated test input labels
    #[arg(long)]
    pub test: String,
    #[arg(long, value_enum, default_value_t = ScalarModeArg::ExactRational)]
    pub mode: ScalarModeArg,
    #[arg(long, value_enum, default_value_t = PredictMethodArg::Compare)]
    pub method: PredictMethodArg,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct InvertArgs {
    /// Load every parameter from a TOML experiment config instead of flags
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub models: usize,
    #[arg(long, default_value_t = 6)]
    pub max_theta: usize,
    #[arg(long, default_value_t = 4)]
    pub max_inputs: usize,
    #[arg(long, default_value_t = 5)]
    pub max_labels: usize,
    #[arg(long, default_value_t = 5)]
    pub max_n: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ScalarModeArg::ExactRational)]
    pub mode: ScalarModeArg,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct GpArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = KernelArg::Rbf)]
    pub kernel: KernelArg,
    #[arg(long, default_value_t = 1.0)]
    pub length_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    pub signal_var: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Number of training observations
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Number of test points
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = GpModeArg::Compare)]
    pub gp_mode: GpModeArg,
    /// Benchmark repetitions per size
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    /// Relative mean tolerance for compare mode
    #[arg(long, default_value_t = tol::GP_MEAN_REL)]
    pub mean_tol: f64,
    /// Absolute covariance tolerance for compare mode
    #[arg(long, default_value_t = tol::GP_COV_ABS)]
    pub cov_tol: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct DpArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(value_enum)]
    pub operation: DpOpArg,
    /// Base measure document (TOML)
    #[arg(long)]
    pub alpha: PathBuf,
    /// Comma-separated observations (numbers or labels)
    #[arg(long)]
    pub observe: Option<String>,
    /// Comma-separated cut points of a real partition
    #[arg(long)]
    pub cuts: Option<String>,
    /// Label partition: cells split by `;`, labels inside a cell by `|`
    #[arg(long)]
    pub cells: Option<String>,
    /// Coarse-to-fine chain of cut lists for `check`, levels split by `/`
    #[arg(long)]
    pub chain: Option<String>,
    /// Truncation level for `sample`
    #[arg(long, default_value_t = 100)]
    pub sticks: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct DdpArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(value_enum)]
    pub operation: DdpOpArg,
    /// DDP hyperparameter document (TOML)
    #[arg(long)]
    pub spec: PathBuf,
    /// Comma-separated covariate sites
    #[arg(long)]
    pub sites: String,
    /// Comma-separated cut points of the label-space partition
    #[arg(long)]
    pub cuts: Option<String>,
    /// Observations for `predict` as `x:y` pairs, comma-separated
    #[arg(long)]
    pub observe: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    #[command(flatten)]
    pub gp: GpArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 20250811)]
    pub seed: u64,
    #[arg(long, default_value = "selftest-out")]
    pub out: PathBuf,
}

/// A complete experiment description, loadable from one TOML document.
/// The `family` tag must match the subcommand it is passed to.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentConfig {
    Finite(InvertArgs),
    Gp(GpArgs),
    Dp(DpArgs),
    Ddp(DdpArgs),
}

fn load_config<T>(path: &Path, family: &str, extract: impl Fn(ExperimentConfig) -> Option<T>) -> Result<T> {
    let text = fs::read_to_string(path)?;
    let config: ExperimentConfig =
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    extract(config).ok_or_else(|| {
        Error::Validation(format!(
            "config {} is not of family `{family}`",
            path.display()
        ))
    })
}

/// Maps an error to the exit code contract.
pub fn error_code(e: &Error) -> u8 {
    match e {
        Error::Parse(_) => 2,
        _ => 3,
    }
}

/// Parses args, dispatches, prints the check summary, and returns the exit
/// code. Never panics on malformed input.
pub fn main_entry() -> u8 {
    let cli = Cli::parse();
    let started = Instant::now();
    let outcome = dispatch(cli.command);
    match outcome {
        Ok((mut report, out_dir)) => {
            report.timing.total_s = started.elapsed().as_secs_f64();
            for line in report.summary_lines() {
                println!("{line}");
            }
            match report.write(&out_dir) {
                Ok(path) => println!("report: {}", path.display()),
                Err(e) => {
                    eprintln!("error: {e}");
                    return error_code(&e);
                }
            }
            if report.all_pass() {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            error_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<(RunReport, PathBuf)> {
    match command {
        Command::Predict(args) => run_predict(args),
        Command::Invert(mut args) => {
            if let Some(path) = args.config.take() {
                args = load_config(&path, "finite", |c| match c {
                    ExperimentConfig::Finite(a) => Some(a),
                    _ => None,
                })?;
            }
            run_invert(args)
        }
        Command::Gp(mut args) => {
            if let Some(path) = args.config.take() {
                args = load_config(&path, "gp", |c| match c {
                    ExperimentConfig::Gp(a) => Some(a),
                    _ => None,
                })?;
            }
            run_gp(args)
        }
        Command::Dp(mut args) => {
            if let Some(path) = args.config.take() {
                args = load_config(&path, "dp", |c| match c {
                    ExperimentConfig::Dp(a) => Some(a),
                    _ => None,
                })?;
            }
            run_dp(args)
        }
        Command::Ddp(mut args) => {
            if let Some(path) = args.config.take() {
                args = load_config(&path, "ddp", |c| match c {
                    ExperimentConfig::Ddp(a) => Some(a),
                    _ => None,
                })?;
            }
            run_ddp(args)
        }
        Command::Bench(mut args) => {
            if let Some(path) = args.gp.config.take() {
                args.gp = load_config(&path, "gp", |c| match c {
                    ExperimentConfig::Gp(a) => Some(a),
                    _ => None,
                })?;
            }
            args.gp.gp_mode = GpModeArg::Bench;
            run_gp(args.gp)
        }
        Command::Selftest(args) => run_selftest(args),
    }
}

fn parse_f64_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::Validation(format!("bad {what} entry `{t}`: {e}")))
        })
        .collect()
}

fn parse_locations(s: &str) -> Vec<Location> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let t = t.trim();
            match t.parse::<f64>() {
                Ok(x) => Location::Point(x),
                Err(_) => Location::label(t),
            }
        })
        .collect()
}

fn partition_from_args(cuts: &Option<String>, cells: &Option<String>) -> Result<Partition> {
    match (cuts, cells) {
        (Some(c), None) => Partition::real(parse_f64_list(c, "cut")?),
        (None, Some(spec)) => {
            let cells: Vec<Vec<String>> = spec
                .split(';')
                .map(|cell| {
                    cell.split('|')
                        .map(|l| l.trim().to_string())
                        .filter(|l| !l.is_empty())
                        .collect()
                })
                .collect();
            let universe = cells.iter().flatten().cloned().collect();
            Partition::finite(universe, cells)
        }
        _ => Err(Error::Validation(
            "give exactly one of --cuts or --cells".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

fn run_predict_mode<S: Scalar>(
    args: &PredictArgs,
    report: &mut RunReport,
) -> Result<Vec<PathBuf>> {
    let model = SupervisedModel::<S>::from_text(&fs::read_to_string(&args.model)?)?;
    let sample = match &args.sample {
        Some(path) => TrainingSample::from_text(&fs::read_to_string(path)?)?,
        None => TrainingSample::default(),
    };
    let test_points: Vec<String> = args
        .test
        .split(',')
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .collect();
    let test = TestInputs::new(test_points.clone());

    let predictive = match args.method {
        PredictMethodArg::Batch => posterior_predictive_batch(&model, &sample, &test)?,
        PredictMethodArg::Recursive => posterior_predictive_recursive(&model, &sample, &test)?,
        PredictMethodArg::Compare => {
            let batch = posterior_predictive_batch(&model, &sample, &test)?;
            let recursive = posterior_predictive_recursive(&model, &sample, &test)?;
            // Total-variation distance between the two predictives.
            let tv = 0.5
                * batch
                    .weights()
                    .iter()
                    .zip(recursive.weights())
                    .map(|(a, b)| a.abs_diff(b))
                    .sum::<f64>();
            report.check(
                "batch predictive equals recursive predictive (total variation)",
                tv <= S::mode_tol(),
                Some(tv),
                format!("mode {}", S::MODE_NAME),
            );
            batch
        }
    };

    // Weight table: one column per test coordinate plus the weight.
    let mut header: Vec<String> = (1..=test.len()).map(|i| format!("y{i}")).collect();
    header.push("weight".into());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut rows = Vec::new();
    for (flat, w) in predictive.weights().iter().enumerate() {
        let idx = predictive.multi_index(flat);
        let mut row: Vec<String> = idx
            .iter()
            .zip(predictive.factors())
            .map(|(&i, f)| f.label(i).to_string())
            .collect();
        row.push(w.render_text());
        rows.push(row);
    }
    let path = args.out.join("predictive.csv");
    write_csv(&path, &header_refs, &rows)?;
    Ok(vec![path])
}

fn run_predict(args: PredictArgs) -> Result<(RunReport, PathBuf)> {
    let mut report = RunReport::new(&args, None);
    let outputs = match args.mode {
        ScalarModeArg::ExactRational => run_predict_mode::<Rat>(&args, &mut report)?,
        ScalarModeArg::Float64 => run_predict_mode::<f64>(&args, &mut report)?,
    };
    for p in &outputs {
        report.record_output(p);
    }
    report.check("predictive table written", true, None, "");
    Ok((report, args.out))
}

// ---------------------------------------------------------------------------
// invert
// ---------------------------------------------------------------------------

fn run_invert_mode<S: Scalar>(args: &InvertArgs, report: &mut RunReport) -> Result<PathBuf> {
    let mut meta = ChaCha12Rng::seed_from_u64(args.seed);
    let mut rows = Vec::new();
    let mut max_dev = 0.0f64;
    let mut max_verify = 0.0f64;
    for trial in 0..args.models {
        let n_theta = meta.random_range(2..=args.max_theta.max(2));
        let n_inputs = meta.random_range(1..=args.max_inputs.max(1));
        let n_labels = meta.random_range(2..=args.max_labels.max(2));
        let n = meta.random_range(0..=args.max_n);
        let mut model_rng = ChaCha12Rng::seed_from_u64(args.seed ^ (trial as u64 + 1));
        let model = SupervisedModel::<S>::random(&mut model_rng, n_theta, n_inputs, n_labels);
        let pairs = model.random_pairs(&mut meta, n);
        let refs: Vec<(&str, &str)> = pairs.iter().map(|(x, y)| (x.as_str(), y.as_str())).collect();
        let xs: Vec<&str> = refs.iter().map(|(x, _)| *x).collect();
        let ys: Vec<&str> = refs.iter().map(|(_, y)| *y).collect();
        let batch = batch_invert(&model, &xs, &ys)?;
        let seq = sequential_invert(&model, refs.iter().copied())?;
        let dev = batch.max_dev(&seq);
        max_dev = max_dev.max(dev);

        let verify_dev = if n > 0 {
            let kernels = xs
                .iter()
                .map(|x| model.sampling_kernel_at(x))
                .collect::<Result<Vec<_>>>()?;
            let product = product_kernel(&kernels)?;
            let inv = brute_force_invert(&product, model.prior())?;
            let v = verify_inversion(&inv.kernel, &product, model.prior())?;
            max_verify = max_verify.max(v.max_deviation);
            v.max_deviation
        } else {
            0.0
        };
        rows.push(vec![
            trial.to_string(),
            n.to_string(),
            fmt_f64(dev),
            fmt_f64(verify_dev),
        ]);
    }
    let path = args.out.join("invert.csv");
    write_csv(&path, &["trial", "n", "dev_batch_vs_online", "dev_operator_eq"], &rows)?;
    report.check(
        "sequential posterior equals batch posterior",
        max_dev <= S::mode_tol(),
        Some(max_dev),
        format!("{} models, mode {}", args.models, S::MODE_NAME),
    );
    report.check(
        "inversions satisfy the operator equation",
        max_verify <= S::mode_tol(),
        Some(max_verify),
        "",
    );
    Ok(path)
}

fn run_invert(args: InvertArgs) -> Result<(RunReport, PathBuf)> {
    let mut report = RunReport::new(ExperimentConfig::Finite(args.clone()), Some(args.seed));
    let path = match args.mode {
        ScalarModeArg::ExactRational => run_invert_mode::<Rat>(&args, &mut report)?,
        ScalarModeArg::Float64 => run_invert_mode::<f64>(&args, &mut report)?,
    };
    report.record_output(&path);
    Ok((report, args.out))
}

// ---------------------------------------------------------------------------
// gp and bench
// ---------------------------------------------------------------------------

fn gp_prior_from(args: &GpArgs) -> GpPrior {
    match args.kernel {
        KernelArg::Rbf => GpPrior::rbf(args.signal_var, args.length_scale, args.noise),
        KernelArg::Matern32 => GpPrior::matern32(args.signal_var, args.length_scale, args.noise),
    }
}

fn gp_data_from(args: &GpArgs) -> (Vec<f64>, Vec<(f64, f64)>) {
    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);
    let tests: Vec<f64> = (0..args.m).map(|_| rng.random_range(-3.0..3.0)).collect();
    let data: Vec<(f64, f64)> = (0..args.n)
        .map(|_| {
            let x: f64 = rng.random_range(-3.0..3.0);
            let eps: f64 = rng.sample(rand_distr::StandardNormal);
            (x, (2.0 * x).sin() + args.noise.sqrt() * eps)
        })
        .collect();
    (tests, data)
}

fn run_gp(args: GpArgs) -> Result<(RunReport, PathBuf)> {
    if args.m == 0 {
        return Err(Error::Validation("gp needs at least one test point".into()));
    }
    let mut report = RunReport::new(ExperimentConfig::Gp(args.clone()), Some(args.seed));
    let prior = gp_prior_from(&args);
    let (tests, data) = gp_data_from(&args);

    match args.gp_mode {
        GpModeArg::Batch | GpModeArg::Recursive => {
            let belief = match args.gp_mode {
                GpModeArg::Batch => gp::batch_predictive(&prior, &tests, &data)?,
                _ => gp::recursive_predictive(&prior, &tests, &data)?,
            };
            let rows: Vec<Vec<String>> = tests
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    vec![fmt_f64(*t), fmt_f64(belief.mean()[i]), fmt_f64(belief.cov()[(i, i)])]
                })
                .collect();
            let path = args.out.join("gp_predictive.csv");
            write_csv(&path, &["t", "mean", "var"], &rows)?;
            report.record_output(&path);
            belief.validate()?;
            report.check("posterior covariance is PSD within tolerance", true, None, "");
        }
        GpModeArg::Compare => {
            let batch = gp::batch_predictive(&prior, &tests, &data)?;
            let rec = gp::recursive_predictive(&prior, &tests, &data)?;
            let scale = batch.mean().amax().max(1.0);
            let mut mean_dev = 0.0f64;
            let mut rows = Vec::new();
            for (i, t) in tests.iter().enumerate() {
                mean_dev = mean_dev.max((batch.mean()[i] - rec.mean()[i]).abs() / scale);
                rows.push(vec![
                    fmt_f64(*t),
                    fmt_f64(batch.mean()[i]),
                    fmt_f64(rec.mean()[i]),
                    fmt_f64(batch.cov()[(i, i)]),
                    fmt_f64(rec.cov()[(i, i)]),
                ]);
            }
            let cov_dev = (batch.cov() - rec.cov())
                .iter()
                .fold(0.0f64, |acc, v| acc.max(v.abs()));
            let path = args.out.join("gp_compare.csv");
            write_csv(
                &path,
                &["t", "mean_batch", "mean_recursive", "var_batch", "var_recursive"],
                &rows,
            )?;
            report.record_output(&path);
            report.check(
                "recursive mean matches batch (relative)",
                mean_dev <= args.mean_tol,
                Some(mean_dev),
                format!("n = {}, m = {}", args.n, args.m),
            );
            report.check(
                "recursive covariance matches batch (absolute)",
                cov_dev <= args.cov_tol,
                Some(cov_dev),
                "",
            );
        }
        GpModeArg::Bench => {
            if args.reps == 0 {
                return Err(Error::Validation("bench needs reps >= 1".into()));
            }
            let table = gp::benchmark(&prior, &tests, &data, args.reps)?;
            let rows: Vec<Vec<String>> = table
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        r.method.as_str().to_string(),
                        fmt_f64(r.median_s),
                        r.reps.to_string(),
                    ]
                })
                .collect();
            let path = args.out.join("bench.csv");
            write_csv(&path, &["n", "method", "median_s", "reps"], &rows)?;
            report.record_output(&path);
            let (batch_cum, rec_cum) = table.cumulative();
            let crossover = table.crossover();
            report.check(
                "cumulative recursive time crosses below repeated batch refits",
                crossover.is_some(),
                None,
                format!(
                    "crossover {:?}; cumulative at n={}: batch {:.4}s, recursive {:.4}s (build {:.4}s)",
                    crossover,
                    args.n,
                    batch_cum.last().unwrap_or(&0.0),
                    rec_cum.last().unwrap_or(&0.0),
                    table.build_s
                ),
            );
            // Structural contract on the table itself.
            let per_n_ok = (1..=args.n).all(|n| {
                table
                    .rows
                    .iter()
                    .filter(|r| r.n == n && r.method == BenchMethod::Batch)
                    .count()
                    == 1
                    && table
                        .rows
                        .iter()
                        .filter(|r| r.n == n && r.method == BenchMethod::Recursive)
                        .count()
                        == 1
            });
            report.check("both methods timed for every n", per_n_ok, None, "");
        }
    }
    Ok((report, args.out))
}

// ---------------------------------------------------------------------------
// dp
// ---------------------------------------------------------------------------

fn run_dp(args: DpArgs) -> Result<(RunReport, PathBuf)> {
    let mut report = RunReport::new(ExperimentConfig::Dp(args.clone()), Some(args.seed));
    let alpha = DirichletMeasure::from_text(&fs::read_to_string(&args.alpha)?)?;

    match args.operation {
        DpOpArg::Posterior => {
            let obs = parse_locations(args.observe.as_deref().unwrap_or(""));
            let posterior = dirichlet::dp_posterior(&alpha, &obs)?;
            let path = args.out.join("posterior.toml");
            fs::create_dir_all(&args.out)?;
            fs::write(&path, posterior.to_text())?;
            report.record_output(&path);
            report.check(
                "posterior mass grew by the observation count",
                (posterior.total_mass() - alpha.total_mass() - obs.len() as f64).abs() < 1e-9,
                None,
                format!("{} observations", obs.len()),
            );
        }
        DpOpArg::Project => {
            let part = partition_from_args(&args.cuts, &args.cells)?;
            let proj = dirichlet::project(&alpha, &part)?;
            let rows: Vec<Vec<String>> = part
                .cell_names()
                .iter()
                .zip(proj.params())
                .map(|(name, p)| vec![name.clone(), fmt_f64(*p)])
                .collect();
            let path = args.out.join("projection.csv");
            write_csv(&path, &["cell", "parameter"], &rows)?;
            report.record_output(&path);
            report.check(
                "cell parameters sum to the total mass",
                (proj.total() - alpha.total_mass()).abs() <= 1e-9 * alpha.total_mass(),
                Some((proj.total() - alpha.total_mass()).abs()),
                "",
            );
        }
        DpOpArg::Sample => {
            let draw = dirichlet::stick_breaking_sample(&alpha, args.sticks, args.seed)?;
            let rows: Vec<Vec<String>> = draw
                .atoms
                .iter()
                .map(|(loc, w)| {
                    let loc = match loc {
                        Location::Point(x) => fmt_f64(*x),
                        Location::Label(l) => l.clone(),
                    };
                    vec![loc, fmt_f64(*w)]
                })
                .collect();
            let path = args.out.join("dp_sample.csv");
            write_csv(&path, &["atom", "weight"], &rows)?;
            report.record_output(&path);
            report.check(
                "stick weights sum to exactly one",
                draw.total() == 1.0,
                Some((draw.total() - 1.0).abs()),
                format!(
                    "truncation bias bound {:.3e}",
                    dirichlet::truncation_bias(alpha.total_mass(), args.sticks)
                ),
            );
        }
        DpOpArg::Check => {
            let chain_spec = args.chain.as_deref().ok_or_else(|| {
                Error::Validation("check needs --chain, coarse to fine, levels split by `/`".into())
            })?;
            let chain: Vec<Partition> = chain_spec
                .split('/')
                .map(|level| Partition::real(parse_f64_list(level, "cut")?))
                .collect::<Result<Vec<_>>>()?;
            let obs = parse_locations(args.observe.as_deref().unwrap_or(""));
            let proj = dirichlet::check_projective(&alpha, &chain, &obs)?;
            let rows: Vec<Vec<String>> = proj
                .pairs
                .iter()
                .map(|p| {
                    vec![
                        p.fine_index.to_string(),
                        fmt_f64(p.diagram_dev),
                        fmt_f64(p.conjugacy_dev),
                    ]
                })
                .collect();
            let path = args.out.join("projective.csv");
            write_csv(&path, &["fine_level", "diagram_dev", "conjugacy_dev"], &rows)?;
            report.record_output(&path);
            report.check(
                "coarsening commutes with posterior updates",
                proj.pass,
                Some(proj.max_dev),
                format!("{} levels, {} observations", chain.len(), obs.len()),
            );
        }
    }
    Ok((report, args.out))
}

// ---------------------------------------------------------------------------
// ddp
// ---------------------------------------------------------------------------

fn run_ddp(args: DdpArgs) -> Result<(RunReport, PathBuf)> {
    let mut report = RunReport::new(ExperimentConfig::Ddp(args.clone()), Some(args.seed));
    let config: DdpConfig = toml::from_str(&fs::read_to_string(&args.spec)?)
        .map_err(|e| Error::Parse(format!("{}: {e}", args.spec.display())))?;
    let spec = config.build()?;
    let sites = parse_f64_list(&args.sites, "site")?;

    match args.operation {
        DdpOpArg::Sample => {
            let path_draw = ddp::sample_path(&spec, &sites, args.seed)?;
            let mut rows = Vec::new();
            for (i, (ws, ats)) in path_draw.weights.iter().zip(&path_draw.atoms).enumerate() {
                for (j, site) in sites.iter().enumerate() {
                    rows.push(vec![
                        i.to_string(),
                        fmt_f64(*site),
                        fmt_f64(ats[j]),
                        fmt_f64(ws[j]),
                    ]);
                }
            }
            let path = args.out.join("ddp_sample.csv");
            write_csv(&path, &["stick", "site", "atom", "weight"], &rows)?;
            report.record_output(&path);
            let sums_ok = (0..sites.len()).all(|j| {
                path_draw.weights.iter().map(|w| w[j]).sum::<f64>() == 1.0
            });
            report.check(
                "per-site weights sum to exactly one",
                sums_ok,
                None,
                format!("truncation {}", spec.truncation),
            );
        }
        DdpOpArg::Project => {
            let part = Partition::real(parse_f64_list(
                args.cuts.as_deref().unwrap_or(""),
                "cut",
            )?)?;
            let summary = ddp::finite_projection(&spec, &sites, &part, args.seed, args.reps)?;
            let mut rows = Vec::new();
            for site in &summary.sites {
                for cell in &site.cells {
                    rows.push(vec![
                        fmt_f64(site.site),
                        cell.cell.clone(),
                        fmt_f64(cell.target_mean),
                        fmt_f64(cell.sample_mean),
                        fmt_f64(cell.z_mean),
                        fmt_f64(cell.target_var),
                        fmt_f64(cell.sample_var),
                        fmt_f64(cell.z_var),
                    ]);
                }
            }
            let path = args.out.join("ddp_projection.csv");
            write_csv(
                &path,
                &[
                    "site", "cell", "target_mean", "sample_mean", "z_mean", "target_var",
                    "sample_var", "z_var",
                ],
                &rows,
            )?;
            report.record_output(&path);
            report.check(
                "projected moments match the marginal Dirichlet law",
                summary.pass,
                None,
                format!(
                    "z pass rate {:.3} over {} replications",
                    summary.z_pass_rate, summary.replications
                ),
            );
        }
        DdpOpArg::MeanCheck => {
            let part = Partition::real(parse_f64_list(
                args.cuts.as_deref().unwrap_or(""),
                "cut",
            )?)?;
            let check = ddp::mean_measure_check(&spec, &sites, &part, args.seed, args.reps)?;
            let rows: Vec<Vec<String>> = check
                .lines
                .iter()
                .map(|l| {
                    vec![
                        fmt_f64(l.site),
                        l.cell.clone(),
                        fmt_f64(l.target),
                        fmt_f64(l.sample_mean),
                        fmt_f64(l.z),
                    ]
                })
                .collect();
            let path = args.out.join("ddp_meancheck.csv");
            write_csv(&path, &["site", "cell", "target", "sample_mean", "z"], &rows)?;
            report.record_output(&path);
            report.check(
                "mean measure equals the base measure (3 SE)",
                check.pass,
                Some(check.max_z),
                format!("truncation bias bound {:.3e}", check.bias_bound),
            );
        }
        DdpOpArg::Predict => {
            let part = Partition::real(parse_f64_list(
                args.cuts.as_deref().unwrap_or(""),
                "cut",
            )?)?;
            let obs_spec = args.observe.as_deref().unwrap_or("");
            let mut observations = Vec::new();
            for token in obs_spec.split(',').filter(|t| !t.trim().is_empty()) {
                let (x, y) = token.split_once(':').ok_or_else(|| {
                    Error::Validation(format!("bad observation `{token}`, expected x:y"))
                })?;
                observations.push((
                    x.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Validation(format!("bad x in `{token}`: {e}")))?,
                    y.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Validation(format!("bad y in `{token}`: {e}")))?,
                ));
            }
            let pred =
                ddp::ddp_predictive_mc(&spec, &observations, &sites, &part, args.seed, args.reps)?;
            let mut rows = Vec::new();
            for (t, site) in pred.test_sites.iter().enumerate() {
                for (c, name) in pred.cell_names.iter().enumerate() {
                    rows.push(vec![
                        fmt_f64(*site),
                        name.clone(),
                        fmt_f64(pred.cells[t][c]),
                        fmt_f64(pred.prior_cells[t][c]),
                    ]);
                }
            }
            let path = args.out.join("ddp_predictive.csv");
            write_csv(&path, &["site", "cell", "predictive", "prior"], &rows)?;
            report.record_output(&path);
            report.check(
                "effective sample size at or above 100",
                !pred.low_ess_warning,
                Some(pred.effective_sample_size),
                format!(
                    "ESS {:.1} of {} replications{}",
                    pred.effective_sample_size,
                    pred.replications,
                    if pred.low_ess_warning {
                        "; raise replications for a tighter estimate"
                    } else {
                        ""
                    }
                ),
            );
        }
    }
    Ok((report, args.out))
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

fn run_selftest(args: SelftestArgs) -> Result<(RunReport, PathBuf)> {
    let mut report = RunReport::new(&args, Some(args.seed));
    let results = selftest::run_all(args.seed, &args.out)?;
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.id.to_string(),
                r.name.to_string(),
                if r.pass { "pass" } else { "fail" }.to_string(),
                r.detail.clone(),
            ]
        })
        .collect();
    let path = args.out.join("criteria.csv");
    write_csv(&path, &["id", "name", "outcome", "detail"], &rows)?;
    report.record_output(&path);
    for r in &results {
        println!("{}", r.summary_line());
        report.check(
            format!("criterion {:02}: {}", r.id, r.name),
            r.pass,
            None,
            r.detail.clone(),
        );
    }
    let passed = results.iter().filter(|r| r.pass).count();
    println!("selftest: {passed}/{} criteria passed", results.len());
    Ok((report, args.out))
}
