//! The `prioritizer` command line.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage error. Failures
//! print a single line `error kind=<category>: <message>` to stderr.

pub mod csvio;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use prioritizer_core::format::{load_class_file, load_labels, save_class_file};
use prioritizer_core::{
    build_dsa_index, capture_traces, derive_correctness, evaluate, load_model, load_tensor_file,
    predict_batch, save_tensor_file, score_batch, score_dsa_batch, select_top, ActivationTraceSet,
    Error, McConfig, Method, Model, Selection, Task,
};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "prioritizer",
    version,
    about = "Prioritize unlabeled test inputs for a trained neural network"
)]
pub struct Cli {
    /// Worker threads for forward passes and DSA queries (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Deterministic predictions for every input.
    Predict {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Activation traces (and predicted classes) for every input.
    Trace {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        inputs: PathBuf,
        /// Comma-separated layer names; defaults to the layer feeding softmax.
        #[arg(long, value_delimiter = ',')]
        layers: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Where to write predicted classes (classification models only).
        #[arg(long)]
        classes: Option<PathBuf>,
    },
    /// Priority score for every input.
    Score(ScoreArgs),
    /// Cumulative error curve and efficacy of a score file.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_enum)]
        task: TaskArg,
        /// MAE threshold for regression correctness.
        #[arg(long, default_value_t = prioritizer_core::eval::DEFAULT_MAE_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
        /// JSON summary; defaults to the curve path with a `.json` extension.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Highest-priority input indices.
    Select {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, conflicts_with = "k", required_unless_present = "k")]
        fraction: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// JSON manifest.
    #[arg(long)]
    pub model: PathBuf,
    /// NNWB weights; defaults to the manifest path with a `.nnwb` extension.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

impl ModelArgs {
    fn load(&self) -> Result<Model, Error> {
        let weights = self
            .weights
            .clone()
            .unwrap_or_else(|| self.model.with_extension("nnwb"));
        load_model(&self.model, weights)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Softmax,
    Dropout,
    Dsa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Classification,
    Regression,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Classification => Task::Classification,
            TaskArg::Regression => Task::Regression,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub inputs: PathBuf,
    /// Monte-Carlo samples per input (dropout).
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub samples: u32,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Training activation traces (dsa).
    #[arg(long, requires = "train_classes", conflicts_with = "train_inputs")]
    pub train_traces: Option<PathBuf>,
    /// Predicted classes of the training traces (dsa).
    #[arg(long)]
    pub train_classes: Option<PathBuf>,
    /// Training inputs to trace on the fly instead of --train-traces (dsa).
    #[arg(long)]
    pub train_inputs: Option<PathBuf>,
    /// Trace layers (dsa); defaults to the layer feeding softmax.
    #[arg(long, value_delimiter = ',')]
    pub layers: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(_) => 1,
        }
    }

    pub fn line(&self) -> String {
        let (kind, msg) = match self {
            CliError::Usage(m) => ("usage", m.clone()),
            CliError::Core(e) => (e.category(), e.to_string()),
        };
        format!("error kind={kind}: {}", msg.replace('\n', " "))
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("{}", CliError::Usage(first.to_string()).line());
            return 2;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build thread pool: {e}")))?;
    pool.install(|| dispatch(&cli.command))
}

fn dispatch(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::Predict { model, inputs, out } => {
            let model = model.load()?;
            let inputs = load_tensor_file(inputs)?;
            save_tensor_file(&predict_batch(&model, &inputs)?, out)?;
        }
        Command::Trace {
            model,
            inputs,
            layers,
            out,
            classes,
        } => {
            let model = model.load()?;
            let inputs = load_tensor_file(inputs)?;
            let layers = trace_layers(&model, layers);
            let set = capture_traces(&model, &inputs, &layers, classes.is_some())?;
            save_tensor_file(&set.traces, out)?;
            if let (Some(path), Some(c)) = (classes, &set.predicted_class) {
                save_class_file(c, path)?;
            }
        }
        Command::Score(args) => score(args)?,
        Command::Evaluate {
            scores,
            predictions,
            labels,
            task,
            threshold,
            out,
            report,
        } => {
            let scores = csvio::read_scores(BufReader::new(File::open(scores)?))?;
            let predictions = load_tensor_file(predictions)?;
            let labels = load_labels(labels)?;
            let correctness =
                derive_correctness(&predictions, &labels, (*task).into(), Some(*threshold))?;
            let rep = evaluate(&scores, &correctness)?;
            let is_error: Vec<bool> = correctness.correct.iter().map(|c| !c).collect();
            csvio::write_curve(
                BufWriter::new(File::create(out)?),
                &rep.permutation,
                &is_error,
                &rep.cum_errors,
            )?;
            let summary = Summary {
                method: rep.method.as_str(),
                n: rep.n(),
                m: rep.total_errors,
                apfd_percent: rep.apfd_percent,
            };
            let report = report.clone().unwrap_or_else(|| out.with_extension("json"));
            let mut json = serde_json::to_vec_pretty(&summary).map_err(Error::from)?;
            json.push(b'\n');
            std::fs::write(report, json)?;
            println!("apfd_percent={}", rep.apfd_percent);
        }
        Command::Select {
            scores,
            fraction,
            k,
            out,
        } => {
            let scores = csvio::read_scores(BufReader::new(File::open(scores)?))?;
            let selection = match (fraction, k) {
                (Some(f), None) => Selection::Fraction(*f),
                (None, Some(k)) => Selection::Count(*k),
                _ => {
                    return Err(CliError::Usage(
                        "exactly one of --fraction or --k is required".into(),
                    ))
                }
            };
            let picked = select_top(&scores, selection)?;
            csvio::write_selection(BufWriter::new(File::create(out)?), &picked)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Summary {
    method: &'static str,
    n: usize,
    m: u32,
    apfd_percent: f64,
}

fn trace_layers(model: &Model, requested: &[String]) -> Vec<String> {
    if requested.is_empty() {
        vec![model.default_trace_layer().to_string()]
    } else {
        requested.to_vec()
    }
}

fn score(args: &ScoreArgs) -> Result<(), CliError> {
    if args.method == MethodArg::Dsa && args.train_traces.is_none() && args.train_inputs.is_none() {
        return Err(CliError::Usage(
            "--method dsa needs --train-traces with --train-classes, or --train-inputs".into(),
        ));
    }
    let model = args.model.load()?;
    let inputs = load_tensor_file(&args.inputs)?;
    let scores = match args.method {
        MethodArg::Softmax => score_batch(&model, &inputs, Method::Softmax, None)?,
        MethodArg::Dropout => {
            let method = match model.task() {
                Task::Classification => Method::DropoutCls,
                Task::Regression => Method::DropoutReg,
            };
            let mc = McConfig::new(args.samples, args.seed)?;
            score_batch(&model, &inputs, method, Some(mc))?
        }
        MethodArg::Dsa => {
            let layers = trace_layers(&model, &args.layers);
            let train = match (&args.train_traces, &args.train_classes, &args.train_inputs) {
                (Some(traces), Some(classes), None) => load_trace_set(traces, classes, &layers)?,
                (None, None, Some(train_inputs)) => {
                    capture_traces(&model, &load_tensor_file(train_inputs)?, &layers, true)?
                }
                _ => {
                    return Err(CliError::Usage(
                        "--train-traces needs --train-classes and excludes --train-inputs".into(),
                    ))
                }
            };
            let index = build_dsa_index(&train)?;
            let test = capture_traces(&model, &inputs, &layers, true)?;
            score_dsa_batch(&index, &test)?
        }
    };
    csvio::write_scores(BufWriter::new(File::create(&args.out)?), &scores)?;
    Ok(())
}

fn load_trace_set(
    traces: &Path,
    classes: &Path,
    layers: &[String],
) -> Result<ActivationTraceSet, Error> {
    let traces = load_tensor_file(traces)?;
    if traces.rank() != 2 {
        return Err(Error::Dimension(format!(
            "trace file must be [N, d], got {:?}",
            traces.shape()
        )));
    }
    let classes = load_class_file(classes)?;
    ActivationTraceSet::new(layers.to_vec(), traces, Some(classes))
}
