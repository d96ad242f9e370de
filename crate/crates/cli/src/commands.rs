use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use fqt_core::fed::{run_federated_with, GlobalEvaluation, GlobalParams};
use fqt_core::qtgen::{parameter_report, ParameterReport};
use fqt_infer::{infer_file, InferConfig, SplitChoice};
use fqt_nn::weights;
use fqt_nn::Shape;
use serde_json::json;

use crate::config::{default_hidden, MappingSection, RunConfig};
use crate::{checkpoint, metrics};

pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

#[derive(Parser, Debug)]
#[command(
    name = "fqt",
    version,
    about = "Federated training of quantum-generated network weights"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Report qubit count and trainable parameters for a target size.
    Plan(PlanArgs),
    /// Run federated training and write a run directory.
    Train {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Generate target weights from a checkpoint.
    Gen {
        config: PathBuf,
        checkpoint: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Score FQTW weights with the classical network only.
    Infer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
        split: SplitChoice,
    },
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    /// Number of target weights.
    #[arg(long, required_unless_present = "config")]
    pub m: Option<usize>,
    /// Take m, n_mlp, layers and hidden from a run config.
    #[arg(long, conflicts_with = "m")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_mlp: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// Mapping hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub json: bool,
}

/// A command failure and the exit status it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or configuration (status 1).
    Usage(anyhow::Error),
    /// Failure while running a valid request (status 2).
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => e,
        }
    }
}

trait Classify<T> {
    fn usage(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

/// Executes a parsed command, writing its report to `out`.
pub fn run(command: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Plan(args) => {
            let text = plan(&args)?;
            writeln!(out, "{text}").runtime()
        }
        Command::Train { config, output_dir } => {
            let summary = train(&config, output_dir, out)?;
            writeln!(out, "wrote {}", summary.output_dir.display()).runtime()
        }
        Command::Gen {
            config,
            checkpoint,
            output,
        } => {
            let m = generate(&config, &checkpoint, &output)?;
            writeln!(out, "wrote {m} weights to {}", output.display()).runtime()
        }
        Command::Infer {
            config,
            weights,
            split,
        } => {
            let config = InferConfig::load(&config).usage()?;
            let report = infer_file(&weights, &config, split).runtime()?;
            writeln!(
                out,
                "accuracy {} ({} samples, m = {}, loss {:.6})",
                report.evaluation.accuracy, report.n_samples, report.m, report.evaluation.loss
            )
            .runtime()
        }
    }
}

pub fn read_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .usage()?;
    RunConfig::from_toml(&text)
        .with_context(|| format!("invalid config {}", path.display()))
        .usage()
}

pub fn plan(args: &PlanArgs) -> Result<String, Failure> {
    let (m, mut mapping, mut layers) = match &args.config {
        Some(path) => {
            let c = read_config(path)?;
            (
                c.target().usage()?.param_count(),
                c.mapping,
                c.ansatz.n_layers,
            )
        }
        None => (
            args.m.expect("clap requires m or config"),
            MappingSection::default(),
            crate::config::AnsatzSection::default().n_layers,
        ),
    };
    if let Some(n) = args.n_mlp {
        mapping.n_mlp = n;
    }
    if let Some(l) = args.layers {
        layers = l;
    }
    let hidden = args.hidden.clone().unwrap_or(if args.config.is_some() {
        mapping.hidden
    } else {
        default_hidden()
    });
    let report = parameter_report(m, mapping.n_mlp, layers, &hidden).usage()?;
    Ok(if args.json {
        let mut value = serde_json::to_value(&report).expect("report serializes");
        value["mode"] = json!(mode(&report));
        serde_json::to_string_pretty(&value).expect("json value serializes")
    } else {
        format_report(&report)
    })
}

fn mode(report: &ParameterReport) -> &'static str {
    if report.n_mlp == 1 {
        "vanilla"
    } else {
        "batched"
    }
}

fn format_report(r: &ParameterReport) -> String {
    let hidden: Vec<String> = r.hidden.iter().map(usize::to_string).collect();
    [
        ("target weights m", r.m.to_string()),
        ("mode", format!("{} (n_mlp = {})", mode(r), r.n_mlp)),
        ("chunks n_ch", r.n_chunks.to_string()),
        ("qubits N", r.n_qubits.to_string()),
        ("qubits without batching", r.unbatched_qubits.to_string()),
        ("ansatz layers L", r.n_layers.to_string()),
        ("mapping hidden", format!("[{}]", hidden.join(", "))),
        ("|theta| = L(6N-3)", r.theta_count.to_string()),
        ("|beta|", r.beta_count.to_string()),
        ("trainable", r.trainable.to_string()),
        ("trainable / m", format!("{:.6}", r.compression_ratio)),
    ]
    .iter()
    .map(|(k, v)| format!("{k:<24} {v}"))
    .collect::<Vec<_>>()
    .join("\n")
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub output_dir: PathBuf,
    pub initial: GlobalEvaluation,
    pub final_params: GlobalParams,
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, bytes)
        .with_context(|| format!("writing {}", path.display()))
        .runtime()
}

fn eval_json(e: &GlobalEvaluation) -> serde_json::Value {
    json!({
        "train_loss": e.train.loss,
        "train_accuracy": e.train.accuracy,
        "test_loss": e.test.loss,
        "test_accuracy": e.test.accuracy,
    })
}

/// Runs a federated training job described by the config at `path`.
///
/// Outputs in the run directory: `config.toml` (resolved), `metrics.csv`,
/// `checkpoints/round_NNNN.fqtc`, `omega.fqtw` and `summary.json`. An
/// `INCOMPLETE` marker exists until everything has been written.
pub fn train(
    path: &Path,
    output_dir: Option<PathBuf>,
    log: &mut dyn Write,
) -> Result<TrainSummary, Failure> {
    let mut config = read_config(path)?;
    if let Some(dir) = output_dir {
        config.output_dir = dir;
    }
    let setup = config.setup().usage()?;
    let fed = config.federated();
    let loaded = config.data.load(config.seed).runtime()?;
    let shape = Shape::from_dims(loaded.train.sample_dims()).runtime()?;
    if shape != config.sample_shape().0 {
        return Err(Failure::Runtime(anyhow!(
            "dataset samples have shape {shape:?}, expected {:?}",
            config.sample_shape().0
        )));
    }
    if fed.n_clients > loaded.train.len() {
        return Err(Failure::Usage(anyhow!(
            "{} clients but only {} training samples",
            fed.n_clients,
            loaded.train.len()
        )));
    }
    config.data = loaded.resolved.clone();

    let dir = config.output_dir.clone();
    let ckpt_dir = dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)
        .with_context(|| format!("creating {}", ckpt_dir.display()))
        .runtime()?;
    let marker = dir.join(INCOMPLETE_MARKER);
    write(&marker, "training in progress\n")?;
    for entry in fs::read_dir(&ckpt_dir).runtime()? {
        let p = entry.runtime()?.path();
        if p.extension().is_some_and(|e| e == "fqtc") {
            fs::remove_file(&p).runtime()?;
        }
    }
    write(&dir.join("config.toml"), config.to_toml())?;
    let metrics_path = dir.join("metrics.csv");
    let mut csv = fs::File::create(&metrics_path)
        .with_context(|| format!("creating {}", metrics_path.display()))
        .runtime()?;
    csv.write_all(metrics::HEADER.as_bytes()).runtime()?;

    let mut side_error: Option<anyhow::Error> = None;
    let run = run_federated_with(&fed, &setup, &loaded.train, &loaded.test, |m, params| {
        let step = (|| -> anyhow::Result<()> {
            csv.write_all(metrics::round_rows(m).as_bytes())?;
            checkpoint::save(&ckpt_dir.join(checkpoint::file_name(m.round)), params)?;
            writeln!(
                log,
                "round {}/{}  train_loss {:.6}  train_acc {:.4}  test_acc {:.4}  ({:.2?})",
                m.round,
                fed.n_rounds,
                m.train_loss,
                m.train_accuracy,
                m.test_accuracy,
                m.wall_clock
            )?;
            Ok(())
        })();
        step.map_err(|e| {
            let msg = e.to_string();
            side_error = Some(e);
            fqt_core::Error::InvalidState(msg)
        })
    });
    let run = match (run, side_error) {
        (_, Some(e)) => return Err(Failure::Runtime(e)),
        (r, None) => r.runtime()?,
    };
    csv.flush().runtime()?;

    weights::save(&dir.join("omega.fqtw"), &run.omega).runtime()?;
    let summary = json!({
        "parameters": setup.report(),
        "initial": eval_json(&run.initial),
        "rounds": run.rounds.iter().map(|r| json!({
            "round": r.round,
            "train_loss": r.train_loss,
            "test_loss": r.test_loss,
            "test_accuracy": r.test_accuracy,
            "wall_clock_seconds": r.wall_clock.as_secs_f64(),
        })).collect::<Vec<_>>(),
    });
    write(
        &dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    fs::remove_file(&marker).runtime()?;
    Ok(TrainSummary {
        output_dir: dir,
        initial: run.initial,
        final_params: run.params,
    })
}

/// One generation pass from a checkpoint, saved as FQTW. Returns m.
pub fn generate(config: &Path, ckpt: &Path, output: &Path) -> Result<usize, Failure> {
    let config = read_config(config)?;
    let setup = config.setup().usage()?;
    let params = checkpoint::load(ckpt).runtime()?;
    let (nt, nb) = (setup.ansatz().param_count(), setup.report().beta_count);
    if params.theta.len() != nt || params.beta.len() != nb {
        return Err(Failure::Runtime(anyhow!(
            "shape error: config needs |theta| = {nt}, |beta| = {nb}; checkpoint holds {} and {}",
            params.theta.len(),
            params.beta.len()
        )));
    }
    let generator = setup.generator(&params).runtime()?;
    let (omega, _) = generator.generate().runtime()?;
    weights::save(output, &omega).runtime()?;
    Ok(omega.len())
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit status.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
                return 1;
            }
            let _ = write!(out, "{text}");
            return 0;
        }
    };
    match run(cli.command, out) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {:#}", f.error());
            f.exit_code()
        }
    }
}
