use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fqt_infer::{infer_file, InferConfig, SplitChoice};

/// Score exported FQTW weights on a dataset.
#[derive(Parser, Debug)]
#[command(name = "fqt-infer", version)]
struct Args {
    /// Run configuration supplying `seed`, `[model]` and `[data]`.
    #[arg(long)]
    config: PathBuf,
    /// FQTW weight file.
    #[arg(long)]
    weights: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    split: SplitChoice,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let config = match InferConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match infer_file(&args.weights, &config, args.split) {
        Ok(report) => {
            println!(
                "accuracy {} ({} samples, m = {}, loss {:.6})",
                report.evaluation.accuracy, report.n_samples, report.m, report.evaluation.loss
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
