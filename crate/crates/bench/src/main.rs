use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dppsd::predictor::TrainingMethod;
use dppsd_bench::commands::{cmd_ber, cmd_complexity, cmd_gen_dataset, cmd_train, ensure_exists};
use dppsd_bench::config::{load_toml, DatasetJob, ExperimentSpec, TrainJob};
use dppsd_bench::detectors::DetectorId;
use dppsd_bench::Result;

#[derive(Parser)]
#[command(name = "dppsd", version, about = "Sphere-decoding experiments with learned path-metric prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a training set of features and sub-tree distances.
    GenDataset {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit the predictor network to a dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long, value_parser = parse_method)]
        method: Option<TrainingMethod>,
    },
    /// Bit-error-rate sweep over an SNR grid.
    Ber(SweepArgs),
    /// Operation-count sweep with ratios against the SE baseline.
    Complexity(SweepArgs),
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    /// Comma-separated SNR grid in dB.
    #[arg(long, value_delimiter = ',')]
    snr: Option<Vec<f64>>,
    /// Comma-separated detector ids.
    #[arg(long, value_delimiter = ',', value_parser = parse_detector)]
    detectors: Option<Vec<DetectorId>>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    /// Output stem; `.csv` and `.json` are appended.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[arg(long)]
    audit_termination: bool,
}

fn parse_detector(s: &str) -> Result<DetectorId, String> {
    s.parse().map_err(|e: dppsd_bench::BenchError| e.to_string())
}

fn parse_method(s: &str) -> Result<TrainingMethod, String> {
    match s {
        "scg" => Ok(TrainingMethod::Scg),
        "gradient-descent" | "gd" => Ok(TrainingMethod::GradientDescent),
        _ => Err(format!("unknown training method {s:?} (scg, gradient-descent)")),
    }
}

impl SweepArgs {
    fn spec(self) -> Result<ExperimentSpec> {
        let mut spec: ExperimentSpec = load_toml(&self.config)?;
        macro_rules! set {
            ($($field:ident <- $value:expr),* $(,)?) => {
                $(if let Some(v) = $value { spec.$field = v; })*
            };
        }
        set!(
            seed <- self.seed,
            trials_per_point <- self.trials,
            snr_grid_db <- self.snr,
            detectors <- self.detectors,
            checkpoint_every <- self.checkpoint_every,
        );
        set!(
            model_path <- self.model.map(Some),
            lambda1 <- self.lambda1.map(Some),
            lambda2 <- self.lambda2.map(Some),
            output <- self.output.map(Some),
            checkpoint <- self.checkpoint.map(Some),
        );
        spec.audit_termination |= self.audit_termination;
        spec.validate()?;
        Ok(spec)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenDataset {
            config,
            seed,
            count,
            output,
        } => {
            let mut job: DatasetJob = load_toml(&config)?;
            job.seed = seed.unwrap_or(job.seed);
            job.sample_count = count.unwrap_or(job.sample_count);
            job.output = output.unwrap_or(job.output);
            let s = cmd_gen_dataset(&job)?;
            println!(
                "wrote {} samples to {}; target mean {:.4}, min {:.4}, max {:.4}",
                s.samples,
                job.output.display(),
                s.target_mean,
                s.target_min,
                s.target_max
            );
        }
        Command::Train {
            config,
            seed,
            dataset,
            model,
            report,
            max_epochs,
            method,
        } => {
            let mut job: TrainJob = load_toml(&config)?;
            job.dataset = dataset.unwrap_or(job.dataset);
            job.model_output = model.unwrap_or(job.model_output);
            job.report_output = report.or(job.report_output);
            job.trainer.seed = seed.unwrap_or(job.trainer.seed);
            job.trainer.max_epochs = max_epochs.unwrap_or(job.trainer.max_epochs);
            job.trainer.method = method.unwrap_or(job.trainer.method);
            ensure_exists(&job.dataset, "dataset")?;
            let (_, r) = cmd_train(&job)?;
            println!(
                "trained for {} epochs, final mse {:.6}; model {}, report {}",
                r.epochs_run,
                r.final_mse,
                job.model_output.display(),
                job.report_path().display()
            );
        }
        Command::Ber(args) => {
            let spec = args.spec()?;
            for t in cmd_ber(&spec)? {
                let r = &t.row;
                println!(
                    "{:>6.2} dB  {:<16} ber {:.3e} ({} / {})  tree ops {:.1}  nn ops {:.1}  {:.1} us",
                    r.snr_db,
                    r.detector,
                    r.ber,
                    r.bit_errors,
                    r.bits_simulated,
                    r.avg_tree_ops(),
                    r.avg_nn_mults + r.avg_nn_adds,
                    t.mean_wall_us
                );
            }
        }
        Command::Complexity(args) => {
            let spec = args.spec()?;
            for t in cmd_complexity(&spec)? {
                let r = &t.row;
                println!(
                    "{:>6.2} dB  {:<16} tree {:.1} ({:.3})  tree+nn {:.1} ({:.3})",
                    r.snr_db, r.detector, r.avg_tree_ops, r.tree_ratio, r.avg_total_ops, r.total_ratio
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
