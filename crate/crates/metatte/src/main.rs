use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use metatte::commands::{
    cmd_ablate, cmd_evaluate, cmd_preprocess, cmd_synth, cmd_train, exit_code_for, BucketChoice,
    TrainOverrides,
};

/// Trajectory-based travel-time estimation across city tasks with a
/// meta-learned recurrent encoder-decoder.
#[derive(Parser)]
#[command(name = "metatte", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct TrainFlags {
    /// Recurrent cell: lstm, gru, or bilstm [default: gru]
    #[arg(long)]
    cell: Option<String>,
    /// Model variant: full, wt (no temporal embeddings), wa (mean fusion)
    /// [default: full]
    #[arg(long)]
    variant: Option<String>,
    /// Meta step size [default: 0.1]
    #[arg(long)]
    beta: Option<f64>,
    /// Inner optimizer steps per meta-iteration [default: 10]
    #[arg(long)]
    k: Option<usize>,
    /// Meta-iteration bound; the loop runs iterations 1..eta [default: 7000]
    #[arg(long)]
    eta: Option<u64>,
    /// Training batch size [default: 32]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Root seed for all randomness [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Iterations between validation passes [default: 100]
    #[arg(long)]
    eval_every: Option<u64>,
}

impl TrainFlags {
    fn overrides(&self) -> TrainOverrides {
        TrainOverrides {
            cell: self.cell.clone(),
            variant: self.variant.clone(),
            beta: self.beta,
            inner_steps: self.k,
            max_iterations: self.eta,
            batch_size: self.batch_size,
            seed: self.seed,
            eval_every: self.eval_every,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw GPS point files, apply the preprocessing rules, split by
    /// date, and write a task-set file plus a keep/drop report.
    Preprocess {
        /// Configuration file with task.<id>.* sections
        #[arg(long)]
        config: PathBuf,
        /// Input files as task=path pairs (repeatable)
        #[arg(long = "input", required = true)]
        inputs: Vec<String>,
        /// Skip the first line of each input file
        #[arg(long)]
        has_header: bool,
        /// Output task-set file
        #[arg(long)]
        out: PathBuf,
        /// Output preprocessing report (comma-delimited)
        #[arg(long)]
        report: PathBuf,
    },
    /// Generate synthetic city corpora in the ingestible point format,
    /// with oracle sidecar files.
    Synth {
        /// Configuration file with synth.<id>.* sections
        #[arg(long)]
        config: PathBuf,
        /// Directory for <city>.csv and <city>.oracle.csv outputs
        #[arg(long)]
        out_dir: PathBuf,
        /// Root seed [default: 42]
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Meta-train on a task set and write the best checkpoint and the
    /// training history.
    Train {
        /// Task-set file from `preprocess`
        #[arg(long)]
        task_set: PathBuf,
        /// Optional configuration file (model.* and train.* sections)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for checkpoint.mtte and history.csv
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Evaluate a checkpoint on a task set's shared pool and print
    /// overall, per-task, and bucketed metric tables.
    Evaluate {
        /// Checkpoint file from `train`
        #[arg(long)]
        checkpoint: PathBuf,
        /// Task-set file providing the evaluation pool
        #[arg(long)]
        task_set: PathBuf,
        /// Optional configuration file; must match the checkpoint
        #[arg(long)]
        config: Option<PathBuf>,
        /// Bucket families to report: time, distance, both, or none
        #[arg(long, default_value = "both")]
        buckets: String,
        /// Pool to evaluate: test or val
        #[arg(long, default_value = "test")]
        pool: String,
        /// Also write the rows as comma-delimited text
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and compare the ablation grid (wt, wa, lstm, bilstm, gru)
    /// under a shared seed; resumes from completed per-variant checkpoints.
    Ablate {
        /// Task-set file from `preprocess`
        #[arg(long)]
        task_set: PathBuf,
        /// Optional configuration file (model.* and train.* sections)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for per-variant checkpoints and the table
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        flags: TrainFlags,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Preprocess {
            config,
            inputs,
            has_header,
            out,
            report,
        } => cmd_preprocess(&config, &inputs, has_header, &out, &report),
        Command::Synth {
            config,
            out_dir,
            seed,
        } => cmd_synth(&config, &out_dir, seed),
        Command::Train {
            task_set,
            config,
            out_dir,
            flags,
        } => cmd_train(&task_set, config.as_deref(), &out_dir, &flags.overrides()),
        Command::Evaluate {
            checkpoint,
            task_set,
            config,
            buckets,
            pool,
            out,
        } => cmd_evaluate(
            &checkpoint,
            &task_set,
            config.as_deref(),
            BucketChoice::parse(&buckets)?,
            &pool,
            out.as_deref(),
        ),
        Command::Ablate {
            task_set,
            config,
            out_dir,
            flags,
        } => cmd_ablate(&task_set, config.as_deref(), &out_dir, &flags.overrides()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
