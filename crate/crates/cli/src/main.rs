//! `hosdf`: dataset generation, training, reconstruction, evaluation and the
//! ablation ladder from one binary.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;

#[derive(Parser, Debug)]
#[command(name = "hosdf", version, about = "Hand-object signed distance fields on synthetic grasp scenes")]
struct Cli {
    /// Run configuration (`key = value` lines) applied over the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    Gen(GenArgs),
    /// Train a model variant on the training split.
    Train(TrainArgs),
    /// Reconstruct hand and object meshes for one sample.
    Recon(ReconArgs),
    /// Score a checkpoint on the test split.
    Eval(EvalArgs),
    /// Train and evaluate several variants and seeds.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// One of a, b, c, c_star, d, e, f, g, g_star.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReconArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub sample: usize,
    /// Grid points per axis (default 64, or `eval.res` from the config).
    #[arg(long)]
    pub res: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output JSON path; the schema and effective config are written beside it.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "a,c_star,d,g_star")]
    pub variants: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = commands::load_config(cli.config.as_deref())?;
    let exec = commands::exec_for(cli.workers)?;
    let go = move || match cli.command {
        Command::Gen(a) => commands::gen(cfg, &a, exec),
        Command::Train(a) => commands::train(cfg, &a, exec),
        Command::Recon(a) => commands::recon(cfg, &a, exec),
        Command::Eval(a) => commands::eval(cfg, &a, exec),
        Command::Ablate(a) => commands::ablate(cfg, &a, exec),
    };
    commands::with_workers(cli.workers, go)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
