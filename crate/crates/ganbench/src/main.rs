use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ganbench::commands::{self, Overrides};
use ganbench::config::{EvalConfig, ExperimentConfig};
use ganbench::eval::{self, EvalTarget};
use ganbench::run::OutputOptions;
use ganbench::{CliError, CliResult};

/// Synthetic GAN benchmark: generate datasets, train, evaluate and report.
///
/// Exit codes: 0 success, 2 configuration error, 3 infeasible scene,
/// 4 numeric failure (non-finite loss), 5 missing or unreadable file.
#[derive(Parser)]
#[command(name = "ganbench", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed of the command's main stage (dataset for gen-data, training for
    /// train/transfer, sampling for eval/report).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Training budget in generator steps.
    #[arg(long, global = true)]
    steps: Option<u64>,
    /// Exact output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Root for new run directories [default: config output_dir, then $GANBENCH_OUT, then ./runs].
    #[arg(long, global = true)]
    out_root: Option<PathBuf>,
    /// Reuse `<name>-<hash>` (or --out) and replace its contents.
    #[arg(long, global = true)]
    force: bool,
    /// Require the deterministic backend (recorded in the manifest).
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured dataset.
    GenData { config: PathBuf },
    /// Train the configured model.
    Train {
        config: PathBuf,
        /// Continue from this checkpoint (or run directory).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a run, a checkpoint or a dataset.
    Eval {
        /// Run directory.
        #[arg(long, conflicts_with_all = ["checkpoint", "dataset"])]
        run: Option<PathBuf>,
        /// Checkpoint file; needs --config.
        #[arg(long, requires = "config")]
        checkpoint: Option<PathBuf>,
        /// Dataset sidecar (`dataset.json`); scores the data itself.
        #[arg(long, conflicts_with = "checkpoint")]
        dataset: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fine-tune a trained model on the configured dataset.
    Transfer {
        config: PathBuf,
        /// Source checkpoint or run directory.
        #[arg(long)]
        source: PathBuf,
    },
    /// Markdown/JSON report with plots for one or more runs.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let g = cli.global;
    let ov = Overrides {
        seed: g.seed,
        steps: g.steps,
        deterministic: g.deterministic,
    };
    let out = OutputOptions {
        out: g.out,
        out_root: g.out_root,
        force: g.force,
    };
    match cli.command {
        Command::GenData { config } => {
            let r = commands::gen_data(ExperimentConfig::load(&config)?, &ov, &out)?;
            let d = &r.manifest.dataset;
            println!("{} samples of {}, seed {}", d.n, d.kind, d.seed);
            if let Some(desc) = &d.description {
                println!("scenes: {desc}; rejected layouts: {}", d.total_rejections.unwrap_or(0));
            }
            println!("sha256 {}", d.sha256);
            println!("wrote {}", r.sidecar.display());
        }
        Command::Train { config, resume } => {
            let r = commands::train(ExperimentConfig::load(&config)?, &ov, &out, resume.as_deref())?;
            print_run(&r);
        }
        Command::Transfer { config, source } => {
            let r = commands::transfer(ExperimentConfig::load(&config)?, &source, &ov, &out)?;
            print_run(&r);
        }
        Command::Eval {
            run,
            checkpoint,
            dataset,
            config,
        } => {
            let target = match (run, checkpoint, dataset) {
                (Some(dir), None, None) => EvalTarget::Run(dir),
                (None, Some(ckpt), None) => EvalTarget::Checkpoint {
                    checkpoint: ckpt,
                    config: ExperimentConfig::load(config.as_deref().expect("clap enforces --config"))?,
                },
                (None, None, Some(sidecar)) => EvalTarget::Dataset {
                    sidecar,
                    eval: match config {
                        Some(c) => ExperimentConfig::load(&c)?.eval,
                        None => EvalConfig::default(),
                    },
                },
                _ => return Err(CliError::Config("pass exactly one of --run, --checkpoint, --dataset".into())),
            };
            let r = eval::eval(&target, &ov, &out)?;
            println!("{}", serde_json::to_string_pretty(&r.report).expect("report serialises"));
            println!("wrote {}", r.dir.display());
        }
        Command::Report { runs } => {
            let (dir, _) = eval::report(&runs, &ov, &out)?;
            println!("wrote {}", dir.join("report.md").display());
        }
    }
    Ok(())
}

fn print_run(r: &commands::RunOutcome) {
    let m = &r.manifest;
    println!(
        "{}: {} generator steps ({:?}), {} history rows",
        m.name,
        m.final_step.unwrap_or(0),
        m.stop_reason,
        m.history_rows.unwrap_or(0)
    );
    println!("wrote {}", r.dir.display());
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
