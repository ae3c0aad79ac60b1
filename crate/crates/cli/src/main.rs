use std::path::PathBuf;
use std::process::ExitCode;

use anchoring_cli::{
    cmd_dataset, cmd_eval_pairs, cmd_eval_run, cmd_kb_export, cmd_run, cmd_simulate, cmd_train, exit_code,
    RunConfig, UsageError,
};
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "anchor", version, about = "Perceptual anchoring pipeline")]
struct Cli {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic scenes and a train/val/test manifest
    Simulate,
    /// Build labeled pair files from scenes
    Dataset {
        /// Scene files or directories of scene files
        #[arg(long, required = true, num_args = 1..)]
        scenes: Vec<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        /// Dataset name written into the pair files
        #[arg(long, default_value = "sim")]
        name: String,
    },
    /// Train the neural matcher
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
    },
    /// Run the anchoring engine over a scene
    Run {
        #[arg(long)]
        scene: PathBuf,
        /// Trained model; the analytic matcher is used when absent
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Classification report on pair files, or identity score of a run
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Also report the analytic matcher
        #[arg(long)]
        baseline: bool,
        #[arg(long, num_args = 1..)]
        pairs: Vec<PathBuf>,
        /// Event log of a run; requires --scene
        #[arg(long, requires = "scene", conflicts_with_all = ["pairs", "model", "baseline"])]
        events: Option<PathBuf>,
        /// Ground-truth scene for --events
        #[arg(long, requires = "events")]
        scene: Option<PathBuf>,
    },
    /// Print a knowledge-base snapshot in readable form
    KbExport {
        #[arg(long)]
        snapshot: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), cli.seed)?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Simulate => {
            let paths = cmd_simulate(&cfg, out)?;
            println!("wrote {} scenes and manifest.json to {}", paths.len(), out.display());
        }
        Command::Dataset { scenes, manifest, name } => {
            print!("{}", cmd_dataset(&cfg, &scenes, &manifest, &name, out)?);
        }
        Command::Train { train, val } => {
            cmd_train(&cfg, &train, val.as_deref(), out)?;
            println!("wrote model.json and history.jsonl to {}", out.display());
        }
        Command::Run { scene, model } => {
            let s = cmd_run(&cfg, &scene, model.as_deref(), out)?;
            println!(
                "{} frames, {} anchors, {} acquires, {} reacquires, {} facts",
                s.frames, s.anchors, s.acquires, s.reacquires, s.facts
            );
        }
        Command::Eval { model, baseline, pairs, events, scene } => match (events, scene) {
            (Some(ev), Some(sc)) => {
                let score = cmd_eval_run(&cfg, &ev, &sc, Some(out))?;
                println!("identity_score {score:.4}");
            }
            (None, None) => print!("{}", cmd_eval_pairs(&cfg, model.as_deref(), baseline, &pairs, out)?),
            _ => return Err(UsageError::Args("--events and --scene go together".into()).into()),
        },
        Command::KbExport { snapshot } => print!("{}", cmd_kb_export(&snapshot)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
