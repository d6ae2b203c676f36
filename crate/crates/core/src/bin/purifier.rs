use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use purifier::attacks::AttackKind;
use purifier::experiment::{self, ExperimentConfig, Outcome, Selection};
use purifier::purifier::Arm;
use purifier::Error;

#[derive(Parser)]
#[command(
    version,
    about = "Train, attack and evaluate confidence-purification defenses"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// Experiment file (TOML); the built-in desk experiment when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Output directory, replacing the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Restrict to one arm: none, reformer or full.
    #[arg(long, global = true)]
    arm: Option<Arm>,
}

#[derive(Subcommand)]
enum Verb {
    /// Write the dataset and split manifests.
    Synth,
    /// Train the target classifier.
    TrainTarget,
    /// Train the reformer and fix the swap set.
    TrainPurifier,
    /// Run attacks against the configured arms.
    Attack {
        /// Run only this attack.
        #[arg(long)]
        attack: Option<AttackKind>,
    },
    /// Assemble the result table.
    Report,
}

fn config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::desk("runs/desk"),
    };
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = cli.seed_override {
        cfg = cfg.with_seed(seed);
    }
    if let Some(arm) = cli.arm {
        cfg.arms = vec![arm];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Outcome, Error> {
    let cfg = config(cli)?;
    match &cli.verb {
        Verb::Synth => experiment::cmd_synth(&cfg),
        Verb::TrainTarget => experiment::cmd_train_target(&cfg),
        Verb::TrainPurifier => experiment::cmd_train_purifier(&cfg),
        Verb::Attack { attack } => experiment::cmd_attack(
            &cfg,
            Selection {
                arm: None,
                attack: *attack,
            },
        ),
        Verb::Report => experiment::cmd_report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            for p in &out.written {
                println!("wrote {}", p.display());
            }
            for p in &out.kept {
                println!("kept {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let msg = serde_json::json!({
                "error": e.kind(),
                "code": e.code(),
                "message": e.to_string(),
            });
            eprintln!("{msg}");
            ExitCode::from(e.code() as u8)
        }
    }
}
