//! Command-line driver: graph extraction, training, evaluation,
//! cross-validation and the parameter budget report.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use apsg::ingest::load_corpus;
use clap::{Parser, Subcommand};
use graphlora::extract::write_extracted;
use graphlora::train::{cross_validate, evaluate_records, train, TrainError, Trained};
use graphlora::{Model, TrainConfig};

#[derive(Parser)]
#[command(
    name = "graphlora",
    version,
    about = "Patch correctness classification with graph-conditioned adapters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the attributed graph of every record as JSON (and DOT).
    Extract {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dot: bool,
    },
    /// Train on a corpus and save the model directory.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a corpus with a saved model and write metrics JSON.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// k-fold cross-validation report.
    Xval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trainable-parameter budget for a configuration.
    Params {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn read_config(path: Option<&Path>) -> Result<TrainConfig, TrainError> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| TrainError::Io {
                path: p.into(),
                source,
            })?;
            Ok(TrainConfig::parse(&text)?)
        }
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), TrainError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| TrainError::Io {
        path: path.into(),
        source,
    })
}

fn run(cli: Cli) -> Result<(), TrainError> {
    match cli.command {
        Command::Extract { corpus, out, dot } => {
            let records = load_corpus(&corpus)?;
            let written = write_extracted(&records, &out, dot)?;
            println!(
                "wrote {} files for {} records to {}",
                written.len(),
                records.len(),
                out.display()
            );
        }
        Command::Train {
            corpus,
            config,
            out,
        } => {
            let records = load_corpus(&corpus)?;
            let config = read_config(Some(&config))?;
            let trained = train(&records, &config)?;
            trained.save(&out)?;
            let report = evaluate_records(&trained, &records)?;
            let last = trained.log.epochs.last().expect("at least one epoch");
            println!(
                "trained {} epochs ({} steps), final mean loss {:.6}, training accuracy {:.4}",
                trained.log.epochs.len(),
                trained.log.optimizer_steps,
                last.mean_loss,
                report.metrics.accuracy.unwrap_or(f64::NAN)
            );
        }
        Command::Eval { corpus, model, out } => {
            let records = load_corpus(&corpus)?;
            let trained = Trained::load(&model)?;
            let report = evaluate_records(&trained, &records)?;
            write_json(&out, &report)?;
            println!(
                "accuracy {:?} on {} records",
                report.metrics.accuracy,
                records.len()
            );
        }
        Command::Xval {
            corpus,
            config,
            out,
        } => {
            let records = load_corpus(&corpus)?;
            let config = read_config(Some(&config))?;
            let report = cross_validate(&records, &config)?;
            write_json(&out, &report)?;
            println!("{}-fold mean accuracy {:?}", report.k, report.mean.accuracy);
        }
        Command::Params { config } => {
            let config = read_config(config.as_deref())?;
            let report = Model::new(&config)?.parameter_report();
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
