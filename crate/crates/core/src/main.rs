use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use appeal_scope::config::RunConfig;
use appeal_scope::design::{Dv, ModelKind};
use appeal_scope::pipeline::{FitSelection, Pipeline, Stage, StageError};
use appeal_scope::table::TableFormat;

/// Exit status for unusable arguments or configuration.
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "appeal-scope", version, about = "Appeal and Scope of misinformation, with Tweedie regression")]
struct Cli {
    /// Flat `key = value` run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Table format for report tables.
    #[arg(long, global = true)]
    format: Option<TableFormat>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Every stage in order over fresh outputs.
    Run,
    /// Parse and validate the corpus.
    Ingest,
    /// Label misinformation tweets and bot accounts.
    Classify,
    /// Build and export per-period communication networks.
    Graph,
    /// Compute Appeal and Scope for every in-period tweet.
    Metrics,
    /// Fit Tweedie models on misinformation tweets.
    Regress {
        #[arg(long)]
        dv: Option<Dv>,
        #[arg(long)]
        model: Option<ModelKind>,
    },
    /// Descriptive statistics, group summary and chart.
    Report,
    /// Generate a seeded synthetic corpus.
    Synth,
}

fn execute(p: &Pipeline, command: &Command) -> Result<(), StageError> {
    match command {
        Command::Run => p.run(),
        Command::Ingest => p.ingest().map(drop),
        Command::Classify => {
            let corpus = p.ingest()?;
            p.classify(&corpus).map(drop)
        }
        Command::Graph => {
            let corpus = p.ingest()?;
            let labels = p.load_labels(Stage::Graph)?;
            p.graph(&corpus, &labels).map(drop)
        }
        Command::Metrics => {
            let corpus = p.ingest()?;
            let labels = p.load_labels(Stage::Metrics)?;
            let networks = p.build_networks(Stage::Metrics, &corpus)?;
            p.metrics(&corpus, &networks, &labels).map(drop)
        }
        Command::Regress { dv, model } => {
            let records = p.load_metrics(Stage::Regress)?;
            p.regress(&records, FitSelection { dv: *dv, model: *model })
        }
        Command::Report => {
            let corpus = p.ingest()?;
            let labels = p.load_labels(Stage::Report)?;
            let records = p.load_metrics(Stage::Report)?;
            p.report(&corpus, &labels, &records)
        }
        Command::Synth => p.synth(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut config = match &cli.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
        },
        None => RunConfig::default(),
    };
    if let Some(out) = cli.out {
        config.out_dir = out;
    }
    if let Some(f) = cli.format {
        config.table_format = f;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let pipeline = Pipeline::new(config);
    let result = pool.install(|| execute(&pipeline, &cli.command));
    if let Err(e) = pipeline.write_manifest(result.as_ref().err()) {
        eprintln!("error: writing manifest: {e}");
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}
