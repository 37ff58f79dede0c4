use std::path::PathBuf;
use std::process::ExitCode;

use burnout_app::config::{PipelineConfig, DEFAULT_CONFIG_FILE};
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

mod commands;

#[derive(Parser)]
#[command(name = "burnout", version, about = "Burnout text screening pipeline")]
struct Cli {
    /// Pipeline config file (TOML). Defaults to ./burnout.toml when present.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Log filter, e.g. `info` or `burnout_core=debug`. Overrides BURNOUT_LOG.
    #[arg(long, global = true, value_name = "FILTER")]
    log: Option<String>,

    /// Emit logs as JSON lines.
    #[arg(long, global = true)]
    log_json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split raw comments into cleaned sentence records.
    Ingest(IngestArgs),
    /// Enumerate, run and sample synthetic generation prompts.
    #[command(subcommand)]
    Promptgen(PromptgenCommand),
    /// Compare labeler verdicts and queue discrepancies for adjudication.
    Reconcile(ReconcileArgs),
    /// Build the training corpus from the synthetic, GPT and manual strata.
    Assemble(AssembleArgs),
    /// Stratified, seeded train/eval split.
    Split(SplitArgs),
    /// Train the classifier head on frozen embeddings.
    Train(TrainArgs),
    /// Evaluate a trained model on labeled records.
    Eval(EvalArgs),
    /// Score texts with a trained model.
    Score(ScoreArgs),
    /// Run the HTTP scoring and adjudication service.
    Serve(ServeArgs),
    /// Print corpus composition statistics.
    Stats(StatsArgs),
    /// Print the resolved configuration.
    Config,
}

#[derive(Args)]
pub struct IngestArgs {
    /// Comment dump (JSONL or CSV). Defaults to paths.comments.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `jsonl` or `csv`; inferred from the file extension when omitted.
    #[arg(long)]
    pub format: Option<String>,
    /// Defaults to paths.sentences.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum PromptgenCommand {
    /// Write every prompt of the factor matrix as JSONL.
    Enumerate {
        /// Factor lists (TOML). Defaults to promptgen.factors or built-ins.
        #[arg(long)]
        factors: Option<PathBuf>,
        #[arg(long)]
        template: Option<PathBuf>,
        /// Defaults to paths.prompts.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Send prompts to the generation endpoint and store the batches.
    Run {
        #[arg(long)]
        factors: Option<PathBuf>,
        #[arg(long)]
        template: Option<PathBuf>,
        /// Only the first N prompts.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        url: Option<String>,
        #[arg(long)]
        model: Option<String>,
        /// Defaults to paths.batches.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample generated sentences into synthetic records.
    Sample {
        /// Defaults to assembly.synthetic_sample_n.
        #[arg(long)]
        n: Option<usize>,
        /// Defaults to assembly.synthetic_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to paths.batches.
        #[arg(long)]
        batches: Option<PathBuf>,
        /// JSONL output; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
pub struct ReconcileArgs {
    #[arg(long)]
    pub sentences: Option<PathBuf>,
    #[arg(long)]
    pub verdicts: Option<PathBuf>,
    /// Manual protocol labels (JSONL) to record for queued sentences.
    /// Defaults to paths.manual_labels when that file exists.
    #[arg(long)]
    pub manual_labels: Option<PathBuf>,
    #[arg(long)]
    pub event_log: Option<PathBuf>,
    /// Agreed, automatically labeled records. Defaults to paths.gpt_labeled.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Labeler whose verdicts label agreed sentences.
    #[arg(long, default_value = "llm")]
    pub primary: String,
    #[arg(long, default_value = "model:1")]
    pub secondary: String,
}

#[derive(Args)]
pub struct AssembleArgs {
    #[arg(long)]
    pub batches: Option<PathBuf>,
    #[arg(long)]
    pub gpt: Option<PathBuf>,
    #[arg(long)]
    pub event_log: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Composition report (JSON). Defaults to <paths.reports>/composition.json.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub train_out: Option<PathBuf>,
    #[arg(long)]
    pub eval_out: Option<PathBuf>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub eval: Option<PathBuf>,
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    /// Defaults to <paths.reports>/train_trace.json.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Labeled records. Defaults to paths.eval.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Defaults to <paths.reports>/roc.csv.
    #[arg(long)]
    pub roc_out: Option<PathBuf>,
    /// Defaults to <paths.reports>/eval.json.
    #[arg(long)]
    pub report_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Text to score; repeatable.
    #[arg(long)]
    pub text: Vec<String>,
    /// File with one text per line.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub event_log: Option<PathBuf>,
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

fn init_logging(cli: &Cli) {
    let default = match cli.command {
        Command::Serve(_) => "info",
        _ => "warn",
    };
    let filter = cli
        .log
        .clone()
        .or_else(|| std::env::var("BURNOUT_LOG").ok())
        .unwrap_or_else(|| default.to_string());
    let builder = tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_new(&filter).unwrap_or_else(|_| EnvFilter::new(default)))
        .with_writer(std::io::stderr);
    if cli.log_json {
        builder.json().init();
    } else {
        builder.init();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli);

    let config_path = cli.config.clone().or_else(|| {
        let p = PathBuf::from(DEFAULT_CONFIG_FILE);
        p.is_file().then_some(p)
    });
    let config = match PipelineConfig::load(config_path.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };

    match commands::run(cli.command, config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
