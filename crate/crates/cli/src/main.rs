use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use slangcot_core::chain::{write_traces, PromptSet};
use slangcot_core::dataset::{load_records, preprocess_dataset, DatasetError};
use slangcot_core::domain::{ChainConfig, SlangRecord, Strategy};
use slangcot_core::gateway::{
    ChatBackend, Gateway, HashingEmbedder, HttpChatBackend, HttpEmbedBackend, RetryPolicy, ScriptedChat,
};
use slangcot_core::harness::{
    compare_strategies, emit_report, report_csv, report_json, run_experiment, sweep_temperature, DatasetInfo,
    ExperimentRun, ReportFormat, RunManifest, DEFAULT_TEMPERATURES,
};

#[derive(Parser)]
#[command(
    name = "slangcot",
    version,
    about = "Slang interpretation experiments over a chat-completion endpoint"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rephrase and filter a raw record file into a clean one.
    Preprocess(CommonArgs),
    /// Run one strategy over a dataset.
    Run(CommonArgs),
    /// Run one strategy at several temperatures.
    SweepTemp {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated temperatures.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_TEMPERATURES)]
        temperatures: Vec<f64>,
    },
    /// Run the single-prompt baseline and the greedy chain on the same records.
    Compare(CommonArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Io,
    GreedyCot,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON-lines record file.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "qwen2-7b-instruct")]
    model: String,
    #[arg(long, default_value_t = 0.3)]
    temperature: f64,
    #[arg(long, value_enum, default_value = "greedy-cot")]
    strategy: StrategyArg,
    /// Candidates per stage.
    #[arg(long, default_value_t = 3)]
    width: usize,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Chat-completions base URL; requests go to {base}/chat/completions.
    #[arg(long, default_value = "https://api.openai.com/v1")]
    base_url: String,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    api_key_env: String,
    /// Embedding service base URL; requests go to {url}/embed. Without it a
    /// built-in lexical hashing embedder is used.
    #[arg(long)]
    embed_url: Option<String>,
    /// Directory of template overrides (<stage>.txt).
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Output path. Reports get a manifest and a traces file beside them.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[arg(long, default_value_t = 2)]
    max_retries: u32,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    /// Scripted chat responses (JSON list of {contains|exact, response});
    /// replaces the HTTP chat backend for offline runs.
    #[arg(long)]
    script: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Dataset(String),
    AllFailed,
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Dataset(_) => 2,
            Failure::AllFailed => 3,
        }
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        Failure::Dataset(e.to_string())
    }
}

struct Setup {
    config: ChainConfig,
    prompts: PromptSet,
    gateway: Gateway,
    chat_desc: String,
    embed_desc: String,
}

fn setup(args: &CommonArgs) -> Result<Setup, Failure> {
    let config = ChainConfig {
        model_id: args.model.clone(),
        temperature: args.temperature,
        width: args.width,
        max_retries: args.max_retries,
        strategy: match args.strategy {
            StrategyArg::Io => Strategy::Io,
            StrategyArg::GreedyCot => Strategy::GreedyCot,
        },
        ..ChainConfig::default()
    };
    config.validate().map_err(|e| Failure::Config(e.to_string()))?;
    if args.concurrency == 0 {
        return Err(Failure::Config("--concurrency must be at least 1".into()));
    }
    let prompts = match &args.templates {
        Some(dir) => PromptSet::load_dir(dir).map_err(|e| Failure::Config(e.to_string()))?,
        None => PromptSet::default(),
    };

    let (chat, retry, chat_desc): (Arc<dyn ChatBackend>, RetryPolicy, String) = match &args.script {
        Some(path) => {
            let script = ScriptedChat::from_file(path)
                .map_err(|e| Failure::Config(format!("cannot load script {}: {e}", path.display())))?;
            (
                Arc::new(script),
                RetryPolicy::immediate(args.max_retries),
                format!("scripted:{}", path.display()),
            )
        }
        None => (
            Arc::new(HttpChatBackend::from_env(args.base_url.clone(), &args.api_key_env)),
            RetryPolicy::with_max_retries(args.max_retries),
            format!("http:{}", args.base_url),
        ),
    };
    let mut gateway = Gateway::new(chat)
        .with_retry(retry)
        .with_max_in_flight(args.concurrency);
    let embed_desc = match &args.embed_url {
        Some(url) => {
            gateway = gateway.with_embedder(Arc::new(HttpEmbedBackend::new(url.clone())));
            format!("http:{url}")
        }
        None => {
            let h = HashingEmbedder::default();
            let desc = format!("hashing:{}", h.dim());
            gateway = gateway.with_embedder(Arc::new(h));
            desc
        }
    };
    Ok(Setup {
        config,
        prompts,
        gateway,
        chat_desc,
        embed_desc,
    })
}

fn load(args: &CommonArgs) -> Result<Vec<SlangRecord>, Failure> {
    let records = load_records(&args.dataset, args.limit, args.seed)?;
    if records.is_empty() {
        return Err(Failure::Dataset(format!("{} has no records", args.dataset.display())));
    }
    Ok(records)
}

fn traces_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".traces.jsonl");
    PathBuf::from(s)
}

fn finish(
    command: &str,
    args: &CommonArgs,
    setup: &Setup,
    records: &[SlangRecord],
    run: ExperimentRun,
    temperatures: Vec<f64>,
) -> Result<(), Failure> {
    let format = match args.format {
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Json => ReportFormat::Json,
    };
    let io_err = |e: std::io::Error| Failure::Config(format!("cannot write output: {e}"));
    match &args.out {
        Some(out) => {
            emit_report(&run.report, out, format).map_err(io_err)?;
            let traces = File::create(traces_path(out)).map_err(io_err)?;
            write_traces(BufWriter::new(traces), &run.traces).map_err(io_err)?;
            let dataset = DatasetInfo::from_file(&args.dataset, args.limit, args.seed, records.len())
                .map_err(|e| Failure::Dataset(e.to_string()))?;
            let mut manifest = RunManifest::new(
                command,
                setup.config.clone(),
                dataset,
                setup.prompts.hashes(),
                setup.chat_desc.clone(),
                setup.embed_desc.clone(),
            );
            manifest.temperatures = temperatures;
            manifest.write_beside(out).map_err(io_err)?;
            log::info!("wrote {}", out.display());
        }
        None => match format {
            ReportFormat::Csv => print!("{}", report_csv(&run.report)),
            ReportFormat::Json => print!("{}", report_json(&run.report)),
        },
    }
    for row in &run.report.rows {
        eprintln!(
            "{} t={} {}: {} ok, {} failed",
            row.model_id, row.temperature, row.strategy, row.record_count, row.failed_count
        );
    }
    if run.report.rows.iter().all(|r| r.record_count == 0) {
        return Err(Failure::AllFailed);
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let harness_err = |e: slangcot_core::harness::HarnessError| Failure::Config(e.to_string());
    match cli.command {
        Command::Preprocess(args) => {
            let s = setup(&args)?;
            let out = args
                .out
                .as_ref()
                .ok_or_else(|| Failure::Config("preprocess needs --out".into()))?;
            let counts = preprocess_dataset(&args.dataset, out, &s.config, &s.prompts, &s.gateway)?;
            println!(
                "kept {}, dropped {}, failed {}",
                counts.kept, counts.dropped, counts.failed
            );
            if counts.failed > 0 && counts.failed == counts.total() {
                return Err(Failure::AllFailed);
            }
            Ok(())
        }
        Command::Run(args) => {
            let s = setup(&args)?;
            let records = load(&args)?;
            let run = run_experiment(&s.config, &records, &s.prompts, &s.gateway).map_err(harness_err)?;
            finish("run", &args, &s, &records, run, Vec::new())
        }
        Command::SweepTemp { common, temperatures } => {
            let s = setup(&common)?;
            let records = load(&common)?;
            let run =
                sweep_temperature(&s.config, &temperatures, &records, &s.prompts, &s.gateway).map_err(harness_err)?;
            finish("sweep-temp", &common, &s, &records, run, temperatures)
        }
        Command::Compare(args) => {
            let s = setup(&args)?;
            let records = load(&args)?;
            let run = compare_strategies(&s.config, &records, &s.prompts, &s.gateway).map_err(harness_err)?;
            finish("compare", &args, &s, &records, run, Vec::new())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(m) => eprintln!("configuration error: {m}"),
                Failure::Dataset(m) => eprintln!("dataset error: {m}"),
                Failure::AllFailed => eprintln!("every record failed"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}
