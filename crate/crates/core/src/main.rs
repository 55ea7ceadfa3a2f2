use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use graphfilter::cli::{print_table, run_compare, run_select, Command, RawRunConfig};
use graphfilter::corpus::load_dataset_from_path;
use graphfilter::synthetic::{generate, SyntheticSpec};
use graphfilter::{build_graph, Error};

#[derive(Parser)]
#[command(
    name = "graphfilter",
    version,
    about = "Quality- and diversity-aware subset selection for instruction data"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Select a subset and write the chosen records.
    Select(RunArgs),
    /// Run several strategies on one corpus and report on each.
    Compare(RunArgs),
    /// Write a seeded synthetic corpus.
    Synth(SynthArgs),
    /// Print the sentence/n-gram edge list of a corpus.
    DumpGraph(DumpArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    budget: Option<i64>,
    /// Comma-separated n-gram orders, e.g. 1,2,3.
    #[arg(long)]
    orders: Option<String>,
    /// instruction | response | both
    #[arg(long)]
    side: Option<String>,
    /// default | words | whitespace
    #[arg(long)]
    tokenizer: Option<String>,
    /// file | builtin | uniform
    #[arg(long)]
    quality: Option<String>,
    #[arg(long)]
    quality_file: Option<PathBuf>,
    /// Use the median score for instances without a quality record.
    #[arg(long)]
    fill_missing_quality: bool,
    /// combined | quality-only | diversity-only | uniform
    #[arg(long)]
    priority: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Include wall-clock seconds in the report (makes it non-reproducible).
    #[arg(long)]
    report_timings: bool,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Comma-separated: random, longest, perplexity, graphfilter[-MODE]
    #[arg(long)]
    strategies: Option<String>,
}

impl From<RunArgs> for RawRunConfig {
    fn from(a: RunArgs) -> Self {
        RawRunConfig {
            input: a.input,
            output: a.output,
            report: a.report,
            trace: a.trace,
            budget: a.budget,
            orders: a.orders,
            side: a.side,
            tokenizer: a.tokenizer,
            quality: a.quality,
            quality_file: a.quality_file,
            priority: a.priority,
            seed: a.seed,
            strategies: a.strategies,
            fill_missing_quality: a.fill_missing_quality,
            report_timings: a.report_timings,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 1000)]
    instances: usize,
    #[arg(long, default_value_t = 5000)]
    vocab: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "1,2,3")]
    orders: String,
    #[arg(long, default_value = "instruction")]
    side: String,
}

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.category().exit_code())
}

fn write_err(path: PathBuf) -> impl FnOnce(io::Error) -> Error {
    move |source| Error::Write { path, source }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Cmd::Select(args) => {
            let config = RawRunConfig::from(args).validate(Command::Select)?;
            let summary = run_select(&config)?;
            if summary.budget_exceeds_dataset() {
                eprintln!(
                    "warning: budget {} exceeds dataset size {}; selecting all instances",
                    summary.budget, summary.dataset_size
                );
            }
            eprintln!(
                "selected {} of {} (budget {}), coverage {:.4}, {:.3}s",
                summary.selected,
                summary.dataset_size,
                summary.budget,
                summary.coverage,
                summary.seconds
            );
        }
        Cmd::Compare(args) => {
            let config = RawRunConfig::from(args).validate(Command::Compare)?;
            let reports = run_compare(&config)?;
            print_table(&reports, io::stdout().lock()).map_err(write_err("<stdout>".into()))?;
        }
        Cmd::Synth(args) => {
            let spec = SyntheticSpec {
                instances: args.instances,
                vocab: args.vocab,
                ..SyntheticSpec::default()
            };
            let mut out = String::new();
            for inst in generate(&spec, args.seed) {
                out.push_str(
                    &serde_json::json!({"instruction": inst.instruction, "response": inst.response})
                        .to_string(),
                );
                out.push('\n');
            }
            std::fs::write(&args.output, out).map_err(write_err(args.output.clone()))?;
        }
        Cmd::DumpGraph(args) => {
            let instances = load_dataset_from_path(&args.input)?;
            let (graph, _) = build_graph::<f64>(
                &instances,
                args.side.parse()?,
                args.orders.parse()?,
                Default::default(),
            )?;
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            graph
                .write_edge_list(&mut lock)
                .and_then(|_| lock.flush())
                .map_err(write_err("<stdout>".into()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
