//! Run configuration and the end-to-end select / compare pipelines behind the
//! `graphfilter` binary. Everything here takes already-parsed options, so the
//! same paths serve the binary, tests and in-memory callers.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::corpus::{
    load_records_from_path, ContentSide, NGramOrders, SourceRecord, TokenizerPolicy,
    TrainingInstance,
};
use crate::error::{Error, Result};
use crate::graph::{build_graph, BipartiteGraph, CorpusStats};
use crate::metrics::{render_table, summarize, write_report, StrategyRun, SubsetReport};
use crate::quality::{builtin_quality, load_quality_file, MissingQuality, QualityTable};
use crate::selector::{
    baseline_longest, baseline_quality_topk, baseline_random, select, PriorityMode,
    SelectionConfig, SelectionResult,
};

/// Where quality scores come from.
#[derive(Debug, Clone, PartialEq)]
pub enum QualitySource {
    File(PathBuf),
    Builtin,
    /// Every instance scores 1.
    Uniform,
    /// Scores supplied in memory, indexed by instance id.
    Scores(Vec<f64>),
}

/// A selection strategy for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Random,
    Longest,
    /// Top-k by quality score.
    Perplexity,
    /// Greedy graph selection; `None` uses the run's priority mode.
    GraphFilter(Option<PriorityMode>),
}

impl Strategy {
    fn needs_quality(self, default_mode: PriorityMode) -> bool {
        match self {
            Strategy::Perplexity => true,
            Strategy::GraphFilter(m) => m.unwrap_or(default_mode).uses_quality(),
            Strategy::Random | Strategy::Longest => false,
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "random" => Ok(Strategy::Random),
            "longest" => Ok(Strategy::Longest),
            "perplexity" | "quality-topk" => Ok(Strategy::Perplexity),
            "graphfilter" => Ok(Strategy::GraphFilter(None)),
            _ => match s.strip_prefix("graphfilter-") {
                Some(mode) => Ok(Strategy::GraphFilter(Some(mode.parse()?))),
                None => Err(Error::Config(format!("unknown strategy {s:?}"))),
            },
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Random => f.write_str("random"),
            Strategy::Longest => f.write_str("longest"),
            Strategy::Perplexity => f.write_str("perplexity"),
            Strategy::GraphFilter(None) => f.write_str("graphfilter"),
            Strategy::GraphFilter(Some(m)) => write!(f, "graphfilter-{m}"),
        }
    }
}

/// Options as given on the command line, before validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawRunConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub budget: Option<i64>,
    pub orders: Option<String>,
    pub side: Option<String>,
    pub tokenizer: Option<String>,
    pub quality: Option<String>,
    pub quality_file: Option<PathBuf>,
    pub priority: Option<String>,
    pub seed: Option<u64>,
    pub strategies: Option<String>,
    pub fill_missing_quality: bool,
    pub report_timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Select,
    Compare,
}

/// Validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub budget: usize,
    pub orders: NGramOrders,
    pub side: ContentSide,
    pub tokenizer: TokenizerPolicy,
    pub quality: QualitySource,
    pub priority: PriorityMode,
    pub seed: u64,
    pub strategies: Vec<Strategy>,
    pub missing_quality: MissingQuality,
    pub report_timings: bool,
}

impl RunConfig {
    /// Defaults for in-memory use: all orders, instruction side, builtin
    /// quality, combined priority.
    pub fn new(budget: usize) -> Self {
        RunConfig {
            input: None,
            output: None,
            report: None,
            trace: None,
            budget,
            orders: NGramOrders::ALL,
            side: ContentSide::Instruction,
            tokenizer: TokenizerPolicy::DEFAULT,
            quality: QualitySource::Builtin,
            priority: PriorityMode::Combined,
            seed: 0,
            strategies: Vec::new(),
            missing_quality: MissingQuality::Fail,
            report_timings: false,
        }
    }
}

fn parse_into<T>(value: &Option<String>, default: T, errors: &mut Vec<String>) -> T
where
    T: FromStr<Err = Error>,
{
    match value {
        None => default,
        Some(s) => s.parse().unwrap_or_else(|e: Error| {
            errors.push(match e {
                Error::Config(msg) => msg,
                other => other.to_string(),
            });
            default
        }),
    }
}

impl RawRunConfig {
    /// Checks every option and reports all problems in one error.
    pub fn validate(&self, command: Command) -> Result<RunConfig> {
        let mut errors = Vec::new();
        if self.input.is_none() {
            errors.push("--input is required".to_owned());
        }
        if command == Command::Select && self.output.is_none() {
            errors.push("--output is required".to_owned());
        }
        let budget = match self.budget {
            None => {
                errors.push("--budget is required".to_owned());
                1
            }
            Some(b) if b < 1 => {
                errors.push(format!("budget must be at least 1, got {b}"));
                1
            }
            Some(b) => b as usize,
        };
        let orders = parse_into(&self.orders, NGramOrders::ALL, &mut errors);
        let side = parse_into(&self.side, ContentSide::Instruction, &mut errors);
        let tokenizer = parse_into(&self.tokenizer, TokenizerPolicy::DEFAULT, &mut errors);
        let priority = parse_into(&self.priority, PriorityMode::Combined, &mut errors);

        let quality_kind = self.quality.clone().unwrap_or_else(|| {
            if self.quality_file.is_some() {
                "file"
            } else {
                "builtin"
            }
            .into()
        });
        let quality = match (
            quality_kind.to_ascii_lowercase().as_str(),
            &self.quality_file,
        ) {
            ("file", Some(p)) => QualitySource::File(p.clone()),
            ("file", None) => {
                errors.push("--quality file requires --quality-file".into());
                QualitySource::Uniform
            }
            ("builtin", None) => QualitySource::Builtin,
            ("uniform", None) => QualitySource::Uniform,
            ("builtin" | "uniform", Some(_)) => {
                errors.push(format!(
                    "--quality-file conflicts with --quality {quality_kind}"
                ));
                QualitySource::Uniform
            }
            (other, _) => {
                errors.push(format!("unknown quality source {other:?}"));
                QualitySource::Uniform
            }
        };

        let strategies = match (&self.strategies, command) {
            (Some(list), _) => {
                let parsed: Vec<Strategy> = list
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .filter_map(|s| {
                        s.parse()
                            .map_err(|e: Error| errors.push(e.to_string()))
                            .ok()
                    })
                    .collect();
                if parsed.is_empty() && list.split(',').all(|s| s.trim().is_empty()) {
                    errors.push("strategy list is empty".into());
                }
                parsed
            }
            (None, Command::Compare) => {
                errors.push("--strategies is required for compare".into());
                Vec::new()
            }
            (None, Command::Select) => Vec::new(),
        };

        if !errors.is_empty() {
            return Err(Error::Config(errors.join("; ")));
        }
        Ok(RunConfig {
            input: self.input.clone(),
            output: self.output.clone(),
            report: self.report.clone(),
            trace: self.trace.clone(),
            budget,
            orders,
            side,
            tokenizer,
            quality,
            priority,
            seed: self.seed.unwrap_or(0),
            strategies,
            missing_quality: if self.fill_missing_quality {
                MissingQuality::FillMedian
            } else {
                MissingQuality::Fail
            },
            report_timings: self.report_timings,
        })
    }
}

/// Dense quality scores for `instances` from the configured source.
pub fn quality_scores(instances: &[TrainingInstance], config: &RunConfig) -> Result<Vec<f64>> {
    let n = instances.len();
    let table: QualityTable<f64> = match &config.quality {
        QualitySource::File(path) => load_quality_file(path, n)?,
        QualitySource::Builtin => builtin_quality(instances, config.tokenizer).table,
        QualitySource::Uniform => QualityTable::uniform(n),
        QualitySource::Scores(scores) => {
            if scores.len() != n {
                return Err(Error::QualityMismatch {
                    got: scores.len(),
                    expected: n,
                });
            }
            QualityTable::from_scores(scores.clone())?
        }
    };
    table.scores(config.missing_quality)
}

fn prepare(
    instances: &[TrainingInstance],
    config: &RunConfig,
) -> Result<(BipartiteGraph, CorpusStats<f64>)> {
    build_graph(instances, config.side, config.orders, config.tokenizer)
}

/// Greedy selection over in-memory instances. The CLI goes through this same
/// function.
pub fn select_instances(
    instances: &[TrainingInstance],
    config: &RunConfig,
) -> Result<SelectionResult<f64>> {
    let (graph, stats) = prepare(instances, config)?;
    let quality = if config.priority.uses_quality() {
        Some(quality_scores(instances, config)?)
    } else {
        None
    };
    let selection = SelectionConfig::new(config.budget, config.priority)?;
    select(graph, &stats, quality.as_deref(), &selection)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Write {
        path: path.to_owned(),
        source,
    })
}

fn load(config: &RunConfig) -> Result<Vec<SourceRecord>> {
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("--input is required".into()))?;
    let records = load_records_from_path(input)?;
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(records)
}

/// One JSON line per step: step, id, priority, newly covered n-grams.
pub fn render_trace(result: &SelectionResult<f64>) -> String {
    result
        .steps
        .iter()
        .enumerate()
        .map(|(step, s)| {
            serde_json::json!({
                "step": step,
                "id": s.id,
                "priority": s.priority,
                "newly_covered": s.newly_covered,
            })
            .to_string()
                + "\n"
        })
        .collect()
}

/// What a select run did, for the caller to print.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectSummary {
    pub budget: usize,
    pub dataset_size: usize,
    pub selected: usize,
    pub coverage: f64,
    pub seconds: f64,
}

impl SelectSummary {
    pub fn budget_exceeds_dataset(&self) -> bool {
        self.budget > self.dataset_size
    }
}

/// Selects a subset and writes the chosen input lines, in input order, to
/// the output path. Optionally writes the step trace and a report.
pub fn run_select(config: &RunConfig) -> Result<SelectSummary> {
    let records = load(config)?;
    let instances: Vec<TrainingInstance> = records.iter().map(|r| r.instance.clone()).collect();
    let (graph, stats) = prepare(&instances, config)?;
    let quality = if config.priority.uses_quality() {
        Some(quality_scores(&instances, config)?)
    } else {
        None
    };
    let selection = SelectionConfig::new(config.budget, config.priority)?;
    let started = Instant::now();
    let result = select(graph.clone(), &stats, quality.as_deref(), &selection)?;
    let seconds = started.elapsed().as_secs_f64();

    let mut chosen = result.selected();
    chosen.sort_unstable();
    let mut out = Vec::new();
    for &u in &chosen {
        out.extend_from_slice(records[u].raw.as_bytes());
        out.push(b'\n');
    }
    let output = config
        .output
        .as_ref()
        .ok_or_else(|| Error::Config("--output is required".into()))?;
    write_file(output, &out)?;
    if let Some(trace) = &config.trace {
        write_file(trace, render_trace(&result).as_bytes())?;
    }
    if let Some(report) = &config.report {
        let run = StrategyRun {
            name: format!("graphfilter-{}", config.priority),
            result: result.clone(),
            seconds: config.report_timings.then_some(seconds),
        };
        let reports = summarize(
            &[run],
            &instances,
            &graph,
            quality.as_deref(),
            config.budget,
            config.tokenizer,
        )?;
        write_report(&reports, report)?;
    }
    Ok(SelectSummary {
        budget: config.budget,
        dataset_size: instances.len(),
        selected: result.len(),
        coverage: result.coverage(),
        seconds,
    })
}

/// Runs each configured strategy on the same corpus and returns one report
/// per strategy, writing them when a report path is set.
pub fn run_compare(config: &RunConfig) -> Result<Vec<SubsetReport>> {
    if config.strategies.is_empty() {
        return Err(Error::Config("strategy list is empty".into()));
    }
    let records = load(config)?;
    let instances: Vec<TrainingInstance> = records.into_iter().map(|r| r.instance).collect();
    compare_instances(&instances, config)
}

pub fn compare_instances(
    instances: &[TrainingInstance],
    config: &RunConfig,
) -> Result<Vec<SubsetReport>> {
    let (graph, stats) = prepare(instances, config)?;
    let quality = if config
        .strategies
        .iter()
        .any(|s| s.needs_quality(config.priority))
    {
        Some(quality_scores(instances, config)?)
    } else {
        None
    };
    let mut runs = Vec::with_capacity(config.strategies.len());
    for &strategy in &config.strategies {
        let started = Instant::now();
        let result = match strategy {
            Strategy::Random => baseline_random(&graph, config.budget, config.seed)?,
            Strategy::Longest => {
                baseline_longest(instances, &graph, config.budget, config.tokenizer)?
            }
            Strategy::Perplexity => {
                baseline_quality_topk(&graph, quality.as_deref(), config.budget)?
            }
            Strategy::GraphFilter(mode) => {
                let mode = mode.unwrap_or(config.priority);
                let q = if mode.uses_quality() {
                    quality.as_deref()
                } else {
                    None
                };
                select(
                    graph.clone(),
                    &stats,
                    q,
                    &SelectionConfig::new(config.budget, mode)?,
                )?
            }
        };
        let seconds = started.elapsed().as_secs_f64();
        runs.push(StrategyRun {
            name: strategy.to_string(),
            result,
            seconds: config.report_timings.then_some(seconds),
        });
    }
    let reports = summarize(
        &runs,
        instances,
        &graph,
        quality.as_deref(),
        config.budget,
        config.tokenizer,
    )?;
    if let Some(path) = &config.report {
        write_report(&reports, path)?;
    }
    Ok(reports)
}

/// Prints the comparison table to `out`.
pub fn print_table<W: Write>(reports: &[SubsetReport], mut out: W) -> std::io::Result<()> {
    out.write_all(render_table(reports).as_bytes())
}
