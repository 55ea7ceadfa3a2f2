//! Subset quality and diversity measurements, and comparison reports.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::corpus::{tokenize, Token, TokenizerPolicy, TrainingInstance};
use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::quality::median;
use crate::scalar::Scalar;
use crate::selector::SelectionResult;

pub const MTLD_THRESHOLD: f64 = 0.72;

/// Fraction of the graph's n-grams adjacent to at least one selected
/// sentence. `graph` must be in its initial (unmutated) state.
pub fn coverage(selected: &[usize], graph: &BipartiteGraph) -> Result<f64> {
    let mut seen = vec![false; graph.ngram_count()];
    let mut covered = 0;
    for &u in selected {
        if u >= graph.sentence_count() {
            return Err(Error::UnknownSentence(u));
        }
        for &v in graph.neighbors(u)? {
            if !seen[v] {
                seen[v] = true;
                covered += 1;
            }
        }
    }
    if graph.ngram_count() == 0 {
        Ok(0.0)
    } else {
        Ok(covered as f64 / graph.ngram_count() as f64)
    }
}

/// Factor counts from one directional MTLD pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtldPass<T> {
    pub full_factors: usize,
    pub partial: T,
}

impl<T: Scalar> MtldPass<T> {
    pub fn factors(&self) -> T {
        T::from_count(self.full_factors) + self.partial
    }
}

/// One pass: a factor ends whenever the running type-token ratio drops
/// below `threshold`; the leftover segment counts `(1 - ttr) / (1 - threshold)`.
pub fn mtld_pass<'a, T: Scalar>(
    tokens: impl IntoIterator<Item = &'a Token>,
    threshold: T,
) -> MtldPass<T> {
    let mut types: HashSet<&Token> = HashSet::new();
    let mut count = 0usize;
    let mut full_factors = 0;
    for t in tokens {
        count += 1;
        types.insert(t);
        let ttr = T::from_count(types.len()) / T::from_count(count);
        if ttr < threshold {
            full_factors += 1;
            types.clear();
            count = 0;
        }
    }
    let partial = if count > 0 {
        let ttr = T::from_count(types.len()) / T::from_count(count);
        (T::one() - ttr) / (T::one() - threshold)
    } else {
        T::zero()
    };
    MtldPass {
        full_factors,
        partial,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtldScore<T> {
    pub value: T,
    /// True when no pass produced any factor (every token distinct); the
    /// value is then the token count.
    pub degenerate: bool,
}

/// Mean of the forward and backward pass scores, each `tokens / factors`.
pub fn mtld<T: Scalar>(tokens: &[Token], threshold: T) -> Result<MtldScore<T>> {
    if tokens.is_empty() {
        return Err(Error::EmptySequence);
    }
    if !(threshold > T::zero() && threshold < T::one()) {
        return Err(Error::Config(format!(
            "MTLD threshold {threshold} outside (0, 1)"
        )));
    }
    let len = T::from_count(tokens.len());
    let forward = mtld_pass(tokens, threshold).factors();
    let backward = mtld_pass(tokens.iter().rev(), threshold).factors();
    if forward == T::zero() || backward == T::zero() {
        return Ok(MtldScore {
            value: len,
            degenerate: true,
        });
    }
    Ok(MtldScore {
        value: (len / forward + len / backward) / T::from_count(2),
        degenerate: false,
    })
}

/// One strategy's selection, as input to [`summarize`].
#[derive(Debug, Clone)]
pub struct StrategyRun<T> {
    pub name: String,
    pub result: SelectionResult<T>,
    /// Wall-clock selection time; left out of reports when `None`.
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetReport {
    pub strategy: String,
    pub budget: usize,
    pub selected: usize,
    pub coverage: f64,
    pub mean_quality: Option<f64>,
    pub median_quality: Option<f64>,
    pub mtld_instruction: Option<f64>,
    pub mtld_instruction_degenerate: bool,
    pub mtld_response: Option<f64>,
    pub mtld_response_degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

fn concatenated_mtld(
    texts: impl Iterator<Item = String>,
    policy: TokenizerPolicy,
) -> (Option<f64>, bool) {
    let tokens: Vec<Token> = texts.flat_map(|t| tokenize(&t, policy)).collect();
    match mtld::<f64>(&tokens, MTLD_THRESHOLD) {
        Ok(s) => (Some(s.value), s.degenerate),
        Err(_) => (None, false),
    }
}

/// One report per run, in input order. Text statistics are taken over the
/// selected instances in ascending id order; `graph` must be unmutated.
pub fn summarize<T: Scalar>(
    runs: &[StrategyRun<T>],
    instances: &[TrainingInstance],
    graph: &BipartiteGraph,
    quality: Option<&[T]>,
    budget: usize,
    policy: TokenizerPolicy,
) -> Result<Vec<SubsetReport>> {
    runs.iter()
        .map(|run| {
            let mut ids = run.result.selected();
            ids.sort_unstable();
            if let Some(&bad) = ids.iter().find(|&&u| u >= instances.len()) {
                return Err(Error::UnknownSentence(bad));
            }
            let scores: Vec<f64> = quality
                .map(|q| ids.iter().map(|&u| q[u].to_f64_lossy()).collect())
                .unwrap_or_default();
            let mean_quality =
                (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64);
            let (mtld_instruction, mtld_instruction_degenerate) = concatenated_mtld(
                ids.iter().map(|&u| instances[u].instruction.clone()),
                policy,
            );
            let (mtld_response, mtld_response_degenerate) =
                concatenated_mtld(ids.iter().map(|&u| instances[u].response.clone()), policy);
            Ok(SubsetReport {
                strategy: run.name.clone(),
                budget,
                selected: ids.len(),
                coverage: coverage(&ids, graph)?,
                mean_quality,
                median_quality: median(scores.iter().copied()),
                mtld_instruction,
                mtld_instruction_degenerate,
                mtld_response,
                mtld_response_degenerate,
                seconds: run.seconds,
            })
        })
        .collect()
}

fn cell(x: Option<f64>, degenerate: bool) -> String {
    match x {
        Some(v) if degenerate => format!("{v:.4}*"),
        Some(v) => format!("{v:.4}"),
        None => "-".into(),
    }
}

/// Aligned plain-text table. A trailing `*` marks a degenerate MTLD value.
pub fn render_table(reports: &[SubsetReport]) -> String {
    let header = [
        "strategy",
        "budget",
        "selected",
        "coverage",
        "mean_q",
        "median_q",
        "mtld_instr",
        "mtld_resp",
        "seconds",
    ];
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.strategy.clone(),
                r.budget.to_string(),
                r.selected.to_string(),
                format!("{:.4}", r.coverage),
                cell(r.mean_quality, false),
                cell(r.median_quality, false),
                cell(r.mtld_instruction, r.mtld_instruction_degenerate),
                cell(r.mtld_response, r.mtld_response_degenerate),
                cell(r.seconds, false),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].len())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let mut push_row = |cells: &[&str]| {
        let line: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| {
                if i == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    };
    push_row(&header);
    for r in &rows {
        push_row(&r.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

/// Path of the table written next to a report file.
pub fn table_path(path: &Path) -> PathBuf {
    path.with_extension("table.txt")
}

/// Writes one JSON line per report to `path` and the aligned table to
/// [`table_path`].
pub fn write_report(reports: &[SubsetReport], path: &Path) -> Result<()> {
    let write_err = |path: &Path| {
        let path = path.to_owned();
        move |source| Error::Write { path, source }
    };
    let mut buf = Vec::new();
    for r in reports {
        serde_json::to_writer(&mut buf, r).expect("report serializes");
        buf.push(b'\n');
    }
    fs::write(path, &buf).map_err(write_err(path))?;
    let table = table_path(path);
    let mut f = fs::File::create(&table).map_err(write_err(&table))?;
    f.write_all(render_table(reports).as_bytes())
        .map_err(write_err(&table))
}
