//! Greedy priority-driven subset selection over the bipartite graph.
//!
//! Each step takes the live sentence with the highest priority, records it,
//! and removes it together with every n-gram it covers. [`select`] keeps a
//! max-heap with per-sentence version counters: after a removal only the
//! affected frontier gets fresh entries and older entries are discarded when
//! popped. [`select_reference`] rescans every live sentence each step and is
//! the correctness oracle for the heap path.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{tokenize, TokenizerPolicy, TrainingInstance};
use crate::error::{Error, Result};
use crate::graph::{BipartiteGraph, CorpusStats, WeightScratch};
use crate::scalar::{harmonic, Scalar};

/// How a sentence's priority is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PriorityMode {
    /// quality x diversity
    #[default]
    Combined,
    QualityOnly,
    DiversityOnly,
    /// Current degree: plain greedy set cover.
    Uniform,
}

impl PriorityMode {
    pub const ALL: [PriorityMode; 4] = [
        PriorityMode::Combined,
        PriorityMode::QualityOnly,
        PriorityMode::DiversityOnly,
        PriorityMode::Uniform,
    ];

    pub fn uses_quality(self) -> bool {
        matches!(self, PriorityMode::Combined | PriorityMode::QualityOnly)
    }

    pub fn name(self) -> &'static str {
        match self {
            PriorityMode::Combined => "combined",
            PriorityMode::QualityOnly => "quality-only",
            PriorityMode::DiversityOnly => "diversity-only",
            PriorityMode::Uniform => "uniform",
        }
    }
}

impl fmt::Display for PriorityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PriorityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PriorityMode::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown priority mode {s:?}")))
    }
}

/// Ordering among sentences of equal priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TieBreak {
    /// Higher quality score first, then lower id. Quality counts as 0 in
    /// modes that do not consume it.
    #[default]
    QualityThenLowerId,
    LowerId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionConfig {
    pub budget: usize,
    pub mode: PriorityMode,
    pub tie_break: TieBreak,
    /// Seed for the random baseline.
    pub seed: u64,
    /// Run the graph audit and the greedy-dominance check after every step.
    /// Costs a full rescan per step.
    pub audit: bool,
}

impl SelectionConfig {
    pub fn new(budget: usize, mode: PriorityMode) -> Result<Self> {
        if budget == 0 {
            return Err(Error::Config("budget must be at least 1".into()));
        }
        Ok(SelectionConfig {
            budget,
            mode,
            tie_break: TieBreak::default(),
            seed: 0,
            audit: false,
        })
    }

    pub fn with_tie_break(mut self, tie_break: TieBreak) -> Self {
        self.tie_break = tie_break;
        self
    }

    pub fn with_audit(mut self, audit: bool) -> Self {
        self.audit = audit;
        self
    }
}

/// One greedy step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionStep<T> {
    pub id: usize,
    pub priority: T,
    pub newly_covered: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult<T> {
    pub steps: Vec<SelectionStep<T>>,
    pub covered_ngrams: usize,
    pub initial_ngrams: usize,
}

impl<T: Copy> SelectionResult<T> {
    /// Selected ids in selection order.
    pub fn selected(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.id).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Covered fraction of the initial n-gram set.
    pub fn coverage(&self) -> f64 {
        if self.initial_ngrams == 0 {
            0.0
        } else {
            self.covered_ngrams as f64 / self.initial_ngrams as f64
        }
    }
}

/// Sum of frozen weights over the current neighbors of `u`.
pub fn diversity<T: Scalar>(u: usize, graph: &BipartiteGraph, stats: &CorpusStats<T>) -> Result<T> {
    Ok(stats.weight_sum(graph.neighbors(u)?))
}

fn quality_of<T: Scalar>(u: usize, quality: Option<&[T]>) -> Result<T> {
    quality
        .and_then(|q| q.get(u).copied())
        .ok_or(Error::MissingQuality { count: 1, first: u })
}

/// Priority of live sentence `u` under `mode`.
pub fn priority<T: Scalar>(
    u: usize,
    graph: &BipartiteGraph,
    stats: &CorpusStats<T>,
    quality: Option<&[T]>,
    mode: PriorityMode,
) -> Result<T> {
    match mode {
        PriorityMode::Combined => Ok(quality_of(u, quality)? * diversity(u, graph, stats)?),
        PriorityMode::QualityOnly => {
            graph.neighbors(u)?;
            quality_of(u, quality)
        }
        PriorityMode::DiversityOnly => diversity(u, graph, stats),
        PriorityMode::Uniform => Ok(T::from_count(graph.degree(u)?)),
    }
}

/// Total order used to pick the next sentence: priority, then the tie-break
/// key, then lower id.
#[derive(Debug, Clone, Copy)]
struct RankKey<T> {
    priority: T,
    secondary: T,
    id: usize,
}

impl<T: Scalar> PartialEq for RankKey<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for RankKey<T> {}

impl<T: Scalar> PartialOrd for RankKey<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for RankKey<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // priorities are validated finite, so partial_cmp never fails
        self.priority
            .partial_cmp(&other.priority)
            .unwrap_or(Ordering::Equal)
            .then(
                self.secondary
                    .partial_cmp(&other.secondary)
                    .unwrap_or(Ordering::Equal),
            )
            .then(other.id.cmp(&self.id))
    }
}

/// Shared by both implementations so their comparisons agree bit for bit.
struct Ranker<'a, T> {
    stats: &'a CorpusStats<T>,
    quality: Option<&'a [T]>,
    mode: PriorityMode,
    tie_break: TieBreak,
    scratch: RefCell<WeightScratch>,
}

impl<'a, T: Scalar> Ranker<'a, T> {
    fn new(
        graph: &BipartiteGraph,
        stats: &'a CorpusStats<T>,
        quality: Option<&'a [T]>,
        config: &SelectionConfig,
    ) -> Result<Self> {
        if config.budget == 0 {
            return Err(Error::Config("budget must be at least 1".into()));
        }
        if stats.ngram_count() != graph.ngram_count() || stats.n() != graph.sentence_count() {
            return Err(Error::Config(
                "corpus statistics do not belong to this graph".into(),
            ));
        }
        if let Some(q) = quality {
            if q.len() != graph.sentence_count() {
                return Err(Error::QualityMismatch {
                    got: q.len(),
                    expected: graph.sentence_count(),
                });
            }
            if let Some(&s) = q.iter().find(|s| !s.is_finite()) {
                return Err(Error::NonPositive {
                    what: "quality score",
                    value: s.to_f64_lossy(),
                });
            }
        } else if config.mode.uses_quality() {
            return Err(Error::MissingQuality {
                count: graph.sentence_count(),
                first: 0,
            });
        }
        Ok(Ranker {
            stats,
            quality,
            mode: config.mode,
            tie_break: config.tie_break,
            scratch: RefCell::new(WeightScratch::default()),
        })
    }

    fn key(&self, u: usize, graph: &BipartiteGraph) -> RankKey<T> {
        let adj = graph.adjacency(u);
        let q = || self.quality.map_or(T::zero(), |q| q[u]);
        let d = || {
            self.stats
                .weight_sum_with(adj, &mut self.scratch.borrow_mut())
        };
        let priority = match self.mode {
            PriorityMode::Combined => q() * d(),
            PriorityMode::QualityOnly => q(),
            PriorityMode::DiversityOnly => d(),
            PriorityMode::Uniform => T::from_count(adj.len()),
        };
        let secondary = match self.tie_break {
            TieBreak::QualityThenLowerId if self.mode.uses_quality() => q(),
            _ => T::zero(),
        };
        RankKey {
            priority,
            secondary,
            id: u,
        }
    }

    fn best_by_scan(&self, graph: &BipartiteGraph) -> Option<RankKey<T>> {
        graph.live_sentences().map(|u| self.key(u, graph)).max()
    }
}

fn audit_step<T: Scalar>(
    ranker: &Ranker<'_, T>,
    graph: &BipartiteGraph,
    chosen: RankKey<T>,
) -> Result<()> {
    if let Err(msg) = graph.audit() {
        return Err(Error::Config(format!("graph audit failed: {msg}")));
    }
    if let Some(best) = ranker.best_by_scan(graph) {
        if best.id != chosen.id || best.priority != chosen.priority {
            return Err(Error::Config(format!(
                "greedy dominance violated: chose {} ({}), best is {} ({})",
                chosen.id, chosen.priority, best.id, best.priority
            )));
        }
    }
    Ok(())
}

#[derive(Debug)]
struct HeapEntry<T> {
    key: RankKey<T>,
    version: u32,
}

impl<T: Scalar> PartialEq for HeapEntry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl<T: Scalar> Eq for HeapEntry<T> {}

impl<T: Scalar> PartialOrd for HeapEntry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for HeapEntry<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key)
    }
}

/// Greedy selection with a lazily invalidated max-heap. Consumes the graph;
/// clone it first if the initial state is still needed.
pub fn select<T: Scalar>(
    mut graph: BipartiteGraph,
    stats: &CorpusStats<T>,
    quality: Option<&[T]>,
    config: &SelectionConfig,
) -> Result<SelectionResult<T>> {
    let ranker = Ranker::new(&graph, stats, quality, config)?;
    let initial_ngrams = graph.ngram_count();
    let mut versions = vec![0u32; graph.sentence_count()];
    let mut heap: BinaryHeap<HeapEntry<T>> = graph
        .live_sentences()
        .map(|u| HeapEntry {
            key: ranker.key(u, &graph),
            version: 0,
        })
        .collect();

    let target = config.budget.min(graph.live_sentence_count());
    let mut steps = Vec::with_capacity(target);
    let mut covered_ngrams = 0;
    while steps.len() < target {
        let Some(entry) = heap.pop() else { break };
        let u = entry.key.id;
        if !graph.is_live(u) || entry.version != versions[u] {
            continue;
        }
        if config.audit {
            audit_step(&ranker, &graph, entry.key)?;
        }
        let removal = graph.remove_selected(u)?;
        covered_ngrams += removal.covered.len();
        steps.push(SelectionStep {
            id: u,
            priority: entry.key.priority,
            newly_covered: removal.covered.len(),
        });
        for a in removal.affected {
            versions[a] += 1;
            heap.push(HeapEntry {
                key: ranker.key(a, &graph),
                version: versions[a],
            });
        }
    }
    Ok(SelectionResult {
        steps,
        covered_ngrams,
        initial_ngrams,
    })
}

/// Same contract as [`select`], recomputing every live priority each step.
pub fn select_reference<T: Scalar>(
    mut graph: BipartiteGraph,
    stats: &CorpusStats<T>,
    quality: Option<&[T]>,
    config: &SelectionConfig,
) -> Result<SelectionResult<T>> {
    let ranker = Ranker::new(&graph, stats, quality, config)?;
    let initial_ngrams = graph.ngram_count();
    let mut steps = Vec::new();
    let mut covered_ngrams = 0;
    while steps.len() < config.budget {
        let Some(best) = ranker.best_by_scan(&graph) else {
            break;
        };
        if config.audit {
            graph
                .audit()
                .map_err(|msg| Error::Config(format!("graph audit failed: {msg}")))?;
        }
        let removal = graph.remove_selected(best.id)?;
        covered_ngrams += removal.covered.len();
        steps.push(SelectionStep {
            id: best.id,
            priority: best.priority,
            newly_covered: removal.covered.len(),
        });
    }
    Ok(SelectionResult {
        steps,
        covered_ngrams,
        initial_ngrams,
    })
}

/// Replays a fixed selection order against a copy of `graph` to account for
/// coverage. Duplicate and unknown ids are rejected.
pub fn replay<T: Scalar>(
    graph: &BipartiteGraph,
    order: &[(usize, T)],
) -> Result<SelectionResult<T>> {
    let mut g = graph.clone();
    let mut steps = Vec::with_capacity(order.len());
    let mut covered_ngrams = 0;
    for &(id, priority) in order {
        if id >= g.sentence_count() {
            return Err(Error::UnknownSentence(id));
        }
        let removal = g.remove_selected(id)?;
        covered_ngrams += removal.covered.len();
        steps.push(SelectionStep {
            id,
            priority,
            newly_covered: removal.covered.len(),
        });
    }
    Ok(SelectionResult {
        steps,
        covered_ngrams,
        initial_ngrams: graph.ngram_count(),
    })
}

/// Uniform sample of `min(k, N)` ids without replacement. Priorities are 0.
pub fn baseline_random<T: Scalar>(
    graph: &BipartiteGraph,
    k: usize,
    seed: u64,
) -> Result<SelectionResult<T>> {
    let n = graph.sentence_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<(usize, T)> = index::sample(&mut rng, n, k.min(n))
        .into_iter()
        .map(|u| (u, T::zero()))
        .collect();
    replay(graph, &order)
}

/// Top `k` ids by descending key, ties by lower id.
fn top_k_by<T: Scalar>(keys: &[T], k: usize) -> Vec<(usize, T)> {
    let mut ids: Vec<usize> = (0..keys.len()).collect();
    ids.sort_by(|&a, &b| {
        keys[b]
            .partial_cmp(&keys[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    ids.truncate(k);
    ids.into_iter().map(|u| (u, keys[u])).collect()
}

/// Longest instructions first, by token count under `policy`.
pub fn baseline_longest<T: Scalar>(
    instances: &[TrainingInstance],
    graph: &BipartiteGraph,
    k: usize,
    policy: TokenizerPolicy,
) -> Result<SelectionResult<T>> {
    if instances.len() != graph.sentence_count() {
        return Err(Error::Config(format!(
            "{} instances but the graph has {} sentences",
            instances.len(),
            graph.sentence_count()
        )));
    }
    let lengths: Vec<T> = instances
        .iter()
        .map(|i| T::from_count(tokenize(&i.instruction, policy).len()))
        .collect();
    replay(graph, &top_k_by(&lengths, k))
}

/// Highest supplied score first.
pub fn baseline_quality_topk<T: Scalar>(
    graph: &BipartiteGraph,
    quality: Option<&[T]>,
    k: usize,
) -> Result<SelectionResult<T>> {
    let scores = quality.ok_or(Error::MissingQuality {
        count: graph.sentence_count(),
        first: 0,
    })?;
    if scores.len() != graph.sentence_count() {
        return Err(Error::QualityMismatch {
            got: scores.len(),
            expected: graph.sentence_count(),
        });
    }
    replay(graph, &top_k_by(scores, k))
}

/// Default sentence cap for exhaustive search.
pub const ORACLE_CAP: usize = 15;

/// Exact minimum number of sentences covering every n-gram, by exhaustive
/// search in increasing subset size. Edgeless sentences are ignored.
pub fn oracle_min_cover(graph: &BipartiteGraph) -> Result<usize> {
    oracle_min_cover_capped(graph, ORACLE_CAP)
}

pub fn oracle_min_cover_capped(graph: &BipartiteGraph, cap: usize) -> Result<usize> {
    let n = graph.sentence_count();
    if n > cap {
        return Err(Error::OracleCap { n, cap });
    }
    let words = graph.ngram_count().div_ceil(64);
    let sets: Vec<Vec<u64>> = graph
        .live_sentences()
        .map(|u| {
            let mut bits = vec![0u64; words];
            for &v in graph.adjacency(u) {
                bits[v / 64] |= 1 << (v % 64);
            }
            bits
        })
        .filter(|b| b.iter().any(|&w| w != 0))
        .collect();
    let mut universe = vec![0u64; words];
    for s in &sets {
        for (acc, w) in universe.iter_mut().zip(s) {
            *acc |= w;
        }
    }
    if universe.iter().all(|&w| w == 0) {
        return Ok(0);
    }
    let m = sets.len();
    for size in 1..=m {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            let mut union = vec![0u64; words];
            for &i in &combo {
                for (acc, w) in union.iter_mut().zip(&sets[i]) {
                    *acc |= w;
                }
            }
            if union == universe {
                return Ok(size);
            }
            // next combination in lexicographic order
            let mut i = size;
            while i > 0 && combo[i - 1] == m - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            combo[i - 1] += 1;
            for j in i..size {
                combo[j] = combo[j - 1] + 1;
            }
        }
    }
    unreachable!("the full collection covers the universe")
}

/// Outcome of comparing greedy set cover with the exact optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub greedy: usize,
    pub optimum: usize,
    pub max_degree: usize,
    pub harmonic: f64,
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        self.greedy as f64 <= self.harmonic * self.optimum as f64 + 1e-9
    }
}

/// Runs degree-priority greedy to full coverage and checks its size against
/// `H(r)` times the exhaustive optimum, `r` being the maximum sentence degree.
pub fn harmonic_bound_check(graph: &BipartiteGraph) -> Result<BoundCheck> {
    let optimum = oracle_min_cover(graph)?;
    let max_degree = graph
        .live_sentences()
        .map(|u| graph.adjacency(u).len())
        .max()
        .unwrap_or(0);
    let stats = uniform_stats(graph);
    let config = SelectionConfig {
        budget: graph.sentence_count().max(1),
        mode: PriorityMode::Uniform,
        tie_break: TieBreak::default(),
        seed: 0,
        audit: false,
    };
    let result = select::<f64>(graph.clone(), &stats, None, &config)?;
    let greedy = result.steps.iter().filter(|s| s.newly_covered > 0).count();
    let check = BoundCheck {
        greedy,
        optimum,
        max_degree,
        harmonic: harmonic(max_degree),
    };
    if check.holds() {
        Ok(check)
    } else {
        Err(Error::BoundViolated {
            greedy,
            optimum,
            max_degree,
        })
    }
}

/// Statistics with unit counts; Uniform mode never reads the weights.
fn uniform_stats(graph: &BipartiteGraph) -> CorpusStats<f64> {
    let n = graph.sentence_count();
    let df: Vec<usize> = (0..graph.ngram_count())
        .map(|v| graph.sentences_of(v).map_or(1, |s| s.len().max(1)))
        .collect();
    CorpusStats::from_counts(n.max(1), df.clone(), df).expect("counts consistent")
}
