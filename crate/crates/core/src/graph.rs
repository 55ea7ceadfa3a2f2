//! Sentence/n-gram bipartite graph and frozen corpus statistics.
//!
//! Sentence ids are instance ids. N-gram ids are dense and assigned in first
//! occurrence order: sentences ascending, then segment, then order ascending,
//! then window start. Adjacency lists are kept sorted ascending so every
//! traversal (and every floating-point sum over one) has a fixed order.

use std::collections::HashMap;
use std::io::{self, Write};
use std::sync::Arc;

use crate::corpus::{
    select_content, tokenize_segments, ContentSide, NGram, NGramOrders, Token, TokenizerPolicy,
    TrainingInstance,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct NGramKey {
    order: u8,
    ids: [u32; 3],
}

/// Token strings behind the dense n-gram ids. Shared between graph copies.
#[derive(Debug, Default, PartialEq, Eq)]
struct NGramTable {
    vocab: Vec<Token>,
    keys: Vec<NGramKey>,
}

impl NGramTable {
    fn ngram(&self, v: usize) -> NGram {
        let key = self.keys[v];
        let tokens = key.ids[..key.order as usize]
            .iter()
            .map(|&t| self.vocab[t as usize].clone())
            .collect();
        NGram::new(tokens).expect("stored order in 1..=3")
    }
}

/// Mutable bipartite graph between live sentences and live n-grams.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    sentence_live: Vec<bool>,
    ngram_live: Vec<bool>,
    live_sentences: usize,
    live_ngrams: usize,
    sentence_adj: Vec<Vec<usize>>,
    ngram_adj: Vec<Vec<usize>>,
    edge_count: usize,
    table: Arc<NGramTable>,
}

/// What a call to [`BipartiteGraph::remove_selected`] took out of the graph.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Removal {
    /// N-grams that were adjacent to the selected sentence, ascending.
    pub covered: Vec<usize>,
    /// Other live sentences that lost at least one edge, ascending.
    pub affected: Vec<usize>,
}

/// Corpus-wide statistics computed once at build time.
///
/// Weights are `scale * tf * ln(n / df)` with `scale = 1` unless rescaled.
/// Sums of weights over n-gram sets ([`CorpusStats::weight_sum`]) are
/// evaluated in a canonical form: `sum tf * ln(n / df)` is an integer
/// combination of logarithms of primes, and that combination is evaluated
/// prime by prime in ascending order. Two sets whose sums are equal as real
/// numbers therefore produce bit-identical floats, whatever the n-gram ids or
/// the scale.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats<T> {
    n: usize,
    tf: Vec<usize>,
    df: Vec<usize>,
    tfidf: Vec<T>,
    scale: T,
    primes: Arc<PrimeTable<T>>,
}

/// Smallest-prime-factor sieve up to `n` with `ln p` for every prime.
#[derive(Debug, PartialEq)]
struct PrimeTable<T> {
    spf: Vec<u32>,
    ln: Vec<T>,
    n_factors: Vec<(u32, u32)>,
}

impl<T: Scalar> PrimeTable<T> {
    fn new(n: usize) -> Self {
        let mut spf = vec![0u32; n + 1];
        let mut ln = vec![T::zero(); n + 1];
        for i in 2..=n {
            if spf[i] == 0 {
                ln[i] = T::from_count(i).ln();
                for j in (i..=n).step_by(i) {
                    if spf[j] == 0 {
                        spf[j] = i as u32;
                    }
                }
            }
        }
        let mut table = PrimeTable {
            spf,
            ln,
            n_factors: Vec::new(),
        };
        table.n_factors = table.factorize(n).collect();
        table
    }

    /// `(prime, exponent)` pairs of `x`, ascending.
    fn factorize(&self, mut x: usize) -> impl Iterator<Item = (u32, u32)> + '_ {
        std::iter::from_fn(move || {
            if x < 2 {
                return None;
            }
            let p = self.spf[x];
            let mut e = 0;
            while x.is_multiple_of(p as usize) {
                x /= p as usize;
                e += 1;
            }
            Some((p, e))
        })
    }
}

/// Reusable buffers for [`CorpusStats::weight_sum_with`].
#[derive(Debug, Default, Clone)]
pub struct WeightScratch {
    by_df: Vec<(usize, i64)>,
    exponents: Vec<(u32, i64)>,
}

/// `tf * ln(n / df)`.
pub fn tfidf<T: Scalar>(n: usize, tf: usize, df: usize) -> T {
    T::from_count(tf) * (T::from_count(n) / T::from_count(df)).ln()
}

impl<T: Scalar> CorpusStats<T> {
    /// Builds statistics from raw counts. `tf` and `df` are indexed by n-gram id.
    pub fn from_counts(n: usize, tf: Vec<usize>, df: Vec<usize>) -> Result<Self> {
        if tf.len() != df.len() {
            return Err(Error::Config(format!(
                "tf has {} entries but df has {}",
                tf.len(),
                df.len()
            )));
        }
        for (v, (&t, &d)) in tf.iter().zip(&df).enumerate() {
            if d == 0 || d > n || t < d {
                return Err(Error::Config(format!(
                    "inconsistent counts for n-gram {v}: tf={t} df={d} n={n}"
                )));
            }
        }
        let tfidf = tf.iter().zip(&df).map(|(&t, &d)| tfidf(n, t, d)).collect();
        Ok(CorpusStats {
            n,
            tf,
            df,
            tfidf,
            scale: T::one(),
            primes: Arc::new(PrimeTable::new(n)),
        })
    }

    /// Sentence count at build time.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ngram_count(&self) -> usize {
        self.tf.len()
    }

    pub fn tf(&self, v: usize) -> Result<usize> {
        self.tf.get(v).copied().ok_or(Error::UnknownNGram(v))
    }

    pub fn df(&self, v: usize) -> Result<usize> {
        self.df.get(v).copied().ok_or(Error::UnknownNGram(v))
    }

    pub fn tfidf_weight(&self, v: usize) -> Result<T> {
        self.tfidf.get(v).copied().ok_or(Error::UnknownNGram(v))
    }

    /// All weights indexed by n-gram id.
    pub fn weights(&self) -> &[T] {
        &self.tfidf
    }

    /// Common factor applied to every weight.
    pub fn scale(&self) -> T {
        self.scale
    }

    /// Copy with every weight multiplied by `factor`.
    pub fn rescaled(&self, factor: T) -> Self {
        CorpusStats {
            tfidf: self.tfidf.iter().map(|&w| w * factor).collect(),
            scale: self.scale * factor,
            ..self.clone()
        }
    }

    /// Copy with the IDF logarithm taken in `base` instead of `e`.
    pub fn with_log_base(&self, base: T) -> Self {
        let ln_base = base.ln();
        CorpusStats {
            tfidf: self.tfidf.iter().map(|&w| w / ln_base).collect(),
            scale: self.scale / ln_base,
            ..self.clone()
        }
    }

    /// Sum of the weights of `ngrams` in canonical form. Ids must be valid.
    pub fn weight_sum(&self, ngrams: &[usize]) -> T {
        self.weight_sum_with(ngrams, &mut WeightScratch::default())
    }

    pub fn weight_sum_with(&self, ngrams: &[usize], scratch: &mut WeightScratch) -> T {
        if ngrams.is_empty() {
            return T::zero();
        }
        let WeightScratch { by_df, exponents } = scratch;
        by_df.clear();
        by_df.extend(ngrams.iter().map(|&v| (self.df[v], self.tf[v] as i64)));
        by_df.sort_unstable_by_key(|&(d, _)| d);

        // sum tf * (ln n - ln df) = total * ln n - sum_df tf_df * ln df
        exponents.clear();
        let total: i64 = by_df.iter().map(|&(_, t)| t).sum();
        for &(p, e) in &self.primes.n_factors {
            exponents.push((p, total * e as i64));
        }
        let mut i = 0;
        while i < by_df.len() {
            let d = by_df[i].0;
            let mut group = 0;
            while i < by_df.len() && by_df[i].0 == d {
                group += by_df[i].1;
                i += 1;
            }
            for (p, e) in self.primes.factorize(d) {
                exponents.push((p, -group * e as i64));
            }
        }
        exponents.sort_unstable_by_key(|&(p, _)| p);

        let mut sum = T::zero();
        let mut j = 0;
        while j < exponents.len() {
            let p = exponents[j].0;
            let mut coef = 0;
            while j < exponents.len() && exponents[j].0 == p {
                coef += exponents[j].1;
                j += 1;
            }
            if coef != 0 {
                sum = sum + T::from_i64(coef).expect("exponent fits") * self.primes.ln[p as usize];
            }
        }
        sum * self.scale
    }
}

/// Builds the graph and its frozen statistics from the selected content of
/// each instance. Edges record presence; multiplicity only enters `tf`.
pub fn build_graph<T: Scalar>(
    instances: &[TrainingInstance],
    side: ContentSide,
    orders: NGramOrders,
    policy: TokenizerPolicy,
) -> Result<(BipartiteGraph, CorpusStats<T>)> {
    if instances.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut table = NGramTable::default();
    let mut vocab_index: HashMap<Token, u32> = HashMap::new();
    let mut key_index: HashMap<NGramKey, usize> = HashMap::new();
    let mut tf: Vec<usize> = Vec::new();
    let mut ngram_adj: Vec<Vec<usize>> = Vec::new();
    let mut sentence_adj: Vec<Vec<usize>> = Vec::with_capacity(instances.len());

    for (u, instance) in instances.iter().enumerate() {
        let mut neighbors = Vec::new();
        for segment in tokenize_segments(&select_content(instance, side), policy) {
            let ids: Vec<u32> = segment
                .into_iter()
                .map(|t| {
                    let next = vocab_index.len() as u32;
                    *vocab_index.entry(t.clone()).or_insert_with(|| {
                        table.vocab.push(t);
                        next
                    })
                })
                .collect();
            for n in orders.iter() {
                for window in ids.windows(n) {
                    let mut key = NGramKey {
                        order: n as u8,
                        ids: [0; 3],
                    };
                    key.ids[..n].copy_from_slice(window);
                    let v = *key_index.entry(key).or_insert_with(|| {
                        table.keys.push(key);
                        tf.push(0);
                        ngram_adj.push(Vec::new());
                        tf.len() - 1
                    });
                    tf[v] += 1;
                    if ngram_adj[v].last() != Some(&u) {
                        ngram_adj[v].push(u);
                        neighbors.push(v);
                    }
                }
            }
        }
        neighbors.sort_unstable();
        sentence_adj.push(neighbors);
    }

    let df: Vec<usize> = ngram_adj.iter().map(Vec::len).collect();
    let stats = CorpusStats::from_counts(instances.len(), tf, df)?;
    let edge_count = sentence_adj.iter().map(Vec::len).sum();
    let graph = BipartiteGraph {
        sentence_live: vec![true; instances.len()],
        ngram_live: vec![true; ngram_adj.len()],
        live_sentences: instances.len(),
        live_ngrams: ngram_adj.len(),
        sentence_adj,
        ngram_adj,
        edge_count,
        table: Arc::new(table),
    };
    Ok((graph, stats))
}

impl BipartiteGraph {
    /// Sentence count at build time, live or not.
    pub fn sentence_count(&self) -> usize {
        self.sentence_live.len()
    }

    /// N-gram count at build time, live or not.
    pub fn ngram_count(&self) -> usize {
        self.ngram_live.len()
    }

    pub fn live_sentence_count(&self) -> usize {
        self.live_sentences
    }

    pub fn live_ngram_count(&self) -> usize {
        self.live_ngrams
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn is_live(&self, u: usize) -> bool {
        self.sentence_live.get(u).copied().unwrap_or(false)
    }

    pub fn is_ngram_live(&self, v: usize) -> bool {
        self.ngram_live.get(v).copied().unwrap_or(false)
    }

    /// Live sentence ids, ascending.
    pub fn live_sentences(&self) -> impl Iterator<Item = usize> + '_ {
        self.sentence_live
            .iter()
            .enumerate()
            .filter_map(|(u, &live)| live.then_some(u))
    }

    fn check_live(&self, u: usize) -> Result<()> {
        if u >= self.sentence_count() {
            Err(Error::UnknownSentence(u))
        } else if !self.sentence_live[u] {
            Err(Error::NotLive(u))
        } else {
            Ok(())
        }
    }

    /// Current neighbors of `u`, ascending.
    pub fn neighbors(&self, u: usize) -> Result<&[usize]> {
        self.check_live(u)?;
        Ok(&self.sentence_adj[u])
    }

    pub fn degree(&self, u: usize) -> Result<usize> {
        self.neighbors(u).map(<[usize]>::len)
    }

    /// Sentences currently containing n-gram `v`, ascending. Empty once `v`
    /// has been covered.
    pub fn sentences_of(&self, v: usize) -> Result<&[usize]> {
        self.ngram_adj
            .get(v)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownNGram(v))
    }

    pub fn ngram(&self, v: usize) -> Result<NGram> {
        if v >= self.ngram_count() {
            return Err(Error::UnknownNGram(v));
        }
        Ok(self.table.ngram(v))
    }

    /// Unchecked neighbor access for hot loops; `u` must be a valid id.
    pub(crate) fn adjacency(&self, u: usize) -> &[usize] {
        &self.sentence_adj[u]
    }

    /// Removes `u`, every n-gram adjacent to it, and all edges incident to
    /// either.
    pub fn remove_selected(&mut self, u: usize) -> Result<Removal> {
        self.check_live(u)?;
        let covered = std::mem::take(&mut self.sentence_adj[u]);
        let mut affected = Vec::new();
        for &v in &covered {
            let holders = std::mem::take(&mut self.ngram_adj[v]);
            for s in holders {
                self.edge_count -= 1;
                if s == u {
                    continue;
                }
                let adj = &mut self.sentence_adj[s];
                if let Ok(pos) = adj.binary_search(&v) {
                    adj.remove(pos);
                }
                affected.push(s);
            }
            self.ngram_live[v] = false;
            self.live_ngrams -= 1;
        }
        self.sentence_live[u] = false;
        self.live_sentences -= 1;
        affected.sort_unstable();
        affected.dedup();
        Ok(Removal { covered, affected })
    }

    /// Full consistency walk: edge symmetry, live endpoints, sorted lists and
    /// edge counts. Returns the first violation found.
    pub fn audit(&self) -> std::result::Result<(), String> {
        let mut from_sentences = 0;
        for (u, adj) in self.sentence_adj.iter().enumerate() {
            if !adj.windows(2).all(|w| w[0] < w[1]) {
                return Err(format!("sentence {u}: adjacency not strictly ascending"));
            }
            if !self.sentence_live[u] && !adj.is_empty() {
                return Err(format!("dead sentence {u} still has edges"));
            }
            for &v in adj {
                if !self.ngram_live[v] {
                    return Err(format!("edge {u}-{v} ends at a dead n-gram"));
                }
                if self.ngram_adj[v].binary_search(&u).is_err() {
                    return Err(format!("edge {u}-{v} missing on the n-gram side"));
                }
            }
            from_sentences += adj.len();
        }
        let mut from_ngrams = 0;
        for (v, adj) in self.ngram_adj.iter().enumerate() {
            if !adj.windows(2).all(|w| w[0] < w[1]) {
                return Err(format!("n-gram {v}: adjacency not strictly ascending"));
            }
            if !self.ngram_live[v] && !adj.is_empty() {
                return Err(format!("dead n-gram {v} still has edges"));
            }
            for &u in adj {
                if !self.sentence_live[u] {
                    return Err(format!("edge {u}-{v} ends at a dead sentence"));
                }
                if self.sentence_adj[u].binary_search(&v).is_err() {
                    return Err(format!("edge {u}-{v} missing on the sentence side"));
                }
            }
            from_ngrams += adj.len();
        }
        if from_sentences != self.edge_count || from_ngrams != self.edge_count {
            return Err(format!(
                "edge count {} disagrees with adjacency sizes {from_sentences}/{from_ngrams}",
                self.edge_count
            ));
        }
        let live_u = self.sentence_live.iter().filter(|&&l| l).count();
        let live_v = self.ngram_live.iter().filter(|&&l| l).count();
        if live_u != self.live_sentences || live_v != self.live_ngrams {
            return Err("live counters out of sync".into());
        }
        Ok(())
    }

    /// Writes one `sentence-id<TAB>n-gram` line per current edge, sentences
    /// ascending and n-grams in id order.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> io::Result<()> {
        for u in self.live_sentences() {
            for &v in &self.sentence_adj[u] {
                writeln!(out, "{u}\t{}", self.table.ngram(v))?;
            }
        }
        Ok(())
    }
}
