//! Per-instance quality scores: the ratio of a response's perplexity given
//! its instruction to its perplexity alone.
//!
//! Scores come from a sidecar file of precomputed perplexities, or from a
//! small add-one-smoothed bigram model fitted on the corpus itself. The
//! bigram model is a CPU stand-in and does not reproduce neural LM scores.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde_json::Value;

use crate::corpus::{tokenize, TokenizerPolicy, TrainingInstance};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Quality of one instance. Perplexities are absent when the score was
/// supplied directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityRecord<T> {
    pub id: usize,
    pub ppl_conditional: Option<T>,
    pub ppl_plain: Option<T>,
    pub score: T,
}

impl<T: Scalar> QualityRecord<T> {
    pub fn from_perplexities(id: usize, ppl_conditional: T, ppl_plain: T) -> Result<Self> {
        Ok(QualityRecord {
            id,
            ppl_conditional: Some(ppl_conditional),
            ppl_plain: Some(ppl_plain),
            score: superfilter_score(ppl_conditional, ppl_plain)?,
        })
    }

    pub fn from_score(id: usize, score: T) -> Result<Self> {
        check_positive("score", score)?;
        Ok(QualityRecord {
            id,
            ppl_conditional: None,
            ppl_plain: None,
            score,
        })
    }
}

fn check_positive<T: Scalar>(what: &'static str, x: T) -> Result<()> {
    if x.is_finite() && x > T::zero() {
        Ok(())
    } else {
        Err(Error::NonPositive {
            what,
            value: x.to_f64_lossy(),
        })
    }
}

/// `exp(-mean(log_probs))`.
pub fn perplexity<T: Scalar>(log_probs: &[T]) -> Result<T> {
    if log_probs.is_empty() {
        return Err(Error::EmptySequence);
    }
    for (index, &lp) in log_probs.iter().enumerate() {
        if !lp.is_finite() || lp > T::zero() {
            return Err(Error::InvalidLogProb {
                index,
                value: lp.to_f64_lossy(),
            });
        }
    }
    let total: T = log_probs.iter().copied().sum();
    Ok((-total / T::from_count(log_probs.len())).exp())
}

/// `ppl(y | x) / ppl(y)`. Higher means higher quality; no clamping.
pub fn superfilter_score<T: Scalar>(ppl_conditional: T, ppl_plain: T) -> Result<T> {
    check_positive("ppl_conditional", ppl_conditional)?;
    check_positive("ppl_plain", ppl_plain)?;
    Ok(ppl_conditional / ppl_plain)
}

/// What to do with instances that have no quality record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingQuality {
    #[default]
    Fail,
    /// Use the median of the scores that are present.
    FillMedian,
}

/// Quality records indexed by instance id.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityTable<T> {
    records: Vec<Option<QualityRecord<T>>>,
}

impl<T: Scalar> QualityTable<T> {
    pub fn empty(n: usize) -> Self {
        QualityTable {
            records: vec![None; n],
        }
    }

    /// Every instance scored 1.
    pub fn uniform(n: usize) -> Self {
        Self::from_scores(vec![T::one(); n]).expect("one is positive")
    }

    pub fn from_scores(scores: Vec<T>) -> Result<Self> {
        let records = scores
            .into_iter()
            .enumerate()
            .map(|(id, s)| QualityRecord::from_score(id, s).map(Some))
            .collect::<Result<_>>()?;
        Ok(QualityTable { records })
    }

    /// Number of instances the table is sized for.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&QualityRecord<T>> {
        self.records.get(id).and_then(Option::as_ref)
    }

    pub fn missing(&self) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter_map(|(id, r)| r.is_none().then_some(id))
            .collect()
    }

    /// Inserts or replaces a record. Fails if the id is out of range.
    pub fn insert(&mut self, record: QualityRecord<T>) -> Result<()> {
        let slot = self
            .records
            .get_mut(record.id)
            .ok_or(Error::UnknownSentence(record.id))?;
        *slot = Some(record);
        Ok(())
    }

    /// Dense score vector for the selector.
    pub fn scores(&self, missing: MissingQuality) -> Result<Vec<T>> {
        let absent = self.missing();
        if absent.is_empty() {
            return Ok(self.records.iter().flatten().map(|r| r.score).collect());
        }
        let fill = match missing {
            MissingQuality::Fail => None,
            MissingQuality::FillMedian => median(self.records.iter().flatten().map(|r| r.score)),
        };
        let fill = fill.ok_or(Error::MissingQuality {
            count: absent.len(),
            first: absent[0],
        })?;
        Ok(self
            .records
            .iter()
            .map(|r| r.map_or(fill, |r| r.score))
            .collect())
    }
}

/// Median of finite values; the mean of the two middle values for even counts.
pub fn median<T: Scalar>(values: impl IntoIterator<Item = T>) -> Option<T> {
    let mut v: Vec<T> = values.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        Some(v[mid])
    } else {
        Some((v[mid - 1] + v[mid]) / T::from_count(2))
    }
}

fn number_field(
    obj: &serde_json::Map<String, Value>,
    key: &str,
    line: usize,
) -> Result<Option<f64>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v.as_f64().map(Some).ok_or_else(|| Error::Parse {
            line,
            message: format!("field {key:?} must be a number"),
        }),
    }
}

/// Reads line-delimited records `{"id", "ppl_conditional", "ppl_plain"}` or
/// `{"id", "score"}` for a dataset of `n` instances. When both perplexities
/// are present the score is recomputed from them.
pub fn load_quality<T: Scalar, R: Read>(source: R, n: usize) -> Result<QualityTable<T>> {
    let mut table = QualityTable::empty(n);
    for (idx, line) in BufReader::new(source).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: format!("read failed: {e}"),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let value: Value =
            serde_json::from_str(&line).map_err(|e| parse_err(format!("malformed record: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| parse_err("record is not a JSON object".into()))?;
        let id = obj
            .get("id")
            .and_then(Value::as_u64)
            .ok_or_else(|| parse_err("missing or non-integer field \"id\"".into()))?
            as usize;
        if id >= n {
            return Err(parse_err(format!("id {id} outside dataset of size {n}")));
        }
        if table.get(id).is_some() {
            return Err(parse_err(format!("duplicate id {id}")));
        }
        let cond = number_field(obj, "ppl_conditional", line_no)?;
        let plain = number_field(obj, "ppl_plain", line_no)?;
        let score = number_field(obj, "score", line_no)?;
        let with_line = |e: Error| parse_err(e.to_string());
        let record = match (cond, plain, score) {
            (Some(c), Some(p), _) => {
                QualityRecord::from_perplexities(id, T::from_f64_lossy(c), T::from_f64_lossy(p))
                    .map_err(with_line)?
            }
            (None, None, Some(s)) => {
                QualityRecord::from_score(id, T::from_f64_lossy(s)).map_err(with_line)?
            }
            _ => {
                return Err(parse_err(
                    "expected both ppl_conditional and ppl_plain, or score".into(),
                ))
            }
        };
        table.insert(record)?;
    }
    Ok(table)
}

pub fn load_quality_file<T: Scalar>(path: &Path, n: usize) -> Result<QualityTable<T>> {
    let file = File::open(path).map_err(|source| Error::Read {
        path: path.to_owned(),
        source,
    })?;
    load_quality(file, n)
}

const BOS: u32 = u32::MAX;

/// Add-one-smoothed bigram model over one token stream per instance:
/// `<s>`, the instruction tokens, then the response tokens.
#[derive(Debug, Clone)]
pub struct BigramModel {
    vocab: HashMap<String, u32>,
    pairs: HashMap<(u32, u32), usize>,
    context: HashMap<u32, usize>,
}

impl BigramModel {
    pub fn fit(instances: &[TrainingInstance], policy: TokenizerPolicy) -> Self {
        let mut model = BigramModel {
            vocab: HashMap::new(),
            pairs: HashMap::new(),
            context: HashMap::new(),
        };
        for inst in instances {
            let mut prev = BOS;
            let stream = tokenize(&inst.instruction, policy)
                .into_iter()
                .chain(tokenize(&inst.response, policy));
            for tok in stream {
                let next = model.vocab.len() as u32;
                let id = *model.vocab.entry(tok.as_str().to_owned()).or_insert(next);
                *model.pairs.entry((prev, id)).or_insert(0) += 1;
                *model.context.entry(prev).or_insert(0) += 1;
                prev = id;
            }
        }
        model
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn id(&self, token: &str) -> Option<u32> {
        self.vocab.get(token).copied()
    }

    /// `ln((c(prev, next) + 1) / (c(prev) + |V|))`. `prev = None` is `<s>`.
    pub fn log_prob<T: Scalar>(&self, prev: Option<&str>, next: &str) -> T {
        let prev_id = match prev {
            None => Some(BOS),
            Some(p) => self.id(p),
        };
        let (pair, ctx) = match (prev_id, self.id(next)) {
            (Some(p), Some(n)) => (
                self.pairs.get(&(p, n)).copied().unwrap_or(0),
                self.context.get(&p).copied().unwrap_or(0),
            ),
            (Some(p), None) => (0, self.context.get(&p).copied().unwrap_or(0)),
            (None, _) => (0, 0),
        };
        (T::from_count(pair + 1) / T::from_count(ctx + self.vocab_size())).ln()
    }

    /// Perplexity of `tokens` starting from context `first_context`.
    pub fn sequence_perplexity<T: Scalar>(
        &self,
        first_context: Option<&str>,
        tokens: &[&str],
    ) -> Result<T> {
        let mut prev = first_context;
        let mut lps = Vec::with_capacity(tokens.len());
        for &t in tokens {
            lps.push(self.log_prob::<T>(prev, t));
            prev = Some(t);
        }
        perplexity(&lps)
    }
}

/// Scores from the built-in bigram model, plus the ids that could not be
/// scored because their response has no tokens.
#[derive(Debug, Clone)]
pub struct BuiltinQuality<T> {
    pub table: QualityTable<T>,
    pub flagged: Vec<usize>,
}

/// Plain perplexity scores the response from `<s>`; conditional perplexity
/// scores the same tokens with the context seeded by the instruction's last
/// token.
pub fn builtin_quality<T: Scalar>(
    instances: &[TrainingInstance],
    policy: TokenizerPolicy,
) -> BuiltinQuality<T> {
    let model = BigramModel::fit(instances, policy);
    let mut table = QualityTable::empty(instances.len());
    let mut flagged = Vec::new();
    for (id, inst) in instances.iter().enumerate() {
        let response = tokenize(&inst.response, policy);
        let instruction = tokenize(&inst.instruction, policy);
        if response.is_empty() {
            flagged.push(id);
            continue;
        }
        let resp: Vec<&str> = response.iter().map(|t| t.as_str()).collect();
        let seed = instruction.last().map(|t| t.as_str());
        let record = model
            .sequence_perplexity::<T>(None, &resp)
            .and_then(|plain| {
                let cond = model.sequence_perplexity::<T>(seed, &resp)?;
                QualityRecord::from_perplexities(id, cond, plain)
            })
            .expect("smoothed probabilities are in (0, 1]");
        table.insert(record).expect("id in range");
    }
    BuiltinQuality { table, flagged }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(id: usize, instruction: &str, response: &str) -> TrainingInstance {
        TrainingInstance {
            id,
            instruction: instruction.into(),
            response: response.into(),
        }
    }

    #[test]
    fn perplexity_hand_values() {
        let half = 0.5f64.ln();
        assert!((perplexity(&[half, half]).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(perplexity(&[0.0f64, 0.0, 0.0]).unwrap(), 1.0);
        let p = perplexity(&[0.25f64.ln(), 0.5f64.ln()]).unwrap();
        assert!((p - 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn perplexity_rejects_bad_input() {
        assert!(matches!(perplexity::<f64>(&[]), Err(Error::EmptySequence)));
        assert!(matches!(
            perplexity(&[-0.1f64, 0.2]),
            Err(Error::InvalidLogProb { index: 1, .. })
        ));
        assert!(perplexity(&[f64::NEG_INFINITY]).is_err());
    }

    #[test]
    fn superfilter_values_and_errors() {
        assert_eq!(superfilter_score(2.0f64, 2.0).unwrap(), 1.0);
        assert_eq!(superfilter_score(1.5f64, 3.0).unwrap(), 0.5);
        assert_eq!(superfilter_score(3.0f64, 1.5).unwrap(), 2.0);
        assert!(superfilter_score(0.0f64, 1.0).is_err());
        assert!(superfilter_score(1.0f64, -1.0).is_err());
        assert!(superfilter_score(f64::INFINITY, 1.0).is_err());
        assert!(superfilter_score(1.0, f64::NAN).is_err());
    }

    #[test]
    fn quality_file_ratio_and_score_only() {
        let data =
            "{\"id\":0,\"ppl_conditional\":2.0,\"ppl_plain\":4.0}\n{\"id\":2,\"score\":0.83}\n";
        let t: QualityTable<f64> = load_quality(data.as_bytes(), 3).unwrap();
        let r0 = t.get(0).unwrap();
        assert_eq!(r0.score, 0.5);
        assert_eq!(r0.ppl_plain, Some(4.0));
        assert_eq!(t.get(2).unwrap().score, 0.83);
        assert_eq!(t.get(2).unwrap().ppl_conditional, None);
        assert_eq!(t.missing(), [1]);
    }

    #[test]
    fn quality_file_errors() {
        let dup = "{\"id\":0,\"score\":1.0}\n{\"id\":0,\"score\":2.0}\n";
        assert!(matches!(
            load_quality::<f64, _>(dup.as_bytes(), 5),
            Err(Error::Parse { line: 2, .. })
        ));
        let range = "{\"id\":7,\"score\":0.83}\n";
        assert!(matches!(
            load_quality::<f64, _>(range.as_bytes(), 5),
            Err(Error::Parse { line: 1, .. })
        ));
        let neg = "{\"id\":0,\"ppl_conditional\":-1.0,\"ppl_plain\":4.0}\n";
        assert!(load_quality::<f64, _>(neg.as_bytes(), 5).is_err());
        let zero = "{\"id\":0,\"score\":0}\n";
        assert!(load_quality::<f64, _>(zero.as_bytes(), 5).is_err());
        let half = "{\"id\":0,\"ppl_plain\":4.0}\n";
        assert!(load_quality::<f64, _>(half.as_bytes(), 5).is_err());
    }

    #[test]
    fn missing_policy() {
        let mut t = QualityTable::<f64>::empty(4);
        for (id, s) in [(0, 1.0), (1, 3.0), (3, 2.0)] {
            t.insert(QualityRecord::from_score(id, s).unwrap()).unwrap();
        }
        assert!(matches!(
            t.scores(MissingQuality::Fail),
            Err(Error::MissingQuality { count: 1, first: 2 })
        ));
        assert_eq!(
            t.scores(MissingQuality::FillMedian).unwrap(),
            [1.0, 3.0, 2.0, 2.0]
        );
        assert!(QualityTable::<f64>::empty(2)
            .scores(MissingQuality::FillMedian)
            .is_err());
        assert_eq!(median([4.0, 1.0, 3.0, 2.0]), Some(2.5));
    }

    // Toy corpus (one stream per instance: <s> instruction response):
    //   0: "a b"  -> "a b"     stream <s> a b a b
    //   1: "c"    -> "d"       stream <s> c d
    //   2: "b d"  -> "c"       stream <s> b d c
    // vocabulary {a, b, c, d}, |V| = 4
    // bigram counts: <s>a 1, <s>c 1, <s>b 1, ab 2, ba 1, cd 1, bd 1, dc 1
    // context counts: <s> 3, a 2, b 2, c 1, d 1
    fn toy() -> Vec<TrainingInstance> {
        vec![
            inst(0, "a b", "a b"),
            inst(1, "c", "d"),
            inst(2, "b d", "c"),
        ]
    }

    #[test]
    fn bigram_table_matches_hand_counts() {
        let m = BigramModel::fit(&toy(), TokenizerPolicy::DEFAULT);
        assert_eq!(m.vocab_size(), 4);
        let p = |prev: Option<&str>, next: &str| m.log_prob::<f64>(prev, next).exp();
        assert!((p(None, "a") - 2.0 / 7.0).abs() < 1e-15);
        assert!((p(Some("a"), "b") - 3.0 / 6.0).abs() < 1e-15);
        assert!((p(Some("b"), "a") - 2.0 / 6.0).abs() < 1e-15);
        assert!((p(Some("c"), "a") - 1.0 / 5.0).abs() < 1e-15);
        assert!((p(None, "d") - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn verbatim_repeat_scores_below_one() {
        let q = builtin_quality::<f64>(&toy(), TokenizerPolicy::DEFAULT);
        assert!(q.flagged.is_empty());
        let r = q.table.get(0).unwrap();
        // plain:  P(a|<s>) = 2/7, P(b|a) = 3/6
        // cond:   P(a|b)   = 2/6, P(b|a) = 3/6
        let plain = ((2.0f64 / 7.0) * 0.5).powf(-0.5);
        let cond = ((2.0f64 / 6.0) * 0.5).powf(-0.5);
        assert!((r.ppl_plain.unwrap() - plain).abs() < 1e-9);
        assert!((r.ppl_conditional.unwrap() - cond).abs() < 1e-9);
        assert!((r.score - cond / plain).abs() < 1e-9);
        assert!(r.score < 1.0);
    }

    #[test]
    fn unseen_transition_gets_smoothing_floor() {
        let m = BigramModel::fit(&toy(), TokenizerPolicy::DEFAULT);
        // instance 1: instruction ends in "c", response "d"; "c d" was seen.
        // instance 2: instruction ends in "d", response "c"; "d c" seen too.
        // "a" never follows "d": floor is 1 / (c(d) + |V|) = 1/5
        assert!((m.log_prob::<f64>(Some("d"), "a").exp() - 0.2).abs() < 1e-15);
        let q = builtin_quality::<f64>(
            &[inst(0, "x", "y"), inst(1, "y", "x")],
            TokenizerPolicy::DEFAULT,
        );
        // streams <s> x y, <s> y x; |V| = 2; c(<s>)=2, c(x)=1, c(y)=1
        // instance 0 conditional: P(y|x) = (1+1)/(1+2) = 2/3; plain P(y|<s>) = 2/4
        let r = q.table.get(0).unwrap();
        assert!((r.ppl_conditional.unwrap() - 1.5).abs() < 1e-12);
        assert!((r.ppl_plain.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_token_response_closed_form() {
        // m instances "wK" -> "rK", all tokens distinct: |V| = 2m, c(<s>) = m.
        // P(rK | <s>) = 1 / (m + 2m), so plain perplexity is 3m.
        let m = 4;
        let corpus: Vec<_> = (0..m)
            .map(|k| inst(k, &format!("w{k}"), &format!("r{k}")))
            .collect();
        let q = builtin_quality::<f64>(&corpus, TokenizerPolicy::DEFAULT);
        for k in 0..m {
            let r = q.table.get(k).unwrap();
            assert!((r.ppl_plain.unwrap() - 3.0 * m as f64).abs() < 1e-9);
            // P(rK | wK) = (1 + 1) / (1 + 2m)
            assert!((r.ppl_conditional.unwrap() - (1.0 + 2.0 * m as f64) / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_response_flagged() {
        let q = builtin_quality::<f64>(
            &[inst(0, "a", ""), inst(1, "a", "b")],
            TokenizerPolicy::DEFAULT,
        );
        assert_eq!(q.flagged, [0]);
        assert!(q.table.get(0).is_none());
        assert!(q.table.get(1).is_some());
    }

    #[test]
    fn f32_scores_work() {
        let q = builtin_quality::<f32>(&toy(), TokenizerPolicy::DEFAULT);
        assert!(q.table.get(0).unwrap().score < 1.0);
    }
}
