use std::collections::{HashMap, HashSet};
use std::io::Write;

use graphfilter::cli::{quality_scores, select_instances, QualitySource, RunConfig};
use graphfilter::corpus::{ContentSide, NGramOrders, Token, TokenizerPolicy, TrainingInstance};
use graphfilter::metrics::{mtld, mtld_pass, MTLD_THRESHOLD};
use graphfilter::quality::{builtin_quality, superfilter_score};
use graphfilter::selector::{priority, select, select_reference, PriorityMode, SelectionConfig};
use graphfilter::{build_graph, BipartiteGraph, CorpusStats};
use proptest::prelude::*;

fn sentence(words: &[u8]) -> String {
    words
        .iter()
        .map(|w| format!("t{w}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn corpus_strategy(max_n: usize, vocab: u8) -> impl Strategy<Value = Vec<TrainingInstance>> {
    prop::collection::vec(
        (
            prop::collection::vec(0..vocab, 1..8),
            prop::collection::vec(0..vocab, 1..6),
        ),
        1..max_n,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(id, (ins, resp))| TrainingInstance {
                id,
                instruction: sentence(&ins),
                response: sentence(&resp),
            })
            .collect()
    })
}

fn orders_strategy() -> impl Strategy<Value = NGramOrders> {
    prop::sample::subsequence(vec![1usize, 2, 3], 1..=3).prop_map(|o| NGramOrders::new(&o).unwrap())
}

fn build(
    instances: &[TrainingInstance],
    orders: NGramOrders,
) -> (BipartiteGraph, CorpusStats<f64>) {
    build_graph(
        instances,
        ContentSide::Instruction,
        orders,
        TokenizerPolicy::DEFAULT,
    )
    .unwrap()
}

fn quality_for(n: usize, seed: &[u16]) -> Vec<f64> {
    (0..n)
        .map(|i| 0.05 + f64::from(seed[i % seed.len()] % 40) / 8.0)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn counts_are_conserved(instances in corpus_strategy(12, 6), orders in orders_strategy()) {
        let (graph, stats) = build(&instances, orders);
        prop_assert_eq!(stats.n(), instances.len());
        let by_sentence: usize = (0..graph.sentence_count()).map(|u| graph.degree(u).unwrap()).sum();
        let by_ngram: usize = (0..graph.ngram_count()).map(|v| graph.sentences_of(v).unwrap().len()).sum();
        prop_assert_eq!(by_sentence, graph.edge_count());
        prop_assert_eq!(by_ngram, graph.edge_count());

        // independent recount of occurrences per distinct n-gram text
        let mut tf: HashMap<Vec<String>, usize> = HashMap::new();
        let mut df: HashMap<Vec<String>, HashSet<usize>> = HashMap::new();
        for inst in &instances {
            let words: Vec<String> = inst.instruction.split(' ').map(str::to_owned).collect();
            for n in orders.iter() {
                for w in words.windows(n) {
                    *tf.entry(w.to_vec()).or_default() += 1;
                    df.entry(w.to_vec()).or_default().insert(inst.id);
                }
            }
        }
        prop_assert_eq!(tf.len(), graph.ngram_count());
        for v in 0..graph.ngram_count() {
            let key: Vec<String> = graph.ngram(v).unwrap().tokens().iter().map(|t| t.as_str().to_owned()).collect();
            prop_assert_eq!(stats.tf(v).unwrap(), tf[&key]);
            prop_assert_eq!(stats.df(v).unwrap(), df[&key].len());
            prop_assert!(stats.tf(v).unwrap() >= stats.df(v).unwrap());
        }
    }

    #[test]
    fn build_is_deterministic(instances in corpus_strategy(12, 8), orders in orders_strategy()) {
        let (g1, s1) = build(&instances, orders);
        let (g2, s2) = build(&instances, orders);
        let mut e1 = Vec::new();
        let mut e2 = Vec::new();
        g1.write_edge_list(&mut e1).unwrap();
        g2.write_edge_list(&mut e2).unwrap();
        prop_assert_eq!(e1, e2);
        prop_assert_eq!(s1, s2);
    }

    #[test]
    fn removals_keep_graph_consistent(
        instances in corpus_strategy(14, 6),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 1..10),
    ) {
        let (mut graph, stats) = build(&instances, NGramOrders::ALL);
        let frozen = stats.weights().to_vec();
        let mut covered = HashSet::new();
        for pick in picks {
            let live: Vec<usize> = graph.live_sentences().collect();
            if live.is_empty() {
                break;
            }
            let u = live[pick.index(live.len())];
            let before = graph.neighbors(u).unwrap().to_vec();
            let removal = graph.remove_selected(u).unwrap();
            prop_assert_eq!(&removal.covered, &before);
            prop_assert!(!graph.is_live(u));
            for &v in &before {
                prop_assert!(!graph.is_ngram_live(v));
                covered.insert(v);
            }
            for w in graph.live_sentences() {
                prop_assert!(graph.neighbors(w).unwrap().iter().all(|v| !covered.contains(v)));
            }
            prop_assert!(graph.audit().is_ok());
            prop_assert_eq!(graph.live_ngram_count(), graph.ngram_count() - covered.len());
        }
        prop_assert_eq!(stats.weights(), &frozen[..]);
    }

    #[test]
    fn heap_matches_reference(
        instances in corpus_strategy(16, 7),
        orders in orders_strategy(),
        q in prop::collection::vec(any::<u16>(), 1..8),
        budget in 1usize..20,
    ) {
        let (graph, stats) = build(&instances, orders);
        let quality = quality_for(instances.len(), &q);
        for mode in PriorityMode::ALL {
            let config = SelectionConfig::new(budget, mode).unwrap().with_audit(true);
            let qual = mode.uses_quality().then_some(&quality[..]);
            let fast = select(graph.clone(), &stats, qual, &config).unwrap();
            let slow = select_reference(graph.clone(), &stats, qual, &config).unwrap();
            prop_assert_eq!(fast, slow);
        }
    }

    #[test]
    fn every_step_takes_a_current_maximum(
        instances in corpus_strategy(14, 6),
        q in prop::collection::vec(any::<u16>(), 1..8),
    ) {
        let (graph, stats) = build(&instances, NGramOrders::ALL);
        let quality = quality_for(instances.len(), &q);
        for mode in PriorityMode::ALL {
            let qual = mode.uses_quality().then_some(&quality[..]);
            let config = SelectionConfig::new(instances.len(), mode).unwrap();
            let result = select(graph.clone(), &stats, qual, &config).unwrap();
            let mut state = graph.clone();
            for step in &result.steps {
                let best = state
                    .live_sentences()
                    .map(|u| priority(u, &state, &stats, qual, mode).unwrap())
                    .fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!(step.priority, best);
                let removal = state.remove_selected(step.id).unwrap();
                prop_assert_eq!(removal.covered.len(), step.newly_covered);
            }
        }
    }

    #[test]
    fn coverage_only_grows(instances in corpus_strategy(16, 8), budget in 1usize..20) {
        let (graph, stats) = build(&instances, NGramOrders::ALL);
        let config = SelectionConfig::new(budget, PriorityMode::DiversityOnly).unwrap();
        let result = select(graph, &stats, None, &config).unwrap();
        let total: usize = result.steps.iter().map(|s| s.newly_covered).sum();
        prop_assert_eq!(total, result.covered_ngrams);
        prop_assert!(result.coverage() <= 1.0);
        prop_assert_eq!(result.len(), budget.min(instances.len()));
    }

    #[test]
    fn uniform_gains_never_increase(instances in corpus_strategy(16, 8)) {
        let (graph, stats) = build(&instances, NGramOrders::ALL);
        let config = SelectionConfig::new(instances.len(), PriorityMode::Uniform).unwrap();
        let result = select(graph, &stats, None, &config).unwrap();
        for pair in result.steps.windows(2) {
            prop_assert!(pair[0].newly_covered >= pair[1].newly_covered);
        }
        prop_assert!(result.steps.iter().all(|s| s.priority == s.newly_covered as f64));
        prop_assert_eq!(result.coverage(), 1.0);
    }

    #[test]
    fn superfilter_is_a_ratio(c in 1e-3f64..1e3, p in 1e-3f64..1e3, k in 1e-3f64..1e3) {
        let s = superfilter_score(c, p).unwrap();
        prop_assert_eq!(s, c / p);
        let scaled = superfilter_score(c * k, p * k).unwrap();
        prop_assert!((scaled - s).abs() <= 1e-12 * s.max(1.0));
    }

    #[test]
    fn mtld_ignores_direction(words in prop::collection::vec(0u8..12, 1..80)) {
        let tokens: Vec<Token> = words.iter().map(|w| Token::new(format!("t{w}")).unwrap()).collect();
        let reversed: Vec<Token> = tokens.iter().rev().cloned().collect();
        let a = mtld::<f64>(&tokens, MTLD_THRESHOLD).unwrap();
        let b = mtld::<f64>(&reversed, MTLD_THRESHOLD).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(a.value > 0.0);
    }

    #[test]
    fn mtld_factor_bounds(words in prop::collection::vec(0u8..12, 1..80)) {
        let tokens: Vec<Token> = words.iter().map(|w| Token::new(format!("t{w}")).unwrap()).collect();
        let pass = mtld_pass::<f64>(&tokens, MTLD_THRESHOLD);
        // a factor closes only once the ratio is below the threshold, which
        // takes at least two tokens
        prop_assert!(pass.full_factors * 2 <= tokens.len());
        prop_assert!(pass.partial >= 0.0 && pass.partial < 1.0);
        let distinct: HashSet<_> = words.iter().collect();
        if distinct.len() == words.len() {
            prop_assert_eq!(pass.full_factors, 0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn quality_file_matches_builtin(instances in corpus_strategy(12, 6), budget in 1usize..12) {
        let builtin = builtin_quality::<f64>(&instances, TokenizerPolicy::DEFAULT);
        prop_assert!(builtin.flagged.is_empty());
        let mut file = tempfile::NamedTempFile::new().unwrap();
        for u in 0..instances.len() {
            let score = builtin.table.get(u).unwrap().score;
            writeln!(file, "{}", serde_json::json!({ "id": u, "score": score })).unwrap();
        }
        file.flush().unwrap();

        let in_memory = RunConfig::new(budget);
        let from_file = RunConfig {
            quality: QualitySource::File(file.path().to_owned()),
            ..RunConfig::new(budget)
        };
        prop_assert_eq!(
            quality_scores(&instances, &in_memory).unwrap(),
            quality_scores(&instances, &from_file).unwrap()
        );
        prop_assert_eq!(
            select_instances(&instances, &in_memory).unwrap(),
            select_instances(&instances, &from_file).unwrap()
        );
    }
}
