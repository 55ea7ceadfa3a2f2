//! Small hand-built corpora with known answers.

/// The five-sentence, five-n-gram example of a single greedy iteration.
///
/// With unigrams, `u1..u5` are ids 0..4 and `v1..v5` are the tokens
/// `a b c d e` (n-gram ids 0..4):
///
/// ```text
/// u1: v1 v2 v3    u2: v2 v3    u3: v1 v4    u4: v4 v5    u5: v1 v5
/// ```
pub mod five_sentences {
    use crate::corpus::{ContentSide, NGramOrders, TokenizerPolicy, TrainingInstance};
    use crate::graph::{build_graph, BipartiteGraph, CorpusStats};
    use crate::scalar::Scalar;

    pub const INSTRUCTIONS: [&str; 5] = ["a b c", "b c", "a d", "d e", "a e"];

    pub fn instances() -> Vec<TrainingInstance> {
        INSTRUCTIONS
            .iter()
            .enumerate()
            .map(|(id, text)| TrainingInstance {
                id,
                instruction: (*text).to_owned(),
                response: format!("response {id}"),
            })
            .collect()
    }

    /// Line-delimited records for the CLI.
    pub fn jsonl() -> String {
        instances()
            .iter()
            .map(|i| {
                serde_json::json!({ "instruction": i.instruction, "response": i.response })
                    .to_string()
                    + "\n"
            })
            .collect()
    }

    pub fn graph<T: Scalar>() -> (BipartiteGraph, CorpusStats<T>) {
        build_graph(
            &instances(),
            ContentSide::Instruction,
            NGramOrders::UNIGRAMS,
            TokenizerPolicy::DEFAULT,
        )
        .expect("fixture builds")
    }
}
