//! Budgeted subset selection for instruction-tuning corpora.
//!
//! A dataset is modelled as a bipartite graph between sentences (instances)
//! and the n-grams they contain. Sentences are picked greedily by a priority
//! that multiplies a perplexity-ratio quality score with the summed TF-IDF
//! weight of the sentence's still-uncovered n-grams; every pick removes the
//! n-grams it covers.
//!
//! ```
//! use graphfilter::{fixtures::five_sentences, PriorityMode, SelectionConfig};
//!
//! let (graph, stats) = five_sentences::graph::<f64>();
//! let config = SelectionConfig::new(2, PriorityMode::Uniform).unwrap();
//! let result = graphfilter::select(graph, &stats, None, &config).unwrap();
//! assert_eq!(result.selected(), [0, 3]);
//! ```

pub mod cli;
pub mod corpus;
pub mod error;
pub mod fixtures;
pub mod graph;
pub mod metrics;
pub mod quality;
pub mod scalar;
pub mod selector;
pub mod synthetic;

pub use corpus::{ContentSide, NGram, NGramOrders, Token, TokenizerPolicy, TrainingInstance};
pub use error::{Error, ErrorCategory, Result};
pub use graph::{build_graph, tfidf, BipartiteGraph, CorpusStats, Removal, WeightScratch};
pub use quality::{QualityRecord, QualityTable};
pub use scalar::Scalar;
pub use selector::{
    select, select_reference, PriorityMode, SelectionConfig, SelectionResult, SelectionStep,
    TieBreak,
};

pub type CorpusStats64 = CorpusStats<f64>;
pub type CorpusStats32 = CorpusStats<f32>;
pub type QualityRecord64 = QualityRecord<f64>;
pub type QualityRecord32 = QualityRecord<f32>;
pub type QualityTable64 = QualityTable<f64>;
pub type QualityTable32 = QualityTable<f32>;
pub type SelectionResult64 = SelectionResult<f64>;
pub type SelectionResult32 = SelectionResult<f32>;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
