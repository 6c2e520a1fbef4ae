//! Reference rankers: random, bag-of-ngrams, community-QA features and
//! feedforward classifiers over LSTM encodings.

pub mod cqa;
pub mod neural;
pub mod ngrams;
pub mod random;

pub use cqa::{cqa_features, cqa_train, CqaExample, CqaModel};
pub use neural::{NeuralBaseline, Variant};
pub use ngrams::{ngram_features, ngram_train, NgramExample, NgramModel};
pub use random::{random_rank_metrics, RandomRanker};
