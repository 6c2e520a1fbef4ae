//! Shared fixtures for the criterion benches.

use evpirank_core::corpus::{build_triples, Diagnostics, RhetoricalFilter, TripleRecord};
use evpirank_core::model::{prepare_all, PreparedSet};
use evpirank_core::retrieval::CandidateSet;
use evpirank_core::synth::{self, SynthConfig, SynthCorpus};

pub struct Fixture {
    pub corpus: SynthCorpus,
    pub triples: Vec<TripleRecord>,
    pub sets: Vec<CandidateSet>,
    pub prepared: Vec<PreparedSet>,
}

impl Fixture {
    /// A synthetic corpus with `posts` posts and `dim`-dimensional vectors,
    /// carried through extraction and candidate generation.
    pub fn new(posts: usize, dim: usize) -> Self {
        let corpus = synth::generate(&SynthConfig {
            posts,
            dim,
            ..SynthConfig::default()
        });
        let mut diag = Diagnostics::default();
        let triples: Vec<TripleRecord> = build_triples(
            &corpus.dump,
            &RhetoricalFilter::default(),
            &corpus.embeddings,
            &mut diag,
        )
        .expect("synthetic corpus extracts")
        .iter()
        .map(TripleRecord::from)
        .collect();
        let sets = evpirank_core::retrieval::generate_all(&triples, 10).expect("candidate generation");
        let prepared = prepare_all(&corpus.embeddings, &sets).expect("vectors cover the corpus");
        Fixture {
            corpus,
            triples,
            sets,
            prepared,
        }
    }

    /// `(post_id, text)` pairs for the search index.
    pub fn documents(&self) -> Vec<(String, String)> {
        self.corpus
            .dump
            .posts
            .iter()
            .map(|p| (p.post_id.clone(), p.full_text()))
            .collect()
    }
}
