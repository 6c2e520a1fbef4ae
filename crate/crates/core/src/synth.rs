//! Synthetic forum dumps with clustered question/answer families.
//!
//! Every post belongs to a family, mentions a unique item token and carries
//! hint words for the one family attribute it leaves out. Its clarification
//! question asks about that attribute and the author answers with the matching
//! attribute words, by editing the post on even indices and by replying in a
//! comment on odd ones. Posts of a family cycle through its attributes, so
//! retrieved neighbours mostly share the family but ask about something else.
//! Word vectors cluster by family and attribute; item tokens are unrelated to
//! everything else.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::corpus::{
    build_triples, CommentRecord, Diagnostics, Dump, EditRecord, PostRecord, RhetoricalFilter, TripleRecord,
};
use crate::embeddings::EmbeddingTable;
use crate::error::Result;
use crate::retrieval::{generate_all, CandidateSet};
use crate::rng::SeedTree;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    pub posts: usize,
    pub families: usize,
    /// Attributes a question can ask about within a family. Post `i` asks
    /// about attribute `(i / families) % attributes`.
    pub attributes: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            posts: 50,
            families: 5,
            attributes: 10,
            dim: 50,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub dump: Dump,
    pub embeddings: EmbeddingTable,
}

const TOPIC_WORDS: usize = 6;
const FILLER: [&str; 8] = ["the", "my", "it", "with", "on", "a", "for", "and"];

fn topic(f: usize, k: usize) -> String {
    format!("fam{f}topic{k}")
}

fn question_word(f: usize, attr: usize, k: usize) -> String {
    format!("fam{f}ask{attr}w{k}")
}

fn hint_word(f: usize, attr: usize, k: usize) -> String {
    format!("fam{f}need{attr}w{k}")
}

fn answer_word(f: usize, attr: usize, k: usize) -> String {
    format!("fam{f}val{attr}w{k}")
}

fn item(i: usize) -> String {
    format!("item{i}")
}

pub fn post_id(i: usize) -> String {
    format!("s{i:05}")
}

pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let seeds = SeedTree::new(cfg.seed);
    let mut rng = seeds.stream("synth/dump");
    let families = cfg.families.max(1);
    let attributes = cfg.attributes.max(1);
    let mut dump = Dump {
        posts: Vec::new(),
        comments: Vec::new(),
        edits: Vec::new(),
    };

    for i in 0..cfg.posts {
        let f = i % families;
        let attr = (i / families) % attributes;
        let id = post_id(i);
        let author = format!("u{i}");
        let t0 = 1_000_000 + 1_000 * i as i64;

        let mut topics: Vec<String> = (0..TOPIC_WORDS).map(|k| topic(f, k)).collect();
        for k in (1..topics.len()).rev() {
            topics.swap(k, rng.random_range(0..=k));
        }
        let title = format!("{} {} {}", topics[0], item(i), topics[1]);
        let body = format!(
            "{} {} {} {} {} {} {} {}",
            FILLER[rng.random_range(0..FILLER.len())],
            topics[2],
            hint_word(f, attr, 0),
            topics[3],
            item(i),
            topics[4],
            hint_word(f, attr, 1),
            topics[5]
        );
        dump.posts.push(PostRecord {
            post_id: id.clone(),
            author_id: author.clone(),
            title,
            body: body.clone(),
            created_at: t0,
        });

        let question = format!(
            "which {} {} for {} ?",
            question_word(f, attr, 0),
            question_word(f, attr, 1),
            item(i)
        );
        dump.comments.push(CommentRecord {
            comment_id: format!("c{i:05}q"),
            post_id: id.clone(),
            author_id: format!("helper{}", (i + 1) % cfg.posts.max(1)),
            text: question,
            created_at: t0 + 10,
        });

        let answer_words: Vec<String> = (0..5).map(|k| answer_word(f, attr, k)).collect();
        let answer = format!("{} {}", item(i), answer_words.join(" "));
        if i % 2 == 0 {
            dump.edits.push(EditRecord {
                edit_id: format!("e{i:05}"),
                post_id: id,
                author_id: author,
                new_body: format!("{body} {answer}"),
                created_at: t0 + 20,
            });
        } else {
            dump.comments.push(CommentRecord {
                comment_id: format!("c{i:05}a"),
                post_id: id,
                author_id: author,
                text: answer,
                created_at: t0 + 20,
            });
        }
    }

    let embeddings = embeddings(cfg, &seeds);
    SynthCorpus { dump, embeddings }
}

/// Family words are a family centroid plus noise. Question and hint words add
/// an attribute offset and answer words subtract it. Items and filler are
/// isotropic.
fn embeddings(cfg: &SynthConfig, seeds: &SeedTree) -> EmbeddingTable {
    let mut rng = seeds.stream("synth/embeddings");
    let dim = cfg.dim.max(1);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let noise = Normal::new(0.0, 0.3).expect("valid normal");
    let draw = |rng: &mut crate::rng::Rng| -> Vec<f64> { (0..dim).map(|_| unit.sample(rng)).collect() };
    let mut table = EmbeddingTable::new(dim).expect("positive dimension");

    let add = |table: &mut EmbeddingTable, word: String, v: Vec<f64>| {
        table.insert(&word, &v).expect("dimension matches");
    };
    for f in 0..cfg.families.max(1) {
        let centroid = draw(&mut rng);
        for k in 0..TOPIC_WORDS {
            let v = centroid.iter().map(|c| c + noise.sample(&mut rng)).collect();
            add(&mut table, topic(f, k), v);
        }
        for attr in 0..cfg.attributes.max(1) {
            let offset = draw(&mut rng);
            for k in 0..5 {
                let q = centroid
                    .iter()
                    .zip(&offset)
                    .map(|(c, o)| c + o + noise.sample(&mut rng))
                    .collect();
                add(&mut table, question_word(f, attr, k), q);
                if k < 2 {
                    let h = centroid
                        .iter()
                        .zip(&offset)
                        .map(|(c, o)| c + o + noise.sample(&mut rng))
                        .collect();
                    add(&mut table, hint_word(f, attr, k), h);
                }
                let a = centroid
                    .iter()
                    .zip(&offset)
                    .map(|(c, o)| c - o + noise.sample(&mut rng))
                    .collect();
                add(&mut table, answer_word(f, attr, k), a);
            }
        }
    }
    for i in 0..cfg.posts {
        let v = draw(&mut rng);
        add(&mut table, item(i), v);
    }
    for w in FILLER.iter().chain(["which"].iter()) {
        let v = draw(&mut rng);
        add(&mut table, w.to_string(), v);
    }
    table
}

/// Runs extraction and candidate generation over a generated corpus.
pub fn candidate_sets(corpus: &SynthCorpus, k: usize) -> Result<Vec<CandidateSet>> {
    let mut diag = Diagnostics::default();
    let triples = build_triples(
        &corpus.dump,
        &RhetoricalFilter::default(),
        &corpus.embeddings,
        &mut diag,
    )?;
    let records: Vec<TripleRecord> = triples.iter().map(TripleRecord::from).collect();
    generate_all(&records, k)
}

/// Shuffles the candidates of every set so the original pair is not always
/// first. Rankers break ties toward the lower index, so without this a model
/// that scores everything equally would look perfect.
pub fn scramble(sets: &mut [CandidateSet], seed: u64) {
    let tree = SeedTree::new(seed);
    for set in sets {
        let mut rng = tree.stream(&format!("synth/scramble/{}", set.post_id));
        let mut perm: Vec<usize> = (0..set.len()).collect();
        for k in (1..perm.len()).rev() {
            perm.swap(k, rng.random_range(0..=k));
        }
        if perm.len() > 1 && perm[0] == set.original_index {
            perm.swap(0, 1);
        }
        let pick = |v: &[String]| -> Vec<String> { perm.iter().map(|&i| v[i].clone()).collect() };
        set.questions = pick(&set.questions);
        set.answers = pick(&set.answers);
        set.source_post_ids = pick(&set.source_post_ids);
        set.original_index = perm.iter().position(|&i| i == set.original_index).expect("permutation");
    }
}

pub fn write_jsonl<T: Serialize, W: Write>(records: &[T], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_triples, AnswerSource, Diagnostics, RhetoricalFilter};

    #[test]
    fn every_post_yields_a_triple() {
        let corpus = generate(&SynthConfig {
            posts: 20,
            dim: 8,
            ..SynthConfig::default()
        });
        let mut diag = Diagnostics::default();
        let triples = build_triples(
            &corpus.dump,
            &RhetoricalFilter::default(),
            &corpus.embeddings,
            &mut diag,
        )
        .unwrap();
        assert_eq!(triples.len(), 20);
        assert_eq!(diag.emitted, 20);
        assert_eq!(triples[0].answer_source, AnswerSource::Edit);
        assert_eq!(triples[1].answer_source, AnswerSource::Comment);
        assert!(triples.iter().all(|t| t.question.ends_with('?')));
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig {
            posts: 10,
            dim: 4,
            ..SynthConfig::default()
        };
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a.dump.posts, b.dump.posts);
        let mut wa = Vec::new();
        let mut wb = Vec::new();
        a.embeddings.write(&mut wa).unwrap();
        b.embeddings.write(&mut wb).unwrap();
        assert_eq!(wa, wb);
        let c = generate(&SynthConfig { seed: 1, ..cfg });
        assert_ne!(a.dump.posts, c.dump.posts);
    }

    #[test]
    fn scramble_moves_the_original() {
        let corpus = generate(&SynthConfig {
            posts: 15,
            dim: 6,
            ..SynthConfig::default()
        });
        let mut sets = candidate_sets(&corpus, 10).unwrap();
        let before = sets.clone();
        scramble(&mut sets, 7);
        for (a, b) in before.iter().zip(&sets) {
            b.validate().unwrap();
            assert_ne!(b.original_index, 0);
            assert_eq!(a.questions[a.original_index], b.questions[b.original_index]);
            let mut qa = a.questions.clone();
            let mut qb = b.questions.clone();
            qa.sort();
            qb.sort();
            assert_eq!(qa, qb);
        }
    }

    #[test]
    fn vocabulary_is_covered() {
        let corpus = generate(&SynthConfig {
            posts: 12,
            dim: 6,
            ..SynthConfig::default()
        });
        for p in &corpus.dump.posts {
            for tok in crate::text::tokenize(&p.full_text()) {
                assert!(corpus.embeddings.id(&tok).is_some(), "{tok}");
            }
        }
    }
}
