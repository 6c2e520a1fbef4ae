//! Bag-of-ngrams baseline: a linear hinge-loss classifier over hashed
//! cross-pair n-gram features of (post, question, answer).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::hash::Fnv1a;
use crate::model::{PreparedSet, Ranker};
use crate::neural::{Checkpoint, Matrix};

pub const MODEL_NAME: &str = "ngrams";
pub const FEATURE_BITS: u32 = 20;
pub const FEATURE_DIM: usize = 1 << FEATURE_BITS;
pub const MAX_N: usize = 3;
/// Fixed hashing seed; feature ids are stable across runs and machines.
pub const HASH_SEED: u64 = 0x5eed_c0de_2018_0001;

/// Sorted, deduplicated `(feature id, value)` pairs.
pub type SparseVec = Vec<(u32, f64)>;

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for w in tokens.windows(n) {
        *out.entry(w.join(" ")).or_insert(0.0) += 1.0;
    }
    out
}

/// Cross products of equal-order n-grams over the pairs (p, q), (q, a) and
/// (p, a). The value of a combination is the product of the two counts.
pub fn ngram_features(post: &[String], question: &[String], answer: &[String]) -> SparseVec {
    let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
    for n in 1..=MAX_N {
        let (p, q, a) = (
            ngram_counts(post, n),
            ngram_counts(question, n),
            ngram_counts(answer, n),
        );
        for (tag, left, right) in [(b'p', &p, &q), (b'q', &q, &a), (b'a', &p, &a)] {
            for (g1, c1) in left {
                for (g2, c2) in right {
                    let mut h = Fnv1a::with_seed(HASH_SEED);
                    h.write(&[tag, n as u8]);
                    h.write(g1.as_bytes());
                    h.write(&[0]);
                    h.write(g2.as_bytes());
                    let id = (h.finish() as usize & (FEATURE_DIM - 1)) as u32;
                    *acc.entry(id).or_insert(0.0) += c1 * c2;
                }
            }
        }
    }
    acc.into_iter().collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct NgramExample {
    pub features: SparseVec,
    /// +1 for the post's own pair, -1 otherwise.
    pub y: f64,
}

pub fn examples_from_sets(sets: &[PreparedSet]) -> Vec<NgramExample> {
    sets.iter()
        .flat_map(|s| {
            (0..s.len()).map(move |j| NgramExample {
                features: ngram_features(&s.post.tokens, &s.questions[j].tokens, &s.answers[j].tokens),
                y: if j == s.original_index { 1.0 } else { -1.0 },
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct NgramModel {
    pub weights: Vec<f64>,
}

impl Default for NgramModel {
    fn default() -> Self {
        NgramModel {
            weights: vec![0.0; FEATURE_DIM],
        }
    }
}

impl NgramModel {
    pub fn score(&self, x: &[(u32, f64)]) -> f64 {
        x.iter().map(|&(i, v)| self.weights[i as usize] * v).sum()
    }

    /// Mean of `max(0, 1 - y w·x)`.
    pub fn hinge_loss(&self, examples: &[NgramExample]) -> f64 {
        if examples.is_empty() {
            return 0.0;
        }
        let total: f64 = examples
            .iter()
            .map(|e| (1.0 - e.y * self.score(&e.features)).max(0.0))
            .sum();
        total / examples.len() as f64
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let nz: Vec<(usize, f64)> = self
            .weights
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, w)| w != 0.0)
            .collect();
        let mut ck = Checkpoint::new(MODEL_NAME)
            .with_meta("feature_dim", FEATURE_DIM)
            .with_meta("hash_seed", HASH_SEED);
        ck.push_params("index", &Matrix::column(nz.iter().map(|&(i, _)| i as f64).collect()));
        ck.push_params("weight", &Matrix::column(nz.iter().map(|&(_, w)| w).collect()));
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.model != MODEL_NAME {
            return Err(Error::Checkpoint(format!(
                "expected an `{MODEL_NAME}` checkpoint, found `{}`",
                ck.model
            )));
        }
        if ck.meta_value::<usize>("feature_dim")? != FEATURE_DIM || ck.meta_value::<u64>("hash_seed")? != HASH_SEED {
            return Err(Error::Checkpoint("feature hashing parameters differ".into()));
        }
        let index = ck.tensor("index.value")?;
        let weight = ck.tensor("weight.value")?;
        if index.shape() != weight.shape() {
            return Err(Error::Checkpoint("index and weight lengths differ".into()));
        }
        let mut m = NgramModel::default();
        for (&i, &w) in index.as_slice().iter().zip(weight.as_slice()) {
            if i < 0.0 || i.fract() != 0.0 || i as usize >= FEATURE_DIM {
                return Err(Error::Checkpoint(format!("bad feature index {i}")));
            }
            m.weights[i as usize] = w;
        }
        Ok(m)
    }
}

/// Sub-gradient descent on the hinge loss, one shuffled pass per epoch.
pub fn ngram_train<R: Rng + ?Sized>(
    examples: &[NgramExample],
    epochs: usize,
    lr: f64,
    rng: &mut R,
) -> Result<NgramModel> {
    let pos = examples.iter().filter(|e| e.y > 0.0).count();
    if pos == 0 || pos == examples.len() {
        return Err(Error::InvalidInput(
            "hinge training needs both positive and negative examples".into(),
        ));
    }
    let mut model = NgramModel::default();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 1..=epochs {
        order.shuffle(rng);
        for &i in &order {
            let e = &examples[i];
            if e.y * model.score(&e.features) < 1.0 {
                for &(f, v) in &e.features {
                    model.weights[f as usize] += lr * e.y * v;
                }
            }
        }
        log::info!("ngrams epoch {epoch}: hinge loss {:.6}", model.hinge_loss(examples));
    }
    Ok(model)
}

impl Ranker for NgramModel {
    fn name(&self) -> &str {
        MODEL_NAME
    }

    fn score_candidates(&self, _table: &EmbeddingTable, set: &PreparedSet) -> Result<Vec<f64>> {
        Ok((0..set.len())
            .map(|j| {
                self.score(&ngram_features(
                    &set.post.tokens,
                    &set.questions[j].tokens,
                    &set.answers[j].tokens,
                ))
            })
            .collect())
    }
}
