//! Inputs and outputs shared by every ranker: candidate sets with their
//! texts resolved to embedding ids, and ranked lists.

use std::cmp::Ordering;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::embeddings::{avg_vector, EmbeddingTable};
use crate::error::{Error, Result};
use crate::retrieval::CandidateSet;
use crate::text::tokenize;

/// A text resolved against an embedding table: the in-vocabulary token ids
/// (encoder input) and the average word vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedText {
    pub tokens: Vec<String>,
    pub ids: Vec<u32>,
    pub avg: Vec<f64>,
}

impl PreparedText {
    pub fn new(table: &EmbeddingTable, text: &str) -> Self {
        let tokens = tokenize(text);
        let ids = table.lookup(&tokens);
        let avg = avg_vector(table, &tokens).values;
        PreparedText { tokens, ids, avg }
    }

    /// Token vectors in order, ready for an encoder.
    pub fn sequence<'t>(&self, table: &'t EmbeddingTable) -> Vec<&'t [f64]> {
        self.ids.iter().map(|&id| table.vector(id)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSet {
    pub post_id: String,
    pub post: PreparedText,
    pub questions: Vec<PreparedText>,
    pub answers: Vec<PreparedText>,
    pub original_index: usize,
}

impl PreparedSet {
    pub fn new(table: &EmbeddingTable, set: &CandidateSet) -> Result<Self> {
        set.validate()?;
        Ok(PreparedSet {
            post_id: set.post_id.clone(),
            post: PreparedText::new(table, &set.post_body),
            questions: set.questions.iter().map(|q| PreparedText::new(table, q)).collect(),
            answers: set.answers.iter().map(|a| PreparedText::new(table, a)).collect(),
            original_index: set.original_index,
        })
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    /// Training label of candidate `j`: 1 for the post's own pair.
    pub fn label(&self, j: usize) -> f64 {
        if j == self.original_index {
            1.0
        } else {
            0.0
        }
    }
}

pub fn prepare_all(table: &EmbeddingTable, sets: &[CandidateSet]) -> Result<Vec<PreparedSet>> {
    sets.iter().map(|s| PreparedSet::new(table, s)).collect()
}

/// A model's ordering of one candidate set. `scores[r]` is the score of
/// candidate `order[r]`, so `scores` is non-increasing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankedList {
    pub post_id: String,
    pub model: String,
    pub order: Vec<usize>,
    pub scores: Vec<f64>,
}

impl RankedList {
    /// Sorts candidates by descending score; ties go to the lower index.
    pub fn from_scores(post_id: &str, model: &str, scores: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        RankedList {
            post_id: post_id.to_owned(),
            model: model.to_owned(),
            scores: order.iter().map(|&i| scores[i]).collect(),
            order,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.order.len();
        let mut seen = vec![false; n];
        for &i in &self.order {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidInput(format!(
                    "ranking for `{}` is not a permutation",
                    self.post_id
                )));
            }
        }
        if self.scores.len() != n {
            return Err(Error::InvalidInput(format!(
                "ranking for `{}` has {} scores for {n} candidates",
                self.post_id,
                self.scores.len()
            )));
        }
        if self
            .scores
            .windows(2)
            .any(|w| !matches!(w[0].partial_cmp(&w[1]), Some(Ordering::Greater | Ordering::Equal)))
        {
            return Err(Error::InvalidInput(format!(
                "ranking for `{}` has scores out of order",
                self.post_id
            )));
        }
        Ok(())
    }
}

pub fn write_rankings<W: Write>(lists: &[RankedList], mut w: W) -> Result<()> {
    for l in lists {
        serde_json::to_writer(&mut w, l)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_rankings<R: BufRead>(r: R) -> Result<Vec<RankedList>> {
    let lists: Vec<RankedList> = crate::corpus::read_jsonl(r)?;
    for (i, l) in lists.iter().enumerate() {
        l.validate().map_err(|e| Error::parse(i + 1, e.to_string()))?;
    }
    Ok(lists)
}

/// Anything that scores the candidates of a prepared set (higher is better).
pub trait Ranker {
    fn name(&self) -> &str;
    fn score_candidates(&self, table: &EmbeddingTable, set: &PreparedSet) -> Result<Vec<f64>>;

    fn rank(&self, table: &EmbeddingTable, set: &PreparedSet) -> Result<RankedList> {
        let scores = self.score_candidates(table, set)?;
        Ok(RankedList::from_scores(&set.post_id, self.name(), &scores))
    }
}
