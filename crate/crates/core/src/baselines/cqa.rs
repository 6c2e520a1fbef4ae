//! Community-QA style baseline: logistic regression on string-similarity
//! features of the (post, question) pair. Answers are not used.

use std::collections::BTreeSet;

use crate::embeddings::{cos_sim, EmbeddingTable};
use crate::error::{Error, Result};
use crate::model::{PreparedSet, PreparedText, Ranker};
use crate::neural::{sigmoid, Checkpoint, Matrix};

pub const MODEL_NAME: &str = "cqa";
pub const N_FEATURES: usize = 6;

const QUESTION_WORDS: [&str; 19] = [
    "what", "which", "why", "how", "when", "where", "who", "whom", "whose", "is", "are", "do", "does", "did", "can",
    "could", "would", "should", "will",
];

fn overlap_ratio<T: Ord>(post: &BTreeSet<T>, question: &BTreeSet<T>) -> f64 {
    if question.is_empty() {
        0.0
    } else {
        question.intersection(post).count() as f64 / question.len() as f64
    }
}

fn bigrams(tokens: &[String]) -> BTreeSet<(&str, &str)> {
    tokens.windows(2).map(|w| (w[0].as_str(), w[1].as_str())).collect()
}

/// `[cos(p̂, q̂), token overlap, bigram overlap, |q|/|p|, question words in q,
/// q mentions "you"]`. Overlaps are fractions of the question's distinct
/// tokens or bigrams found in the post.
pub fn cqa_features(post: &PreparedText, question: &PreparedText) -> Result<[f64; N_FEATURES]> {
    let p_tokens: BTreeSet<&str> = post.tokens.iter().map(String::as_str).collect();
    let q_tokens: BTreeSet<&str> = question.tokens.iter().map(String::as_str).collect();
    let length_ratio = if post.tokens.is_empty() {
        0.0
    } else {
        question.tokens.len() as f64 / post.tokens.len() as f64
    };
    Ok([
        cos_sim(&post.avg, &question.avg)?,
        overlap_ratio(&p_tokens, &q_tokens),
        overlap_ratio(&bigrams(&post.tokens), &bigrams(&question.tokens)),
        length_ratio,
        question
            .tokens
            .iter()
            .filter(|t| QUESTION_WORDS.contains(&t.as_str()))
            .count() as f64,
        if q_tokens.contains("you") { 1.0 } else { 0.0 },
    ])
}

#[derive(Clone, Debug, PartialEq)]
pub struct CqaExample {
    pub features: [f64; N_FEATURES],
    pub y: f64,
}

pub fn examples_from_sets(sets: &[PreparedSet]) -> Result<Vec<CqaExample>> {
    let mut out = Vec::new();
    for s in sets {
        for j in 0..s.len() {
            out.push(CqaExample {
                features: cqa_features(&s.post, &s.questions[j])?,
                y: s.label(j),
            });
        }
    }
    Ok(out)
}

/// Standardized logistic regression.
#[derive(Clone, Debug, PartialEq)]
pub struct CqaModel {
    pub mean: [f64; N_FEATURES],
    pub scale: [f64; N_FEATURES],
    pub weights: [f64; N_FEATURES],
    pub bias: f64,
}

impl Default for CqaModel {
    fn default() -> Self {
        CqaModel {
            mean: [0.0; N_FEATURES],
            scale: [1.0; N_FEATURES],
            weights: [0.0; N_FEATURES],
            bias: 0.0,
        }
    }
}

impl CqaModel {
    fn standardize(&self, x: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        std::array::from_fn(|k| (x[k] - self.mean[k]) / self.scale[k])
    }

    pub fn logit(&self, x: &[f64; N_FEATURES]) -> f64 {
        let z = self.standardize(x);
        self.bias + z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn score(&self, x: &[f64; N_FEATURES]) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn accuracy(&self, examples: &[CqaExample]) -> f64 {
        let correct = examples
            .iter()
            .filter(|e| (self.score(&e.features) >= 0.5) == (e.y > 0.5))
            .count();
        correct as f64 / examples.len().max(1) as f64
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(MODEL_NAME);
        ck.push_params("mean", &Matrix::column(self.mean.to_vec()));
        ck.push_params("scale", &Matrix::column(self.scale.to_vec()));
        ck.push_params("weights", &Matrix::column(self.weights.to_vec()));
        ck.push_params("bias", &Matrix::column(vec![self.bias]));
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.model != MODEL_NAME {
            return Err(Error::Checkpoint(format!(
                "expected a `{MODEL_NAME}` checkpoint, found `{}`",
                ck.model
            )));
        }
        let get = |name: &str| -> Result<[f64; N_FEATURES]> {
            let t = ck.tensor(&format!("{name}.value"))?;
            <[f64; N_FEATURES]>::try_from(t.as_slice())
                .map_err(|_| Error::Checkpoint(format!("`{name}` must have {N_FEATURES} values")))
        };
        let bias = ck.tensor("bias.value")?;
        if bias.len() != 1 {
            return Err(Error::Checkpoint("`bias` must be a scalar".into()));
        }
        Ok(CqaModel {
            mean: get("mean")?,
            scale: get("scale")?,
            weights: get("weights")?,
            bias: bias.as_slice()[0],
        })
    }
}

/// Full-batch gradient descent on the mean log loss after standardizing
/// each feature with training statistics. Constant features are left at
/// zero with a warning.
pub fn cqa_train(examples: &[CqaExample], epochs: usize, lr: f64) -> Result<CqaModel> {
    let pos = examples.iter().filter(|e| e.y > 0.5).count();
    if pos == 0 || pos == examples.len() {
        return Err(Error::InvalidInput("logistic regression needs both classes".into()));
    }
    let n = examples.len() as f64;
    let mut model = CqaModel::default();
    for k in 0..N_FEATURES {
        let mean = examples.iter().map(|e| e.features[k]).sum::<f64>() / n;
        let var = examples.iter().map(|e| (e.features[k] - mean).powi(2)).sum::<f64>() / n;
        model.mean[k] = mean;
        if var > 0.0 {
            model.scale[k] = var.sqrt();
        } else {
            log::warn!("cqa feature {k} is constant on the training data");
        }
    }
    let standardized: Vec<[f64; N_FEATURES]> = examples.iter().map(|e| model.standardize(&e.features)).collect();
    for _ in 0..epochs {
        let mut gw = [0.0; N_FEATURES];
        let mut gb = 0.0;
        for (z, e) in standardized.iter().zip(examples) {
            let logit = model.bias + z.iter().zip(&model.weights).map(|(a, b)| a * b).sum::<f64>();
            let d = sigmoid(logit) - e.y;
            for k in 0..N_FEATURES {
                gw[k] += d * z[k];
            }
            gb += d;
        }
        for k in 0..N_FEATURES {
            model.weights[k] -= lr * gw[k] / n;
        }
        model.bias -= lr * gb / n;
    }
    Ok(model)
}

impl Ranker for CqaModel {
    fn name(&self) -> &str {
        MODEL_NAME
    }

    fn score_candidates(&self, _table: &EmbeddingTable, set: &PreparedSet) -> Result<Vec<f64>> {
        set.questions
            .iter()
            .map(|q| Ok(self.score(&cqa_features(&set.post, q)?)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text(tokens: &[&str], avg: &[f64]) -> PreparedText {
        PreparedText {
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
            ids: vec![],
            avg: avg.to_vec(),
        }
    }

    #[test]
    fn feature_values() {
        let p = text(&["my", "old", "laptop", "is", "slow"], &[1.0, 0.0]);
        let q = text(&["is", "your", "laptop", "old", "you"], &[1.0, 1.0]);
        let f = cqa_features(&p, &q).unwrap();
        assert!((f[0] - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(f[1], 3.0 / 5.0);
        assert_eq!(f[2], 0.0);
        assert_eq!(f[3], 1.0);
        assert_eq!(f[4], 1.0);
        assert_eq!(f[5], 1.0);
    }

    #[test]
    fn zero_weights_score_half() {
        let m = CqaModel::default();
        assert_eq!(m.score(&[0.3, 1.0, 0.0, 2.0, 1.0, 0.0]), 0.5);
    }

    #[test]
    fn separable_on_cosine() {
        let examples: Vec<CqaExample> = (0..20)
            .map(|i| {
                let y = (i % 2) as f64;
                CqaExample {
                    features: [y * 0.8 + 0.1 + 0.005 * i as f64, 0.5, 0.0, 1.0, 1.0, 0.0],
                    y,
                }
            })
            .collect();
        let m = cqa_train(&examples, 200, 0.5).unwrap();
        assert_eq!(m.accuracy(&examples), 1.0);
        // monotone in the logit
        let lo = m.score(&[0.1, 0.5, 0.0, 1.0, 1.0, 0.0]);
        let hi = m.score(&[0.9, 0.5, 0.0, 1.0, 1.0, 0.0]);
        assert!(hi > lo);
        let mut buf = Vec::new();
        m.to_checkpoint().write(&mut buf).unwrap();
        assert_eq!(
            CqaModel::from_checkpoint(&Checkpoint::read(buf.as_slice()).unwrap()).unwrap(),
            m
        );
    }

    #[test]
    fn one_class_is_an_error() {
        let e = CqaExample {
            features: [0.0; N_FEATURES],
            y: 1.0,
        };
        assert!(cqa_train(&[e.clone(), e], 10, 0.1).is_err());
    }
}
