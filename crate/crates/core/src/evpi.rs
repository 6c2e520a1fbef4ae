//! The EVPI ranker.
//!
//! A candidate question `q_i` is worth the utility it is expected to buy:
//!
//! ```text
//! EVPI(q_i | p) = Σ_j P[a_j | p, q_i] · U(p + a_j)
//! P[a_j | p, q_i] = exp(-dist(F_ans(p̄, q̄_i), â_j)) · max(0, cos(q̂_i, q̂_j))
//! U(p + a_j)      = σ(F_util(p̄, q̄_j, ā_j))
//! ```
//!
//! `p̄, q̄, ā` are mean LSTM states, `q̂, â` average word vectors and
//! `dist = 1 - cos`. Training minimizes, per post, the answer loss
//! `dist(F_ans, â_i) + Σ_{j≠i} dist(F_ans, â_j) · max(0, cos(q̂_i, q̂_j))` plus
//! the binary cross-entropy of the utility over the post's candidates, where
//! only the post's own pair is labeled positive.

use rand::Rng;

use crate::embeddings::{cos_sim, dot, norm, EmbeddingTable};
use crate::error::{Error, Result};
use crate::model::{PreparedSet, PreparedText, Ranker};
use crate::neural::{
    sigmoid, Checkpoint, FeedForwardParams, LstmParams, Matrix, ParamSet, EVPI_HIDDEN_LAYERS, INIT_SCALE,
};
use crate::training::Trainable;

pub const MODEL_NAME: &str = "evpi";

/// Utilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` inside the log loss.
pub const BCE_CLAMP: f64 = 1e-12;

/// `1 - cos_sim(rep, a_hat)`, in `[0, 2]`.
pub fn dist(rep: &[f64], a_hat: &[f64]) -> Result<f64> {
    Ok(1.0 - cos_sim(rep, a_hat)?)
}

/// Weight a candidate pair gets from question similarity.
pub fn question_weight(q_i: &[f64], q_j: &[f64], clamp_negative: bool) -> Result<f64> {
    let c = cos_sim(q_i, q_j)?;
    Ok(if clamp_negative { c.max(0.0) } else { c })
}

/// `exp(-dist) · weight`.
pub fn answer_probability(distance: f64, weight: f64) -> f64 {
    (-distance).exp() * weight
}

/// Sum of probability-weighted utilities.
pub fn expected_value(probabilities: &[f64], utilities: &[f64]) -> f64 {
    probabilities.iter().zip(utilities).map(|(p, u)| p * u).sum()
}

/// Binary cross-entropy of a utility against its label.
pub fn loss_util(y: f64, utility: f64) -> f64 {
    let u = utility.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    -(y * u.ln() + (1.0 - y) * (1.0 - u).ln())
}

/// d loss_util / d logit for `u = σ(z)`. Zero where the clamp is active.
fn loss_util_grad(y: f64, u: f64) -> f64 {
    if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&u) {
        0.0
    } else {
        u - y
    }
}

/// Adds `scale · d dist(r, a) / dr` into `out`.
fn add_dist_grad(r: &[f64], a: &[f64], scale: f64, out: &mut [f64]) {
    let (nr, na) = (norm(r), norm(a));
    if nr == 0.0 || na == 0.0 || scale == 0.0 {
        return;
    }
    let cos = dot(r, a) / (nr * na);
    for ((o, ri), ai) in out.iter_mut().zip(r).zip(a) {
        *o -= scale * (ai / (nr * na) - cos * ri / (nr * nr));
    }
}

/// Which terms of the joint objective to include.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LossTerms {
    pub answer: bool,
    pub utility: bool,
}

impl LossTerms {
    pub const JOINT: LossTerms = LossTerms {
        answer: true,
        utility: true,
    };
    pub const ANSWER: LossTerms = LossTerms {
        answer: true,
        utility: false,
    };
    pub const UTILITY: LossTerms = LossTerms {
        answer: false,
        utility: true,
    };
}

/// Three LSTM encoders (post, question, answer) and the answer and utility nets.
#[derive(Clone, Debug, PartialEq)]
pub struct EvpiModel {
    pub lstm_post: LstmParams,
    pub lstm_question: LstmParams,
    pub lstm_answer: LstmParams,
    /// `[p̄; q̄] -> answer representation` (embedding width).
    pub ff_ans: FeedForwardParams,
    /// `[p̄; q̄; ā] -> utility logit`.
    pub ff_util: FeedForwardParams,
    pub clamp_negative_sim: bool,
}

impl EvpiModel {
    pub fn zeros(embed_dim: usize, hidden_dim: usize) -> Self {
        EvpiModel {
            lstm_post: LstmParams::zeros(embed_dim, hidden_dim),
            lstm_question: LstmParams::zeros(embed_dim, hidden_dim),
            lstm_answer: LstmParams::zeros(embed_dim, hidden_dim),
            ff_ans: FeedForwardParams::zeros(&Self::ans_widths(embed_dim, hidden_dim)),
            ff_util: FeedForwardParams::zeros(&Self::util_widths(hidden_dim)),
            clamp_negative_sim: true,
        }
    }

    pub fn init<R: Rng + ?Sized>(embed_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        Self::init_scaled(embed_dim, hidden_dim, INIT_SCALE, rng)
    }

    /// Random init with weights uniform in `(-scale, scale)`.
    pub fn init_scaled<R: Rng + ?Sized>(embed_dim: usize, hidden_dim: usize, scale: f64, rng: &mut R) -> Self {
        EvpiModel {
            lstm_post: LstmParams::init_scaled(embed_dim, hidden_dim, scale, rng),
            lstm_question: LstmParams::init_scaled(embed_dim, hidden_dim, scale, rng),
            lstm_answer: LstmParams::init_scaled(embed_dim, hidden_dim, scale, rng),
            ff_ans: FeedForwardParams::init_scaled(&Self::ans_widths(embed_dim, hidden_dim), scale, rng),
            ff_util: FeedForwardParams::init_scaled(&Self::util_widths(hidden_dim), scale, rng),
            clamp_negative_sim: true,
        }
    }

    fn ans_widths(embed_dim: usize, hidden_dim: usize) -> Vec<usize> {
        FeedForwardParams::widths(2 * hidden_dim, hidden_dim, EVPI_HIDDEN_LAYERS, embed_dim)
    }

    fn util_widths(hidden_dim: usize) -> Vec<usize> {
        FeedForwardParams::widths(3 * hidden_dim, hidden_dim, EVPI_HIDDEN_LAYERS, 1)
    }

    pub fn embed_dim(&self) -> usize {
        self.lstm_post.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.lstm_post.hidden_dim
    }

    /// `F_ans(p̄, q̄)`.
    pub fn answer_representation(
        &self,
        table: &EmbeddingTable,
        post: &PreparedText,
        question: &PreparedText,
    ) -> Result<Vec<f64>> {
        let p = self.lstm_post.encode(&post.sequence(table))?;
        let q = self.lstm_question.encode(&question.sequence(table))?;
        self.ff_ans.apply(&[p, q].concat())
    }

    /// `U(p + a) = σ(F_util(p̄, q̄, ā))`.
    pub fn utility(
        &self,
        table: &EmbeddingTable,
        post: &PreparedText,
        question: &PreparedText,
        answer: &PreparedText,
    ) -> Result<f64> {
        let p = self.lstm_post.encode(&post.sequence(table))?;
        let q = self.lstm_question.encode(&question.sequence(table))?;
        let a = self.lstm_answer.encode(&answer.sequence(table))?;
        Ok(sigmoid(self.ff_util.apply(&[p, q, a].concat())?[0]))
    }

    /// `P[a_j | p, q_i]` given the answer representation for `q_i`.
    pub fn answer_prob(&self, rep: &[f64], q_i: &PreparedText, a_j: &PreparedText, q_j: &PreparedText) -> Result<f64> {
        let d = dist(rep, &a_j.avg)?;
        let w = question_weight(&q_i.avg, &q_j.avg, self.clamp_negative_sim)?;
        Ok(answer_probability(d, w))
    }

    /// EVPI score of every candidate question of the set.
    pub fn evpi_scores(&self, table: &EmbeddingTable, set: &PreparedSet) -> Result<Vec<f64>> {
        let n = set.len();
        let p = self.lstm_post.encode(&set.post.sequence(table))?;
        let q_bar: Vec<Vec<f64>> = set
            .questions
            .iter()
            .map(|q| self.lstm_question.encode(&q.sequence(table)))
            .collect::<Result<_>>()?;
        let mut utilities = Vec::with_capacity(n);
        for j in 0..n {
            let a = self.lstm_answer.encode(&set.answers[j].sequence(table))?;
            let z = self.ff_util.apply(&[p.as_slice(), &q_bar[j], &a].concat())?[0];
            utilities.push(sigmoid(z));
        }
        let mut scores = Vec::with_capacity(n);
        for i in 0..n {
            let rep = self.ff_ans.apply(&[p.as_slice(), &q_bar[i]].concat())?;
            let probs: Vec<f64> = (0..n)
                .map(|j| self.answer_prob(&rep, &set.questions[i], &set.answers[j], &set.questions[j]))
                .collect::<Result<_>>()?;
            scores.push(expected_value(&probs, &utilities));
        }
        Ok(scores)
    }

    /// Answer loss of the set's own (post, question, answer) against the
    /// other candidates.
    pub fn loss_ans(&self, table: &EmbeddingTable, set: &PreparedSet) -> Result<f64> {
        self.objective(table, set, LossTerms::ANSWER, None)
    }

    pub fn loss(&self, table: &EmbeddingTable, set: &PreparedSet, terms: LossTerms) -> Result<f64> {
        self.objective(table, set, terms, None)
    }

    pub fn loss_and_grad(&self, table: &EmbeddingTable, set: &PreparedSet, terms: LossTerms) -> Result<(f64, Self)> {
        let mut grads = self.zeros_like();
        let loss = self.objective(table, set, terms, Some(&mut grads))?;
        Ok((loss, grads))
    }

    fn objective(
        &self,
        table: &EmbeddingTable,
        set: &PreparedSet,
        terms: LossTerms,
        mut grads: Option<&mut Self>,
    ) -> Result<f64> {
        let n = set.len();
        let o = set.original_index;
        if o >= n {
            return Err(Error::InvalidInput(format!("original index {o} out of range")));
        }
        let h = self.hidden_dim();
        let p_seq = set.post.sequence(table);
        let q_seqs: Vec<Vec<&[f64]>> = set.questions.iter().map(|q| q.sequence(table)).collect();
        let a_seqs: Vec<Vec<&[f64]>> = set.answers.iter().map(|a| a.sequence(table)).collect();

        let (p_bar, p_cache) = self.lstm_post.forward(&p_seq)?;
        let mut q_bar = Vec::with_capacity(n);
        let mut q_cache = Vec::with_capacity(n);
        for s in &q_seqs {
            let (v, c) = self.lstm_question.forward(s)?;
            q_bar.push(v);
            q_cache.push(c);
        }
        let mut a_bar = Vec::with_capacity(n);
        let mut a_cache = Vec::with_capacity(n);
        if terms.utility {
            for s in &a_seqs {
                let (v, c) = self.lstm_answer.forward(s)?;
                a_bar.push(v);
                a_cache.push(c);
            }
        }

        let mut d_p = vec![0.0; h];
        let mut d_q = vec![vec![0.0; h]; n];
        let mut d_a = vec![vec![0.0; h]; n];
        let mut loss = 0.0;

        if terms.answer {
            let (rep, cache) = self.ff_ans.forward(&[p_bar.as_slice(), &q_bar[o]].concat())?;
            let mut d_rep = vec![0.0; rep.len()];
            loss += dist(&rep, &set.answers[o].avg)?;
            add_dist_grad(&rep, &set.answers[o].avg, 1.0, &mut d_rep);
            for j in (0..n).filter(|&j| j != o) {
                let w = question_weight(&set.questions[o].avg, &set.questions[j].avg, self.clamp_negative_sim)?;
                if w == 0.0 {
                    continue;
                }
                loss += w * dist(&rep, &set.answers[j].avg)?;
                add_dist_grad(&rep, &set.answers[j].avg, w, &mut d_rep);
            }
            if let Some(g) = grads.as_deref_mut() {
                let d_x = self.ff_ans.backward(&cache, &d_rep, &mut g.ff_ans);
                add_into(&mut d_p, &d_x[..h]);
                add_into(&mut d_q[o], &d_x[h..]);
            }
        }

        if terms.utility {
            for j in 0..n {
                let x = [p_bar.as_slice(), &q_bar[j], &a_bar[j]].concat();
                let (z, cache) = self.ff_util.forward(&x)?;
                let u = sigmoid(z[0]);
                let y = set.label(j);
                loss += loss_util(y, u);
                if let Some(g) = grads.as_deref_mut() {
                    let d_x = self.ff_util.backward(&cache, &[loss_util_grad(y, u)], &mut g.ff_util);
                    add_into(&mut d_p, &d_x[..h]);
                    add_into(&mut d_q[j], &d_x[h..2 * h]);
                    add_into(&mut d_a[j], &d_x[2 * h..]);
                }
            }
        }

        if let Some(g) = grads {
            self.lstm_post.backward(&p_seq, &p_cache, &d_p, &mut g.lstm_post);
            for j in 0..n {
                if d_q[j].iter().any(|&v| v != 0.0) {
                    self.lstm_question
                        .backward(&q_seqs[j], &q_cache[j], &d_q[j], &mut g.lstm_question);
                }
                if terms.utility && d_a[j].iter().any(|&v| v != 0.0) {
                    self.lstm_answer
                        .backward(&a_seqs[j], &a_cache[j], &d_a[j], &mut g.lstm_answer);
                }
            }
        }
        Ok(loss)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(MODEL_NAME)
            .with_meta("embed_dim", self.embed_dim())
            .with_meta("hidden_dim", self.hidden_dim())
            .with_meta("clamp_negative_sim", self.clamp_negative_sim);
        ck.push_params("", self);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.model != MODEL_NAME {
            return Err(Error::Checkpoint(format!(
                "expected an `{MODEL_NAME}` checkpoint, found `{}`",
                ck.model
            )));
        }
        let mut m = Self::zeros(ck.meta_value("embed_dim")?, ck.meta_value("hidden_dim")?);
        m.clamp_negative_sim = ck.meta_value("clamp_negative_sim")?;
        ck.fill_params("", &mut m)?;
        Ok(m)
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Sum of per-post objectives over a batch.
pub fn joint_loss(model: &EvpiModel, table: &EmbeddingTable, batch: &[PreparedSet]) -> Result<f64> {
    batch.iter().map(|s| model.loss(table, s, LossTerms::JOINT)).sum()
}

impl ParamSet for EvpiModel {
    fn tensors(&self) -> Vec<&Matrix> {
        let mut v = self.lstm_post.tensors();
        v.extend(self.lstm_question.tensors());
        v.extend(self.lstm_answer.tensors());
        v.extend(self.ff_ans.tensors());
        v.extend(self.ff_util.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = self.lstm_post.tensors_mut();
        v.extend(self.lstm_question.tensors_mut());
        v.extend(self.lstm_answer.tensors_mut());
        v.extend(self.ff_ans.tensors_mut());
        v.extend(self.ff_util.tensors_mut());
        v
    }

    fn tensor_names(&self) -> Vec<String> {
        let parts: [(&str, Vec<String>); 5] = [
            ("lstm_post", self.lstm_post.tensor_names()),
            ("lstm_question", self.lstm_question.tensor_names()),
            ("lstm_answer", self.lstm_answer.tensor_names()),
            ("ff_ans", self.ff_ans.tensor_names()),
            ("ff_util", self.ff_util.tensor_names()),
        ];
        parts
            .into_iter()
            .flat_map(|(prefix, names)| names.into_iter().map(move |n| format!("{prefix}.{n}")))
            .collect()
    }
}

impl Trainable for EvpiModel {
    fn loss_and_grad(&self, table: &EmbeddingTable, set: &PreparedSet) -> Result<(f64, Self)> {
        EvpiModel::loss_and_grad(self, table, set, LossTerms::JOINT)
    }
}

impl Ranker for EvpiModel {
    fn name(&self) -> &str {
        MODEL_NAME
    }

    fn score_candidates(&self, table: &EmbeddingTable, set: &PreparedSet) -> Result<Vec<f64>> {
        self.evpi_scores(table, set)
    }
}
