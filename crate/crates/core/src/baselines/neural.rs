//! Feedforward classifiers over LSTM encodings of (p, q), (p, a) or
//! (p, q, a), trained with binary cross-entropy on the post's own pair
//! against its other candidates and ranked by positive probability.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::evpi::{loss_util, BCE_CLAMP};
use crate::model::{PreparedSet, Ranker};
use crate::neural::{
    sigmoid, Checkpoint, FeedForwardParams, LstmParams, Matrix, ParamSet, BASELINE_HIDDEN_LAYERS, INIT_SCALE,
};
use crate::training::Trainable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Pq,
    Pa,
    Pqa,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Pq, Variant::Pa, Variant::Pqa];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Pq => "neural-pq",
            Variant::Pa => "neural-pa",
            Variant::Pqa => "neural-pqa",
        }
    }

    fn uses_question(self) -> bool {
        matches!(self, Variant::Pq | Variant::Pqa)
    }

    fn uses_answer(self) -> bool {
        matches!(self, Variant::Pa | Variant::Pqa)
    }

    fn inputs(self) -> usize {
        1 + self.uses_question() as usize + self.uses_answer() as usize
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown neural baseline `{s}`")))
    }
}

/// Only the encoders the variant reads are present.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralBaseline {
    pub variant: Variant,
    pub lstm_post: LstmParams,
    pub lstm_question: Option<LstmParams>,
    pub lstm_answer: Option<LstmParams>,
    pub ff: FeedForwardParams,
}

impl NeuralBaseline {
    fn widths(variant: Variant, hidden_dim: usize) -> Vec<usize> {
        FeedForwardParams::widths(variant.inputs() * hidden_dim, hidden_dim, BASELINE_HIDDEN_LAYERS, 1)
    }

    pub fn zeros(variant: Variant, embed_dim: usize, hidden_dim: usize) -> Self {
        let lstm = || LstmParams::zeros(embed_dim, hidden_dim);
        NeuralBaseline {
            variant,
            lstm_post: lstm(),
            lstm_question: variant.uses_question().then(lstm),
            lstm_answer: variant.uses_answer().then(lstm),
            ff: FeedForwardParams::zeros(&Self::widths(variant, hidden_dim)),
        }
    }

    pub fn init<R: Rng + ?Sized>(variant: Variant, embed_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        Self::init_scaled(variant, embed_dim, hidden_dim, INIT_SCALE, rng)
    }

    /// Random init with weights uniform in `(-scale, scale)`.
    pub fn init_scaled<R: Rng + ?Sized>(
        variant: Variant,
        embed_dim: usize,
        hidden_dim: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let lstm_post = LstmParams::init_scaled(embed_dim, hidden_dim, scale, rng);
        let lstm_question = variant
            .uses_question()
            .then(|| LstmParams::init_scaled(embed_dim, hidden_dim, scale, rng));
        let lstm_answer = variant
            .uses_answer()
            .then(|| LstmParams::init_scaled(embed_dim, hidden_dim, scale, rng));
        let ff = FeedForwardParams::init_scaled(&Self::widths(variant, hidden_dim), scale, rng);
        NeuralBaseline {
            variant,
            lstm_post,
            lstm_question,
            lstm_answer,
            ff,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.lstm_post.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.lstm_post.hidden_dim
    }

    /// Positive-class probability of every candidate.
    pub fn probabilities(&self, table: &EmbeddingTable, set: &PreparedSet) -> Result<Vec<f64>> {
        let p = self.lstm_post.encode(&set.post.sequence(table))?;
        (0..set.len())
            .map(|j| {
                let mut x = p.clone();
                if let Some(l) = &self.lstm_question {
                    x.extend(l.encode(&set.questions[j].sequence(table))?);
                }
                if let Some(l) = &self.lstm_answer {
                    x.extend(l.encode(&set.answers[j].sequence(table))?);
                }
                Ok(sigmoid(self.ff.apply(&x)?[0]))
            })
            .collect()
    }

    /// Sum of per-candidate cross-entropies.
    pub fn loss(&self, table: &EmbeddingTable, set: &PreparedSet) -> Result<f64> {
        Ok(self
            .probabilities(table, set)?
            .iter()
            .enumerate()
            .map(|(j, &u)| loss_util(set.label(j), u))
            .sum())
    }

    pub fn loss_and_grad(&self, table: &EmbeddingTable, set: &PreparedSet) -> Result<(f64, Self)> {
        let h = self.hidden_dim();
        let mut g = self.zeros_like();
        let p_seq = set.post.sequence(table);
        let (p, p_cache) = self.lstm_post.forward(&p_seq)?;
        let mut d_p = vec![0.0; h];
        let mut loss = 0.0;
        for j in 0..set.len() {
            let mut x = p.clone();
            let q_seq = set.questions[j].sequence(table);
            let a_seq = set.answers[j].sequence(table);
            let q = match &self.lstm_question {
                Some(l) => {
                    let (v, c) = l.forward(&q_seq)?;
                    x.extend_from_slice(&v);
                    Some(c)
                }
                None => None,
            };
            let a = match &self.lstm_answer {
                Some(l) => {
                    let (v, c) = l.forward(&a_seq)?;
                    x.extend_from_slice(&v);
                    Some(c)
                }
                None => None,
            };
            let (z, cache) = self.ff.forward(&x)?;
            let u = sigmoid(z[0]);
            let y = set.label(j);
            loss += loss_util(y, u);
            let dz = if (BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&u) {
                u - y
            } else {
                0.0
            };
            let d_x = self.ff.backward(&cache, &[dz], &mut g.ff);
            for (d, v) in d_p.iter_mut().zip(&d_x[..h]) {
                *d += v;
            }
            let mut offset = h;
            if let (Some(l), Some(c), Some(gl)) = (&self.lstm_question, &q, g.lstm_question.as_mut()) {
                l.backward(&q_seq, c, &d_x[offset..offset + h], gl);
                offset += h;
            }
            if let (Some(l), Some(c), Some(gl)) = (&self.lstm_answer, &a, g.lstm_answer.as_mut()) {
                l.backward(&a_seq, c, &d_x[offset..offset + h], gl);
            }
        }
        self.lstm_post.backward(&p_seq, &p_cache, &d_p, &mut g.lstm_post);
        Ok((loss, g))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(self.variant.name())
            .with_meta("embed_dim", self.embed_dim())
            .with_meta("hidden_dim", self.hidden_dim());
        ck.push_params("", self);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let variant: Variant = ck
            .model
            .parse()
            .map_err(|_| Error::Checkpoint(format!("expected a neural baseline checkpoint, found `{}`", ck.model)))?;
        let mut m = Self::zeros(variant, ck.meta_value("embed_dim")?, ck.meta_value("hidden_dim")?);
        ck.fill_params("", &mut m)?;
        Ok(m)
    }
}

impl ParamSet for NeuralBaseline {
    fn tensors(&self) -> Vec<&Matrix> {
        let mut v = self.lstm_post.tensors();
        if let Some(l) = &self.lstm_question {
            v.extend(l.tensors());
        }
        if let Some(l) = &self.lstm_answer {
            v.extend(l.tensors());
        }
        v.extend(self.ff.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = self.lstm_post.tensors_mut();
        if let Some(l) = &mut self.lstm_question {
            v.extend(l.tensors_mut());
        }
        if let Some(l) = &mut self.lstm_answer {
            v.extend(l.tensors_mut());
        }
        v.extend(self.ff.tensors_mut());
        v
    }

    fn tensor_names(&self) -> Vec<String> {
        let mut parts = vec![("lstm_post", self.lstm_post.tensor_names())];
        if let Some(l) = &self.lstm_question {
            parts.push(("lstm_question", l.tensor_names()));
        }
        if let Some(l) = &self.lstm_answer {
            parts.push(("lstm_answer", l.tensor_names()));
        }
        parts.push(("ff", self.ff.tensor_names()));
        parts
            .into_iter()
            .flat_map(|(prefix, names)| names.into_iter().map(move |n| format!("{prefix}.{n}")))
            .collect()
    }
}

impl Trainable for NeuralBaseline {
    fn loss_and_grad(&self, table: &EmbeddingTable, set: &PreparedSet) -> Result<(f64, Self)> {
        NeuralBaseline::loss_and_grad(self, table, set)
    }
}

impl Ranker for NeuralBaseline {
    fn name(&self) -> &str {
        self.variant.name()
    }

    fn score_candidates(&self, table: &EmbeddingTable, set: &PreparedSet) -> Result<Vec<f64>> {
        self.probabilities(table, set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evpi::EvpiModel;
    use crate::neural::{grad_check, richardson_check};
    use crate::retrieval::CandidateSet;
    use crate::rng::SeedTree;

    fn toy(seed: &str) -> (EmbeddingTable, PreparedSet) {
        let mut rng = SeedTree::new(2).stream(seed);
        let words = ["a", "b", "c", "d", "e", "f"];
        let mut t = EmbeddingTable::new(3).unwrap();
        for w in words {
            let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            t.insert(w, &v).unwrap();
        }
        let cs = CandidateSet {
            post_id: "p".into(),
            post_body: "a b c d e f a".into(),
            questions: vec!["d e a b".into(), "f c b e".into(), "a d f f c".into()],
            answers: vec!["b f c a".into(), "c c e d".into(), "d a e b f".into()],
            source_post_ids: vec!["p".into(), "q".into(), "r".into()],
            original_index: 0,
        };
        let s = PreparedSet::new(&t, &cs).unwrap();
        (t, s)
    }

    #[test]
    fn zero_final_layer_ties() {
        let (t, s) = toy("w");
        let mut m = NeuralBaseline::init(Variant::Pqa, 3, 4, &mut SeedTree::new(0).stream("m"));
        let last = m.ff.layers.len() - 1;
        m.ff.layers[last].w.fill(0.0);
        let r = m.rank(&t, &s).unwrap();
        assert_eq!(r.order, vec![0, 1, 2]);
        assert!(r.scores.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn bce_gradient_checks() {
        let mut rng = SeedTree::new(3).stream("probes");
        for variant in Variant::ALL {
            for draw in 0..10 {
                let (t, s) = toy(&format!("w{draw}"));
                let mut m = NeuralBaseline::zeros(variant, 3, 6);
                let mut r = SeedTree::new(draw).stream("scale");
                for x in m.tensors_mut() {
                    for v in x.as_mut_slice() {
                        *v = r.random_range(-1.0..1.0);
                    }
                }
                let (_, g) = m.loss_and_grad(&t, &s).unwrap();
                let err = grad_check(&m, &g, |p| p.loss(&t, &s), 30, &mut rng).unwrap();
                assert!(err < 1e-4, "{variant} draw {draw}: {err}");
                let full = richardson_check(&m, &g, |p| p.loss(&t, &s), usize::MAX, &mut rng).unwrap();
                assert!(full < 1e-4, "{variant} draw {draw}: extrapolated {full}");
            }
        }
    }

    #[test]
    fn encoders_match_variant() {
        let pq = NeuralBaseline::zeros(Variant::Pq, 3, 4);
        assert!(pq.lstm_answer.is_none() && pq.lstm_question.is_some());
        assert_eq!(pq.ff.input_dim(), 8);
        let pa = NeuralBaseline::zeros(Variant::Pa, 3, 4);
        assert!(pa.lstm_question.is_none());
        assert_eq!(NeuralBaseline::zeros(Variant::Pqa, 3, 4).ff.hidden_layers(), 10);
    }

    #[test]
    fn parameter_count_parity() {
        for (embed, hidden) in [(50, 100), (200, 100), (16, 32), (300, 200)] {
            let evpi = EvpiModel::zeros(embed, hidden).param_count() as f64;
            let pqa = NeuralBaseline::zeros(Variant::Pqa, embed, hidden).param_count() as f64;
            let ratio = evpi / pqa;
            assert!((0.5..=2.0).contains(&ratio), "{embed}x{hidden}: {ratio}");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        for variant in Variant::ALL {
            let m = NeuralBaseline::init(variant, 3, 2, &mut SeedTree::new(1).stream("m"));
            let mut buf = Vec::new();
            m.to_checkpoint().write(&mut buf).unwrap();
            let back = NeuralBaseline::from_checkpoint(&Checkpoint::read(buf.as_slice()).unwrap()).unwrap();
            assert_eq!(back, m);
        }
    }
}
