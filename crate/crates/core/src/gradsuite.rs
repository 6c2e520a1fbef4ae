//! Finite-difference checks of every hand-written gradient on random draws.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{NeuralBaseline, Variant};
use crate::embeddings::EmbeddingTable;
use crate::error::Result;
use crate::evpi::{EvpiModel, LossTerms};
use crate::model::PreparedSet;
use crate::neural::{
    grad_check, richardson_check, FeedForwardParams, LstmParams, ParamSet, BASELINE_HIDDEN_LAYERS, EVPI_HIDDEN_LAYERS,
};
use crate::retrieval::CandidateSet;
use crate::rng::{self, SeedTree};

pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub component: String,
    pub draws: usize,
    pub probes: usize,
    /// Worst error of the central-difference check.
    pub max_rel_error: f64,
    /// Worst error of the extrapolated check on the same number of probes.
    pub max_extrapolated_error: f64,
    pub passed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SuiteConfig {
    pub seed: u64,
    pub draws: usize,
    pub probes: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 0,
            draws: 10,
            probes: 40,
        }
    }
}

fn fill_uniform<P: ParamSet>(p: &mut P, scale: f64, rng: &mut rng::Rng) {
    for t in p.tensors_mut() {
        for v in t.as_mut_slice() {
            *v = rng.random_range(-scale..scale);
        }
    }
}

/// Unit-variance-gain draw: weights in ±sqrt(3 / fan_in), biases in ±0.1.
/// Saturated or attenuated tanh stacks produce coordinates with gradients
/// below what a central difference at the fixed step can resolve.
fn fill_fan_in<P: ParamSet>(p: &mut P, rng: &mut rng::Rng) {
    for t in p.tensors_mut() {
        let scale = if t.cols() > 1 {
            (3.0 / t.cols() as f64).sqrt()
        } else {
            0.1
        };
        for v in t.as_mut_slice() {
            *v = rng.random_range(-scale..scale);
        }
    }
}

const WORDS: [&str; 8] = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"];

fn toy_table(dim: usize, rng: &mut rng::Rng) -> EmbeddingTable {
    let mut t = EmbeddingTable::new(dim).expect("positive dimension");
    for w in WORDS {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        t.insert(w, &v).expect("dimension matches");
    }
    t
}

/// A candidate set of `n` random 4-7 word texts drawn from [`WORDS`].
fn toy_set(table: &EmbeddingTable, post_id: &str, n: usize, rng: &mut rng::Rng) -> Result<PreparedSet> {
    let text = |rng: &mut rng::Rng| -> String {
        let len = rng.random_range(4..8);
        (0..len)
            .map(|_| WORDS[rng.random_range(0..WORDS.len())])
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut ids = vec![post_id.to_string()];
    ids.extend((1..n).map(|j| format!("{post_id}-{j}")));
    let set = CandidateSet {
        post_id: post_id.into(),
        post_body: text(rng),
        questions: (0..n).map(|_| text(rng)).collect(),
        answers: (0..n).map(|_| text(rng)).collect(),
        source_post_ids: ids,
        original_index: 0,
    };
    PreparedSet::new(table, &set)
}

/// Parameters, their analytic gradient and the loss they differentiate.
type Draw<P> = (P, P, Box<dyn Fn(&P) -> Result<f64>>);

fn run<P, M>(name: &str, cfg: &SuiteConfig, mut make: M) -> Result<GradReport>
where
    P: ParamSet,
    M: FnMut(&mut rng::Rng) -> Result<Draw<P>>,
{
    let tree = SeedTree::new(cfg.seed);
    let mut worst = 0.0f64;
    let mut worst_ex = 0.0f64;
    for draw in 0..cfg.draws {
        let mut rng = tree.stream(&format!("gradsuite/{name}/{draw}"));
        let (params, analytic, f) = make(&mut rng)?;
        let mut probe_rng = tree.stream(&format!("gradsuite/{name}/{draw}/probes"));
        worst = worst.max(grad_check(&params, &analytic, &f, cfg.probes, &mut probe_rng)?);
        worst_ex = worst_ex.max(richardson_check(&params, &analytic, &f, cfg.probes, &mut probe_rng)?);
    }
    // The extrapolated check uses wide steps that may straddle the clamp
    // kink, so it is reported but does not gate.
    let passed = worst < GRAD_TOLERANCE;
    Ok(GradReport {
        component: name.into(),
        draws: cfg.draws,
        probes: cfg.probes,
        max_rel_error: worst,
        max_extrapolated_error: worst_ex,
        passed,
    })
}

fn lstm_check(cfg: &SuiteConfig) -> Result<GradReport> {
    run("lstm", cfg, |rng| {
        let mut p = LstmParams::zeros(3, 4);
        fill_uniform(&mut p, 0.5, rng);
        let xs: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let seq: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let (_, cache) = p.forward(&seq)?;
        let mut g = p.zeros_like();
        p.backward(&seq, &cache, &c, &mut g);
        let f = move |q: &LstmParams| -> Result<f64> {
            let seq: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
            Ok(q.encode(&seq)?.iter().zip(&c).map(|(a, b)| a * b).sum())
        };
        Ok((p, g, Box::new(f)))
    })
}

fn ff_check(name: &str, hidden_layers: usize, input: usize, out: usize, cfg: &SuiteConfig) -> Result<GradReport> {
    run(name, cfg, |rng| {
        let mut p = FeedForwardParams::zeros(&FeedForwardParams::widths(input, 5, hidden_layers, out));
        fill_uniform(&mut p, 0.7, rng);
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..out).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, cache) = p.forward(&x)?;
        let mut g = p.zeros_like();
        p.backward(&cache, &c, &mut g);
        let f =
            move |q: &FeedForwardParams| -> Result<f64> { Ok(q.apply(&x)?.iter().zip(&c).map(|(a, b)| a * b).sum()) };
        Ok((p, g, Box::new(f)))
    })
}

fn evpi_check(name: &str, terms: LossTerms, posts: usize, cfg: &SuiteConfig) -> Result<GradReport> {
    run(name, cfg, |rng| {
        let table = toy_table(3, rng);
        let sets: Vec<PreparedSet> = (0..posts)
            .map(|i| toy_set(&table, &format!("p{i}"), 4, rng))
            .collect::<Result<_>>()?;
        let mut m = EvpiModel::zeros(3, 10);
        fill_fan_in(&mut m, rng);
        m.clamp_negative_sim = rng.random_bool(0.5);
        let mut g = m.zeros_like();
        for s in &sets {
            g.accumulate(&m.loss_and_grad(&table, s, terms)?.1);
        }
        let f = move |q: &EvpiModel| -> Result<f64> { sets.iter().map(|s| q.loss(&table, s, terms)).sum() };
        Ok((m, g, Box::new(f)))
    })
}

fn baseline_check(variant: Variant, cfg: &SuiteConfig) -> Result<GradReport> {
    run(variant.name(), cfg, |rng| {
        let table = toy_table(3, rng);
        let set = toy_set(&table, "p", 3, rng)?;
        let mut m = NeuralBaseline::zeros(variant, 3, 10);
        fill_fan_in(&mut m, rng);
        let (_, g) = m.loss_and_grad(&table, &set)?;
        let f = move |q: &NeuralBaseline| q.loss(&table, &set);
        Ok((m, g, Box::new(f)))
    })
}

/// Every component, in a fixed order.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<GradReport>> {
    Ok(vec![
        lstm_check(cfg)?,
        ff_check("ff_ans", EVPI_HIDDEN_LAYERS, 8, 3, cfg)?,
        ff_check("ff_util", EVPI_HIDDEN_LAYERS, 12, 1, cfg)?,
        ff_check("ff_baseline", BASELINE_HIDDEN_LAYERS, 12, 1, cfg)?,
        evpi_check("loss_ans", LossTerms::ANSWER, 1, cfg)?,
        evpi_check("loss_util", LossTerms::UTILITY, 1, cfg)?,
        evpi_check("joint_loss", LossTerms::JOINT, 2, cfg)?,
        baseline_check(Variant::Pq, cfg)?,
        baseline_check(Variant::Pa, cfg)?,
        baseline_check(Variant::Pqa, cfg)?,
    ])
}
