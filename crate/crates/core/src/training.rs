//! Mini-batch Adam training with early stopping on tune-set MAP.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::eval::{EvalMode, LabelSet, MetricReport, PostMetrics};
use crate::model::{PreparedSet, Ranker};
use crate::neural::{adam_step, AdamConfig, AdamState, ParamSet};

/// A model trained by per-post loss gradients.
pub trait Trainable: ParamSet + Ranker + Send + Sync {
    fn loss_and_grad(&self, table: &EmbeddingTable, set: &PreparedSet) -> Result<(f64, Self)>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
}

impl From<&Config> for TrainConfig {
    fn from(c: &Config) -> Self {
        TrainConfig {
            lr: c.lr,
            batch_size: c.batch_size,
            epochs: c.epochs,
            patience: c.patience,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-post training loss over the epoch; absent for models that
    /// are not trained by gradient epochs.
    pub loss: Option<f64>,
    pub tune_map: f64,
    pub tune_p_at_1: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<M> {
    /// Parameters after the epoch with the highest tune MAP.
    pub best: M,
    pub best_epoch: usize,
    pub log: Vec<EpochRecord>,
}

/// Scores every set and reports metrics with only the original question
/// relevant.
pub fn original_mode_report<M: Ranker + Sync>(
    model: &M,
    table: &EmbeddingTable,
    sets: &[PreparedSet],
) -> Result<MetricReport> {
    let posts: Vec<PostMetrics> = sets
        .par_iter()
        .map(|s| {
            let ranked = model.rank(table, s)?;
            let label = LabelSet {
                post_id: s.post_id.clone(),
                relevant: BTreeSet::from([s.original_index]),
                mode: EvalMode::Original,
                universe: s.len(),
                excluded: None,
            };
            PostMetrics::score(&ranked.order, &label)
        })
        .collect::<Result<_>>()?;
    Ok(MetricReport::from_posts(&posts))
}

/// Trains `model` in place of a copy and returns the best snapshot.
///
/// Batch gradients are computed in parallel and summed in batch order, so the
/// result does not depend on the worker count.
pub fn train<M, R>(
    model: M,
    table: &EmbeddingTable,
    train_sets: &[PreparedSet],
    tune_sets: &[PreparedSet],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainOutcome<M>>
where
    M: Trainable,
    R: Rng + ?Sized,
{
    if train_sets.is_empty() || tune_sets.is_empty() {
        return Err(Error::InvalidInput(
            "training needs non-empty train and tune sets".into(),
        ));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidInput("batch size must be positive".into()));
    }
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut state = AdamState::default();
    let mut model = model;
    let mut best = model.clone();
    let mut best_map = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train_sets.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<(f64, M)> = batch
                .par_iter()
                .map(|&i| model.loss_and_grad(table, &train_sets[i]))
                .collect::<Result<_>>()?;
            let mut grads = model.zeros_like();
            let mut batch_loss = 0.0;
            for ((loss, g), &i) in results.iter().zip(batch) {
                if !loss.is_finite() || !g.all_finite() {
                    return Err(Error::NonFinite(format!(
                        "epoch {epoch}: loss {loss} on post `{}`",
                        train_sets[i].post_id
                    )));
                }
                batch_loss += loss;
                grads.accumulate(g);
            }
            epoch_loss += batch_loss;
            adam_step(&mut model, &grads, &mut state, &adam)?;
            if !model.all_finite() {
                return Err(Error::NonFinite(format!("epoch {epoch}: parameters diverged")));
            }
        }
        let report = original_mode_report(&model, table, tune_sets)?;
        let record = EpochRecord {
            epoch,
            loss: Some(epoch_loss / train_sets.len() as f64),
            tune_map: report.map,
            tune_p_at_1: report.p_at_1,
        };
        log::info!(
            "epoch {epoch}: loss {:.6} tune MAP {:.4} p@1 {:.4}",
            epoch_loss / train_sets.len() as f64,
            record.tune_map,
            record.tune_p_at_1
        );
        log.push(record);
        if report.map > best_map {
            best_map = report.map;
            best_epoch = epoch;
            best = model.clone();
        } else if epoch - best_epoch >= cfg.patience {
            log::info!("no tune improvement for {} epochs; stopping", cfg.patience);
            break;
        }
    }
    Ok(TrainOutcome { best, best_epoch, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{NeuralBaseline, Variant};
    use crate::evpi::EvpiModel;
    use crate::model::prepare_all;
    use crate::rng::SeedTree;
    use crate::synth::{candidate_sets, generate, scramble, SynthConfig};

    fn fixture() -> (EmbeddingTable, Vec<PreparedSet>) {
        let corpus = generate(&SynthConfig {
            posts: 12,
            dim: 6,
            ..SynthConfig::default()
        });
        let mut sets = candidate_sets(&corpus, 5).unwrap();
        scramble(&mut sets, 2);
        let prepared = prepare_all(&corpus.embeddings, &sets).unwrap();
        (corpus.embeddings, prepared)
    }

    fn cfg(lr: f64) -> TrainConfig {
        TrainConfig {
            lr,
            batch_size: 4,
            epochs: 3,
            patience: 10,
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters_and_loss() {
        let (table, sets) = fixture();
        let tree = SeedTree::new(1);
        let m = EvpiModel::init(6, 5, &mut tree.stream("init"));
        let out = train(m.clone(), &table, &sets, &sets, &cfg(0.0), &mut tree.stream("train")).unwrap();
        assert_eq!(out.best, m);
        let losses: Vec<f64> = out.log.iter().map(|r| r.loss.unwrap()).collect();
        assert_eq!(losses.len(), 3);
        assert!(losses.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12), "{losses:?}");
    }

    #[test]
    fn training_is_deterministic_across_thread_counts() {
        let (table, sets) = fixture();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let tree = SeedTree::new(5);
                let m = NeuralBaseline::init(Variant::Pqa, 6, 5, &mut tree.stream("init"));
                train(m, &table, &sets, &sets, &cfg(0.01), &mut tree.stream("train")).unwrap()
            })
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a.best, b.best);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn early_stopping_respects_patience() {
        let (table, sets) = fixture();
        let tree = SeedTree::new(2);
        let m = EvpiModel::init(6, 5, &mut tree.stream("init"));
        let c = TrainConfig {
            lr: 0.0,
            batch_size: 4,
            epochs: 20,
            patience: 2,
        };
        let out = train(m, &table, &sets, &sets, &c, &mut tree.stream("train")).unwrap();
        assert_eq!(out.best_epoch, 1);
        assert_eq!(out.log.len(), 3);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let (table, sets) = fixture();
        let m = EvpiModel::zeros(6, 3);
        let mut rng = SeedTree::new(0).stream("t");
        assert!(train(m.clone(), &table, &[], &sets, &cfg(0.1), &mut rng).is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..cfg(0.1)
        };
        assert!(train(m, &table, &sets, &sets, &bad, &mut rng).is_err());
    }
}
