//! Model selection by name and checkpoint dispatch.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{
    cqa, cqa_train, ngram_train, ngrams, CqaModel, NeuralBaseline, NgramModel, RandomRanker, Variant,
};
use crate::config::Config;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::evpi::EvpiModel;
use crate::model::{PreparedSet, Ranker};
use crate::neural::Checkpoint;
use crate::rng::SeedTree;
use crate::training::{original_mode_report, train, EpochRecord, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Random,
    Ngrams,
    Cqa,
    Neural(Variant),
    Evpi,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Random,
        ModelKind::Ngrams,
        ModelKind::Cqa,
        ModelKind::Neural(Variant::Pq),
        ModelKind::Neural(Variant::Pa),
        ModelKind::Neural(Variant::Pqa),
        ModelKind::Evpi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Random => crate::baselines::random::MODEL_NAME,
            ModelKind::Ngrams => crate::baselines::ngrams::MODEL_NAME,
            ModelKind::Cqa => crate::baselines::cqa::MODEL_NAME,
            ModelKind::Neural(v) => v.name(),
            ModelKind::Evpi => crate::evpi::MODEL_NAME,
        }
    }

    pub fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|k| k.name()).collect()
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            Error::InvalidInput(format!(
                "unknown model `{s}`; valid models: {}",
                Self::names().join(", ")
            ))
        })
    }
}

/// Any trained ranker.
#[derive(Clone, Debug)]
pub enum AnyModel {
    Random(RandomRanker),
    Ngrams(NgramModel),
    Cqa(CqaModel),
    Neural(NeuralBaseline),
    Evpi(EvpiModel),
}

impl AnyModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Random(_) => ModelKind::Random,
            AnyModel::Ngrams(_) => ModelKind::Ngrams,
            AnyModel::Cqa(_) => ModelKind::Cqa,
            AnyModel::Neural(m) => ModelKind::Neural(m.variant),
            AnyModel::Evpi(_) => ModelKind::Evpi,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        match self {
            AnyModel::Random(r) => Checkpoint::new(ModelKind::Random.name()).with_meta("seed", r.seed),
            AnyModel::Ngrams(m) => m.to_checkpoint(),
            AnyModel::Cqa(m) => m.to_checkpoint(),
            AnyModel::Neural(m) => m.to_checkpoint(),
            AnyModel::Evpi(m) => m.to_checkpoint(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        match ck
            .model
            .parse::<ModelKind>()
            .map_err(|e| Error::Checkpoint(e.to_string()))?
        {
            ModelKind::Random => Ok(AnyModel::Random(RandomRanker {
                seed: ck.meta_value("seed")?,
            })),
            ModelKind::Ngrams => Ok(AnyModel::Ngrams(NgramModel::from_checkpoint(ck)?)),
            ModelKind::Cqa => Ok(AnyModel::Cqa(CqaModel::from_checkpoint(ck)?)),
            ModelKind::Neural(_) => Ok(AnyModel::Neural(NeuralBaseline::from_checkpoint(ck)?)),
            ModelKind::Evpi => Ok(AnyModel::Evpi(EvpiModel::from_checkpoint(ck)?)),
        }
    }

    fn inner(&self) -> &(dyn Ranker + Sync) {
        match self {
            AnyModel::Random(m) => m,
            AnyModel::Ngrams(m) => m,
            AnyModel::Cqa(m) => m,
            AnyModel::Neural(m) => m,
            AnyModel::Evpi(m) => m,
        }
    }
}

impl Ranker for AnyModel {
    fn name(&self) -> &str {
        self.inner().name()
    }

    fn score_candidates(&self, table: &EmbeddingTable, set: &PreparedSet) -> Result<Vec<f64>> {
        self.inner().score_candidates(table, set)
    }
}

/// A trained model with its per-epoch log.
#[derive(Clone, Debug)]
pub struct Fitted {
    pub model: AnyModel,
    pub best_epoch: usize,
    pub log: Vec<EpochRecord>,
}

/// Trains a model of the given kind. Stochastic parts draw from named
/// streams of `seeds`. Models without an epoch loop log a single record
/// holding their tune metrics.
pub fn fit(
    kind: ModelKind,
    cfg: &Config,
    table: &EmbeddingTable,
    train_sets: &[PreparedSet],
    tune_sets: &[PreparedSet],
    seeds: &SeedTree,
) -> Result<Fitted> {
    let tc = TrainConfig::from(cfg);
    let (model, epochs) = match kind {
        ModelKind::Evpi => {
            let mut m = EvpiModel::init_scaled(
                table.dim(),
                cfg.hidden_dim,
                cfg.init_scale,
                &mut seeds.stream("init/evpi"),
            );
            m.clamp_negative_sim = cfg.clamp_negative_sim;
            let out = train(m, table, train_sets, tune_sets, &tc, &mut seeds.stream("train/evpi"))?;
            return Ok(Fitted {
                model: AnyModel::Evpi(out.best),
                best_epoch: out.best_epoch,
                log: out.log,
            });
        }
        ModelKind::Neural(v) => {
            let m = NeuralBaseline::init_scaled(
                v,
                table.dim(),
                cfg.hidden_dim,
                cfg.init_scale,
                &mut seeds.stream(&format!("init/{v}")),
            );
            let out = train(
                m,
                table,
                train_sets,
                tune_sets,
                &tc,
                &mut seeds.stream(&format!("train/{v}")),
            )?;
            return Ok(Fitted {
                model: AnyModel::Neural(out.best),
                best_epoch: out.best_epoch,
                log: out.log,
            });
        }
        ModelKind::Random => (
            AnyModel::Random(RandomRanker {
                seed: seeds.seed_for("random"),
            }),
            0,
        ),
        ModelKind::Ngrams => {
            let examples = ngrams::examples_from_sets(train_sets);
            let m = ngram_train(
                &examples,
                cfg.hinge_epochs,
                cfg.hinge_lr,
                &mut seeds.stream("train/ngrams"),
            )?;
            (AnyModel::Ngrams(m), cfg.hinge_epochs)
        }
        ModelKind::Cqa => {
            let examples = cqa::examples_from_sets(train_sets)?;
            (
                AnyModel::Cqa(cqa_train(&examples, cfg.logreg_epochs, cfg.logreg_lr)?),
                cfg.logreg_epochs,
            )
        }
    };
    let report = original_mode_report(&model, table, tune_sets)?;
    let log = vec![EpochRecord {
        epoch: epochs,
        loss: None,
        tune_map: report.map,
        tune_p_at_1: report.p_at_1,
    }];
    Ok(Fitted {
        model,
        best_epoch: epochs,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        let err = "bert".parse::<ModelKind>().unwrap_err().to_string();
        assert!(
            err.contains("random, ngrams, cqa, neural-pq, neural-pa, neural-pqa, evpi"),
            "{err}"
        );
    }

    #[test]
    fn fit_every_kind() {
        use crate::model::prepare_all;
        use crate::synth::{candidate_sets, generate, SynthConfig};
        let corpus = generate(&SynthConfig {
            posts: 12,
            dim: 4,
            ..SynthConfig::default()
        });
        let sets = prepare_all(&corpus.embeddings, &candidate_sets(&corpus, 5).unwrap()).unwrap();
        let cfg = Config {
            hidden_dim: 3,
            epochs: 2,
            logreg_epochs: 5,
            hinge_epochs: 2,
            ..Config::default()
        };
        for kind in ModelKind::ALL {
            let fitted = fit(kind, &cfg, &corpus.embeddings, &sets, &sets, &SeedTree::new(1)).unwrap();
            assert_eq!(fitted.model.kind(), kind);
            assert!(!fitted.log.is_empty());
        }
    }

    #[test]
    fn checkpoint_dispatch() {
        let models = [
            AnyModel::Random(RandomRanker { seed: 7 }),
            AnyModel::Cqa(CqaModel::default()),
            AnyModel::Neural(NeuralBaseline::zeros(Variant::Pa, 2, 2)),
            AnyModel::Evpi(EvpiModel::zeros(2, 2)),
        ];
        for m in models {
            let mut buf = Vec::new();
            m.to_checkpoint().write(&mut buf).unwrap();
            let back = AnyModel::from_checkpoint(&Checkpoint::read(buf.as_slice()).unwrap()).unwrap();
            assert_eq!(back.kind(), m.kind());
            let mut again = Vec::new();
            back.to_checkpoint().write(&mut again).unwrap();
            assert_eq!(again, buf);
        }
    }
}
