//! Uniformly random rankings.

use rand::seq::SliceRandom;

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::eval::{LabelSet, MetricReport, PostMetrics};
use crate::model::{PreparedSet, Ranker};
use crate::rng::{Rng, SeedTree};

pub const MODEL_NAME: &str = "random";

/// Expected metrics of a random ranker, estimated per post as the mean over
/// `n_perm` uniform permutations.
pub fn random_rank_metrics(labels: &[LabelSet], n_perm: usize, rng: &mut Rng) -> Result<MetricReport> {
    if n_perm == 0 {
        return Err(Error::InvalidInput("n_perm must be at least 1".into()));
    }
    let mut sorted: Vec<&LabelSet> = labels.iter().collect();
    sorted.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    let mut posts = Vec::with_capacity(sorted.len());
    for label in sorted {
        let mut order: Vec<usize> = (0..label.universe).collect();
        let mut acc = [0.0f64; 4];
        for _ in 0..n_perm {
            order.shuffle(rng);
            let m = PostMetrics::score(&order, label)?;
            for (a, v) in acc.iter_mut().zip([m.p_at_1, m.p_at_3, m.p_at_5, m.ap]) {
                *a += v;
            }
        }
        let n = n_perm as f64;
        posts.push(PostMetrics {
            post_id: label.post_id.clone(),
            p_at_1: acc[0] / n,
            p_at_3: acc[1] / n,
            p_at_5: acc[2] / n,
            ap: acc[3] / n,
        });
    }
    Ok(MetricReport::from_posts(&posts))
}

/// One random permutation per post, derived from the seed and the post id so
/// the ranking of a post does not depend on which other posts are ranked.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomRanker {
    pub seed: u64,
}

impl Ranker for RandomRanker {
    fn name(&self) -> &str {
        MODEL_NAME
    }

    fn score_candidates(&self, _table: &EmbeddingTable, set: &PreparedSet) -> Result<Vec<f64>> {
        let n = set.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut SeedTree::new(self.seed).stream(&format!("random/{}", set.post_id)));
        let mut scores = vec![0.0; n];
        for (rank, &c) in order.iter().enumerate() {
            scores[c] = (n - rank) as f64;
        }
        Ok(scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::EvalMode;
    use std::collections::BTreeSet;

    fn labels(n: usize, relevant: &[usize]) -> Vec<LabelSet> {
        (0..n)
            .map(|i| LabelSet {
                post_id: format!("p{i:03}"),
                relevant: relevant.iter().copied().collect::<BTreeSet<_>>(),
                mode: EvalMode::Original,
                universe: 10,
                excluded: None,
            })
            .collect()
    }

    #[test]
    fn all_relevant_scores_one() {
        let mut rng = SeedTree::new(0).stream("r");
        let rep = random_rank_metrics(&labels(5, &(0..10).collect::<Vec<_>>()), 20, &mut rng).unwrap();
        assert_eq!((rep.p_at_1, rep.p_at_3, rep.p_at_5, rep.map), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn converges_to_label_fraction() {
        for m in [1usize, 3] {
            let rel: Vec<usize> = (0..m).collect();
            let mut rng = SeedTree::new(9).stream("r");
            let rep = random_rank_metrics(&labels(50, &rel), 1000, &mut rng).unwrap();
            let expected = m as f64 / 10.0;
            assert!((rep.p_at_1 - expected).abs() < 0.015, "{m}: {}", rep.p_at_1);
            assert!((rep.p_at_5 - expected).abs() < 0.015);
        }
    }

    #[test]
    fn single_permutation_is_deterministic() {
        let l = labels(3, &[0]);
        let a = random_rank_metrics(&l, 1, &mut SeedTree::new(4).stream("r")).unwrap();
        let b = random_rank_metrics(&l, 1, &mut SeedTree::new(4).stream("r")).unwrap();
        assert_eq!(a, b);
        assert!(random_rank_metrics(&l, 0, &mut SeedTree::new(4).stream("r")).is_err());
    }
}
