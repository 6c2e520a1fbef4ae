//! Ranking metrics, label regimes and agreement/significance statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::read_jsonl;
use crate::error::{Error, Result};
use crate::model::RankedList;
use crate::retrieval::CandidateSet;

/// One annotator's judgment of a candidate list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub post_id: String,
    pub annotator_id: String,
    pub best: usize,
    pub valid: Vec<usize>,
}

pub fn read_annotations<R: BufRead>(reader: R) -> Result<Vec<Annotation>> {
    read_jsonl(reader)
}

/// Annotation-based regime used to derive relevance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regime {
    /// Union of the two annotators' best picks.
    BestUnion,
    /// Intersection of the two annotators' valid sets.
    ValidIntersection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EvalMode {
    BestUnion,
    ValidIntersection,
    /// Only the post's own question is relevant.
    Original,
    /// An annotation regime with the original candidate removed from both
    /// the labels and the ranking.
    ExcludeOriginal(Regime),
}

impl EvalMode {
    pub const ALL: [EvalMode; 5] = [
        EvalMode::BestUnion,
        EvalMode::ValidIntersection,
        EvalMode::Original,
        EvalMode::ExcludeOriginal(Regime::ValidIntersection),
        EvalMode::ExcludeOriginal(Regime::BestUnion),
    ];

    pub fn name(self) -> &'static str {
        match self {
            EvalMode::BestUnion => "best_union",
            EvalMode::ValidIntersection => "valid_intersection",
            EvalMode::Original => "original",
            EvalMode::ExcludeOriginal(Regime::ValidIntersection) => "exclude_original",
            EvalMode::ExcludeOriginal(Regime::BestUnion) => "exclude_original_best",
        }
    }

    fn regime(self) -> Option<Regime> {
        match self {
            EvalMode::BestUnion => Some(Regime::BestUnion),
            EvalMode::ValidIntersection => Some(Regime::ValidIntersection),
            EvalMode::Original => None,
            EvalMode::ExcludeOriginal(r) => Some(r),
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EvalMode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<_> = EvalMode::ALL.iter().map(|m| m.name()).collect();
            Error::InvalidInput(format!("unknown mode `{s}`; expected one of {}", names.join(", ")))
        })
    }
}

/// Relevant candidates of one post under a mode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    pub post_id: String,
    pub relevant: BTreeSet<usize>,
    pub mode: EvalMode,
    /// Number of candidates in the full list.
    pub universe: usize,
    /// Candidate removed from the ranking before scoring.
    pub excluded: Option<usize>,
}

impl LabelSet {
    /// The ranking restricted to the scored candidates.
    pub fn restrict(&self, order: &[usize]) -> Vec<usize> {
        order.iter().copied().filter(|&c| Some(c) != self.excluded).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Labels {
    pub labels: Vec<LabelSet>,
    /// Posts whose relevant set came out empty.
    pub dropped: usize,
}

/// `|top-k ∩ relevant| / k`.
pub fn precision_at_k(order: &[usize], relevant: &BTreeSet<usize>, k: usize) -> f64 {
    assert!(k >= 1, "k must be positive");
    let hits = order.iter().take(k).filter(|c| relevant.contains(c)).count();
    hits as f64 / k as f64
}

/// Mean of `precision_at_r` over the ranks `r` holding relevant items,
/// divided by `|relevant|`. `None` for an empty relevant set.
pub fn average_precision(order: &[usize], relevant: &BTreeSet<usize>) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, c) in order.iter().enumerate() {
        if relevant.contains(c) {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    Some(sum / relevant.len() as f64)
}

/// MAP over posts and the number of posts skipped for empty relevance.
pub fn mean_average_precision(instances: &[(&[usize], &BTreeSet<usize>)]) -> (f64, usize) {
    let aps: Vec<f64> = instances.iter().filter_map(|(o, r)| average_precision(o, r)).collect();
    let skipped = instances.len() - aps.len();
    if skipped > 0 {
        log::warn!("{skipped} posts with no relevant candidates skipped");
    }
    let map = if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    };
    (map, skipped)
}

/// Derives relevance for every labeled post.
///
/// `original` labels every candidate set. The annotation modes label the
/// annotated posts, each of which must have records from exactly two
/// annotators and a candidate set.
pub fn build_labelsets(annotations: &[Annotation], sets: &[CandidateSet], mode: EvalMode) -> Result<Labels> {
    let by_post: BTreeMap<&str, &CandidateSet> = sets.iter().map(|s| (s.post_id.as_str(), s)).collect();
    let mut out = Labels::default();
    let Some(regime) = mode.regime() else {
        for s in by_post.values() {
            out.labels.push(LabelSet {
                post_id: s.post_id.clone(),
                relevant: BTreeSet::from([s.original_index]),
                mode,
                universe: s.len(),
                excluded: None,
            });
        }
        return Ok(out);
    };

    let mut grouped: BTreeMap<&str, Vec<&Annotation>> = BTreeMap::new();
    for a in annotations {
        grouped.entry(a.post_id.as_str()).or_default().push(a);
    }
    for (post_id, group) in grouped {
        let set = by_post
            .get(post_id)
            .ok_or_else(|| Error::InvalidInput(format!("annotated post `{post_id}` has no candidate set")))?;
        let annotators: BTreeSet<&str> = group.iter().map(|a| a.annotator_id.as_str()).collect();
        if group.len() != 2 || annotators.len() != 2 {
            return Err(Error::InvalidInput(format!(
                "post `{post_id}` needs records from exactly two annotators, found {}",
                group.len()
            )));
        }
        for a in &group {
            if a.best >= set.len() || a.valid.iter().any(|&v| v >= set.len()) {
                return Err(Error::InvalidInput(format!(
                    "post `{post_id}`: annotation index out of range"
                )));
            }
            if !a.valid.contains(&a.best) {
                return Err(Error::InvalidInput(format!(
                    "post `{post_id}`: annotator `{}` marked a best question that is not valid",
                    a.annotator_id
                )));
            }
        }
        let mut relevant: BTreeSet<usize> = match regime {
            Regime::BestUnion => group.iter().map(|a| a.best).collect(),
            Regime::ValidIntersection => {
                let first: BTreeSet<usize> = group[0].valid.iter().copied().collect();
                let second: BTreeSet<usize> = group[1].valid.iter().copied().collect();
                first.intersection(&second).copied().collect()
            }
        };
        let excluded = matches!(mode, EvalMode::ExcludeOriginal(_)).then_some(set.original_index);
        if let Some(o) = excluded {
            relevant.remove(&o);
        }
        if relevant.is_empty() {
            out.dropped += 1;
            continue;
        }
        out.labels.push(LabelSet {
            post_id: post_id.to_string(),
            relevant,
            mode,
            universe: set.len(),
            excluded,
        });
    }
    if out.dropped > 0 {
        log::warn!("{} posts dropped with no relevant candidates under {mode}", out.dropped);
    }
    Ok(out)
}

/// Metrics of one post.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostMetrics {
    pub post_id: String,
    pub p_at_1: f64,
    pub p_at_3: f64,
    pub p_at_5: f64,
    pub ap: f64,
}

impl PostMetrics {
    /// Scores a full candidate ordering against a label set.
    pub fn score(order: &[usize], label: &LabelSet) -> Result<Self> {
        if order.len() != label.universe {
            return Err(Error::Shape(format!(
                "post `{}`: ranking has {} candidates, labels expect {}",
                label.post_id,
                order.len(),
                label.universe
            )));
        }
        let order = label.restrict(order);
        let ap = average_precision(&order, &label.relevant)
            .ok_or_else(|| Error::InvalidInput(format!("post `{}` has no relevant candidates", label.post_id)))?;
        Ok(PostMetrics {
            post_id: label.post_id.clone(),
            p_at_1: precision_at_k(&order, &label.relevant, 1),
            p_at_3: precision_at_k(&order, &label.relevant, 3),
            p_at_5: precision_at_k(&order, &label.relevant, 5),
            ap,
        })
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::PAt1 => self.p_at_1,
            Metric::PAt3 => self.p_at_3,
            Metric::PAt5 => self.p_at_5,
            Metric::Ap => self.ap,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    PAt1,
    PAt3,
    PAt5,
    Ap,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p_at_1" | "p@1" => Ok(Metric::PAt1),
            "p_at_3" | "p@3" => Ok(Metric::PAt3),
            "p_at_5" | "p@5" => Ok(Metric::PAt5),
            "map" | "ap" => Ok(Metric::Ap),
            _ => Err(Error::InvalidInput(format!(
                "unknown metric `{s}`; expected p_at_1, p_at_3, p_at_5 or map"
            ))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_posts: usize,
    pub p_at_1: f64,
    pub p_at_3: f64,
    pub p_at_5: f64,
    pub map: f64,
}

impl MetricReport {
    /// Means over posts, accumulated in the given order.
    pub fn from_posts(posts: &[PostMetrics]) -> Self {
        let n = posts.len();
        if n == 0 {
            return MetricReport::default();
        }
        let mean = |f: fn(&PostMetrics) -> f64| posts.iter().map(f).sum::<f64>() / n as f64;
        MetricReport {
            n_posts: n,
            p_at_1: mean(|p| p.p_at_1),
            p_at_3: mean(|p| p.p_at_3),
            p_at_5: mean(|p| p.p_at_5),
            map: mean(|p| p.ap),
        }
    }
}

/// Scores rankings against labels, in post-id order. Ranked posts without
/// labels are ignored; a labeled post without a ranking is an error.
pub fn evaluate_posts(rankings: &[RankedList], labels: &[LabelSet]) -> Result<Vec<PostMetrics>> {
    let mut by_post: BTreeMap<&str, &RankedList> = BTreeMap::new();
    for r in rankings {
        r.validate()?;
        if by_post.insert(r.post_id.as_str(), r).is_some() {
            return Err(Error::InvalidInput(format!("post `{}` ranked twice", r.post_id)));
        }
    }
    let mut sorted: Vec<&LabelSet> = labels.iter().collect();
    sorted.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    let unlabeled = by_post.len().saturating_sub(sorted.len());
    if unlabeled > 0 {
        log::warn!("{unlabeled} ranked posts have no labels and are not scored");
    }
    sorted
        .into_iter()
        .map(|label| {
            let r = by_post
                .get(label.post_id.as_str())
                .ok_or_else(|| Error::InvalidInput(format!("no ranking for labeled post `{}`", label.post_id)))?;
            PostMetrics::score(&r.order, label)
        })
        .collect()
}

pub fn evaluate(rankings: &[RankedList], labels: &[LabelSet]) -> Result<MetricReport> {
    Ok(MetricReport::from_posts(&evaluate_posts(rankings, labels)?))
}

/// A report tagged with the model and mode that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedReport {
    pub model: String,
    pub mode: String,
    #[serde(flatten)]
    pub report: MetricReport,
}

/// Aligned plain-text table, metrics as percentages.
pub fn format_table(reports: &[NamedReport]) -> String {
    let header = ["model", "mode", "n", "p@1", "p@3", "p@5", "MAP"];
    let mut rows: Vec<[String; 7]> = vec![header.map(String::from)];
    for r in reports {
        let m = &r.report;
        rows.push([
            r.model.clone(),
            r.mode.clone(),
            m.n_posts.to_string(),
            format!("{:.1}", 100.0 * m.p_at_1),
            format!("{:.1}", 100.0 * m.p_at_3),
            format!("{:.1}", 100.0 * m.p_at_5),
            format!("{:.1}", 100.0 * m.map),
        ]);
    }
    let widths: Vec<usize> = (0..7)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c < 2 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Cohen's kappa between two categorical label sequences.
pub fn cohen_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "label sequences differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("kappa of empty sequences".into()));
    }
    // Counts stay integral until one final division, so rational inputs
    // give the correctly rounded kappa.
    let n = a.len() as u128;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as u128;
    let mut marginals: BTreeMap<&T, (u128, u128)> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        marginals.entry(x).or_default().0 += 1;
        marginals.entry(y).or_default().1 += 1;
    }
    let chance: u128 = marginals.values().map(|&(ca, cb)| ca * cb).sum();
    if chance == n * n {
        return Ok(1.0);
    }
    let num = (n * agree) as i128 - chance as i128;
    let den = (n * n - chance) as i128;
    Ok(num as f64 / den as f64)
}

/// Paired bootstrap over posts. Returns twice the fraction of resamples
/// whose mean difference does not share the observed sign, capped at 1.
/// Identical inputs give 1.
pub fn bootstrap_test<R: Rng + ?Sized>(a: &[f64], b: &[f64], n_samples: usize, rng: &mut R) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "score lists differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 || n_samples == 0 {
        return Err(Error::InvalidInput(
            "bootstrap needs at least two posts and one sample".into(),
        ));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len();
    let observed = diffs.iter().sum::<f64>() / n as f64;
    if observed == 0.0 {
        return Ok(1.0);
    }
    let mut contrary = 0usize;
    for _ in 0..n_samples {
        let mean = (0..n).map(|_| diffs[rng.random_range(0..n)]).sum::<f64>() / n as f64;
        if mean * observed.signum() <= 0.0 {
            contrary += 1;
        }
    }
    Ok((2.0 * contrary as f64 / n_samples as f64).min(1.0))
}
