use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use evpirank_core::baselines::random_rank_metrics;
use evpirank_core::corpus::{
    build_triples, read_triples, split_by_post, write_triples, Diagnostics, Dump, RhetoricalFilter, TripleRecord,
};
use evpirank_core::embeddings::EmbeddingTable;
use evpirank_core::eval::{
    bootstrap_test, build_labelsets, cohen_kappa, evaluate_posts, format_table, read_annotations, Annotation, EvalMode,
    LabelSet, Metric, MetricReport, NamedReport,
};
use evpirank_core::gradsuite::{run_suite, SuiteConfig};
use evpirank_core::model::{prepare_all, read_rankings, write_rankings, PreparedSet, RankedList, Ranker};
use evpirank_core::neural::Checkpoint;
use evpirank_core::registry::{fit, AnyModel, ModelKind};
use evpirank_core::retrieval::{generate_all, read_candidates, write_candidates, CandidateSet};
use evpirank_core::rng::SeedTree;
use evpirank_core::synth::{self, SynthConfig};

use crate::{create, finish, open, usage, CmdResult, Failure, GlobalArgs};

fn write_json_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> CmdResult {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn load_embeddings(path: &Path) -> Result<EmbeddingTable, Failure> {
    let table = EmbeddingTable::load(open(path)?).with_context(|| format!("embeddings `{}`", path.display()))?;
    log::info!("loaded {} word vectors of dimension {}", table.len(), table.dim());
    Ok(table)
}

fn load_candidates(path: &Path) -> Result<Vec<CandidateSet>, Failure> {
    Ok(read_candidates(open(path)?).with_context(|| format!("candidates `{}`", path.display()))?)
}

fn load_rankings(path: &Path) -> Result<Vec<RankedList>, Failure> {
    Ok(read_rankings(open(path)?).with_context(|| format!("rankings `{}`", path.display()))?)
}

fn load_annotations(path: &Path) -> Result<Vec<Annotation>, Failure> {
    Ok(read_annotations(open(path)?).with_context(|| format!("annotations `{}`", path.display()))?)
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long, value_name = "FILE")]
    posts: PathBuf,
    #[arg(long, value_name = "FILE")]
    comments: PathBuf,
    /// Post edit history.
    #[arg(long, value_name = "FILE")]
    history: PathBuf,
    /// Word vectors for choosing between edit and comment answers. Without
    /// them every such tie goes to the edit.
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    /// Rhetorical prefixes, one per line, replacing the defaults.
    #[arg(long, value_name = "FILE")]
    rhetorical: Option<PathBuf>,
    /// Output triples (JSONL).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

pub fn ingest(g: &GlobalArgs, a: &IngestArgs) -> CmdResult {
    g.config()?;
    let (posts, comments, history) = (open(&a.posts)?, open(&a.comments)?, open(&a.history)?);
    let table = match &a.embeddings {
        Some(p) => load_embeddings(p)?,
        None => {
            log::warn!("no embeddings given; edit and comment answers tie and the edit wins");
            EmbeddingTable::new(1)?
        }
    };
    let filter = match &a.rhetorical {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read `{}`: {e}", p.display())))?;
            RhetoricalFilter::new(text.lines().map(str::trim).filter(|l| !l.is_empty()))
        }
        None => RhetoricalFilter::default(),
    };
    let mut diag = Diagnostics::default();
    let dump = Dump::read(posts, comments, history, &mut diag)?;
    let triples = build_triples(&dump, &filter, &table, &mut diag)?;
    let records: Vec<TripleRecord> = triples.iter().map(TripleRecord::from).collect();
    let mut out = create(&a.out)?;
    write_triples(&records, &mut out)?;
    finish(out)?;
    log::info!("wrote {} triples to {}", records.len(), a.out.display());
    eprintln!("{}", serde_json::to_string(&diag)?);
    Ok(())
}

#[derive(Args, Debug)]
pub struct CandidatesArgs {
    #[arg(long, value_name = "FILE")]
    triples: PathBuf,
    /// Output candidate sets (JSONL).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Candidates per post; overrides the `k` config key.
    #[arg(long)]
    k: Option<usize>,
}

pub fn candidates(g: &GlobalArgs, a: &CandidatesArgs) -> CmdResult {
    let cfg = g.config()?;
    let k = a.k.unwrap_or(cfg.k);
    if k == 0 {
        return Err(usage("--k must be positive"));
    }
    let triples = read_triples(open(&a.triples)?).with_context(|| format!("triples `{}`", a.triples.display()))?;
    let sets = generate_all(&triples, k)?;
    let mut out = create(&a.out)?;
    write_candidates(&sets, &mut out)?;
    finish(out)?;
    log::info!("wrote {} candidate sets to {}", sets.len(), a.out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    candidates: PathBuf,
    #[arg(long, value_name = "FILE")]
    embeddings: PathBuf,
    /// One of random, ngrams, cqa, neural-pq, neural-pa, neural-pqa, evpi.
    #[arg(long)]
    model: String,
    /// Output checkpoint.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Per-epoch training log (JSONL); defaults to `<out>.log.jsonl`.
    #[arg(long, value_name = "FILE")]
    log: Option<PathBuf>,
    /// Separate tune candidates. Without it the input is split by post id.
    #[arg(long, value_name = "FILE", conflicts_with = "tune_on_train")]
    tune: Option<PathBuf>,
    /// Train on every input set and select epochs on the same sets.
    #[arg(long)]
    tune_on_train: bool,
}

pub fn train(g: &GlobalArgs, a: &TrainArgs) -> CmdResult {
    let cfg = g.config()?;
    let kind: ModelKind = a.model.parse().map_err(usage)?;
    let sets = load_candidates(&a.candidates)?;
    let tune_sets = a.tune.as_deref().map(load_candidates).transpose()?;
    let table = load_embeddings(&a.embeddings)?;

    let (train_sets, tune_sets) = match tune_sets {
        Some(tune) => (sets, tune),
        None if a.tune_on_train => (sets.clone(), sets),
        None => {
            let split = split_by_post(sets, |s| s.post_id.as_str());
            let mut train = split.train;
            train.extend(split.test);
            train.sort_by(|x, y| x.post_id.cmp(&y.post_id));
            if split.tune.is_empty() {
                log::warn!("no posts fall in the tune bucket; selecting epochs on the training sets");
                (train.clone(), train)
            } else {
                log::info!("split by post id: {} train, {} tune", train.len(), split.tune.len());
                (train, split.tune)
            }
        }
    };
    if train_sets.is_empty() {
        return Err(Failure::Runtime(anyhow!("no training sets")));
    }
    let train_prepared = prepare_all(&table, &train_sets)?;
    let tune_prepared = prepare_all(&table, &tune_sets)?;
    let fitted = fit(
        kind,
        &cfg,
        &table,
        &train_prepared,
        &tune_prepared,
        &SeedTree::new(cfg.seed),
    )
    .with_context(|| format!("training {kind}"))?;
    log::info!("best epoch {}", fitted.best_epoch);

    let mut out = create(&a.out)?;
    fitted.model.to_checkpoint().write(&mut out)?;
    finish(out)?;
    let log_path = a
        .log
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.log.jsonl", a.out.display())));
    let mut log_out = create(&log_path)?;
    for record in &fitted.log {
        write_json_line(&mut log_out, record)?;
    }
    finish(log_out)?;
    log::info!("wrote checkpoint {} and log {}", a.out.display(), log_path.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct RankArgs {
    #[arg(long, value_name = "FILE")]
    candidates: PathBuf,
    #[arg(long, value_name = "FILE")]
    embeddings: PathBuf,
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    /// Output rankings (JSONL).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

pub fn rank(g: &GlobalArgs, a: &RankArgs) -> CmdResult {
    g.config()?;
    let ck =
        Checkpoint::read(open(&a.checkpoint)?).with_context(|| format!("checkpoint `{}`", a.checkpoint.display()))?;
    let model = AnyModel::from_checkpoint(&ck)?;
    let sets = load_candidates(&a.candidates)?;
    let table = load_embeddings(&a.embeddings)?;
    let prepared: Vec<PreparedSet> = prepare_all(&table, &sets)?;
    let lists: Vec<RankedList> = prepared
        .par_iter()
        .map(|s| model.rank(&table, s))
        .collect::<evpirank_core::Result<_>>()?;
    let mut out = create(&a.out)?;
    write_rankings(&lists, &mut out)?;
    finish(out)?;
    log::info!("ranked {} posts with {}", lists.len(), model.name());
    Ok(())
}

/// Label sets for a mode; annotation modes need an annotations file.
fn labels_for(
    mode: EvalMode,
    sets: &[CandidateSet],
    annotations: Option<&[Annotation]>,
) -> Result<Vec<LabelSet>, Failure> {
    let anns: &[Annotation] = match (mode, annotations) {
        (EvalMode::Original, _) => &[],
        (_, Some(a)) => a,
        (_, None) => return Err(usage(format!("mode `{mode}` needs --annotations"))),
    };
    let labels = build_labelsets(anns, sets, mode)?;
    if labels.dropped > 0 {
        log::warn!(
            "{mode}: {} posts have no relevant candidates and are skipped",
            labels.dropped
        );
    }
    Ok(labels.labels)
}

fn parse_modes(names: &[String]) -> Result<Vec<EvalMode>, Failure> {
    if names.iter().any(|n| n == "all") {
        return Ok(EvalMode::ALL.to_vec());
    }
    names.iter().map(|n| n.parse().map_err(usage)).collect()
}

fn model_name(lists: &[RankedList], path: &Path) -> String {
    lists.first().map(|l| l.model.clone()).unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    })
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Rankings files, one per model.
    #[arg(long, value_name = "FILE", num_args = 1.., required = true)]
    rankings: Vec<PathBuf>,
    #[arg(long, value_name = "FILE")]
    candidates: PathBuf,
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    /// Label modes: best_union, valid_intersection, original,
    /// exclude_original, exclude_original_best, or `all`.
    #[arg(long = "mode", value_name = "MODE", default_value = "original", num_args = 1..)]
    modes: Vec<String>,
    /// Also report the expected metrics of a uniformly random ranker.
    #[arg(long)]
    random: bool,
    /// Output reports (JSONL, one per model and mode).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

pub fn evaluate(g: &GlobalArgs, a: &EvaluateArgs) -> CmdResult {
    let cfg = g.config()?;
    let modes = parse_modes(&a.modes)?;
    let sets = load_candidates(&a.candidates)?;
    let annotations = a.annotations.as_deref().map(load_annotations).transpose()?;
    let runs: Vec<(String, Vec<RankedList>)> = a
        .rankings
        .iter()
        .map(|p| load_rankings(p).map(|l| (model_name(&l, p), l)))
        .collect::<Result<_, _>>()?;
    let seeds = SeedTree::new(cfg.seed);
    let mut reports = Vec::new();
    for &mode in &modes {
        let labels = labels_for(mode, &sets, annotations.as_deref())?;
        if a.random {
            let report = random_rank_metrics(
                &labels,
                cfg.n_perm,
                &mut seeds.stream(&format!("evaluate/random/{mode}")),
            )?;
            reports.push(NamedReport {
                model: "random-expected".into(),
                mode: mode.to_string(),
                report,
            });
        }
        for (name, lists) in &runs {
            let posts = evaluate_posts(lists, &labels)?;
            reports.push(NamedReport {
                model: name.clone(),
                mode: mode.to_string(),
                report: MetricReport::from_posts(&posts),
            });
        }
    }
    if let Some(path) = &a.out {
        let mut out = create(path)?;
        for r in &reports {
            write_json_line(&mut out, r)?;
        }
        finish(out)?;
    }
    print!("{}", format_table(&reports));
    Ok(())
}

#[derive(Args, Debug)]
pub struct SignificanceArgs {
    /// Rankings of the first model.
    #[arg(long, value_name = "FILE")]
    a: PathBuf,
    /// Rankings of the second model.
    #[arg(long, value_name = "FILE")]
    b: PathBuf,
    #[arg(long, value_name = "FILE")]
    candidates: PathBuf,
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    #[arg(long, default_value = "original")]
    mode: String,
    /// p_at_1, p_at_3, p_at_5 or map.
    #[arg(long, default_value = "map")]
    metric: String,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SignificanceReport {
    model_a: String,
    model_b: String,
    mode: String,
    metric: String,
    n_posts: usize,
    mean_a: f64,
    mean_b: f64,
    samples: usize,
    p_value: f64,
}

pub fn significance(g: &GlobalArgs, a: &SignificanceArgs) -> CmdResult {
    let cfg = g.config()?;
    let mode: EvalMode = a.mode.parse().map_err(usage)?;
    let metric: Metric = a.metric.parse().map_err(usage)?;
    let sets = load_candidates(&a.candidates)?;
    let annotations = a.annotations.as_deref().map(load_annotations).transpose()?;
    let labels = labels_for(mode, &sets, annotations.as_deref())?;
    let (ra, rb) = (load_rankings(&a.a)?, load_rankings(&a.b)?);
    let score = |lists: &[RankedList]| -> Result<Vec<f64>, Failure> {
        Ok(evaluate_posts(lists, &labels)?.iter().map(|p| p.get(metric)).collect())
    };
    let (xa, xb) = (score(&ra)?, score(&rb)?);
    let mut rng = SeedTree::new(cfg.seed).stream("significance");
    let p_value = bootstrap_test(&xa, &xb, cfg.bootstrap_samples, &mut rng)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let report = SignificanceReport {
        model_a: model_name(&ra, &a.a),
        model_b: model_name(&rb, &a.b),
        mode: mode.to_string(),
        metric: a.metric.clone(),
        n_posts: xa.len(),
        mean_a: mean(&xa),
        mean_b: mean(&xb),
        samples: cfg.bootstrap_samples,
        p_value,
    };
    let line = serde_json::to_string(&report)?;
    if let Some(path) = &a.out {
        let mut out = create(path)?;
        writeln!(out, "{line}")?;
        finish(out)?;
    }
    println!("{line}");
    Ok(())
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Random parameter draws per component.
    #[arg(long, default_value_t = 10)]
    draws: usize,
    /// Coordinates probed per draw.
    #[arg(long, default_value_t = 40)]
    probes: usize,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

pub fn gradcheck(g: &GlobalArgs, a: &GradcheckArgs) -> CmdResult {
    let cfg = g.config()?;
    if a.draws == 0 || a.probes == 0 {
        return Err(usage("--draws and --probes must be positive"));
    }
    let reports = run_suite(&SuiteConfig {
        seed: cfg.seed,
        draws: a.draws,
        probes: a.probes,
    })?;
    let mut lines = Vec::new();
    for r in &reports {
        serde_json::to_writer(&mut lines, r)?;
        lines.push(b'\n');
    }
    if let Some(path) = &a.out {
        let mut out = create(path)?;
        out.write_all(&lines)?;
        finish(out)?;
    }
    std::io::stdout().write_all(&lines)?;
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.component.as_str())
        .collect();
    if failed.is_empty() {
        log::info!("all {} gradient checks passed", reports.len());
        Ok(())
    } else {
        Err(Failure::Runtime(anyhow!(
            "gradient check failed for: {}",
            failed.join(", ")
        )))
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Directory for posts.jsonl, comments.jsonl, history.jsonl and vectors.txt.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 50)]
    posts: usize,
    #[arg(long, default_value_t = 5)]
    families: usize,
    #[arg(long, default_value_t = 10)]
    attributes: usize,
    /// Word-vector dimension.
    #[arg(long, default_value_t = 50)]
    dim: usize,
}

pub fn synth(g: &GlobalArgs, a: &SynthArgs) -> CmdResult {
    let cfg = g.config()?;
    if a.families == 0 || a.attributes == 0 || a.dim == 0 {
        return Err(usage("--families, --attributes and --dim must be positive"));
    }
    let corpus = synth::generate(&SynthConfig {
        posts: a.posts,
        families: a.families,
        attributes: a.attributes,
        dim: a.dim,
        seed: cfg.seed,
    });
    let dir = &a.out_dir;
    let mut w = create(&dir.join("posts.jsonl"))?;
    synth::write_jsonl(&corpus.dump.posts, &mut w)?;
    finish(w)?;
    let mut w = create(&dir.join("comments.jsonl"))?;
    synth::write_jsonl(&corpus.dump.comments, &mut w)?;
    finish(w)?;
    let mut w = create(&dir.join("history.jsonl"))?;
    synth::write_jsonl(&corpus.dump.edits, &mut w)?;
    finish(w)?;
    let mut w = create(&dir.join("vectors.txt"))?;
    corpus.embeddings.write(&mut w)?;
    finish(w)?;
    log::info!("wrote a {}-post synthetic dump to {}", a.posts, dir.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct AgreementArgs {
    #[arg(long, value_name = "FILE")]
    annotations: PathBuf,
}

#[derive(Serialize)]
struct AgreementReport {
    n_posts: usize,
    kappa_best: f64,
    /// Posts by how many of the two annotators' valid picks overlap.
    valid_overlap_histogram: BTreeMap<usize, usize>,
}

pub fn agreement(g: &GlobalArgs, a: &AgreementArgs) -> CmdResult {
    g.config()?;
    let anns = load_annotations(&a.annotations)?;
    let mut by_post: BTreeMap<&str, Vec<&Annotation>> = BTreeMap::new();
    for ann in &anns {
        by_post.entry(ann.post_id.as_str()).or_default().push(ann);
    }
    let (mut first, mut second) = (Vec::new(), Vec::new());
    let mut histogram = BTreeMap::new();
    for (post, mut list) in by_post {
        if list.len() != 2 {
            return Err(Failure::Runtime(anyhow!(
                "post `{post}` has {} annotations, expected 2",
                list.len()
            )));
        }
        list.sort_by(|x, y| x.annotator_id.cmp(&y.annotator_id));
        first.push(list[0].best);
        second.push(list[1].best);
        let overlap = list[0].valid.iter().filter(|v| list[1].valid.contains(v)).count();
        *histogram.entry(overlap).or_insert(0) += 1;
    }
    let report = AgreementReport {
        n_posts: first.len(),
        kappa_best: cohen_kappa(&first, &second)?,
        valid_overlap_histogram: histogram,
    };
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}
