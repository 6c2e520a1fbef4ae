//! Extraction of (post, question, answer) triples from a forum dump.
//!
//! The dump is three JSONL files: posts (initial versions), comments and
//! post-history edits. For each post the earliest question comment is taken,
//! rhetorical questions are filtered out, and the answer is either the closest
//! following edit that adds enough text or the author's first reply comment.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::embeddings::{avg_vector, cos_sim, EmbeddingTable};
use crate::error::{Error, Result};
use crate::hash::fnv1a64;
use crate::text::{tokenize, whitespace_tokens};

/// Edits must add at least this many whitespace tokens to count as an answer.
pub const MIN_EDIT_TOKENS: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostRecord {
    pub post_id: String,
    pub author_id: String,
    pub title: String,
    pub body: String,
    pub created_at: i64,
}

impl PostRecord {
    /// Title and body joined; this is the text retrieval and the models see.
    pub fn full_text(&self) -> String {
        join_title_body(&self.title, &self.body)
    }
}

pub fn join_title_body(title: &str, body: &str) -> String {
    match (title.is_empty(), body.is_empty()) {
        (true, _) => body.to_owned(),
        (false, true) => title.to_owned(),
        (false, false) => format!("{title}\n{body}"),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommentRecord {
    pub comment_id: String,
    pub post_id: String,
    pub author_id: String,
    pub text: String,
    pub created_at: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRecord {
    pub edit_id: String,
    pub post_id: String,
    pub author_id: String,
    pub new_body: String,
    pub created_at: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerSource {
    Edit,
    Comment,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Triple {
    pub post: PostRecord,
    pub question: String,
    pub question_time: i64,
    pub answer: String,
    pub answer_source: AnswerSource,
}

/// One line of `triples.jsonl`. Field order is the serialized order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleRecord {
    pub post_id: String,
    pub post_title: String,
    pub post_body: String,
    pub question: String,
    pub question_time: i64,
    pub answer: String,
    pub answer_source: AnswerSource,
}

impl TripleRecord {
    pub fn post_text(&self) -> String {
        join_title_body(&self.post_title, &self.post_body)
    }
}

impl From<&Triple> for TripleRecord {
    fn from(t: &Triple) -> Self {
        TripleRecord {
            post_id: t.post.post_id.clone(),
            post_title: t.post.title.clone(),
            post_body: t.post.body.clone(),
            question: t.question.clone(),
            question_time: t.question_time,
            answer: t.answer.clone(),
            answer_source: t.answer_source,
        }
    }
}

/// Prefix rules for comment questions that suggest a solution instead of
/// asking for missing information.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RhetoricalFilter {
    prefixes: Vec<String>,
}

pub const DEFAULT_RHETORICAL_PREFIXES: [&str; 7] = [
    "have you considered",
    "have you tried",
    "why don't you",
    "why not",
    "can't you just",
    "have you looked at",
    "do you mind",
];

impl Default for RhetoricalFilter {
    fn default() -> Self {
        Self::new(DEFAULT_RHETORICAL_PREFIXES)
    }
}

impl RhetoricalFilter {
    pub fn new<I, S>(prefixes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        RhetoricalFilter {
            prefixes: prefixes.into_iter().map(|p| p.as_ref().to_lowercase()).collect(),
        }
    }

    pub fn is_rhetorical(&self, question: &str) -> bool {
        let q = question.trim_start().to_lowercase();
        self.prefixes.iter().any(|p| q.starts_with(p.as_str()))
    }
}

/// Earliest comment (after the post was created) that contains a '?',
/// truncated just after its first '?'.
pub fn extract_question(post: &PostRecord, comments: &[CommentRecord]) -> Option<(String, i64)> {
    comments
        .iter()
        .filter(|c| c.created_at > post.created_at)
        .filter_map(|c| c.text.find('?').map(|pos| (c, pos)))
        .min_by(|(a, _), (b, _)| {
            a.created_at
                .cmp(&b.created_at)
                .then_with(|| a.comment_id.cmp(&b.comment_id))
        })
        .map(|(c, pos)| (c.text[..=pos].trim().to_owned(), c.created_at))
}

/// Tokens of `new` that do not occur anywhere in `old`, in their order in `new`.
pub fn added_tokens<'a>(old: &str, new: &'a str) -> Vec<&'a str> {
    let before: HashSet<&str> = whitespace_tokens(old).into_iter().collect();
    whitespace_tokens(new)
        .into_iter()
        .filter(|t| !before.contains(t))
        .collect()
}

/// Added text of the earliest edit after `question_time` that adds at least
/// [`MIN_EDIT_TOKENS`] tokens relative to the version it replaced.
pub fn extract_answer_edit(post: &PostRecord, edits: &[EditRecord], question_time: i64) -> Option<String> {
    let mut ordered: Vec<&EditRecord> = edits.iter().collect();
    ordered.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.edit_id.cmp(&b.edit_id)));
    let mut previous = post.body.as_str();
    for edit in ordered {
        let added = added_tokens(previous, &edit.new_body);
        if edit.created_at > question_time && added.len() >= MIN_EDIT_TOKENS {
            return Some(added.join(" "));
        }
        previous = &edit.new_body;
    }
    None
}

/// Text of the author's first comment after `question_time`.
pub fn extract_answer_comment(post: &PostRecord, comments: &[CommentRecord], question_time: i64) -> Option<String> {
    comments
        .iter()
        .filter(|c| c.created_at > question_time && c.author_id == post.author_id)
        .filter(|c| !c.text.trim().is_empty())
        .min_by(|a, b| {
            a.created_at
                .cmp(&b.created_at)
                .then_with(|| a.comment_id.cmp(&b.comment_id))
        })
        .map(|c| c.text.trim().to_owned())
}

/// Chooses between the two answer channels by similarity to the question.
/// Equal similarity goes to the edit.
pub fn select_answer(
    edit_answer: Option<&str>,
    comment_answer: Option<&str>,
    question: &str,
    table: &EmbeddingTable,
) -> Result<(String, AnswerSource)> {
    match (edit_answer, comment_answer) {
        (None, None) => Err(Error::InvalidInput(
            "select_answer needs at least one candidate answer".into(),
        )),
        (Some(e), None) => Ok((e.to_owned(), AnswerSource::Edit)),
        (None, Some(c)) => Ok((c.to_owned(), AnswerSource::Comment)),
        (Some(e), Some(c)) => {
            let q = avg_vector(table, &tokenize(question));
            let se = cos_sim(&q.values, &avg_vector(table, &tokenize(e)).values)?;
            let sc = cos_sim(&q.values, &avg_vector(table, &tokenize(c)).values)?;
            if se >= sc {
                Ok((e.to_owned(), AnswerSource::Edit))
            } else {
                Ok((c.to_owned(), AnswerSource::Comment))
            }
        }
    }
}

/// Counts of records and posts that did not make it into the output.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub malformed_posts: usize,
    pub malformed_comments: usize,
    pub malformed_edits: usize,
    pub duplicate_posts: usize,
    pub orphan_comments: usize,
    pub orphan_edits: usize,
    pub no_question: usize,
    pub rhetorical: usize,
    pub no_answer: usize,
    pub emitted: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dump {
    pub posts: Vec<PostRecord>,
    pub comments: Vec<CommentRecord>,
    pub edits: Vec<EditRecord>,
}

fn read_records<T, R>(reader: R, malformed: &mut usize) -> Result<Vec<T>>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
{
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(rec) => out.push(rec),
            Err(e) => {
                log::warn!("skipping malformed record on line {}: {e}", idx + 1);
                *malformed += 1;
            }
        }
    }
    Ok(out)
}

impl Dump {
    /// Parses the three JSONL streams. Lines that fail to parse, or that
    /// violate record invariants, are skipped and counted.
    pub fn read<P: BufRead, C: BufRead, H: BufRead>(
        posts: P,
        comments: C,
        history: H,
        diag: &mut Diagnostics,
    ) -> Result<Self> {
        let mut posts: Vec<PostRecord> = read_records(posts, &mut diag.malformed_posts)?;
        let before = posts.len();
        posts.retain(|p| !p.post_id.is_empty() && p.created_at > 0);
        diag.malformed_posts += before - posts.len();
        let mut comments: Vec<CommentRecord> = read_records(comments, &mut diag.malformed_comments)?;
        let before = comments.len();
        comments.retain(|c| c.created_at > 0);
        diag.malformed_comments += before - comments.len();
        let mut edits: Vec<EditRecord> = read_records(history, &mut diag.malformed_edits)?;
        let before = edits.len();
        edits.retain(|e| e.created_at > 0);
        diag.malformed_edits += before - edits.len();
        Ok(Dump { posts, comments, edits })
    }
}

/// Runs the full extraction. Output is ordered by post id and contains at
/// most one triple per post.
pub fn build_triples(
    dump: &Dump,
    filter: &RhetoricalFilter,
    table: &EmbeddingTable,
    diag: &mut Diagnostics,
) -> Result<Vec<Triple>> {
    let mut posts: BTreeMap<&str, &PostRecord> = BTreeMap::new();
    for p in &dump.posts {
        if posts.insert(p.post_id.as_str(), p).is_some() {
            diag.duplicate_posts += 1;
        }
    }
    // Drop every copy of a duplicated id: we cannot tell which one is real.
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for p in &dump.posts {
        *seen.entry(p.post_id.as_str()).or_default() += 1;
    }
    posts.retain(|id, _| seen[id] == 1);

    let mut comments: HashMap<&str, Vec<CommentRecord>> = HashMap::new();
    for c in &dump.comments {
        match posts.get(c.post_id.as_str()) {
            Some(p) if c.created_at >= p.created_at => comments.entry(p.post_id.as_str()).or_default().push(c.clone()),
            Some(_) => diag.malformed_comments += 1,
            None => diag.orphan_comments += 1,
        }
    }
    let mut edits: HashMap<&str, Vec<EditRecord>> = HashMap::new();
    for e in &dump.edits {
        match posts.get(e.post_id.as_str()) {
            Some(p) if e.created_at > p.created_at => edits.entry(p.post_id.as_str()).or_default().push(e.clone()),
            Some(_) => diag.malformed_edits += 1,
            None => diag.orphan_edits += 1,
        }
    }

    let mut out = Vec::new();
    for (id, post) in posts {
        let mut post_comments = comments.remove(id).unwrap_or_default();
        post_comments.sort_by(|a, b| {
            a.created_at
                .cmp(&b.created_at)
                .then_with(|| a.comment_id.cmp(&b.comment_id))
        });
        let post_edits = edits.remove(id).unwrap_or_default();

        let Some((question, question_time)) = extract_question(post, &post_comments) else {
            diag.no_question += 1;
            continue;
        };
        if filter.is_rhetorical(&question) {
            diag.rhetorical += 1;
            continue;
        }
        let edit_answer = extract_answer_edit(post, &post_edits, question_time);
        let comment_answer = extract_answer_comment(post, &post_comments, question_time);
        if edit_answer.is_none() && comment_answer.is_none() {
            diag.no_answer += 1;
            continue;
        }
        let (answer, answer_source) =
            select_answer(edit_answer.as_deref(), comment_answer.as_deref(), &question, table)?;
        out.push(Triple {
            post: post.clone(),
            question,
            question_time,
            answer,
            answer_source,
        });
    }
    diag.emitted = out.len();
    Ok(out)
}

pub fn write_triples<W: Write>(triples: &[TripleRecord], mut w: W) -> Result<()> {
    for t in triples {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads `triples.jsonl`. Unlike dump ingestion this is strict: a bad line is
/// an error naming the line.
pub fn read_triples<R: BufRead>(reader: R) -> Result<Vec<TripleRecord>> {
    read_jsonl(reader)
}

pub(crate) fn read_jsonl<T, R>(reader: R) -> Result<Vec<T>>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
{
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(idx + 1, e.to_string()))?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Tune,
    Test,
}

/// Bucket of a post: FNV-1a 64 of the id bytes mod 10; 0-7 train, 8 tune, 9 test.
pub fn split_of(post_id: &str) -> Split {
    match fnv1a64(post_id.as_bytes()) % 10 {
        0..=7 => Split::Train,
        8 => Split::Tune,
        _ => Split::Test,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit<T> {
    pub train: Vec<T>,
    pub tune: Vec<T>,
    pub test: Vec<T>,
}

pub fn split_by_post<T>(items: Vec<T>, post_id: impl Fn(&T) -> &str) -> DatasetSplit<T> {
    let mut split = DatasetSplit {
        train: Vec::new(),
        tune: Vec::new(),
        test: Vec::new(),
    };
    for item in items {
        match split_of(post_id(&item)) {
            Split::Train => split.train.push(item),
            Split::Tune => split.tune.push(item),
            Split::Test => split.test.push(item),
        }
    }
    split
}

pub fn split_dataset(triples: Vec<Triple>) -> DatasetSplit<Triple> {
    split_by_post(triples, |t| t.post.post_id.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(id: &str, body: &str, t: i64) -> PostRecord {
        PostRecord {
            post_id: id.into(),
            author_id: "terry".into(),
            title: "Title".into(),
            body: body.into(),
            created_at: t,
        }
    }

    fn comment(id: &str, author: &str, text: &str, t: i64) -> CommentRecord {
        CommentRecord {
            comment_id: id.into(),
            post_id: "p".into(),
            author_id: author.into(),
            text: text.into(),
            created_at: t,
        }
    }

    fn edit(id: &str, body: &str, t: i64) -> EditRecord {
        EditRecord {
            edit_id: id.into(),
            post_id: "p".into(),
            author_id: "terry".into(),
            new_body: body.into(),
            created_at: t,
        }
    }

    #[test]
    fn question_is_truncated_at_first_mark() {
        let p = post("p", "body", 1);
        let cs = [comment(
            "c1",
            "parker",
            "What version of Ubuntu do you have? Also check logs.",
            5,
        )];
        assert_eq!(
            extract_question(&p, &cs),
            Some(("What version of Ubuntu do you have?".to_owned(), 5))
        );
    }

    #[test]
    fn question_absent_without_mark() {
        let p = post("p", "body", 1);
        let cs = [comment("c1", "parker", "Nice post.", 5), comment("c2", "x", "ok", 6)];
        assert_eq!(extract_question(&p, &cs), None);
    }

    #[test]
    fn earliest_question_wins() {
        let p = post("p", "body", 1);
        let cs = [
            comment("c2", "b", "later one?", 9),
            comment("c1", "a", "earlier one?", 5),
        ];
        assert_eq!(extract_question(&p, &cs).unwrap().1, 5);
    }

    #[test]
    fn rhetorical_prefixes() {
        let f = RhetoricalFilter::default();
        assert!(f.is_rhetorical("have you considered installing X?"));
        assert!(!f.is_rhetorical("what version of Ubuntu do you have?"));
        assert!(f.is_rhetorical("why don't you use the package manager?"));
        assert!(f.is_rhetorical("Have You Tried rebooting?"));
    }

    #[test]
    fn short_edit_is_ignored() {
        let p = post("p", "my wifi broke", 1);
        let es = [edit("e1", "my wifi broke ubuntu 14.04 lts intel", 10)];
        assert_eq!(extract_answer_edit(&p, &es, 5), None);
    }

    #[test]
    fn closest_following_edit_wins() {
        let p = post("p", "base", 1);
        let es = [
            edit("e2", "base a b c d e f g1 h1 i1 j1 k1 l1 m1 n1", 20),
            edit("e1", "base a b c d e f", 10),
        ];
        assert_eq!(extract_answer_edit(&p, &es, 5).as_deref(), Some("a b c d e f"));
    }

    #[test]
    fn edit_before_question_is_ignored() {
        let p = post("p", "base", 1);
        let es = [edit("e1", "base a b c d e f", 3)];
        assert_eq!(extract_answer_edit(&p, &es, 5), None);
    }

    #[test]
    fn diff_is_against_previous_version() {
        let p = post("p", "base", 1);
        let es = [edit("e1", "base a b c", 3), edit("e2", "base a b c d e f g", 10)];
        // only d e f g are new relative to e1
        assert_eq!(extract_answer_edit(&p, &es, 5), None);
    }

    #[test]
    fn author_comment_answer() {
        let p = post("p", "b", 1);
        let cs = [
            comment("c1", "parker", "which one?", 5),
            comment("c2", "stranger", "me too", 8),
            comment("c3", "terry", "the second one", 12),
        ];
        assert_eq!(extract_answer_comment(&p, &cs, 5).as_deref(), Some("the second one"));
        let cs2 = [comment("c1", "terry", "first", 9), comment("c2", "terry", "second", 14)];
        assert_eq!(extract_answer_comment(&p, &cs2, 5).as_deref(), Some("first"));
        let cs3 = [comment("c1", "terry", "before", 4)];
        assert_eq!(extract_answer_comment(&p, &cs3, 5), None);
    }

    fn sim_table() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(2).unwrap();
        t.insert("version", &[1.0, 0.0]).unwrap();
        t.insert("ubuntu", &[0.8, 0.6]).unwrap();
        t.insert("banana", &[0.3, 0.954]).unwrap();
        t
    }

    #[test]
    fn answer_selection() {
        let t = sim_table();
        assert_eq!(
            select_answer(Some("x"), None, "q?", &t).unwrap(),
            ("x".to_owned(), AnswerSource::Edit)
        );
        assert_eq!(
            select_answer(None, Some("y"), "q?", &t).unwrap().1,
            AnswerSource::Comment
        );
        // edit cos 0.8, comment cos 0.3
        let (a, s) = select_answer(Some("ubuntu"), Some("banana"), "version?", &t).unwrap();
        assert_eq!((a.as_str(), s), ("ubuntu", AnswerSource::Edit));
        let (_, s) = select_answer(Some("banana"), Some("ubuntu"), "version?", &t).unwrap();
        assert_eq!(s, AnswerSource::Comment);
        // equal similarity
        let (_, s) = select_answer(Some("ubuntu"), Some("ubuntu"), "version?", &t).unwrap();
        assert_eq!(s, AnswerSource::Edit);
        assert!(select_answer(None, None, "q?", &t).is_err());
    }

    #[test]
    fn all_rhetorical_yields_nothing() {
        let dump = Dump {
            posts: vec![post("p", "b", 1)],
            comments: vec![
                comment("c1", "parker", "have you tried rebooting?", 5),
                comment("c2", "terry", "yes I did and it still fails", 7),
            ],
            edits: vec![],
        };
        let mut d = Diagnostics::default();
        let t = EmbeddingTable::new(2).unwrap();
        let out = build_triples(&dump, &RhetoricalFilter::default(), &t, &mut d).unwrap();
        assert!(out.is_empty());
        assert_eq!(d.rhetorical, 1);
    }

    #[test]
    fn post_without_answer_is_skipped() {
        let dump = Dump {
            posts: vec![post("p", "b", 1)],
            comments: vec![comment("c1", "parker", "which version?", 5)],
            edits: vec![edit("e1", "b tiny", 9)],
        };
        let mut d = Diagnostics::default();
        let t = EmbeddingTable::new(2).unwrap();
        let out = build_triples(&dump, &RhetoricalFilter::default(), &t, &mut d).unwrap();
        assert!(out.is_empty());
        assert_eq!(d.no_answer, 1);
    }

    #[test]
    fn malformed_lines_are_counted() {
        let posts = "{\"post_id\":\"p\",\"author_id\":\"a\",\"title\":\"t\",\"body\":\"b\",\"created_at\":3}\n\
                     {\"post_id\":\"q\",\"author_id\":\"a\",\"title\":\"t\",\"body\":\"b\",\"created_at\":\"soon\"}\n\
                     not json\n";
        let mut d = Diagnostics::default();
        let dump = Dump::read(posts.as_bytes(), "".as_bytes(), "".as_bytes(), &mut d).unwrap();
        assert_eq!(dump.posts.len(), 1);
        assert_eq!(d.malformed_posts, 2);
    }

    #[test]
    fn split_is_partition_and_deterministic() {
        let ids: Vec<String> = (0..500).map(|i| format!("post-{i}")).collect();
        let a = split_by_post(ids.clone(), |s| s.as_str());
        let b = split_by_post(ids.clone(), |s| s.as_str());
        assert_eq!(a, b);
        let mut all: Vec<String> = a.train.iter().chain(&a.tune).chain(&a.test).cloned().collect();
        all.sort();
        let mut expect = ids;
        expect.sort();
        assert_eq!(all, expect);

        let one = split_by_post(vec!["only".to_owned()], |s| s.as_str());
        assert_eq!(one.train.len() + one.tune.len() + one.test.len(), 1);
    }
}
