//! TF-IDF index over posts and candidate-set generation.
//!
//! Scoring follows the classic practical formula:
//! `score(q, d) = Σ_{t ∈ q} sqrt(tf(t, d)) · idf(t)² / sqrt(|d|)` with
//! `idf(t) = 1 + ln(N / (df(t) + 1))`, summed over distinct query terms.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::TripleRecord;
use crate::error::{Error, Result};

pub use crate::text::tokenize;

pub const DEFAULT_K: usize = 10;
const INDEX_HEADER: &str = "EVPIRANK-IDX v1";

/// Inverted index. Documents are stored in ascending doc-id order, so a
/// document's position doubles as its tie-break rank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Index {
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    vocabulary: BTreeMap<String, u32>,
    /// Indexed by term id; each list sorted by doc position.
    postings: Vec<Vec<(u32, u32)>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hit {
    pub doc_id: String,
    pub score: f64,
    /// Set when the doc had zero score and only fills out the top-k.
    pub padded: bool,
}

impl Index {
    pub fn build<S: AsRef<str>>(docs: &[(S, S)]) -> Result<Self> {
        let mut sorted: Vec<(&str, &str)> = docs.iter().map(|(id, text)| (id.as_ref(), text.as_ref())).collect();
        sorted.sort_by(|a, b| a.0.cmp(b.0));
        for pair in sorted.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::DuplicateDoc(pair[0].0.to_owned()));
            }
        }

        let mut per_term: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut doc_ids = Vec::with_capacity(sorted.len());
        let mut doc_lengths = Vec::with_capacity(sorted.len());
        for (pos, (id, text)) in sorted.iter().enumerate() {
            let tokens = tokenize(text);
            doc_ids.push((*id).to_owned());
            doc_lengths.push(tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, count) in tf {
                per_term.entry(term).or_default().push((pos as u32, count));
            }
        }
        let mut vocabulary = BTreeMap::new();
        let mut postings = Vec::with_capacity(per_term.len());
        for (term_id, (term, list)) in per_term.into_iter().enumerate() {
            vocabulary.insert(term, term_id as u32);
            postings.push(list);
        }
        Ok(Index {
            doc_ids,
            doc_lengths,
            vocabulary,
            postings,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    fn position(&self, doc_id: &str) -> Option<usize> {
        self.doc_ids.binary_search_by(|d| d.as_str().cmp(doc_id)).ok()
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<u32> {
        self.position(doc_id).map(|p| self.doc_lengths[p])
    }

    /// Smoothed inverse document frequency of a term with the given df.
    pub fn idf(&self, df: usize) -> f64 {
        1.0 + (self.doc_count() as f64 / (df as f64 + 1.0)).ln()
    }

    fn query_terms<S: AsRef<str>>(&self, query: &[S]) -> Vec<u32> {
        let distinct: BTreeSet<&str> = query.iter().map(|t| t.as_ref()).collect();
        distinct
            .into_iter()
            .filter_map(|t| self.vocabulary.get(t).copied())
            .collect()
    }

    fn contribution(&self, term: u32, tf: u32, pos: usize) -> f64 {
        let idf = self.idf(self.postings[term as usize].len());
        f64::from(tf).sqrt() * idf * idf / f64::from(self.doc_lengths[pos]).sqrt()
    }

    pub fn score<S: AsRef<str>>(&self, query: &[S], doc_id: &str) -> Result<f64> {
        let pos = self
            .position(doc_id)
            .ok_or_else(|| Error::UnknownDoc(doc_id.to_owned()))?;
        let mut total = 0.0;
        for term in self.query_terms(query) {
            let list = &self.postings[term as usize];
            if let Ok(i) = list.binary_search_by_key(&(pos as u32), |&(d, _)| d) {
                total += self.contribution(term, list[i].1, pos);
            }
        }
        Ok(total)
    }

    /// The `k` best documents for a tokenized query, score-descending with
    /// ties broken by ascending doc id. When fewer than `k` documents match,
    /// the rest are filled with zero-score documents in doc-id order.
    pub fn top_k<S: AsRef<str>>(&self, query: &[S], k: usize) -> Vec<Hit> {
        let mut scores = vec![0.0f64; self.doc_count()];
        // Terms are visited in term-id order so each doc's sum has a fixed order.
        for term in self.query_terms(query) {
            for &(pos, tf) in &self.postings[term as usize] {
                scores[pos as usize] += self.contribution(term, tf, pos as usize);
            }
        }
        let mut ranked: Vec<usize> = (0..self.doc_count()).filter(|&p| scores[p] > 0.0).collect();
        ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        ranked.truncate(k);
        let mut hits: Vec<Hit> = ranked
            .iter()
            .map(|&p| Hit {
                doc_id: self.doc_ids[p].clone(),
                score: scores[p],
                padded: false,
            })
            .collect();
        if hits.len() < k {
            let need = k - hits.len();
            hits.extend(
                (0..self.doc_count())
                    .filter(|&p| scores[p] <= 0.0)
                    .take(need)
                    .map(|p| Hit {
                        doc_id: self.doc_ids[p].clone(),
                        score: 0.0,
                        padded: true,
                    }),
            );
        }
        hits
    }

    /// Writes the versioned text serialization:
    ///
    /// ```text
    /// EVPIRANK-IDX v1
    /// docs <N>
    /// <length>\t<json doc id>            (N lines, doc-id order)
    /// terms <V>
    /// <json term>\t<pos>:<tf> <pos>:<tf> (V lines, term order)
    /// ```
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{INDEX_HEADER}")?;
        writeln!(w, "docs {}", self.doc_count())?;
        for (id, len) in self.doc_ids.iter().zip(&self.doc_lengths) {
            writeln!(w, "{len}\t{}", serde_json::to_string(id)?)?;
        }
        writeln!(w, "terms {}", self.vocabulary.len())?;
        for (term, &tid) in &self.vocabulary {
            write!(w, "{}\t", serde_json::to_string(term)?)?;
            let list = &self.postings[tid as usize];
            for (i, (pos, tf)) in list.iter().enumerate() {
                if i > 0 {
                    w.write_all(b" ")?;
                }
                write!(w, "{pos}:{tf}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((n, Ok(l))) => Ok((n, l)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(Error::parse(0, format!("unexpected end of index, expected {what}"))),
            }
        };
        let (n, header) = next("header")?;
        if header != INDEX_HEADER {
            return Err(Error::parse(n, format!("bad header `{header}`")));
        }
        let count = |n: usize, line: &str, key: &str| -> Result<usize> {
            line.strip_prefix(key)
                .and_then(|s| s.strip_prefix(' '))
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(n, format!("expected `{key} <count>`")))
        };
        let (n, line) = next("docs")?;
        let n_docs = count(n, &line, "docs")?;
        let mut doc_ids = Vec::with_capacity(n_docs);
        let mut doc_lengths = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            let (n, line) = next("doc line")?;
            let (len, id) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(n, "expected `<length>\\t<id>`"))?;
            doc_lengths.push(len.parse().map_err(|_| Error::parse(n, "bad doc length"))?);
            doc_ids.push(serde_json::from_str(id).map_err(|e| Error::parse(n, e.to_string()))?);
        }
        let (n, line) = next("terms")?;
        let n_terms = count(n, &line, "terms")?;
        let mut vocabulary = BTreeMap::new();
        let mut postings = Vec::with_capacity(n_terms);
        for tid in 0..n_terms {
            let (n, line) = next("term line")?;
            let (term, rest) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(n, "expected `<term>\\t<postings>`"))?;
            let term: String = serde_json::from_str(term).map_err(|e| Error::parse(n, e.to_string()))?;
            let mut list = Vec::new();
            for entry in rest.split(' ').filter(|s| !s.is_empty()) {
                let (pos, tf) = entry
                    .split_once(':')
                    .and_then(|(p, t)| Some((p.parse::<u32>().ok()?, t.parse::<u32>().ok()?)))
                    .ok_or_else(|| Error::parse(n, format!("bad posting `{entry}`")))?;
                if pos as usize >= n_docs {
                    return Err(Error::parse(n, format!("posting refers to doc {pos}")));
                }
                list.push((pos, tf));
            }
            if vocabulary.insert(term, tid as u32).is_some() {
                return Err(Error::parse(n, "duplicate term"));
            }
            postings.push(list);
        }
        Ok(Index {
            doc_ids,
            doc_lengths,
            vocabulary,
            postings,
        })
    }
}

/// A post plus the questions and answers of its most similar posts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSet {
    pub post_id: String,
    pub post_body: String,
    pub questions: Vec<String>,
    pub answers: Vec<String>,
    pub source_post_ids: Vec<String>,
    pub original_index: usize,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.questions.len();
        if n == 0 || self.answers.len() != n || self.source_post_ids.len() != n {
            return Err(Error::InvalidInput(format!(
                "candidate set `{}` has inconsistent lengths",
                self.post_id
            )));
        }
        if self.original_index >= n || self.source_post_ids[self.original_index] != self.post_id {
            return Err(Error::InvalidInput(format!(
                "candidate set `{}` has a bad original_index",
                self.post_id
            )));
        }
        Ok(())
    }
}

/// Index over the triples' post texts, keyed by post id.
pub fn index_triples(triples: &[TripleRecord]) -> Result<Index> {
    let docs: Vec<(String, String)> = triples.iter().map(|t| (t.post_id.clone(), t.post_text())).collect();
    Index::build(&docs)
}

/// Builds the candidate set for one post. The post itself is always kept at
/// position 0; if retrieval did not put it there it is moved to the front.
pub fn generate_candidates(
    index: &Index,
    triples_by_post: &BTreeMap<String, TripleRecord>,
    post_id: &str,
    k: usize,
) -> Result<CandidateSet> {
    let own = triples_by_post
        .get(post_id)
        .ok_or_else(|| Error::UnknownDoc(post_id.to_owned()))?;
    let post_text = own.post_text();
    let hits = index.top_k(&tokenize(&post_text), k);
    let mut ids: Vec<&str> = hits.iter().map(|h| h.doc_id.as_str()).collect();
    if ids.first() != Some(&post_id) {
        log::debug!("post `{post_id}` was not its own top hit; moving it to the front");
        ids.retain(|&d| d != post_id);
        ids.insert(0, post_id);
        ids.truncate(k.max(1));
    }
    let mut set = CandidateSet {
        post_id: post_id.to_owned(),
        post_body: post_text,
        questions: Vec::with_capacity(ids.len()),
        answers: Vec::with_capacity(ids.len()),
        source_post_ids: Vec::with_capacity(ids.len()),
        original_index: 0,
    };
    for id in ids {
        let t = triples_by_post
            .get(id)
            .ok_or_else(|| Error::UnknownDoc(id.to_owned()))?;
        set.questions.push(t.question.clone());
        set.answers.push(t.answer.clone());
        set.source_post_ids.push(id.to_owned());
    }
    Ok(set)
}

/// Candidate sets for every triple, ordered by post id.
pub fn generate_all(triples: &[TripleRecord], k: usize) -> Result<Vec<CandidateSet>> {
    let index = index_triples(triples)?;
    let by_post: BTreeMap<String, TripleRecord> = triples.iter().map(|t| (t.post_id.clone(), t.clone())).collect();
    if index.doc_count() < k {
        log::warn!(
            "corpus has {} posts, fewer than k = {k}; candidate sets will have {} entries",
            index.doc_count(),
            index.doc_count()
        );
    }
    by_post
        .keys()
        .map(|id| generate_candidates(&index, &by_post, id, k))
        .collect()
}

pub fn write_candidates<W: Write>(sets: &[CandidateSet], mut w: W) -> Result<()> {
    for s in sets {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_candidates<R: BufRead>(reader: R) -> Result<Vec<CandidateSet>> {
    let sets: Vec<CandidateSet> = crate::corpus::read_jsonl(reader)?;
    for (i, s) in sets.iter().enumerate() {
        s.validate().map_err(|e| Error::parse(i + 1, e.to_string()))?;
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct evaluation of the scoring formula by scanning every document.
    fn brute_score(docs: &[(&str, &str)], query: &str, doc_id: &str) -> f64 {
        let n = docs.len() as f64;
        let doc_tokens: Vec<Vec<String>> = docs.iter().map(|(_, t)| tokenize(t)).collect();
        let target = docs.iter().position(|(id, _)| *id == doc_id).unwrap();
        let mut q = tokenize(query);
        q.sort();
        q.dedup();
        let mut s = 0.0;
        for term in &q {
            let tf = doc_tokens[target].iter().filter(|t| *t == term).count();
            if tf == 0 {
                continue;
            }
            let df = doc_tokens.iter().filter(|d| d.contains(term)).count();
            let idf = 1.0 + (n / (df as f64 + 1.0)).ln();
            s += (tf as f64).sqrt() * idf * idf / (doc_tokens[target].len() as f64).sqrt();
        }
        s
    }

    #[test]
    fn hand_evaluated_single_doc() {
        let idx = Index::build(&[("d", "a b b")]).unwrap();
        let idf = 1.0 + (0.5f64).ln();
        let expected = (1.0 + 2.0f64.sqrt()) * idf * idf / 3.0f64.sqrt();
        let got = idx.score(&tokenize("a b b"), "d").unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        assert!((expected - 0.131_242_74).abs() < 1e-8);
    }

    #[test]
    fn no_overlap_scores_zero() {
        let idx = Index::build(&[("d", "alpha beta"), ("e", "gamma")]).unwrap();
        assert_eq!(idx.score(&["zeta"], "d").unwrap(), 0.0);
        assert!(matches!(idx.score(&["alpha"], "nope"), Err(Error::UnknownDoc(_))));
    }

    #[test]
    fn small_corpus_matches_brute_force() {
        let docs = [
            ("a", "wifi card not working on ubuntu"),
            ("b", "ubuntu ubuntu version upgrade"),
            ("c", "printer driver missing"),
        ];
        let idx = Index::build(&docs).unwrap();
        let query = "ubuntu wifi driver";
        let hits = idx.top_k(&tokenize(query), 3);
        let mut oracle: Vec<(f64, &str)> = docs
            .iter()
            .map(|(id, _)| (brute_score(&docs, query, id), *id))
            .collect();
        oracle.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(y.1)));
        for (hit, (s, id)) in hits.iter().zip(&oracle) {
            assert_eq!(hit.doc_id, *id);
            assert!((hit.score - s).abs() < 1e-12);
        }
    }

    #[test]
    fn index_shape() {
        let idx = Index::build(&[("1", "x"), ("2", "y"), ("3", "x")]).unwrap();
        assert_eq!(idx.doc_count(), 3);
        assert!(idx.vocabulary_size() <= 3);
        assert!(matches!(
            Index::build(&[("1", "x"), ("1", "y")]),
            Err(Error::DuplicateDoc(_))
        ));
        let empty = Index::build::<&str>(&[]).unwrap();
        assert_eq!(empty.doc_count(), 0);
        assert!(empty.top_k(&["x"], 10).is_empty());
    }

    #[test]
    fn top_k_ties_and_padding() {
        let idx = Index::build(&[("b", "same words"), ("a", "same words"), ("c", "other")]).unwrap();
        let hits = idx.top_k(&["same", "words"], 10);
        let ids: Vec<&str> = hits.iter().map(|h| h.doc_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(hits[0].score, hits[1].score);
        assert!(hits[2].padded && hits[2].score == 0.0);
        assert!(!hits[0].padded);
    }

    #[test]
    fn index_round_trip() {
        let idx = Index::build(&[
            ("p1", "Tab\tand \"quotes\" ünïcode"),
            ("p 2", "spaces in id"),
            ("p3", ""),
        ])
        .unwrap();
        let mut buf = Vec::new();
        idx.write(&mut buf).unwrap();
        let back = Index::read(buf.as_slice()).unwrap();
        assert_eq!(back, idx);
        let mut again = Vec::new();
        back.write(&mut again).unwrap();
        assert_eq!(buf, again);
        assert!(Index::read("EVPIRANK-IDX v2\n".as_bytes()).is_err());
    }

    fn triple(id: &str, body: &str) -> TripleRecord {
        TripleRecord {
            post_id: id.into(),
            post_title: String::new(),
            post_body: body.into(),
            question: format!("q {id}?"),
            question_time: 2,
            answer: format!("a {id}"),
            answer_source: crate::corpus::AnswerSource::Edit,
        }
    }

    #[test]
    fn ten_posts_cover_everything() {
        let triples: Vec<TripleRecord> = (0..10)
            .map(|i| triple(&format!("p{i}"), &format!("shared topic word{i} extra{}", i % 3)))
            .collect();
        let sets = generate_all(&triples, 10).unwrap();
        for s in &sets {
            s.validate().unwrap();
            assert_eq!(s.original_index, 0);
            assert_eq!(s.source_post_ids[0], s.post_id);
            let mut ids = s.source_post_ids.clone();
            ids.sort();
            let mut all: Vec<String> = (0..10).map(|i| format!("p{i}")).collect();
            all.sort();
            assert_eq!(ids, all);
        }
    }

    #[test]
    fn duplicates_retrieve_each_other() {
        let mut triples: Vec<TripleRecord> = (0..20)
            .map(|i| triple(&format!("p{i:02}"), &format!("filler{i} noise{i} common")))
            .collect();
        triples.push(triple("dupA", "grub bootloader reinstall efi partition"));
        triples.push(triple("dupB", "grub bootloader reinstall efi partition"));
        let index = index_triples(&triples).unwrap();
        let by_post: BTreeMap<String, TripleRecord> = triples.iter().map(|t| (t.post_id.clone(), t.clone())).collect();
        let a = generate_candidates(&index, &by_post, "dupA", 10).unwrap();
        let b = generate_candidates(&index, &by_post, "dupB", 10).unwrap();
        assert_eq!(a.source_post_ids[..2], ["dupA", "dupB"]);
        assert_eq!(b.source_post_ids[..2], ["dupB", "dupA"]);
        // brute-force confirms the two scores are identical and maximal
        let docs: Vec<(&str, &str)> = triples
            .iter()
            .map(|t| (t.post_id.as_str(), t.post_body.as_str()))
            .collect();
        let q = "grub bootloader reinstall efi partition";
        let sa = brute_score(&docs, q, "dupA");
        assert_eq!(sa, brute_score(&docs, q, "dupB"));
        for (id, _) in &docs {
            assert!(brute_score(&docs, q, id) <= sa);
        }
        assert!(generate_candidates(&index, &by_post, "missing", 10).is_err());
    }
}
