//! Pretrained word vectors, average-word-vector pooling and cosine similarity.

use std::collections::HashMap;
use std::io::BufRead;

use crate::error::{Error, Result};

/// Word to dense vector map. Vectors are stored contiguously and addressed by
/// a dense word id.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    ids: HashMap<String, u32>,
    words: Vec<String>,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("embedding dimension must be >= 1".into()));
        }
        Ok(EmbeddingTable {
            dim,
            ids: HashMap::new(),
            words: Vec::new(),
            data: Vec::new(),
        })
    }

    /// Inserts a vector unless the word is already present. Returns whether
    /// the word was new.
    pub fn insert(&mut self, word: &str, vector: &[f64]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "vector for `{word}` has length {}, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if self.ids.contains_key(word) {
            return Ok(false);
        }
        self.ids.insert(word.to_owned(), self.words.len() as u32);
        self.words.push(word.to_owned());
        self.data.extend_from_slice(vector);
        Ok(true)
    }

    /// Reads `word v1 ... vd` lines. The dimension comes from the first entry;
    /// duplicate words keep their first vector.
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut table: Option<EmbeddingTable> = None;
        let mut values = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            values.clear();
            for field in fields {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("non-numeric entry `{field}`")))?;
                if !v.is_finite() {
                    return Err(Error::parse(line_no, format!("non-finite entry `{field}`")));
                }
                values.push(v);
            }
            let table = match &mut table {
                Some(t) => t,
                None => {
                    if values.is_empty() {
                        return Err(Error::parse(line_no, "entry has no vector components"));
                    }
                    table.insert(EmbeddingTable::new(values.len())?)
                }
            };
            if values.len() != table.dim {
                return Err(Error::parse(
                    line_no,
                    format!("expected {} components, found {}", table.dim, values.len()),
                ));
            }
            table.insert(word, &values)?;
        }
        table.ok_or_else(|| Error::InvalidInput("embedding file has no entries".into()))
    }

    /// Writes the table back out in the text format, in insertion order.
    pub fn write<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for (id, word) in self.words.iter().enumerate() {
            write!(w, "{word}")?;
            for v in self.vector(id as u32) {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.ids.get(word).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn vector(&self, id: u32) -> &[f64] {
        let start = id as usize * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.id(word).map(|id| self.vector(id))
    }

    /// Ids of the in-vocabulary tokens, in order. Out-of-vocabulary tokens are dropped.
    pub fn lookup<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().filter_map(|t| self.id(t.as_ref())).collect()
    }
}

/// Mean word vector of a token sequence (the q̂ / â representation).
#[derive(Clone, Debug, PartialEq)]
pub struct AvgVector {
    pub values: Vec<f64>,
    /// Fraction of tokens found in the table.
    pub coverage: f64,
}

/// Averages the vectors of in-vocabulary tokens. The sum runs over tokens
/// sorted by their string, so the result does not depend on token order.
pub fn avg_vector<S: AsRef<str>>(table: &EmbeddingTable, tokens: &[S]) -> AvgVector {
    let mut found: Vec<(&str, u32)> = tokens
        .iter()
        .filter_map(|t| table.id(t.as_ref()).map(|id| (t.as_ref(), id)))
        .collect();
    let mut values = vec![0.0; table.dim()];
    if found.is_empty() {
        return AvgVector { values, coverage: 0.0 };
    }
    found.sort_unstable_by(|a, b| a.0.cmp(b.0));
    for &(_, id) in &found {
        for (acc, v) in values.iter_mut().zip(table.vector(id)) {
            *acc += v;
        }
    }
    let n = found.len() as f64;
    for v in &mut values {
        *v /= n;
    }
    AvgVector {
        values,
        coverage: n / tokens.len() as f64,
    }
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine similarity, clamped to [-1, 1]. Zero when either vector is zero.
pub fn cos_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "cos_sim of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table2() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(2).unwrap();
        t.insert("w1", &[1.0, 0.0]).unwrap();
        t.insert("w2", &[0.0, 1.0]).unwrap();
        t
    }

    #[test]
    fn load_two_lines() {
        let t = EmbeddingTable::load("a 1 2 3\nb 4 5 6\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("b").unwrap(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn duplicate_keeps_first() {
        let t = EmbeddingTable::load("a 1 2\na 3 4\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("a").unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn short_line_reports_line_number() {
        let err = EmbeddingTable::load("a 1 2 3\nb 4 5\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = EmbeddingTable::load("a 1 x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn write_then_load_round_trips() {
        let t = EmbeddingTable::load("a 0.1 -2.5\nb 3e-7 4\n".as_bytes()).unwrap();
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        assert_eq!(EmbeddingTable::load(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn average_cases() {
        let t = table2();
        let single = avg_vector(&t, &["w1"]);
        assert_eq!(single.values, vec![1.0, 0.0]);
        assert_eq!(single.coverage, 1.0);
        assert_eq!(avg_vector(&t, &["w1", "w2"]).values, vec![0.5, 0.5]);
        let oov = avg_vector(&t, &["zz", "yy"]);
        assert_eq!(oov.values, vec![0.0, 0.0]);
        assert_eq!(oov.coverage, 0.0);
        assert_eq!(avg_vector(&t, &["w1", "zz"]).coverage, 0.5);
    }

    #[test]
    fn cosine_cases() {
        assert_eq!(cos_sim(&[0.3, -2.0], &[0.3, -2.0]).unwrap(), 1.0);
        assert_eq!(cos_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cos_sim(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((cos_sim(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(cos_sim(&[0.0, 0.0], &[5.0, 1.0]).unwrap(), 0.0);
        assert!(cos_sim(&[1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            u in prop::collection::vec(-10.0f64..10.0, 5),
            v in prop::collection::vec(-10.0f64..10.0, 5),
            c in 0.01f64..100.0,
        ) {
            let a = cos_sim(&u, &v).unwrap();
            prop_assert_eq!(a, cos_sim(&v, &u).unwrap());
            let scaled: Vec<f64> = u.iter().map(|x| x * c).collect();
            prop_assert!((cos_sim(&scaled, &v).unwrap() - a).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&a));
        }

        #[test]
        fn average_is_permutation_invariant(
            words in prop::collection::vec(0usize..6, 0..12),
            seed in any::<u64>(),
        ) {
            let mut t = EmbeddingTable::new(3).unwrap();
            for i in 0..5 {
                let f = i as f64;
                t.insert(&format!("w{i}"), &[0.1 * f + 0.37, -1.3 * f, f.sin()]).unwrap();
            }
            let tokens: Vec<String> = words.iter().map(|i| format!("w{i}")).collect();
            let mut shuffled = tokens.clone();
            // deterministic rotation + reversal driven by the seed
            if !shuffled.is_empty() {
                let k = (seed as usize) % shuffled.len();
                shuffled.rotate_left(k);
                if seed % 2 == 0 { shuffled.reverse(); }
            }
            prop_assert_eq!(avg_vector(&t, &tokens), avg_vector(&t, &shuffled));
        }
    }
}
