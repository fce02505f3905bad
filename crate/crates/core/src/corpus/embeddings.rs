use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_OOV_SEED: u64 = 0x0005_eed0_f00f;

/// Fixed pretrained word vectors with a single shared out-of-vocabulary vector.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
    oov: Vec<f64>,
}

impl EmbeddingTable {
    /// Builds a table from `(word, vector)` pairs. The OOV vector is drawn
    /// once, uniformly in [-0.1, 0.1], from `seed`.
    pub fn from_entries(
        dimension: usize,
        entries: impl IntoIterator<Item = (String, Vec<f64>)>,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let oov = (0..dimension).map(|_| rng.gen_range(-0.1..=0.1)).collect();
        Self::with_oov(dimension, entries, oov)
    }

    pub(crate) fn with_oov(
        dimension: usize,
        entries: impl IntoIterator<Item = (String, Vec<f64>)>,
        oov: Vec<f64>,
    ) -> Result<Self> {
        let mut table = EmbeddingTable {
            dimension,
            words: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
            oov,
        };
        for (word, v) in entries {
            if v.len() != dimension {
                return Err(Error::Dimension {
                    expected: dimension,
                    got: v.len(),
                });
            }
            if table.index.contains_key(&word) {
                continue;
            }
            table.index.insert(word.clone(), table.words.len());
            table.words.push(word);
            table.vectors.extend(v);
        }
        Ok(table)
    }

    /// An empty zero-dimensional table, used when no pretrained vectors are given.
    pub fn empty() -> Self {
        EmbeddingTable {
            dimension: 0,
            words: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
            oov: Vec::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn oov_vector(&self) -> &[f64] {
        &self.oov
    }

    /// Vector for `word`, trying the lowercased form before falling back to OOV.
    pub fn lookup(&self, word: &str) -> &[f64] {
        let idx = self
            .index
            .get(word)
            .or_else(|| self.index.get(&word.to_lowercase()));
        match idx {
            Some(&i) => &self.vectors[i * self.dimension..(i + 1) * self.dimension],
            None => &self.oov,
        }
    }

    pub(crate) fn entries(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.words.iter().enumerate().map(move |(i, w)| {
            (
                w.as_str(),
                &self.vectors[i * self.dimension..(i + 1) * self.dimension],
            )
        })
    }
}

pub fn load_embeddings(path: impl AsRef<Path>, seed: u64) -> Result<EmbeddingTable> {
    parse_embeddings(&fs::read_to_string(path)?, seed)
}

/// Parses `word v1 ... vd` lines. A leading `count dim` header line, as
/// written by word2vec-style tools, is skipped.
pub fn parse_embeddings(text: &str, seed: u64) -> Result<EmbeddingTable> {
    let mut dimension = None;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        // optional "count dimension" header
        if line_no == 1 && rest.len() == 1 && word.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
            continue;
        }
        let values = rest
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::EmbeddingFormat {
                line: line_no,
                message: e.to_string(),
            })?;
        let d = *dimension.get_or_insert(values.len());
        if d == 0 {
            return Err(Error::EmbeddingFormat {
                line: line_no,
                message: "word without vector".to_owned(),
            });
        }
        if values.len() != d {
            return Err(Error::EmbeddingDimension {
                line: line_no,
                expected: d,
                found: values.len(),
            });
        }
        entries.push((word.to_owned(), values));
    }
    EmbeddingTable::from_entries(dimension.unwrap_or(0), entries, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_lines() {
        let t = parse_embeddings("a 1 2 3\nb 4 5 6\n", 1).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dimension(), 3);
        assert_eq!(t.lookup("b"), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn oov_is_fixed_and_bounded() {
        let t = parse_embeddings("a 1 2 3\n", 7).unwrap();
        let first = t.lookup("zzz").to_vec();
        assert_eq!(first, t.lookup("qqq"));
        assert!(first.iter().all(|v| v.abs() <= 0.1));
        let again = parse_embeddings("a 1 2 3\n", 7).unwrap();
        assert_eq!(again.oov_vector(), &first[..]);
    }

    #[test]
    fn english_dimension() {
        let line = |w: &str| {
            let vals: Vec<String> = (0..100).map(|i| format!("{}", i as f64 / 100.0)).collect();
            format!("{w} {}\n", vals.join(" "))
        };
        let t = parse_embeddings(&(line("the") + &line("of")), 0).unwrap();
        assert_eq!(t.dimension(), 100);
    }

    #[test]
    fn inconsistent_dimension_names_line() {
        match parse_embeddings("a 1 2 3\nb 1 2\n", 0) {
            Err(Error::EmbeddingDimension { line: 2, expected: 3, found: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_is_skipped() {
        let t = parse_embeddings("2 2\na 1 2\nb 3 4\n", 0).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dimension(), 2);
    }
}
