//! Word embedding tables: text-format I/O and a skip-gram trainer with
//! negative sampling, run over the tokenized command corpus.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::Document;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("vector for {word:?} has length {found}, table dimension is {expected}")]
    Dimension {
        word: String,
        expected: usize,
        found: usize,
    },
    #[error("vector for {0:?} has a non-finite entry")]
    NonFinite(String),
    #[error("cannot train embeddings: {0}")]
    Training(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Word to dense vector map with a fixed dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "StoredTable", into = "StoredTable")]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
    zero: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StoredTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl From<StoredTable> for EmbeddingTable {
    fn from(s: StoredTable) -> Self {
        Self {
            zero: vec![0.0; s.dim],
            dim: s.dim,
            vectors: s.vectors,
        }
    }
}

impl From<EmbeddingTable> for StoredTable {
    fn from(t: EmbeddingTable) -> Self {
        Self {
            dim: t.dim,
            vectors: t.vectors,
        }
    }
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: BTreeMap::new(),
            zero: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Inserts or replaces a vector. Returns the previous vector, if any.
    pub fn insert(&mut self, word: &str, vector: Vec<f64>) -> Result<Option<Vec<f64>>, EmbeddingError> {
        if vector.len() != self.dim {
            return Err(EmbeddingError::Dimension {
                word: word.to_string(),
                expected: self.dim,
                found: vector.len(),
            });
        }
        if !vector.iter().all(|v| v.is_finite()) {
            return Err(EmbeddingError::NonFinite(word.to_string()));
        }
        Ok(self.vectors.insert(word.to_string(), vector))
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    /// The stored vector, or the zero vector for unknown words.
    pub fn lookup(&self, word: &str) -> &[f64] {
        self.get(word).unwrap_or(&self.zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vectors.iter().map(|(w, v)| (w.as_str(), v.as_slice()))
    }
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Reads the text format: a `<word_count> <dimension>` header followed by
/// one `<word> <v1> ... <vl>` line per word.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable, EmbeddingError> {
    let name = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    parse_embeddings(reader, &name)
}

pub fn parse_embeddings<R: BufRead>(reader: R, name: &str) -> Result<EmbeddingTable, EmbeddingError> {
    let err = |line: usize, message: String| EmbeddingError::Parse {
        path: name.to_string(),
        line,
        message,
    };
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(err(1, "empty file, expected '<word_count> <dimension>'".into())),
    };
    let parts: Vec<&str> = header.split_whitespace().collect();
    let (count, dim) = match parts.as_slice() {
        [c, d] => match (c.parse::<usize>(), d.parse::<usize>()) {
            (Ok(c), Ok(d)) if d > 0 => (c, d),
            _ => return Err(err(1, format!("bad header {header:?}"))),
        },
        _ => return Err(err(1, format!("bad header {header:?}"))),
    };

    let mut table = EmbeddingTable::new(dim);
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let word = fields.next().unwrap_or_default();
        let values = fields
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| err(line_no, e.to_string()))?;
        if values.len() != dim {
            return Err(err(
                line_no,
                format!("expected {dim} values for {word:?}, found {}", values.len()),
            ));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(err(line_no, format!("non-finite value for {word:?}")));
        }
        if table.insert(word, values)?.is_some() {
            log::warn!("{name}:{line_no}: duplicate word {word:?}, keeping the last vector");
        }
        rows += 1;
    }
    if rows != count {
        return Err(err(
            rows + 1,
            format!("header declares {count} words but {rows} rows follow"),
        ));
    }
    Ok(table)
}

pub fn save_embeddings(path: &Path, table: &EmbeddingTable) -> Result<(), EmbeddingError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{} {}", table.len(), table.dim())?;
    for (word, vector) in table.iter() {
        write!(w, "{word}")?;
        for v in vector {
            // Display for f64 prints the shortest string that parses back exactly.
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Word2VecParams {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for Word2VecParams {
    fn default() -> Self {
        Self {
            dim: 20,
            window: 3,
            negatives: 5,
            epochs: 15,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

/// Trains skip-gram embeddings with negative sampling.
///
/// Single-threaded and driven by one seeded generator, so the same corpus
/// and parameters always produce the same table.
pub fn train_embeddings(corpus: &[Document], params: &Word2VecParams) -> Result<EmbeddingTable, EmbeddingError> {
    if params.dim < 2 {
        return Err(EmbeddingError::Training("dimension must be at least 2".into()));
    }
    if params.window == 0 || params.epochs == 0 {
        return Err(EmbeddingError::Training("window and epochs must be positive".into()));
    }
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for doc in corpus {
        for t in &doc.tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    if counts.len() < 2 {
        return Err(EmbeddingError::Training(format!(
            "corpus has {} distinct tokens, need at least 2",
            counts.len()
        )));
    }
    let words: Vec<&str> = counts.keys().copied().collect();
    let index: BTreeMap<&str, usize> = words.iter().enumerate().map(|(i, w)| (*w, i)).collect();
    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|d| d.tokens.iter().map(|t| index[t.as_str()]).collect())
        .collect();

    // Unigram distribution raised to 3/4 for negative draws.
    let mut cumulative = Vec::with_capacity(words.len());
    let mut acc = 0.0;
    for w in &words {
        acc += (counts[w] as f64).powf(0.75);
        cumulative.push(acc);
    }

    let dim = params.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let bound = 0.5 / dim as f64;
    let mut input: Vec<f64> = (0..words.len() * dim).map(|_| rng.gen_range(-bound..bound)).collect();
    let mut output = vec![0.0; words.len() * dim];
    let mut grad = vec![0.0; dim];

    let tokens_per_epoch: usize = sentences.iter().map(Vec::len).sum();
    let total = (tokens_per_epoch * params.epochs).max(1) as f64;
    let mut processed = 0usize;
    let min_lr = params.learning_rate * 1e-4;

    for _ in 0..params.epochs {
        for sentence in &sentences {
            for (pos, &center) in sentence.iter().enumerate() {
                let lr = (params.learning_rate * (1.0 - processed as f64 / total)).max(min_lr);
                processed += 1;
                let reach = params.window - rng.gen_range(0..params.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(sentence.len() - 1);
                for ctx_pos in lo..=hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let context = sentence[ctx_pos];
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let in_row = center * dim;
                    for k in 0..=params.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let draw = rng.gen_range(0.0..acc);
                            let t = cumulative.partition_point(|&c| c <= draw).min(words.len() - 1);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let out_row = target * dim;
                        let dot: f64 = (0..dim).map(|d| input[in_row + d] * output[out_row + d]).sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for d in 0..dim {
                            grad[d] += g * output[out_row + d];
                            output[out_row + d] += g * input[in_row + d];
                        }
                    }
                    for d in 0..dim {
                        input[in_row + d] += grad[d];
                    }
                }
            }
        }
    }

    let mut table = EmbeddingTable::new(dim);
    for (i, w) in words.iter().enumerate() {
        table.insert(w, input[i * dim..(i + 1) * dim].to_vec())?;
    }
    Ok(table)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str) -> Result<EmbeddingTable, EmbeddingError> {
        parse_embeddings(Cursor::new(text), "test")
    }

    fn doc(words: &str) -> Document {
        words.split_whitespace().collect()
    }

    #[test]
    fn parses_text_format() {
        let t = parse("2 3\na 1 0 0\nb 0 1 0").unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("a"), Some(&[1.0, 0.0, 0.0][..]));
        assert_eq!(t.get("b"), Some(&[0.0, 1.0, 0.0][..]));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert!(matches!(parse(""), Err(EmbeddingError::Parse { line: 1, .. })));
        assert!(matches!(parse("2"), Err(EmbeddingError::Parse { line: 1, .. })));
        assert!(matches!(parse("2 3\na 1 0 0\nb 0 1"), Err(EmbeddingError::Parse { line: 3, .. })));
        assert!(matches!(parse("1 2\na 1 x"), Err(EmbeddingError::Parse { line: 2, .. })));
        assert!(matches!(parse("3 1\na 1\nb 2"), Err(EmbeddingError::Parse { .. })));
    }

    #[test]
    fn duplicate_words_keep_last() {
        let t = parse("2 1\na 1\na 2").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.lookup("a"), &[2.0]);
    }

    #[test]
    fn lookup_unknown_is_zero() {
        let t = parse("1 2\na 0.5 -0.5").unwrap();
        assert_eq!(t.lookup("a"), &[0.5, -0.5]);
        assert_eq!(t.lookup("zzz"), &[0.0, 0.0]);
    }

    #[test]
    fn insert_rejects_wrong_length_and_nan() {
        let mut t = EmbeddingTable::new(2);
        assert!(matches!(t.insert("a", vec![1.0]), Err(EmbeddingError::Dimension { .. })));
        assert!(matches!(t.insert("a", vec![1.0, f64::NAN]), Err(EmbeddingError::NonFinite(_))));
    }

    #[test]
    fn we_example_distances() {
        let t = parse("3 3\npassword 0.1 0.2 0.5\npasswords 0.2 0.1 0.4\nprivate 0.9 -0.1 0.1").unwrap();
        let p = t.lookup("password");
        let near = euclidean_distance(p, t.lookup("passwords"));
        let far = euclidean_distance(p, t.lookup("private"));
        assert!((near - 0.17).abs() < 0.005, "{near}");
        assert!((far - 0.94).abs() < 0.005, "{far}");
        assert!(near < far);
    }

    #[test]
    fn save_load_roundtrip() {
        let corpus = vec![doc("get az key vault"), doc("set az secret value")];
        let table = train_embeddings(&corpus, &Word2VecParams { epochs: 2, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        save_embeddings(&path, &table).unwrap();
        assert_eq!(load_embeddings(&path).unwrap(), table);
    }

    #[test]
    fn training_needs_two_distinct_tokens() {
        let corpus = vec![doc("key key key")];
        assert!(matches!(
            train_embeddings(&corpus, &Word2VecParams::default()),
            Err(EmbeddingError::Training(_))
        ));
        assert!(train_embeddings(&[], &Word2VecParams::default()).is_err());
        let corpus = vec![doc("a b")];
        let p = Word2VecParams { dim: 1, ..Default::default() };
        assert!(train_embeddings(&corpus, &p).is_err());
    }

    fn cooccurrence_corpus() -> Vec<Document> {
        let mut corpus = Vec::new();
        for i in 0..60 {
            corpus.push(doc(if i % 2 == 0 {
                "get vault key keys secret value"
            } else {
                "set vault keys key secret value"
            }));
            corpus.push(doc("list region location zone area east"));
        }
        corpus
    }

    #[test]
    fn shared_windows_bring_words_together() {
        let table = train_embeddings(&cooccurrence_corpus(), &Word2VecParams::default()).unwrap();
        let key = table.lookup("key");
        let together = cosine_similarity(key, table.lookup("keys"));
        let apart = cosine_similarity(key, table.lookup("location"));
        assert!(together > apart, "cos(key,keys)={together} cos(key,location)={apart}");
        assert!(table.iter().all(|(_, v)| v.len() == 20 && v.iter().all(|x| x.is_finite())));
    }

    #[test]
    fn training_is_deterministic() {
        let params = Word2VecParams { seed: 11, ..Default::default() };
        let a = train_embeddings(&cooccurrence_corpus(), &params).unwrap();
        let b = train_embeddings(&cooccurrence_corpus(), &params).unwrap();
        let bits = |t: &EmbeddingTable| -> Vec<u64> { t.iter().flat_map(|(_, v)| v.iter().map(|x| x.to_bits())).collect() };
        assert_eq!(bits(&a), bits(&b));
    }
}
