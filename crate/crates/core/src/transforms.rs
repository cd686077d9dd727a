//! Document to vector transforms.
//!
//! Five transforms are supported:
//!
//! * `bow`: raw term counts over the fitted vocabulary,
//! * `tfidf`: `tf(t, d) * ln(N / n_t)` over the same vocabulary,
//! * `we`: the first `m` word embeddings of the document laid end to end,
//! * `bow-pf` and `tfidf-pf`: the base transform applied to each of the six
//!   record features separately, giving six blocks of `|vocab|` values.
//!
//! The vocabulary and document frequencies are always fitted on whole-record
//! documents, also for the per-feature variants.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::{load_embeddings, EmbeddingError, EmbeddingTable};
use crate::schema::{record_document, tokenize_record, Document, Feature, FieldRecord};
use crate::tokenizer::{Tokenizer, TokenizerConfig};

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("cannot fit a vocabulary on an empty corpus")]
    EmptyCorpus,
    #[error("invalid transform configuration: {0}")]
    Config(String),
    #[error("embedding dimension {found} does not match the configured {expected} values per word")]
    Dimension { expected: usize, found: usize },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    Bow,
    Tfidf,
    We,
    BowPf,
    TfidfPf,
}

impl TransformKind {
    pub const ALL: [TransformKind; 5] = [
        TransformKind::Bow,
        TransformKind::Tfidf,
        TransformKind::We,
        TransformKind::BowPf,
        TransformKind::TfidfPf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Bow => "bow",
            TransformKind::Tfidf => "tfidf",
            TransformKind::We => "we",
            TransformKind::BowPf => "bow-pf",
            TransformKind::TfidfPf => "tfidf-pf",
        }
    }

    pub fn is_per_feature(self) -> bool {
        matches!(self, TransformKind::BowPf | TransformKind::TfidfPf)
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformKind {
    type Err = TransformError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "bow" => Ok(Self::Bow),
            "tfidf" | "tf-idf" => Ok(Self::Tfidf),
            "we" => Ok(Self::We),
            "bow-pf" => Ok(Self::BowPf),
            "tfidf-pf" | "tf-idf-pf" => Ok(Self::TfidfPf),
            other => Err(TransformError::Config(format!("unknown transform {other:?}"))),
        }
    }
}

/// Base weighting applied inside each per-feature block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseWeighting {
    Bow,
    Tfidf,
}

/// Lexicographically ordered term list with its reverse index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(mut terms: Vec<String>) -> Self {
        terms.sort();
        terms.dedup();
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { terms, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.terms
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: usize) -> Option<&str> {
        self.terms.get(index).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

/// Per-term document counts (`n_t`) aligned with a vocabulary, plus the
/// corpus size `N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentFrequencyTable {
    counts: Vec<usize>,
    documents: usize,
}

impl DocumentFrequencyTable {
    /// `N`, the number of documents the table was fitted on.
    pub fn documents(&self) -> usize {
        self.documents
    }

    pub fn count(&self, index: usize) -> usize {
        self.counts[index]
    }

    /// `ln(N / n_t)`. Zero for terms present in every document.
    pub fn idf(&self, index: usize) -> f64 {
        let n_t = self.counts[index];
        if n_t == self.documents {
            0.0
        } else {
            (self.documents as f64 / n_t as f64).ln()
        }
    }
}

pub fn fit_vocabulary(corpus: &[Document]) -> Result<(Vocabulary, DocumentFrequencyTable), TransformError> {
    if corpus.is_empty() {
        return Err(TransformError::EmptyCorpus);
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    let mut seen: Vec<&str> = Vec::new();
    for doc in corpus {
        seen.clear();
        seen.extend(doc.tokens.iter().map(String::as_str));
        seen.sort_unstable();
        seen.dedup();
        for t in &seen {
            *df.entry(t).or_default() += 1;
        }
    }
    let vocab = Vocabulary::from(df.keys().map(|t| t.to_string()).collect::<Vec<_>>());
    let counts = df.into_values().collect();
    Ok((
        vocab,
        DocumentFrequencyTable {
            counts,
            documents: corpus.len(),
        },
    ))
}

/// A transform output together with the transform that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: TransformKind,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Raw occurrence count of every vocabulary term. Unknown words are ignored.
pub fn bow_transform(doc: &Document, vocab: &Vocabulary) -> FeatureVector {
    let mut values = vec![0.0; vocab.len()];
    add_counts(doc, vocab, &mut values);
    FeatureVector {
        values,
        layout: TransformKind::Bow,
    }
}

fn add_counts(doc: &Document, vocab: &Vocabulary, out: &mut [f64]) {
    for t in &doc.tokens {
        if let Some(i) = vocab.index_of(t) {
            out[i] += 1.0;
        }
    }
}

/// Share of the document's tokens equal to `term`; 0 for an empty document.
pub fn tf(term: &str, doc: &Document) -> f64 {
    if doc.is_empty() {
        return 0.0;
    }
    let count = doc.tokens.iter().filter(|t| *t == term).count();
    count as f64 / doc.len() as f64
}

pub fn tfidf_transform(doc: &Document, vocab: &Vocabulary, df: &DocumentFrequencyTable) -> FeatureVector {
    let mut values = vec![0.0; vocab.len()];
    add_tfidf(doc, vocab, df, &mut values);
    FeatureVector {
        values,
        layout: TransformKind::Tfidf,
    }
}

fn add_tfidf(doc: &Document, vocab: &Vocabulary, df: &DocumentFrequencyTable, out: &mut [f64]) {
    if doc.is_empty() {
        return;
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for t in &doc.tokens {
        if let Some(i) = vocab.index_of(t) {
            *counts.entry(i).or_default() += 1;
        }
    }
    let len = doc.len() as f64;
    for (i, c) in counts {
        out[i] = c as f64 / len * df.idf(i);
    }
}

/// Concatenates the embeddings of the first `max_words` words; slots past the
/// end of the document and unknown words stay zero.
pub fn we_transform(
    doc: &Document,
    table: &EmbeddingTable,
    max_words: usize,
    dims_per_word: usize,
) -> Result<FeatureVector, TransformError> {
    if table.dim() != dims_per_word {
        return Err(TransformError::Dimension {
            expected: dims_per_word,
            found: table.dim(),
        });
    }
    let mut values = vec![0.0; max_words * dims_per_word];
    for (slot, word) in doc.tokens.iter().take(max_words).enumerate() {
        let offset = slot * dims_per_word;
        values[offset..offset + dims_per_word].copy_from_slice(table.lookup(word));
    }
    Ok(FeatureVector {
        values,
        layout: TransformKind::We,
    })
}

/// Applies the base weighting to each of the six feature documents and
/// concatenates the blocks in canonical feature order.
pub fn per_feature_transform(
    docs: &[Document; 6],
    base: BaseWeighting,
    vocab: &Vocabulary,
    df: &DocumentFrequencyTable,
) -> FeatureVector {
    let v = vocab.len();
    let mut values = vec![0.0; Feature::COUNT * v];
    for (block, doc) in values.chunks_mut(v.max(1)).zip(docs.iter()) {
        match base {
            BaseWeighting::Bow => add_counts(doc, vocab, block),
            BaseWeighting::Tfidf => add_tfidf(doc, vocab, df, block),
        }
    }
    let layout = match base {
        BaseWeighting::Bow => TransformKind::BowPf,
        BaseWeighting::Tfidf => TransformKind::TfidfPf,
    };
    FeatureVector { values, layout }
}

pub const DEFAULT_MAX_WORDS: usize = 78;
pub const DEFAULT_DIMS_PER_WORD: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformConfig {
    pub kind: TransformKind,
    /// Word slots for `we`.
    pub max_words: usize,
    /// Embedding width for `we`.
    pub dims_per_word: usize,
}

impl TransformConfig {
    pub fn new(kind: TransformKind) -> Self {
        Self {
            kind,
            max_words: DEFAULT_MAX_WORDS,
            dims_per_word: DEFAULT_DIMS_PER_WORD,
        }
    }

    /// Output length for a vocabulary of the given size.
    pub fn dimension(&self, vocab_len: usize) -> usize {
        match self.kind {
            TransformKind::Bow | TransformKind::Tfidf => vocab_len,
            TransformKind::BowPf | TransformKind::TfidfPf => Feature::COUNT * vocab_len,
            TransformKind::We => self.max_words * self.dims_per_word,
        }
    }
}

/// Where a word-embedding transform gets its table from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    Inline(EmbeddingTable),
    File(PathBuf),
}

/// A transform fitted on a training corpus, ready to be stored in a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTransform {
    pub config: TransformConfig,
    pub tokenizer: TokenizerConfig,
    pub vocabulary: Vocabulary,
    pub document_frequency: DocumentFrequencyTable,
    pub embeddings: Option<EmbeddingSource>,
}

impl FittedTransform {
    /// Fits the vocabulary and document frequencies on whole-record documents.
    /// `we` additionally needs an embedding table.
    pub fn fit(
        config: TransformConfig,
        tokenizer: TokenizerConfig,
        records: &[FieldRecord],
        embeddings: Option<EmbeddingSource>,
    ) -> Result<Self, TransformError> {
        if config.kind == TransformKind::We {
            if config.max_words == 0 || config.dims_per_word == 0 {
                return Err(TransformError::Config("max_words and dims_per_word must be positive".into()));
            }
            if embeddings.is_none() {
                return Err(TransformError::Config("the we transform needs an embedding table".into()));
            }
        }
        let tok = Tokenizer::new(tokenizer);
        let docs: Vec<Document> = records.iter().map(|r| record_document(r, &tok)).collect();
        let (vocabulary, document_frequency) = fit_vocabulary(&docs)?;
        let fitted = Self {
            config,
            tokenizer,
            vocabulary,
            document_frequency,
            embeddings,
        };
        if let Some(EmbeddingSource::Inline(table)) = &fitted.embeddings {
            fitted.check_table(table)?;
        }
        Ok(fitted)
    }

    pub fn kind(&self) -> TransformKind {
        self.config.kind
    }

    pub fn dimension(&self) -> usize {
        self.config.dimension(self.vocabulary.len())
    }

    fn check_table(&self, table: &EmbeddingTable) -> Result<(), TransformError> {
        if table.dim() != self.config.dims_per_word {
            return Err(TransformError::Dimension {
                expected: self.config.dims_per_word,
                found: table.dim(),
            });
        }
        Ok(())
    }

    /// Resolves the embedding binding (reading the file if the table is
    /// stored by reference) and returns a ready-to-use featurizer.
    pub fn featurizer(&self) -> Result<Featurizer<'_>, TransformError> {
        let table = if self.config.kind == TransformKind::We {
            let table = match &self.embeddings {
                Some(EmbeddingSource::Inline(t)) => Cow::Borrowed(t),
                Some(EmbeddingSource::File(path)) => Cow::Owned(load_embeddings(path)?),
                None => return Err(TransformError::Config("the we transform needs an embedding table".into())),
            };
            self.check_table(&table)?;
            Some(table)
        } else {
            None
        };
        Ok(Featurizer {
            fitted: self,
            tokenizer: Tokenizer::new(self.tokenizer),
            table,
        })
    }

    /// Names the block and word behind a feature index, for importance reports.
    pub fn describe_feature(&self, index: usize) -> (Option<Feature>, String) {
        let v = self.vocabulary.len();
        let word = |i: usize| self.vocabulary.term(i).unwrap_or("?").to_string();
        match self.config.kind {
            TransformKind::Bow | TransformKind::Tfidf => (None, word(index)),
            TransformKind::BowPf | TransformKind::TfidfPf => (Some(Feature::ALL[index / v]), word(index % v)),
            TransformKind::We => {
                let l = self.config.dims_per_word;
                (None, format!("word{}[{}]", index / l + 1, index % l))
            }
        }
    }
}

/// A fitted transform with its embedding table loaded.
pub struct Featurizer<'a> {
    fitted: &'a FittedTransform,
    tokenizer: Tokenizer,
    table: Option<Cow<'a, EmbeddingTable>>,
}

impl Featurizer<'_> {
    pub fn dimension(&self) -> usize {
        self.fitted.dimension()
    }

    pub fn transform(&self, record: &FieldRecord) -> FeatureVector {
        let f = self.fitted;
        match f.config.kind {
            TransformKind::Bow => bow_transform(&record_document(record, &self.tokenizer), &f.vocabulary),
            TransformKind::Tfidf => tfidf_transform(
                &record_document(record, &self.tokenizer),
                &f.vocabulary,
                &f.document_frequency,
            ),
            TransformKind::We => {
                let table = self.table.as_deref().expect("featurizer resolved the table");
                we_transform(
                    &record_document(record, &self.tokenizer),
                    table,
                    f.config.max_words,
                    f.config.dims_per_word,
                )
                .expect("table dimension checked when resolving")
            }
            TransformKind::BowPf | TransformKind::TfidfPf => {
                let base = if f.config.kind == TransformKind::BowPf {
                    BaseWeighting::Bow
                } else {
                    BaseWeighting::Tfidf
                };
                per_feature_transform(
                    &tokenize_record(record, &self.tokenizer),
                    base,
                    &f.vocabulary,
                    &f.document_frequency,
                )
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::flatten_response;
    use crate::schema::ResponseNode;

    fn doc(words: &str) -> Document {
        words.split_whitespace().collect()
    }

    fn vocab(words: &[&str]) -> Vocabulary {
        Vocabulary::from(words.iter().map(|w| w.to_string()).collect::<Vec<_>>())
    }

    #[test]
    fn two_document_fit() {
        let (v, df) = fit_vocabulary(&[doc("a b"), doc("b c")]).unwrap();
        assert_eq!(v.terms(), ["a", "b", "c"]);
        assert_eq!(df.documents(), 2);
        assert_eq!(df.count(v.index_of("b").unwrap()), 2);
        assert_eq!(df.count(v.index_of("a").unwrap()), 1);
        assert!(matches!(fit_vocabulary(&[]), Err(TransformError::EmptyCorpus)));
    }

    #[test]
    fn location_documents_frequencies() {
        let root = ResponseNode::object(
            "",
            "PSResourceProviderLocation",
            vec![
                ResponseNode::leaf("Location", "string", None),
                ResponseNode::leaf("DisplayName", "string", None),
                ResponseNode::leaf("Providers", "System.Collections.Generic.List<string>", None),
            ],
        );
        let t = Tokenizer::default();
        let docs: Vec<_> = flatten_response("Get-AzLocation", "Resources", &root)
            .unwrap()
            .iter()
            .map(|r| record_document(r, &t))
            .collect();
        let (v, df) = fit_vocabulary(&docs).unwrap();
        let n = |w: &str| df.count(v.index_of(w).unwrap());
        assert_eq!(df.documents(), 4);
        assert_eq!(n("get"), 4);
        assert_eq!(n("provider"), 4);
        // "Providers" only appears as the field name of the last row.
        assert_eq!(n("providers"), 1);
        assert_eq!(n("string"), 3);
        assert_eq!(n("location"), 4);
    }

    #[test]
    fn bow_counts() {
        let v = vocab(&["key", "vault", "name"]);
        let out = bow_transform(&doc("key key vault"), &v);
        // lexicographic order: key, name, vault
        assert_eq!(out.values, [2.0, 0.0, 1.0]);
        assert_eq!(bow_transform(&Document::default(), &v).values, [0.0; 3]);
        assert_eq!(bow_transform(&doc("unknown"), &v).values, [0.0; 3]);
    }

    #[test]
    fn term_frequency() {
        let d = doc("key key vault name");
        assert_eq!(tf("key", &d), 0.5);
        assert_eq!(tf("absent", &d), 0.0);
        assert_eq!(tf("key", &Document::default()), 0.0);
        let total: f64 = ["key", "vault", "name"].iter().map(|t| tf(t, &d)).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tfidf_hand_values() {
        let (v, df) = fit_vocabulary(&[doc("a b"), doc("b c")]).unwrap();
        let out = tfidf_transform(&doc("a b"), &v, &df);
        assert!((out.values[0] - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!((out.values[0] - 0.34657).abs() < 1e-5);
        assert_eq!(out.values[1], 0.0);
        assert_eq!(out.values[2], 0.0);
        assert!(tfidf_transform(&doc("b b"), &v, &df).values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn idf_is_non_increasing_in_document_count() {
        let corpus = [doc("a b c d"), doc("a b c"), doc("a b"), doc("a")];
        let (v, df) = fit_vocabulary(&corpus).unwrap();
        let idf: Vec<f64> = ["d", "c", "b", "a"].iter().map(|w| df.idf(v.index_of(w).unwrap())).collect();
        assert!(idf.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(idf[3], 0.0);
        assert!(idf[..3].iter().all(|&x| x > 0.0));
    }

    #[test]
    fn word_embedding_placement() {
        let mut table = EmbeddingTable::new(3);
        table.insert("password", vec![0.1, 0.2, 0.5]).unwrap();
        let out = we_transform(&doc("password"), &table, 2, 3).unwrap();
        assert_eq!(out.values, [0.1, 0.2, 0.5, 0.0, 0.0, 0.0]);
        let out = we_transform(&doc("other password password"), &table, 2, 3).unwrap();
        assert_eq!(out.values, [0.0, 0.0, 0.0, 0.1, 0.2, 0.5]);
        assert_eq!(we_transform(&Document::default(), &table, 2, 3).unwrap().values, [0.0; 6]);
        assert!(matches!(
            we_transform(&doc("password"), &table, 2, 4),
            Err(TransformError::Dimension { .. })
        ));
    }

    fn empty_docs() -> [Document; 6] {
        Default::default()
    }

    #[test]
    fn per_feature_block_placement() {
        let v = vocab(&["key", "name", "vault"]);
        let (_, df) = fit_vocabulary(&[doc("key name vault")]).unwrap();
        let mut docs = empty_docs();
        docs[Feature::FieldName.index()] = doc("key");
        let out = per_feature_transform(&docs, BaseWeighting::Bow, &v, &df);
        assert_eq!(out.len(), 18);
        let k = v.index_of("key").unwrap();
        for block in 0..6 {
            let expected = if block == 2 { 1.0 } else { 0.0 };
            assert_eq!(out.values[block * 3 + k], expected);
        }
        let zero = per_feature_transform(&empty_docs(), BaseWeighting::Tfidf, &v, &df);
        assert_eq!(zero.values, vec![0.0; 18]);
        assert_eq!(zero.layout, TransformKind::TfidfPf);
    }

    #[test]
    fn feature_size_identities() {
        for kind in TransformKind::ALL {
            let c = TransformConfig::new(kind);
            let expected = match kind {
                TransformKind::Bow | TransformKind::Tfidf => 1559,
                TransformKind::BowPf | TransformKind::TfidfPf => 9354,
                TransformKind::We => 1560,
            };
            assert_eq!(c.dimension(1559), expected, "{kind}");
        }
    }

    #[test]
    fn transform_names_parse() {
        for kind in TransformKind::ALL {
            assert_eq!(kind.name().parse::<TransformKind>().unwrap(), kind);
        }
        assert_eq!("TF-IDF".parse::<TransformKind>().unwrap(), TransformKind::Tfidf);
        assert!("ngram".parse::<TransformKind>().is_err());
    }

    #[test]
    fn we_fit_requires_table() {
        let r = FieldRecord {
            command: "Get-AzVM".into(),
            module: "Compute".into(),
            field_name: "Name".into(),
            field_type: "string".into(),
            parent_name: String::new(),
            parent_type: String::new(),
            label: false,
        };
        let cfg = TransformConfig::new(TransformKind::We);
        assert!(FittedTransform::fit(cfg, TokenizerConfig::default(), std::slice::from_ref(&r), None).is_err());
        let bad = EmbeddingSource::Inline(EmbeddingTable::new(3));
        assert!(matches!(
            FittedTransform::fit(cfg, TokenizerConfig::default(), std::slice::from_ref(&r), Some(bad)),
            Err(TransformError::Dimension { .. })
        ));
        let missing = EmbeddingSource::File("/nonexistent/emb.txt".into());
        let fitted = FittedTransform::fit(cfg, TokenizerConfig::default(), &[r], Some(missing)).unwrap();
        assert!(fitted.featurizer().is_err());
    }

    #[test]
    fn vocabulary_serializes_as_term_list() {
        let v = vocab(&["b", "a"]);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"["a","b"]"#);
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back.index_of("b"), Some(1));
    }
}
