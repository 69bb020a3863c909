//! Sparse bag-of-words corpora: validation, canonical form, and splitting.
//!
//! Word ids are 0-indexed in memory (the on-disk format is 1-indexed; the IO
//! layer converts). A corpus is immutable after construction and all
//! invariants are enforced up front: entries sorted strictly by word id,
//! positive counts, ids within the vocabulary.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum CorpusError {
    WordIdOutOfRange { doc: usize, word_id: u32, vocab_size: usize },
    NonPositiveCount { doc: usize, word_id: u32 },
    EmptyDocument { doc: usize },
    EmptyCorpus,
    BadFraction { fraction: f64 },
    EmptySplitSide,
}

impl fmt::Display for CorpusError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusError::WordIdOutOfRange { doc, word_id, vocab_size } => write!(
                f,
                "document {doc}: word id {word_id} out of range for vocabulary of size {vocab_size}"
            ),
            CorpusError::NonPositiveCount { doc, word_id } => {
                write!(f, "document {doc}: non-positive count for word id {word_id}")
            }
            CorpusError::EmptyDocument { doc } => {
                write!(f, "document {doc} has no words (pass allow_empty to keep it)")
            }
            CorpusError::EmptyCorpus => write!(f, "corpus has no documents"),
            CorpusError::BadFraction { fraction } => {
                write!(f, "test fraction {fraction} not in (0, 1)")
            }
            CorpusError::EmptySplitSide => {
                write!(f, "split would leave one side empty")
            }
        }
    }
}

impl core::error::Error for CorpusError {}

/// One document: sorted sparse `(word_id, count)` pairs plus an optional
/// label used only for kernel construction and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    entries: Vec<(u32, u32)>,
    label: Option<i64>,
}

impl Document {
    /// Builds a canonical document: duplicate word ids are summed, entries
    /// sorted by word id. Zero-count pairs are rejected later at corpus
    /// validation so loaders can report them with context.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut entries: Vec<(u32, u32)> = pairs.into_iter().collect();
        entries.sort_by_key(|&(w, _)| w);
        let mut merged: Vec<(u32, u32)> = Vec::with_capacity(entries.len());
        for (w, c) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == w => last.1 += c,
                _ => merged.push((w, c)),
            }
        }
        Document { entries: merged, label: None }
    }

    pub fn with_label(mut self, label: Option<i64>) -> Self {
        self.label = label;
        self
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn label(&self) -> Option<i64> {
        self.label
    }

    /// Total word count `N_d`.
    pub fn total_words(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c as u64).sum()
    }

    /// Number of distinct words.
    pub fn distinct_words(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Squared Euclidean norm of the count vector.
    pub fn norm_sq(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(_, c)| (c as f64) * (c as f64))
            .sum()
    }

    /// Sparse dot product with another document (merge join).
    pub fn dot(&self, other: &Document) -> f64 {
        let (mut i, mut j) = (0, 0);
        let mut s = 0.0;
        while i < self.entries.len() && j < other.entries.len() {
            let (wa, ca) = self.entries[i];
            let (wb, cb) = other.entries[j];
            if wa == wb {
                s += (ca as f64) * (cb as f64);
                i += 1;
                j += 1;
            } else if wa < wb {
                i += 1;
            } else {
                j += 1;
            }
        }
        s
    }
}

/// Validated sparse corpus: vocabulary plus documents.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    vocab: Vec<String>,
    docs: Vec<Document>,
}

impl Corpus {
    /// Validates and builds a corpus; empty documents are rejected.
    pub fn new(vocab: Vec<String>, docs: Vec<Document>) -> Result<Self, CorpusError> {
        Self::build(vocab, docs, false)
    }

    /// Like [`Corpus::new`] but keeps zero-word documents (their E-step has
    /// `N = 0` and is well defined).
    pub fn build(vocab: Vec<String>, docs: Vec<Document>, allow_empty: bool) -> Result<Self, CorpusError> {
        if docs.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let v = vocab.len();
        for (d, doc) in docs.iter().enumerate() {
            if doc.is_empty() && !allow_empty {
                return Err(CorpusError::EmptyDocument { doc: d });
            }
            for &(w, c) in doc.entries() {
                if (w as usize) >= v {
                    return Err(CorpusError::WordIdOutOfRange { doc: d, word_id: w, vocab_size: v });
                }
                if c == 0 {
                    return Err(CorpusError::NonPositiveCount { doc: d, word_id: w });
                }
            }
        }
        Ok(Corpus { vocab, docs })
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn doc(&self, d: usize) -> &Document {
        &self.docs[d]
    }

    /// Sum of `N_d` over all documents.
    pub fn total_words(&self) -> u64 {
        self.docs.iter().map(|d| d.total_words()).sum()
    }

    /// Labels as a vector (None where absent).
    pub fn labels(&self) -> Vec<Option<i64>> {
        self.docs.iter().map(|d| d.label()).collect()
    }

    /// Attaches labels from a sidecar; `labels.len()` must equal `D`.
    pub fn with_labels(mut self, labels: &[Option<i64>]) -> Self {
        assert_eq!(labels.len(), self.docs.len(), "label count mismatch");
        for (doc, &l) in self.docs.iter_mut().zip(labels.iter()) {
            doc.label = l;
        }
        self
    }

    /// Corpus-wide empirical word frequencies (length `V`).
    pub fn word_frequencies(&self) -> Vec<f64> {
        let mut counts = alloc::vec![0.0f64; self.vocab_size()];
        for doc in &self.docs {
            for &(w, c) in doc.entries() {
                counts[w as usize] += c as f64;
            }
        }
        let total: f64 = counts.iter().sum();
        if total > 0.0 {
            for c in counts.iter_mut() {
                *c /= total;
            }
        }
        counts
    }

    /// Sub-corpus over the given document indices (order kept as given).
    pub fn subset(&self, idx: &[usize]) -> Corpus {
        Corpus {
            vocab: self.vocab.clone(),
            docs: idx.iter().map(|&i| self.docs[i].clone()).collect(),
        }
    }
}

/// Outcome of a train/test split; index vectors map split positions back to
/// positions in the original corpus.
#[derive(Debug, Clone)]
pub struct SplitResult {
    pub train: Corpus,
    pub test: Corpus,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

/// Deterministic disjoint split. The test side receives
/// `round(D·test_fraction)` documents chosen by a seeded shuffle; document
/// order within each side preserves corpus order.
pub fn split(corpus: &Corpus, test_fraction: f64, seed: u64) -> Result<SplitResult, CorpusError> {
    if test_fraction.is_nan() || test_fraction <= 0.0 || test_fraction >= 1.0 {
        return Err(CorpusError::BadFraction { fraction: test_fraction });
    }
    let d = corpus.num_docs();
    let n_test = num_traits::Float::round(d as f64 * test_fraction) as usize;
    if n_test == 0 || n_test >= d {
        return Err(CorpusError::EmptySplitSide);
    }
    let mut order: Vec<usize> = (0..d).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut test_idx: Vec<usize> = order[..n_test].to_vec();
    let mut train_idx: Vec<usize> = order[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok(SplitResult {
        train: corpus.subset(&train_idx),
        test: corpus.subset(&test_idx),
        train_idx,
        test_idx,
    })
}
