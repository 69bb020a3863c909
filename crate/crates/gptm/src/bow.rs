//! Sparse bag-of-words files.
//!
//! docword format: line 1 = D, line 2 = V, line 3 = NNZ, then NNZ lines of
//! "docID wordID count", everything 1-indexed and whitespace-separated.
//! Vocabulary: one token per line. Labels sidecar: one integer per line,
//! length D; negative values mean "unlabeled". UTF-8, LF or CRLF.

use crate::IoFormatError;
use gptm_core::corpus::Corpus;
use gptm_core::corpus::Document;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

fn open_lines(path: &Path) -> Result<impl Iterator<Item = std::io::Result<String>>, IoFormatError> {
    let file = File::open(path).map_err(|e| IoFormatError::io(path, e))?;
    Ok(BufReader::new(file).lines())
}

struct LineReader<I> {
    lines: I,
    line_no: usize,
}

impl<I: Iterator<Item = std::io::Result<String>>> LineReader<I> {
    fn next_nonempty(&mut self, path: &Path) -> Result<Option<(usize, String)>, IoFormatError> {
        for line in self.lines.by_ref() {
            self.line_no += 1;
            let line = line.map_err(|e| IoFormatError::io(path, e))?;
            let trimmed = line.trim();
            if !trimmed.is_empty() {
                return Ok(Some((self.line_no, trimmed.to_string())));
            }
        }
        Ok(None)
    }
}

fn parse_count_header(
    path: &Path,
    reader: &mut LineReader<impl Iterator<Item = std::io::Result<String>>>,
    what: &str,
) -> Result<usize, IoFormatError> {
    let (line_no, text) = reader
        .next_nonempty(path)?
        .ok_or_else(|| IoFormatError::format(path, format!("missing {what} header line")))?;
    text.parse::<usize>()
        .map_err(|_| IoFormatError::parse(path, line_no, format!("malformed {what} header: {text:?}")))
}

/// Reads a docword file into documents; duplicate (doc, word) entries are
/// summed. Returns the documents plus the vocabulary size from the header.
pub fn load_docword(path: &Path, allow_empty: bool) -> Result<(Vec<Document>, usize), IoFormatError> {
    let mut reader = LineReader { lines: open_lines(path)?, line_no: 0 };
    let d = parse_count_header(path, &mut reader, "D")?;
    let v = parse_count_header(path, &mut reader, "V")?;
    let nnz = parse_count_header(path, &mut reader, "NNZ")?;

    let mut pairs: Vec<Vec<(u32, u32)>> = vec![Vec::new(); d];
    for k in 0..nnz {
        let (line_no, text) = reader.next_nonempty(path)?.ok_or_else(|| {
            IoFormatError::format(path, format!("expected {nnz} entries, found {k}"))
        })?;
        let mut fields = text.split_whitespace();
        let mut field = |name: &str| -> Result<i64, IoFormatError> {
            let raw = fields
                .next()
                .ok_or_else(|| IoFormatError::parse(path, line_no, format!("missing {name}")))?;
            raw.parse::<i64>()
                .map_err(|_| IoFormatError::parse(path, line_no, format!("malformed {name}: {raw:?}")))
        };
        let doc_id = field("docID")?;
        let word_id = field("wordID")?;
        let count = field("count")?;
        if fields.next().is_some() {
            return Err(IoFormatError::parse(path, line_no, "trailing fields on entry line"));
        }
        if doc_id < 1 || doc_id as usize > d {
            return Err(IoFormatError::parse(
                path,
                line_no,
                format!("doc id {doc_id} out of range [1, {d}]"),
            ));
        }
        if word_id < 1 || word_id as usize > v {
            return Err(IoFormatError::parse(
                path,
                line_no,
                format!("word id {word_id} exceeds V={v}"),
            ));
        }
        if count < 1 {
            return Err(IoFormatError::parse(
                path,
                line_no,
                format!("count {count} must be a positive integer"),
            ));
        }
        // 1-indexed on disk, 0-indexed in memory
        pairs[(doc_id - 1) as usize].push(((word_id - 1) as u32, count as u32));
    }
    if let Some((line_no, _)) = reader.next_nonempty(path)? {
        return Err(IoFormatError::parse(path, line_no, "more entries than NNZ declares"));
    }

    let docs: Vec<Document> = pairs.into_iter().map(Document::from_pairs).collect();
    if !allow_empty {
        if let Some(idx) = docs.iter().position(|doc| doc.is_empty()) {
            return Err(IoFormatError::format(
                path,
                format!("document {} has no words (use --allow-empty to keep it)", idx + 1),
            ));
        }
    }
    Ok((docs, v))
}

/// One token per line; length must match the docword header's V.
pub fn load_vocab(path: &Path) -> Result<Vec<String>, IoFormatError> {
    let mut vocab = Vec::new();
    for line in open_lines(path)? {
        let line = line.map_err(|e| IoFormatError::io(path, e))?;
        let token = line.trim();
        if !token.is_empty() {
            vocab.push(token.to_string());
        }
    }
    Ok(vocab)
}

/// Loads docword + vocabulary into a validated corpus.
pub fn load_bow(docword: &Path, vocab_path: &Path, allow_empty: bool) -> Result<Corpus, IoFormatError> {
    let (docs, v) = load_docword(docword, allow_empty)?;
    let vocab = load_vocab(vocab_path)?;
    if vocab.len() != v {
        return Err(IoFormatError::format(
            vocab_path,
            format!("vocabulary has {} tokens but docword header says V={v}", vocab.len()),
        ));
    }
    Corpus::build(vocab, docs, allow_empty).map_err(|e| IoFormatError::format(docword, e.to_string()))
}

/// Loads a docword file without a vocabulary, synthesizing token names.
pub fn load_bow_synthetic_vocab(docword: &Path, allow_empty: bool) -> Result<Corpus, IoFormatError> {
    let (docs, v) = load_docword(docword, allow_empty)?;
    let vocab: Vec<String> = (0..v).map(|i| format!("w{}", i + 1)).collect();
    Corpus::build(vocab, docs, allow_empty).map_err(|e| IoFormatError::format(docword, e.to_string()))
}

/// Writes the canonical docword representation; loading it back gives a
/// bit-identical corpus.
pub fn save_docword(corpus: &Corpus, path: &Path) -> Result<(), IoFormatError> {
    let file = File::create(path).map_err(|e| IoFormatError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let nnz: usize = corpus.docs().iter().map(|d| d.distinct_words()).sum();
    let mut emit = |s: String| -> Result<(), IoFormatError> {
        writeln!(w, "{s}").map_err(|e| IoFormatError::io(path, e))
    };
    emit(corpus.num_docs().to_string())?;
    emit(corpus.vocab_size().to_string())?;
    emit(nnz.to_string())?;
    for (idx, doc) in corpus.docs().iter().enumerate() {
        for &(word, count) in doc.entries() {
            emit(format!("{} {} {}", idx + 1, word + 1, count))?;
        }
    }
    w.flush().map_err(|e| IoFormatError::io(path, e))
}

pub fn save_vocab(corpus: &Corpus, path: &Path) -> Result<(), IoFormatError> {
    let file = File::create(path).map_err(|e| IoFormatError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for token in corpus.vocab() {
        writeln!(w, "{token}").map_err(|e| IoFormatError::io(path, e))?;
    }
    w.flush().map_err(|e| IoFormatError::io(path, e))
}

/// One integer per line, length D; negative = unlabeled.
pub fn load_labels(path: &Path, num_docs: usize) -> Result<Vec<Option<i64>>, IoFormatError> {
    let mut labels = Vec::new();
    for (idx, line) in open_lines(path)?.enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| IoFormatError::io(path, e))?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let value: i64 = text
            .parse()
            .map_err(|_| IoFormatError::parse(path, line_no, format!("malformed label: {text:?}")))?;
        labels.push(if value < 0 { None } else { Some(value) });
    }
    if labels.len() != num_docs {
        return Err(IoFormatError::format(
            path,
            format!("expected {num_docs} labels, found {}", labels.len()),
        ));
    }
    Ok(labels)
}

pub fn save_labels(labels: &[Option<i64>], path: &Path) -> Result<(), IoFormatError> {
    let file = File::create(path).map_err(|e| IoFormatError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for l in labels {
        writeln!(w, "{}", l.unwrap_or(-1)).map_err(|e| IoFormatError::io(path, e))?;
    }
    w.flush().map_err(|e| IoFormatError::io(path, e))
}
