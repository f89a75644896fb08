//! Token-embedding corpus and alignment ingestion.
//!
//! A corpus file (`.tec.jsonl`) is UTF-8 text with one JSON object per line:
//! a header `{"dim": <int>}` followed by sentence records
//! `{"id": <int>, "tokens": [...], "vectors": [[...], ...]}`. Alignments
//! come in the word aligner's plain-text format: one line per sentence pair
//! of whitespace-separated `a-b` index links, empty line meaning no links.
//!
//! [`collect_type_pairs`] streams both corpora sentence by sentence, keeps
//! only one-to-one links, and gathers per-type (target, source) vector
//! pairs up to a fixed cap, so peak memory scales with the collection, not
//! the corpus.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Lines};
use std::path::{Path, PathBuf};

/// One sentence with its per-token embedding vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: u64,
    pub tokens: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct Header {
    dim: usize,
}

/// Streaming reader over a `.tec.jsonl` file. Yields records in file order,
/// validating each vector against the header dimension.
pub struct CorpusReader {
    path: PathBuf,
    dim: usize,
    lines: Lines<BufReader<File>>,
    line_no: usize,
}

/// Open a corpus file and validate its header.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<CorpusReader> {
    CorpusReader::open(path)
}

impl CorpusReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header_line = match lines.next() {
            Some(Ok(line)) => line,
            Some(Err(e)) => return Err(Error::io(&path, e)),
            None => {
                return Err(Error::format(
                    Some(path),
                    Some(1),
                    "missing header line",
                ))
            }
        };
        let header: Header = serde_json::from_str(&header_line).map_err(|e| {
            Error::format(Some(path.clone()), Some(1), format!("bad header: {e}"))
        })?;
        if header.dim == 0 {
            return Err(Error::format(
                Some(path),
                Some(1),
                "header dim must be positive",
            ));
        }
        Ok(Self {
            path,
            dim: header.dim,
            lines,
            line_no: 1,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn parse_record(&self, line: &str) -> Result<SentenceRecord> {
        let record: SentenceRecord = serde_json::from_str(line).map_err(|e| {
            Error::format(
                Some(self.path.clone()),
                Some(self.line_no),
                format!("bad sentence record: {e}"),
            )
        })?;
        if record.tokens.len() != record.vectors.len() {
            return Err(Error::format(
                Some(self.path.clone()),
                Some(self.line_no),
                format!(
                    "{} tokens but {} vectors",
                    record.tokens.len(),
                    record.vectors.len()
                ),
            ));
        }
        for vector in &record.vectors {
            if vector.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: vector.len(),
                    context: format!(
                        "vector in {} at line {}",
                        self.path.display(),
                        self.line_no
                    ),
                });
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(
                    Some(self.path.clone()),
                    Some(self.line_no),
                    "non-finite vector entry",
                ));
            }
        }
        Ok(record)
    }
}

impl Iterator for CorpusReader {
    type Item = Result<SentenceRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse_record(&line));
        }
    }
}

/// Per-sentence alignment links `(target index, source index)`, 0-based.
#[derive(Debug, Clone, Default)]
pub struct AlignmentSet {
    pub sentences: Vec<Vec<(usize, usize)>>,
}

impl AlignmentSet {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Swap the two sides of every link, for when the aligner's first
    /// column indexes the source corpus rather than the target.
    pub fn swapped(mut self) -> Self {
        for links in self.sentences.iter_mut() {
            for link in links.iter_mut() {
                *link = (link.1, link.0);
            }
        }
        self
    }
}

/// Parse a word-aligner output file: one line per sentence pair of
/// whitespace-separated `a-b` links.
pub fn read_alignments(path: impl AsRef<Path>) -> Result<AlignmentSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut sentences = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut links = Vec::new();
        for token in line.split_whitespace() {
            let (a, b) = token.split_once('-').ok_or_else(|| {
                Error::format(
                    Some(path.to_path_buf()),
                    Some(idx + 1),
                    format!("link {token:?} is not of the form a-b"),
                )
            })?;
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| {
                    Error::format(
                        Some(path.to_path_buf()),
                        Some(idx + 1),
                        format!("link {token:?} has a non-integer index"),
                    )
                })
            };
            links.push((parse(a)?, parse(b)?));
        }
        sentences.push(links);
    }
    Ok(AlignmentSet { sentences })
}

/// Keep only links whose target index and source index each appear exactly
/// once within the sentence. Order is preserved.
pub fn filter_one_to_one(links: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut target_counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut source_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &(a, b) in links {
        *target_counts.entry(a).or_default() += 1;
        *source_counts.entry(b).or_default() += 1;
    }
    links
        .iter()
        .copied()
        .filter(|&(a, b)| target_counts[&a] == 1 && source_counts[&b] == 1)
        .collect()
}

/// Paired (target, source) contextual vectors collected for one type.
#[derive(Debug, Clone, Default)]
pub struct TypeEntry {
    /// Stored pairs, at most `cap`, in corpus order.
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    /// All observed occurrences, including those dropped over the cap.
    pub count: u64,
}

/// Map from target type to its capped list of paired vectors.
#[derive(Debug, Clone)]
pub struct TypeCollection {
    dim: usize,
    cap: usize,
    entries: BTreeMap<String, TypeEntry>,
}

impl TypeCollection {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn type_count(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, type_name: &str) -> Option<&TypeEntry> {
        self.entries.get(type_name)
    }

    /// Types in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &TypeEntry)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut TypeEntry)> {
        self.entries.iter_mut()
    }

    /// Total stored pairs across all types.
    pub fn stored_pairs(&self) -> usize {
        self.entries.values().map(|e| e.pairs.len()).sum()
    }
}

/// Stream both corpora against the alignment set and gather per-type
/// (target vector, source vector) pairs.
///
/// Only one-to-one links survive. Each type keeps its first `cap` pairs in
/// corpus order; `count` tracks every observation. Types are keyed by the
/// target token, lowercased when `lowercase` is set.
pub fn collect_type_pairs<T, S>(
    target: T,
    source: S,
    alignments: &AlignmentSet,
    cap: usize,
    lowercase: bool,
) -> Result<TypeCollection>
where
    T: IntoIterator<Item = Result<SentenceRecord>>,
    S: IntoIterator<Item = Result<SentenceRecord>>,
{
    if cap == 0 {
        return Err(Error::InvalidConfig("cap must be positive".into()));
    }
    let mut target = target.into_iter();
    let mut source = source.into_iter();
    let mut entries: BTreeMap<String, TypeEntry> = BTreeMap::new();
    let mut dim = 0usize;
    let mut sentence = 0usize;

    loop {
        let t = target.next().transpose()?;
        let s = source.next().transpose()?;
        let links = alignments.sentences.get(sentence);
        match (t, s, links) {
            (Some(t), Some(s), Some(links)) => {
                if dim == 0 {
                    if let Some(v) = t.vectors.first() {
                        dim = v.len();
                    } else if let Some(v) = s.vectors.first() {
                        dim = v.len();
                    }
                }
                if let (Some(tv), Some(sv)) = (t.vectors.first(), s.vectors.first()) {
                    if tv.len() != sv.len() {
                        return Err(Error::DimensionMismatch {
                            expected: tv.len(),
                            got: sv.len(),
                            context: format!("source vectors in sentence {sentence}"),
                        });
                    }
                }
                for &(a, b) in &filter_one_to_one(links) {
                    if a >= t.tokens.len() {
                        return Err(Error::IndexOutOfRange {
                            sentence,
                            detail: format!(
                                "target index {a} in a {}-token sentence",
                                t.tokens.len()
                            ),
                        });
                    }
                    if b >= s.tokens.len() {
                        return Err(Error::IndexOutOfRange {
                            sentence,
                            detail: format!(
                                "source index {b} in a {}-token sentence",
                                s.tokens.len()
                            ),
                        });
                    }
                    let key = if lowercase {
                        t.tokens[a].to_lowercase()
                    } else {
                        t.tokens[a].clone()
                    };
                    let entry = entries.entry(key).or_default();
                    entry.count += 1;
                    if entry.pairs.len() < cap {
                        entry
                            .pairs
                            .push((t.vectors[a].clone(), s.vectors[b].clone()));
                    }
                }
                sentence += 1;
            }
            (None, None, None) => break,
            (t, s, _) => {
                // Drain whatever is left so the error names the actual totals.
                let target_total =
                    sentence + t.iter().count() + target.filter(|r| r.is_ok()).count();
                let source_total =
                    sentence + s.iter().count() + source.filter(|r| r.is_ok()).count();
                return Err(Error::LengthMismatch {
                    target_sentences: target_total,
                    source_sentences: source_total,
                    alignment_sentences: alignments.len(),
                });
            }
        }
    }

    Ok(TypeCollection { dim, cap, entries })
}
