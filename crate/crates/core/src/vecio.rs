//! word2vec text format: header line "N d", then one labeled vector per
//! line, space-separated.

use crate::error::{Error, Result};
use crate::linalg::EmbeddingMatrix;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Write a labeled matrix in word2vec text format. Values print in the
/// shortest form that round-trips exactly.
pub fn write_word2vec_text(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let labels = m
        .labels()
        .ok_or_else(|| Error::MissingLabel("matrix has no labels to write".into()))?;
    for label in labels {
        if label.chars().any(char::is_whitespace) {
            return Err(Error::format(
                Some(path.to_path_buf()),
                None,
                format!("label {label:?} contains whitespace"),
            ));
        }
    }
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let werr = |e: std::io::Error| Error::io(path, e);
    writeln!(out, "{} {}", m.count(), m.dim()).map_err(werr)?;
    for (label, col) in labels.iter().zip(m.columns()) {
        write!(out, "{label}").map_err(werr)?;
        for v in col {
            write!(out, " {v}").map_err(werr)?;
        }
        writeln!(out).map_err(werr)?;
    }
    out.flush().map_err(werr)
}

/// Read a word2vec text file into a labeled matrix.
pub fn read_word2vec_text(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(Some(path.to_path_buf()), Some(1), "empty file"))?
        .map_err(|e| Error::io(path, e))?;
    let mut parts = header.split_whitespace();
    let parse_usize = |s: Option<&str>| -> Result<usize> {
        s.and_then(|v| v.parse().ok()).ok_or_else(|| {
            Error::format(
                Some(path.to_path_buf()),
                Some(1),
                "header must be \"count dim\"",
            )
        })
    };
    let count = parse_usize(parts.next())?;
    let dim = parse_usize(parts.next())?;

    let mut labels = Vec::with_capacity(count);
    let mut values = Vec::with_capacity(count * dim);
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 2;
        let mut parts = line.split_whitespace();
        let label = parts
            .next()
            .ok_or_else(|| Error::format(Some(path.to_path_buf()), Some(line_no), "empty row"))?;
        labels.push(label.to_string());
        let before = values.len();
        for part in parts {
            let v: f64 = part.parse().map_err(|_| {
                Error::format(
                    Some(path.to_path_buf()),
                    Some(line_no),
                    format!("bad number {part:?}"),
                )
            })?;
            values.push(v);
        }
        if values.len() - before != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: values.len() - before,
                context: format!("vector in {} at line {line_no}", path.display()),
            });
        }
    }
    if labels.len() != count {
        return Err(Error::format(
            Some(path.to_path_buf()),
            None,
            format!("header declared {count} rows, found {}", labels.len()),
        ));
    }
    EmbeddingMatrix::new(dim, values)?.with_labels(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let m = EmbeddingMatrix::from_columns(
            3,
            [
                [0.1, -2.5e-17, 3.0_f64.sqrt()],
                [1.0 / 3.0, f64::MIN_POSITIVE, -0.0],
            ],
        )
        .unwrap()
        .with_labels(vec!["a@0".into(), "b@1".into()])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("anchors.vec");
        write_word2vec_text(&m, &path).unwrap();
        let back = read_word2vec_text(&path).unwrap();
        assert_eq!(back.labels().unwrap(), m.labels().unwrap());
        for (a, b) in m.values().iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.vec");
        std::fs::write(&path, "1 2\nword 0.5\n").unwrap();
        assert!(matches!(
            read_word2vec_text(&path),
            Err(Error::DimensionMismatch { .. })
        ));
        std::fs::write(&path, "1 2\nword 0.5 zap\n").unwrap();
        assert!(matches!(
            read_word2vec_text(&path),
            Err(Error::FormatError { .. })
        ));
    }

    #[test]
    fn rejects_whitespace_label() {
        let m = EmbeddingMatrix::from_columns(1, [[1.0]])
            .unwrap()
            .with_labels(vec!["two words".into()])
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            write_word2vec_text(&m, dir.path().join("x.vec")),
            Err(Error::FormatError { .. })
        ));
    }
}
