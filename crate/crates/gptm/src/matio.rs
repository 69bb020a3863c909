//! CSV matrices (dense, no header), constraint files, embedding export, and
//! the key=value evaluation report. Floats are written with Rust's
//! shortest-round-trip formatting, so reading a file back reproduces every
//! bit.

use crate::IoFormatError;
use gptm_core::kernel::ConstraintSet;
use gptm_core::mat::Mat;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub fn write_matrix_csv(mat: &Mat, path: &Path) -> Result<(), IoFormatError> {
    let file = File::create(path).map_err(|e| IoFormatError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for i in 0..mat.rows() {
        let row = mat.row(i);
        let mut line = String::with_capacity(row.len() * 20);
        for (j, x) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&x.to_string());
        }
        writeln!(w, "{line}").map_err(|e| IoFormatError::io(path, e))?;
    }
    w.flush().map_err(|e| IoFormatError::io(path, e))
}

pub fn read_matrix_csv(path: &Path) -> Result<Mat, IoFormatError> {
    let file = File::open(path).map_err(|e| IoFormatError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| IoFormatError::io(path, e))?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in text.split(',') {
            let value: f64 = field.trim().parse().map_err(|_| {
                IoFormatError::parse(path, line_no, format!("malformed number: {field:?}"))
            })?;
            row.push(value);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(IoFormatError::parse(
                    path,
                    line_no,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(IoFormatError::format(path, "empty matrix file"));
    }
    let cols = rows[0].len();
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Mat::from_vec(data.len() / cols, cols, data))
}

/// Constraints file: one "i j" pair per line, 1-indexed.
pub fn read_constraints(path: &Path) -> Result<ConstraintSet, IoFormatError> {
    let file = File::open(path).map_err(|e| IoFormatError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut set = ConstraintSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| IoFormatError::io(path, e))?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(IoFormatError::parse(path, line_no, "expected two indices per line"));
        }
        let parse = |raw: &str| -> Result<usize, IoFormatError> {
            let v: usize = raw.parse().map_err(|_| {
                IoFormatError::parse(path, line_no, format!("malformed index: {raw:?}"))
            })?;
            if v == 0 {
                return Err(IoFormatError::parse(path, line_no, "indices are 1-based"));
            }
            Ok(v - 1)
        };
        let a = parse(fields[0])?;
        let b = parse(fields[1])?;
        set.insert(a, b);
    }
    Ok(set)
}

/// Embedding CSV: one row per document with its index, the K coordinates of
/// the corresponding column of F, and the label when present.
pub fn write_embedding_csv(
    f: &Mat,
    labels: Option<&[Option<i64>]>,
    path: &Path,
) -> Result<(), IoFormatError> {
    if let Some(labels) = labels {
        if labels.len() != f.cols() {
            return Err(IoFormatError::format(path, "label count does not match embedding columns"));
        }
    }
    let file = File::create(path).map_err(|e| IoFormatError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for doc in 0..f.cols() {
        let mut line = doc.to_string();
        for i in 0..f.rows() {
            line.push(',');
            line.push_str(&f[(i, doc)].to_string());
        }
        if let Some(labels) = labels {
            line.push(',');
            line.push_str(&labels[doc].unwrap_or(-1).to_string());
        }
        writeln!(w, "{line}").map_err(|e| IoFormatError::io(path, e))?;
    }
    w.flush().map_err(|e| IoFormatError::io(path, e))
}

/// Plain-text report, one `key=value` per line in the given order.
pub fn write_report(pairs: &[(String, String)], path: &Path) -> Result<(), IoFormatError> {
    let file = File::create(path).map_err(|e| IoFormatError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (k, v) in pairs {
        writeln!(w, "{k}={v}").map_err(|e| IoFormatError::io(path, e))?;
    }
    w.flush().map_err(|e| IoFormatError::io(path, e))
}

/// Index list, one 0-based index per line.
pub fn write_indices(indices: &[usize], path: &Path) -> Result<(), IoFormatError> {
    let file = File::create(path).map_err(|e| IoFormatError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for i in indices {
        writeln!(w, "{i}").map_err(|e| IoFormatError::io(path, e))?;
    }
    w.flush().map_err(|e| IoFormatError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_bit_exact() {
        let m = Mat::from_fn(3, 4, |i, j| ((i * 13 + j * 7) as f64 / 9.0).sin() * 1e3);
        let f = tempfile::NamedTempFile::new().unwrap();
        write_matrix_csv(&m, f.path()).unwrap();
        let back = read_matrix_csv(f.path()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn ragged_matrix_rejected() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), "1,2\n3\n").unwrap();
        assert!(read_matrix_csv(f.path()).is_err());
    }

    #[test]
    fn constraints_are_one_indexed() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), "# comment\n1 2\n3 2\n").unwrap();
        let set = read_constraints(f.path()).unwrap();
        let pairs: Vec<_> = set.pairs().collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn embedding_with_and_without_labels() {
        let f = Mat::from_fn(2, 3, |i, j| (i + j) as f64);
        let tmp = tempfile::NamedTempFile::new().unwrap();
        write_embedding_csv(&f, None, tmp.path()).unwrap();
        let text = std::fs::read_to_string(tmp.path()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].split(',').count(), 3); // index + 2 coords

        let labels = vec![Some(7), None, Some(9)];
        write_embedding_csv(&f, Some(&labels), tmp.path()).unwrap();
        let text = std::fs::read_to_string(tmp.path()).unwrap();
        assert!(text.lines().next().unwrap().ends_with(",7"));
        assert!(text.lines().nth(1).unwrap().ends_with(",-1"));
    }

    #[test]
    fn embedding_coordinates_survive_a_read_back_exactly() {
        let f = Mat::from_fn(3, 4, |i, j| ((i * 11 + j * 5) as f64 / 7.0).exp().ln() * 1e-3 + (i as f64).sqrt());
        let tmp = tempfile::NamedTempFile::new().unwrap();
        write_embedding_csv(&f, None, tmp.path()).unwrap();
        let text = std::fs::read_to_string(tmp.path()).unwrap();
        for (doc, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[0].parse::<usize>().unwrap(), doc);
            for (i, raw) in fields[1..].iter().enumerate() {
                let back: f64 = raw.parse().unwrap();
                assert_eq!(back.to_bits(), f[(i, doc)].to_bits());
            }
        }
    }
}
