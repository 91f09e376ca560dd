//! Plain-text matrix dump in Matrix Market coordinate form.
//!
//! ```text
//! %%MatrixMarket matrix coordinate real general
//! % optional comment lines
//! <rows> <cols> <nnz>
//! <row> <col> <value>      (1-based, one entry per line)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

const HEADER: &str = "%%MatrixMarket matrix coordinate real general";

pub fn to_matrix_market(a: &CsrMatrix) -> String {
    let mut s = String::new();
    writeln!(s, "{HEADER}").unwrap();
    writeln!(s, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz()).unwrap();
    for r in 0..a.n_rows() {
        for (c, v) in a.row(r) {
            writeln!(s, "{} {} {:?}", r + 1, c + 1, v).unwrap();
        }
    }
    s
}

pub fn from_matrix_market(text: &str, origin: &str) -> Result<CsrMatrix> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim().eq_ignore_ascii_case(HEADER) => {}
        _ => return Err(err(1, "missing Matrix Market header".into())),
    }
    let mut dims: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(err(i + 1, format!("expected 3 fields, found {}", f.len())));
        }
        match dims {
            None => {
                let p = |s: &str| s.parse::<usize>().map_err(|e| err(i + 1, e.to_string()));
                dims = Some((p(f[0])?, p(f[1])?, p(f[2])?));
            }
            Some((nr, nc, _)) => {
                let r: usize = f[0].parse().map_err(|e: std::num::ParseIntError| err(i + 1, e.to_string()))?;
                let c: usize = f[1].parse().map_err(|e: std::num::ParseIntError| err(i + 1, e.to_string()))?;
                let v: f64 = f[2].parse().map_err(|e: std::num::ParseFloatError| err(i + 1, e.to_string()))?;
                if r == 0 || c == 0 || r > nr || c > nc {
                    return Err(err(i + 1, format!("entry ({r}, {c}) out of range")));
                }
                triplets.push((r - 1, c - 1, v));
            }
        }
    }
    let (nr, nc, nnz) = dims.ok_or_else(|| err(1, "missing size line".into()))?;
    if triplets.len() != nnz {
        return Err(err(0, format!("declared {nnz} entries, found {}", triplets.len())));
    }
    CsrMatrix::from_triplets(nr, nc, &triplets)
}

pub fn write_matrix_market(a: &CsrMatrix, path: &Path) -> Result<()> {
    std::fs::write(path, to_matrix_market(a)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix_market(path: &Path) -> Result<CsrMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_matrix_market(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let a = CsrMatrix::from_dense(&[vec![1.5, 0.0], vec![-2.0, 1e-17]]);
        let b = from_matrix_market(&to_matrix_market(&a), "mem").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_count() {
        let t = format!("{HEADER}\n2 2 2\n1 1 1.0\n");
        assert!(from_matrix_market(&t, "mem").is_err());
    }
}
