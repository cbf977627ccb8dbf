//! Dense matrix wrapper and the repo-wide text format.
//!
//! Format: first line `d N`, then `d` lines of `N` decimal literals separated
//! by single spaces. Values are written with 17 significant digits so that
//! write → parse round-trips bit-exactly for every finite f64.

use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Dense row-major d×N matrix. Invariant: every entry finite, d ≥ 1, N ≥ 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Array2<f64>,
}

impl Matrix {
    pub fn from_array(data: Array2<f64>) -> Result<Self> {
        let (d, n) = data.dim();
        if d == 0 || n == 0 {
            return Err(Error::Dimension(format!("matrix must be non-empty, got {d}x{n}")));
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Matrix { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let mut data = Array2::zeros((d, n.max(1)));
        if d == 0 || n == 0 {
            return Err(Error::Dimension("matrix must be non-empty".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                data[[i, j]] = x;
            }
        }
        Self::from_array(data)
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[[i, j]]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn read_text<R: BufRead>(mut reader: R) -> Result<Self> {
        let mut header = String::new();
        reader
            .read_line(&mut header)
            .map_err(|e| Error::Parse(format!("cannot read header: {e}")))?;
        let mut parts = header.split_whitespace();
        let d: usize = parts
            .next()
            .ok_or_else(|| Error::Parse("missing row count".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad row count: {e}")))?;
        let n: usize = parts
            .next()
            .ok_or_else(|| Error::Parse("missing column count".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad column count: {e}")))?;
        if parts.next().is_some() {
            return Err(Error::Parse("header must be exactly \"d N\"".into()));
        }
        if d == 0 || n == 0 {
            return Err(Error::Parse(format!("dimensions must be positive, got {d} {n}")));
        }
        let mut data = Array2::zeros((d, n));
        let mut line = String::new();
        for i in 0..d {
            line.clear();
            let read = reader
                .read_line(&mut line)
                .map_err(|e| Error::Parse(format!("cannot read row {i}: {e}")))?;
            if read == 0 {
                return Err(Error::Parse(format!("expected {d} rows, file ends at row {i}")));
            }
            let mut count = 0;
            for (j, tok) in line.split_whitespace().enumerate() {
                if j >= n {
                    return Err(Error::Parse(format!("row {i} has more than {n} entries")));
                }
                let x: f64 = tok
                    .parse()
                    .map_err(|e| Error::Parse(format!("row {i} entry {j}: {e}")))?;
                if !x.is_finite() {
                    return Err(Error::NonFinite);
                }
                data[[i, j]] = x;
                count += 1;
            }
            if count != n {
                return Err(Error::Parse(format!("row {i} has {count} entries, expected {n}")));
            }
        }
        Matrix::from_array(data)
    }

    pub fn write_text<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        writeln!(writer, "{} {}", self.rows(), self.cols())?;
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                if j > 0 {
                    write!(writer, " ")?;
                }
                write!(writer, "{}", fmt_f64(self.data[[i, j]]))?;
            }
            writeln!(writer)?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::read_text(std::io::BufReader::new(file))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_text(&mut w).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// 17 significant digits: enough to reconstruct any f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
