//! Dense binary matrices.
//!
//! Entries are packed one bit each, row-major, with every row padded to a
//! whole number of 64-bit words. Padding bits are always zero, so word-wise
//! popcounts over a row never see stray ones.

use std::fmt;

use crate::error::{Error, Result};

const WORD: usize = 64;

#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    bits: Vec<u64>,
    row_labels: Option<Vec<String>>,
    col_labels: Option<Vec<String>>,
}

impl BinaryMatrix {
    /// All-zero matrix. Zero rows or columns are allowed here; only
    /// [`BinaryMatrix::from_rows`] insists on non-empty input.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words_per_row = cols.div_ceil(WORD);
        BinaryMatrix {
            rows,
            cols,
            words_per_row,
            bits: vec![0; rows * words_per_row],
            row_labels: None,
            col_labels: None,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                if f(i, j) {
                    m.set(i, j);
                }
            }
        }
        m
    }

    /// Copies a list of equally long Boolean rows.
    pub fn from_rows<R: AsRef<[bool]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("matrix has no rows"))?;
        let cols = first.as_ref().len();
        if let Some((i, bad)) = rows
            .iter()
            .enumerate()
            .find(|(_, r)| r.as_ref().len() != cols)
        {
            return Err(Error::Dimension(format!(
                "row {i} has length {} but row 0 has length {cols}",
                bad.as_ref().len()
            )));
        }
        Ok(Self::from_fn(rows.len(), cols, |i, j| rows[i].as_ref()[j]))
    }

    /// Builds a matrix from per-row index sets of the columns that are 1.
    pub fn from_row_indices<R: AsRef<[usize]>>(cols: usize, rows: &[R]) -> Result<Self> {
        let mut m = Self::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            for &j in r.as_ref() {
                if j >= cols {
                    return Err(Error::Dimension(format!(
                        "row {i} references column {j} but there are {cols} columns"
                    )));
                }
                m.set(i, j);
            }
        }
        Ok(m)
    }

    pub fn with_labels(
        mut self,
        row_labels: Option<Vec<String>>,
        col_labels: Option<Vec<String>>,
    ) -> Result<Self> {
        if let Some(l) = &row_labels {
            if l.len() != self.rows {
                return Err(Error::Dimension(format!(
                    "{} row labels for {} rows",
                    l.len(),
                    self.rows
                )));
            }
        }
        if let Some(l) = &col_labels {
            if l.len() != self.cols {
                return Err(Error::Dimension(format!(
                    "{} column labels for {} columns",
                    l.len(),
                    self.cols
                )));
            }
        }
        self.row_labels = row_labels;
        self.col_labels = col_labels;
        Ok(self)
    }

    /// Builds a matrix from packed rows produced by another matrix with the
    /// same column count, so padding bits are already zero.
    pub(crate) fn from_packed_rows(cols: usize, rows: Vec<Vec<u64>>) -> Self {
        let mut m = Self::zeros(rows.len(), cols);
        for (i, words) in rows.into_iter().enumerate() {
            debug_assert_eq!(words.len(), m.words_per_row);
            let w = m.words_per_row;
            m.bits[i * w..(i + 1) * w].copy_from_slice(&words);
        }
        m
    }

    pub(crate) fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize) {
        self.bits[i * self.words_per_row + j / WORD] |= 1u64 << (j % WORD);
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row_labels(&self) -> Option<&[String]> {
        self.row_labels.as_deref()
    }

    pub fn col_labels(&self) -> Option<&[String]> {
        self.col_labels.as_deref()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        debug_assert!(i < self.rows && j < self.cols);
        self.bits[i * self.words_per_row + j / WORD] >> (j % WORD) & 1 == 1
    }

    /// Packed words of row `i`; bits past `cols` are zero.
    #[inline]
    pub fn row_words(&self, i: usize) -> &[u64] {
        let start = i * self.words_per_row;
        &self.bits[start..start + self.words_per_row]
    }

    pub fn row(&self, i: usize) -> Vec<bool> {
        (0..self.cols).map(|j| self.get(i, j)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<bool>> {
        (0..self.rows).map(|i| self.row(i)).collect()
    }

    /// Column indices set in row `i`, ascending.
    pub fn row_ones(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for (w, &word) in self.row_words(i).iter().enumerate() {
            let mut word = word;
            while word != 0 {
                let b = word.trailing_zeros() as usize;
                out.push(w * WORD + b);
                word &= word - 1;
            }
        }
        out
    }

    pub fn row_count(&self, i: usize) -> usize {
        self.row_words(i)
            .iter()
            .map(|w| w.count_ones() as usize)
            .sum()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.cols];
        for i in 0..self.rows {
            for j in self.row_ones(i) {
                counts[j] += 1;
            }
        }
        counts
    }

    /// New matrix made of the given rows, in the given order. Row labels
    /// follow their rows; column labels are kept.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut m = Self::zeros(indices.len(), self.cols);
        for (dst, &src) in indices.iter().enumerate() {
            let w = self.words_per_row;
            m.bits[dst * w..(dst + 1) * w].copy_from_slice(self.row_words(src));
        }
        m.row_labels = self
            .row_labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i].clone()).collect());
        m.col_labels = self.col_labels.clone();
        m
    }

    /// New matrix with columns reordered: output column `j` is input
    /// column `order[j]`.
    pub fn select_cols(&self, order: &[usize]) -> Self {
        let mut m = Self::from_fn(self.rows, order.len(), |i, j| self.get(i, order[j]));
        m.row_labels = self.row_labels.clone();
        m.col_labels = self
            .col_labels
            .as_ref()
            .map(|l| order.iter().map(|&j| l[j].clone()).collect());
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i));
        m.row_labels = self.col_labels.clone();
        m.col_labels = self.row_labels.clone();
        m
    }

    /// Rows as 0/1 integers, the shape used in JSON outputs.
    pub fn to_u8_rows(&self) -> Vec<Vec<u8>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) as u8).collect())
            .collect()
    }

    pub(crate) fn ensure_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "{what}: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

impl fmt::Debug for BinaryMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BinaryMatrix {}x{}", self.rows, self.cols)?;
        for i in 0..self.rows.min(32) {
            let line: String = (0..self.cols.min(96))
                .map(|j| if self.get(i, j) { '1' } else { '.' })
                .collect();
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

/// Number of positions where `a` and `b` differ.
pub fn hamming_distance(a: &BinaryMatrix, b: &BinaryMatrix) -> Result<usize> {
    a.ensure_same_shape(b, "hamming distance")?;
    Ok(a.bits
        .iter()
        .zip(&b.bits)
        .map(|(x, y)| (x ^ y).count_ones() as usize)
        .sum())
}

/// Hamming distance between row `i` of `a` and row `j` of `b`, which must
/// have the same number of columns.
pub fn row_hamming(a: &BinaryMatrix, i: usize, b: &BinaryMatrix, j: usize) -> usize {
    debug_assert_eq!(a.cols, b.cols);
    a.row_words(i)
        .iter()
        .zip(b.row_words(j))
        .map(|(x, y)| (x ^ y).count_ones() as usize)
        .sum()
}
