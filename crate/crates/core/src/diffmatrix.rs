//! Reference x query Euclidean difference matrix.
//!
//! Entries may be computed all at once ([`DifferenceMatrix::build_full`]), a
//! column range at a time ([`DifferenceMatrix::build_columns`]), or cell by
//! cell ([`DifferenceMatrix::fill_cells`]) for the accelerated matcher. Every
//! cell carries a validity bit so an uncomputed entry is never mistaken for a
//! zero distance.

use std::io::{self, Read, Write};
use std::ops::Range;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use thiserror::Error;

use crate::descriptor::{euclidean, DescriptorSet};

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("descriptor dimension mismatch: reference {reference}, query {query}")]
    DimMismatch { reference: usize, query: usize },
    #[error("index ({row}, {col}) outside {rows}x{cols} matrix")]
    RangeOutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("entry ({row}, {col}) has not been computed")]
    UncomputedEntry { row: usize, col: usize },
    #[error("existing matrix is {rows}x{cols}, expected {want_rows}x{want_cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("bad magic bytes: expected \"SQDM\"")]
    BadMagic,
    #[error("unsupported matrix format version {0}")]
    UnsupportedVersion(u32),
    #[error("matrix file truncated")]
    TruncatedFile,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    valid: Vec<bool>,
    filled_per_col: Vec<usize>,
}

fn check_dims(reference: &DescriptorSet, query: &DescriptorSet) -> Result<(), MatrixError> {
    if reference.dim() != query.dim() {
        return Err(MatrixError::DimMismatch {
            reference: reference.dim(),
            query: query.dim(),
        });
    }
    Ok(())
}

impl DifferenceMatrix {
    /// A matrix with no computed entries.
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            valid: vec![false; rows * cols],
            filled_per_col: vec![0; cols],
        }
    }

    pub fn for_sets(reference: &DescriptorSet, query: &DescriptorSet) -> Result<Self, MatrixError> {
        check_dims(reference, query)?;
        Ok(Self::empty(reference.len(), query.len()))
    }

    pub fn build_full(reference: &DescriptorSet, query: &DescriptorSet) -> Result<Self, MatrixError> {
        Self::build_columns(reference, query, 0..query.len(), None)
    }

    /// Computes every entry of the query columns in `cols`, preserving
    /// whatever `existing` already holds.
    pub fn build_columns(
        reference: &DescriptorSet,
        query: &DescriptorSet,
        cols: Range<usize>,
        existing: Option<DifferenceMatrix>,
    ) -> Result<Self, MatrixError> {
        check_dims(reference, query)?;
        let (rows, ncols) = (reference.len(), query.len());
        let mut m = match existing {
            Some(m) if m.rows != rows || m.cols != ncols => {
                return Err(MatrixError::ShapeMismatch {
                    rows: m.rows,
                    cols: m.cols,
                    want_rows: rows,
                    want_cols: ncols,
                })
            }
            Some(m) => m,
            None => Self::empty(rows, ncols),
        };
        if cols.is_empty() {
            return Ok(m);
        }
        if cols.end > ncols {
            return Err(MatrixError::RangeOutOfBounds {
                row: 0,
                col: cols.end - 1,
                rows,
                cols: ncols,
            });
        }

        let columns: Vec<(usize, Vec<f32>)> = cols
            .into_par_iter()
            .map(|j| {
                let q = query.row(j);
                let col = (0..rows).map(|i| euclidean(reference.row(i), q) as f32).collect();
                (j, col)
            })
            .collect();
        for (j, col) in columns {
            for (i, d) in col.into_iter().enumerate() {
                let idx = i * ncols + j;
                m.data[idx] = d;
                if !m.valid[idx] {
                    m.valid[idx] = true;
                    m.filled_per_col[j] += 1;
                }
            }
        }
        Ok(m)
    }

    /// Computes the listed cells that are not yet valid and returns how many
    /// were newly computed. Duplicates and already-valid cells are skipped.
    pub fn fill_cells(
        &mut self,
        reference: &DescriptorSet,
        query: &DescriptorSet,
        cells: &[(usize, usize)],
    ) -> Result<usize, MatrixError> {
        check_dims(reference, query)?;
        if reference.len() != self.rows || query.len() != self.cols {
            return Err(MatrixError::ShapeMismatch {
                rows: self.rows,
                cols: self.cols,
                want_rows: reference.len(),
                want_cols: query.len(),
            });
        }
        let mut todo: Vec<usize> = Vec::with_capacity(cells.len());
        for &(i, j) in cells {
            let idx = self.index(i, j)?;
            if !self.valid[idx] {
                todo.push(idx);
            }
        }
        todo.sort_unstable();
        todo.dedup();

        let cols = self.cols;
        let values: Vec<f32> = todo
            .par_iter()
            .map(|&idx| euclidean(reference.row(idx / cols), query.row(idx % cols)) as f32)
            .collect();
        for (&idx, d) in todo.iter().zip(values) {
            self.data[idx] = d;
            self.valid[idx] = true;
            self.filled_per_col[idx % cols] += 1;
        }
        Ok(todo.len())
    }

    fn index(&self, row: usize, col: usize) -> Result<usize, MatrixError> {
        if row >= self.rows || col >= self.cols {
            return Err(MatrixError::RangeOutOfBounds {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(row * self.cols + col)
    }

    /// Distance between reference `row` and query `col`.
    pub fn entry(&self, row: usize, col: usize) -> Result<f32, MatrixError> {
        let idx = self.index(row, col)?;
        if !self.valid[idx] {
            return Err(MatrixError::UncomputedEntry { row, col });
        }
        Ok(self.data[idx])
    }

    /// Unchecked-shape fast path for the matching kernels; `None` when the
    /// cell has not been computed.
    #[inline]
    pub(crate) fn cell(&self, row: usize, col: usize) -> Option<f32> {
        debug_assert!(row < self.rows && col < self.cols);
        let idx = row * self.cols + col;
        if self.valid[idx] {
            Some(self.data[idx])
        } else {
            None
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_computed(&self, row: usize, col: usize) -> bool {
        row < self.rows && col < self.cols && self.valid[row * self.cols + col]
    }

    pub fn is_column_computed(&self, col: usize) -> bool {
        col < self.cols && self.filled_per_col[col] == self.rows
    }

    pub fn computed_columns(&self) -> Vec<usize> {
        (0..self.cols).filter(|&j| self.is_column_computed(j)).collect()
    }

    pub fn computed_entries(&self) -> usize {
        self.filled_per_col.iter().sum()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        write_matrix(w, self)
    }
}

const MATRIX_MAGIC: &[u8; 4] = b"SQDM";
const MATRIX_VERSION: u32 = 1;

/// Dumps the matrix as `"SQDM"`, version u32, rows u32, cols u32, then
/// `rows * cols` f32 row-major with uncomputed entries written as NaN. All
/// values little-endian.
pub fn write_matrix<W: Write>(w: &mut W, m: &DifferenceMatrix) -> io::Result<()> {
    w.write_all(MATRIX_MAGIC)?;
    w.write_u32::<LittleEndian>(MATRIX_VERSION)?;
    w.write_u32::<LittleEndian>(m.rows as u32)?;
    w.write_u32::<LittleEndian>(m.cols as u32)?;
    for (v, ok) in m.data.iter().zip(&m.valid) {
        w.write_f32::<LittleEndian>(if *ok { *v } else { f32::NAN })?;
    }
    Ok(())
}

pub fn read_matrix<R: Read>(r: &mut R) -> Result<DifferenceMatrix, MatrixError> {
    let eof = |e: io::Error| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            MatrixError::TruncatedFile
        } else {
            MatrixError::Io(e)
        }
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| MatrixError::BadMagic)?;
    if &magic != MATRIX_MAGIC {
        return Err(MatrixError::BadMagic);
    }
    let version = r.read_u32::<LittleEndian>().map_err(eof)?;
    if version != MATRIX_VERSION {
        return Err(MatrixError::UnsupportedVersion(version));
    }
    let rows = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
    let cols = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
    let mut m = DifferenceMatrix::empty(rows, cols);
    let mut raw = vec![0f32; rows * cols];
    r.read_f32_into::<LittleEndian>(&mut raw).map_err(eof)?;
    for (idx, v) in raw.into_iter().enumerate() {
        if !v.is_nan() {
            m.data[idx] = v;
            m.valid[idx] = true;
            m.filled_per_col[idx % cols] += 1;
        }
    }
    Ok(m)
}
