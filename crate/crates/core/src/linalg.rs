//! Square systems for the pivot basis: column-sparse storage, an LU
//! factorization with threshold partial pivoting, and residual diagnostics.
//!
//! The pivot basis of order `n + 2` is built from extended vertices (few
//! nonzeros each) and the structural block, so elimination is organised to
//! skip structurally zero multipliers and pivot-row entries. Column edits
//! always refactor from scratch; [`ColumnUpdate`] is the seam where a
//! rank-one update scheme can be plugged in later.

use crate::error::{Error, Result};

/// Pivot floor relative to the largest column norm.
pub const SINGULAR_RELATIVE_FLOOR: f64 = 1e-12;
/// Target accuracy of [`Factorization::solve`], relative to `1 + |b|_inf`.
pub const SOLVE_TOLERANCE: f64 = 1e-10;
/// Threshold for preferring the diagonal pivot over the largest candidate.
const PIVOT_THRESHOLD: f64 = 0.1;

/// A sparse column: `(row, value)` pairs with increasing rows and no stored zeros.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseColumn {
    entries: Vec<(usize, f64)>,
}

impl SparseColumn {
    pub fn from_dense(values: &[f64]) -> Self {
        let entries = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .collect();
        SparseColumn { entries }
    }

    /// Builds a column from arbitrary pairs; duplicates are summed and zeros dropped.
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|(i, _)| *i);
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            match entries.last_mut() {
                Some((j, w)) if *j == i => *w += v,
                _ => entries.push((i, v)),
            }
        }
        entries.retain(|(_, v)| *v != 0.0);
        SparseColumn { entries }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, row: usize) -> f64 {
        self.entries
            .binary_search_by_key(&row, |(i, _)| *i)
            .map(|k| self.entries[k].1)
            .unwrap_or(0.0)
    }

    pub fn set(&mut self, row: usize, value: f64) {
        match self.entries.binary_search_by_key(&row, |(i, _)| *i) {
            Ok(k) if value == 0.0 => {
                self.entries.remove(k);
            }
            Ok(k) => self.entries[k].1 = value,
            Err(_) if value == 0.0 => {}
            Err(k) => self.entries.insert(k, (row, value)),
        }
    }

    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    pub fn norm2(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    /// Entrywise sum of two columns.
    pub fn add(&self, other: &SparseColumn) -> SparseColumn {
        let mut pairs = self.entries.clone();
        pairs.extend_from_slice(&other.entries);
        SparseColumn::from_pairs(pairs)
    }
}

/// Square matrix stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    columns: Vec<SparseColumn>,
}

impl SquareMatrix {
    pub fn identity(order: usize) -> Self {
        let columns = (0..order)
            .map(|i| SparseColumn {
                entries: vec![(i, 1.0)],
            })
            .collect();
        SquareMatrix { columns }
    }

    pub fn zeros(order: usize) -> Self {
        SquareMatrix {
            columns: vec![SparseColumn::default(); order],
        }
    }

    pub fn from_columns(columns: Vec<SparseColumn>) -> Result<Self> {
        let order = columns.len();
        for c in &columns {
            if let Some(&(row, _)) = c.entries.last() {
                if row >= order {
                    return Err(Error::DimensionMismatch {
                        expected: order,
                        actual: row + 1,
                    });
                }
            }
        }
        Ok(SquareMatrix { columns })
    }

    /// Builds a matrix from dense columns, each of length `columns.len()`.
    pub fn from_dense_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let order = columns.len();
        for c in columns {
            if c.len() != order {
                return Err(Error::DimensionMismatch {
                    expected: order,
                    actual: c.len(),
                });
            }
        }
        Ok(SquareMatrix {
            columns: columns.iter().map(|c| SparseColumn::from_dense(c)).collect(),
        })
    }

    pub fn order(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.columns[col].get(row)
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.columns[col].set(row, value);
    }

    pub fn column(&self, col: usize) -> &SparseColumn {
        &self.columns[col]
    }

    pub fn columns(&self) -> &[SparseColumn] {
        &self.columns
    }

    pub fn set_column(&mut self, col: usize, column: SparseColumn) -> Result<()> {
        if let Some(&(row, _)) = column.entries.last() {
            if row >= self.order() {
                return Err(Error::DimensionMismatch {
                    expected: self.order(),
                    actual: row + 1,
                });
            }
        }
        self.columns[col] = column;
        Ok(())
    }

    /// Row `row` as a dense vector.
    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c.get(row)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.order()];
        for (c, &xc) in self.columns.iter().zip(x) {
            if xc == 0.0 {
                continue;
            }
            for &(i, v) in &c.entries {
                out[i] += v * xc;
            }
        }
        out
    }

    /// Row-major dense copy.
    pub fn to_dense_rows(&self) -> Vec<f64> {
        let n = self.order();
        let mut out = vec![0.0; n * n];
        for (j, c) in self.columns.iter().enumerate() {
            for &(i, v) in &c.entries {
                out[i * n + j] = v;
            }
        }
        out
    }

    pub fn max_column_norm(&self) -> f64 {
        self.columns
            .iter()
            .map(SparseColumn::norm2)
            .fold(0.0, f64::max)
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(SparseColumn::nnz).sum()
    }
}

/// LU factorization `P A = L U` of a [`SquareMatrix`].
#[derive(Debug, Clone)]
pub struct Factorization {
    order: usize,
    /// Row-major packed factors: unit-lower `L` below the diagonal, `U` on and above.
    lu: Vec<f64>,
    /// `perm[i]` is the original row placed at position `i`.
    perm: Vec<usize>,
    /// Original matrix, kept for one step of iterative refinement.
    original: SquareMatrix,
    stale: bool,
}

/// Factors `a`, failing with [`Error::SingularMatrix`] when a pivot falls
/// below `1e-12` times the largest column norm.
pub fn factor(a: &SquareMatrix) -> Result<Factorization> {
    let n = a.order();
    let mut lu = a.to_dense_rows();
    let mut perm: Vec<usize> = (0..n).collect();
    let floor = SINGULAR_RELATIVE_FLOOR * a.max_column_norm().max(f64::MIN_POSITIVE);
    let mut pivot_nz: Vec<usize> = Vec::with_capacity(n);

    for k in 0..n {
        let mut best = k;
        let mut best_abs = 0.0;
        for i in k..n {
            let v = lu[i * n + k].abs();
            if v > best_abs {
                best_abs = v;
                best = i;
            }
        }
        if !(best_abs > floor) {
            return Err(Error::SingularMatrix {
                step: k,
                pivot: best_abs,
                floor,
            });
        }
        // Prefer the diagonal when it is within the threshold: keeps the
        // near-identity structure of the basis and limits fill-in.
        let p = if lu[k * n + k].abs() >= PIVOT_THRESHOLD * best_abs {
            k
        } else {
            best
        };
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
        }
        let pivot = lu[k * n + k];
        pivot_nz.clear();
        pivot_nz.extend((k + 1..n).filter(|&j| lu[k * n + j] != 0.0));
        for i in k + 1..n {
            let aik = lu[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let l = aik / pivot;
            lu[i * n + k] = l;
            for &j in &pivot_nz {
                lu[i * n + j] -= l * lu[k * n + j];
            }
        }
    }

    Ok(Factorization {
        order: n,
        lu,
        perm,
        original: a.clone(),
        stale: false,
    })
}

impl Factorization {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn is_stale(&self) -> bool {
        self.stale
    }

    /// Flags the factorization as out of date with respect to its matrix.
    pub fn mark_stale(&mut self) {
        self.stale = true;
    }

    fn substitute(&self, b: &[f64]) -> Vec<f64> {
        let n = self.order;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let mut s = y[i];
            for (j, l) in row.iter().enumerate() {
                if *l != 0.0 {
                    s -= l * y[j];
                }
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n..(i + 1) * n];
            let mut s = y[i];
            for j in i + 1..n {
                if row[j] != 0.0 {
                    s -= row[j] * y[j];
                }
            }
            y[i] = s / row[i];
        }
        y
    }

    /// Solves `A r = b` with one step of iterative refinement.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if self.stale {
            return Err(Error::StaleFactorization);
        }
        if b.len() != self.order {
            return Err(Error::DimensionMismatch {
                expected: self.order,
                actual: b.len(),
            });
        }
        let mut r = self.substitute(b);
        let ar = self.original.mul_vec(&r);
        let resid: Vec<f64> = b.iter().zip(&ar).map(|(bi, ai)| bi - ai).collect();
        if resid.iter().any(|v| *v != 0.0) {
            let corr = self.substitute(&resid);
            for (ri, ci) in r.iter_mut().zip(corr) {
                *ri += ci;
            }
        }
        Ok(r)
    }

    /// `|A r - b|_inf` against the matrix this factorization was built from.
    pub fn residual(&self, r: &[f64], b: &[f64]) -> f64 {
        inf_norm_diff(&self.original.mul_vec(r), b)
    }
}

/// Strategy for keeping a factorization in sync after a column edit.
pub trait ColumnUpdate {
    fn replace_column(
        &mut self,
        a: &mut SquareMatrix,
        f: &mut Factorization,
        index: usize,
        column: SparseColumn,
    ) -> Result<()>;
}

/// Refactors the whole matrix after every edit.
#[derive(Debug, Default, Clone, Copy)]
pub struct Refactor;

impl ColumnUpdate for Refactor {
    fn replace_column(
        &mut self,
        a: &mut SquareMatrix,
        f: &mut Factorization,
        index: usize,
        column: SparseColumn,
    ) -> Result<()> {
        if index >= a.order() {
            return Err(Error::DimensionMismatch {
                expected: a.order(),
                actual: index + 1,
            });
        }
        a.set_column(index, column)?;
        f.mark_stale();
        *f = factor(a)?;
        Ok(())
    }
}

/// Replaces column `index` of `a` and returns a fresh factorization of the result.
pub fn replace_column(
    a: &mut SquareMatrix,
    f: &mut Factorization,
    index: usize,
    column: &[f64],
) -> Result<()> {
    if column.len() != a.order() {
        return Err(Error::DimensionMismatch {
            expected: a.order(),
            actual: column.len(),
        });
    }
    Refactor.replace_column(a, f, index, SparseColumn::from_dense(column))
}

/// `|M lambda - x_ext|_inf`.
pub fn reconstruction_residual(m: &SquareMatrix, lambda: &[f64], x_ext: &[f64]) -> f64 {
    inf_norm_diff(&m.mul_vec(lambda), x_ext)
}

pub(crate) fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Dense row-major rectangular matrix used for data (design matrices, features).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        DenseMatrix {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(DenseMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
        out
    }

    /// Largest squared singular value, by power iteration on `A^T A`.
    pub fn spectral_norm_sq(&self) -> f64 {
        if self.rows == 0 || self.cols == 0 {
            return 0.0;
        }
        let mut v = vec![1.0 / (self.cols as f64).sqrt(); self.cols];
        let mut estimate = 0.0;
        for _ in 0..20_000 {
            let w = self.tr_mul_vec(&self.mul_vec(&v));
            let norm = dot(&w, &w).sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next = dot(&v, &w);
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / norm;
            }
            if (next - estimate).abs() <= 1e-15 * next.abs() {
                estimate = next;
                break;
            }
            estimate = next;
        }
        let av = self.mul_vec(&v);
        dot(&av, &av).max(estimate)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m0() -> SquareMatrix {
        SquareMatrix::from_dense_columns(&[
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 1.0, 1.0],
            vec![0.0, 1.0, 1.0, 1.0],
            vec![0.0, 0.0, 1.0, 1.0],
        ])
        .unwrap()
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let f = factor(&SquareMatrix::identity(4)).unwrap();
        assert_eq!(f.solve(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn scaled_identity() {
        let mut a = SquareMatrix::identity(4);
        for i in 0..4 {
            a.set(i, i, 2.0);
        }
        let f = factor(&a).unwrap();
        assert_eq!(f.solve(&[2.0, 0.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn initial_basis_is_nonsingular() {
        // Cofactor expansion by hand gives det = 1.
        let f = factor(&m0()).unwrap();
        let b = [0.0, 1.0, 0.0, 1.0];
        let r = f.solve(&b).unwrap();
        // Elimination by hand: r = (1, -1, 1, 0).
        let expected = [1.0, -1.0, 1.0, 0.0];
        for (a, e) in r.iter().zip(expected) {
            assert!((a - e).abs() < 1e-14, "{r:?}");
        }
        assert!(f.residual(&r, &b) < 1e-14);
    }

    #[test]
    fn duplicate_columns_are_singular() {
        let a = SquareMatrix::from_dense_columns(&[
            vec![1.0, 2.0, 0.0],
            vec![1.0, 2.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert!(matches!(factor(&a), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn replace_column_paths() {
        let mut a = SquareMatrix::identity(4);
        let mut f = factor(&a).unwrap();
        replace_column(&mut a, &mut f, 0, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(a, SquareMatrix::identity(4));
        assert!(matches!(
            replace_column(&mut a, &mut f, 2, &[0.0; 4]),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn replace_into_initial_basis() {
        // Entering e2 replaces column 3 (the ratio-test choice); det of the
        // edited matrix is -1 by cofactor expansion.
        let mut a = m0();
        let mut f = factor(&a).unwrap();
        replace_column(&mut a, &mut f, 2, &[0.0, 1.0, 0.0, 1.0]).unwrap();
        let b = [0.5, 0.5, 0.0, 1.0];
        let r = f.solve(&b).unwrap();
        assert!(f.residual(&r, &b) < 1e-14);
    }

    #[test]
    fn stale_factorization_is_rejected() {
        let mut f = factor(&SquareMatrix::identity(3)).unwrap();
        f.mark_stale();
        assert_eq!(f.solve(&[1.0, 0.0, 0.0]), Err(Error::StaleFactorization));
    }

    #[test]
    fn residual_examples() {
        let i4 = SquareMatrix::identity(4);
        let e1 = [1.0, 0.0, 0.0, 0.0];
        let e2 = [0.0, 1.0, 0.0, 0.0];
        assert_eq!(reconstruction_residual(&i4, &e1, &e1), 0.0);
        assert_eq!(reconstruction_residual(&i4, &e1, &e2), 1.0);
        assert_eq!(reconstruction_residual(&m0(), &e1, &[1.0, 0.0, 0.0, 1.0]), 0.0);
    }

    #[test]
    fn sparse_column_set_and_add() {
        let mut c = SparseColumn::from_dense(&[0.0, 2.0, 0.0]);
        c.set(0, 1.0);
        c.set(1, 0.0);
        assert_eq!(c.entries(), &[(0, 1.0)]);
        let d = c.add(&SparseColumn::from_dense(&[-1.0, 0.0, 3.0]));
        assert_eq!(d.entries(), &[(2, 3.0)]);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let a = DenseMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, -2.0], vec![0.0, 0.0]]).unwrap();
        assert!((a.spectral_norm_sq() - 9.0).abs() < 1e-12);
    }
}
