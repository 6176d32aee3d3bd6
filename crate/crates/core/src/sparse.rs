//! Compressed-row sparse matrices and a banded Cholesky factorization.
//!
//! Matrices coming out of P1 assembly on lexicographically numbered meshes
//! have a bandwidth of roughly one grid row, so a dense band factorization
//! is both simple and fast enough for the mesh sizes used here.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    ///
    /// Duplicates are summed in the order they appear, so the result is
    /// bitwise reproducible for a fixed triplet sequence.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));

        let mut row_ptr = vec![0; nrows + 1];
        let mut col_idx = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (i, j, v) = triplets[k];
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|i| self.row_dot(i, x)).collect()
    }

    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        self.row(i).map(|(j, a)| a * x[j]).sum()
    }

    /// `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nrows);
        (0..self.nrows).map(|i| x[i] * self.row_dot(i, y)).sum()
    }

    /// `self + s·other` on the union sparsity pattern.
    pub fn add_scaled(&self, other: &CsrMatrix, s: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut triplets = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.nrows {
            triplets.extend(self.row(i).map(|(j, v)| (i, j, v)));
            triplets.extend(other.row(i).map(|(j, v)| (i, j, s * v)));
        }
        CsrMatrix::from_triplets(self.nrows, self.ncols, &triplets)
    }

    /// Exact (bitwise) symmetry check.
    pub fn is_symmetric(&self) -> bool {
        self.nrows == self.ncols
            && (0..self.nrows).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Writes `i j value` lines with 17 significant digits.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                writeln!(w, "{i} {j} {v:.16e}")?;
            }
        }
        Ok(())
    }
}

/// Lower-triangular band Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct BandCholesky {
    n: usize,
    bandwidth: usize,
    // row i holds L[i][i-bandwidth..=i], left-padded with zeros
    data: Vec<f64>,
}

impl BandCholesky {
    /// Factors the principal submatrix of `a` selected by `index`
    /// (strictly increasing global indices).
    pub fn factor_subset(a: &CsrMatrix, index: &[usize]) -> Result<Self> {
        let mut local = vec![usize::MAX; a.nrows()];
        for (k, &g) in index.iter().enumerate() {
            local[g] = k;
        }
        let n = index.len();
        let mut bandwidth = 0;
        for (k, &g) in index.iter().enumerate() {
            for (j, _) in a.row(g) {
                let lj = local[j];
                if lj != usize::MAX && lj < k {
                    bandwidth = bandwidth.max(k - lj);
                }
            }
        }
        let w = bandwidth + 1;
        let mut data = vec![0.0; n * w];
        for (k, &g) in index.iter().enumerate() {
            for (j, v) in a.row(g) {
                let lj = local[j];
                if lj != usize::MAX && lj <= k {
                    data[k * w + (lj + bandwidth - k)] = v;
                }
            }
        }
        let mut chol = BandCholesky {
            n,
            bandwidth,
            data,
        };
        chol.factor_in_place(index)?;
        Ok(chol)
    }

    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let index: Vec<usize> = (0..a.nrows()).collect();
        Self::factor_subset(a, &index)
    }

    fn factor_in_place(&mut self, index: &[usize]) -> Result<()> {
        let bw = self.bandwidth;
        let w = bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let lo_k = lo.max(j.saturating_sub(bw));
                let mut s = self.data[i * w + (j + bw - i)];
                for k in lo_k..j {
                    s -= self.data[i * w + (k + bw - i)] * self.data[j * w + (k + bw - j)];
                }
                if i == j {
                    let diag = self.data[i * w + bw];
                    if !(s > f64::EPSILON * diag.abs()) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite {
                            row: index[i],
                            pivot: s,
                        });
                    }
                    self.data[i * w + bw] = s.sqrt();
                } else {
                    self.data[i * w + (j + bw - i)] = s / self.data[j * w + bw];
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let bw = self.bandwidth;
        let w = bw + 1;
        let mut y = rhs.to_vec();
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            let mut s = y[i];
            for k in lo..i {
                s -= self.data[i * w + (k + bw - i)] * y[k];
            }
            y[i] = s / self.data[i * w + bw];
        }
        for i in (0..self.n).rev() {
            let hi = (i + bw).min(self.n - 1);
            let mut s = y[i];
            for k in i + 1..=hi {
                s -= self.data[k * w + (i + bw - k)] * y[k];
            }
            y[i] = s / self.data[i * w + bw];
        }
        y
    }
}
