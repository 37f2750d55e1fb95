use super::matrix::Matrix;
use crate::error::{Result, SniaError};

/// Compressed sparse row matrix.
///
/// Used for normalized adjacency operators and for the binary feature
/// matrix. Sparse operands are constants with respect to differentiation;
/// gradients only flow through the dense side of a product.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(rows: usize, cols: usize, indptr: Vec<usize>, indices: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(indptr.len(), rows + 1);
        debug_assert_eq!(indices.len(), values.len());
        debug_assert_eq!(*indptr.last().unwrap_or(&0), indices.len());
        CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    /// Build from row-sorted (row, col, value) triples.
    pub fn from_triples(rows: usize, cols: usize, triples: &[(usize, usize, f64)]) -> Self {
        let mut indptr = vec![0usize; rows + 1];
        for &(r, _, _) in triples {
            indptr[r + 1] += 1;
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        let mut indices = vec![0usize; triples.len()];
        let mut values = vec![0f64; triples.len()];
        let mut cursor = indptr.clone();
        for &(r, c, v) in triples {
            let pos = cursor[r];
            indices[pos] = c;
            values[pos] = v;
            cursor[r] += 1;
        }
        CsrMatrix::new(rows, cols, indptr, indices, values)
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.indptr[r];
        let hi = self.indptr[r + 1];
        self.indices[lo..hi].iter().copied().zip(self.values[lo..hi].iter().copied())
    }

    /// `self * dense`.
    pub fn spmm(&self, dense: &Matrix) -> Result<Matrix> {
        if self.cols != dense.rows() {
            return Err(SniaError::dimension(
                "spmm",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", dense.rows(), dense.cols()),
            ));
        }
        let n = dense.cols();
        let mut out = Matrix::zeros(self.rows, n);
        for r in 0..self.rows {
            let dst = out.row_mut(r);
            for (c, v) in self.row_entries(r) {
                let src = dense.row(c);
                for j in 0..n {
                    dst[j] += v * src[j];
                }
            }
        }
        Ok(out)
    }

    /// `self^T * dense`, scatter formulation.
    pub fn spmm_t(&self, dense: &Matrix) -> Result<Matrix> {
        if self.rows != dense.rows() {
            return Err(SniaError::dimension(
                "spmm_t",
                format!("{}x{}", self.cols, self.rows),
                format!("{}x{}", dense.rows(), dense.cols()),
            ));
        }
        let n = dense.cols();
        let mut out = Matrix::zeros(self.cols, n);
        for r in 0..self.rows {
            let src = dense.row(r);
            let (lo, hi) = (self.indptr[r], self.indptr[r + 1]);
            for k in lo..hi {
                let c = self.indices[k];
                let v = self.values[k];
                let dst = out.row_mut(c);
                for j in 0..n {
                    dst[j] += v * src[j];
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                out.set(r, c, v);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_spmm_is_noop() {
        let eye = CsrMatrix::identity(3);
        let d = Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(eye.spmm(&d).unwrap(), d);
    }

    #[test]
    fn spmm_matches_dense_product() {
        let s = CsrMatrix::from_triples(3, 4, &[(0, 1, 2.0), (0, 3, -1.0), (2, 0, 0.5)]);
        let d = Matrix::from_vec(4, 2, (0..8).map(|i| i as f64).collect());
        let got = s.spmm(&d).unwrap();
        let want = s.to_dense().matmul(&d).unwrap();
        assert_eq!(got, want);
        let got_t = s.spmm_t(&Matrix::from_vec(3, 2, (0..6).map(|i| i as f64).collect())).unwrap();
        let want_t = s
            .to_dense()
            .transpose()
            .matmul(&Matrix::from_vec(3, 2, (0..6).map(|i| i as f64).collect()))
            .unwrap();
        assert_eq!(got_t, want_t);
    }
}
