//! Compressed sparse row matrices.

use ndarray::{Array2, ArrayView2};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicate positions
    /// are summed; columns within a row end up sorted.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; rows + 1];
        for &(r, c, _) in triplets {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..rows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols_tmp = vec![0usize; triplets.len()];
        let mut vals_tmp = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            let slot = next[r];
            cols_tmp[slot] = c;
            vals_tmp[slot] = v;
            next[r] += 1;
        }

        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row_buf: Vec<(usize, f64)> = Vec::new();
        for r in 0..rows {
            row_buf.clear();
            row_buf.extend(
                (counts[r]..counts[r + 1]).map(|k| (cols_tmp[k], vals_tmp[k])),
            );
            row_buf.sort_by_key(|&(c, _)| c);
            for &(c, v) in &row_buf {
                match indices.last() {
                    Some(&last) if indices.len() > indptr[r] && last == c => {
                        *values.last_mut().unwrap() += v;
                    }
                    _ => {
                        indices.push(c);
                        values.push(v);
                    }
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// `y = A x`, accumulated in column order within each row.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *out = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    /// Sparse times dense.
    pub fn matmul_dense(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.cols);
        let mut out = Array2::zeros((self.rows, x.ncols()));
        for r in 0..self.rows {
            let mut out_row = out.row_mut(r);
            for k in self.indptr[r]..self.indptr[r + 1] {
                out_row.scaled_add(self.values[k], &x.row(self.indices[k]));
            }
        }
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        CsrMatrix::from_triplets(self.cols, self.rows, &t)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.rows, self.cols));
        for (r, c, v) in self.triplets() {
            d[[r, c]] = v;
        }
        d
    }

    pub fn max_asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max)
    }

    /// True when both matrices have the same non-zero positions.
    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.indptr == other.indptr
            && self.indices == other.indices
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn duplicates_are_summed_and_sorted() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 0.5), (1, 1, 3.0)]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 2), 1.5);
        assert_eq!(m.get(0, 0), 2.0);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.row(0).map(|(c, _)| c).collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn products_match_dense() {
        let m = CsrMatrix::from_triplets(3, 3, &[(0, 1, 2.0), (1, 0, 2.0), (2, 2, -1.0), (1, 2, 0.5)]);
        let d = m.to_dense();
        let x = vec![1.0, -2.0, 3.0];
        let y = m.matvec(&x);
        let yd = d.dot(&ndarray::Array1::from(x.clone()));
        assert_eq!(y, yd.to_vec());

        let xm = array![[1.0, 0.0], [0.5, 2.0], [-1.0, 1.0]];
        assert_eq!(m.matmul_dense(xm.view()), d.dot(&xm));
        assert_eq!(m.transpose().to_dense(), d.t().to_owned());
    }

    #[test]
    fn empty_rows() {
        let m = CsrMatrix::from_triplets(3, 3, &[]);
        assert_eq!(m.matvec(&[1.0, 2.0, 3.0]), vec![0.0; 3]);
        assert_eq!(m.max_asymmetry(), 0.0);
    }
}
