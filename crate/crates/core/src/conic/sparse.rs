use crate::scalar::Real;

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub(crate) struct Csr<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Csr<T> {
    /// Builds from per-row term lists; duplicate columns within a row are summed.
    pub fn from_rows(rows: &[Vec<(usize, T)>], ncols: usize) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        let mut scratch: Vec<(usize, T)> = Vec::new();
        for row in rows {
            scratch.clear();
            scratch.extend(row.iter().copied());
            scratch.sort_by_key(|t| t.0);
            let start = indices.len();
            for &(j, v) in &scratch {
                if indices.len() > start && *indices.last().expect("non-empty") == j {
                    *data.last_mut().expect("non-empty") += v;
                } else {
                    indices.push(j);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows: rows.len(),
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut indices = vec![0; self.indices.len()];
        let mut data = vec![T::zero(); self.data.len()];
        for i in 0..self.nrows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[p];
                let q = next[j];
                indices[q] = i;
                data[q] = self.data[p];
                next[j] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr: counts,
            indices,
            data,
        }
    }

    /// `y = A x`
    pub fn mul_into(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            let mut s = T::zero();
            for p in self.indptr[i]..self.indptr[i + 1] {
                s += self.data[p] * x[self.indices[p]];
            }
            *yi = s;
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        (self.indptr[i]..self.indptr[i + 1]).map(move |p| (self.indices[p], self.data[p]))
    }

    pub fn scale(&mut self, rows: &[T], cols: &[T]) {
        for i in 0..self.nrows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                self.data[p] *= rows[i] * cols[self.indices[p]];
            }
        }
    }
}

pub(crate) fn inf_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiply_and_transpose() {
        let a = Csr::from_rows(&[vec![(0, 1.0), (2, 2.0)], vec![], vec![(1, 3.0), (1, 1.0)]], 3);
        let mut y = vec![0.0; 3];
        a.mul_into(&[1.0, 1.0, 1.0], &mut y);
        assert_eq!(y, vec![3.0, 0.0, 4.0]);
        let t = a.transpose();
        t.mul_into(&[1.0, 5.0, 1.0], &mut y);
        assert_eq!(y, vec![1.0, 4.0, 2.0]);
    }
}
