use serde::{Deserialize, Serialize};

use super::ModelError;

/// Row-major compressed feature matrix.
///
/// Count-based transforms are almost entirely zeros, so rows keep only their
/// non-zero entries. Column indices within a row are strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n_features: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

/// Borrowed view of one matrix row.
#[derive(Debug, Clone, Copy)]
pub struct SparseRow<'a> {
    pub indices: &'a [u32],
    pub values: &'a [f64],
}

impl SparseRow<'_> {
    pub fn get(&self, feature: usize) -> f64 {
        match self.indices.binary_search(&(feature as u32)) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().zip(self.values).map(|(&i, &v)| (i as usize, v))
    }
}

impl FeatureMatrix {
    pub fn new(n_features: usize) -> Self {
        Self {
            n_features,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense<R: AsRef<[f64]>>(n_features: usize, rows: &[R]) -> Result<Self, ModelError> {
        let mut m = Self::new(n_features);
        for row in rows {
            m.push_dense(row.as_ref())?;
        }
        Ok(m)
    }

    pub fn push_dense(&mut self, row: &[f64]) -> Result<(), ModelError> {
        if row.len() != self.n_features {
            return Err(ModelError::Shape {
                expected: self.n_features,
                found: row.len(),
            });
        }
        for (i, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(ModelError::Config(format!("feature {i} is not finite")));
            }
            if v != 0.0 {
                self.indices.push(i as u32);
                self.values.push(v);
            }
        }
        self.indptr.push(self.indices.len());
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> SparseRow<'_> {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        SparseRow {
            indices: &self.indices[a..b],
            values: &self.values[a..b],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = SparseRow<'_>> {
        (0..self.n_rows()).map(|i| self.row(i))
    }

    /// Per-feature lists of `(row, value)` for the non-zero entries, each
    /// sorted by value and then by row.
    pub(crate) fn sorted_columns(&self) -> Vec<Vec<(u32, f64)>> {
        let mut cols: Vec<Vec<(u32, f64)>> = vec![Vec::new(); self.n_features];
        for (r, row) in self.rows().enumerate() {
            for (f, v) in row.iter() {
                cols[f].push((r as u32, v));
            }
        }
        for col in &mut cols {
            col.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        }
        cols
    }
}

/// Compresses one dense vector into index/value pairs.
pub(crate) fn sparse_from_dense(row: &[f64]) -> (Vec<u32>, Vec<f64>) {
    let mut idx = Vec::new();
    let mut val = Vec::new();
    for (i, &v) in row.iter().enumerate() {
        if v != 0.0 {
            idx.push(i as u32);
            val.push(v);
        }
    }
    (idx, val)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_rows_compress() {
        let m = FeatureMatrix::from_dense(3, &[vec![0.0, 2.0, 0.0], vec![1.0, 0.0, -1.0]]).unwrap();
        assert_eq!(m.n_rows(), 2);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.row(0).get(1), 2.0);
        assert_eq!(m.row(0).get(0), 0.0);
        assert_eq!(m.row(1).iter().collect::<Vec<_>>(), [(0, 1.0), (2, -1.0)]);
        let cols = m.sorted_columns();
        assert_eq!(cols[2], [(1, -1.0)]);
    }

    #[test]
    fn wrong_width_is_shape_error() {
        assert!(matches!(
            FeatureMatrix::from_dense(2, &[vec![1.0]]),
            Err(ModelError::Shape { expected: 2, found: 1 })
        ));
    }
}
