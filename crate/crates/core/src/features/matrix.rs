use serde::{Deserialize, Serialize};

use super::FeatureError;

/// Row-per-document numeric matrix, stored dense row-major or as CSR.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    storage: Storage,
    row_ids: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Storage {
    Dense(Vec<f64>),
    Sparse { indptr: Vec<usize>, indices: Vec<usize>, values: Vec<f64> },
}

/// Borrowed view of a single row.
#[derive(Clone, Copy, Debug)]
pub enum RowView<'a> {
    Dense(&'a [f64]),
    Sparse { indices: &'a [usize], values: &'a [f64] },
}

impl RowView<'_> {
    pub fn dot(&self, w: &[f64]) -> f64 {
        match self {
            RowView::Dense(x) => x.iter().zip(w).map(|(a, b)| a * b).sum(),
            RowView::Sparse { indices, values } => indices.iter().zip(values.iter()).map(|(&j, v)| v * w[j]).sum(),
        }
    }

    /// `out += scale * row`
    pub fn add_scaled_to(&self, scale: f64, out: &mut [f64]) {
        match self {
            RowView::Dense(x) => out.iter_mut().zip(x.iter()).for_each(|(o, v)| *o += scale * v),
            RowView::Sparse { indices, values } => {
                for (&j, v) in indices.iter().zip(values.iter()) {
                    out[j] += scale * v;
                }
            }
        }
    }

    /// Inner product of two rows of equal logical width.
    pub fn dot_row(&self, other: &RowView<'_>) -> f64 {
        match (self, other) {
            (RowView::Dense(a), RowView::Dense(b)) => a.iter().zip(b.iter()).map(|(x, y)| x * y).sum(),
            (RowView::Dense(a), s @ RowView::Sparse { .. }) | (s @ RowView::Sparse { .. }, RowView::Dense(a)) => {
                s.dot(a)
            }
            (RowView::Sparse { indices: ia, values: va }, RowView::Sparse { indices: ib, values: vb }) => {
                let (mut p, mut q, mut sum) = (0, 0, 0.0);
                while p < ia.len() && q < ib.len() {
                    match ia[p].cmp(&ib[q]) {
                        std::cmp::Ordering::Less => p += 1,
                        std::cmp::Ordering::Greater => q += 1,
                        std::cmp::Ordering::Equal => {
                            sum += va[p] * vb[q];
                            p += 1;
                            q += 1;
                        }
                    }
                }
                sum
            }
        }
    }

    pub fn value(&self, j: usize) -> f64 {
        match self {
            RowView::Dense(x) => x[j],
            RowView::Sparse { indices, values } => indices.binary_search(&j).map(|k| values[k]).unwrap_or(0.0),
        }
    }

    pub fn squared_norm(&self) -> f64 {
        match self {
            RowView::Dense(x) => x.iter().map(|v| v * v).sum(),
            RowView::Sparse { values, .. } => values.iter().map(|v| v * v).sum(),
        }
    }

    pub fn to_dense(&self, n_cols: usize) -> Vec<f64> {
        match self {
            RowView::Dense(x) => x.to_vec(),
            RowView::Sparse { indices, values } => {
                let mut out = vec![0.0; n_cols];
                for (&j, &v) in indices.iter().zip(values.iter()) {
                    out[j] = v;
                }
                out
            }
        }
    }
}

impl FeatureMatrix {
    /// Dense matrix from row-major data. `row_ids` default to `0..n_rows`.
    pub fn dense(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self, FeatureError> {
        if data.len() != n_rows * n_cols {
            return Err(FeatureError::Shape(format!(
                "dense data has {} entries, expected {}x{}",
                data.len(),
                n_rows,
                n_cols
            )));
        }
        if n_cols == 0 {
            return Err(FeatureError::Shape("matrix must have at least one column".into()));
        }
        check_finite(&data)?;
        Ok(FeatureMatrix { n_rows, n_cols, storage: Storage::Dense(data), row_ids: (0..n_rows).collect() })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, FeatureError> {
        let n_cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(FeatureError::Shape(format!("row {i} has {} columns, expected {n_cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::dense(rows.len(), n_cols, data)
    }

    /// CSR matrix. Each row's `(column, value)` pairs must have strictly increasing columns.
    pub fn sparse(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self, FeatureError> {
        if n_cols == 0 {
            return Err(FeatureError::Shape("matrix must have at least one column".into()));
        }
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (i, row) in rows.iter().enumerate() {
            let mut prev: Option<usize> = None;
            for &(j, v) in row {
                if j >= n_cols || prev.is_some_and(|p| p >= j) {
                    return Err(FeatureError::Shape(format!("row {i}: bad column index {j}")));
                }
                prev = Some(j);
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        check_finite(&values)?;
        let n_rows = rows.len();
        Ok(FeatureMatrix {
            n_rows,
            n_cols,
            storage: Storage::Sparse { indptr, indices, values },
            row_ids: (0..n_rows).collect(),
        })
    }

    pub fn with_row_ids(mut self, row_ids: Vec<usize>) -> Result<Self, FeatureError> {
        if row_ids.len() != self.n_rows {
            return Err(FeatureError::Shape(format!("{} row ids for {} rows", row_ids.len(), self.n_rows)));
        }
        self.row_ids = row_ids;
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse { .. })
    }

    pub fn row(&self, i: usize) -> RowView<'_> {
        match &self.storage {
            Storage::Dense(data) => RowView::Dense(&data[i * self.n_cols..(i + 1) * self.n_cols]),
            Storage::Sparse { indptr, indices, values } => {
                let (a, b) = (indptr[i], indptr[i + 1]);
                RowView::Sparse { indices: &indices[a..b], values: &values[a..b] }
            }
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = RowView<'_>> {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).value(j)
    }

    /// Row-major dense copy of the data.
    pub fn to_dense_vec(&self) -> Vec<f64> {
        match &self.storage {
            Storage::Dense(data) => data.clone(),
            Storage::Sparse { .. } => {
                let mut out = Vec::with_capacity(self.n_rows * self.n_cols);
                for r in self.rows() {
                    out.extend(r.to_dense(self.n_cols));
                }
                out
            }
        }
    }

    pub fn to_dense(&self) -> FeatureMatrix {
        FeatureMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            storage: Storage::Dense(self.to_dense_vec()),
            row_ids: self.row_ids.clone(),
        }
    }

    /// Dense rows as owned vectors.
    pub fn dense_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.to_dense(self.n_cols)).collect()
    }

    /// Stacks `other` below `self`; row ids are concatenated as-is.
    pub fn vstack(&self, other: &FeatureMatrix) -> Result<FeatureMatrix, FeatureError> {
        if self.n_cols != other.n_cols {
            return Err(FeatureError::DimensionMismatch { expected: self.n_cols, found: other.n_cols });
        }
        let mut row_ids = self.row_ids.clone();
        row_ids.extend_from_slice(&other.row_ids);
        let stacked = if self.is_sparse() && other.is_sparse() {
            let rows = self
                .rows()
                .chain(other.rows())
                .map(|r| match r {
                    RowView::Sparse { indices, values } => {
                        indices.iter().copied().zip(values.iter().copied()).collect()
                    }
                    RowView::Dense(_) => unreachable!(),
                })
                .collect();
            FeatureMatrix::sparse(self.n_cols, rows)?
        } else {
            let mut data = self.to_dense_vec();
            data.extend(other.to_dense_vec());
            FeatureMatrix::dense(self.n_rows + other.n_rows, self.n_cols, data)?
        };
        stacked.with_row_ids(row_ids)
    }

    /// Keeps the given rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let row_ids = idx.iter().map(|&i| self.row_ids[i]).collect();
        let storage = match &self.storage {
            Storage::Dense(data) => {
                let mut out = Vec::with_capacity(idx.len() * self.n_cols);
                for &i in idx {
                    out.extend_from_slice(&data[i * self.n_cols..(i + 1) * self.n_cols]);
                }
                Storage::Dense(out)
            }
            Storage::Sparse { indptr, indices, values } => {
                let mut new_ptr = vec![0];
                let mut new_idx = Vec::new();
                let mut new_val = Vec::new();
                for &i in idx {
                    new_idx.extend_from_slice(&indices[indptr[i]..indptr[i + 1]]);
                    new_val.extend_from_slice(&values[indptr[i]..indptr[i + 1]]);
                    new_ptr.push(new_idx.len());
                }
                Storage::Sparse { indptr: new_ptr, indices: new_idx, values: new_val }
            }
        };
        FeatureMatrix { n_rows: idx.len(), n_cols: self.n_cols, storage, row_ids }
    }
}

fn check_finite(values: &[f64]) -> Result<(), FeatureError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(FeatureError::NonFinite)
    }
}
