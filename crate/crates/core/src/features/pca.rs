use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureMatrix};

/// Number of components to keep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaTarget {
    /// Exactly `k` components.
    K(usize),
    /// Smallest count whose cumulative explained-variance ratio reaches the fraction.
    Fraction(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Row-orthonormal, one row per component.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalues of the sample covariance, non-increasing.
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| if self.total_variance > 0.0 { v / self.total_variance } else { 0.0 })
            .collect()
    }

    /// Maps projected coordinates back to input space: `mean + z · components`.
    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (c, &zk) in self.components.iter().zip(z) {
            x.iter_mut().zip(c).for_each(|(xi, ci)| *xi += zk * ci);
        }
        x
    }
}

/// Fits PCA from the eigendecomposition of the sample covariance (divisor
/// `n - 1`). When there are more columns than rows the smaller Gram matrix
/// is decomposed instead.
pub fn pca_fit(x: &FeatureMatrix, target: PcaTarget) -> Result<PcaModel, FeatureError> {
    let n = x.n_rows();
    let d = x.n_cols();
    if n < 2 {
        return Err(FeatureError::PcaTarget(format!("need at least 2 rows, found {n}")));
    }
    let max_k = (n - 1).min(d);
    match target {
        PcaTarget::K(k) if k == 0 || k > max_k => {
            return Err(FeatureError::PcaTarget(format!("k = {k} outside 1..={max_k}")));
        }
        PcaTarget::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
            return Err(FeatureError::PcaTarget(format!("fraction {f} outside (0, 1]")));
        }
        _ => {}
    }

    let mut data = x.to_dense_vec();
    let mut mean = vec![0.0; d];
    for row in data.chunks(d) {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    for row in data.chunks_mut(d) {
        row.iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
    }
    let centered = DMatrix::from_row_slice(n, d, &data);
    let scale = 1.0 / (n as f64 - 1.0);
    let total_variance: f64 = data.iter().map(|v| v * v).sum::<f64>() * scale;

    let (values, vectors) = if d <= n {
        let cov = centered.transpose() * &centered * scale;
        sorted_eigen(cov)
    } else {
        let gram = &centered * centered.transpose() * scale;
        let (values, u) = sorted_eigen(gram);
        let lmax = values.first().copied().unwrap_or(0.0);
        let usable = values.iter().take_while(|&&l| l > lmax * 1e-12 && l > 0.0).count();
        let mut vectors = Vec::with_capacity(usable);
        for (l, uk) in values.iter().zip(&u).take(usable) {
            let v = centered.transpose() * DMatrix::from_column_slice(n, 1, uk);
            let norm = (l / scale).sqrt();
            vectors.push(v.iter().map(|x| x / norm).collect());
        }
        let mut values = values;
        values.truncate(usable);
        (values, vectors)
    };

    let k = match target {
        PcaTarget::K(k) => k,
        PcaTarget::Fraction(f) => {
            if total_variance <= 0.0 {
                return Err(FeatureError::PcaTarget("zero-variance input with fractional target".into()));
            }
            let mut cumulative = 0.0;
            let mut k = values.len();
            for (i, v) in values.iter().enumerate() {
                cumulative += v;
                if cumulative / total_variance >= f - 1e-12 {
                    k = i + 1;
                    break;
                }
            }
            k.min(max_k)
        }
    };
    if k > vectors.len() {
        return Err(FeatureError::PcaTarget(format!(
            "k = {k} exceeds the numerical rank {} of the centered data",
            vectors.len()
        )));
    }

    let mut components: Vec<Vec<f64>> = vectors.into_iter().take(k).collect();
    if d > n {
        orthonormalize(&mut components);
    }
    for c in &mut components {
        // Deterministic sign: largest-magnitude entry positive.
        let pivot =
            c.iter().enumerate().fold((0, 0.0f64), |best, (i, v)| if v.abs() > best.1.abs() { (i, *v) } else { best });
        if pivot.1 < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let explained_variance = values.into_iter().take(k).map(|v| v.max(0.0)).collect();
    Ok(PcaModel { mean, components, explained_variance, total_variance })
}

/// Eigenpairs of a symmetric matrix, sorted by eigenvalue descending.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order.iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
    (values, vectors)
}

fn orthonormalize(vectors: &mut [Vec<f64>]) {
    for i in 0..vectors.len() {
        for j in 0..i {
            let (done, rest) = vectors.split_at_mut(i);
            let proj: f64 = rest[0].iter().zip(&done[j]).map(|(a, b)| a * b).sum();
            rest[0].iter_mut().zip(&done[j]).for_each(|(a, b)| *a -= proj * b);
        }
        let norm = vectors[i].iter().map(|v| v * v).sum::<f64>().sqrt();
        vectors[i].iter_mut().for_each(|v| *v /= norm);
    }
}

/// Projects rows onto the components: `(x - mean) · componentsᵀ`.
pub fn pca_transform(model: &PcaModel, x: &FeatureMatrix) -> Result<FeatureMatrix, FeatureError> {
    if x.n_cols() != model.input_dim() {
        return Err(FeatureError::DimensionMismatch { expected: model.input_dim(), found: x.n_cols() });
    }
    let offsets: Vec<f64> =
        model.components.iter().map(|c| c.iter().zip(&model.mean).map(|(a, b)| a * b).sum()).collect();
    let k = model.n_components();
    let mut data = Vec::with_capacity(x.n_rows() * k);
    for row in x.rows() {
        data.extend(model.components.iter().zip(&offsets).map(|(c, off)| row.dot(c) - off));
    }
    FeatureMatrix::dense(x.n_rows(), k, data)?.with_row_ids(x.row_ids().to_vec())
}
