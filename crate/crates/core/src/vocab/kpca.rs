//! Kernel PCA with a dot-product kernel, used to compress Fisher vectors.

use nalgebra::DMatrix;

use crate::encode::Embedding;
use crate::error::{ReidError, Result};
use crate::linalg::{dot, sorted_sym_eigen};

/// Eigenvalues below this fraction of the largest are treated as zero.
const RELATIVE_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct KpcaModel {
    pub training_vectors: Vec<Vec<f64>>,
    /// One coefficient vector (length N) per retained component, already
    /// scaled by `1 / sqrt(eigenvalue)`.
    pub alphas: Vec<Vec<f64>>,
    /// Eigenvalues of the centered Gram matrix, positive and non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Column means of the uncentered Gram matrix.
    pub gram_col_means: Vec<f64>,
    pub gram_mean: f64,
    /// Output dimension asked for at fit time; may exceed `out_dim()`.
    pub requested_dim: usize,
}

impl KpcaModel {
    pub fn out_dim(&self) -> usize {
        self.alphas.len()
    }

    pub fn input_dim(&self) -> usize {
        self.training_vectors.first().map_or(0, Vec::len)
    }

    pub fn n_train(&self) -> usize {
        self.training_vectors.len()
    }

    /// Centered kernel row of `x` against the training set.
    fn centered_kernel_row(&self, x: &[f64]) -> Vec<f64> {
        let row: Vec<f64> = self.training_vectors.iter().map(|t| dot(t, x)).collect();
        let row_mean = row.iter().sum::<f64>() / row.len() as f64;
        row.iter()
            .zip(&self.gram_col_means)
            .map(|(k, cm)| k - cm - row_mean + self.gram_mean)
            .collect()
    }

    /// Unnormalized kernel-PCA coordinates of `x`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(ReidError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let kc = self.centered_kernel_row(x);
        Ok(self.alphas.iter().map(|a| dot(a, &kc)).collect())
    }
}

pub fn fit_kpca<V: AsRef<[f64]>>(vectors: &[V], out_dim: usize) -> Result<KpcaModel> {
    let n = vectors.len();
    if n < 2 {
        return Err(ReidError::InsufficientData(format!(
            "kernel PCA needs at least 2 vectors, got {n}"
        )));
    }
    if out_dim == 0 {
        return Err(ReidError::Invalid(
            "kernel PCA output dimension must be >= 1".into(),
        ));
    }
    let dim = vectors[0].as_ref().len();
    if let Some(bad) = vectors.iter().find(|v| v.as_ref().len() != dim) {
        return Err(ReidError::DimensionMismatch {
            expected: dim,
            got: bad.as_ref().len(),
        });
    }

    let gram = DMatrix::from_fn(n, n, |i, j| dot(vectors[i].as_ref(), vectors[j].as_ref()));
    let col_means: Vec<f64> = (0..n).map(|j| gram.column(j).sum() / n as f64).collect();
    let grand = col_means.iter().sum::<f64>() / n as f64;
    let centered = DMatrix::from_fn(n, n, |i, j| {
        gram[(i, j)] - col_means[i] - col_means[j] + grand
    });
    let centered = (&centered + centered.transpose()) * 0.5;

    let (values, vectors_) = sorted_sym_eigen(centered);
    let lmax = values.first().copied().unwrap_or(0.0);
    let cutoff = (lmax * RELATIVE_RANK_TOL).max(0.0);
    let target = out_dim.min(n - 1);
    let mut alphas = Vec::new();
    let mut eigenvalues = Vec::new();
    for (lambda, v) in values.iter().zip(&vectors_).take(target) {
        if *lambda <= cutoff || *lambda <= 0.0 {
            break;
        }
        let s = 1.0 / lambda.sqrt();
        alphas.push(v.iter().map(|a| a * s).collect());
        eigenvalues.push(*lambda);
    }
    if alphas.is_empty() {
        return Err(ReidError::Degenerate(
            "kernel PCA training vectors have no variance".into(),
        ));
    }
    if alphas.len() < out_dim {
        log::warn!(
            "kernel PCA: requested {out_dim} components, only {} available (N = {n})",
            alphas.len()
        );
    }

    Ok(KpcaModel {
        training_vectors: vectors.iter().map(|v| v.as_ref().to_vec()).collect(),
        alphas,
        eigenvalues,
        gram_col_means: col_means,
        gram_mean: grand,
        requested_dim: out_dim,
    })
}

/// Projects a Fisher vector and L2-normalizes the result. An exactly zero
/// projection yields a degenerate embedding.
pub fn apply_kpca(model: &KpcaModel, fisher_vector: &[f64]) -> Result<Embedding> {
    Ok(Embedding::from_raw(model.project(fisher_vector)?))
}
