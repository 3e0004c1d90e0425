use nalgebra::DMatrix;

use crate::error::{ReidError, Result};
use crate::linalg::sorted_sym_eigen;

const WHITEN_FLOOR: f64 = 1e-12;

/// Linear decorrelating projection fitted to local descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `out_dim` orthonormal rows of length `in_dim`.
    pub basis: Vec<Vec<f64>>,
    /// Non-increasing, non-negative.
    pub eigenvalues: Vec<f64>,
    pub whiten: bool,
}

impl PcaModel {
    pub fn in_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn out_dim(&self) -> usize {
        self.basis.len()
    }

    /// Identity projection on `dim` inputs; mostly useful in tests.
    pub fn identity(dim: usize) -> Self {
        PcaModel {
            mean: vec![0.0; dim],
            basis: (0..dim)
                .map(|i| {
                    let mut r = vec![0.0; dim];
                    r[i] = 1.0;
                    r
                })
                .collect(),
            eigenvalues: vec![1.0; dim],
            whiten: false,
        }
    }
}

/// Fits PCA on the biased (divide-by-N) sample covariance.
pub fn fit_pca<V: AsRef<[f64]>>(
    descriptors: &[V],
    out_dim: usize,
    whiten: bool,
) -> Result<PcaModel> {
    let n = descriptors.len();
    let dim = descriptors.first().map_or(0, |d| d.as_ref().len());
    if out_dim == 0 || out_dim > dim {
        return Err(ReidError::Invalid(format!(
            "PCA output dimension {out_dim} must be in 1..={dim}"
        )));
    }
    if n < out_dim + 1 {
        return Err(ReidError::InsufficientData(format!(
            "PCA to {out_dim} dimensions needs at least {} descriptors, got {n}",
            out_dim + 1
        )));
    }
    if let Some(bad) = descriptors.iter().find(|d| d.as_ref().len() != dim) {
        return Err(ReidError::DimensionMismatch {
            expected: dim,
            got: bad.as_ref().len(),
        });
    }

    let mut mean = vec![0.0; dim];
    for d in descriptors {
        for (m, v) in mean.iter_mut().zip(d.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut centered = DMatrix::<f64>::zeros(n, dim);
    for (i, d) in descriptors.iter().enumerate() {
        for (j, (v, m)) in d.as_ref().iter().zip(&mean).enumerate() {
            centered[(i, j)] = v - m;
        }
    }
    let mut cov = centered.tr_mul(&centered);
    cov /= n as f64;
    // exact symmetry for the eigensolver
    cov = (&cov + cov.transpose()) * 0.5;

    let (values, vectors) = sorted_sym_eigen(cov);
    let eigenvalues = values.iter().take(out_dim).map(|&v| v.max(0.0)).collect();
    let basis = vectors
        .iter()
        .take(out_dim)
        .map(|v| v.iter().copied().collect())
        .collect();
    Ok(PcaModel {
        mean,
        basis,
        eigenvalues,
        whiten,
    })
}

pub fn apply_pca(model: &PcaModel, descriptor: &[f64]) -> Result<Vec<f64>> {
    if descriptor.len() != model.in_dim() {
        return Err(ReidError::DimensionMismatch {
            expected: model.in_dim(),
            got: descriptor.len(),
        });
    }
    Ok(project(model, descriptor))
}

pub(crate) fn project(model: &PcaModel, x: &[f64]) -> Vec<f64> {
    model
        .basis
        .iter()
        .zip(&model.eigenvalues)
        .map(|(row, &ev)| {
            let y: f64 = row
                .iter()
                .zip(x)
                .zip(&model.mean)
                .map(|((b, v), m)| b * (v - m))
                .sum();
            if model.whiten {
                y / ev.max(WHITEN_FLOOR).sqrt()
            } else {
                y
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_data_has_one_component() {
        let data = vec![
            vec![1.0, 1.0],
            vec![-1.0, -1.0],
            vec![2.0, 2.0],
            vec![-2.0, -2.0],
        ];
        let m = fit_pca(&data, 2, false).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((m.basis[0][0] - s).abs() < 1e-12 && (m.basis[0][1] - s).abs() < 1e-12);
        assert!((m.eigenvalues[0] - 5.0).abs() < 1e-12);
        assert!(m.eigenvalues[1].abs() < 1e-12);
    }

    #[test]
    fn full_rank_round_trip() {
        let data = vec![
            vec![1.0, 0.0, 0.0],
            vec![-1.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0],
            vec![0.0, -2.0, 0.0],
            vec![0.0, 0.0, 3.0],
            vec![0.0, 0.0, -3.0],
        ];
        let m = fit_pca(&data, 3, false).unwrap();
        for x in &data {
            let y = apply_pca(&m, x).unwrap();
            let back: Vec<f64> = (0..3)
                .map(|j| (0..3).map(|i| m.basis[i][j] * y[i]).sum::<f64>() + m.mean[j])
                .collect();
            for (a, b) in back.iter().zip(x) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mean_maps_to_zero_and_identity_truncates() {
        let data = vec![vec![1.0, 2.0], vec![3.0, 1.0], vec![0.0, 0.0]];
        let m = fit_pca(&data, 1, true).unwrap();
        let y = apply_pca(&m, &m.mean.clone()).unwrap();
        assert_eq!(y, vec![0.0]);

        let mut id = PcaModel::identity(3);
        id.basis.truncate(2);
        id.eigenvalues.truncate(2);
        assert_eq!(apply_pca(&id, &[0.5, -1.5, 9.0]).unwrap(), vec![0.5, -1.5]);
        assert!(apply_pca(&id, &[1.0]).is_err());
    }

    #[test]
    fn insufficient_data_rejected() {
        let data = vec![vec![1.0, 2.0], vec![3.0, 1.0]];
        assert!(matches!(
            fit_pca(&data, 2, false),
            Err(ReidError::InsufficientData(_))
        ));
        assert!(fit_pca(&data, 3, false).is_err());
    }
}
