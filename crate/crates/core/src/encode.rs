//! Fisher-vector appearance embeddings and the cosine distance between them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{ReidError, Result};
use crate::ingest::ImageFeatures;
use crate::linalg::{dot, norm};
use crate::vocab::{apply_kpca, pca_project, posteriors_batch, Gmm, PcaModel, Vocabulary};

/// Distance assigned to any pair involving a degenerate embedding.
pub const DEGENERATE_DISTANCE: f64 = 2.0;
pub const EMBEDDING_MAGIC: &str = "PATEMB";
pub const EMBEDDING_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
    /// Set when the source image had no usable features; `values` is then zero.
    pub degenerate: bool,
}

impl Embedding {
    pub fn degenerate(dim: usize) -> Self {
        Embedding {
            values: vec![0.0; dim],
            degenerate: true,
        }
    }

    /// L2-normalizes `values`; an all-zero vector becomes degenerate.
    pub fn from_raw(values: Vec<f64>) -> Self {
        let (values, degenerate) = l2_normalize(values);
        Embedding { values, degenerate }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

fn l2_normalize(mut v: Vec<f64>) -> (Vec<f64>, bool) {
    let n = norm(&v);
    if n == 0.0 || !n.is_finite() {
        v.iter_mut().for_each(|x| *x = 0.0);
        return (v, true);
    }
    v.iter_mut().for_each(|x| *x /= n);
    (v, false)
}

/// Fisher vector of already-projected descriptors: for each component the
/// mean-gradient block followed by the variance-gradient block.
pub fn fisher_vector<V: AsRef<[f64]>>(points: &[V], gmm: &Gmm) -> Result<Vec<f64>> {
    let t = points.len();
    if t == 0 {
        return Err(ReidError::Degenerate("no descriptors to encode".into()));
    }
    let dim = gmm.dim();
    if let Some(bad) = points.iter().find(|p| p.as_ref().len() != dim) {
        return Err(ReidError::DimensionMismatch {
            expected: dim,
            got: bad.as_ref().len(),
        });
    }
    let gammas = posteriors_batch(gmm, points);
    let k = gmm.k();
    let mut fv = vec![0.0; 2 * k * dim];
    for (x, gamma) in points.iter().zip(&gammas) {
        let x = x.as_ref();
        for c in 0..k {
            let g = gamma[c];
            if g == 0.0 {
                continue;
            }
            let (mean_block, var_block) = fv[2 * c * dim..2 * (c + 1) * dim].split_at_mut(dim);
            for d in 0..dim {
                let z = (x[d] - gmm.means[c][d]) / gmm.variances[c][d].sqrt();
                mean_block[d] += g * z;
                var_block[d] += g * (z * z - 1.0);
            }
        }
    }
    for c in 0..k {
        let w = gmm.weights[c];
        let mean_scale = 1.0 / (t as f64 * w.sqrt());
        let var_scale = 1.0 / (t as f64 * (2.0 * w).sqrt());
        let block = &mut fv[2 * c * dim..2 * (c + 1) * dim];
        block[..dim].iter_mut().for_each(|v| *v *= mean_scale);
        block[dim..].iter_mut().for_each(|v| *v *= var_scale);
    }
    Ok(fv)
}

/// Projects each descriptor with `pca` and aggregates them against `gmm`.
/// Output length is `2 * K * D_pca`.
pub fn fisher_encode(features: &ImageFeatures, pca: &PcaModel, gmm: &Gmm) -> Result<Vec<f64>> {
    if features.descriptor_dim != pca.in_dim() {
        return Err(ReidError::DimensionMismatch {
            expected: pca.in_dim(),
            got: features.descriptor_dim,
        });
    }
    if pca.out_dim() != gmm.dim() {
        return Err(ReidError::DimensionMismatch {
            expected: gmm.dim(),
            got: pca.out_dim(),
        });
    }
    let projected: Vec<Vec<f64>> = features
        .descriptors()
        .map(|d| pca_project(pca, d))
        .collect();
    fisher_vector(&projected, gmm)
}

/// Signed power normalization followed by L2 normalization. Returns the
/// vector and whether it was zero (degenerate).
pub fn power_l2_normalize(v: &[f64], alpha: f64) -> (Vec<f64>, bool) {
    let powered = v
        .iter()
        .map(|&z| z.signum() * z.abs().powf(alpha) * f64::from(u8::from(z != 0.0)))
        .collect();
    l2_normalize(powered)
}

/// Full appearance chain: Fisher encoding, power/L2 normalization, kernel
/// PCA, final L2 normalization.
pub fn embed_image(features: &ImageFeatures, vocab: &Vocabulary) -> Result<Embedding> {
    if features.is_degenerate() {
        return Ok(Embedding::degenerate(vocab.embedding_dim()));
    }
    let fv = fisher_encode(features, &vocab.pca, &vocab.gmm)?;
    let (normalized, zero) = power_l2_normalize(&fv, vocab.alpha);
    if zero {
        return Ok(Embedding::degenerate(vocab.embedding_dim()));
    }
    apply_kpca(&vocab.kpca, &normalized)
}

/// `1 - a.b / (|a| |b|)`, in `[0, 2]`. Pairs involving a degenerate
/// embedding are at the maximal distance 2.
pub fn cosine_distance(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(ReidError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if a.degenerate || b.degenerate {
        return Ok(DEGENERATE_DISTANCE);
    }
    let denom = norm(&a.values) * norm(&b.values);
    if denom == 0.0 {
        return Ok(DEGENERATE_DISTANCE);
    }
    let cos = (dot(&a.values, &b.values) / denom).clamp(-1.0, 1.0);
    Ok(1.0 - cos)
}

pub fn embeddings_to_string(rows: &[(String, Embedding)]) -> String {
    let dim = rows.first().map_or(0, |r| r.1.dim());
    let mut s = format!("{EMBEDDING_MAGIC} {EMBEDDING_VERSION}\n");
    for (id, e) in rows {
        let _ = write!(s, "{id} {}", e.dim().max(dim));
        for v in &e.values {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    s
}

pub fn write_embeddings(rows: &[(String, Embedding)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, embeddings_to_string(rows)).map_err(|e| ReidError::io(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Vec<(String, Embedding)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| ReidError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.split_whitespace().eq([EMBEDDING_MAGIC, "1"]) => {}
        _ => {
            return Err(ReidError::parse(
                path,
                1,
                format!("expected `{EMBEDDING_MAGIC} {EMBEDDING_VERSION}`"),
            ))
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: &str| ReidError::parse(path, i + 1, m);
        let mut toks = line.split_whitespace();
        let id = toks
            .next()
            .ok_or_else(|| err("missing image id"))?
            .to_string();
        let dim: usize = toks
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| err("bad dimension"))?;
        let values: Vec<f64> = toks
            .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<_>>()
            .ok_or_else(|| err("bad number"))?;
        if values.len() != dim {
            return Err(err("value count does not match dimension"));
        }
        let degenerate = values.iter().all(|&v| v == 0.0);
        out.push((id, Embedding { values, degenerate }));
    }
    Ok(out)
}
