//! Appearance-encoding model: PCA decorrelation, GMM visual vocabulary and
//! the kernel-PCA compressor for Fisher vectors.

mod gmm;
mod io;
mod kpca;
mod pca;

pub use gmm::{fit_gmm, fit_gmm_traced, gmm_posteriors, Gmm, GmmOptions, VARIANCE_FLOOR};
pub use io::{
    load_vocabulary, save_vocabulary, vocabulary_from_str, vocabulary_to_string, VOCAB_VERSION,
};
pub use kpca::{apply_kpca, fit_kpca, KpcaModel};
pub use pca::{apply_pca, fit_pca, PcaModel};

pub(crate) use gmm::posteriors_batch;
pub(crate) use pca::project as pca_project;

use crate::encode::{fisher_encode, power_l2_normalize};
use crate::error::{ReidError, Result};
use crate::ingest::ImageFeatures;

pub const DEFAULT_KPCA_CAP: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct VocabParams {
    pub gmm_k: usize,
    pub pca_dim: usize,
    /// `None` means `min(N_db - 1, 512)`.
    pub kpca_dim: Option<usize>,
    pub whiten: bool,
    /// Power-normalization exponent applied to Fisher vectors.
    pub alpha: f64,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for VocabParams {
    fn default() -> Self {
        VocabParams {
            gmm_k: 16,
            pca_dim: 64,
            kpca_dim: None,
            whiten: true,
            alpha: 0.5,
            seed: 0,
            max_iters: 200,
            tol: 1e-6,
        }
    }
}

/// Trained appearance-encoding state. Refitting invalidates every embedding
/// computed with a previous vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    pub descriptor_dim: usize,
    pub pca: PcaModel,
    pub gmm: Gmm,
    pub kpca: KpcaModel,
    pub alpha: f64,
}

impl Vocabulary {
    pub fn fisher_dim(&self) -> usize {
        2 * self.gmm.k() * self.gmm.dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.kpca.out_dim()
    }

    /// Checks that the stages chain together.
    pub fn validate(&self) -> Result<()> {
        let mismatch = |expected, got| Err(ReidError::DimensionMismatch { expected, got });
        if self.pca.in_dim() != self.descriptor_dim {
            return mismatch(self.descriptor_dim, self.pca.in_dim());
        }
        if self.gmm.dim() != self.pca.out_dim() {
            return mismatch(self.pca.out_dim(), self.gmm.dim());
        }
        if self.kpca.input_dim() != self.fisher_dim() {
            return mismatch(self.fisher_dim(), self.kpca.input_dim());
        }
        Ok(())
    }
}

/// Trains the full vocabulary on database images only.
pub fn build_vocabulary(database: &[ImageFeatures], params: &VocabParams) -> Result<Vocabulary> {
    let usable: Vec<&ImageFeatures> = database.iter().filter(|f| !f.is_degenerate()).collect();
    if usable.is_empty() {
        return Err(ReidError::InsufficientData(
            "no database images with features".into(),
        ));
    }
    let descriptor_dim = usable[0].descriptor_dim;
    if let Some(bad) = usable.iter().find(|f| f.descriptor_dim != descriptor_dim) {
        return Err(ReidError::DimensionMismatch {
            expected: descriptor_dim,
            got: bad.descriptor_dim,
        });
    }
    if params.pca_dim > descriptor_dim {
        return Err(ReidError::Invalid(format!(
            "PCA dimension {} exceeds descriptor dimension {descriptor_dim}",
            params.pca_dim
        )));
    }

    let pooled: Vec<&[f64]> = usable.iter().flat_map(|f| f.descriptors()).collect();
    let pca = fit_pca(&pooled, params.pca_dim, params.whiten)?;
    let projected: Vec<Vec<f64>> = pooled.iter().map(|d| pca_project(&pca, d)).collect();
    let gmm = fit_gmm(
        &projected,
        &GmmOptions {
            k: params.gmm_k,
            seed: params.seed,
            max_iters: params.max_iters,
            tol: params.tol,
        },
    )?;

    let fisher: Vec<Vec<f64>> = usable
        .iter()
        .map(|f| fisher_encode(f, &pca, &gmm).map(|fv| power_l2_normalize(&fv, params.alpha).0))
        .collect::<Result<_>>()?;
    let n = fisher.len();
    if n < 2 {
        return Err(ReidError::InsufficientData(format!(
            "kernel PCA needs at least 2 database images with features, got {n}"
        )));
    }
    let kpca_dim = params
        .kpca_dim
        .unwrap_or_else(|| (n - 1).min(DEFAULT_KPCA_CAP));
    let kpca = fit_kpca(&fisher, kpca_dim.min(n - 1))?;
    if kpca_dim > n - 1 {
        log::warn!(
            "kernel PCA dimension {kpca_dim} capped at N_db - 1 = {}",
            n - 1
        );
    }

    let vocab = Vocabulary {
        descriptor_dim,
        pca,
        gmm,
        kpca,
        alpha: params.alpha,
    };
    vocab.validate()?;
    Ok(vocab)
}
