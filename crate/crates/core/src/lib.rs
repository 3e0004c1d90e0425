//! Species-agnostic re-identification of patterned animals.
//!
//! An image is represented by its local pattern features (affine frames with
//! unit descriptors). Two similarities are computed against every database
//! image:
//!
//! * appearance: descriptors are PCA-decorrelated, aggregated into a Fisher
//!   vector over a diagonal GMM vocabulary, power/L2 normalized and compressed
//!   with kernel PCA; images are compared by cosine distance `d_L`.
//! * geometry: descriptors are matched, matched coordinates normalized, and a
//!   projective homography fitted with RANSAC; the inlier count `n` and ratio
//!   `omega` measure how consistently the pattern is arranged.
//!
//! The two are combined into `d_C` by [`reid::combine_polynomial`] or
//! [`reid::combine_exponential`], and the database is ranked by `d_C`.

pub mod encode;
pub mod error;
pub mod geometry;
pub mod ingest;
mod linalg;
pub mod reid;
mod rng;
pub mod synth;
pub mod vocab;

pub use encode::{cosine_distance, embed_image, fisher_encode, power_l2_normalize, Embedding};
pub use error::{ReidError, Result};
pub use geometry::{GeomParams, GeomVerdict, Homography};
pub use ingest::{AffineFrame, ImageFeatures, Manifest, ManifestEntry, Role};
pub use reid::{CombineParams, CombineRule, RankedResult, ReidDatabase};
pub use synth::SynthConfig;
pub use vocab::{VocabParams, Vocabulary};
