//! Geometric consistency between two images: descriptor matching, point
//! normalization and a RANSAC homography, summarized by the inlier count `n`
//! and inlier ratio `omega`.

mod homography;
mod matching;
mod ransac;

use std::fmt::Write as _;

pub use homography::{dlt_homography, normalize_points, Homography, NormalizedPoints};
pub use matching::{match_descriptors, Correspondence, MatchParams};
pub use ransac::{ransac_homography, RansacParams, Residual};

use crate::ingest::ImageFeatures;
use crate::rng::stable_hash;

#[derive(Debug, Clone, PartialEq)]
pub struct GeomVerdict {
    pub n: usize,
    pub omega: f64,
    pub homography: Option<Homography>,
    /// Aligned with the correspondences that entered RANSAC.
    pub inlier_mask: Vec<bool>,
}

impl GeomVerdict {
    pub(crate) fn empty(total: usize) -> Self {
        GeomVerdict {
            n: 0,
            omega: 0.0,
            homography: None,
            inlier_mask: vec![false; total],
        }
    }
}

/// What `omega` is relative to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OmegaDenominator {
    /// Correspondences entering RANSAC.
    #[default]
    Matches,
    /// All detected query points.
    QueryPoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeomParams {
    pub matching: MatchParams,
    pub ransac: RansacParams,
    pub omega_denominator: OmegaDenominator,
    /// Global seed; per-pair RANSAC seeds are derived from it.
    pub seed: u64,
}

/// RANSAC seed for a (query, database) image pair.
pub fn pair_seed(global_seed: u64, query_id: &str, db_id: &str) -> u64 {
    stable_hash(&[
        &global_seed.to_le_bytes(),
        query_id.as_bytes(),
        db_id.as_bytes(),
    ])
}

/// Match, normalize each side's matched points, and fit a homography.
pub fn geometric_similarity(
    query: &ImageFeatures,
    db: &ImageFeatures,
    params: &GeomParams,
) -> GeomVerdict {
    geometric_similarity_detailed(query, db, params).1
}

/// Like [`geometric_similarity`] but also returns the correspondences the
/// inlier mask refers to.
pub fn geometric_similarity_detailed(
    query: &ImageFeatures,
    db: &ImageFeatures,
    params: &GeomParams,
) -> (Vec<Correspondence>, GeomVerdict) {
    let matches = match_descriptors(query, db, &params.matching);
    if matches.is_empty() {
        return (matches, GeomVerdict::empty(0));
    }
    let q: Vec<[f64; 2]> = matches.iter().map(|c| c.query_point).collect();
    let d: Vec<[f64; 2]> = matches.iter().map(|c| c.db_point).collect();
    let (Ok(qn), Ok(dn)) = (normalize_points(&q), normalize_points(&d)) else {
        let total = matches.len();
        return (matches, GeomVerdict::empty(total));
    };
    let seed = pair_seed(params.seed, &query.image_id, &db.image_id);
    let mut verdict = ransac_homography(&qn.points, &dn.points, &params.ransac, seed);
    if params.omega_denominator == OmegaDenominator::QueryPoints {
        verdict.omega = verdict.n as f64 / query.len().max(1) as f64;
    }
    (matches, verdict)
}

/// Text dump of correspondences with inlier flags, one per line:
/// `qx qy dx dy distance inlier`.
pub fn debug_dump(matches: &[Correspondence], verdict: &GeomVerdict) -> String {
    let mut s = format!("# n={} omega={}\n", verdict.n, verdict.omega);
    for (c, inlier) in matches.iter().zip(&verdict.inlier_mask) {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {}",
            c.query_point[0],
            c.query_point[1],
            c.db_point[0],
            c.db_point[1],
            c.descriptor_distance,
            u8::from(*inlier)
        );
    }
    s
}
